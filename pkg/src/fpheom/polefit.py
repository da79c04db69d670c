"""Adaptive barycentric rational fitting of noise spectra and pole extraction.

The fitted rational function

    r(w) = sum_k W_k f_k / (w - x_k)  /  sum_k W_k / (w - x_k)

interpolates the samples ``f_k`` at the support points ``x_k``.  Its poles in
the lower half plane, ``xi_j`` with residues ``eta_j``, give the spectrum as
``sum_j eta_j / (w - xi_j) + c.c.`` and the correlation function for ``t >= 0``
as ``C(t) = sum_k d_k exp(-z_k t)`` with ``d_k = -i eta_k`` and ``z_k = i xi_k``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


class FitConvergenceError(FitError):
    """The greedy loop hit ``max_iterations``; carries the best model seen."""

    def __init__(self, message, model=None, error=math.inf):
        super().__init__(message)
        self.model = model
        self.error = error


class UnstableFitError(FitError):
    """Pole extraction could not reproduce the fit within tolerance."""

    def __init__(self, message, poles=None):
        super().__init__(message)
        self.poles = poles


@dataclass(frozen=True)
class FitConfig:
    delta: float = 1e-8
    max_iterations: int = 200
    residue_floor: float | None = None
    absolute: bool = False

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.max_iterations < 2:
            raise ValueError("max_iterations must be >= 2")
        if self.residue_floor is not None and self.residue_floor < 0:
            raise ValueError("residue_floor must be >= 0")


@dataclass(frozen=True, eq=False)
class BarycentricModel:
    support: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    error: float
    scale: float
    grid: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.support.size

    def __call__(self, x):
        x = np.asarray(x)
        xv = np.atleast_1d(x).ravel()
        D = xv[:, None] - self.support[None, :]
        hit_x, hit_k = np.nonzero(D == 0)
        D[hit_x, hit_k] = 1.0
        C = 1.0 / D
        with np.errstate(invalid="ignore", divide="ignore"):
            r = (C @ (self.weights * self.values)) / (C @ self.weights)
        if np.isrealobj(self.values) and np.isrealobj(self.weights) and np.isrealobj(xv):
            r = r.real
        r[hit_x] = self.values[hit_k]
        return r.reshape(x.shape) if x.ndim else r[0]

    def constant(self) -> float:
        """Limit of the approximant as ``|w| -> inf``."""
        return complex(np.sum(self.weights * self.values) / np.sum(self.weights))

    def tolerance(self, cfg: FitConfig) -> float:
        return cfg.delta if cfg.absolute else cfg.delta * self.scale


def _max_error(model_values, data):
    return float(np.max(np.abs(model_values - data)))


class _GreedyBarycentric:
    """State of the greedy support selection; each ``step`` adds one point."""

    def __init__(self, grid, data):
        grid = np.asarray(grid, dtype=float)
        data = np.asarray(data)
        if grid.ndim != 1 or grid.shape != data.shape or grid.size < 2:
            raise ValueError("samples must be two equal-length 1-d arrays with >= 2 points")
        if not np.all(np.isfinite(data)) or not np.all(np.isfinite(grid)):
            raise ValueError("samples must be finite")
        if np.unique(grid).size != grid.size:
            raise ValueError("duplicate grid points")
        self.grid, self.data = grid, data
        self.scale = float(np.max(np.abs(data)))
        self.mask = np.zeros(grid.size, dtype=bool)
        self.next_index = int(np.argmax(np.abs(data - data.mean())))
        self.order: list[int] = []
        self.model: BarycentricModel | None = None

    def step(self) -> BarycentricModel:
        self.mask[self.next_index] = True
        self.order.append(self.next_index)  # support kept in insertion order
        idx = np.array(self.order)
        z, f = self.grid[idx], self.data[idx]
        rest = ~self.mask
        Zr, Fr = self.grid[rest], self.data[rest]
        if Zr.size:
            loewner = (Fr[:, None] - f[None, :]) / (Zr[:, None] - z[None, :])
            _, _, vh = np.linalg.svd(loewner, full_matrices=Zr.size < z.size)
            w = vh[-1].conj()
        else:
            w = np.ones(z.size) / math.sqrt(z.size)
        # fix the sign so that the largest weight component is positive
        w = w * np.sign(w[np.argmax(np.abs(w))].real or 1.0)
        model = BarycentricModel(z, f, w, math.inf, self.scale, self.grid, self.data)
        approx = model(self.grid)
        err = np.abs(approx - self.data)
        model = BarycentricModel(z, f, w, float(err.max()), self.scale, self.grid, self.data)
        err[self.mask] = -1.0
        self.next_index = int(np.argmax(err))
        self.model = model
        return model

    @property
    def exhausted(self) -> bool:
        return bool(self.mask.all())


def fit_barycentric(samples, cfg: FitConfig = FitConfig()) -> BarycentricModel:
    """Greedy barycentric rational fit of ``samples = (grid, values)``.

    Starts from the sample farthest from the mean, solves the linearised
    least-squares problem for the weights through the smallest right singular
    vector of the Loewner matrix, and adds the worst-fitted grid point until
    the max-norm error meets the tolerance.
    """
    grid, data = samples
    state = _GreedyBarycentric(grid, data)
    best = None
    for _ in range(cfg.max_iterations):
        model = state.step()
        if best is None or model.error < best.error:
            best = model
        if model.error <= model.tolerance(cfg):
            return model
        if state.exhausted:
            break
    raise FitConvergenceError(
        f"no convergence within {cfg.max_iterations} support points "
        f"(best error {best.error:.3e}, target {best.tolerance(cfg):.3e})",
        best, best.error)


@dataclass(frozen=True, eq=False)
class PoleSet:
    poles: np.ndarray
    residues: np.ndarray
    fit_error: float
    constant: complex = 0.0
    n_dropped: int = 0
    n_real: int = 0
    conjugate_mismatch: float = 0.0

    def __len__(self):
        return self.poles.size

    def __call__(self, omega):
        """Evaluate ``sum_j eta_j / (w - xi_j) + c.c.`` at real frequencies."""
        w = np.asarray(omega, dtype=float)
        terms = self.residues / (w[..., None] - self.poles)
        return 2.0 * terms.sum(axis=-1).real


def _pole_residues(model: BarycentricModel):
    z, f, w = model.support, model.values, model.weights
    m = z.size
    E = np.zeros((m + 1, m + 1), dtype=np.result_type(w, z, float))
    E[0, 1:] = w
    E[1:, 0] = 1.0
    E[1:, 1:] = np.diag(z)
    B = np.eye(m + 1)
    B[0, 0] = 0.0
    try:
        ab = scipy.linalg.eigvals(E, B, homogeneous_eigvals=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise UnstableFitError(f"generalized eigenvalue solve failed: {exc}") from exc
    alpha, beta = ab
    # the two eigenvalues with vanishing beta are the spurious infinite ones
    keep = np.argsort(np.abs(beta) / (np.abs(alpha) + np.abs(beta)))[2:]
    poles = alpha[keep] / beta[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        C = 1.0 / (poles[:, None] - z[None, :])
        num = C @ (w * f)
        dden = -(C**2) @ w
        res = num / dden
    return poles, res


def poles_and_residues(model: BarycentricModel, cfg: FitConfig | None = None,
                       real_tol: float = 1e-12) -> PoleSet:
    """Lower-half-plane poles and residues of a fitted barycentric model.

    Poles come from the arrowhead generalized eigenvalue problem, residues from
    ``N(xi) / D'(xi)``.  Poles whose peak contribution ``2 |eta| / |Im xi|`` on
    the real axis is below the residue floor are dropped as spurious.  A pole on the real axis with a significant residue,
    or a pole sum that misses the fit tolerance on the model's grid, raises
    :class:`UnstableFitError`.
    """
    if model.m < 2:
        return PoleSet(np.empty(0, complex), np.empty(0, complex), model.error, model.constant())
    cfg = cfg or FitConfig()
    tol = model.tolerance(cfg)
    floor = cfg.residue_floor if cfg.residue_floor is not None else cfg.delta**2 * model.scale
    poles, res = _pole_residues(model)
    if not np.all(np.isfinite(poles)) or not np.all(np.isfinite(res)):
        raise UnstableFitError("non-finite poles or residues")

    is_real = np.abs(poles.imag) <= real_tol * np.maximum(1.0, np.abs(poles))
    lower = (poles.imag < 0) & ~is_real
    upper = (poles.imag > 0) & ~is_real

    mismatch = 0.0
    if np.isrealobj(model.weights) and np.isrealobj(model.values):
        lo = np.sort_complex(poles[lower])
        up = np.sort_complex(np.conj(poles[upper]))
        if lo.size != up.size:
            mismatch = math.inf
        elif lo.size:
            mismatch = float(np.max(np.abs(lo - up) / np.maximum(1.0, np.abs(lo))))

    p, r = poles[lower], res[lower]
    # peak size of eta/(w - xi) + c.c. on the real axis
    small = 2.0 * np.abs(r) / np.abs(p.imag) < floor
    n_dropped = int(small.sum())
    p, r = p[~small], r[~small]
    order = np.argsort(p.imag)  # most negative imaginary part (largest damping) first
    p, r = p[order], r[order]

    real_sig = is_real & (np.abs(res) >= floor)
    pole_sum = PoleSet(p, r, math.nan)(model.grid)
    err = _max_error(pole_sum, model.data)
    ps = PoleSet(p, r, err, model.constant(), n_dropped, int(is_real.sum()), mismatch)
    if real_sig.any():
        raise UnstableFitError(
            f"{int(real_sig.sum())} pole(s) on the real axis with non-negligible residue "
            f"(e.g. xi = {poles[real_sig][0].real:.3e})", ps)
    if err > tol:
        raise UnstableFitError(
            f"lower-half-plane pole sum misses tolerance: error {err:.3e} > {tol:.3e}", ps)
    if n_dropped:
        log.warning("dropped %d spurious pole(s) with peak contribution < %.3e", n_dropped, floor)
    return ps


@dataclass(frozen=True, eq=False)
class ExponentialDecomposition:
    """``C(t) = sum_k d_k exp(-z_k t)`` for ``t >= 0``, ``z_k = gamma_k + i omega_k``."""

    d: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=complex).ravel()
        z = np.asarray(self.z, dtype=complex).ravel()
        if d.shape != z.shape:
            raise ValueError("amplitude and rate arrays differ in length")
        if d.size and np.any(z.real <= 0):
            raise ValueError("all rates must have positive real part (decaying modes)")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)

    @property
    def K(self) -> int:
        return self.d.size

    @property
    def gamma(self) -> np.ndarray:
        return self.z.real

    @property
    def omega(self) -> np.ndarray:
        return self.z.imag

    def sorted(self) -> "ExponentialDecomposition":
        order = np.lexsort((self.omega, -self.gamma))
        return ExponentialDecomposition(self.d[order], self.z[order])

    def scaled(self, factor: float) -> "ExponentialDecomposition":
        return ExponentialDecomposition(self.d * factor, self.z)

    def __call__(self, t):
        return eval_correlation(self, t)


def decomposition_from_poles(ps: PoleSet) -> ExponentialDecomposition:
    """Map lower-half-plane poles to exponential modes: ``d = -i eta``, ``z = i xi``."""
    if len(ps) == 0:
        raise ValueError("empty pole set: nothing to decompose")
    if np.any(ps.poles.imag >= 0):
        raise ValueError("all poles must lie strictly in the lower half plane")
    return ExponentialDecomposition(-1j * ps.residues, 1j * ps.poles).sorted()


def eval_correlation(dec: ExponentialDecomposition, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("the decomposition is one-sided: t must be >= 0 (use C(-t) = C(t)*)")
    val = np.exp(-np.multiply.outer(t, dec.z)) @ dec.d
    return val[()] if val.ndim == 0 else val


@dataclass(frozen=True, eq=False)
class FitResult:
    model: BarycentricModel
    poles: PoleSet
    decomposition: ExponentialDecomposition
    iterations: int

    @property
    def K(self) -> int:
        return self.decomposition.K


def fit_decomposition(samples, cfg: FitConfig = FitConfig()) -> FitResult:
    """Full pipeline: greedy fit, pole extraction, exponential decomposition.

    The greedy loop keeps adding support points past the barycentric
    tolerance until the extracted lower-half-plane pole sum meets it as well;
    an odd number of poles with real weights always leaves one real pole.
    """
    grid, data = samples
    state = _GreedyBarycentric(grid, data)
    best = None
    last_issue = None
    for it in range(1, cfg.max_iterations + 1):
        model = state.step()
        if best is None or model.error < best.error:
            best = model
        if model.error <= model.tolerance(cfg):
            if model.m == 1:
                raise FitError("spectrum is fitted by a constant: no poles to decompose")
            try:
                ps = poles_and_residues(model, cfg)
            except UnstableFitError as exc:
                last_issue = str(exc)
                log.debug("m=%d: %s", model.m, exc)
            else:
                if len(ps):
                    return FitResult(model, ps, decomposition_from_poles(ps), it)
                last_issue = "no poles in the lower half plane"
        if state.exhausted:
            break
    msg = f"no stable pole decomposition within {cfg.max_iterations} support points"
    if last_issue:
        msg += f" (last issue: {last_issue})"
    raise FitConvergenceError(msg, best, best.error)


def scan_K_vs_delta(samples, deltas: Sequence[float], cfg: FitConfig = FitConfig()):
    """Mode count ``K`` reached for each tolerance in ``deltas`` (sorted descending)."""
    deltas = [float(x) for x in deltas]
    if any(not 0 < d < 1 for d in deltas):
        raise ValueError("each delta must lie in (0, 1)")
    if any(a < b for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be sorted in descending order")
    out = []
    for d in deltas:
        sub = FitConfig(d, cfg.max_iterations, cfg.residue_floor, cfg.absolute)
        try:
            res = fit_decomposition(samples, sub)
        except FitError as exc:
            raise type(exc)(f"delta={d:g}: {exc}") from exc
        out.append((d, res.K))
    return out


def poles_from_arrays(xi: Iterable[complex], eta: Iterable[complex]) -> PoleSet:
    xi = np.asarray(list(xi), dtype=complex)
    eta = np.asarray(list(eta), dtype=complex)
    return PoleSet(xi, eta, math.nan)
