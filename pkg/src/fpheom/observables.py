"""Observables and analyses on top of the hierarchy propagator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma as gamma_fn

from .hierarchy import (ADOVector, Generator, HierarchySpace, SIGMA_Z, SystemSpec,
                        build_generator, factorized_state, propagate)
from .polefit import ExponentialDecomposition, eval_correlation


class WindowError(ValueError):
    pass


def expectation(state, op) -> float:
    """``Tr[op rho]`` for the physical block of ``state`` (or a bare 2x2 matrix)."""
    rho = state.rho if isinstance(state, ADOVector) else np.asarray(state)
    op = np.asarray(op, dtype=complex)
    if rho.shape != (2, 2) or op.shape != (2, 2):
        raise ValueError("expected 2x2 operators")
    val = np.trace(op @ rho)
    if np.allclose(op, op.conj().T) and abs(val.imag) > 1e-10:
        raise ValueError(f"expectation of a Hermitian operator has imaginary part {val.imag:.2e}")
    return float(val.real)


@dataclass(eq=False)
class SteadyState:
    state: ADOVector
    converged: bool
    criterion: str
    residual: float
    time: float


def relax_to_steady_state(space: HierarchySpace, sys: SystemSpec, dec: ExponentialDecomposition,
                          tol: float = 1e-6, t_max: float = 200.0, dt: float = 0.01,
                          initial: ADOVector | None = None, check_every: float = 1.0,
                          method: str = "lawson", generator: Generator | None = None) -> SteadyState:
    """Propagate until ``max |d/dt x| < tol`` over the whole ADO vector, or ``t_max``.

    The default initial state is the bare ground state of the system times
    the bath vacuum.  Reaching ``t_max`` is reported, not raised.
    """
    G = generator if generator is not None else build_generator(space, sys, dec)
    x = initial.copy() if initial is not None else factorized_state(space, sys.ground_state())
    stride = max(1, int(round(check_every / dt)))
    residual = float(np.max(np.abs(G(x.storage))))
    if residual < tol:
        return SteadyState(x, True, "tolerance", residual, x.time)
    state = {"res": residual}

    def stop(t, v):
        state["res"] = float(np.max(np.abs(G(v))))
        return state["res"] < tol

    tr = propagate(space, sys, dec, x, t_max - x.time, dt, stride=stride, method=method,
                   generator=G, callback=stop)
    ok = state["res"] < tol
    return SteadyState(tr.final, ok, "tolerance" if ok else "t_max", state["res"], tr.final.time)


@dataclass(eq=False)
class CorrelationResult:
    times: np.ndarray
    values: np.ndarray

    @property
    def symmetrized(self) -> np.ndarray:
        return self.values.real


def two_time_correlation(space: HierarchySpace, sys: SystemSpec, dec: ExponentialDecomposition,
                         steady: ADOVector, op, times, dt: float | None = None,
                         method: str = "lawson", generator: Generator | None = None) -> CorrelationResult:
    """``<op(t) op(0)>`` in the state ``steady``.

    ``op`` multiplies every ADO block from the left; the result is propagated
    and ``Tr[op rho_0(t)]`` recorded.  ``times`` must be uniform from 0.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or times.size < 2:
        raise ValueError("times must start at 0 and contain at least two points")
    spacing = times[1] - times[0]
    if not np.allclose(np.diff(times), spacing, rtol=1e-9, atol=1e-12):
        raise ValueError("times must be uniformly spaced")
    if dt is None:
        dt = spacing
    stride = int(round(spacing / dt))
    if stride < 1 or not math.isclose(stride * dt, spacing, rel_tol=1e-9):
        raise ValueError("time step must divide the output spacing")
    op = np.asarray(op, dtype=complex)
    blocks = steady.blocks()
    start = ADOVector(np.einsum("ij,njk->nik", op, blocks).ravel(), 0.0)
    tr = propagate(space, sys, dec, start, times[-1], dt, stride=stride, method=method,
                   generator=generator)
    vals = np.einsum("ij,tji->t", op, tr.rho)
    return CorrelationResult(tr.times.copy(), vals)


def shiba_prefactor(s: float, alpha: float) -> float:
    """``2 alpha s (1-s) Gamma(s-1) cos((1+s) pi/2)``; undefined at ``s = 1``."""
    if not 0 < s < 1:
        raise ValueError("prefactor defined for 0 < s < 1")
    return 2 * alpha * s * (1 - s) * gamma_fn(s - 1) * math.cos((1 + s) * math.pi / 2)


@dataclass(frozen=True)
class ShibaPrediction:
    """Long-time zero-temperature prediction for ``S_zz(t)``.

    ``coupling_scale`` is ``q`` in ``Q = q sigma_z``.  The relation
    ``S_zz = (chi^2/4) Re C_half(t)`` is written for the bath force that
    couples to ``sigma_z / 2``, whose correlation is ``(2 q)^2 C(t)``.
    """

    s: float
    alpha: float
    omega_c: float
    delta_x: float = 1.0
    chi_bar: float | None = None
    coupling_scale: float = 1.0

    @property
    def xi_s(self) -> float:
        return shiba_prefactor(self.s, self.alpha)

    def literal_tail(self, t):
        """``-xi_s (wc/Delta)^(1-s) / (Delta t)^(1+s)`` evaluated as written."""
        t = np.asarray(t, float)
        return -self.xi_s * (self.omega_c / self.delta_x) ** (1 - self.s) / (self.delta_x * t) ** (1 + self.s)

    def relation(self, t, dec: ExponentialDecomposition):
        """``(chi^2/4) Re C_half(t)`` from an exponential decomposition."""
        if self.chi_bar is None:
            raise ValueError("static susceptibility required")
        return 0.25 * self.chi_bar**2 * (2 * self.coupling_scale) ** 2 * eval_correlation(dec, t).real

    def relation_tail(self, t):
        """Same relation with the asymptotic closed-form ``Re C(t)`` of the subohmic bath."""
        if self.chi_bar is None:
            raise ValueError("static susceptibility required")
        t = np.asarray(t, float)
        re_c = (0.5 * self.alpha * self.omega_c ** (1 - self.s) * gamma_fn(1 + self.s)
                * math.cos((1 + self.s) * math.pi / 2) / t ** (1 + self.s))
        return 0.25 * self.chi_bar**2 * (2 * self.coupling_scale) ** 2 * re_c


@dataclass(frozen=True)
class ShibaReport:
    exponent: float
    exponent_target: float
    exponent_rel_dev: float
    amplitude: float
    predicted_amplitude: float | None
    amplitude_rel_dev: float | None
    literal_amplitude: float
    relation_rel_dev: float | None
    window: tuple

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def shiba_check(result: CorrelationResult, pred: ShibaPrediction, window=None,
                dec: ExponentialDecomposition | None = None) -> ShibaReport:
    """Power-law fit of ``|S_zz(t)|`` on ``window`` against the Shiba prediction.

    The exponent ``p`` is fitted freely; the amplitude ``A`` in
    ``S_zz ~ A / t^(1+s)`` uses the predicted exponent and is compared with the
    relation ``(chi^2/4) Re C(t)`` (closed-form tail) when ``chi_bar`` is
    known, and the pointwise relation against ``dec`` when given.
    """
    if window is None:
        window = (20.0 / pred.delta_x, 100.0 / pred.delta_x)
    lo, hi = window
    t = np.asarray(result.times)
    if lo <= 0 or hi <= lo or hi > t[-1] + 1e-9:
        raise WindowError(f"window {window} not inside the simulated horizon (0, {t[-1]}]")
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 3:
        raise WindowError("fewer than three samples in the fit window")
    y = result.symmetrized[sel]
    if np.any(y == 0) or np.any(np.sign(y) != np.sign(y[0])):
        raise WindowError("S_zz changes sign inside the window: transients have not decayed")
    logt, logy = np.log(t[sel]), np.log(np.abs(y))
    slope = np.polyfit(logt, logy, 1)[0]
    target = -(1 + pred.s)
    # amplitude with the exponent held at its predicted value, so that an
    # exponent error does not leak into the amplitude
    amp = float(np.sign(y[0]) * math.exp(np.mean(logy - target * logt)))
    pred_amp = amp_dev = rel_dev = None
    if pred.chi_bar is not None:
        pred_amp = float(pred.relation_tail(1.0))
        amp_dev = abs(amp - pred_amp) / abs(pred_amp)
        if dec is not None:
            ref = pred.relation(t[sel], dec)
            rel_dev = float(np.max(np.abs(y - ref) / np.abs(ref)))
    return ShibaReport(float(slope), target, abs(slope - target) / abs(target), amp, pred_amp,
                       amp_dev, float(pred.literal_tail(1.0) * pred.delta_x ** 0), rel_dev, tuple(window))


@dataclass(frozen=True)
class Susceptibility:
    chi_bar: float
    sz_plus: float
    sz_minus: float
    converged: bool


def static_susceptibility(space: HierarchySpace, sys: SystemSpec, dec: ExponentialDecomposition,
                          d_epsilon: float | None = None, **relax_kwargs) -> Susceptibility:
    """``2 d<sigma_z>/d epsilon`` by a central difference of two steady states."""
    h = d_epsilon if d_epsilon is not None else 1e-3 * sys.delta_x
    vals = []
    flags = []
    for sign in (+1, -1):
        shifted = SystemSpec(sys.epsilon + sign * 0.5 * h, sys.delta_x, sys.coupling_op)
        ss = relax_to_steady_state(space, shifted, dec, **relax_kwargs)
        vals.append(expectation(ss.state, SIGMA_Z))
        flags.append(ss.converged)
    chi = 2.0 * (vals[0] - vals[1]) / h
    return Susceptibility(chi, vals[0], vals[1], all(flags))


@dataclass(frozen=True)
class LocalizationVerdict:
    mean: float
    threshold: float
    window: tuple

    @property
    def delocalized(self) -> bool:
        return abs(self.mean) < self.threshold


def localization_verdict(times, sz, threshold: float = 0.05, fraction: float = 0.25) -> LocalizationVerdict:
    """Time average of ``<sigma_z>`` over the final ``fraction`` of the run."""
    times = np.asarray(times, float)
    sz = np.asarray(sz, float)
    t0 = times[-1] - fraction * (times[-1] - times[0])
    sel = times >= t0
    mean = float(trapezoid(sz[sel], times[sel]) / (times[sel][-1] - times[sel][0])) if sel.sum() > 1 else float(sz[-1])
    return LocalizationVerdict(mean, threshold, (float(t0), float(times[-1])))
