"""Independent reference calculations.

* direct quadrature of ``C(t) = (1/2pi) int S(w) exp(-i w t) dw``;
* the closed-form zero-temperature subohmic correlation function;
* an exact pseudomode solution for a bath made of a single exponential mode.

None of these share code with the rational fit or the hierarchy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import gamma as gamma_fn

from .spectrum import (SubohmicParams, SubohmicSpectrum, SpectrumModel, Temperature,
                       as_temperature)


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    max_phase: float = math.pi
    cutoff: float | None = None
    nodes: int = 8
    panels_per_decade: int = 8
    grading_levels: int = 120


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float
    degraded: bool = False


def _default_cutoff(model: SpectrumModel) -> float:
    if isinstance(model, SubohmicSpectrum):
        # the exp(-w/wc) tail beyond 32 wc is below 1e-13 of the peak
        return 32.0 * model.params.omega_c
    return 1e3 * model.scale_frequency()


def _panels(lo: float, hi: float, t: float, spec: QuadratureSpec) -> np.ndarray:
    """Panel edges on ``[lo, hi]``, ``0 < lo``: logarithmic, refined to keep ``w t`` per panel small."""
    ndec = max(1, int(math.ceil(math.log10(hi / lo) * spec.panels_per_decade)))
    edges = np.geomspace(lo, hi, ndec + 1)
    if t > 0:
        width = spec.max_phase / t
        pieces = [edges[:1]]
        for a, b in zip(edges[:-1], edges[1:]):
            k = int(math.ceil((b - a) / width))
            pieces.append(np.linspace(a, b, k + 1)[1:])
        edges = np.concatenate(pieces)
    return edges


def _rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _panel_estimates(g, a, b, n):
    """Per-panel ``n``-point and ``2n``-point sums, and the ``2n``-point sum of ``|g|``."""
    out = []
    for k in (n, 2 * n):
        x, w = _rule(k)
        half = 0.5 * (b - a)
        vals = g(0.5 * (a + b)[:, None] + half[:, None] * x[None, :])
        out.append((half * (vals @ w), half * (np.abs(vals) @ w)))
    return out[0][0], out[1][0], out[1][1]


def correlation_by_quadrature(model: SpectrumModel, T, t: float,
                              spec: QuadratureSpec = QuadratureSpec(), max_rounds: int = 60) -> QuadratureResult:
    """``C(t)`` by adaptive Gauss-Legendre panels on ``(0, cutoff]``.

    Both frequency signs are folded onto ``w > 0``.  Initial panels are graded
    geometrically towards ``w = 0``, logarithmic above, and never wider than
    ``max_phase / t``.  Each panel compares ``nodes`` against ``2 * nodes``
    points; panels carrying the largest differences are bisected until the
    summed difference is below ``rtol`` times ``int |S|``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    T = as_temperature(T)
    cutoff = spec.cutoff or _default_cutoff(model)

    def g(w):
        phase = np.exp(-1j * t * w)
        out = model.noise_power(w, T) * phase
        neg = model.noise_power(-w, T)
        if np.any(neg):
            out += neg * phase.conj()
        return out

    a0 = min(1.0, spec.max_phase / t, cutoff) if t > 0 else min(1.0, cutoff)
    dyadic = a0 * 2.0 ** -np.arange(spec.grading_levels, -1, -1.0)
    edges = np.concatenate([dyadic, _panels(a0, cutoff, t, spec)[1:]])
    lo, hi = edges[:-1], edges[1:]
    coarse, fine, mag = _panel_estimates(g, lo, hi, spec.nodes)
    for _ in range(max_rounds):
        err = np.abs(fine - coarse)
        target = spec.rtol * max(mag.sum(), 1e-300)
        if err.sum() <= target:
            break
        split = err > min(target / err.size, 0.5 * err.max())
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        c, f, a = _panel_estimates(g, new_lo, new_hi, spec.nodes)
        keep = ~split
        lo, hi = np.concatenate([lo[keep], new_lo]), np.concatenate([hi[keep], new_hi])
        coarse, fine, mag = (np.concatenate([coarse[keep], c]), np.concatenate([fine[keep], f]),
                             np.concatenate([mag[keep], a]))
    err = np.abs(fine - coarse)
    val = complex(fine.sum()) / (2 * math.pi)
    return QuadratureResult(val, float(err.sum()) / (2 * math.pi),
                            bool(err.sum() > spec.rtol * max(mag.sum(), 1e-300)))


def closed_form_subohmic(p: SubohmicParams, t, T=0.0):
    """Zero-temperature ``C(t) = (alpha wc^(1-s) Gamma(1+s) / 2) (1/wc + i t)^-(1+s)``."""
    if not as_temperature(T).is_zero:
        raise NotImplementedError("closed form available at T = 0 only")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    pref = 0.5 * p.alpha * p.omega_c ** (1.0 - p.s) * gamma_fn(1.0 + p.s)
    val = pref * (1.0 / p.omega_c + 1j * t) ** (-(1.0 + p.s))
    return val[()] if val.ndim == 0 else val


def _destroy(n):
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def _lindblad(H, Ls):
    """Liouvillian for row-major vectorised density matrices."""
    n = H.shape[0]
    I = np.eye(n)
    Lv = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for L in Ls:
        LdL = L.conj().T @ L
        Lv += np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, I) + np.kron(I, LdL.T))
    return Lv


def _pseudomode_parts(mode, fock_cut):
    d, z = complex(mode[0]), complex(mode[1])
    if abs(d.imag) > 1e-14 * max(1.0, abs(d)) or d.real < 0:
        raise ValueError("pseudomode reference needs a real, non-negative amplitude d")
    if z.real <= 0:
        raise ValueError("mode rate must have positive real part")
    if fock_cut < 4:
        raise ValueError("fock_cut must be >= 4")
    a = _destroy(fock_cut)
    g = math.sqrt(d.real)
    return g, z.imag, z.real, a


def pseudomode_correlation(mode, fock_cut: int, t_grid) -> np.ndarray:
    """``<X(t) X(0)>`` of the damped oscillator alone, ``X = sqrt(d) (a + a^dag)``.

    Equals ``d exp(-z t)`` when the conventions of the mapping are right.
    """
    g, w1, gam, a = _pseudomode_parts(mode, fock_cut)
    X = g * (a + a.conj().T)
    L = _lindblad(w1 * a.conj().T @ a, [math.sqrt(2 * gam) * a])
    vac = np.zeros((fock_cut, fock_cut), complex)
    vac[0, 0] = 1.0
    return _evolve_trace(L, (X @ vac).ravel(), X, np.asarray(t_grid, float))


def _evolve_trace(Lv, x0, op, t_grid):
    out = np.empty(t_grid.size, complex)
    dts = np.diff(t_grid)
    x = x0.copy()
    prop = None
    last_dt = None
    n = op.shape[0]
    out[0] = np.trace(op @ x.reshape(n, n))
    for i, h in enumerate(dts, start=1):
        if last_dt is None or not math.isclose(h, last_dt, rel_tol=1e-12):
            prop = scipy.linalg.expm(Lv * h)
            last_dt = h
        x = prop @ x
        out[i] = np.trace(op @ x.reshape(n, n))
    return out


def pseudomode_reference(sys, single_mode, fock_cut: int, t_grid, rho0=None,
                         check_convergence: bool = True, conv_tol: float = 1e-8) -> np.ndarray:
    """``<sigma_z(t)>`` for the two-level system coupled to one damped oscillator.

    The oscillator (frequency ``Im z``, amplitude damping ``Re z``) starts in its
    vacuum and couples through ``Q (x) sqrt(d) (a + a^dag)``; its free
    correlation function is then ``d exp(-z t)``.  The Liouvillian is
    exponentiated exactly on the (ideally uniform) time grid.  With
    ``check_convergence`` the run is repeated at twice the Fock cut-off.
    """
    t_grid = np.asarray(t_grid, float)
    if t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase")

    def run(nf):
        g, w1, gam, a = _pseudomode_parts(single_mode, nf)
        If = np.eye(nf)
        H = (np.kron(sys.hamiltonian, If) + w1 * np.kron(np.eye(2), a.conj().T @ a)
             + g * np.kron(sys.coupling_op, a + a.conj().T))
        L = _lindblad(H, [math.sqrt(2 * gam) * np.kron(np.eye(2), a)])
        r0 = np.array([[1, 0], [0, 0]], complex) if rho0 is None else np.asarray(rho0, complex)
        vac = np.zeros((nf, nf), complex)
        vac[0, 0] = 1.0
        sz = np.kron(np.diag([1.0, -1.0]).astype(complex), If)
        return _evolve_trace(L, np.kron(r0, vac).ravel(), sz, t_grid).real

    out = run(fock_cut)
    if check_convergence:
        ref = run(2 * fock_cut)
        dev = float(np.max(np.abs(ref - out)))
        if dev > conv_tol:
            raise RuntimeError(
                f"Fock truncation not converged: doubling {fock_cut} changes <sigma_z> by {dev:.2e}")
    return out
