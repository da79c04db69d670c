"""Verification suites run by ``fpheom verify``.

Each suite returns a list of :class:`Check` records; a suite passes when
every check does.  Suites are sized to finish within seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import hierarchy as H
from .io import golden_pole_table
from .oracle import (QuadratureSpec, closed_form_subohmic, correlation_by_quadrature,
                     pseudomode_correlation, pseudomode_reference)
from .polefit import (FitConfig, FitError, ExponentialDecomposition, eval_correlation,
                      fit_barycentric, fit_decomposition)
from .spectrum import (LorentzianSpectrum, SubohmicParams, SubohmicSpectrum, build_domain,
                       sample)

# Golden-table tolerance, re-derived from the printed precision of the table
# (rows with three significant digits dominate).  See ``table_rounding_bound``.
GOLDEN_TOLERANCE = 1e-5
GOLDEN_NORMALIZATION = 2.0  # the shipped pole sum represents S / 2
FLAGSHIP = SubohmicParams(s=0.5, alpha=0.05, omega_c=20.0)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (limit {self.limit:.1e}) {self.detail}".rstrip()


def _check(name, value, limit, detail=""):
    return Check(name, bool(value <= limit), float(value), float(limit), detail)


def _ulp(text: str) -> float:
    mant, _, exp = text.strip().upper().lstrip("+-").partition("E")
    decimals = len(mant.split(".")[1]) if "." in mant else 0
    return 0.5 * 10.0 ** ((int(exp) if exp else 0) - decimals)


def table_rounding_bound(omega) -> np.ndarray:
    """Pointwise bound on the pole-sum error caused by rounding of the printed table.

    Every entry is uncertain by half a unit in its last printed digit; the
    bound propagates ``|d eta| / |w - xi| + |eta| |d xi| / (|w - xi| (|w - xi| - |d xi|))``
    over all rows, times two for the conjugate terms.
    """
    ref = resources.files("fpheom") / "data" / "subohmic_s05_poles.csv"
    with resources.as_file(ref) as path, open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(ln for ln in fh if ln[:1].isdigit())]
    vals = np.array([[float(x) for x in r[1:]] for r in rows])
    ulp = np.array([[_ulp(x) for x in r[1:]] for r in rows])
    eta = vals[:, 0] + 1j * vals[:, 1]
    xi = vals[:, 2] + 1j * vals[:, 3]
    d_eta = np.hypot(ulp[:, 0], ulp[:, 1])
    d_xi = np.hypot(ulp[:, 2], ulp[:, 3])
    D = np.abs(np.asarray(omega, float)[:, None] - xi[None, :])
    return 2.0 * (d_eta / D + np.abs(eta) * d_xi / (D * (D - d_xi))).sum(axis=1)


def golden_table_report(n_points: int = 200, delta: float = 1e-8) -> dict:
    """Compare the shipped pole set with the subohmic noise power on a log grid."""
    ps = golden_pole_table()
    grid = np.geomspace(1e-4, 1e3, n_points)
    S = SubohmicSpectrum(FLAGSHIP).noise_power(grid)
    approx = GOLDEN_NORMALIZATION * ps(grid)
    err = np.abs(approx - S)
    bound = GOLDEN_NORMALIZATION * table_rounding_bound(grid)
    neg = np.abs(GOLDEN_NORMALIZATION * ps(-grid))
    return {
        "K": len(ps),
        "max_rel_error": float(err.max() / S.max()),
        "neg_rel_error": float(neg.max() / S.max()),
        "bound_ratio": float(np.max(err / (bound + delta * S.max()))),
        "max_bound_rel": float(bound.max() / S.max()),
    }


def suite_golden_table() -> list[Check]:
    r = golden_table_report()
    return [
        _check("golden table max relative error", r["max_rel_error"], GOLDEN_TOLERANCE, f"K={r['K']}"),
        _check("golden table negative frequencies", r["neg_rel_error"], GOLDEN_TOLERANCE),
        _check("golden table within rounding bound", r["bound_ratio"], 1.0,
               "(error / (rounding bound + delta max S))"),
    ]


def suite_fit() -> list[Check]:
    out = []
    grid = build_domain(1e-2, 1e2, 20).grid
    model = fit_barycentric((grid, np.full(grid.size, 3.0)))
    out.append(_check("constant input stops at one support point", model.m, 1))
    data = 1.0 / (grid**2 + 1.0)
    res = fit_decomposition((grid, data), FitConfig(1e-10))
    dec = res.decomposition
    out.append(_check("Lorentzian gives one mode", dec.K, 1))
    out.append(_check("Lorentzian mode amplitude", abs(dec.d[0] - 0.5), 1e-9))
    out.append(_check("Lorentzian mode rate", abs(dec.z[0] - 1.0), 1e-9))
    g, S = sample(SubohmicSpectrum(FLAGSHIP), 0.0, build_domain(1e-4, 1e3, 100).grid)
    res = fit_decomposition((g, S), FitConfig(1e-8))
    m = res.model
    interp = np.max(np.abs(m(m.support) - m.values) / np.maximum(np.abs(m.values), 1e-300 + m.scale * 1e-16))
    out.append(_check("interpolation at support points", interp, 100 * np.finfo(float).eps))
    recomputed = float(np.max(np.abs(m(g) - S)))
    out.append(_check("reported error equals re-evaluation", abs(recomputed - m.error), 0.0))
    out.append(_check("flagship relative error", res.poles.fit_error / S.max(), 1e-8, f"K={res.K}"))
    out.append(Check("flagship K in [25, 40]", 25 <= res.K <= 40, res.K, 40))
    out.append(_check("conjugate pole symmetry", res.poles.conjugate_mismatch, 1e-8))
    return out


def suite_correlation() -> list[Check]:
    out = []
    g, S = sample(SubohmicSpectrum(FLAGSHIP), 0.0, build_domain(1e-4, 1e3, 100).grid)
    res = fit_decomposition((g, S), FitConfig(1e-9))
    t = np.linspace(0.0, 100.0, 500)
    err = np.abs(eval_correlation(res.decomposition, t) - closed_form_subohmic(FLAGSHIP, t))
    out.append(_check("decomposition vs closed form, t in [0, 100]", err.max(), 1e-6, f"K={res.K}"))
    c0 = complex(np.sum(res.decomposition.d))
    out.append(_check("zero-time moment", abs(c0 - closed_form_subohmic(FLAGSHIP, 0.0)), 1e-6))
    lor = fit_decomposition(sample(LorentzianSpectrum(), 0.0, build_domain(1e-3, 1e3, 20).grid),
                            FitConfig(1e-10)).decomposition
    err = np.abs(eval_correlation(lor, t) - 0.5 * np.exp(-t))
    out.append(_check("Lorentzian decomposition vs e^-t / 2", err.max(), 1e-9))
    return out


def suite_oracle() -> list[Check]:
    out = []
    for t in (0.0, 1.0, 10.0):
        q = correlation_by_quadrature(SubohmicSpectrum(FLAGSHIP), 0.0, t)
        ref = closed_form_subohmic(FLAGSHIP, t)
        out.append(_check(f"quadrature vs closed form at t={t:g}", abs(q.value - ref), max(1e-9, q.error)))
    q = correlation_by_quadrature(LorentzianSpectrum(), 0.0, 2.0, QuadratureSpec(cutoff=1e4))
    # the neglected tail beyond the cutoff oscillates and is bounded by ~1 / (pi t cutoff^2)
    out.append(_check("Lorentzian quadrature", abs(q.value - 0.5 * math.exp(-2.0)), 1e-8))
    t = np.linspace(0.0, 10.0, 101)
    mode = (0.3, 0.5 + 2.0j)
    err = np.abs(pseudomode_correlation(mode, 6, t) - mode[0] * np.exp(-mode[1] * t))
    out.append(_check("pseudomode self-correlation", err.max(), 1e-12))
    return out


def single_mode_comparison(depth: int = 8, t_final: float = 50.0, dt: float = 0.01,
                           mode=(0.05, 0.5 + 2.0j), fock_cut: int = 6) -> float:
    """Max ``|<sigma_z>|`` deviation between the hierarchy and the pseudomode reference."""
    sys = H.SystemSpec(0.0, 1.0)
    dec = ExponentialDecomposition([mode[0]], [mode[1]])
    space = H.build_space(1, H.TruncationSpec(depth))
    tr = H.propagate(space, sys, dec, H.factorized_state(space, H.spin_up()), t_final, dt, stride=10)
    ref = pseudomode_reference(sys, mode, fock_cut, tr.times)
    return float(np.max(np.abs(tr.expectation(H.SIGMA_Z) - ref)))


def suite_hierarchy() -> list[Check]:
    out = [_check("single mode vs pseudomode", single_mode_comparison(), 1e-6)]
    sys = H.SystemSpec(0.0, 1.0)
    dec = ExponentialDecomposition([0.0], [1.0])
    space = H.build_space(1, H.TruncationSpec(1))
    tr = H.propagate(space, sys, dec, H.factorized_state(space, H.spin_up()), 20.0, 0.005, stride=20)
    err = np.abs(tr.expectation(H.SIGMA_Z) - np.cos(2.0 * tr.times))
    out.append(_check("zero-coupling Rabi oscillation", err.max(), 1e-8))
    sp3 = H.build_space(3, H.TruncationSpec(3))
    ok = True
    for s in range(6):
        up = sp3.raise_table[:, s]
        has = up >= 0
        ok &= bool(np.all(sp3.lower_table[up[has], s] == np.nonzero(has)[0]))
    out.append(Check("neighbour tables consistent (K=3, L=3)", ok, float(not ok), 0.0))
    return out


SUITES = {
    "fit": suite_fit,
    "correlation": suite_correlation,
    "hierarchy": suite_hierarchy,
    "oracle": suite_oracle,
    "golden-table": suite_golden_table,
}


def run_suite(name: str) -> list[Check]:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    try:
        return fn()
    except FitError as exc:
        return [Check(f"{name}: fit failed", False, math.nan, math.nan, str(exc))]
