"""Reservoir spectral densities, noise power spectra and fitting grids.

Conventions: hbar = k_B = 1.  The noise power of a bosonic reservoir is
``S(w) = 2 [n(w) + 1] J(w)`` with ``n`` the Bose function and ``J`` extended
antisymmetrically to negative frequencies.  At ``T = 0`` this reduces to
``S(w) = 2 J(w)`` for ``w > 0`` and ``S(w) = 0`` for ``w < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np


class SpectrumError(ValueError):
    """Raised for invalid spectrum parameters or evaluation outside the domain."""


@dataclass(frozen=True)
class Temperature:
    """Temperature in energy units; ``T = 0`` is allowed and selects the zero-point branch."""

    value: float = 0.0

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise SpectrumError(f"temperature must be finite and >= 0, got {self.value}")

    @property
    def beta(self) -> float:
        return math.inf if self.value == 0.0 else 1.0 / self.value

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0


def as_temperature(T) -> Temperature:
    return T if isinstance(T, Temperature) else Temperature(float(T))


@dataclass(frozen=True)
class SubohmicParams:
    s: float
    alpha: float
    omega_c: float

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise SpectrumError(f"exponent s must lie in (0, 1], got {self.s}")
        if not self.alpha >= 0.0:
            raise SpectrumError(f"coupling alpha must be >= 0, got {self.alpha}")
        if not self.omega_c > 0.0:
            raise SpectrumError(f"cutoff omega_c must be > 0, got {self.omega_c}")


@dataclass(frozen=True)
class BandgapParams:
    kappa1: float
    kappa2: float
    xi1: float
    xi2: float
    omega1: float
    omega2: float

    def __post_init__(self):
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise SpectrumError("band amplitudes must be >= 0")
        if self.xi1 <= 0 or self.xi2 <= 0:
            raise SpectrumError("band widths must be > 0")
        if not 0 < self.omega1 < self.omega2:
            raise SpectrumError("band centres must satisfy 0 < omega1 < omega2")


def eval_subohmic_J(p: SubohmicParams, omega, antisymmetric: bool = False):
    """Spectral density ``(pi/2) alpha wc^(1-s) w^s exp(-w/wc)``.

    Negative frequencies raise unless ``antisymmetric`` is set, in which case
    ``J(-w) = -J(w)`` is used.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) and not antisymmetric:
        raise SpectrumError("J(omega) requested at omega < 0 without antisymmetric extension")
    aw = np.abs(w)
    val = 0.5 * math.pi * p.alpha * p.omega_c ** (1.0 - p.s) * aw**p.s * np.exp(-aw / p.omega_c)
    val = np.where(w < 0, -val, val)
    return val[()] if val.ndim == 0 else val


class SpectrumModel(Protocol):
    name: str

    def noise_power(self, omega, T: Temperature) -> np.ndarray: ...

    def scale_frequency(self) -> float: ...


@dataclass(frozen=True)
class SubohmicSpectrum:
    params: SubohmicParams
    name: str = "subohmic"

    def spectral_density(self, omega):
        return eval_subohmic_J(self.params, omega, antisymmetric=True)

    def noise_power(self, omega, T=Temperature()):
        T = as_temperature(T)
        w = np.asarray(omega, dtype=float)
        J = eval_subohmic_J(self.params, w, antisymmetric=True)
        if T.is_zero:
            out = np.where(w > 0, 2.0 * J, 0.0)
        else:
            if np.any(w == 0) and self.params.s < 1.0:
                raise SpectrumError("noise power diverges at omega = 0 for s < 1 and T > 0")
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = 2.0 * J / (-np.expm1(-T.beta * w))
            # s = 1: finite limit 2 J'(0) T at the origin
            out = np.where(w == 0, math.pi * self.params.alpha * T.value, out)
            out = np.where(np.isfinite(out), out, 0.0)
        return out[()] if out.ndim == 0 else out

    def scale_frequency(self) -> float:
        return self.params.omega_c


@dataclass(frozen=True)
class BandgapSpectrum:
    """Two-band structured zero-temperature noise power, vanishing for ``w < 0``."""

    params: BandgapParams
    name: str = "bandgap"

    def noise_power(self, omega, T=Temperature()):
        if not as_temperature(T).is_zero:
            raise SpectrumError("the bandgap spectrum is defined at T = 0 only")
        p = self.params
        w = np.asarray(omega, dtype=float)
        wp = np.where(w > 0, w, 0.0)

        def band(kappa, xi, w0):
            return kappa * xi**8 * wp / ((wp**2 - w0**2) ** 6 + wp**2 * xi**10)

        with np.errstate(invalid="ignore", divide="ignore"):
            out = band(p.kappa1, p.xi1, p.omega1) + band(p.kappa2, p.xi2, p.omega2)
        out = np.where(w > 0, out, 0.0)
        return out[()] if out.ndim == 0 else out

    def scale_frequency(self) -> float:
        return self.params.omega2


@dataclass(frozen=True)
class LorentzianSpectrum:
    """``S(w) = amplitude / ((w - center)^2 + width^2)``; an exact one-pole test spectrum.

    Its correlation function is ``(amplitude / (2 width)) exp(-(width + i center) t)``.
    Temperature is ignored: the model specifies the noise power directly.
    """

    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0
    name: str = "lorentzian"

    def __post_init__(self):
        if self.width <= 0:
            raise SpectrumError("Lorentzian width must be > 0")

    def noise_power(self, omega, T=Temperature()):
        w = np.asarray(omega, dtype=float)
        out = self.amplitude / ((w - self.center) ** 2 + self.width**2)
        return out[()] if out.ndim == 0 else out

    def scale_frequency(self) -> float:
        return self.width + abs(self.center)


@dataclass(frozen=True, eq=False)
class TabulatedSpectrum:
    """User-supplied noise power samples, interpolated linearly in log|w|.

    Positive and negative branches are interpolated separately; requests
    outside the sampled range on a branch raise (no extrapolation).
    """

    omega: np.ndarray
    values: np.ndarray
    name: str = "tabulated"

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if w.shape != v.shape or w.ndim != 1 or w.size < 2:
            raise SpectrumError("tabulated spectrum needs two equal-length 1-d columns")
        if np.any(w == 0):
            raise SpectrumError("tabulated frequencies must exclude 0")
        order = np.argsort(w)
        w, v = w[order], v[order]
        if np.any(np.diff(w) == 0):
            raise SpectrumError("duplicate frequencies in tabulated spectrum")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", v)

    def noise_power(self, omega, T=Temperature()):
        x = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.empty_like(x)
        for sign in (1.0, -1.0):
            sel_tab = np.sign(self.omega) == sign
            sel = np.sign(x) == sign
            if not sel.any():
                continue
            lw = np.log(np.abs(self.omega[sel_tab]))
            vals = self.values[sel_tab]
            if sign < 0:
                lw, vals = lw[::-1], vals[::-1]
            lx = np.log(np.abs(x[sel]))
            if lw.size < 2 or lx.min() < lw[0] - 1e-12 or lx.max() > lw[-1] + 1e-12:
                raise SpectrumError("tabulated spectrum evaluated outside its sampled range")
            out[sel] = np.interp(lx, lw, vals)
        if np.any(x == 0):
            raise SpectrumError("tabulated spectrum is undefined at omega = 0")
        return out if np.ndim(omega) else out[0]

    def scale_frequency(self) -> float:
        return float(np.abs(self.omega[np.argmax(np.abs(self.values))]))


def load_tabulated(path) -> TabulatedSpectrum:
    """Read a two-column (frequency, value) text file; ``#`` starts a comment."""
    data = np.loadtxt(Path(path), comments="#", delimiter=None if _is_whitespace(path) else ",", ndmin=2)
    if data.shape[1] != 2:
        raise SpectrumError(f"{path}: expected 2 columns, found {data.shape[1]}")
    return TabulatedSpectrum(data[:, 0], data[:, 1])


def _is_whitespace(path) -> bool:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            return "," not in line
    return True


def noise_power(model: SpectrumModel, T, omega):
    """Noise power of ``model`` at temperature ``T``."""
    return model.noise_power(omega, as_temperature(T))


@dataclass(frozen=True, eq=False)
class FrequencyDomain:
    segments: tuple
    points_per_decade: int
    grid: np.ndarray = field(repr=False)

    def __len__(self):
        return self.grid.size


def build_domain(lo_mag: float, hi_mag: float, points_per_decade: int = 100,
                 two_sided: bool = True) -> FrequencyDomain:
    """Logarithmic grid on ``[lo, hi]`` (and its mirror image if ``two_sided``)."""
    if not (0 < lo_mag < hi_mag) or not all(map(math.isfinite, (lo_mag, hi_mag))):
        raise SpectrumError(f"need 0 < lo_mag < hi_mag, got ({lo_mag}, {hi_mag})")
    if int(points_per_decade) != points_per_decade or points_per_decade < 10:
        raise SpectrumError("points_per_decade must be an integer >= 10")
    decades = math.log10(hi_mag / lo_mag)
    n = int(round(decades * points_per_decade)) + 1
    pos = np.logspace(math.log10(lo_mag), math.log10(hi_mag), n)
    pos[0], pos[-1] = lo_mag, hi_mag
    if two_sided:
        grid = np.concatenate([-pos[::-1], pos])
        segments = ((-hi_mag, -lo_mag), (lo_mag, hi_mag))
    else:
        grid = pos
        segments = ((lo_mag, hi_mag),)
    return FrequencyDomain(segments, int(points_per_decade), grid)


def make_spectrum(name: str, **params) -> SpectrumModel:
    """Construct a spectrum model from its name and keyword parameters."""
    name = name.lower()
    if name == "subohmic":
        return SubohmicSpectrum(SubohmicParams(params["s"], params["alpha"], params["omega_c"]))
    if name == "bandgap":
        keys = ("kappa1", "kappa2", "xi1", "xi2", "omega1", "omega2")
        return BandgapSpectrum(BandgapParams(*(params[k] for k in keys)))
    if name == "lorentzian":
        return LorentzianSpectrum(params.get("amplitude", 1.0), params.get("center", 0.0),
                                  params.get("width", 1.0))
    if name == "tabulated":
        return load_tabulated(params["file"])
    raise SpectrumError(f"unknown spectrum model {name!r}")


def sample(model: SpectrumModel, T, grid: Sequence[float]):
    """Evaluate ``model`` on ``grid`` and return ``(grid, values)`` as arrays."""
    g = np.asarray(grid, dtype=float)
    return g, np.asarray(noise_power(model, T, g), dtype=float)
