"""INI run configuration.

Sections: ``[spectrum]``, ``[domain]``, ``[fit]``, ``[system]``, ``[truncation]``,
``[propagation]``, ``[analysis]``, ``[output]``.  Every section is optional
and falls back to defaults.  Command-line overrides use ``section.key=value``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hierarchy import DEFAULT_BUDGET, SIGMA_X, SIGMA_Z, SystemSpec, TruncationSpec
from .polefit import FitConfig
from .spectrum import SpectrumError, build_domain, make_spectrum

SECTIONS = ("spectrum", "domain", "fit", "system", "truncation", "propagation", "analysis", "output")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` and ``field`` locate the offending entry."""

    def __init__(self, message, field=None, line=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        if field is not None:
            where += f"[{field}] "
        super().__init__(where + message)
        self.field, self.line, self.path = field, line, path


@dataclass(frozen=True)
class SpectrumConfig:
    model: str = "subohmic"
    temperature: float = 0.0
    params: dict = field(default_factory=lambda: {"s": 0.5, "alpha": 0.05, "omega_c": 20.0})


@dataclass(frozen=True)
class DomainConfig:
    lo: float = 1e-4
    hi: float = 1e3
    points_per_decade: int = 100
    two_sided: bool = True


@dataclass(frozen=True)
class PropagationConfig:
    t_final: float = 50.0
    dt: float = 0.01
    stride: int = 10
    method: str = "lawson"
    initial: str = "up"
    adaptive: bool = False
    bound: float = 1e6


@dataclass(frozen=True)
class AnalysisConfig:
    kind: str = "localization"
    window_lo: float | None = None
    window_hi: float | None = None
    threshold: float = 0.05
    fraction: float = 0.25
    d_epsilon: float | None = None
    tol: float = 1e-6
    t_max: float = 200.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "."
    prefix: str = "run"


@dataclass(frozen=True)
class RunConfig:
    spectrum: SpectrumConfig = SpectrumConfig()
    domain: DomainConfig = DomainConfig()
    fit: FitConfig = FitConfig()
    system: SystemSpec = SystemSpec()
    truncation: TruncationSpec = TruncationSpec(2)
    budget: int = DEFAULT_BUDGET
    propagation: PropagationConfig = PropagationConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    output: OutputConfig = OutputConfig()
    source: str | None = None

    def spectrum_model(self):
        return make_spectrum(self.spectrum.model, **self.spectrum.params)

    def frequency_grid(self) -> np.ndarray:
        d = self.domain
        return build_domain(d.lo, d.hi, d.points_per_decade, d.two_sided).grid

    def snapshot(self) -> dict:
        """Plain-dict view for manifests."""
        sys = self.system
        op = "sigma_z" if np.allclose(sys.coupling_op, SIGMA_Z) else (
            "sigma_x" if np.allclose(sys.coupling_op, SIGMA_X) else sys.coupling_op.tolist())
        return {
            "spectrum": asdict(self.spectrum),
            "domain": asdict(self.domain),
            "fit": asdict(self.fit),
            "system": {"epsilon": sys.epsilon, "delta_x": sys.delta_x, "coupling_op": op},
            "truncation": {"depth": self.truncation.depth,
                           "per_mode_cap": self.truncation.per_mode_cap, "budget": self.budget},
            "propagation": asdict(self.propagation),
            "analysis": asdict(self.analysis),
            "output": asdict(self.output),
        }


_SPECTRUM_KEYS = {
    "subohmic": ("s", "alpha", "omega_c"),
    "bandgap": ("kappa1", "kappa2", "xi1", "xi2", "omega1", "omega2"),
    "lorentzian": ("amplitude", "center", "width"),
    "tabulated": ("file",),
}
_OPERATORS = {"sigma_z": SIGMA_Z, "sigma_x": SIGMA_X}


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif section and ("=" in s or ":" in s):
            key = s.split("=", 1)[0].split(":", 1)[0].strip().lower()
            out[(section, key)] = no
    return out


class _Reader:
    def __init__(self, parser, lines, path):
        self.p, self.lines, self.path = parser, lines, path
        self.used: set[tuple[str, str]] = set()

    def error(self, section, key, message):
        return ConfigError(message, f"{section}.{key}" if key else section,
                           self.lines.get((section, key)), self.path)

    def raw(self, section, key):
        if not self.p.has_option(section, key):
            return None
        self.used.add((section, key))
        return self.p.get(section, key).strip()

    def get(self, section, key, kind, default):
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        try:
            if kind is bool:
                return self.p.getboolean(section, key)
            if kind is int:
                f = float(v)
                if f != int(f):
                    raise ValueError
                return int(f)
            if kind is float:
                f = float(v)
                if math.isnan(f):
                    raise ValueError
                return f
            return v
        except ValueError:
            raise self.error(section, key, f"cannot parse {v!r} as {kind.__name__}") from None


def load_config(path=None, overrides=(), text: str | None = None) -> RunConfig:
    """Parse an INI file (or ``text``) plus ``section.key=value`` overrides."""
    if text is None and path is None:
        text = ""
    if text is None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path=path) from exc
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path or "<string>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"syntax error: {exc.message.splitlines()[0]}", line=line, path=path) from exc
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().lower().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", section,
                              _find_section_line(text, section), path)
    r = _Reader(parser, _line_numbers(text), path)
    cfg = _build(r)
    for section in parser.sections():
        for key in parser.options(section):
            if (section, key) not in r.used:
                raise r.error(section, key, "unknown key")
    return cfg


def _find_section_line(text, section):
    for no, raw in enumerate(text.splitlines(), start=1):
        if raw.strip().lower() == f"[{section}]":
            return no
    return None


def _build(r: _Reader) -> RunConfig:
    model = r.get("spectrum", "model", str, "subohmic").lower()
    if model not in _SPECTRUM_KEYS:
        raise r.error("spectrum", "model", f"unknown model {model!r}; choose from {sorted(_SPECTRUM_KEYS)}")
    temperature = r.get("spectrum", "temperature", float, 0.0)
    defaults = SpectrumConfig().params if model == "subohmic" else {}
    params = {}
    for key in _SPECTRUM_KEYS[model]:
        kind = str if key == "file" else float
        val = r.get("spectrum", key, kind, defaults.get(key))
        if val is not None:
            params[key] = val
        elif model in ("bandgap", "tabulated"):
            raise r.error("spectrum", key, f"required for model {model!r}")
    if model == "tabulated" and r.path is not None and not Path(params["file"]).is_absolute():
        params["file"] = str(Path(r.path).parent / params["file"])
    spectrum = SpectrumConfig(model, temperature, params)
    try:
        if model != "tabulated":
            make_spectrum(model, **params)
    except SpectrumError as exc:
        culprit = next((k for k in params if re.search(rf"\b{k}\b", str(exc))), None)
        raise r.error("spectrum", culprit, str(exc)) from None
    if temperature < 0:
        raise r.error("spectrum", "temperature", "must be >= 0")
    if model == "bandgap" and temperature != 0:
        raise r.error("spectrum", "temperature", "bandgap model is defined at T = 0 only")

    domain = DomainConfig(r.get("domain", "lo", float, 1e-4), r.get("domain", "hi", float, 1e3),
                          r.get("domain", "points_per_decade", int, 100),
                          r.get("domain", "two_sided", bool, True))
    try:
        build_domain(domain.lo, domain.hi, domain.points_per_decade, domain.two_sided)
    except SpectrumError as exc:
        raise r.error("domain", None, str(exc)) from None

    floor = r.get("fit", "residue_floor", float, None)
    try:
        fit = FitConfig(r.get("fit", "delta", float, 1e-8), r.get("fit", "max_iterations", int, 200),
                        floor, r.get("fit", "absolute", bool, False))
    except ValueError as exc:
        culprit = next((k for k in ("delta", "max_iterations", "residue_floor", "absolute")
                        if re.search(rf"\b{k}\b", str(exc))), None)
        raise r.error("fit", culprit, str(exc)) from None

    op_name = r.get("system", "coupling_op", str, "sigma_z").lower()
    if op_name not in _OPERATORS:
        raise r.error("system", "coupling_op", f"unknown operator {op_name!r}")
    try:
        system = SystemSpec(r.get("system", "epsilon", float, 0.0), r.get("system", "delta_x", float, 1.0),
                            _OPERATORS[op_name])
    except ValueError as exc:
        raise r.error("system", None, str(exc)) from None

    depth = r.get("truncation", "depth", int, 2)
    cap = r.get("truncation", "per_mode_cap", int, None)
    try:
        trunc = TruncationSpec(depth, cap)
    except ValueError as exc:
        raise r.error("truncation", "depth" if cap is None else "per_mode_cap", str(exc)) from None
    budget = r.get("truncation", "budget", int, DEFAULT_BUDGET)
    if budget < 1:
        raise r.error("truncation", "budget", "must be >= 1")

    prop = PropagationConfig(
        r.get("propagation", "t_final", float, 50.0), r.get("propagation", "dt", float, 0.01),
        r.get("propagation", "stride", int, 10), r.get("propagation", "method", str, "lawson").lower(),
        r.get("propagation", "initial", str, "up").lower(), r.get("propagation", "adaptive", bool, False),
        r.get("propagation", "bound", float, 1e6))
    if prop.dt <= 0:
        raise r.error("propagation", "dt", "must be > 0")
    if prop.t_final < 0:
        raise r.error("propagation", "t_final", "must be >= 0")
    if prop.stride < 1:
        raise r.error("propagation", "stride", "must be >= 1")
    if prop.method not in ("rk4", "lawson"):
        raise r.error("propagation", "method", "must be 'rk4' or 'lawson'")
    if prop.initial not in ("up", "down", "mixed", "ground"):
        raise r.error("propagation", "initial", "must be one of up, down, mixed, ground")

    ana = AnalysisConfig(
        r.get("analysis", "kind", str, "localization").lower(), r.get("analysis", "window_lo", float, None),
        r.get("analysis", "window_hi", float, None), r.get("analysis", "threshold", float, 0.05),
        r.get("analysis", "fraction", float, 0.25), r.get("analysis", "d_epsilon", float, None),
        r.get("analysis", "tol", float, 1e-6), r.get("analysis", "t_max", float, 200.0))
    if ana.kind not in ("localization", "shiba", "susceptibility"):
        raise r.error("analysis", "kind", "must be localization, shiba or susceptibility")
    if not 0 < ana.fraction <= 1:
        raise r.error("analysis", "fraction", "must lie in (0, 1]")

    out = OutputConfig(r.get("output", "directory", str, "."), r.get("output", "prefix", str, "run"))
    return RunConfig(spectrum, domain, fit, system, trunc, budget, prop, ana, out,
                     None if r.path is None else str(r.path))
