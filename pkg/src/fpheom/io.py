"""CSV and manifest I/O.

Data files are UTF-8, comma separated, with ``#`` comment headers and every
float written with 17 significant digits.  Data files carry no timestamps so
identical inputs give identical bytes; run metadata lives in the manifest.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .hierarchy import SIGMA_X, SIGMA_Z, Trajectory
from .polefit import ExponentialDecomposition, PoleSet, poles_from_arrays

FLOAT_FMT = "%.17g"

POLE_COLUMNS = ("index", "re_eta", "im_eta", "re_xi", "im_xi")
DECOMPOSITION_COLUMNS = ("index", "re_d", "im_d", "gamma", "omega")
TRAJECTORY_COLUMNS = ("time", "re_rho00", "im_rho00", "re_rho01", "im_rho01",
                      "re_rho10", "im_rho10", "re_rho11", "im_rho11",
                      "sigma_z", "sigma_x", "trace_residual")


class FormatError(ValueError):
    pass


def _write_table(path, columns, rows, comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(int(v)) if i == 0 and columns[0] == "index" else FLOAT_FMT % v
                              for i, v in enumerate(row)) + "\n")
    return path


def read_table(path, columns=None) -> dict[str, np.ndarray]:
    """Read a ``#``-commented CSV with a header row into a column dict."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError(f"{path}: no header row")
    header = [h.strip() for h in lines[0].split(",")]
    if columns is not None and tuple(header) != tuple(columns):
        raise FormatError(f"{path}: expected columns {','.join(columns)}, got {','.join(header)}")
    if len(lines) == 1:
        data = np.empty((0, len(header)))
    else:
        try:
            data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    if data.shape[1] != len(header):
        raise FormatError(f"{path}: {data.shape[1]} values per row for {len(header)} columns")
    return {h: data[:, i] for i, h in enumerate(header)}


def write_poles(path, ps: PoleSet, comments=()):
    rows = [(i + 1, e.real, e.imag, x.real, x.imag)
            for i, (e, x) in enumerate(zip(ps.residues, ps.poles))]
    return _write_table(path, POLE_COLUMNS, rows, comments)


def read_poles(path) -> PoleSet:
    t = read_table(path, POLE_COLUMNS)
    return poles_from_arrays(t["re_xi"] + 1j * t["im_xi"], t["re_eta"] + 1j * t["im_eta"])


def write_decomposition(path, dec: ExponentialDecomposition, comments=()):
    dec = dec.sorted()
    rows = [(i + 1, d.real, d.imag, z.real, z.imag) for i, (d, z) in enumerate(zip(dec.d, dec.z))]
    return _write_table(path, DECOMPOSITION_COLUMNS, rows, comments)


def read_decomposition(path) -> ExponentialDecomposition:
    t = read_table(path, DECOMPOSITION_COLUMNS)
    try:
        return ExponentialDecomposition(t["re_d"] + 1j * t["im_d"], t["gamma"] + 1j * t["omega"])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def golden_pole_table() -> PoleSet:
    """The shipped published pole set for the ``s = 1/2`` subohmic spectral density."""
    ref = resources.files("fpheom") / "data" / "subohmic_s05_poles.csv"
    with resources.as_file(ref) as p:
        return read_poles(p)


def write_trajectory(path, tr: Trajectory, comments=()):
    rho = tr.rho.reshape(-1, 4)
    cols = [tr.times]
    for k in range(4):
        cols += [rho[:, k].real, rho[:, k].imag]
    cols += [tr.expectation(SIGMA_Z), tr.expectation(SIGMA_X), tr.trace_residual]
    return _write_table(path, TRAJECTORY_COLUMNS, np.column_stack(cols), comments)


def read_trajectory(path) -> dict[str, np.ndarray]:
    return read_table(path, TRAJECTORY_COLUMNS)


def write_series(path, columns: dict[str, np.ndarray], comments=()):
    names = tuple(columns)
    return _write_table(path, names, np.column_stack([np.asarray(columns[n], float) for n in names]),
                        comments)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, files=(), status: str = "ok", **extra):
    """JSON manifest referencing every emitted file by SHA-256."""
    from . import __version__
    path = Path(path)
    doc = {
        "command": command,
        "status": status,
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
        "files": {Path(f).name: sha256(f) for f in files},
    }
    doc.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
