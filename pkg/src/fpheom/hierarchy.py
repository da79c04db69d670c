"""Dense, depth-truncated free-pole hierarchy for a two-level system.

Every auxiliary density operator (ADO) carries a multi-index ``(m, n)`` with
one forward (``m_k``) and one backward (``n_k``) occupation per exponential
mode of the bath correlation function.  With scaled ADOs the equations read

    d/dt rho_{m,n} = -i [H, rho] - sum_k (m_k z_k + n_k z_k*) rho
                     - i sum_k sqrt((m_k+1) d_k)  [Q, rho_{m_k+, n}]
                     - i sum_k sqrt((n_k+1) d_k*) [Q, rho_{m, n_k+}]
                     - i sum_k sqrt(m_k d_k)  Q rho_{m_k-, n}
                     + i sum_k sqrt(n_k d_k*) rho_{m, n_k-} Q

Operators are stored row-major, so a 2x2 block occupies four consecutive
entries of the flat state vector.
"""

from __future__ import annotations

import itertools
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .polefit import ExponentialDecomposition

log = logging.getLogger(__name__)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

DEFAULT_BUDGET = 5_000_000


class HierarchyError(RuntimeError):
    pass


class BudgetError(HierarchyError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class DivergenceError(HierarchyError):
    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """``H_S = (epsilon/2) sigma_z + delta_x sigma_x`` coupled to the bath through ``coupling_op``."""

    epsilon: float = 0.0
    delta_x: float = 1.0
    coupling_op: np.ndarray = field(default_factory=lambda: SIGMA_Z.copy())
    hilbert_dim: int = 2

    def __post_init__(self):
        Q = np.asarray(self.coupling_op, dtype=complex)
        if Q.shape != (2, 2) or self.hilbert_dim != 2:
            raise ValueError("only two-level systems are supported")
        if not np.allclose(Q, Q.conj().T, atol=1e-14):
            raise ValueError("coupling operator must be Hermitian")
        object.__setattr__(self, "coupling_op", Q)

    @property
    def hamiltonian(self) -> np.ndarray:
        return 0.5 * self.epsilon * SIGMA_Z + self.delta_x * SIGMA_X

    def ground_state(self) -> np.ndarray:
        vals, vecs = np.linalg.eigh(self.hamiltonian)
        v = vecs[:, 0]
        return np.outer(v, v.conj())


@dataclass(frozen=True)
class TruncationSpec:
    depth: int
    per_mode_cap: int | None = None

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("hierarchy depth must be >= 0")
        cap = self.depth if self.per_mode_cap is None else self.per_mode_cap
        if self.depth > 0 and not 1 <= cap <= self.depth:
            raise ValueError("per-mode cap must satisfy 1 <= cap <= depth")
        object.__setattr__(self, "per_mode_cap", cap)


def count_indices(n_symbols: int, depth: int, cap: int) -> int:
    """Number of occupation vectors over ``n_symbols`` entries, each <= cap, total <= depth."""
    poly = [1] + [0] * depth
    for _ in range(n_symbols):
        new = [0] * (depth + 1)
        for total, c in enumerate(poly):
            if c:
                for j in range(min(cap, depth - total) + 1):
                    new[total + j] += c
        poly = new
    return sum(poly)


@dataclass(frozen=True, eq=False)
class HierarchySpace:
    K: int
    truncation: TruncationSpec
    indices: np.ndarray = field(repr=False)
    raise_table: np.ndarray = field(repr=False)
    lower_table: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @property
    def depth(self) -> int:
        return self.truncation.depth

    def position(self, m, n) -> int:
        key = np.concatenate([np.asarray(m), np.asarray(n)])
        hit = np.nonzero(np.all(self.indices == key, axis=1))[0]
        if hit.size == 0:
            raise KeyError(f"index {tuple(key)} not in the truncated hierarchy")
        return int(hit[0])

    @property
    def ordering_tag(self) -> str:
        return "graded-multiset-v1"


def build_space(K: int, trunc: TruncationSpec, budget: int = DEFAULT_BUDGET) -> HierarchySpace:
    """Enumerate multi-indices by total occupation, then in multiset order.

    Symbols ``0..K-1`` are the forward indices ``m_k``, ``K..2K-1`` the
    backward indices ``n_k``.  Neighbour tables give, for every index and
    symbol, the position of the index with that occupation raised (lowered)
    by one, or -1 when it falls outside the truncation.
    """
    if K < 1:
        raise ValueError("need at least one mode")
    nsym = 2 * K
    L, cap = trunc.depth, trunc.per_mode_cap
    estimate = count_indices(nsym, L, cap)
    if estimate > budget:
        raise BudgetError(
            f"hierarchy with K={K}, depth={L}, cap={cap} has {estimate} ADOs, "
            f"exceeding the budget of {budget}", estimate)
    rows = np.zeros((estimate, nsym), dtype=np.int16)
    pos = 0
    for level in range(L + 1):
        for combo in itertools.combinations_with_replacement(range(nsym), level):
            if level and cap < level:
                counts = np.bincount(combo, minlength=nsym)
                if counts.max() > cap:
                    continue
                rows[pos] = counts
            else:
                for s in combo:
                    rows[pos, s] += 1
            pos += 1
    assert pos == estimate

    # random 64-bit hash keys; every lookup is verified against the full row
    rng = np.random.default_rng(0x5EED)
    weights = rng.integers(1, 2**63 - 1, size=nsym, dtype=np.uint64)
    with np.errstate(over="ignore"):
        keys = (rows.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    if np.any(np.diff(sorted_keys) == 0):
        raise HierarchyError("hash collision while indexing the hierarchy")

    def lookup(target_keys):
        loc = np.minimum(np.searchsorted(sorted_keys, target_keys), sorted_keys.size - 1)
        return np.where(sorted_keys[loc] == target_keys, order[loc], -1)

    raise_t = np.full((estimate, nsym), -1, dtype=np.int64)
    lower_t = np.full((estimate, nsym), -1, dtype=np.int64)
    for s in range(nsym):
        with np.errstate(over="ignore"):
            up = lookup(keys + weights[s])
            down = lookup(keys - weights[s])
        down[rows[:, s] == 0] = -1
        raise_t[:, s] = up
        lower_t[:, s] = down
        for tab, sign in ((up, 1), (down, -1)):
            ok = tab >= 0
            expect = rows[ok].copy()
            expect[:, s] += sign
            if not np.array_equal(rows[tab[ok]], expect):
                raise HierarchyError("hash lookup mismatch while building neighbour tables")
    return HierarchySpace(K, trunc, rows, raise_t, lower_t)


@dataclass(eq=False)
class ADOVector:
    storage: np.ndarray
    time: float = 0.0

    @property
    def n_blocks(self) -> int:
        return self.storage.size // 4

    def block(self, i: int) -> np.ndarray:
        return self.storage[4 * i: 4 * i + 4].reshape(2, 2)

    @property
    def rho(self) -> np.ndarray:
        return self.block(0).copy()

    def blocks(self) -> np.ndarray:
        return self.storage.reshape(-1, 2, 2)

    def copy(self) -> "ADOVector":
        return ADOVector(self.storage.copy(), self.time)


def factorized_state(space: HierarchySpace, rho0) -> ADOVector:
    """Product initial state: ``rho0`` in the physical block, all ADOs zero."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (2, 2):
        raise ValueError("rho0 must be 2x2")
    if not np.allclose(rho0, rho0.conj().T, atol=1e-12) or abs(np.trace(rho0) - 1) > 1e-12:
        raise ValueError("rho0 must be Hermitian with unit trace")
    v = np.zeros(4 * space.size, dtype=complex)
    v[:4] = rho0.ravel()
    return ADOVector(v, 0.0)


def _left(A):
    return np.kron(A, IDENTITY)


def _right(B):
    return np.kron(IDENTITY, B.T)


@dataclass(frozen=True, eq=False)
class Generator:
    """Linear generator ``G = -diag(damping) + coupling`` on the flat ADO vector."""

    matrix: sp.csr_matrix
    damping: np.ndarray
    coupling: sp.csr_matrix

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    @property
    def shape(self):
        return self.matrix.shape


def _block_terms(rows_tgt, cols_src, coef, superop):
    r, c = np.nonzero(superop)
    vals = superop[r, c]
    R = (4 * rows_tgt[:, None] + r[None, :]).ravel()
    C = (4 * cols_src[:, None] + c[None, :]).ravel()
    V = (coef[:, None] * vals[None, :]).ravel()
    return R, C, V


def build_generator(space: HierarchySpace, sys: SystemSpec, dec: ExponentialDecomposition) -> Generator:
    if dec.K != space.K:
        raise ValueError(f"decomposition has {dec.K} modes but the hierarchy has {space.K}")
    K, N = space.K, space.size
    H, Q = sys.hamiltonian, sys.coupling_op
    idx = space.indices.astype(np.int64)
    m, n = idx[:, :K], idx[:, K:]
    damping = m @ dec.z + n @ np.conj(dec.z)

    comm_Q = _left(Q) - _right(Q)
    R, C, V = [], [], []
    all_i = np.arange(N)
    r, c, v = _block_terms(all_i, all_i, np.ones(N, complex), -1j * (_left(H) - _right(H)))
    R.append(r); C.append(c); V.append(v)

    sq_d = np.sqrt(dec.d.astype(complex))
    sq_dc = np.sqrt(np.conj(dec.d).astype(complex))
    for k in range(K):
        for sym, occ, sq, lower_op, lower_sign in (
            (k, m[:, k], sq_d[k], _left(Q), -1j),
            (K + k, n[:, k], sq_dc[k], _right(Q), +1j),
        ):
            up = space.raise_table[:, sym]
            ok = up >= 0
            coef = -1j * np.sqrt(occ[ok] + 1.0) * sq
            r, c, v = _block_terms(all_i[ok], up[ok], coef, comm_Q)
            R.append(r); C.append(c); V.append(v)
            down = space.lower_table[:, sym]
            ok = down >= 0
            coef = lower_sign * np.sqrt(occ[ok].astype(float)) * sq
            r, c, v = _block_terms(all_i[ok], down[ok], coef, lower_op)
            R.append(r); C.append(c); V.append(v)
    dim = 4 * N
    coupling = sp.csr_matrix(
        (np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=(dim, dim))
    coupling.sum_duplicates()
    damp = np.repeat(damping, 4)
    matrix = (coupling - sp.diags(damp)).tocsr()
    return Generator(matrix, damp, coupling)


def apply_generator(space: HierarchySpace, sys: SystemSpec, dec: ExponentialDecomposition,
                    state: ADOVector, generator: Generator | None = None) -> ADOVector:
    """Time derivative of the full ADO vector."""
    if state.storage.size != 4 * space.size:
        raise ValueError("state dimension does not match the hierarchy")
    G = generator if generator is not None else build_generator(space, sys, dec)
    return ADOVector(G(state.storage), state.time)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    rho: np.ndarray
    final: ADOVector
    space: HierarchySpace
    dt: float
    method: str
    steps: int
    states: list | None = None

    def expectation(self, op) -> np.ndarray:
        op = np.asarray(op, dtype=complex)
        return np.einsum("ij,tji->t", op, self.rho).real

    @property
    def trace_residual(self) -> np.ndarray:
        return np.abs(np.trace(self.rho, axis1=1, axis2=2) - 1.0)

    @property
    def hermiticity_residual(self) -> np.ndarray:
        return np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2))).max(axis=(1, 2))


def _rk4_step(G: Generator, x, h):
    k1 = G(x)
    k2 = G(x + 0.5 * h * k1)
    k3 = G(x + 0.5 * h * k2)
    k4 = G(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _lawson_step(G: Generator, x, h, half=None):
    # classical RK4 in the interaction picture of the diagonal damping
    E = np.exp(-0.5 * h * G.damping) if half is None else half
    B = G.coupling
    k1 = B @ x
    Ex = E * x
    k2 = B @ (Ex + 0.5 * h * (E * k1))
    k3 = B @ (Ex + 0.5 * h * k2)
    k4 = B @ (E * Ex + h * (E * k3))
    return E * (E * x) + (h / 6.0) * (E * (E * k1) + 2 * E * (k2 + k3) + k4)


def propagate(space: HierarchySpace, sys: SystemSpec, dec: ExponentialDecomposition,
              initial: ADOVector, t_final: float, dt: float, stride: int = 10,
              method: str = "lawson", adaptive: bool = False, step_tol: float = 1e-10,
              bound: float = 1e6, keep_states: bool = False,
              generator: Generator | None = None,
              callback: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """Fixed-step fourth-order propagation of the full ADO vector.

    ``method='rk4'`` is the classical Runge-Kutta scheme; ``'lawson'`` applies
    the same scheme after removing the diagonal damping exactly, which keeps
    strongly damped high-frequency modes stable at the usual step sizes.
    With ``adaptive`` every step is checked against two half steps and split
    until the difference falls below ``step_tol``.  Snapshots of the physical
    block are stored every ``stride`` steps.  ``callback(t, x)`` may stop the
    run early by returning True.
    """
    if dt <= 0 or t_final < 0:
        raise ValueError("need dt > 0 and t_final >= 0")
    if method not in ("rk4", "lawson"):
        raise ValueError(f"unknown method {method!r}")
    if initial.storage.size != 4 * space.size:
        raise ValueError("initial state dimension does not match the hierarchy")
    G = generator if generator is not None else build_generator(space, sys, dec)
    step_fn = _rk4_step if method == "rk4" else _lawson_step
    nsteps = int(round(t_final / dt))
    x = initial.storage.astype(complex).copy()
    t0 = initial.time
    times, rhos, states = [t0], [x[:4].copy()], [x.copy()] if keep_states else None

    def one_step(x, h):
        if not adaptive:
            return step_fn(G, x, h)
        full = step_fn(G, x, h)
        half = step_fn(G, step_fn(G, x, 0.5 * h), 0.5 * h)
        if np.max(np.abs(full - half)) <= step_tol or h < dt * 2.0**-12:
            return half
        return one_step(one_step(x, 0.5 * h), 0.5 * h)

    half_factor = None
    if method == "lawson" and not adaptive:
        half_factor = np.exp(-0.5 * dt * G.damping)
    for step in range(1, nsteps + 1):
        if half_factor is not None:
            x = _lawson_step(G, x, dt, half_factor)
        else:
            x = one_step(x, dt)
        t = t0 + step * dt
        if step % stride == 0 or step == nsteps:
            amax = np.max(np.abs(x))
            if not np.isfinite(amax) or amax > bound:
                raise DivergenceError(
                    f"propagation diverged at t = {t:.6g} (max |entry| = {amax:.3e}); "
                    "high-frequency modes may need a smaller time step", t)
            times.append(t)
            rhos.append(x[:4].copy())
            if keep_states:
                states.append(x.copy())
            if callback is not None and callback(t, x):
                nsteps = step
                break
    final = ADOVector(x, t0 + nsteps * dt)
    return Trajectory(np.array(times), np.array(rhos).reshape(-1, 2, 2), final, space,
                      dt, method, nsteps, states)


_CHECKPOINT_MAGIC = b"FPHEOMCK"
_CHECKPOINT_VERSION = 1


def save_checkpoint(path, space: HierarchySpace, state: ADOVector):
    """Flat binary dump: magic, version, K, L, cap, tag length, tag, time, complex128 data."""
    tag = space.ordering_tag.encode()
    header = _CHECKPOINT_MAGIC + struct.pack(
        "<IIIII d", _CHECKPOINT_VERSION, space.K, space.depth, space.truncation.per_mode_cap,
        len(tag), state.time) + tag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.storage, dtype="<c16").tobytes())


def load_checkpoint(path, space: HierarchySpace | None = None):
    """Read a checkpoint; returns ``(meta, ADOVector)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != _CHECKPOINT_MAGIC:
        raise HierarchyError(f"{path}: not a checkpoint file")
    fmt = "<IIIII d"
    version, K, L, cap, ntag, t = struct.unpack_from(fmt, raw, 8)
    if version != _CHECKPOINT_VERSION:
        raise HierarchyError(f"{path}: unsupported checkpoint version {version}")
    off = 8 + struct.calcsize(fmt)
    tag = raw[off: off + ntag].decode()
    data = np.frombuffer(raw[off + ntag:], dtype="<c16").astype(complex)
    meta = {"K": K, "depth": L, "per_mode_cap": cap, "ordering": tag, "time": t}
    if space is not None:
        if (K, L, cap, tag) != (space.K, space.depth, space.truncation.per_mode_cap, space.ordering_tag):
            raise HierarchyError(f"{path}: checkpoint does not match the hierarchy")
        if data.size != 4 * space.size:
            raise HierarchyError(f"{path}: checkpoint has wrong length")
    return meta, ADOVector(data, t)


def bloch(rho) -> tuple[float, float, float]:
    rho = np.asarray(rho)
    return (float(np.trace(SIGMA_X @ rho).real), float(np.trace(SIGMA_Y @ rho).real),
            float(np.trace(SIGMA_Z @ rho).real))


def spin_up() -> np.ndarray:
    return np.array([[1, 0], [0, 0]], dtype=complex)


def initial_rho(name: str) -> np.ndarray:
    name = name.lower()
    if name in ("up", "+z"):
        return spin_up()
    if name in ("down", "-z"):
        return np.array([[0, 0], [0, 1]], dtype=complex)
    if name == "mixed":
        return 0.5 * IDENTITY
    raise ValueError(f"unknown initial state {name!r}")


def estimate_memory_bytes(n_ado: int) -> int:
    return 16 * 4 * n_ado


__all__ = [
    "SIGMA_X", "SIGMA_Y", "SIGMA_Z", "IDENTITY", "SystemSpec", "TruncationSpec",
    "HierarchySpace", "ADOVector", "Generator", "Trajectory", "build_space",
    "build_generator", "apply_generator", "propagate", "factorized_state",
    "count_indices", "save_checkpoint", "load_checkpoint", "BudgetError",
    "DivergenceError", "HierarchyError", "initial_rho", "bloch", "spin_up",
]
