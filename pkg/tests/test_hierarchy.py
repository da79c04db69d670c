import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpheom.hierarchy import (IDENTITY, SIGMA_X, SIGMA_Z, ADOVector, BudgetError, DivergenceError,
                              HierarchyError, SystemSpec, TruncationSpec, apply_generator,
                              build_generator, build_space, count_indices, factorized_state,
                              initial_rho, load_checkpoint, propagate, save_checkpoint, spin_up)
from fpheom.polefit import ExponentialDecomposition


def random_state(space, rng):
    return ADOVector(rng.normal(size=4 * space.size) + 1j * rng.normal(size=4 * space.size))


def brute_count(K, L, cap):
    return sum(1 for v in itertools.product(range(cap + 1), repeat=2 * K) if sum(v) <= L)


@pytest.mark.parametrize("K,L,expected", [(2, 2, 15), (1, 1, 3), (31, 2, 2016)])
def test_index_counts(K, L, expected):
    assert build_space(K, TruncationSpec(L)).size == expected


def test_binomial_identity():
    for K, L in [(1, 4), (3, 3), (5, 2)]:
        assert count_indices(2 * K, L, L) == math.comb(2 * K + L, L)


@given(st.integers(1, 3), st.integers(0, 4), st.data())
def test_count_matches_brute_force(K, L, data):
    cap = data.draw(st.integers(1, max(L, 1))) if L else 0
    trunc = TruncationSpec(L, cap if L else None)
    space = build_space(K, trunc)
    assert space.size == brute_count(K, L, trunc.per_mode_cap)
    assert np.unique(space.indices, axis=0).shape[0] == space.size


def test_single_mode_enumeration():
    sp = build_space(1, TruncationSpec(1))
    assert sp.indices.tolist() == [[0, 0], [1, 0], [0, 1]]


def test_graded_order():
    sp = build_space(2, TruncationSpec(3))
    levels = sp.indices.sum(axis=1)
    assert np.all(np.diff(levels) >= 0)
    assert not sp.indices[0].any()


def test_per_mode_cap():
    sp = build_space(2, TruncationSpec(4, 1))
    assert sp.indices.max() == 1
    assert sp.size == sum(math.comb(4, j) for j in range(5))


@pytest.mark.parametrize("K", [1, 2, 3])
@pytest.mark.parametrize("L", [1, 2, 3])
def test_neighbour_tables_exhaustive(K, L):
    sp = build_space(K, TruncationSpec(L))
    for s in range(2 * K):
        for i in range(sp.size):
            j = sp.raise_table[i, s]
            if j >= 0:
                expect = sp.indices[i].copy()
                expect[s] += 1
                assert np.array_equal(sp.indices[j], expect)
                assert sp.lower_table[j, s] == i
            else:
                assert sp.indices[i].sum() == L
            k = sp.lower_table[i, s]
            if k >= 0:
                assert sp.raise_table[k, s] == i
            else:
                assert sp.indices[i, s] == 0


def test_budget_refusal():
    with pytest.raises(BudgetError) as info:
        build_space(31, TruncationSpec(4), budget=10_000)
    assert info.value.estimate == math.comb(66, 4)


def test_truncation_validated():
    with pytest.raises(ValueError):
        TruncationSpec(-1)
    with pytest.raises(ValueError):
        TruncationSpec(2, 3)


def test_system_spec_rejects_non_hermitian():
    with pytest.raises(ValueError):
        SystemSpec(coupling_op=np.array([[0, 1], [0, 0]]))


def hand_generator(sys, d, z):
    """Twelve-by-twelve generator for one mode at depth one, column by column."""
    H, Q = sys.hamiltonian, sys.coupling_op
    sd, sdc = np.sqrt(complex(d)), np.sqrt(np.conj(complex(d)))
    G = np.zeros((12, 12), complex)
    for col in range(12):
        x = np.zeros(12, complex)
        x[col] = 1.0
        r0, r1, r2 = x[:4].reshape(2, 2), x[4:8].reshape(2, 2), x[8:].reshape(2, 2)
        comm = lambda A, B: A @ B - B @ A  # noqa: E731
        d0 = -1j * comm(H, r0) - 1j * sd * comm(Q, r1) - 1j * sdc * comm(Q, r2)
        d1 = -1j * comm(H, r1) - z * r1 - 1j * sd * Q @ r0
        d2 = -1j * comm(H, r2) - np.conj(z) * r2 + 1j * sdc * r0 @ Q
        G[:, col] = np.concatenate([d0.ravel(), d1.ravel(), d2.ravel()])
    return G


@pytest.mark.parametrize("d,z", [(0.3, 0.5 + 2j), (0.2 - 0.1j, 1.5 - 0.7j), (-0.05 + 0.02j, 3.0)])
def test_generator_matches_hand_assembly(d, z):
    sys = SystemSpec(0.7, 1.3)
    sp = build_space(1, TruncationSpec(1))
    G = build_generator(sp, sys, ExponentialDecomposition([d], [z])).matrix.toarray()
    assert np.allclose(G, hand_generator(sys, d, z), atol=1e-14)


def test_decoupled_generator(rng):
    sys = SystemSpec(0.4, 1.0)
    sp = build_space(2, TruncationSpec(2))
    dec = ExponentialDecomposition([0.0, 0.0], [1.0 + 1j, 2.0])
    x = random_state(sp, rng)
    dx = apply_generator(sp, sys, dec, x)
    H = sys.hamiltonian
    for i in range(sp.size):
        r = x.block(i)
        m, n = sp.indices[i, :2], sp.indices[i, 2:]
        damp = m @ dec.z + n @ np.conj(dec.z)
        assert np.allclose(dx.block(i), -1j * (H @ r - r @ H) - damp * r, atol=1e-13)


@given(st.integers(0, 2**32 - 1))
def test_physical_trace_conserved(seed):
    rng = np.random.default_rng(seed)
    sp = build_space(2, TruncationSpec(2))
    dec = ExponentialDecomposition(rng.normal(size=2) + 1j * rng.normal(size=2),
                                   rng.uniform(0.1, 3, 2) + 1j * rng.normal(size=2))
    dx = apply_generator(sp, SystemSpec(rng.normal(), rng.normal()), dec, random_state(sp, rng))
    assert abs(np.trace(dx.block(0))) < 1e-12


@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_generator_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    sp = build_space(2, TruncationSpec(3))
    dec = ExponentialDecomposition([0.2 + 0.1j, 0.05], [1.0 + 2j, 0.5 - 1j])
    sys = SystemSpec(0.3, 1.0)
    G = build_generator(sp, sys, dec)
    x, y = random_state(sp, rng).storage, random_state(sp, rng).storage
    lhs, rhs = G(a * x + b * y), a * G(x) + b * G(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, np.max(np.abs(rhs)))


def test_dimension_mismatch():
    sp = build_space(1, TruncationSpec(1))
    with pytest.raises(ValueError):
        build_generator(sp, SystemSpec(), ExponentialDecomposition([0.1, 0.1], [1.0, 2.0]))
    with pytest.raises(ValueError):
        apply_generator(sp, SystemSpec(), ExponentialDecomposition([0.1], [1.0]), ADOVector(np.zeros(8, complex)))


@pytest.mark.parametrize("method", ["rk4", "lawson"])
def test_bare_rabi(method):
    sp = build_space(1, TruncationSpec(1))
    dec = ExponentialDecomposition([0.0], [1.0])
    tr = propagate(sp, SystemSpec(0.0, 1.0), dec, factorized_state(sp, spin_up()), 20.0, 0.005,
                   stride=20, method=method)
    assert np.max(np.abs(tr.expectation(SIGMA_Z) - np.cos(2 * tr.times))) < 1e-8
    assert tr.times[-1] == pytest.approx(20.0)


@pytest.mark.parametrize("method", ["rk4", "lawson"])
def test_fourth_order(method):
    sp = build_space(1, TruncationSpec(4))
    dec = ExponentialDecomposition([0.1], [0.8 + 1.5j])
    sys = SystemSpec(0.5, 1.0)
    x0 = factorized_state(sp, spin_up())

    def final(dt):
        return propagate(sp, sys, dec, x0, 4.0, dt, stride=10**6, method=method).final.rho

    ref = final(0.0125)
    e1 = np.max(np.abs(final(0.2) - ref))
    e2 = np.max(np.abs(final(0.1) - ref))
    assert 12 < e1 / e2 < 20


def test_adaptive_agrees_with_fixed():
    sp = build_space(1, TruncationSpec(4))
    dec = ExponentialDecomposition([0.1], [0.8 + 1.5j])
    x0 = factorized_state(sp, spin_up())
    a = propagate(sp, SystemSpec(), dec, x0, 5.0, 0.1, method="rk4", adaptive=True, step_tol=1e-12)
    b = propagate(sp, SystemSpec(), dec, x0, 5.0, 0.001, method="rk4")
    assert np.allclose(a.rho[-1], b.rho[-1], atol=1e-9)


def test_divergence_detected():
    sp = build_space(1, TruncationSpec(2))
    dec = ExponentialDecomposition([0.1], [300.0 + 50j])
    with pytest.raises(DivergenceError) as info:
        propagate(sp, SystemSpec(), dec, factorized_state(sp, spin_up()), 5.0, 0.05, stride=1, method="rk4")
    assert 0 < info.value.time <= 5.0
    # the integrating-factor scheme handles the same stiff mode
    propagate(sp, SystemSpec(), dec, factorized_state(sp, spin_up()), 5.0, 0.05, stride=1)


def test_trace_and_hermiticity_preserved():
    sp = build_space(2, TruncationSpec(4))
    dec = ExponentialDecomposition([0.05 + 0.01j, 0.03], [0.5 + 2j, 1.0 - 0.5j])
    tr = propagate(sp, SystemSpec(0.5, 1.0), dec, factorized_state(sp, initial_rho("up")), 20.0, 0.01)
    assert tr.trace_residual.max() < 1e-10
    assert tr.hermiticity_residual.max() < 1e-10


def test_callback_stops_early():
    sp = build_space(1, TruncationSpec(1))
    dec = ExponentialDecomposition([0.0], [1.0])
    tr = propagate(sp, SystemSpec(), dec, factorized_state(sp, spin_up()), 10.0, 0.01, stride=10,
                   callback=lambda t, x: t >= 2.0)
    assert tr.final.time == pytest.approx(2.0)


def test_factorized_state_validated():
    sp = build_space(1, TruncationSpec(1))
    with pytest.raises(ValueError):
        factorized_state(sp, 2 * IDENTITY)
    with pytest.raises(ValueError):
        factorized_state(sp, np.array([[0.5, 1], [0, 0.5]]))


def test_checkpoint_round_trip(tmp_path, rng):
    sp = build_space(2, TruncationSpec(2))
    x = random_state(sp, rng)
    x.time = 3.25
    save_checkpoint(tmp_path / "c.bin", sp, x)
    meta, y = load_checkpoint(tmp_path / "c.bin", sp)
    assert np.array_equal(x.storage, y.storage) and y.time == 3.25
    assert meta["K"] == 2 and meta["depth"] == 2 and meta["ordering"] == sp.ordering_tag
    with pytest.raises(HierarchyError):
        load_checkpoint(tmp_path / "c.bin", build_space(2, TruncationSpec(3)))


def test_ground_state():
    rho = SystemSpec(0.0, 1.0).ground_state()
    assert np.trace(SIGMA_X @ rho).real == pytest.approx(-1.0)
