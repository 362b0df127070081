import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polaron_fk.fock import (FockBasisTooLarge, F_lipschitz_bound, F_norm_bound, F_series, ModeSet,
                             W_norm_bound, W_norm_full, annihilation_op, apply_W_adjoint, assemble_W,
                             build_fock_basis, creation_op, dump_basis_csv, dump_operator_csv, exp_vector,
                             exp_vector_inner, field_op, load_basis_csv, load_operator_csv, number_op)

from conftest import random_complex


def test_basis_ordering_small():
    b = build_fock_basis(2, 2)
    assert b.dim == 6
    assert [tuple(s) for s in b.states] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert b.index[(0, 0)] == 0


def test_basis_trivial_cases():
    assert build_fock_basis(1, 0).dim == 1
    assert build_fock_basis(3, 2).dim == 10


@given(st.integers(1, 5), st.integers(0, 4))
def test_basis_dimension_and_bijection(M, N):
    b = build_fock_basis(M, N)
    assert b.dim == comb(M + N, N)
    assert sorted(b.index.values()) == list(range(b.dim))
    assert all(b.index[tuple(s)] == i for i, s in enumerate(b.states))


def test_basis_rejects_bad_input():
    with pytest.raises(ValueError):
        build_fock_basis(0, 2)
    with pytest.raises(FockBasisTooLarge):
        build_fock_basis(30, 6, cap=1000)


def test_mode_set_validation():
    assert ModeSet(np.array([1.0, 2.5])).M == 2
    with pytest.raises(ValueError):
        ModeSet(np.array([-1.0]))


def test_single_mode_ladder():
    b = build_fock_basis(1, 2)
    a = annihilation_op(b, [1.0])
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    expected[1, 2] = math.sqrt(2)
    assert np.array_equal(a, expected)


def test_number_operator_diagonal():
    b = build_fock_basis(2, 2)
    assert np.array_equal(np.diag(number_op(b)).real, [0, 1, 1, 2, 2, 2])


@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_creation_is_exact_adjoint(M, N, seed):
    rng = np.random.default_rng(seed)
    b = build_fock_basis(M, N)
    h = random_complex(rng, M)
    assert np.array_equal(creation_op(b, h), annihilation_op(b, h).conj().T)
    phi = field_op(b, h)
    assert np.array_equal(phi, phi.conj().T)


def test_annihilation_on_exponential_vector(rng):
    b = build_fock_basis(3, 4)
    h, f = random_complex(rng, 3), 0.5 * random_complex(rng, 3)
    eps = exp_vector(b, f)
    lhs = annihilation_op(b, h) @ eps
    keep = b.levels < b.N_max          # the top level has no partner after annihilation
    assert np.allclose(lhs[keep], (np.vdot(h, f) * eps)[keep], atol=1e-13)


def test_exp_vector_values():
    b = build_fock_basis(1, 2)
    c = 0.7 - 0.2j
    assert np.allclose(exp_vector(b, [c]), [1, c, c * c / math.sqrt(2)])
    vac = exp_vector(build_fock_basis(3, 2), np.zeros(3))
    assert vac[0] == 1 and np.all(vac[1:] == 0)


def test_exp_vector_inner_truncated_series(rng):
    b = build_fock_basis(3, 3)
    f, g = random_complex(rng, 3), random_complex(rng, 3)
    direct = np.vdot(exp_vector(b, f), exp_vector(b, g))
    s = np.vdot(f, g)
    assert np.isclose(direct, sum(s ** n / math.factorial(n) for n in range(4)))
    assert np.isclose(direct, exp_vector_inner(f, g, 3))


def test_commutator_on_interior(rng):
    b = build_fock_basis(3, 3)
    f, g = random_complex(rng, 3), random_complex(rng, 3)
    psi = random_complex(rng, b.dim)
    psi[b.levels > b.N_max - 1] = 0
    comm = annihilation_op(b, f) @ creation_op(b, g) - creation_op(b, g) @ annihilation_op(b, f)
    assert np.allclose(comm @ psi, np.vdot(f, g) * psi, atol=1e-12)


@given(st.integers(0, 2 ** 31))
def test_relative_bounds(seed):
    rng = np.random.default_rng(seed)
    b = build_fock_basis(3, 3)
    f = random_complex(rng, 3)
    psi = random_complex(rng, b.dim)
    nf = np.linalg.norm(f)
    N = b.levels
    assert np.linalg.norm(annihilation_op(b, f) @ psi) <= nf * np.linalg.norm(np.sqrt(N) * psi) * (1 + 1e-12)
    # with phi = a + a^dagger the triangle inequality gives the constant 2
    assert np.linalg.norm(field_op(b, f) @ psi) <= 2 * nf * np.linalg.norm(np.sqrt(N + 1) * psi) * (1 + 1e-12)
    form = abs(np.vdot(psi, field_op(b, f) @ psi))
    assert form <= 2 * nf * np.linalg.norm(np.sqrt(N) * psi) * np.linalg.norm(psi) * (1 + 1e-12)


def test_field_bound_sqrt2_counterexample():
    # (|0> + |2>)/sqrt2: ||phi psi||^2 = 3 + sqrt2 exceeds 2 ||(N+1)^{1/2} psi||^2 = 4
    b = build_fock_basis(1, 3)
    psi = np.array([1, 0, 1, 0]) / math.sqrt(2)
    lhs = np.linalg.norm(field_op(b, [1.0]) @ psi)
    rhs = math.sqrt(2) * np.linalg.norm(np.sqrt(b.levels + 1) * psi)
    assert math.isclose(lhs ** 2, 3 + math.sqrt(2))
    assert lhs > rhs


def test_F_series_zero_argument():
    b = build_fock_basis(2, 3)
    assert np.allclose(F_series(b, 0.7, np.zeros(2)), np.diag(np.exp(-0.7 * b.levels)))
    with pytest.raises(ValueError):
        F_series(b, 0.0, np.zeros(2))


def test_F_series_maps_exponential_vectors(rng):
    b = build_fock_basis(2, 6)
    h, f = 0.3 * random_complex(rng, 2), 0.4 * random_complex(rng, 2)
    t = 0.8
    out = F_series(b, t, h) @ exp_vector(b, f)
    # a^dagger(h)^n e^{-tN} eps(f) stays inside the truncation exactly, level by level
    assert np.allclose(out, exp_vector(b, math.exp(-t) * f + h), atol=1e-12)


def test_F_norm_bound_single_mode():
    b = build_fock_basis(1, 8)
    h = np.array([0.5])
    bound = F_norm_bound(1.0, 0.5)
    assert math.isclose(bound, math.sqrt(2) * math.exp(2.0))
    assert np.linalg.norm(F_series(b, 1.0, h), 2) <= bound


@given(st.floats(0.05, 3.0), st.integers(0, 2 ** 31))
def test_F_bounds_random(t, seed):
    rng = np.random.default_rng(seed)
    b = build_fock_basis(2, 4)
    h, hp = 0.6 * random_complex(rng, 2), 0.6 * random_complex(rng, 2)
    F, Fp = F_series(b, t, h), F_series(b, t, hp)
    assert np.linalg.norm(F, 2) <= F_norm_bound(t, np.linalg.norm(h))
    lip = F_lipschitz_bound(t, np.linalg.norm(h), np.linalg.norm(hp), np.linalg.norm(h - hp))
    assert np.linalg.norm(F - Fp, 2) <= lip


def test_truncation_convergence_is_monotone(rng):
    h, f = 0.5 * random_complex(rng, 2), 0.5 * random_complex(rng, 2)
    diffs = []
    prev = None
    for N in range(3, 8):
        b = build_fock_basis(2, N)
        v = F_series(b, 0.5, h) @ exp_vector(b, f)
        if prev is not None:
            pad = np.zeros(b.dim, dtype=complex)
            pad[:prev.size] = prev
            diffs.append(np.linalg.norm(v - pad))
        prev = v
    assert all(d1 > d2 for d1, d2 in zip(diffs, diffs[1:]))


def test_assemble_W_trivial_cases():
    b = build_fock_basis(2, 3)
    assert np.allclose(assemble_W(b, 1.0, 0.0, np.zeros(2), np.zeros(2)), np.diag(np.exp(-b.levels)))
    assert np.array_equal(assemble_W(b, 0.0, 0.3, np.ones(2), np.ones(2)), np.eye(b.dim))


def test_W_adjoint_on_exponential_vector(rng):
    b = build_fock_basis(2, 10)
    t, u = 0.6, 0.2 - 0.1j
    Up, Um, f = 0.2 * random_complex(rng, 2), 0.2 * random_complex(rng, 2), 0.2 * random_complex(rng, 2)
    lhs = assemble_W(b, t, u, Up, Um).conj().T @ exp_vector(b, f)
    rhs = np.exp(np.conj(u) - np.vdot(Up, f)) * exp_vector(b, math.exp(-t) * f - Um)
    low = b.levels <= 4
    assert np.allclose(lhs[low], rhs[low], atol=1e-8)


def test_batched_W_adjoint_matches_dense(rng):
    b = build_fock_basis(3, 2)
    t = 0.4
    u = random_complex(rng, 5)
    Up, Um, psi = random_complex(rng, 5, 3), random_complex(rng, 5, 3), random_complex(rng, 5, b.dim)
    fast = apply_W_adjoint(b, t, u, Up, Um, psi)
    for p in range(5):
        dense = assemble_W(b, t, u[p], Up[p], Um[p]).conj().T @ psi[p]
        assert np.allclose(fast[p], dense, atol=1e-12)


@given(st.floats(0.1, 2.0), st.integers(0, 2 ** 31))
def test_W_norm_bound(t, seed):
    rng = np.random.default_rng(seed)
    b = build_fock_basis(2, 4)
    u = complex(rng.normal(), rng.normal())
    Up, Um = 0.5 * random_complex(rng, 2), 0.5 * random_complex(rng, 2)
    nW = np.linalg.norm(assemble_W(b, t, u, Up, Um), 2)
    assert nW <= W_norm_bound(t, u, np.linalg.norm(Up), np.linalg.norm(Um))
    assert W_norm_full(t, u, Up, Um) <= W_norm_bound(t, u, np.linalg.norm(Up), np.linalg.norm(Um))


def test_full_space_norm_dominates_truncation(rng):
    Up, Um = 0.4 * random_complex(rng, 3), 0.4 * random_complex(rng, 3)
    b = build_fock_basis(3, 3)
    trunc = np.linalg.norm(assemble_W(b, 0.5, 0.0, Up, Um), 2)
    assert W_norm_full(0.5, 0.0, Up, Um) >= trunc * (1 - 1e-9)


def test_csv_roundtrip(tmp_path, rng):
    b = build_fock_basis(3, 2)
    dump_basis_csv(b, tmp_path / "basis.csv")
    b2 = load_basis_csv(tmp_path / "basis.csv")
    assert [tuple(s) for s in b2.states] == [tuple(s) for s in b.states]
    op = field_op(b, random_complex(rng, 3))
    dump_operator_csv(op, tmp_path / "op.csv")
    assert np.array_equal(load_operator_csv(tmp_path / "op.csv"), op)
