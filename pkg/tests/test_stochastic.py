import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polaron_fk.stochastic import (AffineVectorPotential, CallablePotential, CallableVectorPotential,
                                   CoulombPotential, Domain, PotentialPair, QuadraticPotential, action_S,
                                   coarsen_path, derive_seed, exit_index, export_path_csv, ito_sum,
                                   left_riemann, refine_path, sample_path, sample_paths,
                                   stratonovich_phi, survives, tail_bound, tail_check)

BOX = Domain.box([0, 0], [math.pi, math.pi])
CENTER = np.array([math.pi / 2, math.pi / 2])


def test_sample_path_rejects_bad_dt():
    with pytest.raises(ValueError):
        sample_path(2, 1.0, 0.0, 1, 0)
    with pytest.raises(ValueError):
        sample_path(2, 1.0, 0.3, 1, 0)


def test_single_increment_law():
    ends = np.array([sample_path(2, 0.7, 0.7, 3, i).positions[-1] for i in range(4000)])
    assert ends.shape == (4000, 2)
    assert np.all(np.abs(ends.mean(axis=0)) < 4 * math.sqrt(0.7 / 4000))
    assert np.all(np.abs(ends.var(axis=0) / 0.7 - 1) < 0.1)


@given(st.integers(0, 2 ** 40), st.integers(0, 10 ** 6))
def test_determinism(seed, index):
    a = sample_path(3, 0.1, 0.01, seed, index)
    b = sample_path(3, 0.1, 0.01, seed, index)
    assert np.array_equal(a.increments, b.increments)
    assert np.array_equal(sample_paths(3, 0.1, 0.01, seed, [index]).increments[0], a.increments)


def test_streams_differ():
    a = sample_path(2, 0.1, 0.01, 5, 0).increments
    assert not np.array_equal(a, sample_path(2, 0.1, 0.01, 5, 1).increments)
    assert not np.array_equal(a, sample_path(2, 0.1, 0.01, 6, 0).increments)
    assert derive_seed(5, "a") != derive_seed(5, "b")
    assert derive_seed(5, "a") == derive_seed(5, "a")


def test_clt_mean_band():
    n, t = 100_000, 1.0
    batch = sample_paths(2, t, 0.25, 11, np.arange(n))
    mean = batch.positions[:, -1].mean(axis=0)
    assert np.all(np.abs(mean) <= 4 * math.sqrt(t / n))


def test_exit_index_cases():
    p = sample_path(2, 0.5, 0.01, 1, 0)
    assert exit_index(p, [-1.0, 1.0], BOX) == 0
    assert exit_index(p, [100.0, 100.0], Domain.full(2)) is None
    e = exit_index(p, CENTER, BOX)
    assert e is None or e > 0
    assert bool(survives(p.n_steps + 1, p.n_steps))
    assert not bool(survives(3, 3))


def test_survival_fraction_decreasing():
    batch = sample_paths(2, 1.0, 0.01, 2, np.arange(4000))
    from polaron_fk.stochastic import exit_indices
    e = exit_indices(CENTER + batch.positions, BOX)
    frac = [np.mean(e > int(round(t / 0.01))) for t in (0.1, 0.5, 1.0)]
    assert frac[0] > frac[1] > frac[2]


def test_domains():
    ball = Domain.ball([0, 0], 1.0)
    assert ball.contains([[0.5, 0.5], [1.0, 0.1]]).tolist() == [True, False]
    assert BOX.a_Lambda == 8 and BOX.C_Lambda == 0.25
    assert math.isclose(float(BOX.distance([0, 0], [3, 4])), 5.0)
    with pytest.raises(ValueError):
        Domain.box([0, 0], [1, -1])


def test_phi_constant_field():
    p = sample_path(2, 1.0, 0.01, 4, 0)
    a = np.array([0.3, -1.2])
    A = AffineVectorPotential(a0=tuple(a))
    assert math.isclose(stratonovich_phi(p, [0.1, 0.2], A), float(a @ p.positions[-1]), abs_tol=1e-12)


def test_phi_linear_field_closed_form():
    # for A(x) = x the midpoint sum telescopes to (|y_t|^2 - |x|^2)/2 exactly
    x = np.array([0.4, -0.3])
    A = AffineVectorPotential(A1=((1.0, 0.0), (0.0, 1.0)))
    errs = []
    for dt in (0.01, 0.001):
        p = sample_path(2, 1.0, dt, 7, 0)
        y = x + p.positions[-1]
        errs.append(abs(stratonovich_phi(p, x, A) - 0.5 * (y @ y - x @ x)))
    assert max(errs) < 1e-12


def test_ito_plus_divergence_correction():
    # Phi = Ito sum + (1/2) int div A ds up to O(dt^{1/2}) RMS
    x = np.array([0.2, 0.1])
    A = CallableVectorPotential(lambda y: np.stack([np.sin(y[..., 1]) + y[..., 0] ** 2, y[..., 0] * y[..., 1]], -1),
                                lambda y: 2 * y[..., 0] + y[..., 0])
    rms = []
    for dt in (0.01, 0.0025):
        batch = sample_paths(2, 1.0, dt, 8, np.arange(200))
        phi = stratonovich_phi(batch, x, A)
        ito = ito_sum(batch, x, A) + 0.5 * left_riemann(batch, x, A.div)
        rms.append(math.sqrt(np.mean((phi - ito) ** 2)))
    assert rms[1] < rms[0]
    assert rms[1] < 3 * math.sqrt(0.0025)


def test_action_examples():
    p = sample_path(2, 0.5, 0.01, 9, 0)
    one = PotentialPair(QuadraticPotential(c0=1.0), AffineVectorPotential())
    S, ok = action_S(p, [0.0, 0.0], one, Domain.full(2))
    assert ok and math.isclose(S.real, 0.5) and S.imag == 0
    a = (0.5, 2.0)
    S, ok = action_S(p, [0.0, 0.0], PotentialPair(QuadraticPotential(), AffineVectorPotential(a0=a)),
                     Domain.full(2))
    assert np.isclose(S, -1j * float(np.dot(a, p.positions[-1])), atol=1e-12)
    S, ok = action_S(p, [-1.0, 1.0], one, BOX)
    assert S == 0 and not ok


def test_action_quadratic_potential_converges():
    # fine refined path gives the reference; the left sum error shrinks like dt
    V = QuadraticPotential(c2=((1.0, 0.0), (0.0, 1.0)))
    pot = PotentialPair(V, AffineVectorPotential())
    coarse = sample_path(2, 0.5, 0.01, 10, 0)
    fine = refine_path(coarse, 64, 10, 0)
    ref = 0.5 * (action_S(fine, CENTER, pot, Domain.full(2))[0]
                 + action_S(refine_path(fine, 2, 10, 0, level=1), CENTER, pot, Domain.full(2))[0])
    errs = [abs(action_S(coarsen_path(fine, f), CENTER, pot, Domain.full(2))[0] - ref) for f in (64, 16, 4)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] < 0.05


def test_coulomb_coincidence_flagged():
    V = CoulombPotential(nu=2, m=1)
    p = sample_path(2, 0.1, 0.01, 1, 0)
    S, ok = action_S(p, [0.0, 0.0], PotentialPair(V, AffineVectorPotential()), Domain.full(2))
    assert not ok and S == 0
    S, ok = action_S(p, [0.0, 1.0], PotentialPair(V, AffineVectorPotential()), Domain.full(2))
    assert ok and S.real > 0


def test_callable_potential():
    V = CallablePotential(lambda y: y[..., 0])
    assert np.allclose(V(np.array([[1.0, 2.0], [3.0, 4.0]])), [1.0, 3.0])


def test_tail_bound_at_zero_radius():
    rows = tail_check(BOX, CENTER, 0.5, [0.0], 2000, 0.01, 3)
    assert rows[0]["empirical"] <= 1 <= rows[0]["bound"]


def test_tail_full_space():
    rows = tail_check(Domain.full(2), np.zeros(2), 1.0, [1.0, 2.0, 3.0], 20_000, 0.25, 4)
    for r in rows:
        assert r["empirical"] <= 8 * math.exp(-r["r"] ** 2 / 4)
        assert math.isclose(r["bound"], float(tail_bound(Domain.full(2), 1.0, r["r"])))
    # the Gaussian tail itself is exp(-r^2/2)
    assert abs(rows[0]["empirical"] - math.exp(-0.5)) < 4 * rows[0]["stderr"] + 1e-3


def test_tail_box():
    rows = tail_check(BOX, CENTER, 1.0, [0.5, 1.0, 1.5], 10_000, 0.01, 5)
    assert all(r["passed"] for r in rows)


def test_refinement_preserves_coarse_points():
    p = sample_path(2, 0.3, 0.01, 12, 3)
    f = refine_path(p, 4, 12, 3)
    assert f.n_steps == 4 * p.n_steps
    assert np.allclose(f.positions[::4], p.positions, atol=1e-13)
    assert np.allclose(coarsen_path(f, 4).positions, p.positions, atol=1e-13)


def test_refinement_exit_monotone():
    x = np.array([0.3, 1.5])
    for i in range(50):
        p = sample_path(2, 0.5, 0.02, 13, i)
        e_coarse = exit_index(p, x, BOX)
        f = refine_path(p, 8, 13, i)
        e_fine = exit_index(f, x, BOX)
        t_coarse = math.inf if e_coarse is None else e_coarse * p.dt
        t_fine = math.inf if e_fine is None else e_fine * f.dt
        assert t_fine <= t_coarse + 1e-12


def test_phi_discretization_order():
    # RMS of Phi(dt) - Phi(dt/4) on the same noise falls by at least 1.5 per quarter step
    x = np.array([0.3, 0.2])
    A = CallableVectorPotential(lambda y: np.stack([np.sin(2 * y[..., 1]), np.cos(y[..., 0]) * y[..., 0]], -1))
    finest = [refine_path(sample_path(2, 1.0, 1 / 16, 14, i), 64, 14, i) for i in range(200)]

    def phi(f):
        return np.array([stratonovich_phi(coarsen_path(p, f), x, A) for p in finest])

    d1 = math.sqrt(np.mean((phi(64) - phi(16)) ** 2))
    d2 = math.sqrt(np.mean((phi(16) - phi(4)) ** 2))
    assert d1 / d2 >= 1.5


def test_export_csv(tmp_path):
    p = sample_path(2, 0.03, 0.01, 1, 0)
    export_path_csv(p, [1.0, 2.0], tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,y1,y2" and len(lines) == 5
    assert lines[1] == "0.0,1.0,2.0"
