import math

import numpy as np
import pytest

from polaron_fk.coupling import ConfinedCoupling, CouplingModel, FroehlichCoupling, g_sigma
from polaron_fk.fock import ModeSet
from polaron_fk.processes import (U_reg, U_sigma, cutoff_convergence, feynman_action_R3, feynman_action_confined,
                                  feynman_cutoff_kernel, identity_study, martingale_M, moment_scan,
                                  plateau_verdicts, regular_pass, renormalized_pass, u_reg, u_reg_double_sum,
                                  u_sigma)
from polaron_fk.stochastic import BrownianPath, Domain, sample_path, sample_paths

from conftest import ConstantModes

SQUARE = (math.pi, math.pi)
X0 = np.array([1.5, 1.4])


class QuadraticMode(CouplingModel):
    """One mode with v(x) = c x_1^2 / 2, so the gradient is (c x_1, 0)."""

    def __init__(self, c=1.0, lam=3.0):
        self.c = c
        self.d, self.nu = 2, 1
        self.domain = Domain.full(2)
        self.mode_set = ModeSet(np.array([lam]))

    def _v(self, x):
        return (0.5 * self.c * x[..., 0] ** 2)[..., None].astype(complex)

    def _grad_v(self, x):
        g = np.zeros(x.shape[:-1] + (2, 1), dtype=complex)
        g[..., 0, 0] = self.c * x[..., 0]
        return g


@pytest.fixture(scope="module")
def confined():
    return ConfinedCoupling(L=SQUARE, modes=ConfinedCoupling.lowest_modes(SQUARE, 10), g=0.7)


def test_U_reg_constant_theta():
    h = np.array([0.4 - 0.2j, 1.1])
    m = ConstantModes(h, [1.0, 3.0], d=2)
    t = 1.0
    for dt in (0.01, 0.001):
        p = sample_path(2, t, dt, 1, 0)
        Um, Up = U_reg(m, p, [0.0, 0.0])
        assert np.allclose(Um.values[-1], (1 - math.exp(-t)) * h, atol=dt)
        exact = h * dt * (1 - math.exp(-t)) / (1 - math.exp(-dt))
        assert np.allclose(Um.values[-1], exact, atol=1e-13)
        # the bound sup|theta|(1 - e^{-t}) is attained as dt -> 0
        ratio = np.linalg.norm(Um.values[-1]) / (np.linalg.norm(h) * (1 - math.exp(-t)))
        assert 1 <= ratio <= 1 + dt
        assert np.allclose(Up.values[-1], Um.values[-1] * math.exp(-dt), atol=1e-13)


def test_u_reg_constant_theta():
    h = np.array([0.4 - 0.2j, 1.1])
    m = ConstantModes(h, [1.0, 3.0], d=2)
    t = 0.8
    for dt in (0.01, 0.001):
        u = u_reg(m, sample_path(2, t, dt, 1, 0), [0.0, 0.0]).values[-1]
        closed = np.vdot(h, h).real * (t - 1 + math.exp(-t))
        assert abs(u - closed) <= 2 * np.vdot(h, h).real * dt
        assert abs(u) <= t * np.vdot(h, h).real


def test_zero_coupling_gives_zero(confined):
    zero = ConfinedCoupling(L=SQUARE, modes=confined.modes, g=0.0)
    p = sample_path(2, 0.3, 0.01, 2, 0)
    Um, Up = U_reg(zero, p, X0)
    assert np.all(Um.values == 0) and np.all(Up.values == 0)
    Sm, Sp = U_sigma(zero, 2.0, p, X0)
    assert np.all(Sm.values == 0) and np.all(Sp.values == 0)
    assert np.all(u_sigma(zero, 2.0, p, X0).values == 0)


def test_one_pass_matches_double_sum(confined):
    for i in range(5):
        p = sample_path(2, 0.5, 0.005, 3, i)
        one = u_reg(confined, p, X0).values[-1]
        two = u_reg_double_sum(confined, p, X0)
        assert abs(one - two) <= 1e-10 * abs(two)


def test_u_reg_bound(confined):
    t = 0.5
    p = sample_path(2, t, 0.01, 4, 0)
    sup2 = np.max(np.sum(np.abs(confined.v(confined.default_x_grid())) ** 2, axis=-1))
    assert abs(u_reg(confined, p, X0).values[-1]) <= t * sup2


def test_martingale_vanishes_for_constant_coupling():
    m = ConstantModes([1.0, 0.5], [3.0, 5.0], d=2)
    Mm, Mp = martingale_M(m, 2.0, sample_path(2, 0.2, 0.01, 5, 0), [0.0, 0.0])
    assert np.all(Mm.values == 0) and np.all(Mp.values == 0)


def test_martingale_linear_gradient_scalar_reference():
    m = QuadraticMode(c=0.8, lam=3.0)
    x = np.array([0.3, -0.1])
    p = sample_path(2, 0.4, 0.01, 6, 0)
    Mm, Mp = martingale_M(m, 2.0, p, x)
    pos = x + p.positions
    ref_m, ref_p = 0.0, 0.0
    for i in range(p.n_steps):
        ti = i * p.dt
        ref_m += math.exp(-ti) * 0.8 * pos[i, 0] / 4.0 * p.increments[i, 0]
        ref_p += math.exp(ti) * 0.8 * pos[i, 0] / 2.0 * p.increments[i, 0]
    assert abs(Mm.values[-1][0] - ref_m) < 1e-13
    assert abs(Mp.values[-1][0] - ref_p) < 1e-13


def test_martingale_mean_and_isometry(confined):
    t, dt, n = 0.5, 0.01, 10_000
    batch = sample_paths(2, t, dt, 7, np.arange(n))
    b = renormalized_pass(confined, 2.0, batch, X0, record=[batch.n_steps], keep_parts=True)
    Mm, Mp = b.parts["M_minus"][:, 0], b.parts["M_plus"][:, 0]
    for M in (Mm, Mp):
        mean = M.mean(axis=0)
        se = M.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean.real) <= 3 * se.real + 1e-15)
    # Ito isometry on the same paths: E|e^{-t} M+_t|^2 = E int e^{-2(t-s)} |alpha+(b_s)|^2 ds
    fp = 1.0 / np.where(confined.lam >= 2.0, confined.lam - 1.0, np.inf)
    lhs = np.sum(np.abs(math.exp(-t) * Mp) ** 2, axis=-1)
    pos = X0 + batch.positions[:, :-1]
    a2 = np.sum(np.abs(confined.grad_v(pos) * fp) ** 2, axis=(-2, -1))
    times = dt * np.arange(batch.n_steps)
    rhs = np.sum(np.exp(-2 * (t - times)) * a2, axis=-1) * dt
    diff = lhs - rhs
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / math.sqrt(n)


def test_boundedness_relay(confined):
    t = 0.5
    batch = sample_paths(2, t, 0.01, 8, np.arange(200))
    sigma = 2.0
    b = renormalized_pass(confined, sigma, batch, X0, record=[batch.n_steps], keep_parts=True)
    r = regular_pass(confined.below(sigma), batch, X0, record=[batch.n_steps])
    gs = g_sigma(confined, sigma, x_grid=np.concatenate([confined.default_x_grid(), X0 + batch.positions[:, -1]]))
    dist = np.linalg.norm(batch.positions[:, -1], axis=-1)
    alive = b.alive[:, 0]
    for U, Ur, M in ((b.U_minus, r.U_minus, b.parts["M_minus"]), (b.U_plus, r.U_plus, b.parts["M_plus"])):
        scale = 1.0 if U is b.U_minus else math.exp(-t)
        lhs = np.linalg.norm(U[:, 0], axis=-1)
        rhs = np.linalg.norm(Ur[:, 0], axis=-1) + 2 * gs * (1 + dist) + scale * np.linalg.norm(M[:, 0], axis=-1)
        assert np.all(lhs[alive] <= rhs[alive] * (1 + 1e-12))


def test_u_sigma_real_for_confined(confined):
    batch = sample_paths(2, 0.5, 0.01, 9, np.arange(50))
    for sigma in (2.0, 4.0):
        b = renormalized_pass(confined, sigma, batch, X0)
        assert np.max(np.abs(b.u.imag)) <= 1e-12


def test_identity_study_rates(confined):
    rows, slopes, verdict = identity_study(confined, 0.5, X0, (1e-2, 1e-3, 1e-4), 20, 10)
    assert verdict == "pass"
    assert np.all(slopes >= 0.4)
    assert len(rows) == 4 * 4


def test_u_sigma_agrees_with_u_reg_on_fine_grid(confined):
    p = sample_path(2, 0.5, 1e-4, 11, 0)
    ur = u_reg(confined, p, X0)
    us = u_sigma(confined, 4.0, p, X0)
    ok = ur.valid
    assert np.max(np.abs(ur.values[ok] - us.values[ok])) < 5e-3


def test_feynman_zero_coupling(confined):
    p = sample_path(6, 0.2, 0.02, 1, 0)
    assert feynman_action_R3(p, np.zeros(6), 0.0) == 0.0
    zero = ConfinedCoupling(L=SQUARE, modes=confined.modes, g=0.0)
    assert feynman_action_confined(sample_path(2, 0.2, 0.02, 1, 0), X0, zero)[0] == 0.0


def test_feynman_frozen_path_closed_form():
    t, dt, R = 0.5, 0.01, 1.5
    frozen = BrownianPath(dt, np.zeros((int(t / dt), 6)))
    x = np.array([0, 0, 0, R, 0, 0.0])
    for g in (1.0, 0.3):
        val = feynman_action_R3(frozen, x, g, rule="cell", pairs="cross")
        closed = 2 * 2 * g * g * (t - 1 + math.exp(-t)) / (4 * math.pi * R)
        assert abs(val - closed) <= 1e-6 * closed


def test_feynman_confined_all_modes_equals_u_reg(confined):
    for i in range(4):
        p = sample_path(2, 0.5, 0.005, 12, i)
        u = u_reg(confined, p, X0)
        val, ok = feynman_action_confined(p, X0, confined)
        if ok:
            assert abs(val - u.values[-1].real) <= 1e-8 * abs(val)
        else:
            assert not u.valid[-1]


def test_feynman_exit_is_invalid(confined):
    p = sample_path(2, 0.2, 0.01, 1, 0)
    assert feynman_action_confined(p, [-1.0, 1.0], confined) == (0.0, False)


def test_froehlich_cutoff_kernel_limit():
    r = np.array([0.5, 1.0, 2.0])
    assert np.allclose(feynman_cutoff_kernel(1e6, r), 1 / (2 * math.pi * r), rtol=1e-5)


def test_froehlich_u_reg_approaches_feynman():
    t, dt = 0.5, 0.02
    batch = sample_paths(3, t, dt, 11, np.arange(2))
    ref = np.array([feynman_action_R3(batch.path(i), np.zeros(3), 1.0, rule="riemann") for i in range(2)])
    gaps = []
    for K in (5.0, 10.0):
        c = FroehlichCoupling(g=1.0, radial_edges=np.linspace(0, K, int(K) + 1), radial_nodes=16, angular_order=65)
        u = regular_pass(c, batch, np.zeros(3), record=[batch.n_steps]).u[:, 0]
        gaps.append(np.max(np.abs(u.real - ref) / ref))
    assert gaps[1] < gaps[0]


def test_moments_without_coupling_equal_survival():
    zero = ConfinedCoupling(L=SQUARE, modes=ConfinedCoupling.lowest_modes(SQUARE, 4), g=0.0)
    rep = moment_scan("U", zero, 2.0, 1.0, [0.5, 1.0], [X0], 500, 0.01, 3)
    batch = sample_paths(2, 1.0, 0.01, 3, np.arange(500))
    from polaron_fk.stochastic import exit_indices
    e = exit_indices(X0 + batch.positions, zero.domain)
    for row in rep.rows:
        surv = np.mean(e > int(round(row.t / 0.01)))
        assert math.isclose(row.value, surv) and row.value <= 1
    for kind in ("u", "W"):
        rep = moment_scan(kind, zero, 2.0, 1.0, [0.5], [X0], 200, 0.01, 3)
        assert all(r.value <= 1 for r in rep.rows)


def test_moment_constant_theta_bound():
    h = np.array([0.5, 0.3j])
    m = ConstantModes(h, [1.0, 1.5], d=2)
    p = 1.0
    rep = moment_scan("U", m, 2.0, p, [0.5, 1.0, 2.0], [[0.0, 0.0]], 50, 0.001, 4)
    bound = math.exp(p * np.vdot(h, h).real)
    assert all(r.value <= bound * (1 + 0.01) for r in rep.rows)
    assert rep.censored == 0


def test_plateau_verdicts():
    assert plateau_verdicts([1, 2, 4], [1.0, 1.0, 1.0], [0.01, 0.01, 0.01]) == ["pass"] * 3
    assert plateau_verdicts([1, 2, 4], [1.0, 2.0, 8.0], [0.01, 0.01, 0.01])[1] == "fail"
    grow = [math.exp(0.3 * t) for t in (1, 2, 4)]
    assert plateau_verdicts([1, 2, 4], grow, [0.01] * 3, growth_rate=0.3) == ["pass"] * 3


def test_cutoff_identical_ladder_has_zero_gaps(confined):
    rep = cutoff_convergence([confined, confined], confined, 2.0, 2.0, 0.3, X0, 50, 0.01, 5)
    assert rep.U_gaps == [0.0, 0.0] and rep.u_gaps == [0.0, 0.0] and rep.W_gaps == [0.0, 0.0]
    assert rep.L1_gaps == [0.0, 0.0]


def test_cutoff_ladder_trend(confined):
    ladder = [confined.below(s) for s in (3.0, 6.0)]
    rep = cutoff_convergence(ladder, confined, 2.0, 2.0, 0.3, X0, 200, 0.01, 6)
    assert rep.U_gaps[1] < rep.U_gaps[0]
    assert rep.L1_gaps[1] < rep.L1_gaps[0]
    assert rep.verdict == "pass"
