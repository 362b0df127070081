"""Experiment driver: one subcommand per check, CSV + JSON output, CI exit codes.

Exit codes: 0 pass, 2 statistical failure (3 sigma breach), 3 structural
failure (invariant violated), 4 config error.

Every subcommand writes ``<out>/<subcommand>.csv`` with the columns
t, x_id, estimator, value, stderr, bound, verdict (preceded by ``# key=value``
config lines) and ``<out>/<subcommand>.json`` with the versioned summary.
For ``action-sample`` x_id is the path index; for ``tail`` the estimator
names the radius.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import io
from .config import ConfigError, ExperimentConfig, load_config
from .coupling import ConfinedCoupling, FroehlichCoupling
from .experiments import reference_setup
from .processes import (feynman_action_confined, cutoff_convergence, identity_study, moment_scan,
                        regular_pass, renormalized_pass)
from .semigroup import checks
from .semigroup.fk import vacuum_element
from .semigroup.grid import GridSpace
from .semigroup.hamiltonian import build_hamiltonian
from .semigroup.krylov import expm_apply
from .fock import build_fock_basis
from .stochastic import (AffineVectorPotential, Domain, PotentialPair, QuadraticPotential, sample_paths,
                         symmetric_gauge, tail_check)

EXIT_PASS, EXIT_STAT, EXIT_STRUCT, EXIT_CONFIG = 0, 2, 3, 4


def _coupling(cfg: ExperimentConfig):
    if cfg.model == "froehlich":
        return FroehlichCoupling(g=cfg.g)
    return ConfinedCoupling(L=cfg.L, modes=ConfinedCoupling.lowest_modes(cfg.L, cfg.modes), g=cfg.g)


def _potentials(cfg: ExperimentConfig) -> PotentialPair:
    V = QuadraticPotential(c0=cfg.V0)
    A = symmetric_gauge(cfg.B) if cfg.B != 0 else AffineVectorPotential()
    return PotentialPair(V, A)


def _row(t, x_id, estimator, value, stderr, bound, ok):
    return dict(t=t, x_id=x_id, estimator=estimator, value=value, stderr=stderr, bound=bound,
                verdict="pass" if ok else "fail")


# ------------------------------------------------------------- subcommands
# each returns (rows, summary, failure kind or None)

def cmd_fk_verify(cfg):
    st = reference_setup(g=cfg.g, n=cfg.n, modes=cfg.modes, N_max=cfg.N_max, L=cfg.L)
    rep = checks.fk_verify(st.coupling, _potentials(cfg), cfg.t, st.psi, st.grid, st.basis, cfg.paths, cfg.dt,
                           cfg.seed, abs_limit=cfg.abs_limit, extra_budget=cfg.extra_budget,
                           workers=cfg.workers, chunk=cfg.chunk)
    summ = {k: rep.summary[k] for k in ("gap", "se", "budget", "censored", "survivors")}
    return rep.rows, summ, None if rep.passed else "statistical"


def vacuum_oracle(st, potentials, t):
    """<f1 eps(0)| e^{-tH} f2 eps(0)> from the matrix oracle."""
    H = build_hamiltonian(st.grid, st.basis, st.coupling, V=potentials.V, A=potentials.A)
    X = st.grid.points
    psi = np.zeros((st.grid.size, st.basis.dim), dtype=complex)
    psi[:, 0] = st.f2(X)
    out = H.to_field(expm_apply(H, t, psi.reshape(-1)))
    return complex(np.sum(np.conj(st.f1(X)) * out[:, 0]) * st.grid.cell_volume)


def cmd_vacuum(cfg):
    st = reference_setup(g=cfg.g, n=cfg.n, modes=cfg.modes, N_max=cfg.N_max, L=cfg.L)
    pots = _potentials(cfg)
    X = st.grid.points
    est = vacuum_element(st.coupling, pots, cfg.t, st.f1, st.f2, X, np.full(len(X), st.grid.cell_volume),
                         cfg.paths, cfg.dt, cfg.seed, workers=cfg.workers, chunk=cfg.chunk, grid=st.grid)
    ref = vacuum_oracle(st, pots, cfg.t)
    scale = st.grid.norm(st.f1(X)) * st.grid.norm(st.f2(X))
    budget = (checks.discretization_budget(st.grid.h, cfg.dt) + cfg.extra_budget) * scale
    gap = abs(est.value - ref)
    ok = gap <= 3 * est.stderr + budget
    rows = [_row(cfg.t, -1, "vacuum_mc_re", est.value.real, est.stderr, float("nan"), ok),
            _row(cfg.t, -1, "vacuum_mc_im", est.value.imag, est.stderr, float("nan"), ok),
            _row(cfg.t, -1, "vacuum_oracle_re", ref.real, 0.0, float("nan"), ok),
            _row(cfg.t, -1, "vacuum_gap", gap, est.stderr, 3 * est.stderr + budget, ok)]
    summ = dict(estimate=est.value, stderr=est.stderr, oracle=ref, gap=gap, budget=budget,
                censored=est.meta["censored"])
    return rows, summ, None if ok else "statistical"


def cmd_action_sample(cfg):
    c = _coupling(cfg)
    if not isinstance(c, ConfinedCoupling):
        raise ConfigError("action-sample supports the confined model")
    x = np.asarray(cfg.x[:c.d], dtype=float)
    batch = sample_paths(c.d, cfg.t, cfg.dt, cfg.seed, np.arange(cfg.paths))
    n = batch.n_steps
    reg = regular_pass(c, batch, x, record=[n])
    ren = renormalized_pass(c, cfg.sigma, batch, x, record=[n])
    rows, worst, worst_im = [], 0.0, 0.0
    for i in range(cfg.paths):
        alive = bool(reg.alive[i, 0])
        ur, us = complex(reg.u[i, 0]), complex(ren.u[i, 0])
        fe, valid = feynman_action_confined(batch.path(i), x, c, rule="riemann")
        if alive and valid:
            worst = max(worst, abs(ur - fe) / max(abs(ur), 1e-300))
            worst_im = max(worst_im, abs(us.imag))
        for name, val in (("u_reg", ur.real), ("u_sigma_re", us.real), ("u_sigma_im", us.imag),
                          ("feynman_riemann", fe)):
            rows.append(dict(t=cfg.t, x_id=i, estimator=name, value=val, stderr=0.0, bound=float("nan"),
                             verdict="alive" if alive else "exited"))
    ok = worst <= 1e-8 and worst_im <= 1e-12
    rows.append(_row(cfg.t, -1, "max_rel_u_reg_vs_feynman", worst, 0.0, 1e-8, worst <= 1e-8))
    rows.append(_row(cfg.t, -1, "max_abs_im_u_sigma", worst_im, 0.0, 1e-12, worst_im <= 1e-12))
    return rows, dict(max_rel_gap=worst, max_imag=worst_im), None if ok else "structural"


def cmd_identity_check(cfg):
    c = _coupling(cfg)
    rows, slopes, verdict = identity_study(c, cfg.t, cfg.x[:c.d], cfg.dt_ladder, cfg.paths, cfg.seed)
    return rows, dict(slopes=slopes), None if verdict == "pass" else "structural"


def cmd_moments(cfg):
    c = _coupling(cfg)
    rep = moment_scan(cfg.kind, c, cfg.sigma, cfg.p, cfg.t_grid, [cfg.x[:c.d]], cfg.paths, cfg.dt, cfg.seed)
    return rep.rows, dict(censored=rep.censored, verdict=rep.verdict), \
        None if rep.verdict == "pass" else "statistical"


def cmd_cutoff(cfg):
    c = _coupling(cfg)
    ladder = [c.below(s) for s in cfg.sigmas]
    mc = cutoff_convergence(ladder, c, cfg.sigma, cfg.p, cfg.t, cfg.x[:c.d], cfg.paths, cfg.dt, cfg.seed)
    rows = list(mc.rows)
    kind = None if mc.verdict == "pass" else "statistical"
    summ = dict(L1=mc.L1_gaps, U_gaps=mc.U_gaps, u_gaps=mc.u_gaps, W_gaps=mc.W_gaps)
    if isinstance(c, ConfinedCoupling):
        grid = GridSpace(Domain.box((0.0, 0.0), c.L), cfg.n)
        rep = checks.cutoff_resolvent_check(grid, build_fock_basis(c.M, cfg.N_max), c, cfg.sigmas)
        rows += rep.rows
        summ.update(resolvent_gaps=rep.summary["gaps"], C=rep.summary["C"], c_shift=rep.summary["c_shift"])
        if not rep.passed:
            kind = "structural"
    return rows, summ, kind


def cmd_tail(cfg):
    d = 2
    x = np.asarray(cfg.x[:d], dtype=float)
    domain = Domain.box((0.0, 0.0), cfg.L) if cfg.domain == "box" else Domain.full(d)
    rows, fails = [], 0
    for t in cfg.t_grid:
        for r in tail_check(domain, x, t, cfg.r_grid, cfg.paths, cfg.dt, cfg.seed):
            fails += not r["passed"]
            rows.append(_row(t, 0, f"tail_r={r['r']:g}", r["empirical"], r["stderr"], r["bound"], r["passed"]))
    return rows, dict(failed_cells=fails, a_Lambda=domain.a_Lambda, C_Lambda=domain.C_Lambda), \
        None if fails == 0 else "statistical"


def cmd_ly(cfg):
    c = _coupling(cfg)
    grid = GridSpace(Domain.box((0.0, 0.0), c.L), cfg.n)
    rep = checks.ly_bound_check(grid, build_fock_basis(c.M, cfg.N_max), c, cfg.E_grid, cfg.samples, cfg.seed)
    return rep.rows, rep.summary, None if rep.passed else "structural"


def cmd_sde(cfg):
    c = _coupling(cfg)
    rng = np.random.default_rng(cfg.seed)
    c0 = np.array([1.0, 0.5j])
    F0 = 0.3 * (rng.standard_normal((2, c.M)) + 1j * rng.standard_normal((2, c.M)))
    rep = checks.sde_residual_check(c, cfg.x[:c.d], c0, F0, cfg.t, cfg.dt_ladder, cfg.seed, n_paths=cfg.paths)
    return rep.rows, rep.summary, None if rep.passed else "structural"


def cmd_semigroup(cfg):
    st = reference_setup(g=cfg.g, n=cfg.n, modes=cfg.modes, N_max=cfg.N_max, L=cfg.L)
    rep = checks.semigroup_check(st.coupling, _potentials(cfg), st.grid, st.basis, cfg.t, cfg.s, st.psi,
                                 cfg.paths, cfg.dt, cfg.seed, workers=cfg.workers, chunk=cfg.chunk)
    return rep.rows, rep.summary, None if rep.passed else "statistical"


COMMANDS = {
    "fk-verify": cmd_fk_verify,
    "vacuum": cmd_vacuum,
    "action-sample": cmd_action_sample,
    "identity-check": cmd_identity_check,
    "moments": cmd_moments,
    "cutoff": cmd_cutoff,
    "tail": cmd_tail,
    "ly": cmd_ly,
    "sde": cmd_sde,
    "semigroup": cmd_semigroup,
}


def run(subcommand: str, cfg: ExperimentConfig):
    """Run one subcommand, write its artifacts, return (exit status, summary document)."""
    t0 = time.time()
    cfg.subcommand = subcommand
    rows, summary, kind = COMMANDS[subcommand](cfg)
    status = {None: EXIT_PASS, "statistical": EXIT_STAT, "structural": EXIT_STRUCT}[kind]
    verdict = "pass" if kind is None else f"fail ({kind})"
    stem = f"{cfg.out}/{subcommand}"
    io.write_csv(stem + ".csv", rows, echo=cfg.echo())
    doc = io.write_summary(stem + ".json", subcommand, cfg.echo(exclude=()), status, verdict, summary,
                           run_meta=dict(workers=cfg.workers, seconds=round(time.time() - t0, 3)))
    return status, doc


def build_parser():
    ap = argparse.ArgumentParser(prog="polaron-fk", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", default=None, help="key = value file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--paths", type=int)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--workers", type=int)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, dict(seed=args.seed, paths=args.paths, dt=args.dt, out=args.out,
                                            workers=args.workers))
        status, doc = run(args.subcommand, cfg)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.subcommand}: {doc['verdict']} -> {cfg.out}/{args.subcommand}.csv")
    return status


if __name__ == "__main__":
    sys.exit(main())
