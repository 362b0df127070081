"""Monte-Carlo Feynman-Kac operator and vacuum matrix elements.

    (T_t Psi)(x) = E[ chi_{t<tau(x)} e^{-conj S_t(x)} W_t(x)^dagger Psi(x + b_t) ]

Path index p always draws the same Brownian increments, for every start point
and every worker layout. Paths are processed in fixed-size chunks whose partial
sums are reduced in chunk order, so results do not depend on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..coupling import ConfinedCoupling, CouplingModel, WeightedCoupling
from ..fock import FockBasis, apply_W_adjoint, build_fock_basis
from ..processes import regular_pass, renormalized_pass
from ..stochastic import (AffineVectorPotential, Domain, PotentialPair, QuadraticPotential,
                          exit_indices, n_steps_for, sample_paths)
from .grid import GridSpace

DEFAULT_CHUNK = 2048


@dataclass
class FKResult:
    values: np.ndarray          # (K, D) or (R, K, D)
    stderr: np.ndarray          # componentwise standard errors, same shape
    n_paths: int
    survivors: np.ndarray       # (K,) surviving path counts
    censored: np.ndarray        # (K,) paths dropped because the weight overflowed
    meta: dict = field(default_factory=dict)
    inner: np.ndarray = None    # (R,) sum_k <Phi(x_k)|(T Psi)(x_k)> when Phi was given
    inner_stderr: np.ndarray = None


def _chunks(n_paths, chunk):
    return [(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]


def _run_chunks(fn, ranges, workers):
    if workers <= 1:
        return [fn(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, ranges))


def _mean_se(S, Q, n_paths):
    mean = S / n_paths
    var = np.maximum(Q / n_paths - np.abs(mean) ** 2, 0.0) * n_paths / max(n_paths - 1, 1)
    return mean, np.sqrt(var / n_paths)


def _finalize(parts, n_paths, single):
    # reduce in chunk order; parts are (sum, sum of squares, alive, censored, ip sum, ip sum of squares)
    acc = [a.copy() for a in parts[0]]
    for p in parts[1:]:
        for a, b in zip(acc, p):
            a += b
    S, Q, alive, bad, IS, IQ = acc
    mean, se = _mean_se(S, Q, n_paths)
    ip, ip_se = _mean_se(IS, IQ, n_paths)
    if single:
        mean, se = mean[0], se[0]
    return mean, se, alive, bad, ip, ip_se


def _fast_path_ok(coupling, potentials, grid, sigma, x_points):
    base = coupling.base if isinstance(coupling, WeightedCoupling) else coupling
    if not isinstance(base, ConfinedCoupling) or base.nu != 1 or sigma is not None:
        return False
    if not isinstance(potentials.V, QuadraticPotential) or not isinstance(potentials.A, AffineVectorPotential):
        return False
    return grid is not None and grid.d == 2


def _confined_tables(coupling):
    base = coupling.base if isinstance(coupling, WeightedCoupling) else coupling
    coef = base.coef * (coupling.weights if isinstance(coupling, WeightedCoupling) else 1.0)
    k0, inv0 = np.unique(base.wavenumbers[:, 0], return_inverse=True)
    k1, inv1 = np.unique(base.wavenumbers[:, 1], return_inverse=True)
    return (np.ascontiguousarray(k0), np.ascontiguousarray(k1), inv0.astype(np.int64),
            inv1.astype(np.int64), np.ascontiguousarray(coef, dtype=float))


def _ladder_arrays(basis: FockBasis):
    L = max(1, max(len(s) for s, _, _ in basis.ladder))
    src = np.zeros((basis.M, L), dtype=np.int64)
    dst = np.zeros((basis.M, L), dtype=np.int64)
    fac = np.zeros((basis.M, L))
    cnt = np.zeros(basis.M, dtype=np.int64)
    for i, (s, d, f) in enumerate(basis.ladder):
        src[i, :len(s)], dst[i, :len(s)], fac[i, :len(s)], cnt[i] = s, d, f, len(s)
    return src, dst, fac, cnt


def _potential_arrays(potentials, d):
    V, A = potentials.V, potentials.A
    vc1 = np.zeros(d) if V.c1 is None else np.asarray(V.c1, dtype=float)
    vc2 = np.zeros((d, d)) if V.c2 is None else np.asarray(V.c2, dtype=float)
    a0 = np.zeros(d) if A.a0 is None else np.asarray(A.a0, dtype=float)
    A1 = np.zeros((d, d)) if A.A1 is None else np.asarray(A.A1, dtype=float)
    return float(V.c0), vc1, vc2, a0, A1


def fk_apply(coupling: CouplingModel, potentials: PotentialPair, t: float, Psi, grid: GridSpace,
             basis: FockBasis, n_paths: int, dt: float, seed: int, sigma=None, domain: Domain = None,
             x_points=None, engine: str = "auto", chunk: int = DEFAULT_CHUNK, workers: int = 1,
             Phi=None) -> FKResult:
    """Monte-Carlo estimate of T_t Psi at ``x_points`` (default: the grid nodes).

    ``sigma=None`` uses the regularized functional of the bounded coupling;
    a number uses the sigma-renormalized one. Psi is a grid field (K, D) or a
    stack of fields (R, K, D), evaluated off-grid by multilinear interpolation.
    With ``Phi`` (weights at the start points, same shape as Psi) the result
    also carries sum_k <Phi(x_k)|(T Psi)(x_k)> with a per-path standard error.
    """
    Psi = np.asarray(Psi, dtype=complex)
    single = Psi.ndim == 2
    if single:
        Psi = Psi[None]
    if Psi.shape[1:] != (grid.size, basis.dim):
        raise ValueError(f"Psi has shape {Psi.shape[1:]}, expected {(grid.size, basis.dim)}")
    domain = coupling.domain if domain is None else domain
    X = grid.points if x_points is None else np.atleast_2d(np.asarray(x_points, dtype=float))
    R, K = Psi.shape[0], X.shape[0]
    ipw = np.zeros((R, K, basis.dim), dtype=complex)
    if Phi is not None:
        ipw[:] = np.conj(np.asarray(Phi, dtype=complex).reshape(ipw.shape))
    if t == 0:
        vals = np.stack([grid.interpolate(P, X) for P in Psi])
        ip = np.sum(ipw * vals, axis=(1, 2))
        vals = vals[0] if single else vals
        return FKResult(vals, np.zeros_like(vals.real), 0, np.zeros(K, dtype=np.int64),
                        np.zeros(K, dtype=np.int64), {"engine": "none"}, ip, np.zeros(R))
    n = n_steps_for(t, dt)
    if engine == "auto":
        engine = "fast" if _fast_path_ok(coupling, potentials, grid, sigma, X) else "generic"
    if engine == "fast":
        if not _fast_path_ok(coupling, potentials, grid, sigma, X):
            raise ValueError("compiled engine supports the single confined polaron with quadratic V and affine A")
        fn = _fast_chunk_fn(coupling, potentials, t, Psi, grid, basis, dt, seed, domain, X, ipw)
    else:
        fn = _generic_chunk_fn(coupling, potentials, t, Psi, grid, basis, dt, seed, sigma, domain, X, ipw)
    parts = _run_chunks(fn, _chunks(n_paths, chunk), workers)
    mean, se, alive, bad, ip, ip_se = _finalize(parts, n_paths, single)
    return FKResult(mean, se, n_paths, alive, bad, {"engine": engine, "n_steps": n, "seed": seed},
                    ip if Phi is not None else None, ip_se if Phi is not None else None)


def _fast_chunk_fn(coupling, potentials, t, Psi, grid, basis, dt, seed, domain, X, ipw):
    from ._kernels import fk_chunk_confined
    k0, k1, f0, f1, coef = _confined_tables(coupling)
    vc0, vc1, vc2, a0, A1 = _potential_arrays(potentials, 2)
    pad = np.ascontiguousarray(np.stack([grid.padded(P) for P in Psi]))
    src, dst, fac, cnt = _ladder_arrays(basis)
    damp = np.exp(-t * basis.levels.astype(float))
    lo = np.asarray(domain.lo, dtype=float)
    hi = np.asarray(domain.hi, dtype=float)
    g_lo = np.asarray(grid.domain.lo, dtype=float)
    g_h = np.asarray(grid.h, dtype=float)
    X = np.ascontiguousarray(X)
    R, K, D = Psi.shape[0], X.shape[0], basis.dim

    def run(rng_range):
        s, e = rng_range
        batch = sample_paths(2, t, dt, seed, np.arange(s, e))
        out_sum = np.zeros((R, K, D), dtype=complex)
        out_sq = np.zeros((R, K, D))
        out_alive = np.zeros(K, dtype=np.int64)
        out_bad = np.zeros(K, dtype=np.int64)
        ip_sum = np.zeros(R, dtype=complex)
        ip_sq = np.zeros(R)
        fk_chunk_confined(batch.increments, dt, X, lo, hi, k0, k1, f0, f1, coef,
                          vc0, vc1, vc2, a0, A1, pad, g_lo, g_h, grid.n,
                          src, dst, fac, cnt, damp, basis.N_max,
                          out_sum, out_sq, out_alive, out_bad, ipw, ip_sum, ip_sq)
        return out_sum, out_sq, out_alive, out_bad, ip_sum, ip_sq
    return run


def _generic_chunk_fn(coupling, potentials, t, Psi, grid, basis, dt, seed, sigma, domain, X, ipw):
    R, K, D = Psi.shape[0], X.shape[0], basis.dim

    def run(rng_range):
        s, e = rng_range
        batch = sample_paths(coupling.d, t, dt, seed, np.arange(s, e))
        n = batch.n_steps
        out_sum = np.zeros((R, K, D), dtype=complex)
        out_sq = np.zeros((R, K, D))
        out_alive = np.zeros(K, dtype=np.int64)
        out_bad = np.zeros(K, dtype=np.int64)
        per_path = np.zeros((R, batch.n_paths), dtype=complex)
        for k, x in enumerate(X):
            if sigma is None:
                bundle = regular_pass(coupling, batch, x, record=[n])
            else:
                bundle = renormalized_pass(coupling, sigma, batch, x, record=[n])
            pos = x + batch.positions
            alive = exit_indices(pos, domain) > n
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                vals = potentials.V(pos[:, :-1])
            finite = np.all(np.isfinite(vals), axis=-1)
            vint = np.where(np.isfinite(vals), vals, 0.0).sum(axis=-1) * dt
            a = potentials.A(pos)
            phi = 0.5 * np.sum((a[:, :-1] + a[:, 1:]) * batch.increments, axis=(-2, -1))
            u = bundle.u[:, 0]
            logw = np.conj(u) - vint - 1j * phi
            ok = alive & finite & (np.real(logw) <= 700.0)
            out_bad[k] += int(np.sum(alive & ~ok))
            out_alive[k] += int(np.sum(ok))
            if not np.any(ok):
                continue
            idx = np.nonzero(ok)[0]
            weight = np.exp(logw[idx])
            yend = pos[idx, -1]
            for q in range(R):
                psi_end = grid.interpolate(Psi[q], yend)
                res = apply_W_adjoint(basis, t, np.zeros(idx.size), bundle.U_plus[idx, 0],
                                      bundle.U_minus[idx, 0], psi_end) * weight[:, None]
                out_sum[q, k] += res.sum(axis=0)
                out_sq[q, k] += np.sum(np.abs(res) ** 2, axis=0)
                per_path[q, idx] += res @ ipw[q, k]
        return (out_sum, out_sq, out_alive, out_bad, per_path.sum(axis=1),
                np.sum(np.abs(per_path) ** 2, axis=1))
    return run


# ------------------------------------------------------------- vacuum element

@dataclass
class ScalarEstimate:
    value: complex
    stderr: float
    n_paths: int
    meta: dict = field(default_factory=dict)


def vacuum_element(coupling: CouplingModel, potentials: PotentialPair, t: float, f1, f2, x_points, x_weights,
                   n_paths: int, dt: float, seed: int, action: str = "reg", sigma=None, domain: Domain = None,
                   action_fn=None, chunk: int = DEFAULT_CHUNK, workers: int = 1,
                   grid: GridSpace = None) -> ScalarEstimate:
    """<f1 eps(0)| e^{-tH} f2 eps(0)> by Monte Carlo over start points and paths.

    Sums x_weights(x) conj(f1(x)) E[chi e^{conj(u) - conj(S)} f2(x + b_t)] over the
    deterministic start points. ``action`` selects u: 'reg' (bounded coupling),
    'sigma' (renormalized, needs sigma), 'zero', or 'custom' with
    ``action_fn(path_batch, x) -> u`` (e.g. the closed-form Feynman actions).
    The standard error treats each path index as one sample of the x-sum.

    With ``grid`` given and a coupling the compiled engine handles, f2 is
    sampled on the grid and read off by interpolation at b_t, and the run goes
    through the compiled Feynman-Kac kernel on the vacuum-only Fock space.
    """
    X = np.atleast_2d(np.asarray(x_points, dtype=float))
    if grid is not None and action == "reg" and _fast_path_ok(coupling, potentials, grid, None, X):
        basis0 = build_fock_basis(coupling.M, 0)
        Psi = np.asarray(f2(grid.points), dtype=complex)[:, None]
        Phi = (np.asarray(x_weights, dtype=float) * np.asarray(f1(X), dtype=complex))[:, None]
        res = fk_apply(coupling, potentials, t, Psi, grid, basis0, n_paths, dt, seed, domain=domain,
                       x_points=X, engine="fast", chunk=chunk, workers=workers, Phi=Phi)
        return ScalarEstimate(complex(res.inner[0]), float(res.inner_stderr[0]), n_paths,
                              {"censored": int(res.censored.sum()), "engine": "fast"})
    wx = np.asarray(x_weights, dtype=float) * np.conj(np.asarray(f1(X), dtype=complex))
    domain = coupling.domain if domain is None else domain
    d = X.shape[1]
    n = n_steps_for(t, dt)

    def run(rng_range):
        s, e = rng_range
        batch = sample_paths(d, t, dt, seed, np.arange(s, e))
        per_path = np.zeros(batch.n_paths, dtype=complex)
        bad = 0
        for k, x in enumerate(X):
            pos = x + batch.positions
            alive = exit_indices(pos, domain) > n
            if action == "reg":
                u = regular_pass(coupling, batch, x, record=[n]).u[:, 0]
            elif action == "sigma":
                u = renormalized_pass(coupling, sigma, batch, x, record=[n]).u[:, 0]
            elif action == "zero":
                u = np.zeros(batch.n_paths, dtype=complex)
            elif action == "custom":
                u = np.asarray(action_fn(batch, x), dtype=complex)
            else:
                raise ValueError(f"unknown action source {action!r}")
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                vals = potentials.V(pos[:, :-1])
            finite = np.all(np.isfinite(vals), axis=-1)
            vint = np.where(np.isfinite(vals), vals, 0.0).sum(axis=-1) * dt
            a = potentials.A(pos)
            phi = 0.5 * np.sum((a[:, :-1] + a[:, 1:]) * batch.increments, axis=(-2, -1))
            logw = np.conj(u) - vint - 1j * phi
            ok = alive & finite & (np.real(logw) <= 700.0)
            bad += int(np.sum(alive & ~ok))
            contrib = np.zeros(batch.n_paths, dtype=complex)
            contrib[ok] = np.exp(logw[ok]) * np.asarray(f2(pos[ok, -1]), dtype=complex)
            per_path += wx[k] * contrib
        return per_path.sum(), float(np.sum(np.abs(per_path) ** 2)), bad

    parts = _run_chunks(run, _chunks(n_paths, chunk), workers)
    S = 0j
    Q = 0.0
    bad = 0
    for s_, q_, b_ in parts:
        S += s_
        Q += q_
        bad += b_
    mean = S / n_paths
    var = max(Q / n_paths - abs(mean) ** 2, 0.0) * n_paths / max(n_paths - 1, 1)
    return ScalarEstimate(complex(mean), math.sqrt(var / n_paths), n_paths, {"censored": bad})


def vacuum_element_fk(result: FKResult, grid: GridSpace, f1_values) -> ScalarEstimate:
    """Vacuum element from an fk_apply run on Psi = f2 (x) eps(0), reusing its paths.

    The standard error is a conservative sum of per-point errors (start points
    share paths, so errors are correlated).
    """
    vals = result.values[..., 0]
    se = result.stderr[..., 0]
    w = np.conj(np.asarray(f1_values, dtype=complex)) * grid.cell_volume
    return ScalarEstimate(complex(np.sum(w * vals)), float(np.sum(np.abs(w) * se)), result.n_paths)
