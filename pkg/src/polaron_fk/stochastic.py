"""Brownian paths on a uniform grid, domains, exit indices and path functionals.

RNG scheme: numpy's counter-based Philox generator. The 128-bit key comes from
``SeedSequence(seed)``; the upper two 64-bit counter words hold (stream, index),
so every path is an independent, reproducible stream addressed by
(seed, stream, index) and never depends on how paths are batched.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

STREAM_PATHS = 0
STREAM_BRIDGE = 1


# ------------------------------------------------------------------ domains

@dataclass(frozen=True)
class Domain:
    """Open set: ``full`` space, axis-aligned ``box`` (lo, hi) or ``ball`` (center, radius)."""
    kind: str
    dim: int
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None
    center: Optional[tuple] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("full", "box", "ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "box":
            if self.lo is None or self.hi is None or len(self.lo) != self.dim or len(self.hi) != self.dim:
                raise ValueError("box needs lo and hi of length dim")
            if any(h <= l for l, h in zip(self.lo, self.hi)):
                raise ValueError("box needs lo < hi on every axis")
        if self.kind == "ball" and (self.center is None or self.radius is None or self.radius <= 0):
            raise ValueError("ball needs center and positive radius")

    @classmethod
    def full(cls, dim):
        return cls("full", dim)

    @classmethod
    def box(cls, lo, hi):
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        return cls("box", len(lo), lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius):
        center = tuple(float(v) for v in center)
        return cls("ball", len(center), center=center, radius=float(radius))

    @property
    def convex(self) -> bool:
        return True

    @property
    def a_Lambda(self) -> float:
        return 4.0 * self.dim

    @property
    def C_Lambda(self) -> float:
        return 1.0 / (2.0 * self.dim)

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "full":
            return np.ones(y.shape[:-1], dtype=bool)
        if self.kind == "box":
            lo = np.asarray(self.lo)
            hi = np.asarray(self.hi)
            return np.all((y > lo) & (y < hi), axis=-1)
        c = np.asarray(self.center)
        return np.sum((y - c) ** 2, axis=-1) < self.radius ** 2

    def distance(self, x, y) -> np.ndarray:
        """Intrinsic distance; equals |x - y| for the convex kinds shipped here."""
        return np.linalg.norm(np.asarray(y, dtype=float) - np.asarray(x, dtype=float), axis=-1)


# -------------------------------------------------------------------- paths

@lru_cache(maxsize=64)
def _philox_key(seed: int):
    state = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return int(state[0]) | (int(state[1]) << 64)


def path_rng(seed: int, index: int, stream: int = STREAM_PATHS) -> np.random.Generator:
    """Independent counter-based stream for one path."""
    counter = [0, 0, int(stream), int(index)]
    return np.random.Generator(np.random.Philox(key=_philox_key(int(seed)), counter=counter))


def n_steps_for(t_final: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(t_final / dt))
    if n < 1 or abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    return n


@dataclass(frozen=True)
class BrownianPath:
    """Path b on t_j = j dt with b_0 = 0; ``increments`` has shape (n, d)."""
    dt: float
    increments: np.ndarray

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def positions(self) -> np.ndarray:
        pos = np.zeros((self.n_steps + 1, self.d))
        np.cumsum(self.increments, axis=0, out=pos[1:])
        return pos

    def batch(self) -> "PathBatch":
        return PathBatch(self.dt, self.increments[None])


@dataclass(frozen=True)
class PathBatch:
    """P paths on a common grid; ``increments`` has shape (P, n, d)."""
    dt: float
    increments: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    @property
    def d(self) -> int:
        return self.increments.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def positions(self) -> np.ndarray:
        pos = np.zeros((self.n_paths, self.n_steps + 1, self.d))
        np.cumsum(self.increments, axis=1, out=pos[:, 1:])
        return pos

    def path(self, p: int) -> BrownianPath:
        return BrownianPath(self.dt, self.increments[p])


def sample_path(d: int, t_final: float, dt: float, seed: int, index: int) -> BrownianPath:
    n = n_steps_for(t_final, dt)
    rng = path_rng(seed, index)
    return BrownianPath(dt, math.sqrt(dt) * rng.standard_normal((n, d)))


def sample_paths(d: int, t_final: float, dt: float, seed: int, indices) -> PathBatch:
    n = n_steps_for(t_final, dt)
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    incr = np.empty((indices.size, n, d))
    s = math.sqrt(dt)
    for j, idx in enumerate(indices):
        incr[j] = s * path_rng(seed, int(idx)).standard_normal((n, d))
    return PathBatch(dt, incr)


def refine_path(path: BrownianPath, factor: int, seed: int, index: int, level: int = 0) -> BrownianPath:
    """Insert ``factor - 1`` points per step by exact Brownian-bridge sampling.

    The coarse grid values are preserved exactly, so refined and coarse paths
    are the same Brownian trajectory. ``level`` separates successive refinements.
    """
    if factor < 1:
        raise ValueError("refinement factor must be >= 1")
    if factor == 1:
        return path
    rng = path_rng(seed, index, stream=STREAM_BRIDGE + level)
    pos = path.positions
    n, d = path.n_steps, path.d
    fine = np.empty((n * factor + 1, d))
    fine[::factor] = pos
    z = rng.standard_normal((n, factor - 1, d))
    dt_f = path.dt / factor
    for k in range(1, factor):
        # condition on the previous fine point and the coarse right endpoint
        prev = fine[k - 1:-1:factor][:n]
        right = pos[1:]
        remaining = (factor - k + 1) * dt_f
        mean = prev + (dt_f / remaining) * (right - prev)
        var = dt_f * (remaining - dt_f) / remaining
        fine[k::factor][:n] = mean + math.sqrt(var) * z[:, k - 1]
    return BrownianPath(dt_f, np.diff(fine, axis=0))


def coarsen_path(path: BrownianPath, factor: int) -> BrownianPath:
    if path.n_steps % factor:
        raise ValueError("step count not divisible by coarsening factor")
    pos = path.positions[::factor]
    return BrownianPath(path.dt * factor, np.diff(pos, axis=0))


def export_path_csv(path: BrownianPath, x, fname) -> None:
    """Debug dump: one row per grid time with the coordinates of x + b_t."""
    pos = np.asarray(x, dtype=float) + path.positions
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"y{i + 1}" for i in range(path.d)])
        for t, y in zip(path.times, pos):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in y])


# ---------------------------------------------------------- exit and domain

def exit_indices(positions, domain: Domain) -> np.ndarray:
    """First grid index outside the domain for each path; n+1 when none.

    ``positions`` has shape (..., n+1, d) and already includes the start point.
    """
    inside = domain.contains(positions)
    n1 = inside.shape[-1]
    out = np.argmin(inside, axis=-1)
    return np.where(np.all(inside, axis=-1), n1, out)


def exit_index(path: BrownianPath, x, domain: Domain):
    e = int(exit_indices(np.asarray(x, dtype=float) + path.positions, domain))
    return None if e == path.n_steps + 1 else e


def survives(exit_idx, j) -> np.ndarray:
    """chi_{t_j < tau}: grid index j precedes the recorded exit."""
    return np.asarray(j) < np.asarray(exit_idx)


# ---------------------------------------------------------------- potentials

class ScalarPotential:
    """Callable V(y) evaluated on arrays of points (..., d)."""
    bound: float = math.inf

    def __call__(self, y):
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticPotential(ScalarPotential):
    """V(y) = c0 + c1.y + y.C2.y."""
    c0: float = 0.0
    c1: Optional[tuple] = None
    c2: Optional[tuple] = None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape[:-1], float(self.c0))
        if self.c1 is not None:
            out = out + y @ np.asarray(self.c1, dtype=float)
        if self.c2 is not None:
            C = np.asarray(self.c2, dtype=float)
            out = out + np.einsum("...i,ij,...j->...", y, C, y)
        return out

    def is_zero(self):
        return self.c0 == 0 and self.c1 is None and self.c2 is None


@dataclass(frozen=True)
class CoulombPotential(ScalarPotential):
    """Repulsive pair interaction sum_{i<j} strength/|y_i - y_j| for ``nu`` particles in R^m.

    Samples at exact coincidence are returned as inf and the path is flagged.
    """
    nu: int
    m: int
    strength: float = 1.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        parts = y.reshape(y.shape[:-1] + (self.nu, self.m))
        out = np.zeros(y.shape[:-1])
        with np.errstate(divide="ignore"):
            for i in range(self.nu):
                for j in range(i + 1, self.nu):
                    r = np.linalg.norm(parts[..., i, :] - parts[..., j, :], axis=-1)
                    out = out + self.strength / r
        return out


@dataclass(frozen=True)
class CallablePotential(ScalarPotential):
    fn: Callable
    bound: float = math.inf

    def __call__(self, y):
        return np.asarray(self.fn(np.asarray(y, dtype=float)), dtype=float)


class VectorPotential:
    """Callable A(y) -> (..., d) with optional divergence."""

    def __call__(self, y):
        raise NotImplementedError

    def div(self, y):
        raise NotImplementedError


@dataclass(frozen=True)
class AffineVectorPotential(VectorPotential):
    """A(y) = a0 + A1 y."""
    a0: Optional[tuple] = None
    A1: Optional[tuple] = None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        if self.a0 is not None:
            out = out + np.asarray(self.a0, dtype=float)
        if self.A1 is not None:
            out = out + y @ np.asarray(self.A1, dtype=float).T
        return out

    def div(self, y):
        y = np.asarray(y, dtype=float)
        tr = 0.0 if self.A1 is None else float(np.trace(np.asarray(self.A1, dtype=float)))
        return np.full(y.shape[:-1], tr)

    def is_zero(self):
        return self.a0 is None and self.A1 is None


@dataclass(frozen=True)
class CallableVectorPotential(VectorPotential):
    fn: Callable
    div_fn: Optional[Callable] = None

    def __call__(self, y):
        return np.asarray(self.fn(np.asarray(y, dtype=float)), dtype=float)

    def div(self, y):
        if self.div_fn is None:
            raise ValueError("divergence not supplied for this vector potential")
        return np.asarray(self.div_fn(np.asarray(y, dtype=float)), dtype=float)


def symmetric_gauge(B: float) -> AffineVectorPotential:
    """A(y) = (B/2)(-y2, y1) in two dimensions."""
    return AffineVectorPotential(A1=((0.0, -B / 2), (B / 2, 0.0)))


@dataclass(frozen=True)
class PotentialPair:
    V: ScalarPotential
    A: VectorPotential

    @classmethod
    def zero(cls):
        return cls(QuadraticPotential(), AffineVectorPotential())


# --------------------------------------------------------- path functionals

def stratonovich_phi(path, x, A, trajectory: bool = False):
    """Midpoint sum sum_i (A(y_{i-1}) + A(y_i))/2 . db_i along y = x + b.

    Accepts a BrownianPath or a PathBatch; returns the final value or, with
    ``trajectory``, the running sum on the whole grid.
    """
    batch = path.batch() if isinstance(path, BrownianPath) else path
    pos = np.asarray(x, dtype=float)[..., None, :] + batch.positions
    a = A(pos)
    terms = 0.5 * np.sum((a[:, :-1] + a[:, 1:]) * batch.increments, axis=-1)
    return _finish(terms, trajectory, isinstance(path, BrownianPath))


def ito_sum(path, x, A, trajectory: bool = False):
    """Left-point sum sum_i A(y_{i-1}) . db_i."""
    batch = path.batch() if isinstance(path, BrownianPath) else path
    pos = np.asarray(x, dtype=float)[..., None, :] + batch.positions
    a = A(pos[:, :-1])
    terms = np.sum(a * batch.increments, axis=-1)
    return _finish(terms, trajectory, isinstance(path, BrownianPath))


def left_riemann(path, x, fn, trajectory: bool = False):
    """Left-point sum of a scalar function along the path, times dt."""
    batch = path.batch() if isinstance(path, BrownianPath) else path
    pos = np.asarray(x, dtype=float)[..., None, :] + batch.positions
    terms = fn(pos[:, :-1]) * batch.dt
    return _finish(terms, trajectory, isinstance(path, BrownianPath))


def _finish(terms, trajectory, single):
    if trajectory:
        out = np.zeros(terms.shape[:-1] + (terms.shape[-1] + 1,), dtype=terms.dtype)
        np.cumsum(terms, axis=-1, out=out[..., 1:])
    else:
        out = terms.sum(axis=-1)
    return out[0] if single else out


def action_S(path, x, potentials: PotentialPair, domain: Domain):
    """S_t = sum_left V dt - i Phi_t on survivors.

    Returns (S, valid). Paths that leave the domain, or meet a non-finite V
    sample before t, get S = 0 and valid = False.
    """
    single = isinstance(path, BrownianPath)
    batch = path.batch() if single else path
    pos = np.asarray(x, dtype=float)[..., None, :] + batch.positions
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = potentials.V(pos[:, :-1])
    finite = np.all(np.isfinite(vals), axis=-1)
    vint = np.where(np.isfinite(vals), vals, 0.0).sum(axis=-1) * batch.dt
    phi = stratonovich_phi(batch, x, potentials.A)
    alive = exit_indices(pos, domain) > batch.n_steps
    valid = alive & finite
    S = np.where(valid, vint - 1j * phi, 0.0)
    if single:
        return complex(S[0]), bool(valid[0])
    return S, valid


# ------------------------------------------------------------------- tails

def tail_bound(domain: Domain, t: float, r) -> np.ndarray:
    return domain.a_Lambda * np.exp(-domain.C_Lambda * np.asarray(r, dtype=float) ** 2 / t)


def tail_check(domain: Domain, x, t: float, r_grid, n_paths: int, dt: float, seed: int,
               chunk: int = 8192, slack_sigma: float = 3.0):
    """Empirical P[chi_{t<tau} d(b_t^x, x) >= r] against a_L exp(-C_L r^2 / t).

    Returns a list of dicts with keys r, empirical, stderr, bound, passed.
    """
    x = np.asarray(x, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    n = n_steps_for(t, dt)
    counts = np.zeros(r_grid.size)
    for start in range(0, n_paths, chunk):
        idx = np.arange(start, min(start + chunk, n_paths))
        batch = sample_paths(domain.dim, t, dt, seed, idx)
        pos = x + batch.positions
        alive = exit_indices(pos, domain) > n
        dist = domain.distance(x, pos[:, -1])
        counts += np.sum(alive[:, None] & (dist[:, None] >= r_grid[None, :]), axis=0)
    p = counts / n_paths
    se = np.sqrt(p * (1 - p) / n_paths)
    bound = tail_bound(domain, t, r_grid)
    rows = []
    for r, pe, s, b in zip(r_grid, p, se, bound):
        rows.append(dict(r=float(r), empirical=float(pe), stderr=float(s), bound=float(b),
                         passed=bool(pe - slack_sigma * s <= b)))
    return rows


def derive_seed(seed: int, tag: str) -> int:
    """Independent master seed for a named sub-experiment."""
    words = [int(seed)] + [ord(ch) for ch in tag]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)
