"""Uniform grids on boxes with Dirichlet boundary and the covariant discrete Laplacian."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..stochastic import Domain


@dataclass(frozen=True, eq=False)
class GridSpace:
    """Box split into ``n`` cells per axis; unknowns live on the (n-1)^d interior nodes."""
    domain: Domain
    n: int

    def __post_init__(self):
        if self.domain.kind != "box":
            raise ValueError("grid discretization needs a box domain")
        if self.n < 2:
            raise ValueError("need at least two cells per axis")

    @property
    def d(self) -> int:
        return self.domain.dim

    @cached_property
    def h(self) -> np.ndarray:
        return (np.asarray(self.domain.hi) - np.asarray(self.domain.lo)) / self.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def shape(self):
        return (self.n - 1,) * self.d

    @property
    def size(self) -> int:
        return (self.n - 1) ** self.d

    @cached_property
    def points(self) -> np.ndarray:
        """Interior nodes (size, d), first axis slowest."""
        axes = [self.domain.lo[j] + self.h[j] * np.arange(1, self.n) for j in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)

    def index(self, multi):
        """Flat ordinal of an interior multi-index (entries 1..n-1)."""
        return int(np.ravel_multi_index(tuple(int(i) - 1 for i in multi), self.shape))

    def padded(self, field) -> np.ndarray:
        """Grid field (size, ...) embedded with zero boundary values: shape (n+1,)*d + (...)."""
        field = np.asarray(field)
        tail = field.shape[1:]
        out = np.zeros((self.n + 1,) * self.d + tail, dtype=field.dtype)
        inner = tuple(slice(1, self.n) for _ in range(self.d))
        out[inner] = field.reshape(self.shape + tail)
        return out

    def interpolate(self, field, y) -> np.ndarray:
        """Multilinear interpolation of a grid field at points y (..., d); zero outside the box."""
        pad = self.padded(field)
        y = np.asarray(y, dtype=float)
        lo = np.asarray(self.domain.lo)
        s = (y - lo) / self.h
        inside = np.all((s > 0) & (s < self.n), axis=-1)
        s = np.clip(s, 0, self.n - 1e-12)
        i0 = np.floor(s).astype(np.int64)
        f = s - i0
        tail = pad.shape[self.d:]
        out = np.zeros(y.shape[:-1] + tail, dtype=pad.dtype)
        for corner in range(2 ** self.d):
            bits = [(corner >> j) & 1 for j in range(self.d)]
            w = np.ones(y.shape[:-1])
            idx = []
            for j, bit in enumerate(bits):
                w = w * (f[..., j] if bit else 1 - f[..., j])
                idx.append(i0[..., j] + bit)
            out = out + w.reshape(w.shape + (1,) * len(tail)) * pad[tuple(idx)]
        return out * inside.reshape(inside.shape + (1,) * len(tail))

    def inner(self, a, b) -> complex:
        """Discrete L^2 inner product sum conj(a) b h^d over all trailing components."""
        return complex(np.vdot(np.asarray(a), np.asarray(b)) * self.cell_volume)

    def norm(self, a) -> float:
        return float(np.sqrt(np.sum(np.abs(np.asarray(a)) ** 2) * self.cell_volume))


def link_phase(A, x, step, axis: int, nodes: int = 3) -> np.ndarray:
    """int_0^step A_axis(x + s e_axis) ds by Gauss-Legendre (exact for affine A)."""
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for xi, wi in zip(xg, wg):
        p = x.copy()
        p[..., axis] += 0.5 * step * (xi + 1)
        total = total + 0.5 * step * wi * A(p)[..., axis]
    return total


def kinetic_matrix(grid: GridSpace, A=None) -> sp.csr_matrix:
    """-1/2 covariant Laplacian with Peierls phases and Dirichlet boundary.

    (K psi)(x) = 1/2 sum_j h_j^-2 [2 psi(x) - e^{-i th(x,x+e_j)} psi(x+e_j) - e^{i th(x-e_j,x)} psi(x-e_j)]
    with th(x, x+e) the line integral of A along the link.
    """
    pts = grid.points
    size = grid.size
    shape = grid.shape
    multi = np.stack(np.unravel_index(np.arange(size), shape), axis=-1)
    rows, cols, vals = [np.arange(size)], [np.arange(size)], [np.full(size, float(np.sum(1.0 / grid.h ** 2)), dtype=complex)]
    for j in range(grid.d):
        has_next = multi[:, j] < shape[j] - 1
        src = np.nonzero(has_next)[0]
        nxt = multi[src].copy()
        nxt[:, j] += 1
        dst = np.ravel_multi_index(tuple(nxt.T), shape)
        if A is None:
            phase = np.ones(src.size, dtype=complex)
        else:
            phase = np.exp(-1j * link_phase(A, pts[src], grid.h[j], j))
        c = -0.5 / grid.h[j] ** 2
        rows += [src, dst]
        cols += [dst, src]
        vals += [c * phase, c * np.conj(phase)]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(size, size))
