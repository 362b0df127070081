"""Standard setups shared by the CLI, the scripts and the acceptance suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coupling import ConfinedCoupling
from .fock import FockBasis, build_fock_basis, exp_vector
from .semigroup.grid import GridSpace
from .stochastic import Domain


@dataclass
class Setup:
    coupling: ConfinedCoupling
    grid: GridSpace
    basis: FockBasis
    psi: np.ndarray

    def f1(self, x):
        x = np.asarray(x, dtype=float)
        return np.sin(x[..., 0]) * np.sin(x[..., 1])

    def f2(self, x):
        x = np.asarray(x, dtype=float)
        return np.sin(x[..., 0]) * np.sin(x[..., 1]) + 0.5 * np.sin(x[..., 0]) * np.sin(2 * x[..., 1])


def smooth_field(grid: GridSpace, basis: FockBasis, seed: int = 1) -> np.ndarray:
    """Two low Dirichlet modes carrying a coherent and a random Fock vector."""
    X = grid.points
    L = np.asarray(grid.domain.hi) - np.asarray(grid.domain.lo)
    y = (X - np.asarray(grid.domain.lo)) * math.pi / L
    low = np.sin(y[:, 0]) * np.sin(y[:, 1])
    next_ = np.sin(2 * y[:, 0]) * np.sin(y[:, 1])
    coherent = exp_vector(basis, 0.3 * np.cos(np.arange(basis.M)) - 0.1j * np.sin(np.arange(basis.M)))
    rng = np.random.default_rng(seed)
    rough = 0.3 * (rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim))
    return low[:, None] * coherent[None, :] + next_[:, None] * rough[None, :]


def reference_setup(g: float = 0.2, n: int = 16, modes: int = 4, N_max: int = 2,
                    L=(math.pi, math.pi)) -> Setup:
    """Confined polaron on the box, lowest ``modes`` Dirichlet modes, grid with n cells per axis."""
    coupling = ConfinedCoupling(L=L, modes=ConfinedCoupling.lowest_modes(L, modes), g=g)
    grid = GridSpace(Domain.box((0.0, 0.0), L), n)
    basis = build_fock_basis(modes, N_max)
    return Setup(coupling, grid, basis, smooth_field(grid, basis))
