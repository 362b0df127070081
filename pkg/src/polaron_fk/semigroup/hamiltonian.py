"""Truncated Hamiltonian on (grid) x (truncated Fock space) as a sparse matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..coupling import CouplingModel
from ..fock import FockBasis
from .grid import GridSpace, kinetic_matrix

DEFAULT_HAMILTONIAN_CAP = 400_000


@dataclass
class TruncatedHamiltonian:
    """H = K (x) 1 + V (x) 1 + 1 (x) N + sum_x |x><x| (x) phi(v_x); index = x * dim + fock."""
    matrix: sp.csr_matrix
    grid: GridSpace
    basis: FockBasis
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def to_field(self, vec) -> np.ndarray:
        return np.asarray(vec).reshape(self.grid.size, self.basis.dim)

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


def ladder_sparse(basis: FockBasis):
    out = []
    for src, dst, fac in basis.ladder:
        out.append(sp.csr_matrix((fac.astype(complex), (dst, src)), shape=(basis.dim, basis.dim)))
    return out


def build_hamiltonian(grid: GridSpace, basis: FockBasis, coupling: CouplingModel = None, V=None, A=None,
                      cap: int = DEFAULT_HAMILTONIAN_CAP, check: bool = True) -> TruncatedHamiltonian:
    dim = grid.size * basis.dim
    if dim > cap:
        raise ValueError(f"Hamiltonian dimension {dim} exceeds cap {cap}")
    D = basis.dim
    eyeF = sp.identity(D, dtype=complex, format="csr")
    eyeX = sp.identity(grid.size, dtype=complex, format="csr")
    H = sp.kron(kinetic_matrix(grid, A), eyeF, format="csr")
    if V is not None:
        vals = np.asarray(V(grid.points), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential is not bounded on the grid")
        H = H + sp.kron(sp.diags(vals.astype(complex)), eyeF, format="csr")
    H = H + sp.kron(eyeX, sp.diags(basis.levels.astype(complex)), format="csr")
    if coupling is not None:
        if coupling.M != basis.M:
            raise ValueError("coupling mode count differs from the Fock basis")
        v = coupling.v(grid.points)                      # (size, M)
        for i, a in enumerate(ladder_sparse(basis)):
            H = H + sp.kron(sp.diags(v[:, i]), a.conj().T, format="csr")
            H = H + sp.kron(sp.diags(np.conj(v[:, i])), a, format="csr")
    H = H.tocsr()
    H.sum_duplicates()
    out = TruncatedHamiltonian(H, grid, basis, {"coupling": type(coupling).__name__ if coupling else None,
                                                "peierls": A is not None})
    if check:
        defect = out.hermiticity_defect()
        if defect > 1e-12:
            raise AssertionError(f"assembled Hamiltonian is not self-adjoint (defect {defect:.3e})")
    return out


def export_matrix(H, fname) -> None:
    """Coordinate text format: header 'rows cols nnz', then 'row col re im' per entry."""
    M = sp.coo_matrix(H.matrix if isinstance(H, TruncatedHamiltonian) else H)
    with open(fname, "w", newline="") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for r, c, v in zip(M.row, M.col, M.data):
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def import_matrix(fname) -> sp.csr_matrix:
    with open(fname) as fh:
        nr, nc, nnz = (int(s) for s in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 4))
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(nr, nc))
