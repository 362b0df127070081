"""Truncated bosonic Fock space with finitely many modes.

States are occupation tuples (n_1, ..., n_M) with sum n_i <= N_max, ordered
graded-lexicographically: total occupation first, then descending lexicographic
order inside a level (for M=2: 00, 10, 01, 20, 11, 02).

One-boson vectors are plain complex arrays of length M; the inner product is
<h|f> = sum conj(h_i) f_i (antilinear in the first slot).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

DEFAULT_DIM_CAP = 20000


class FockBasisTooLarge(ValueError):
    """Requested truncation exceeds the dimension cap."""


@dataclass(frozen=True)
class ModeSet:
    """Finite one-boson space: M modes with dispersion values ``lam``.

    Measure weights are assumed folded into the coefficients, so one-boson
    vectors live in orthonormal coordinates.
    """
    lam: np.ndarray
    fold_note: bool = True

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if lam.size < 1:
            raise ValueError("mode set needs at least one mode")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValueError("dispersion values must be finite and nonnegative")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def M(self) -> int:
        return self.lam.size


def _compositions(n: int, m: int):
    # descending lexicographic order of tuples with m entries summing to n
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, m - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class FockBasis:
    M: int
    N_max: int
    states: np.ndarray = field(repr=False)
    index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @cached_property
    def levels(self) -> np.ndarray:
        """Total occupation of every basis state."""
        return self.states.sum(axis=1)

    @cached_property
    def ladder(self):
        """Per-mode tables (src, dst, factor) with a_i |src> = factor |dst>."""
        tables = []
        for i in range(self.M):
            src = np.nonzero(self.states[:, i] > 0)[0]
            dst = np.empty_like(src)
            for j, s in enumerate(src):
                occ = self.states[s].copy()
                occ[i] -= 1
                dst[j] = self.index[tuple(int(v) for v in occ)]
            fac = np.sqrt(self.states[src, i].astype(float))
            tables.append((src, dst, fac))
        return tables

    @cached_property
    def sqrt_factorials(self) -> np.ndarray:
        """sqrt(prod_i n_i!) per basis state."""
        lf = np.array([sum(math.lgamma(n + 1) for n in s) for s in self.states])
        return np.exp(0.5 * lf)

    def check_vector(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if psi.shape[-1] != self.dim:
            raise ValueError(f"Fock vector has length {psi.shape[-1]}, basis dimension is {self.dim}")
        return psi

    def check_one_boson(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=complex)
        if h.shape[-1] != self.M:
            raise ValueError(f"one-boson vector has length {h.shape[-1]}, basis has {self.M} modes")
        return h


def build_fock_basis(M: int, N_max: int, cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    if M < 1:
        raise ValueError("mode count M must be positive")
    if N_max < 0:
        raise ValueError("N_max must be nonnegative")
    dim = comb(M + N_max, N_max)
    if dim > cap:
        raise FockBasisTooLarge(f"dimension {dim} exceeds cap {cap} (M={M}, N_max={N_max})")
    states = [s for n in range(N_max + 1) for s in _compositions(n, M)]
    arr = np.array(states, dtype=np.int64).reshape(len(states), M)
    arr.setflags(write=False)
    index = {s: i for i, s in enumerate(states)}
    return FockBasis(M=M, N_max=N_max, states=arr, index=index)


# ---------------------------------------------------------------- operators

def annihilation_op(basis: FockBasis, h) -> np.ndarray:
    """Dense matrix of a(h) = sum_i conj(h_i) a_i."""
    h = basis.check_one_boson(h)
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for i, (src, dst, fac) in enumerate(basis.ladder):
        out[dst, src] += np.conj(h[i]) * fac
    return out


def creation_op(basis: FockBasis, h) -> np.ndarray:
    """a^dagger(h), defined as the conjugate transpose of the truncated a(h)."""
    return annihilation_op(basis, h).conj().T


def field_op(basis: FockBasis, h) -> np.ndarray:
    a = annihilation_op(basis, h)
    return a + a.conj().T


def number_op(basis: FockBasis) -> np.ndarray:
    return np.diag(basis.levels.astype(complex))


def exp_vector(basis: FockBasis, f) -> np.ndarray:
    """Truncated exponential vector: prod f_i^{n_i} / sqrt(prod n_i!)."""
    f = basis.check_one_boson(f)
    powers = np.prod(f[None, :] ** basis.states, axis=1)
    return powers / basis.sqrt_factorials


def exp_vector_inner(f, g, N_max: int) -> complex:
    """<eps(f)|eps(g)> restricted to levels <= N_max, as a scalar series."""
    z = np.vdot(np.asarray(f, dtype=complex), np.asarray(g, dtype=complex))
    return sum(z ** n / math.factorial(n) for n in range(N_max + 1))


def F_series(basis: FockBasis, t: float, h) -> np.ndarray:
    """sum_{n<=N_max} a^dagger(h)^n / n! e^{-tN} as a dense matrix."""
    if not t > 0:
        raise ValueError("F_series needs t > 0")
    ad = creation_op(basis, h)
    series = np.eye(basis.dim, dtype=complex)
    term = np.eye(basis.dim, dtype=complex)
    for n in range(1, basis.N_max + 1):
        term = ad @ term / n
        series = series + term
    return series * np.exp(-t * basis.levels)[None, :]


def assemble_W(basis: FockBasis, t: float, u: complex, U_plus, U_minus) -> np.ndarray:
    """e^u F_{t/2}(-U_plus) F_{t/2}(-U_minus)^dagger, identity at t = 0."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return np.eye(basis.dim, dtype=complex)
    Up = basis.check_one_boson(U_plus)
    Um = basis.check_one_boson(U_minus)
    left = F_series(basis, t / 2, -Up)
    right = F_series(basis, t / 2, -Um).conj().T
    return np.exp(u) * (left @ right)


def F_norm_bound(t: float, h_norm: float) -> float:
    return math.sqrt(2.0) * math.exp(4 * (1 + 1 / t) * h_norm ** 2)


def F_lipschitz_bound(t: float, h_norm: float, hp_norm: float, diff_norm: float) -> float:
    r = max(h_norm, hp_norm)
    return 2 ** 1.5 * math.sqrt(1 + 1 / t) * diff_norm * math.exp(4 * (1 + 1 / t) * r ** 2)


def W_norm_bound(t: float, u: complex, Up_norm: float, Um_norm: float) -> float:
    return math.exp(np.real(u)) * 2 * math.exp(4 * (1 + 2 / t) * (Up_norm ** 2 + Um_norm ** 2))


# ------------------------------------------------- batched matrix-free forms

def apply_annihilation(basis: FockBasis, h, psi) -> np.ndarray:
    """a(h) psi for batches: h (..., M), psi (..., dim)."""
    h = np.asarray(h, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    out = np.zeros(np.broadcast_shapes(h.shape[:-1], psi.shape[:-1]) + (basis.dim,), dtype=complex)
    for i, (src, dst, fac) in enumerate(basis.ladder):
        # dst is injective for a fixed mode, so fancy-index accumulation is safe
        out[..., dst] += np.conj(h[..., i])[..., None] * fac * psi[..., src]
    return out


def apply_creation(basis: FockBasis, h, psi) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    out = np.zeros(np.broadcast_shapes(h.shape[:-1], psi.shape[:-1]) + (basis.dim,), dtype=complex)
    for i, (src, dst, fac) in enumerate(basis.ladder):
        out[..., src] += h[..., i][..., None] * fac * psi[..., dst]
    return out


def apply_W_adjoint(basis: FockBasis, t: float, u, U_plus, U_minus, psi) -> np.ndarray:
    """W^dagger psi = e^{conj u} F_{t/2}(-U_minus) F_{t/2}(-U_plus)^dagger psi, batched.

    F^dagger only lowers occupation and F only raises it, so on the truncated
    space this equals the projection of the full-space W^dagger applied to psi.
    """
    psi = np.asarray(psi, dtype=complex)
    Up = -np.asarray(U_plus, dtype=complex)
    Um = -np.asarray(U_minus, dtype=complex)
    damp = np.exp(-0.5 * t * basis.levels)
    # F_{t/2}(h)^dagger = e^{-tN/2} sum a(h)^n / n!
    acc = psi
    term = psi
    for n in range(1, basis.N_max + 1):
        term = apply_annihilation(basis, Up, term) / n
        acc = acc + term
    acc = acc * damp
    acc = acc * damp
    out = acc
    term = acc
    for n in range(1, basis.N_max + 1):
        term = apply_creation(basis, Um, term) / n
        out = out + term
    return np.exp(np.conj(np.asarray(u)))[..., None] * out


# ---------------------------------------------------------- serialization

def dump_basis_csv(basis: FockBasis, path) -> None:
    """One row per state: ordinal followed by the M occupation numbers."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ordinal"] + [f"n{i + 1}" for i in range(basis.M)])
        for k, s in enumerate(basis.states):
            w.writerow([k] + [int(v) for v in s])


def load_basis_csv(path, cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    M = len(rows[0]) - 1
    states = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    basis = build_fock_basis(M, int(states.sum(axis=1).max()), cap=cap)
    if not np.array_equal(basis.states, states):
        raise ValueError("state ordering in file is not graded lexicographic")
    return basis


def dump_operator_csv(op, path) -> None:
    """Coordinate listing (row, col, re, im) of the nonzero entries."""
    op = np.asarray(op, dtype=complex)
    rows, cols = np.nonzero(op)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "re", "im", f"dim={op.shape[0]}"])
        for r, c in zip(rows, cols):
            w.writerow([int(r), int(c), repr(float(op[r, c].real)), repr(float(op[r, c].imag)), ""])


def load_operator_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    dim = int(rows[0][4].split("=")[1])
    op = np.zeros((dim, dim), dtype=complex)
    for r in rows[1:]:
        op[int(r[0]), int(r[1])] = complex(float(r[2]), float(r[3]))
    return op


# ------------------------------------------- norms on the full Fock space

def _orthonormal_span(vectors, tol=1e-13):
    """Orthonormal basis (rows) of span{vectors}, by pivoted QR."""
    from scipy.linalg import qr
    A = np.asarray(vectors, dtype=complex).T
    if not np.any(A):
        return np.zeros((0, A.shape[0]), dtype=complex)
    Q, R, _ = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag.max(), 1.0)))
    return Q[:, :rank].T


def W_operator_reduced(t, u, U_plus, U_minus, basis_vectors, N_max):
    """W restricted to the Fock space of span(basis_vectors), in that span's coordinates."""
    k = basis_vectors.shape[0]
    sub = build_fock_basis(max(k, 1), N_max)
    if k == 0:
        return sub, np.exp(u) * np.exp(-t * sub.levels).astype(complex) * np.eye(sub.dim)
    cp = basis_vectors.conj() @ np.asarray(U_plus, dtype=complex)
    cm = basis_vectors.conj() @ np.asarray(U_minus, dtype=complex)
    return sub, assemble_W(sub, t, u, cp, cm)


def W_norm_full(t: float, u, U_plus, U_minus, N_max: int = 12) -> float:
    """Operator norm of W on the untruncated Fock space.

    W factorizes as W_S (x) e^{-tN} over the span S of U^+ and U^- and its
    orthogonal complement, so the norm equals the norm of W_S; the remaining
    truncation of Fock(S) at N_max converges quickly thanks to the e^{-tN/2}
    damping on both sides.
    """
    if t == 0:
        return float(abs(np.exp(u)))
    B = _orthonormal_span([U_plus, U_minus])
    _, W = W_operator_reduced(t, u, U_plus, U_minus, B, N_max)
    return float(np.linalg.norm(W, 2))


def W_difference_norm(t: float, u1, Up1, Um1, u2, Up2, Um2, N_max: int = 6) -> float:
    """||W(u1, U1) - W(u2, U2)|| on the untruncated Fock space (up to the N_max cut of the span)."""
    if t == 0:
        return float(abs(np.exp(u1) - np.exp(u2)))
    B = _orthonormal_span([Up1, Um1, Up2, Um2])
    _, W1 = W_operator_reduced(t, u1, Up1, Um1, B, N_max)
    _, W2 = W_operator_reduced(t, u2, Up2, Um2, B, N_max)
    return float(np.linalg.norm(W1 - W2, 2))
