"""Lanczos approximation of exp(-t H) psi for Hermitian H with an a posteriori error bound."""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import eigh_tridiagonal


class KrylovNotConverged(RuntimeError):
    pass


def _lanczos(matvec, v0, m_max, breakdown=1e-14):
    n0 = np.linalg.norm(v0)
    V = [v0 / n0]
    alpha, beta = [], []
    w = matvec(V[0])
    for j in range(m_max):
        a = np.vdot(V[j], w).real
        w = w - a * V[j] - (beta[-1] * V[j - 1] if j > 0 else 0)
        # full reorthogonalization, twice is enough
        for _ in range(2):
            for q in V:
                w = w - np.vdot(q, w) * q
        alpha.append(a)
        b = np.linalg.norm(w)
        beta.append(b)
        if b < breakdown * max(1.0, abs(a)):
            break
        V.append(w / b)
        if j + 1 < m_max:
            w = matvec(V[-1])
    return np.array(V[:len(alpha)]), np.array(alpha), np.array(beta), n0


def _expm_tridiag(alpha, beta, tau):
    """exp(-tau T) e_1 for the symmetric tridiagonal T, plus its last component."""
    if alpha.size == 1:
        y = np.array([math.exp(-tau * alpha[0])])
        return y
    evals, evecs = eigh_tridiagonal(alpha, beta[:alpha.size - 1])
    shift = evals.min()
    return evecs @ (np.exp(-tau * (evals - shift)) * evecs[0]) * math.exp(-tau * shift)


def expm_apply(H, t: float, psi, tol: float = 1e-10, m_max: int = 60, max_substeps: int = 10_000,
               return_info: bool = False):
    """exp(-t H) psi by time-stepped Lanczos.

    Each substep accepts when the residual estimate beta_m |e_m^T exp(-tau T) e_1| |v|
    is below tol |v| tau / t; the accumulated estimate is returned with ``return_info``.
    """
    if t < 0:
        raise ValueError("expm_apply needs t >= 0")
    mat = getattr(H, "matrix", H)
    v = np.asarray(psi, dtype=complex).reshape(-1).copy()
    info = {"substeps": 0, "err_estimate": 0.0, "krylov_dims": []}
    if t == 0 or not np.any(v):
        return (v, info) if return_info else v
    matvec = mat.dot if hasattr(mat, "dot") else (lambda z: mat @ z)
    remaining = float(t)
    tau = remaining
    while remaining > 0:
        if info["substeps"] >= max_substeps:
            raise KrylovNotConverged(f"too many substeps ({max_substeps}); remaining time {remaining:g}; "
                                     f"last estimate {info['err_estimate']:.3e}")
        Vk, alpha, beta, nv = _lanczos(matvec, v, m_max)
        m = alpha.size
        happy = beta[-1] < 1e-14 * max(1.0, abs(alpha[-1]))
        tau = min(tau, remaining)
        while True:
            y = _expm_tridiag(alpha, beta, tau)
            err = 0.0 if happy else beta[-1] * abs(y[-1]) * nv
            if err <= tol * max(nv, 1e-300) * tau / t or happy:
                break
            tau *= 0.5
            if tau < 1e-12 * t:
                raise KrylovNotConverged(f"step size underflow at remaining time {remaining:g}; "
                                         f"Krylov dim {m}, last beta {beta[-1]:.3e}, estimate {err:.3e}")
        v = nv * (Vk.T @ y)
        remaining -= tau
        if remaining < 1e-15 * t:
            remaining = 0.0
        info["substeps"] += 1
        info["err_estimate"] += err
        info["krylov_dims"].append(m)
        tau = min(2 * tau, remaining) if remaining > 0 else tau
    info["relative_err_estimate"] = info["err_estimate"] / max(np.linalg.norm(psi), 1e-300)
    if info["relative_err_estimate"] > 1e-8:
        raise KrylovNotConverged(f"accumulated residual estimate {info['relative_err_estimate']:.3e} above 1e-8")
    return (v, info) if return_info else v
