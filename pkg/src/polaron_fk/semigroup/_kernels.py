"""Compiled inner loops for the Feynman-Kac estimator on the confined single-polaron model.

One call processes a chunk of paths against all start points. Increments are
shared by every start point, so trigonometric tables, the V integral and the
Stratonovich phase are computed per path and specialized per start point
with a few multiply-adds (V quadratic, A affine).
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _apply_W_adjoint(psi, Up, Um, scale, damp, src, dst, fac, cnt, Nmax, out, work, term):
    """out = scale * F(-Um) e^{-tN} sum_n a(-Up)^n / n! psi, with real Up, Um."""
    D = psi.shape[0]
    M = Up.shape[0]
    for c in range(D):
        work[c] = psi[c]
        term[c] = psi[c]
    for n in range(1, Nmax + 1):
        for c in range(D):
            out[c] = 0.0
        for i in range(M):
            hi = -Up[i]
            if hi == 0.0:
                continue
            for j in range(cnt[i]):
                out[dst[i, j]] += hi * fac[i, j] * term[src[i, j]]
        for c in range(D):
            term[c] = out[c] / n
            work[c] += term[c]
    for c in range(D):
        work[c] *= damp[c]
        term[c] = work[c]
        out[c] = work[c]
    # out currently holds the damped vector; add the creation series
    acc = work  # reuse buffer: acc keeps the running sum
    for c in range(D):
        acc[c] = term[c]
    for n in range(1, Nmax + 1):
        for c in range(D):
            out[c] = 0.0
        for i in range(M):
            hi = -Um[i]
            if hi == 0.0:
                continue
            for j in range(cnt[i]):
                out[src[i, j]] += hi * fac[i, j] * term[dst[i, j]]
        for c in range(D):
            term[c] = out[c] / n
            acc[c] += term[c]
    for c in range(D):
        out[c] = scale * acc[c]


@njit(cache=True, nogil=True)
def fk_chunk_confined(incr, dt, X, lo, hi, w0, w1, f0, f1, coef,
                      v_const, v_lin, v_quad, a_const, a_lin,
                      pad, g_lo, g_h, g_n,
                      src, dst, fac, cnt, damp, Nmax,
                      out_sum, out_sq, out_alive, out_bad,
                      ipw, out_ip_sum, out_ip_sq):
    """Accumulate per start point sums of the FK integrand and, per path, the
    weighted inner products sum_k <ipw[q, k] | integrand> (for matrix elements)."""
    P, n, _ = incr.shape
    K = X.shape[0]
    M = coef.shape[0]
    F0 = w0.shape[0]
    F1 = w1.shape[0]
    R = pad.shape[0]
    D = pad.shape[3]
    decay = math.exp(-dt)

    SX0 = np.empty((F0, K))
    CX0 = np.empty((F0, K))
    SX1 = np.empty((F1, K))
    CX1 = np.empty((F1, K))
    for k in range(K):
        for f in range(F0):
            SX0[f, k] = math.sin(w0[f] * X[k, 0])
            CX0[f, k] = math.cos(w0[f] * X[k, 0])
        for f in range(F1):
            SX1[f, k] = math.sin(w1[f] * X[k, 1])
            CX1[f, k] = math.cos(w1[f] * X[k, 1])

    b = np.empty((n + 1, 2))
    Sb0 = np.empty((n, F0))
    Cb0 = np.empty((n, F0))
    Sb1 = np.empty((n, F1))
    Cb1 = np.empty((n, F1))
    s0 = np.empty((F0, K))
    s1 = np.empty((F1, K))
    Um = np.empty((M, K))
    Up = np.empty((M, K))
    u = np.empty(K)
    alive = np.empty(K)
    psi = np.empty(D, dtype=np.complex128)
    res = np.empty(D, dtype=np.complex128)
    work = np.empty(D, dtype=np.complex128)
    term = np.empty(D, dtype=np.complex128)
    Umk = np.empty(M)
    Upk = np.empty(M)
    ip = np.empty(R, dtype=np.complex128)

    for p in range(P):
        for q in range(R):
            ip[q] = 0.0
        b[0, 0] = 0.0
        b[0, 1] = 0.0
        for i in range(n):
            b[i + 1, 0] = b[i, 0] + incr[p, i, 0]
            b[i + 1, 1] = b[i, 1] + incr[p, i, 1]
        for i in range(n):
            for f in range(F0):
                Sb0[i, f] = math.sin(w0[f] * b[i, 0])
                Cb0[i, f] = math.cos(w0[f] * b[i, 0])
            for f in range(F1):
                Sb1[i, f] = math.sin(w1[f] * b[i, 1])
                Cb1[i, f] = math.cos(w1[f] * b[i, 1])
        # x-independent parts of the potential integral and the phase
        sb0 = 0.0
        sb1 = 0.0
        quad = 0.0
        for i in range(n):
            sb0 += b[i, 0]
            sb1 += b[i, 1]
            quad += (b[i, 0] * (v_quad[0, 0] * b[i, 0] + v_quad[0, 1] * b[i, 1])
                     + b[i, 1] * (v_quad[1, 0] * b[i, 0] + v_quad[1, 1] * b[i, 1]))
        phi_path = 0.0
        for i in range(n):
            m0 = 0.5 * (b[i, 0] + b[i + 1, 0])
            m1 = 0.5 * (b[i, 1] + b[i + 1, 1])
            phi_path += (a_lin[0, 0] * m0 + a_lin[0, 1] * m1) * incr[p, i, 0]
            phi_path += (a_lin[1, 0] * m0 + a_lin[1, 1] * m1) * incr[p, i, 1]

        for k in range(K):
            u[k] = 0.0
            alive[k] = 1.0
        for m in range(M):
            for k in range(K):
                Um[m, k] = 0.0
                Up[m, k] = 0.0

        for i in range(n):
            et = math.exp(-i * dt) * dt
            bi0 = b[i, 0]
            bi1 = b[i, 1]
            for k in range(K):
                y0 = X[k, 0] + bi0
                y1 = X[k, 1] + bi1
                if not (y0 > lo[0] and y0 < hi[0] and y1 > lo[1] and y1 < hi[1]):
                    alive[k] = 0.0
            for f in range(F0):
                cb = Cb0[i, f]
                sb = Sb0[i, f]
                for k in range(K):
                    s0[f, k] = SX0[f, k] * cb + CX0[f, k] * sb
            for f in range(F1):
                cb = Cb1[i, f]
                sb = Sb1[i, f]
                for k in range(K):
                    s1[f, k] = SX1[f, k] * cb + CX1[f, k] * sb
            for m in range(M):
                cm = coef[m]
                a0 = f0[m]
                a1 = f1[m]
                for k in range(K):
                    th = cm * s0[a0, k] * s1[a1, k] * alive[k]
                    u[k] += th * Up[m, k] * dt
                    Um[m, k] += et * th
                    Up[m, k] = decay * (Up[m, k] + th * dt)

        tfin = n * dt
        for k in range(K):
            y0 = X[k, 0] + b[n, 0]
            y1 = X[k, 1] + b[n, 1]
            if alive[k] == 0.0 or not (y0 > lo[0] and y0 < hi[0] and y1 > lo[1] and y1 < hi[1]):
                continue
            x0 = X[k, 0]
            x1 = X[k, 1]
            vint = tfin * (v_const + v_lin[0] * x0 + v_lin[1] * x1
                           + x0 * (v_quad[0, 0] * x0 + v_quad[0, 1] * x1)
                           + x1 * (v_quad[1, 0] * x0 + v_quad[1, 1] * x1))
            g0 = v_lin[0] + (v_quad[0, 0] + v_quad[0, 0]) * x0 + (v_quad[0, 1] + v_quad[1, 0]) * x1
            g1 = v_lin[1] + (v_quad[1, 0] + v_quad[0, 1]) * x0 + (v_quad[1, 1] + v_quad[1, 1]) * x1
            vint += dt * (g0 * sb0 + g1 * sb1 + quad)
            c0 = a_const[0] + a_lin[0, 0] * x0 + a_lin[0, 1] * x1
            c1 = a_const[1] + a_lin[1, 0] * x0 + a_lin[1, 1] * x1
            phi = c0 * b[n, 0] + c1 * b[n, 1] + phi_path
            # e^{conj(u) - conj(S)} with S = int V - i Phi and real u
            logw = u[k] - vint
            if logw > 700.0:
                out_bad[k] += 1
                continue
            scale = math.exp(logw) * complex(math.cos(phi), -math.sin(phi))
            out_alive[k] += 1
            for m in range(M):
                Umk[m] = Um[m, k]
                Upk[m] = Up[m, k]
            # multilinear interpolation weights
            s = (y0 - g_lo[0]) / g_h[0]
            r = (y1 - g_lo[1]) / g_h[1]
            i0 = int(math.floor(s))
            j0 = int(math.floor(r))
            if i0 > g_n - 1:
                i0 = g_n - 1
            if j0 > g_n - 1:
                j0 = g_n - 1
            fs = s - i0
            fr = r - j0
            for q in range(R):
                for c in range(D):
                    psi[c] = ((1 - fs) * (1 - fr) * pad[q, i0, j0, c] + fs * (1 - fr) * pad[q, i0 + 1, j0, c]
                              + (1 - fs) * fr * pad[q, i0, j0 + 1, c] + fs * fr * pad[q, i0 + 1, j0 + 1, c])
                _apply_W_adjoint(psi, Upk, Umk, scale, damp, src, dst, fac, cnt, Nmax, res, work, term)
                for c in range(D):
                    out_sum[q, k, c] += res[c]
                    out_sq[q, k, c] += res[c].real * res[c].real + res[c].imag * res[c].imag
                    ip[q] += ipw[q, k, c] * res[c]
        for q in range(R):
            out_ip_sum[q] += ip[q]
            out_ip_sq[q] += ip[q].real * ip[q].real + ip[q].imag * ip[q].imag
