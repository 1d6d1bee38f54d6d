# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recursion and xorshift64* stream.

Mirrors ``_kernels_py`` function for function. Row-major buffers are handed
to column-major BLAS by swapping operand roles.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdint cimport uint64_t
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def xorshift_uniform(state, Py_ssize_t n):
    cdef uint64_t x = <uint64_t>state
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double inv = 1.0 / 9007199254740992.0
    with nogil:
        for i in range(n):
            x ^= x >> 12
            x ^= x << 25
            x ^= x >> 27
            ov[i] = <double>((x * <uint64_t>0x2545F4914F6CDD1DULL) >> 11) * inv
    return out, int(x)


# Arguments are clamped where the result is already saturated in float64,
# so -ffast-math never sees an infinite exp().
cdef inline double _sig(double z) noexcept nogil:
    if z < -350.0:
        return 0.0
    return 1.0 / (1.0 + exp(-z))


cdef inline double _tanh(double z) noexcept nogil:
    if z < -175.0:
        return -1.0
    if z > 175.0:
        return 1.0
    return 2.0 / (1.0 + exp(-2.0 * z)) - 1.0


def lstm_forward(xw, U):
    xw = np.ascontiguousarray(xw, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    cdef int B = xw.shape[0], T = xw.shape[1], G = xw.shape[2]
    cdef int h = G // 4
    H = np.empty((B, T, h))
    C = np.empty((B, T, h))
    A = np.empty((B, T, G))
    if B == 0 or T == 0:
        return H, C, A
    cdef double[:, :, ::1] xv = xw
    cdef double[:, ::1] uv = U
    cdef double[:, :, ::1] Hv = H
    cdef double[:, :, ::1] Cv = C
    cdef double[:, :, ::1] Av = A
    cdef double[:, ::1] hp = np.zeros((B, h))
    cdef double[:, ::1] cp = np.zeros((B, h))
    cdef double[:, ::1] z = np.empty((B, G))
    cdef int t, b, j
    cdef double ig, fg, gg, og, c
    cdef double one = 1.0
    cdef char tr = b'T'
    cdef char nt = b'N'
    with nogil:
        for t in range(T):
            for b in range(B):
                for j in range(G):
                    z[b, j] = xv[b, t, j]
            # z (B x 4h) += hp (B x h) @ U.T, as column-major z^T = U hp^T
            dgemm(&tr, &nt, &G, &B, &h, &one, &uv[0, 0], &h, &hp[0, 0], &h,
                  &one, &z[0, 0], &G)
            for b in range(B):
                for j in range(h):
                    ig = _sig(z[b, j])
                    fg = _sig(z[b, h + j])
                    gg = _tanh(z[b, 2 * h + j])
                    og = _sig(z[b, 3 * h + j])
                    c = fg * cp[b, j] + ig * gg
                    cp[b, j] = c
                    hp[b, j] = og * _tanh(c)
                    Av[b, t, j] = ig
                    Av[b, t, h + j] = fg
                    Av[b, t, 2 * h + j] = gg
                    Av[b, t, 3 * h + j] = og
                    Cv[b, t, j] = c
                    Hv[b, t, j] = hp[b, j]
    return H, C, A


def lstm_backward(dH, A, C, U):
    dH = np.ascontiguousarray(dH, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    cdef int B = dH.shape[0], T = dH.shape[1], h = dH.shape[2]
    cdef int G = 4 * h
    dZ = np.empty((B, T, G))
    if B == 0 or T == 0:
        return dZ
    cdef double[:, :, ::1] dHv = dH
    cdef double[:, :, ::1] Av = A
    cdef double[:, :, ::1] Cv = C
    cdef double[:, ::1] uv = U
    cdef double[:, :, ::1] dZv = dZ
    cdef double[:, ::1] dh_next = np.zeros((B, h))
    cdef double[:, ::1] dc_next = np.zeros((B, h))
    cdef double[:, ::1] dz = np.empty((B, G))
    cdef int t, b, j
    cdef double ig, fg, gg, og, tc, dh, dc, cprev
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'N'
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(h):
                    ig = Av[b, t, j]
                    fg = Av[b, t, h + j]
                    gg = Av[b, t, 2 * h + j]
                    og = Av[b, t, 3 * h + j]
                    tc = _tanh(Cv[b, t, j])
                    cprev = Cv[b, t - 1, j] if t > 0 else 0.0
                    dh = dHv[b, t, j] + dh_next[b, j]
                    dc = dc_next[b, j] + dh * og * (1.0 - tc * tc)
                    dz[b, j] = dc * gg * ig * (1.0 - ig)
                    dz[b, h + j] = dc * cprev * fg * (1.0 - fg)
                    dz[b, 2 * h + j] = dc * ig * (1.0 - gg * gg)
                    dz[b, 3 * h + j] = dh * tc * og * (1.0 - og)
                    dc_next[b, j] = dc * fg
                for j in range(G):
                    dZv[b, t, j] = dz[b, j]
            # dh_next (B x h) = dz (B x 4h) @ U, as column-major dh^T = U^T dz^T
            dgemm(&nt, &nt, &h, &B, &G, &one, &uv[0, 0], &h, &dz[0, 0], &G,
                  &zero, &dh_next[0, 0], &h)
    return dZ
