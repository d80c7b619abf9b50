# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled trajectory kernel for the sector-resolved stochastic master equation.

Specialized for blocks of ``NB = 9`` real parameters (one 3 x 3 Hermitian
block per charge sector).  Trajectories are advanced in groups of ``LANES``
with the lane index innermost so the compiler vectorizes across independent
trajectories; every lane runs the same instruction sequence (short groups are
padded), so a trajectory's result does not depend on its position in a chunk.
See :mod:`seqdet.kernels` for the contract.
"""
import numpy as np
from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc

cdef enum:
    LANES = 8
    NB = 9

BLOCK_SIZE = NB


cdef inline void _matvec_block(const double* M, const double* x, double (*acc)[LANES]) noexcept nogil:
    """acc[i] += sum_j M[i, j] x[j] for one sector, all lanes."""
    cdef int i, j, l
    cdef double v
    for j in range(NB):
        for i in range(NB):
            v = M[i * NB + j]
            for l in range(LANES):
                acc[i][l] += v * x[j * LANES + l]


cdef inline void _zero(double (*acc)[LANES]) noexcept nogil:
    cdef int i, l
    for i in range(NB):
        for l in range(LANES):
            acc[i][l] = 0.0


cdef struct Sparse:
    int n
    int rows[NB * NB]
    int cols[NB * NB]
    double vals[NB * NB]


cdef void _sparse(const double[:, ::1] K, Sparse* s):
    cdef int i, j
    s.n = 0
    for i in range(NB):
        for j in range(NB):
            if K[i, j] != 0.0:
                s.rows[s.n] = i
                s.cols[s.n] = j
                s.vals[s.n] = K[i, j]
                s.n += 1


cdef inline void _spmv(const Sparse* s, const double* x, double (*acc)[LANES]) noexcept nogil:
    cdef int q, l
    cdef double v
    cdef const double* xc
    for q in range(s.n):
        v = s.vals[q]
        xc = x + s.cols[q] * LANES
        for l in range(LANES):
            acc[s.rows[q]][l] += v * xc[l]


cdef void _step(
    Py_ssize_t Ms, const Sparse* K0, const Sparse* K1, const Sparse* K2,
    const double* E, const double* F, const double* tv,
    double* r, double* y, const double* dW, const double* e, const double* dy,
    int scheme,
) noexcept nogil:
    cdef Py_ssize_t m
    cdef int i, l
    cdef double a0[NB][LANES]
    cdef double a1[NB][LANES]
    cdef double a2[NB][LANES]
    cdef double tr[LANES]
    cdef double* ym
    cdef double* rm
    # measurement or innovation map, sector by sector
    for m in range(Ms):
        rm = r + m * NB * LANES
        ym = y + m * NB * LANES
        _zero(a0)
        _zero(a1)
        if scheme == 0:
            _zero(a2)
            _spmv(K0, rm, a0)
            _spmv(K1, rm, a1)
            _spmv(K2, rm, a2)
            for i in range(NB):
                for l in range(LANES):
                    ym[i * LANES + l] = a0[i][l] + dy[l] * a1[i][l] + dy[l] * dy[l] * a2[i][l]
        else:
            _spmv(K1, rm, a1)
            for i in range(NB):
                for l in range(LANES):
                    ym[i * LANES + l] = rm[i * LANES + l] + dW[l] * (a1[i][l] - e[l] * rm[i * LANES + l])
    # deterministic propagator with feed from the sector above
    for l in range(LANES):
        tr[l] = 0.0
    for m in range(Ms):
        _zero(a0)
        _matvec_block(E + m * NB * NB, y + m * NB * LANES, a0)
        if m + 1 < Ms:
            _matvec_block(F + m * NB * NB, y + (m + 1) * NB * LANES, a0)
        rm = r + m * NB * LANES
        for i in range(NB):
            for l in range(LANES):
                rm[i * LANES + l] = a0[i][l]
                tr[l] += tv[i] * a0[i][l]
    for l in range(LANES):
        tr[l] = 1.0 / tr[l]
    for m in range(Ms * NB):
        for l in range(LANES):
            r[m * LANES + l] *= tr[l]


def run_chunk(
    const double[:, ::1] K0,
    const double[:, ::1] K1,
    const double[:, ::1] K2,
    const double[:, :, ::1] E,
    const double[:, :, ::1] F,
    const double[::1] c,
    const double[::1] tv,
    const double[:, ::1] r0,
    const double[::1] h,
    const double[:, ::1] noise,
    double dt,
    int scheme=0,
    int rec_every=0,
    bint keep_final=False,
    int n_diag=0,
):
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t n_steps = noise.shape[1]
    cdef Py_ssize_t Ms = r0.shape[0]
    if r0.shape[1] != NB or K0.shape[0] != NB or E.shape[1] != NB:
        raise ValueError(f"compiled kernel handles blocks of {NB} parameters only")
    if E.shape[0] != Ms or F.shape[0] != Ms:
        raise ValueError("propagator and state have different sector counts")
    cdef Py_ssize_t g, k, m, i, l, lane, nl
    cdef Py_ssize_t MB = Ms * NB
    cdef double v, hk

    S_arr = np.zeros(n)
    md_arr = np.full(n, np.inf)
    cdef double[::1] S = S_arr
    cdef double[::1] mind = md_arr
    final_arr = np.zeros((n if keep_final else 0, Ms, NB))
    cdef double[:, :, ::1] final = final_arr
    n_rec = n_steps // rec_every if rec_every > 0 else 0
    rec_arr = np.zeros((n, n_rec))
    cdef double[:, ::1] rec = rec_arr
    cdef double[:, ::1] nz = np.zeros((n_steps, LANES))

    cdef double* r = <double*>malloc(MB * LANES * sizeof(double))
    cdef double* y = <double*>malloc(MB * LANES * sizeof(double))
    if r == NULL or y == NULL:
        free(r)
        free(y)
        raise MemoryError()
    cdef double e[LANES]
    cdef double dW[LANES]
    cdef double dy[LANES]
    cdef double md[LANES]
    cdef double Sl[LANES]
    cdef double* rm
    cdef Sparse sK0, sK1, sK2
    _sparse(K0, &sK0)
    _sparse(K1, &sK1)
    _sparse(K2, &sK2)
    cdef const double* pE = &E[0, 0, 0]
    cdef const double* pF = &F[0, 0, 0]
    cdef const double* ptv = &tv[0]

    try:
        for g in range(0, n, LANES):
            nl = min(LANES, n - g)
            nz[:, :] = 0.0
            for lane in range(nl):
                for k in range(n_steps):
                    nz[k, lane] = noise[g + lane, k]
            with nogil:
                for m in range(Ms):
                    for i in range(NB):
                        for l in range(LANES):
                            r[(m * NB + i) * LANES + l] = r0[m, i]
                for l in range(LANES):
                    md[l] = INFINITY
                    Sl[l] = 0.0
                for k in range(n_steps):
                    for l in range(LANES):
                        e[l] = 0.0
                    for m in range(Ms):
                        for i in range(NB):
                            v = c[i]
                            if v != 0.0:
                                rm = r + (m * NB + i) * LANES
                                for l in range(LANES):
                                    e[l] += v * rm[l]
                    for l in range(LANES):
                        dW[l] = nz[k, l]
                        dy[l] = e[l] * dt + dW[l]
                    _step(Ms, &sK0, &sK1, &sK2, pE, pF, ptv, r, y, dW, e, dy, scheme)
                    hk = h[k]
                    for l in range(LANES):
                        Sl[l] += hk * dy[l]
                    if scheme != 0:
                        for m in range(Ms):
                            for i in range(n_diag):
                                rm = r + (m * NB + i) * LANES
                                for l in range(LANES):
                                    if rm[l] < md[l]:
                                        md[l] = rm[l]
                    if rec_every > 0 and (k + 1) % rec_every == 0:
                        for lane in range(nl):
                            rec[g + lane, k // rec_every] = dy[lane] / dt
            for lane in range(nl):
                S[g + lane] = Sl[lane]
                mind[g + lane] = md[lane]
                if keep_final:
                    for m in range(Ms):
                        for i in range(NB):
                            final[g + lane, m, i] = r[(m * NB + i) * LANES + lane]
    finally:
        free(r)
        free(y)
    return S_arr, (final_arr if keep_final else None), md_arr, (rec_arr if rec_every > 0 else None)
