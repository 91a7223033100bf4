# cython: language_level=3
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np

from libc.math cimport exp, log, sqrt, isfinite, INFINITY
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemm


cdef inline void gemm_rm(char ta, char tb, int m, int n, int k,
                         double* A, int lda, double* B, int ldb,
                         double* C, int ldc) noexcept nogil:
    # row-major C(m, n) = op(A) op(B), computed as column-major C^T = op(B)^T op(A)^T
    cdef double one = 1.0, zero = 0.0
    dgemm(&tb, &ta, &n, &m, &k, &one, B, &ldb, A, &lda, &zero, C, &ldc)


cdef enum:
    BLOCK = 256


cdef void row_norms(const double[:, ::1] Z, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, t
    cdef double acc
    for i in range(Z.shape[0]):
        acc = 0.0
        for t in range(Z.shape[1]):
            acc = acc + Z[i, t] * Z[i, t]
        out[i] = sqrt(acc)


def omu_neighbors(const double[:, ::1] Z, const long[::1] labels):
    cdef Py_ssize_t n = Z.shape[0], lo, hi, i, j
    cdef int d = Z.shape[1], rows, nn = n
    cdef double[::1] norms = np.empty(n)
    cdef long[::1] out = np.full(n, -1, dtype=np.int64)
    cdef double[:, ::1] dots = np.empty((min(n, BLOCK), n))
    cdef double best, c
    if n == 0:
        return np.asarray(out)
    with nogil:
        row_norms(Z, norms)
        lo = 0
        while lo < n:
            hi = min(lo + BLOCK, n)
            rows = hi - lo
            # dots[0:rows] = Z[lo:hi] @ Z.T
            gemm_rm(b'N', b'T', rows, nn, d, <double*> &Z[lo, 0], d, <double*> &Z[0, 0], d,
                    &dots[0, 0], nn)
            for i in range(lo, hi):
                best = -INFINITY
                for j in range(n):
                    if labels[j] == labels[i]:
                        continue
                    c = dots[i - lo, j] / (norms[i] * norms[j])
                    if c > best:
                        best = c
                        out[i] = j
            lo = hi
    return np.asarray(out)


def aggregate_scores(const double[:, :, ::1] act, const long[:, ::1] assign):
    cdef Py_ssize_t n_learn = act.shape[0], n_probe = act.shape[1]
    cdef Py_ssize_t n_subj = assign.shape[1], p, n, g
    cdef double[:, ::1] sim = np.zeros((n_probe, n_subj))
    with nogil:
        for p in range(n_probe):
            for n in range(n_learn):
                for g in range(n_subj):
                    sim[p, g] = sim[p, g] + act[n, p, assign[n, g]]
    return np.asarray(sim)


def max_cosine_per_subject(const double[:, ::1] P, const double[:, ::1] Z,
                           const long[::1] labels, Py_ssize_t n_subjects):
    cdef Py_ssize_t n_p = P.shape[0], n_z = Z.shape[0], lo, hi, p, r
    cdef int d = Z.shape[1], rows, nz = n_z
    cdef double[:, ::1] out = np.full((n_p, n_subjects), -INFINITY)
    cdef double[::1] pn = np.empty(n_p)
    cdef double[::1] zn = np.empty(n_z)
    cdef double[:, ::1] dots = np.empty((max(1, min(n_p, BLOCK)), max(1, n_z)))
    cdef double c
    if n_p == 0 or n_z == 0:
        return np.asarray(out)
    with nogil:
        row_norms(P, pn)
        row_norms(Z, zn)
        lo = 0
        while lo < n_p:
            hi = min(lo + BLOCK, n_p)
            rows = hi - lo
            gemm_rm(b'N', b'T', rows, nz, d, <double*> &P[lo, 0], d, <double*> &Z[0, 0], d,
                    &dots[0, 0], nz)
            for p in range(lo, hi):
                for r in range(n_z):
                    c = dots[p - lo, r] / (pn[p] * zn[r])
                    if c > out[p, labels[r]]:
                        out[p, labels[r]] = c
            lo = hi
    return np.asarray(out)


cdef double batch_loss_grad(double* S, const long* tgt, int nb, int C, double margin,
                            double* G) noexcept nogil:
    # S holds logits (nb, C); writes dLoss/dS into G, returns the loss
    cdef int i, c, n_known = 0, n_neg = 0
    cdef double top, lse, total_k = 0.0, total_n = 0.0, mean_s, inv
    for i in range(nb):
        if tgt[i] < 0:
            n_neg += 1
        else:
            n_known += 1
    for i in range(nb):
        if tgt[i] >= 0:
            S[i * C + tgt[i]] -= margin
        top = S[i * C]
        for c in range(1, C):
            if S[i * C + c] > top:
                top = S[i * C + c]
        lse = 0.0
        for c in range(C):
            lse += exp(S[i * C + c] - top)
        lse = top + log(lse)
        if tgt[i] >= 0:
            total_k += lse - S[i * C + tgt[i]]
            inv = 1.0 / n_known
            for c in range(C):
                G[i * C + c] = exp(S[i * C + c] - lse)
            G[i * C + tgt[i]] -= 1.0
            for c in range(C):
                G[i * C + c] *= inv
        else:
            mean_s = 0.0
            for c in range(C):
                mean_s += S[i * C + c]
            mean_s /= C
            total_n += lse - mean_s
            inv = 1.0 / n_neg
            for c in range(C):
                G[i * C + c] = (exp(S[i * C + c] - lse) - 1.0 / C) * inv
    cdef double loss = 0.0
    if n_known:
        loss += total_k / n_known
    if n_neg:
        loss += total_n / n_neg
    return loss


cdef int all_finite(const double* g, Py_ssize_t size) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(size):
        if not isfinite(g[i]):
            return 0
    return 1


cdef void momentum_update(double* p, double* v, const double* g, Py_ssize_t size,
                          double lr, double mu) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(size):
        v[i] = mu * v[i] - lr * g[i]
        p[i] += v[i]


def sgd_epoch(const double[:, ::1] X, const long[::1] targets, const long[::1] order,
              const long[::1] bounds,
              double[:, ::1] W1, double[::1] b1, double[:, ::1] W2, double[::1] b2,
              double[:, ::1] vW1, double[::1] vb1, double[:, ::1] vW2, double[::1] vb2,
              double lr, double mu, double margin):
    cdef int D = X.shape[1], H = W1.shape[1], C = W2.shape[1]
    cdef Py_ssize_t n_batches = bounds.shape[0] - 1
    cdef int max_nb = 0, nb, i, j, c, status = 0
    cdef Py_ssize_t bi, start, row
    cdef double total = 0.0, acc
    for bi in range(n_batches):
        if bounds[bi + 1] - bounds[bi] > max_nb:
            max_nb = bounds[bi + 1] - bounds[bi]
    if max_nb == 0:
        return 0.0

    cdef double* xb = <double*> malloc(max_nb * D * sizeof(double))
    cdef long* tb = <long*> malloc(max_nb * sizeof(long))
    cdef double* hid = <double*> malloc(max_nb * H * sizeof(double))
    cdef double* dhid = <double*> malloc(max_nb * H * sizeof(double))
    cdef double* s = <double*> malloc(max_nb * C * sizeof(double))
    cdef double* gs = <double*> malloc(max_nb * C * sizeof(double))
    cdef double* gW1 = <double*> malloc(D * H * sizeof(double))
    cdef double* gb1 = <double*> malloc(H * sizeof(double))
    cdef double* gW2 = <double*> malloc(H * C * sizeof(double))
    cdef double* gb2 = <double*> malloc(C * sizeof(double))
    try:
        with nogil:
            for bi in range(n_batches):
                start = bounds[bi]
                nb = <int> (bounds[bi + 1] - start)
                if nb == 0:
                    continue
                for i in range(nb):
                    row = order[start + i]
                    tb[i] = targets[row]
                    for j in range(D):
                        xb[i * D + j] = X[row, j]
                # forward
                gemm_rm(b'N', b'N', nb, H, D, xb, D, &W1[0, 0], H, hid, H)
                for i in range(nb):
                    for j in range(H):
                        acc = hid[i * H + j] + b1[j]
                        hid[i * H + j] = acc if acc > 0.0 else 0.0
                gemm_rm(b'N', b'N', nb, C, H, hid, H, &W2[0, 0], C, s, C)
                for i in range(nb):
                    for c in range(C):
                        s[i * C + c] += b2[c]
                total += batch_loss_grad(s, tb, nb, C, margin, gs)
                # backward
                gemm_rm(b'T', b'N', H, C, nb, hid, H, gs, C, gW2, C)
                for c in range(C):
                    acc = 0.0
                    for i in range(nb):
                        acc = acc + gs[i * C + c]
                    gb2[c] = acc
                gemm_rm(b'N', b'T', nb, H, C, gs, C, &W2[0, 0], C, dhid, H)
                for i in range(nb * H):
                    if hid[i] <= 0.0:
                        dhid[i] = 0.0
                gemm_rm(b'T', b'N', D, H, nb, xb, D, dhid, H, gW1, H)
                for j in range(H):
                    acc = 0.0
                    for i in range(nb):
                        acc = acc + dhid[i * H + j]
                    gb1[j] = acc
                if not (all_finite(gW1, D * H) and all_finite(gb1, H)
                        and all_finite(gW2, H * C) and all_finite(gb2, C)):
                    status = 1
                    break
                momentum_update(&W1[0, 0], &vW1[0, 0], gW1, D * H, lr, mu)
                momentum_update(&b1[0], &vb1[0], gb1, H, lr, mu)
                momentum_update(&W2[0, 0], &vW2[0, 0], gW2, H * C, lr, mu)
                momentum_update(&b2[0], &vb2[0], gb2, C, lr, mu)
    finally:
        free(xb); free(tb); free(hid); free(dhid); free(s); free(gs)
        free(gW1); free(gb1); free(gW2); free(gb2)
    if status:
        raise FloatingPointError("non-finite gradient during SGD epoch")
    return total / n_batches
