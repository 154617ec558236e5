# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the per-hour update and the per-step fusion.

Mirrors ``_kernels_py`` step for step, with LAPACK taken from scipy.
"""

import numpy as np

from libc.math cimport isfinite
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_lapack cimport dpocon, dpotrf, dpotrs, dsyev

from .errors import NumericalError
from ._kernels_py import JITTER_SCALE, P_CEILING, RCOND_MIN


cdef int _eigh(double* a, double* w, int n) noexcept nogil:
    # a (n x n, symmetric) is overwritten with eigenvectors in columns.
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    cdef int lwork = n * (n + 4) + 64
    cdef int info = 0
    cdef double* work = <double*> malloc(lwork * sizeof(double))
    if work == NULL:
        return -1
    dsyev(&jobz, &uplo, &n, a, &n, w, work, &lwork, &info)
    free(work)
    return info


cdef int _rebuild(double[:, ::1] S, double* V, double* w, int n) noexcept nogil:
    # S = V diag(w) V^T with V column-major, then exact symmetrization.
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = 0.0
            for k in range(n):
                acc += V[i + k * n] * w[k] * V[j + k * n]
            S[i, j] = acc
            S[j, i] = acc
    return 0


cdef int _project_psd(double[:, ::1] S, int n) noexcept nogil:
    cdef int i, j, info = 0
    cdef char uplo = b'L'
    cdef double v
    cdef double* a = <double*> malloc(n * n * sizeof(double))
    cdef double* w = <double*> malloc(n * sizeof(double))
    if a == NULL or w == NULL:
        free(a)
        free(w)
        return -1
    for i in range(n):
        for j in range(i):
            v = 0.5 * (S[i, j] + S[j, i])
            S[i, j] = v
            S[j, i] = v
    for i in range(n):
        for j in range(n):
            a[i + j * n] = S[i, j]
    dpotrf(&uplo, &n, a, &n, &info)
    if info != 0:
        for i in range(n):
            for j in range(n):
                a[i + j * n] = S[i, j]
        info = _eigh(a, w, n)
        if info == 0 and w[0] < 0.0:
            for i in range(n):
                if w[i] < 0.0:
                    w[i] = 0.0
            _rebuild(S, a, w, n)
    free(a)
    free(w)
    return 0


cdef int _cap_eigenvalues(double[:, ::1] P, int n, double p_max) noexcept nogil:
    cdef int i, j, info
    cdef double tr = 0.0
    for i in range(n):
        tr += P[i, i]
    if not tr > p_max:
        return 0
    cdef double* a = <double*> malloc(n * n * sizeof(double))
    cdef double* w = <double*> malloc(n * sizeof(double))
    if a == NULL or w == NULL:
        free(a)
        free(w)
        return -1
    for i in range(n):
        for j in range(n):
            a[i + j * n] = P[i, j]
    info = _eigh(a, w, n)
    if info == 0 and w[n - 1] > p_max:
        for i in range(n):
            if w[i] > p_max:
                w[i] = p_max
        _rebuild(P, a, w, n)
    free(a)
    free(w)
    return 1


cdef bint _all_finite(double[:, ::1] X) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            if not isfinite(X[i, j]):
                return False
    return True


def rls_update(double[:, ::1] M, double[:, ::1] Sigma, double[:, ::1] P,
               double gamma, double lam, const double[::1] u, const double[::1] s,
               double p_max=P_CEILING):
    cdef int K = M.shape[0]
    cdef int D = M.shape[1]
    cdef int i, j
    cdef double acc, q, g, gamma_new, coef, v
    if Sigma.shape[0] != K or Sigma.shape[1] != K or P.shape[0] != D or P.shape[1] != D \
            or u.shape[0] != D or s.shape[0] != K:
        raise ValueError("dimension mismatch in rls_update")

    e_arr = np.empty(K)
    pu_arr = np.empty(D)
    cdef double[::1] e = e_arr
    cdef double[::1] Pu = pu_arr
    cdef bint finite = True

    with nogil:
        for i in range(K):
            acc = 0.0
            for j in range(D):
                acc += M[i, j] * u[j]
            e[i] = s[i] - acc
            if not isfinite(e[i]):
                finite = False
        q = 0.0
        for i in range(D):
            acc = 0.0
            for j in range(D):
                acc += P[i, j] * u[j]
            Pu[i] = acc
            q += u[i] * acc
        g = lam + q
    if not (finite and isfinite(g) and g > 0.0):
        raise NumericalError("non-finite or non-positive RLS gain denominator", g=g)

    with nogil:
        gamma_new = lam * gamma + 1.0
        for i in range(K):
            for j in range(D):
                M[i, j] += e[i] * Pu[j] / g
        coef = lam * lam / (g * g)
        for i in range(K):
            for j in range(K):
                Sigma[i, j] -= (Sigma[i, j] - coef * (e[i] * e[j])) / gamma_new
        _project_psd(Sigma, K)
        for i in range(D):
            for j in range(D):
                P[i, j] = (P[i, j] - Pu[i] * Pu[j] / g) / lam
        for i in range(D):
            for j in range(i):
                v = 0.5 * (P[i, j] + P[j, i])
                P[i, j] = v
                P[j, i] = v
        _cap_eigenvalues(P, D, p_max)
        finite = _all_finite(M) and _all_finite(Sigma) and _all_finite(P)
    if not finite:
        raise NumericalError("non-finite model state after update")
    return gamma_new


def fuse_step(const double[:, ::1] M_s, const double[:, ::1] Sigma_s,
              const double[:, ::1] M_r, const double[:, ::1] Sigma_r,
              const double[::1] prev_mean, const double[:, ::1] prev_cov,
              const double[::1] u_r, double rcond_min=RCOND_MIN,
              double jitter_scale=JITTER_SCALE):
    cdef int K = M_s.shape[0]
    cdef int Dr = M_r.shape[1]
    cdef int i, j, l, info = 0, nrhs = K + 2
    cdef double acc, anorm, rcond = 0.0, tr, eps, v
    cdef char uplo = b'L'
    if M_s.shape[1] != K + 1 or Sigma_s.shape[0] != K or Sigma_r.shape[0] != K \
            or M_r.shape[0] != K or u_r.shape[0] != Dr or prev_mean.shape[0] != K \
            or prev_cov.shape[0] != K:
        raise ValueError("dimension mismatch in fuse_step")

    mean_arr = np.empty(K)
    cov_arr = np.empty((K, K))
    cdef double[::1] mean = mean_arr
    cdef double[:, ::1] cov = cov_arr
    cdef double[:, ::1] W1 = np.empty((K, K))
    cdef double[:, ::1] T1 = np.empty((K, K))
    cdef double[::1] mu_s = np.empty(K)
    cdef double[::1] mu_r = np.empty(K)
    cdef double[::1] chol = np.empty(K * K)
    cdef double[::1] S = np.empty(K * K)
    cdef double[::1] B = np.empty(K * nrhs)
    cdef double[::1] work = np.empty(3 * K)
    cdef int[::1] iwork = np.empty(K, dtype=np.intc)
    cdef bint jittered = False

    with nogil:
        for i in range(K):
            acc = M_s[i, 0]
            for j in range(K):
                acc += M_s[i, j + 1] * prev_mean[j]
            mu_s[i] = acc
            acc = 0.0
            for j in range(Dr):
                acc += M_r[i, j] * u_r[j]
            mu_r[i] = acc
        # T1 = A prev_cov, W1 = Sigma_s + T1 A^T, with A = M_s[:, 1:]
        for i in range(K):
            for j in range(K):
                acc = 0.0
                for l in range(K):
                    acc += M_s[i, l + 1] * prev_cov[l, j]
                T1[i, j] = acc
        for i in range(K):
            for j in range(K):
                acc = 0.0
                for l in range(K):
                    acc += T1[i, l] * M_s[j, l + 1]
                W1[i, j] = Sigma_s[i, j] + acc
        for i in range(K):
            for j in range(i):
                v = 0.5 * (W1[i, j] + W1[j, i])
                W1[i, j] = v
                W1[j, i] = v
        anorm = 0.0
        for j in range(K):
            acc = 0.0
            for i in range(K):
                S[i + j * K] = W1[i, j] + Sigma_r[i, j]
                chol[i + j * K] = S[i + j * K]
                acc += S[i + j * K] if S[i + j * K] >= 0 else -S[i + j * K]
            if acc > anorm:
                anorm = acc
        dpotrf(&uplo, &K, &chol[0], &K, &info)
        if info == 0:
            dpocon(&uplo, &K, &chol[0], &K, &anorm, &rcond, &work[0], &iwork[0], &info)
            jittered = info != 0 or not (rcond >= rcond_min)
        else:
            jittered = True
        tr = 0.0
        if jittered:
            for i in range(K):
                tr += S[i + i * K]
    if jittered:
        if not (isfinite(tr) and tr > 0.0):
            raise NumericalError("fusion system is singular")
        eps = jitter_scale * tr / K
        with nogil:
            for i in range(K * K):
                chol[i] = S[i]
            for i in range(K):
                chol[i + i * K] += eps
            info = 0
            dpotrf(&uplo, &K, &chol[0], &K, &info)
        if info != 0:
            raise NumericalError("fusion system is singular after jitter")

    with nogil:
        for i in range(K):
            B[i] = mu_r[i]
            B[i + K] = mu_s[i]
            for j in range(K):
                B[i + (j + 2) * K] = W1[i, j]
        dpotrs(&uplo, &K, &nrhs, &chol[0], &K, &B[0], &K, &info)
        for i in range(K):
            acc = 0.0
            for j in range(K):
                acc += W1[i, j] * B[j] + Sigma_r[i, j] * B[j + K]
            mean[i] = acc
        for i in range(K):
            for j in range(K):
                acc = 0.0
                for l in range(K):
                    acc += Sigma_r[i, l] * B[l + (j + 2) * K]
                cov[i, j] = acc
        for i in range(K):
            for j in range(i):
                v = 0.5 * (cov[i, j] + cov[j, i])
                cov[i, j] = v
                cov[j, i] = v
        info = 1
        for i in range(K):
            if not isfinite(mean[i]):
                info = 0
            for j in range(K):
                if not isfinite(cov[i, j]):
                    info = 0
    if info == 0:
        raise NumericalError("non-finite forecast")
    return mean_arr, cov_arr, bool(jittered)
