"""Reference (pure numpy + LAPACK) kernels.

The compiled twin in ``_ckernels.pyx`` follows the same steps and the same
branch decisions; only floating-point summation order may differ.
"""

import numpy as np
from scipy.linalg.lapack import dpocon, dpotrf, dpotrs

from .errors import NumericalError

# Upper bound on eigenvalues of the RLS state matrix. Directions the features
# never excite otherwise grow like lam**-n and swamp the update in roundoff.
P_CEILING = 1e8
# Reciprocal condition number below which the fusion system is jittered.
RCOND_MIN = 1e-12
JITTER_SCALE = 1e-8


def project_psd(S: np.ndarray) -> None:
    """Symmetrize ``S`` and clip negative eigenvalues to zero, in place.

    A successful Cholesky factorization proves there is nothing to clip, so
    the eigendecomposition only runs for singular or indefinite input and
    ``S`` is only rewritten when a negative eigenvalue is actually found.
    """
    S[...] = 0.5 * (S + S.T)
    _, info = dpotrf(S, lower=1, clean=0)
    if info == 0:
        return
    w, V = np.linalg.eigh(S)
    if w[0] < 0.0:
        S[...] = (V * np.maximum(w, 0.0)) @ V.T
        S[...] = 0.5 * (S + S.T)


def cap_eigenvalues(P: np.ndarray, p_max: float) -> bool:
    if not np.trace(P) > p_max:
        return False
    w, V = np.linalg.eigh(P)
    if w[-1] <= p_max:
        return False
    P[...] = (V * np.minimum(w, p_max)) @ V.T
    P[...] = 0.5 * (P + P.T)
    return True


def rls_update(M, Sigma, P, gamma, lam, u, s, p_max=P_CEILING):
    """One forgetting-factor update of ``(M, Sigma, P)`` in place.

    Returns the new effective sample size ``gamma``.
    """
    e = s - M @ u
    Pu = P @ u
    g = lam + u @ Pu
    if not (np.isfinite(g) and g > 0.0) or not np.all(np.isfinite(e)):
        raise NumericalError("non-finite or non-positive RLS gain denominator", g=g)
    gamma_new = lam * gamma + 1.0

    M += np.outer(e, Pu) / g
    Sigma -= (Sigma - (lam * lam / (g * g)) * np.outer(e, e)) / gamma_new
    project_psd(Sigma)
    P -= np.outer(Pu, Pu) / g
    P /= lam
    P[...] = 0.5 * (P + P.T)
    cap_eigenvalues(P, p_max)

    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(Sigma)) and np.all(np.isfinite(P))):
        raise NumericalError("non-finite model state after update")
    return gamma_new


def fuse_step(M_s, Sigma_s, M_r, Sigma_r, prev_mean, prev_cov, u_r,
              rcond_min=RCOND_MIN, jitter_scale=JITTER_SCALE):
    """Propagate the previous Gaussian through the load model and fuse it
    with the observation model.

    Returns ``(mean, cov, jittered)``.
    """
    K = M_s.shape[0]
    A = M_s[:, 1:]
    mu_s = M_s[:, 0] + A @ prev_mean
    mu_r = M_r @ u_r
    W1 = Sigma_s + A @ prev_cov @ A.T
    W1 = 0.5 * (W1 + W1.T)
    W2 = Sigma_r
    S = W1 + W2

    chol, info = dpotrf(S, lower=1, clean=1)
    ok = info == 0
    if ok:
        rcond, _ = dpocon(chol, np.abs(S).sum(axis=0).max(), uplo="L")
        ok = rcond >= rcond_min
    jittered = not ok
    if jittered:
        tr = np.trace(S)
        if not (np.isfinite(tr) and tr > 0.0):
            raise NumericalError("fusion system is singular")
        S = S + (jitter_scale * tr / K) * np.eye(K)
        chol, info = dpotrf(S, lower=1, clean=1)
        if info != 0:
            raise NumericalError("fusion system is singular after jitter")

    rhs = np.empty((K, K + 2), order="F")
    rhs[:, 0] = mu_r
    rhs[:, 1] = mu_s
    rhs[:, 2:] = W1
    X, _ = dpotrs(chol, rhs, lower=1)
    mean = W1 @ X[:, 0] + W2 @ X[:, 1]
    cov = W2 @ X[:, 2:]
    cov = 0.5 * (cov + cov.T)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NumericalError("non-finite forecast")
    return mean, cov, jittered
