"""Synthetic panels from known models, and brute-force reference solutions.

Nothing here calls into the learner or forecaster kernels: the references
are dense solves and plain-float recursions so they can check those paths
independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import ConfigError
from .features import R_FEATURES, TempContext, build_feature_r, update_temp_context
from .panel import EntityPanel, get_scheme


def random_spd(K: int, rng: np.random.Generator, eps: float = 1e-6) -> np.ndarray:
    A = rng.standard_normal((K, K))
    return A @ A.T + eps * np.eye(K)


def _is_psd(S, tol=1e-12):
    S = np.asarray(S)
    if not np.allclose(S, S.T, rtol=0, atol=tol * max(1.0, np.abs(S).max())):
        return False
    return np.linalg.eigvalsh(0.5 * (S + S.T))[0] >= -tol * max(1.0, np.abs(S).max())


def _sqrt_factor(S: np.ndarray) -> np.ndarray:
    """Some ``F`` with ``F F' = S`` for a PSD ``S`` (possibly singular)."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (S + S.T))
        return V * np.sqrt(np.maximum(w, 0.0))


@dataclass
class SyntheticSpec:
    """A known vector model to sample panels from.

    Arrays are stacked over calendar types: ``M_s`` is ``(C, K, K+1)``,
    ``Sigma_s`` and ``Sigma_r`` are ``(C, K, K)`` and ``M_r`` is
    ``(C, K, 3K)``. Temperatures follow a per-entity daily sinusoid
    ``base + amplitude * sin(2 pi (hour - phase) / 24)`` plus Gaussian noise.
    With ``observation=False`` loads follow the transition model alone;
    otherwise each step draws from the product of the transition Gaussian and
    the observation Gaussian built from that hour's temperature features.
    """

    M_s: np.ndarray
    Sigma_s: np.ndarray
    M_r: np.ndarray = None
    Sigma_r: np.ndarray = None
    T: int = 24 * 60
    seed: int = 0
    scheme: str = "hour48"
    observation: bool = False
    temp_base: np.ndarray = None
    temp_amplitude: np.ndarray = None
    temp_phase: np.ndarray = None
    temp_noise: np.ndarray = None
    s0: np.ndarray = None
    start: str = "2021-01-04T00:00:00+00:00"
    entity_ids: list = None

    def __post_init__(self):
        self.M_s = np.asarray(self.M_s, dtype=np.float64)
        self.Sigma_s = np.asarray(self.Sigma_s, dtype=np.float64)
        if self.M_s.ndim == 2:
            self.M_s = self.M_s[None]
        if self.Sigma_s.ndim == 2:
            self.Sigma_s = self.Sigma_s[None]
        C, K, D = self.M_s.shape
        if D != K + 1:
            raise ConfigError(f"M_s must be K x (K+1) per calendar type, got {self.M_s.shape[1:]}")
        if get_scheme(self.scheme).C != C:
            raise ConfigError(f"scheme {self.scheme!r} has {get_scheme(self.scheme).C} types, spec has {C}")
        if self.Sigma_s.shape != (C, K, K):
            raise ConfigError("Sigma_s must be (C, K, K)")
        if self.M_r is None:
            self.M_r = np.zeros((C, K, K * R_FEATURES))
        if self.Sigma_r is None:
            self.Sigma_r = np.tile(np.eye(K), (C, 1, 1))
        self.M_r = np.asarray(self.M_r, dtype=np.float64).reshape(C, K, K * R_FEATURES)
        self.Sigma_r = np.asarray(self.Sigma_r, dtype=np.float64).reshape(C, K, K)

        def per_entity(x, default):
            return np.broadcast_to(np.asarray(default if x is None else x, dtype=np.float64), (K,)).copy()

        self.temp_base = per_entity(self.temp_base, 60.0)
        self.temp_amplitude = per_entity(self.temp_amplitude, 15.0)
        self.temp_phase = per_entity(self.temp_phase, 9.0)
        self.temp_noise = per_entity(self.temp_noise, 3.0)
        if self.entity_ids is None:
            self.entity_ids = [f"e{k + 1}" for k in range(K)]
        if self.T < 1:
            raise ConfigError("T must be positive")

        for c in range(C):
            if not _is_psd(self.Sigma_s[c]):
                raise ConfigError(f"Sigma_s for calendar type {c + 1} is not symmetric PSD")
            if self.observation and not _is_psd(self.Sigma_r[c]):
                raise ConfigError(f"Sigma_r for calendar type {c + 1} is not symmetric PSD")
            rho = np.abs(np.linalg.eigvals(self.M_s[c, :, 1:])).max()
            if rho >= 1.0:
                raise ConfigError(f"load feedback for calendar type {c + 1} has spectral radius {rho:.4f} >= 1")

    @property
    def K(self) -> int:
        return self.M_s.shape[1]

    @property
    def C(self) -> int:
        return self.M_s.shape[0]

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            out[name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def make_ar_spec(
    K: int,
    *,
    scheme: str = "hour48",
    level: float = 10.0,
    feedback: float = 0.6,
    coupling: float = 0.15,
    daily_amplitude: float = 0.3,
    noise: float = 0.0,
    noise_corr: float = 0.5,
    weekend_factor: float = 0.8,
    T: int = 24 * 60,
    seed: int = 0,
    **kwargs,
) -> SyntheticSpec:
    """A stationary spec whose per-type intercepts give loads a daily shape.

    The feedback block is ``feedback * I + coupling * (ones - I) / K`` with
    random sign flips on the coupling, so entities are correlated but the
    spectral radius stays below ``feedback + coupling < 1``. Equilibrium
    loads sit near ``level`` and swing by ``daily_amplitude * level`` across
    the day; weekend and holiday types scale the level by ``weekend_factor``.
    ``noise`` is the innovation standard deviation, with pairwise
    correlation ``noise_corr``.
    """
    rng = np.random.default_rng(seed)
    sch = get_scheme(scheme)
    C = sch.C
    A = feedback * np.eye(K)
    off = coupling * rng.choice([-1.0, 1.0], size=(K, K)) / K
    np.fill_diagonal(off, 0.0)
    A = A + off
    shape_phase = rng.uniform(0, 24, size=K)
    M_s = np.empty((C, K, K + 1))
    for c in range(C):
        hour = c % 24
        weekend = weekend_factor if c >= 24 else 1.0
        target = level * weekend * (1.0 + daily_amplitude * np.sin(2 * np.pi * (hour - shape_phase) / 24))
        M_s[c, :, 0] = (np.eye(K) - A) @ target
        M_s[c, :, 1:] = A
    corr = np.full((K, K), noise_corr)
    np.fill_diagonal(corr, 1.0)
    Sigma_s = np.tile(noise ** 2 * corr, (C, 1, 1))
    return SyntheticSpec(M_s, Sigma_s, T=T, seed=seed, scheme=scheme, **kwargs)


def make_oscillator_spec(
    K: int,
    *,
    scheme: str = "hour48",
    level: float = 10.0,
    radius: float = 0.999,
    period: float = 17.0,
    swing: float = 0.4,
    noise: float = 0.0,
    T: int = 24 * 60,
    seed: int = 0,
    **kwargs,
) -> SyntheticSpec:
    """A slowly damped spiral around ``level``, shared by every calendar type.

    Entities are paired into damped rotations (``radius`` per hour, periods
    starting at ``period`` hours and stretched by the golden ratio per pair);
    an odd entity out decays on its own. The path starts ``swing * level``
    away from equilibrium. Because the periods do not divide a day, each
    calendar type keeps seeing new load vectors, so even a noiseless panel
    excites every regression direction.
    """
    rng = np.random.default_rng(seed)
    C = get_scheme(scheme).C
    A = np.zeros((K, K))
    for j, k in enumerate(range(0, K - 1, 2)):
        theta = 2 * np.pi / (period * 1.618 ** j)
        A[k:k + 2, k:k + 2] = radius * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    if K % 2:
        A[-1, -1] = radius
    target = np.full(K, float(level))
    M_s = np.empty((C, K, K + 1))
    M_s[:, :, 0] = (np.eye(K) - A) @ target
    M_s[:, :, 1:] = A
    Sigma_s = np.tile(noise ** 2 * np.eye(K), (C, 1, 1))
    kwargs.setdefault("s0", target + swing * level * rng.choice([-1.0, 1.0], size=K))
    return SyntheticSpec(M_s, Sigma_s, T=T, seed=seed, scheme=scheme, **kwargs)


def temperature_path(spec: SyntheticSpec, timestamps: pd.DatetimeIndex, rng) -> np.ndarray:
    hours = np.asarray(timestamps.hour, dtype=np.float64)[:, None]
    clean = spec.temp_base + spec.temp_amplitude * np.sin(2 * np.pi * (hours - spec.temp_phase) / 24.0)
    return clean + spec.temp_noise * rng.standard_normal((len(timestamps), spec.K))


def generate(spec: SyntheticSpec) -> EntityPanel:
    """Forward-sample a panel; identical output for identical ``spec``."""
    rng = np.random.default_rng(spec.seed)
    K, C = spec.K, spec.C
    timestamps = pd.date_range(pd.Timestamp(spec.start), periods=spec.T, freq="h")
    holidays = np.zeros(spec.T, dtype=bool)
    cs = get_scheme(spec.scheme).classify(timestamps, holidays)
    temps = temperature_path(spec, timestamps, rng)

    # Per-type step covariance and the gains that blend the two channels.
    factors, w_s, w_r = [], [], []
    for c in range(C):
        if spec.observation:
            _, cov = fusion_oracle(np.zeros(K), spec.Sigma_s[c], np.zeros(K), spec.Sigma_r[c])
            Pi_s = np.linalg.inv(spec.Sigma_s[c])
            Pi_r = np.linalg.inv(spec.Sigma_r[c])
            w_s.append(cov @ Pi_s)
            w_r.append(cov @ Pi_r)
        else:
            cov = spec.Sigma_s[c]
        factors.append(_sqrt_factor(cov))

    loads = np.empty((spec.T, K))
    if spec.s0 is not None:
        s = np.asarray(spec.s0, dtype=np.float64).copy()
    else:
        c0 = cs[0] - 1
        s = np.linalg.solve(np.eye(K) - spec.M_s[c0, :, 1:], spec.M_s[c0, :, 0])
    loads[0] = s
    ctx = TempContext(C, K) if spec.observation else None
    if ctx is not None:
        update_temp_context(ctx, int(cs[0]), temps[0])
    noise = rng.standard_normal((spec.T, K))
    for t in range(1, spec.T):
        c = int(cs[t]) - 1
        mean = spec.M_s[c, :, 0] + spec.M_s[c, :, 1:] @ s
        if spec.observation:
            u_r = build_feature_r(temps[t], ctx, c + 1)
            mean = w_s[c] @ mean + w_r[c] @ (spec.M_r[c] @ u_r)
            update_temp_context(ctx, c + 1, temps[t])
        s = mean + factors[c] @ noise[t]
        loads[t] = s
    return EntityPanel(list(spec.entity_ids), timestamps, loads, temps, holidays)


class WLSSolution(NamedTuple):
    M: np.ndarray
    P: np.ndarray
    gamma: float
    cond: float


def wls_oracle(us, ss, lam: float, prior_scale: float = 1.0) -> WLSSolution:
    """Dense exponentially weighted least squares with a decaying prior.

    Minimises ``sum_i lam^(n-i) |s_i - M u_i|^2 + prior_scale lam^n |M|_F^2``;
    ``P`` is the inverse of the weighted Gram matrix including the prior term.
    """
    U = np.atleast_2d(np.asarray(us, dtype=np.float64))
    S = np.atleast_2d(np.asarray(ss, dtype=np.float64))
    n, D = U.shape
    if n < 1:
        raise ValueError("need at least one sample")
    w = lam ** np.arange(n - 1, -1, -1, dtype=np.float64)
    G = (U * w[:, None]).T @ U + prior_scale * lam ** n * np.eye(D)
    B = (S * w[:, None]).T @ U
    M = np.linalg.solve(G, B.T).T
    P = np.linalg.inv(G)
    return WLSSolution(M, 0.5 * (P + P.T), float(w.sum()), float(np.linalg.cond(G)))


def fusion_oracle(mu1, W1, mu2, W2):
    """Product of ``N(mu1, W1)`` and ``N(mu2, W2)`` in precision form."""
    W1 = np.atleast_2d(np.asarray(W1, dtype=np.float64))
    W2 = np.atleast_2d(np.asarray(W2, dtype=np.float64))
    for W in (W1, W2):
        if not np.allclose(W, W.T):
            raise ValueError("covariances must be symmetric")
        try:
            np.linalg.cholesky(W)
        except np.linalg.LinAlgError:
            raise ValueError("covariances must be positive definite") from None
    P1 = np.linalg.inv(W1)
    P2 = np.linalg.inv(W2)
    cov = np.linalg.inv(P1 + P2)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (P1 @ np.asarray(mu1, dtype=np.float64) + P2 @ np.asarray(mu2, dtype=np.float64))
    return mean, cov


class ScalarModel:
    """Single-entity recursions on plain Python floats.

    ``eta`` is the coefficient vector, ``sigma`` the standard deviation,
    ``P`` the state matrix (list of rows) and ``gamma`` the effective count.
    """

    def __init__(self, D: int, lam: float):
        self.lam = lam
        self.eta = [0.0] * D
        self.sigma = 0.0
        self.P = [[1.0 if i == j else 0.0 for j in range(D)] for i in range(D)]
        self.gamma = 0.0

    def update(self, u, s):
        lam = self.lam
        D = len(u)
        u = [float(x) for x in u]
        Pu = [sum(self.P[i][j] * u[j] for j in range(D)) for i in range(D)]
        g = lam + sum(u[i] * Pu[i] for i in range(D))
        err = s - sum(u[j] * self.eta[j] for j in range(D))
        self.eta = [self.eta[j] + err * Pu[j] / g for j in range(D)]
        self.gamma = lam * self.gamma + 1.0
        var = self.sigma ** 2 - (self.sigma ** 2 - lam ** 2 * err ** 2 / g ** 2) / self.gamma
        self.sigma = math.sqrt(max(var, 0.0))
        self.P = [[(self.P[i][j] - Pu[i] * Pu[j] / g) / lam for j in range(D)] for i in range(D)]


def scalar_forecast(s_models, r_models, s_t, u_rs, cs):
    """Scalar fusion recursion; returns lists of means and variances."""
    mean, var = float(s_t), 0.0
    means, variances = [], []
    for u_r, c in zip(u_rs, cs):
        sm, rm = s_models[c - 1], r_models[c - 1]
        mu_s = sm.eta[0] + sm.eta[1] * mean
        mu_r = sum(a * b for a, b in zip(rm.eta, u_r))
        w1 = sm.sigma ** 2 + sm.eta[1] ** 2 * var
        w2 = rm.sigma ** 2
        mean = (w2 * mu_s + w1 * mu_r) / (w1 + w2)
        var = w1 * w2 / (w1 + w2)
        means.append(mean)
        variances.append(var)
    return means, variances


def sample_state_space_paths(M_s, Sigma_s, Sigma_r, s_t, cs, n_paths, rng):
    """Forward-sample loads and noisy load observations.

    ``s_i = M_s[c] [1, s_{i-1}] + N(0, Sigma_s[c])`` and
    ``z_i = s_i + N(0, Sigma_r[c])`` with ``c = cs[i]`` (1-based). Returns
    arrays ``(n_paths, L, K)`` of loads and of observations.
    """
    M_s = np.asarray(M_s)
    L, K = len(cs), M_s.shape[1]
    loads = np.empty((n_paths, L, K))
    obs = np.empty((n_paths, L, K))
    s = np.tile(np.asarray(s_t, dtype=np.float64), (n_paths, 1))
    for i, c in enumerate(cs):
        c = c - 1
        F_s = _sqrt_factor(np.asarray(Sigma_s[c]))
        F_r = _sqrt_factor(np.asarray(Sigma_r[c]))
        s = M_s[c, :, 0] + s @ M_s[c, :, 1:].T + rng.standard_normal((n_paths, K)) @ F_s.T
        loads[:, i] = s
        obs[:, i] = s + rng.standard_normal((n_paths, K)) @ F_r.T
    return loads, obs
