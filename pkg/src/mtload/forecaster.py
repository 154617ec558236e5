"""Multi-horizon Gaussian forecasts from a :class:`~mtload.learner.ModelBank`.

Each step propagates the previous predictive Gaussian through the
load-transition model of the step's calendar type and fuses the result with
the observation model::

    W1   = Sigma_s + (M_s N) E_prev (M_s N)'
    W2   = Sigma_r
    mean = W1 (W1 + W2)^-1 M_r u_r + W2 (W1 + W2)^-1 M_s [1, mean_prev]
    E    = W2 (W1 + W2)^-1 W1

starting from the last observed loads with zero covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import _backend
from .errors import ModelNotReadyError, NumericalError
from .features import TempContext, build_feature_r
from .learner import ConditionalModel, ModelBank
from .panel import get_scheme, holiday_flags_for


def selector(K: int) -> np.ndarray:
    """The ``(K+1) x K`` matrix ``[0; I_K]``."""
    N = np.zeros((K + 1, K))
    N[1:] = np.eye(K)
    return N


@dataclass
class Forecast:
    """Predictive means ``(L, K)`` and covariances ``(L, K, K)``."""

    means: np.ndarray
    covs: np.ndarray
    calendar_types: np.ndarray
    timestamps: pd.DatetimeIndex = None
    issued_at: pd.Timestamp = None
    jittered: np.ndarray = field(default=None, repr=False)

    @property
    def L(self) -> int:
        return self.means.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return np.diagonal(self.covs, axis1=1, axis2=2).copy()

    def records(self, entity_ids) -> list[dict]:
        """One JSON-ready record per (horizon step, entity)."""
        out = []
        for i in range(self.L):
            ts = self.timestamps[i].isoformat() if self.timestamps is not None else None
            for k, eid in enumerate(entity_ids):
                out.append({
                    "timestamp": ts,
                    "horizon_step": i + 1,
                    "entity_id": eid,
                    "mean": float(self.means[i, k]),
                    "variance": float(self.covs[i, k, k]),
                    "cov_row": self.covs[i, k].tolist(),
                })
        return out


def predict_step(s_model: ConditionalModel, r_model: ConditionalModel, prev_mean, prev_cov, u_r):
    """One fusion step; returns ``(mean, cov)``."""
    mean, cov, _ = _backend.fuse_step(
        s_model.M, s_model.Sigma, r_model.M, r_model.Sigma,
        np.ascontiguousarray(prev_mean, dtype=np.float64),
        np.ascontiguousarray(prev_cov, dtype=np.float64),
        np.ascontiguousarray(u_r, dtype=np.float64),
    )
    return mean, cov


def rollout(bank: ModelBank, s_t, u_rs, calendar_types):
    """Iterate the fusion step over precomputed observation features.

    Raises :class:`ModelNotReadyError` before doing any work if some
    calendar type on the path has an observation model that was never
    updated.
    """
    cs = np.asarray(calendar_types, dtype=np.int64)
    for c in np.unique(cs):
        if bank.r_models[c - 1].gamma < 1.0:
            raise ModelNotReadyError(int(c))
    K = bank.K
    L = len(cs)
    means = np.empty((L, K))
    covs = np.empty((L, K, K))
    jittered = np.zeros(L, dtype=bool)
    mean = np.ascontiguousarray(s_t, dtype=np.float64)
    cov = np.zeros((K, K))
    for i, c in enumerate(cs):
        s_model, r_model = bank.s_models[c - 1], bank.r_models[c - 1]
        try:
            mean, cov, jittered[i] = _backend.fuse_step(
                s_model.M, s_model.Sigma, r_model.M, r_model.Sigma,
                mean, cov, np.ascontiguousarray(u_rs[i], dtype=np.float64),
            )
        except NumericalError as exc:
            raise NumericalError(str(exc), calendar_type=int(c), horizon_step=i + 1) from exc
        means[i] = mean
        covs[i] = cov
    return means, covs, jittered


def predict_horizon(
    bank: ModelBank,
    s_t,
    temps_path,
    ctx: TempContext,
    t=None,
    L: int | None = None,
    *,
    calendar_types=None,
    scheme="hour48",
    holidays=(),
) -> Forecast:
    """Forecast ``L`` hours ahead of time ``t`` given loads ``s_t`` at ``t``.

    ``temps_path`` holds the temperatures for ``t+1 .. t+L`` (row ``i-1`` for
    step ``i``). Calendar types are derived from ``t`` with ``scheme`` and
    ``holidays`` unless passed explicitly. ``ctx`` is read, never written.
    """
    temps_path = np.atleast_2d(np.asarray(temps_path, dtype=np.float64))
    if L is None:
        L = temps_path.shape[0]
    if L < 1 or temps_path.shape[0] < L:
        raise ValueError(f"need temperatures for {L} steps, got {temps_path.shape[0]}")
    timestamps = None
    if t is not None:
        t = pd.Timestamp(t)
        timestamps = pd.DatetimeIndex([t + pd.Timedelta(hours=i) for i in range(1, L + 1)])
    if calendar_types is None:
        if timestamps is None:
            raise ValueError("either t or calendar_types is required")
        if isinstance(scheme, str):
            scheme = get_scheme(scheme)
        calendar_types = scheme.classify(timestamps, holiday_flags_for(timestamps, holidays))
    cs = np.asarray(calendar_types, dtype=np.int64)[:L]
    u_rs = [build_feature_r(temps_path[i], ctx, int(cs[i])) for i in range(L)]
    means, covs, jittered = rollout(bank, s_t, u_rs, cs)
    return Forecast(means, covs, cs, timestamps, t, jittered)
