"""Feature maps shared by learning and prediction.

``u_s`` is the intercept-augmented previous load vector. ``u_r`` is the
concatenation over entities of ``[1, hot_shift, cold_shift]`` blocks, where
the two indicators flag a temperature that departs from the calendar-type
running mean by more than ``delta1`` while also being extreme (above
``delta2`` or below ``delta3``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

R_FEATURES = 3
DEFAULT_THRESHOLDS = (20.0, 80.0, 20.0)


def build_feature_s(prev_loads) -> np.ndarray:
    prev = np.asarray(prev_loads, dtype=np.float64).ravel()
    if not np.all(np.isfinite(prev)):
        raise DataError("previous loads must be finite")
    u = np.empty(prev.size + 1)
    u[0] = 1.0
    u[1:] = prev
    return u


@dataclass
class TempContext:
    """Per (calendar type, entity) running mean of past temperatures.

    ``mode`` is ``"cumulative"`` (arithmetic mean of everything seen) or
    ``"ewm"`` (exponentially weighted with factor ``lam_w``; the first
    observation initialises the mean).
    """

    C: int
    K: int
    delta1: float = DEFAULT_THRESHOLDS[0]
    delta2: float = DEFAULT_THRESHOLDS[1]
    delta3: float = DEFAULT_THRESHOLDS[2]
    mode: str = "cumulative"
    lam_w: float = 0.9
    mean: np.ndarray = field(default=None, repr=False)
    count: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("cumulative", "ewm"):
            raise ConfigError(f"unknown temperature-mean mode {self.mode!r}")
        if self.mode == "ewm" and not 0.0 < self.lam_w < 1.0:
            raise ConfigError("lam_w must lie in (0, 1)")
        if self.mean is None:
            self.mean = np.zeros((self.C, self.K))
        if self.count is None:
            self.count = np.zeros((self.C, self.K), dtype=np.int64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.count = np.asarray(self.count, dtype=np.int64)

    def copy(self) -> "TempContext":
        return TempContext(
            self.C, self.K, self.delta1, self.delta2, self.delta3, self.mode, self.lam_w,
            self.mean.copy(), self.count.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "C": self.C, "K": self.K,
            "delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3,
            "mode": self.mode, "lam_w": self.lam_w,
            "mean": self.mean.tolist(), "count": self.count.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TempContext":
        d = dict(d)
        d["mean"] = np.array(d["mean"], dtype=np.float64).reshape(d["C"], d["K"])
        d["count"] = np.array(d["count"], dtype=np.int64).reshape(d["C"], d["K"])
        return cls(**d)


def build_feature_r(temps, ctx: TempContext, c: int) -> np.ndarray:
    """Observation features for calendar type ``c`` (1-based); length ``K*3``.

    ``ctx`` is only read. Entities with no past temperatures for ``c`` get
    the block ``[1, 0, 0]``.
    """
    w = np.asarray(temps, dtype=np.float64).ravel()
    if not np.all(np.isfinite(w)):
        raise DataError("temperatures must be finite")
    wbar = ctx.mean[c - 1]
    seen = ctx.count[c - 1] > 0
    shift = w - wbar
    extreme = (w > ctx.delta2) | (w < ctx.delta3)
    u = np.zeros((w.size, R_FEATURES))
    u[:, 0] = 1.0
    u[:, 1] = seen & extreme & (shift > ctx.delta1)
    u[:, 2] = seen & extreme & (shift < -ctx.delta1)
    return u.ravel()


def update_temp_context(ctx: TempContext, c: int, temps) -> TempContext:
    """Fold ``temps`` into the running means for calendar type ``c``, in place."""
    w = np.asarray(temps, dtype=np.float64).ravel()
    row = c - 1
    ctx.count[row] += 1
    if ctx.mode == "cumulative":
        ctx.mean[row] += (w - ctx.mean[row]) / ctx.count[row]
    else:
        first = ctx.count[row] == 1
        blended = ctx.lam_w * ctx.mean[row] + (1.0 - ctx.lam_w) * w
        ctx.mean[row] = np.where(first, w, blended)
    return ctx
