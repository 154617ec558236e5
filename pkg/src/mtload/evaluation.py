"""Chronological backtest driver, accuracy metrics and a persistence baseline."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from .errors import ConfigError, InsufficientDataError, ModelNotReadyError, NumericalError
from .features import TempContext, build_feature_r, update_temp_context
from .forecaster import Forecast, rollout
from .learner import ModelBank, learn_step
from .panel import EntityPanel, get_scheme

log = logging.getLogger(__name__)

TOTAL_MODES = ("pooled", "mean", "both")


@dataclass
class BacktestConfig:
    warmup_days: int = 30
    prediction_hour: int = 11
    horizon: int = 24
    lam_s: float = 0.8
    lam_r: float = 0.7
    delta1: float = 20.0
    delta2: float = 80.0
    delta3: float = 20.0
    scheme: str = "hour48"
    temp_mean_mode: str = "cumulative"
    lam_w: float = 0.9
    baseline: bool = True
    total_mode: str = "pooled"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (isinstance(self.warmup_days, int) and self.warmup_days >= 1):
            raise ConfigError(f"warmup_days={self.warmup_days} must be an integer >= 1")
        if not (isinstance(self.horizon, int) and 1 <= self.horizon <= 168):
            raise ConfigError(f"horizon={self.horizon} must be an integer in [1, 168]")
        if self.prediction_hour not in range(24):
            raise ConfigError(f"prediction_hour={self.prediction_hour} must be in 0..23")
        for name in ("lam_s", "lam_r"):
            lam = getattr(self, name)
            if not (isinstance(lam, (int, float)) and 0.0 < lam <= 1.0):
                raise ConfigError(f"{name}={lam} outside the valid range (0, 1]")
        if self.temp_mean_mode not in ("cumulative", "ewm"):
            raise ConfigError(f"temp_mean_mode must be 'cumulative' or 'ewm', not {self.temp_mean_mode!r}")
        if self.total_mode not in TOTAL_MODES:
            raise ConfigError(f"total_mode must be one of {TOTAL_MODES}")
        get_scheme(self.scheme)

    def to_dict(self) -> dict:
        return asdict(self)


# -- metrics ---------------------------------------------------------------

def _pairs(actual, predicted):
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise ValueError("actual and predicted must have the same size")
    if a.size == 0:
        raise ValueError("empty error set")
    return a, p


def mape(actual, predicted) -> float:
    """Mean absolute percentage error in percent.

    Points with a zero realised load are dropped, with a warning giving
    how many.
    """
    a, p = _pairs(actual, predicted)
    nz = a != 0
    dropped = int(a.size - nz.sum())
    if dropped:
        warnings.warn(f"MAPE: excluded {dropped} zero-load points", RuntimeWarning, stacklevel=2)
    if not nz.any():
        raise ValueError("MAPE undefined: every realised load is zero")
    return float(100.0 * np.mean(np.abs(a[nz] - p[nz]) / np.abs(a[nz])))


def rmse(actual, predicted) -> float:
    a, p = _pairs(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def error_cdf(errors) -> np.ndarray:
    """Empirical CDF of absolute errors as ``(value, probability)`` rows."""
    e = np.abs(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise ValueError("empty error set")
    values, counts = np.unique(e, return_counts=True)
    return np.column_stack([values, np.cumsum(counts) / e.size])


class ErrorAccumulator:
    """Streaming sums per (horizon step, entity); memory independent of run length."""

    def __init__(self, L: int, K: int, keep_errors: bool = True):
        self.n = np.zeros((L, K), dtype=np.int64)
        self.n_pct = np.zeros((L, K), dtype=np.int64)
        self.abs_pct = np.zeros((L, K))
        self.sq = np.zeros((L, K))
        self.n_zero = 0
        self.emissions = 0
        self._samples = [] if keep_errors else None

    def add(self, actual: np.ndarray, predicted: np.ndarray):
        err = actual - predicted
        nz = actual != 0
        self.n += 1
        self.n_pct += nz
        self.abs_pct += np.where(nz, np.abs(err) / np.where(nz, np.abs(actual), 1.0), 0.0)
        self.sq += err * err
        self.n_zero += int(err.size - nz.sum())
        self.emissions += 1
        if self._samples is not None:
            self._samples.append(np.abs(err))

    def report(self, method: str, entity_ids) -> "MetricsReport":
        def ratio(num, den, scale=1.0):
            return float(scale * num / den) if den else math.nan

        ent_mape = {e: ratio(self.abs_pct[:, k].sum(), self.n_pct[:, k].sum(), 100.0) for k, e in enumerate(entity_ids)}
        ent_rmse = {e: math.sqrt(ratio(self.sq[:, k].sum(), self.n[:, k].sum())) for k, e in enumerate(entity_ids)}
        total_mape = ratio(self.abs_pct.sum(), self.n_pct.sum(), 100.0)
        total_rmse = math.sqrt(ratio(self.sq.sum(), self.n.sum()))
        samples = np.stack(self._samples) if self._samples else None
        return MetricsReport(
            method=method,
            entity_ids=list(entity_ids),
            mape=ent_mape,
            rmse=ent_rmse,
            total_mape=total_mape,
            total_rmse=total_rmse,
            mean_mape=float(np.mean(list(ent_mape.values()))) if self.emissions else math.nan,
            mean_rmse=float(np.mean(list(ent_rmse.values()))) if self.emissions else math.nan,
            mape_by_horizon=[ratio(a, b, 100.0) for a, b in zip(self.abs_pct.sum(1), self.n_pct.sum(1))],
            rmse_by_horizon=[math.sqrt(ratio(a, b)) for a, b in zip(self.sq.sum(1), self.n.sum(1))],
            n_forecasts=self.emissions,
            n_zero_excluded=self.n_zero,
            abs_errors=samples,
        )


@dataclass
class MetricsReport:
    """Per-entity and TOTAL accuracy of one method.

    ``total_*`` pool every (emission, step, entity) error; ``mean_*`` average
    the per-entity figures. ``abs_errors`` (emissions x L x K) is kept for
    CDF export unless the backtest was asked not to.
    """

    method: str
    entity_ids: list
    mape: dict
    rmse: dict
    total_mape: float
    total_rmse: float
    mean_mape: float
    mean_rmse: float
    mape_by_horizon: list
    rmse_by_horizon: list
    n_forecasts: int
    n_zero_excluded: int = 0
    abs_errors: np.ndarray = field(default=None, repr=False)

    @property
    def empty(self) -> bool:
        return self.n_forecasts == 0

    def rows(self, total_mode: str = "pooled") -> list[tuple[str, float, float]]:
        rows = [(e, self.mape[e], self.rmse[e]) for e in self.entity_ids]
        if total_mode in ("pooled", "both"):
            rows.append(("TOTAL", self.total_mape, self.total_rmse))
        if total_mode in ("mean", "both"):
            rows.append(("TOTAL_MEAN", self.mean_mape, self.mean_rmse))
        return rows

    def cdf(self) -> np.ndarray:
        if self.abs_errors is None or self.abs_errors.size == 0:
            raise ValueError("no error samples kept")
        return error_cdf(self.abs_errors)


# -- driver ----------------------------------------------------------------

class OnlineEngine:
    """Learner state plus its position in the hourly stream."""

    def __init__(self, K: int, cfg: BacktestConfig, origin=None):
        scheme = get_scheme(cfg.scheme)
        self.cfg = cfg
        self.bank = ModelBank(K, scheme.C, cfg.lam_s, cfg.lam_r)
        self.ctx = TempContext(
            scheme.C, K, cfg.delta1, cfg.delta2, cfg.delta3, cfg.temp_mean_mode, cfg.lam_w
        )
        self.last_loads = None
        self.position = -1
        self.last_timestamp = None
        self.origin = None if origin is None else pd.Timestamp(origin)

    def observe(self, index: int, timestamp, c: int, loads, temps):
        if self.origin is None:
            self.origin = pd.Timestamp(timestamp)
        if self.last_loads is None:
            update_temp_context(self.ctx, c, temps)
        else:
            learn_step(self.bank, self.ctx, c, self.last_loads, loads, temps)
        self.last_loads = np.array(loads, dtype=np.float64)
        self.position = index
        self.last_timestamp = pd.Timestamp(timestamp)

    def forecast(self, temps_path, cs, timestamps=None) -> Forecast:
        u_rs = [build_feature_r(temps_path[i], self.ctx, int(c)) for i, c in enumerate(cs)]
        means, covs, jit = rollout(self.bank, self.last_loads, u_rs, cs)
        return Forecast(means, covs, np.asarray(cs), timestamps, self.last_timestamp, jit)

    def snapshot(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "bank": self.bank.to_dict(),
            "ctx": self.ctx.to_dict(),
            "last_loads": None if self.last_loads is None else self.last_loads.tolist(),
            "position": self.position,
            "last_timestamp": None if self.last_timestamp is None else self.last_timestamp.isoformat(),
            "origin": None if self.origin is None else self.origin.isoformat(),
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "OnlineEngine":
        cfg = BacktestConfig(**snap["config"])
        bank = ModelBank.from_dict(snap["bank"])
        eng = cls(bank.K, cfg, snap["origin"])
        eng.bank = bank
        eng.ctx = TempContext.from_dict(snap["ctx"])
        if snap["last_loads"] is not None:
            eng.last_loads = np.array(snap["last_loads"], dtype=np.float64)
        eng.position = snap["position"]
        if snap["last_timestamp"] is not None:
            eng.last_timestamp = pd.Timestamp(snap["last_timestamp"])
        return eng


@dataclass
class EmittedForecast:
    index: int
    forecast: Forecast
    actual: np.ndarray


@dataclass
class BacktestResult:
    report: MetricsReport
    forecasts: list
    engine: OnlineEngine
    baseline: MetricsReport = None
    n_not_ready: int = 0

    def __iter__(self):
        # unpacks as (report, forecast log)
        return iter((self.report, self.forecasts))


def persistence_forecast(loads: np.ndarray, index: int, L: int) -> np.ndarray:
    """Loads from the latest already-observed hour with the same clock hour."""
    steps = np.arange(1, L + 1)
    src = index + steps - 24 * np.ceil(steps / 24).astype(np.int64)
    return loads[src]


def _is_emission(cfg, origin, ts, index, T):
    # the persistence baseline needs a full day of history behind the issue time
    return (
        ts.hour == cfg.prediction_hour
        and ts >= origin + pd.Timedelta(days=cfg.warmup_days)
        and index + cfg.horizon <= T - 1
        and index >= 23
    )


def run_backtest(
    panel: EntityPanel,
    cfg: BacktestConfig | None = None,
    *,
    resume: dict | None = None,
    stop: int | None = None,
    keep_forecasts: bool = True,
    keep_errors: bool = True,
    on_emit: Callable[[EmittedForecast], None] | None = None,
    on_step: Callable[[int, OnlineEngine], None] | None = None,
) -> BacktestResult:
    """Single chronological pass: learn every hour, forecast once a day.

    At each hour the arriving loads are learned first; then, at
    ``prediction_hour`` once ``warmup_days`` have elapsed, a forecast for the
    next ``horizon`` hours is issued from the current state and scored
    against the realised loads. Temperatures for the forecast hours stand in
    for weather forecasts. Nothing else after the issue time is read.

    ``resume`` continues from :meth:`OnlineEngine.snapshot` output; the
    pass then starts at the hour after the snapshot. ``stop`` ends the pass
    after that index (exclusive).
    """
    if resume is not None:
        eng = OnlineEngine.from_snapshot(resume)
        cfg = eng.cfg
        if eng.bank.K != panel.K:
            raise InsufficientDataError(f"snapshot has K={eng.bank.K}, panel has K={panel.K}")
        start = eng.position + 1
        if start > 0 and pd.Timestamp(panel.timestamps[eng.position]) != eng.last_timestamp:
            raise InsufficientDataError("snapshot position does not line up with the panel timestamps")
    else:
        cfg = cfg or BacktestConfig()
        eng = OnlineEngine(panel.K, cfg, panel.timestamps[0] if panel.T else None)
        start = 0
    if panel.T < 2:
        raise InsufficientDataError("panel needs at least two hours")
    T = panel.T
    stop = T if stop is None else min(stop, T)
    L = cfg.horizon
    cs = panel.calendar_types(cfg.scheme)
    loads, temps, stamps = panel.loads, panel.temperatures, panel.timestamps

    acc = ErrorAccumulator(L, panel.K, keep_errors)
    base = ErrorAccumulator(L, panel.K, keep_errors) if cfg.baseline else None
    forecasts = []
    n_not_ready = 0

    for i in range(start, stop):
        ts = stamps[i]
        try:
            eng.observe(i, ts, int(cs[i]), loads[i], temps[i])
        except NumericalError as exc:
            raise NumericalError(str(exc), timestamp=ts.isoformat()) from exc
        if on_step is not None:
            on_step(i, eng)
        if not _is_emission(cfg, eng.origin, ts, i, T):
            continue
        window = slice(i + 1, i + L + 1)
        try:
            fc = eng.forecast(temps[window], cs[window], stamps[window])
        except ModelNotReadyError as exc:
            n_not_ready += 1
            log.debug("skipping forecast at %s: %s", ts, exc)
            continue
        except NumericalError as exc:
            raise NumericalError(str(exc), timestamp=ts.isoformat()) from exc
        actual = loads[window]
        acc.add(actual, fc.means)
        if base is not None:
            base.add(actual, persistence_forecast(loads, i, L))
        emitted = EmittedForecast(i, fc, actual)
        if keep_forecasts:
            forecasts.append(emitted)
        if on_emit is not None:
            on_emit(emitted)

    report = acc.report("engine", panel.entity_ids)
    if report.empty:
        log.warning("backtest emitted no forecasts")
    return BacktestResult(
        report, forecasts, eng,
        base.report("persistence", panel.entity_ids) if base is not None else None,
        n_not_ready,
    )


def persistence_baseline(panel: EntityPanel, cfg: BacktestConfig | None = None, keep_errors=True) -> MetricsReport:
    """Score the same-hour-yesterday forecast on the backtest schedule."""
    cfg = cfg or BacktestConfig()
    if panel.T < 2:
        raise InsufficientDataError("panel needs at least two hours")
    acc = ErrorAccumulator(cfg.horizon, panel.K, keep_errors)
    origin = panel.timestamps[0]
    L = cfg.horizon
    for i, ts in enumerate(panel.timestamps):
        if _is_emission(cfg, origin, ts, i, panel.T):
            acc.add(panel.loads[i + 1:i + L + 1], persistence_forecast(panel.loads, i, L))
    return acc.report("persistence", panel.entity_ids)


def report_from_records(records, method="engine") -> MetricsReport:
    """Rebuild a :class:`MetricsReport` from forecast-log records carrying ``actual``."""
    if not records:
        raise ValueError("empty forecast log")
    if any("actual" not in r for r in records):
        raise ValueError("forecast log records lack realised loads ('actual')")
    entity_ids = list(dict.fromkeys(r["entity_id"] for r in records))
    L = max(int(r["horizon_step"]) for r in records)
    issues = list(dict.fromkeys(r.get("issued_at") for r in records))
    col = {e: k for k, e in enumerate(entity_ids)}
    row = {t: i for i, t in enumerate(issues)}
    actual = np.full((len(issues), L, len(entity_ids)), np.nan)
    mean = np.full_like(actual, np.nan)
    for r in records:
        idx = (row[r.get("issued_at")], int(r["horizon_step"]) - 1, col[r["entity_id"]])
        actual[idx] = r["actual"]
        mean[idx] = r["mean"]
    if np.isnan(actual).any():
        raise ValueError("forecast log is ragged: some (issue, step, entity) cells are missing")
    acc = ErrorAccumulator(L, len(entity_ids))
    for a, m in zip(actual, mean):
        acc.add(a, m)
    return acc.report(method, entity_ids)
