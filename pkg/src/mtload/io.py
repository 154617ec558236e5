"""CSV ingest and export, snapshots, forecast logs and report files."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .evaluation import EmittedForecast, MetricsReport, OnlineEngine, error_cdf
from .panel import HOUR, EntityPanel, holiday_flags_for

REQUIRED_COLUMNS = ("timestamp", "entity_id", "load", "temperature")
SNAPSHOT_MAGIC = "MTLOAD-SNAPSHOT"
SNAPSHOT_VERSION = 1
MAX_REPORTED = 10


def read_holidays(path) -> list[dt.date]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(dt.date.fromisoformat(line))
        except ValueError:
            raise DataError(f"{path}:{lineno}: not an ISO date: {line!r}") from None
    return out


def write_holidays(path, dates) -> None:
    Path(path).write_text("".join(f"{d.isoformat()}\n" for d in sorted(set(dates))))


def _fail(violations, total=None):
    total = len(violations) if total is None else total
    shown = "\n  ".join(violations[:MAX_REPORTED])
    more = f"\n  ... and {total - MAX_REPORTED} more" if total > MAX_REPORTED else ""
    raise DataError(f"{total} ingest violation(s):\n  {shown}{more}")


def ingest(path, holidays_path=None, *, celsius: bool = False) -> EntityPanel:
    """Read a long-format CSV into a validated :class:`EntityPanel`.

    Columns ``timestamp`` (ISO-8601), ``entity_id``, ``load`` and
    ``temperature``; extra columns are ignored. All entities must cover the
    same consecutive hourly timestamps. ``celsius=True`` converts the
    temperature column to Fahrenheit.
    """
    try:
        df = pd.read_csv(path, dtype={"entity_id": str, "timestamp": str}, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing required column(s) {missing}")
    if df.empty:
        raise DataError(f"{path}: no rows")

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FutureWarning)
            ts = pd.to_datetime(df["timestamp"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable or mixed-offset timestamps ({exc})") from exc
    if not (isinstance(ts.dtype, pd.DatetimeTZDtype) or pd.api.types.is_datetime64_dtype(ts.dtype)):
        raise DataError(f"{path}: timestamps mix UTC offsets; normalise to one fixed offset")
    df = df.assign(timestamp=ts)

    violations = []
    for col in ("load", "temperature"):
        values = pd.to_numeric(df[col], errors="coerce")
        bad = df.index[~np.isfinite(values.to_numpy(dtype=np.float64))]
        violations += [f"non-finite {col} for entity {df.at[i, 'entity_id']} at {df.at[i, 'timestamp']}" for i in bad]
        df[col] = values
    dup = df.duplicated(["entity_id", "timestamp"], keep="first")
    violations += [f"duplicate timestamp {r.timestamp} for entity {r.entity_id}" for r in df[dup].itertuples()]

    entity_ids = list(dict.fromkeys(df["entity_id"]))
    grid = pd.DatetimeIndex(sorted(df["timestamp"].unique()))
    if len(grid) > 1:
        full = pd.date_range(grid[0], grid[-1], freq=HOUR)
        violations += [f"gap: no entity has data at {t}" for t in full.difference(grid)]
    clean = df[~dup]
    for eid, rows in clean.groupby("entity_id", sort=False):
        have = pd.DatetimeIndex(rows["timestamp"])
        violations += [f"entity {eid} is missing timestamp {t}" for t in grid.difference(have)]
    if violations:
        _fail(violations)

    wide = clean.pivot(index="timestamp", columns="entity_id")
    loads = wide["load"][entity_ids].to_numpy(dtype=np.float64)
    temps = wide["temperature"][entity_ids].to_numpy(dtype=np.float64)
    if celsius:
        temps = temps * 9.0 / 5.0 + 32.0
    stamps = pd.DatetimeIndex(wide.index)
    holidays = read_holidays(holidays_path) if holidays_path else None
    return EntityPanel(entity_ids, stamps, loads, temps, holiday_flags_for(stamps, holidays))


def write_panel_csv(panel: EntityPanel, path, holidays_path=None) -> None:
    """Write ``panel`` in the ingest format; floats keep full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REQUIRED_COLUMNS)
        for t, ts in enumerate(panel.timestamps):
            stamp = ts.isoformat()
            for k, eid in enumerate(panel.entity_ids):
                w.writerow((stamp, eid, repr(float(panel.loads[t, k])), repr(float(panel.temperatures[t, k]))))
    if holidays_path is not None:
        write_holidays(holidays_path, {ts.date() for ts, f in zip(panel.timestamps, panel.holiday_flags) if f})


# -- snapshots -------------------------------------------------------------

def save_snapshot(engine: OnlineEngine, path, entity_ids=None) -> None:
    payload = {
        "magic": SNAPSHOT_MAGIC,
        "version": SNAPSHOT_VERSION,
        "entity_ids": list(entity_ids) if entity_ids is not None else None,
        "engine": engine.snapshot(),
    }
    Path(path).write_text(json.dumps(payload, allow_nan=False))


def load_snapshot(path) -> tuple[dict, list | None]:
    """Return ``(engine snapshot dict, entity ids)``."""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read snapshot {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != SNAPSHOT_MAGIC:
        raise DataError(f"{path} is not a model snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise DataError(f"{path}: unsupported snapshot version {payload.get('version')}")
    return payload["engine"], payload.get("entity_ids")


# -- forecast logs ---------------------------------------------------------

def forecast_records(emitted: EmittedForecast, entity_ids) -> list[dict]:
    issued = emitted.forecast.issued_at
    records = emitted.forecast.records(entity_ids)
    for rec in records:
        rec["issued_at"] = issued.isoformat() if issued is not None else None
        if emitted.actual is not None:
            rec["actual"] = float(emitted.actual[rec["horizon_step"] - 1, entity_ids.index(rec["entity_id"])])
    return records


class ForecastLogWriter:
    """Streams forecast records to JSON-lines and compact CSV files."""

    CSV_FIELDS = ("issued_at", "timestamp", "horizon_step", "entity_id", "mean", "variance")

    def __init__(self, jsonl_path, csv_path=None, entity_ids=None):
        self.entity_ids = list(entity_ids)
        self._json = open(jsonl_path, "w")
        self._csv_fh = open(csv_path, "w", newline="") if csv_path else None
        self._csv = csv.writer(self._csv_fh) if self._csv_fh else None
        if self._csv:
            self._csv.writerow(self.CSV_FIELDS)

    def __call__(self, emitted: EmittedForecast):
        for rec in forecast_records(emitted, self.entity_ids):
            self._json.write(json.dumps(rec) + "\n")
            if self._csv:
                self._csv.writerow([rec[f] for f in self.CSV_FIELDS])

    def close(self):
        self._json.close()
        if self._csv_fh:
            self._csv_fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_forecast_log(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


# -- reports ---------------------------------------------------------------

def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def report_to_dict(report: MetricsReport, total_mode="pooled") -> dict:
    return {
        "method": report.method,
        "n_forecasts": report.n_forecasts,
        "empty": report.empty,
        "n_zero_excluded": report.n_zero_excluded,
        "rows": [{"entity": n, "MAPE": _num(m), "RMSE": _num(r)} for n, m, r in report.rows(total_mode)],
        "mape_by_horizon": [_num(x) for x in report.mape_by_horizon],
        "rmse_by_horizon": [_num(x) for x in report.rmse_by_horizon],
    }


def write_reports(reports, out_dir, total_mode="pooled") -> None:
    """``metrics.json`` and a Table-style ``metrics.csv`` (one column pair per method)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(
        json.dumps({r.method: report_to_dict(r, total_mode) for r in reports}, indent=2)
    )
    tables = [r.rows(total_mode) for r in reports]
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entity"] + [f"{r.method}_{m}" for r in reports for m in ("MAPE", "RMSE")])
        for i, (name, *_rest) in enumerate(tables[0]):
            row = [name]
            for t in tables:
                row += [f"{t[i][1]:.6g}", f"{t[i][2]:.6g}"]
            w.writerow(row)


def write_cdf(errors, path) -> None:
    cdf = error_cdf(errors)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["abs_error", "probability"])
        w.writerows((repr(float(a)), repr(float(p))) for a, p in cdf)
