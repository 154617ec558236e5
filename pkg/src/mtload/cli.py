"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import config as config_mod
from . import io
from .errors import ConfigError, DataError, MTLoadError
from .evaluation import EmittedForecast, OnlineEngine, report_from_records, run_backtest
from .oracle import generate

log = logging.getLogger("mtload")


def _write_resolved(cfg: config_mod.RunConfig, out_dir: Path, name="resolved_config.json"):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(cfg.to_dict(), indent=2, default=str))


def _backtest_overrides(args) -> dict:
    return {
        "backtest.lam_s": args.lambda_s,
        "backtest.lam_r": args.lambda_r,
        "backtest.warmup_days": args.warmup_days,
        "backtest.horizon": args.horizon,
        "backtest.prediction_hour": args.prediction_hour,
        "backtest.scheme": args.scheme,
        "backtest.total_mode": args.total_mode,
        "backtest.baseline": False if args.no_baseline else None,
        "io.data": args.data,
        "io.holidays": args.holidays,
        "io.out_dir": args.out_dir,
        "io.celsius": True if args.celsius else None,
    }


def cmd_simulate(args) -> int:
    cfg = config_mod.load(args.spec, {"seed": args.seed})
    spec = cfg.synthetic_spec()
    panel = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_panel_csv(panel, out, args.holidays_out)
    _write_resolved(cfg, out.parent, out.stem + ".config.json")
    print(f"wrote {panel.T} hours x {panel.K} entities to {out}")
    return 0


def cmd_backtest(args) -> int:
    cfg = config_mod.load(args.config, _backtest_overrides(args))
    if not cfg.data:
        raise ConfigError("no input data: pass --data or set [io] data")
    panel = io.ingest(cfg.data, cfg.holidays, celsius=cfg.celsius)
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)

    snap_at = pd.Timestamp(args.snapshot_at) if args.snapshot_at else None

    def on_step(i, eng):
        if snap_at is not None and eng.last_timestamp == snap_at:
            io.save_snapshot(eng, args.snapshot_out or out / "snapshot.json", panel.entity_ids)

    with io.ForecastLogWriter(out / "forecasts.jsonl", out / "forecasts.csv", panel.entity_ids) as writer:
        result = run_backtest(panel, cfg.backtest, keep_forecasts=False, on_emit=writer, on_step=on_step)
    io.save_snapshot(result.engine, out / "final_snapshot.json", panel.entity_ids)

    reports = [result.report] + ([result.baseline] if result.baseline is not None else [])
    mode = cfg.backtest.total_mode
    io.write_reports(reports, out, mode)
    if result.report.empty:
        print("no forecasts emitted (panel too short for the warm-up); empty report written")
        return 0
    io.write_cdf(result.report.abs_errors, out / "cdf.csv")
    for r in reports:
        for name, m, e in r.rows(mode):
            if name.startswith("TOTAL"):
                print(f"{r.method:12s} {name:10s} MAPE={m:.3f}%  RMSE={e:.4g}")
    return 0


def cmd_forecast(args) -> int:
    snap, entity_ids = io.load_snapshot(args.snapshot)
    eng = OnlineEngine.from_snapshot(snap)
    if eng.last_loads is None:
        raise DataError("snapshot has not seen any loads")
    panel = io.ingest(args.data, args.holidays, celsius=args.celsius)
    if entity_ids is not None and entity_ids != panel.entity_ids:
        raise DataError(f"snapshot entities {entity_ids} differ from data entities {panel.entity_ids}")
    L = args.horizon or eng.cfg.horizon
    after = np.flatnonzero(panel.timestamps > eng.last_timestamp)
    expected = pd.DatetimeIndex([eng.last_timestamp + pd.Timedelta(hours=i) for i in range(1, L + 1)])
    if after.size < L or not panel.timestamps[after[:L]].equals(expected):
        raise DataError(f"data must contain temperatures for the {L} hours after {eng.last_timestamp}")
    window = after[:L]
    cs = panel.calendar_types(eng.cfg.scheme)[window]
    fc = eng.forecast(panel.temperatures[window], cs, panel.timestamps[window])
    emitted = EmittedForecast(eng.position, fc, None)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_out = out.with_suffix(".csv") if out.suffix == ".jsonl" else None
    with io.ForecastLogWriter(out, csv_out, panel.entity_ids) as writer:
        writer(emitted)
    print(f"wrote {L}-step forecast issued at {eng.last_timestamp} to {out}")
    return 0


def cmd_snapshot(args) -> int:
    if args.action == "show":
        snap, entity_ids = io.load_snapshot(args.path)
        eng = OnlineEngine.from_snapshot(snap)
        gammas = [m.gamma for m in eng.bank.r_models]
        print(json.dumps({
            "entities": entity_ids,
            "K": eng.bank.K,
            "C": eng.bank.C,
            "last_timestamp": snap["last_timestamp"],
            "min_r_gamma": min(gammas),
            "config": snap["config"],
        }, indent=2))
        return 0
    cfg = config_mod.load(args.config, {"io.data": args.data, "io.holidays": args.holidays})
    if not cfg.data:
        raise ConfigError("no input data: pass --data or set [io] data")
    panel = io.ingest(cfg.data, cfg.holidays, celsius=cfg.celsius)
    stop = panel.T
    if args.until:
        until = pd.Timestamp(args.until)
        hits = np.flatnonzero(panel.timestamps == until)
        if not hits.size:
            raise DataError(f"{until} is not a timestamp of the panel")
        stop = int(hits[0]) + 1
    result = run_backtest(panel, cfg.backtest, stop=stop, keep_forecasts=False, keep_errors=False)
    io.save_snapshot(result.engine, args.path, panel.entity_ids)
    print(f"saved state after {result.engine.last_timestamp} to {args.path}")
    return 0


def cmd_metrics(args) -> int:
    records = io.read_forecast_log(args.log)
    try:
        report = report_from_records(records)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = Path(args.out_dir)
    io.write_reports([report], out, args.total_mode)
    io.write_cdf(report.abs_errors, out / "cdf.csv")
    for name, m, e in report.rows(args.total_mode):
        print(f"{name:12s} MAPE={m:.3f}%  RMSE={e:.4g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtload", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample a synthetic panel and write it as CSV")
    s.add_argument("--spec", required=True, help="TOML file with a [synthetic] section")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--holidays-out")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("backtest", help="online backtest with daily forecasts")
    b.add_argument("--config")
    b.add_argument("--data")
    b.add_argument("--holidays")
    b.add_argument("--out-dir")
    b.add_argument("--lambda-s", type=float)
    b.add_argument("--lambda-r", type=float)
    b.add_argument("--warmup-days", type=int)
    b.add_argument("--horizon", type=int)
    b.add_argument("--prediction-hour", type=int)
    b.add_argument("--scheme")
    b.add_argument("--total-mode", choices=["pooled", "mean", "both"])
    b.add_argument("--celsius", action="store_true", help="input temperatures are in Celsius")
    b.add_argument("--no-baseline", action="store_true")
    b.add_argument("--snapshot-at", help="save the state right after this timestamp is learned")
    b.add_argument("--snapshot-out")
    b.set_defaults(func=cmd_backtest)

    f = sub.add_parser("forecast", help="one forecast from a saved snapshot")
    f.add_argument("--snapshot", required=True)
    f.add_argument("--data", required=True, help="CSV holding temperatures for the forecast hours")
    f.add_argument("--holidays")
    f.add_argument("--celsius", action="store_true")
    f.add_argument("--horizon", type=int)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_forecast)

    n = sub.add_parser("snapshot", help="save or inspect model snapshots")
    n.add_argument("action", choices=["save", "show"])
    n.add_argument("path")
    n.add_argument("--config")
    n.add_argument("--data")
    n.add_argument("--holidays")
    n.add_argument("--until", help="last timestamp to learn (default: end of data)")
    n.set_defaults(func=cmd_snapshot)

    m = sub.add_parser("metrics", help="recompute reports from a forecast log")
    m.add_argument("--log", required=True)
    m.add_argument("--out-dir", default=".")
    m.add_argument("--total-mode", choices=["pooled", "mean", "both"], default="pooled")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MTLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
