"""Run configuration: one TOML file, CLI flags override, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import inspect
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .evaluation import BacktestConfig
from .oracle import SyntheticSpec, make_ar_spec, make_oscillator_spec

TOP_LEVEL = {"backtest", "synthetic", "io", "seed"}
IO_KEYS = {"data", "holidays", "out_dir", "celsius"}
GENERATORS = {"ar": make_ar_spec, "oscillator": make_oscillator_spec}
_GEN_KEYS = {k for f in GENERATORS.values() for k in inspect.signature(f).parameters} - {"kwargs"}
_SPEC_KEYS = {f.name for f in dataclasses.fields(SyntheticSpec)}
SYNTHETIC_KEYS = _GEN_KEYS | _SPEC_KEYS | {"generator"}


@dataclass
class RunConfig:
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    synthetic: dict | None = None
    data: str | None = None
    holidays: str | None = None
    out_dir: str = "out"
    celsius: bool = False
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "backtest": self.backtest.to_dict(),
            "synthetic": self.synthetic,
            "io": {"data": self.data, "holidays": self.holidays, "out_dir": self.out_dir, "celsius": self.celsius},
            "seed": self.seed,
        }

    def synthetic_spec(self) -> SyntheticSpec:
        if self.synthetic is None:
            raise ConfigError("config has no [synthetic] section")
        params = dict(self.synthetic)
        kind = params.pop("generator", "ar")
        if kind not in GENERATORS:
            raise ConfigError(f"[synthetic] generator must be one of {sorted(GENERATORS)}, not {kind!r}")
        if self.seed is not None:
            params["seed"] = self.seed
        try:
            if "M_s" in params:
                params.pop("K", None)
                return SyntheticSpec(**params)
            if "K" not in params:
                raise ConfigError("[synthetic] needs K (or explicit M_s / Sigma_s)")
            return GENERATORS[kind](params.pop("K"), **params)
        except TypeError as exc:
            raise ConfigError(f"[synthetic]: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"[synthetic]: {exc}") from exc


def _reject_unknown(section: str, given, allowed):
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def from_mapping(raw: dict) -> RunConfig:
    _reject_unknown("config", raw, TOP_LEVEL)
    bt = raw.get("backtest", {})
    _reject_unknown("[backtest]", bt, {f.name for f in dataclasses.fields(BacktestConfig)})
    syn = raw.get("synthetic")
    if syn is not None:
        _reject_unknown("[synthetic]", syn, SYNTHETIC_KEYS)
    io = raw.get("io", {})
    _reject_unknown("[io]", io, IO_KEYS)
    return RunConfig(backtest=BacktestConfig(**bt), synthetic=syn, seed=raw.get("seed"), **io)


def load(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (TOML) and apply dotted ``overrides`` such as ``{"backtest.lam_s": 0.9}``."""
    raw: dict = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_mapping(raw)
