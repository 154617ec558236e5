"""Online multi-entity probabilistic load forecasting.

Per calendar type, a load-transition model ``s_t | s_{t-1}`` and an
observation model ``s_t | temperature features`` are tracked by
forgetting-factor recursive estimators; forecasts fuse the two Gaussians
step by step over the horizon.
"""

from ._backend import BACKEND
from .errors import ConfigError, DataError, ModelNotReadyError, MTLoadError, NumericalError
from .evaluation import (
    BacktestConfig,
    MetricsReport,
    OnlineEngine,
    error_cdf,
    mape,
    persistence_baseline,
    rmse,
    run_backtest,
)
from .features import TempContext, build_feature_r, build_feature_s, update_temp_context
from .forecaster import Forecast, predict_horizon, predict_step, rollout, selector
from .learner import ConditionalModel, ModelBank, learn_step, update
from .panel import CalendarScheme, EntityPanel, calendar_type, get_scheme

__version__ = "0.1.0"
