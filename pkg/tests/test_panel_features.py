import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtload import DataError, EntityPanel, TempContext, build_feature_r, build_feature_s, calendar_type
from mtload.errors import ConfigError
from mtload.features import update_temp_context
from mtload.panel import get_scheme, holiday_flags_for


# -- calendar types --------------------------------------------------------

def test_tuesday_midnight_is_type_1():
    assert calendar_type(pd.Timestamp("2021-01-05 00:00"), False) == 1


def test_saturday_last_hour_is_type_48():
    assert calendar_type(pd.Timestamp("2021-01-09 23:00")) == 48


def test_holiday_moves_weekday_into_offday_block():
    assert calendar_type(pd.Timestamp("2021-01-06 11:00"), True) == 36


def test_scheme_matches_scalar_rule_over_a_fortnight():
    idx = pd.date_range("2021-03-01", periods=24 * 14, freq="h", tz="UTC")
    flags = holiday_flags_for(idx, [dt.date(2021, 3, 3)])
    got = get_scheme("hour48").classify(idx, flags)
    want = [calendar_type(t, f) for t, f in zip(idx, flags)]
    np.testing.assert_array_equal(got, want)
    assert set(got) == set(range(1, 49))


def test_daytype2_and_constant1():
    idx = pd.date_range("2021-03-05", periods=72, freq="h")  # Fri..Sun
    np.testing.assert_array_equal(np.unique(get_scheme("daytype2").classify(idx)), [1, 2])
    assert set(get_scheme("constant1").classify(idx)) == {1}


def test_unknown_scheme_is_config_error():
    with pytest.raises(ConfigError, match="hour48"):
        get_scheme("hour24")


# -- panel validation ------------------------------------------------------

def _panel(T=5, K=2, **kw):
    idx = pd.date_range("2021-01-01", periods=T, freq="h", tz="UTC")
    args = dict(entity_ids=[f"e{k}" for k in range(K)], timestamps=idx,
                loads=np.ones((T, K)), temperatures=np.full((T, K), 50.0))
    args.update(kw)
    return EntityPanel(**args)


def test_panel_shapes():
    p = _panel()
    assert (p.T, p.K) == (5, 2)
    assert p.slice(1, 3).T == 2


def test_panel_rejects_nan():
    loads = np.ones((5, 2))
    loads[3, 1] = np.nan
    with pytest.raises(DataError, match="e1"):
        _panel(loads=loads)


def test_panel_rejects_irregular_steps():
    idx = pd.DatetimeIndex(["2021-01-01 00:00", "2021-01-01 01:00", "2021-01-01 03:00"])
    with pytest.raises(DataError, match="one hour"):
        _panel(T=3, timestamps=idx)


def test_panel_rejects_duplicate_ids():
    with pytest.raises(DataError, match="duplicate"):
        _panel(entity_ids=["a", "a"])


# -- features --------------------------------------------------------------

@pytest.mark.parametrize("prev, want", [
    ([3.0, 1.5], [1, 3.0, 1.5]),
    ([0.0], [1, 0.0]),
    ([2, 2, 2], [1, 2, 2, 2]),
])
def test_feature_s(prev, want):
    np.testing.assert_array_equal(build_feature_s(prev), want)


def test_feature_s_rejects_inf():
    with pytest.raises(DataError):
        build_feature_s([1.0, np.inf])


def _ctx_with_mean(wbar):
    ctx = TempContext(1, 1)
    update_temp_context(ctx, 1, [wbar])
    return ctx


@pytest.mark.parametrize("w, wbar, block", [
    (95.0, 70.0, [1, 1, 0]),
    (70.0, 70.0, [1, 0, 0]),
    (10.0, 40.0, [1, 0, 1]),
    (75.0, 50.0, [1, 0, 0]),   # large shift but not extreme
    (85.0, 70.0, [1, 0, 0]),   # extreme but small shift
])
def test_feature_r_blocks(w, wbar, block):
    np.testing.assert_array_equal(build_feature_r([w], _ctx_with_mean(wbar), 1), block)


def test_feature_r_unseen_type_is_intercept_only():
    ctx = TempContext(2, 2)
    np.testing.assert_array_equal(build_feature_r([100.0, -10.0], ctx, 2), [1, 0, 0, 1, 0, 0])


def test_feature_r_does_not_touch_context():
    ctx = _ctx_with_mean(60.0)
    before = ctx.copy()
    build_feature_r([99.0], ctx, 1)
    np.testing.assert_array_equal(ctx.mean, before.mean)
    np.testing.assert_array_equal(ctx.count, before.count)


def test_running_mean_examples():
    ctx = TempContext(1, 1)
    for temp, mean, count in [(50, 50, 1), (70, 60, 2), (60, 60, 3)]:
        update_temp_context(ctx, 1, [temp])
        assert ctx.mean[0, 0] == mean and ctx.count[0, 0] == count


def test_running_mean_matches_batch_mean(rng):
    temps = rng.normal(60, 20, size=10_000)
    ctx = TempContext(1, 1)
    for w in temps:
        update_temp_context(ctx, 1, [w])
    assert abs(ctx.mean[0, 0] - temps.mean()) < 1e-12 * max(1.0, abs(temps.mean()))


def test_ewm_mean_first_value_then_blend():
    ctx = TempContext(1, 1, mode="ewm", lam_w=0.5)
    update_temp_context(ctx, 1, [40.0])
    update_temp_context(ctx, 1, [60.0])
    assert ctx.mean[0, 0] == 50.0


def test_context_round_trip():
    ctx = TempContext(3, 2)
    update_temp_context(ctx, 2, [61.25, 0.1])
    back = TempContext.from_dict(ctx.to_dict())
    np.testing.assert_array_equal(back.mean, ctx.mean)
    np.testing.assert_array_equal(back.count, ctx.count)


@settings(max_examples=200, deadline=None)
@given(
    w=st.floats(-40, 130, allow_nan=False),
    wbar=st.floats(-40, 130, allow_nan=False),
)
def test_indicators_are_exclusive_and_follow_thresholds(w, wbar):
    u = build_feature_r([w], _ctx_with_mean(wbar), 1)
    assert u[0] == 1.0
    assert u[1] + u[2] <= 1
    assert u[1] == float(w - wbar > 20 and (w > 80 or w < 20))
    assert u[2] == float(w - wbar < -20 and (w > 80 or w < 20))
