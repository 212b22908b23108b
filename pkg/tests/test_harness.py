import math

import pandas as pd
import pytest

from topobc import harness
from topobc.channel import SnrPoint
from topobc.harness import (
    DegenerateFit,
    HarnessError,
    SweepConfig,
    fit_slope,
    measure_rates,
    safe_trial,
    slope_standard_error,
    sweep,
    verify_against_claims,
    worker_count,
)
from topobc.layered import SchemeError
from topobc.schemes import NonIntegerPhases, SchemeOutcome, UnpairableSchedule
from topobc.state_model import StateDistribution


def log2_rho(snr_db):
    return SnrPoint.from_db(snr_db).log2_rho


# ======================
# CONFIG
# ======================

def test_config_normalizes_fields():
    config = SweepConfig("tsm4", 0.5, [40, 60], trials=100, mode="bitlevel", options=(("variant", "wss"),))
    assert config.alpha == 0.5
    assert config.snr_points_db == (40.0, 60.0)
    assert config.mode.value == "bitlevel"
    assert config.opts == {"variant": "wss"}


@pytest.mark.parametrize(
    "kwargs",
    [
        {"scheme": "nope", "alpha": "1/2"},
        {"scheme": "zf", "alpha": "3/2"},
        {"scheme": "zf", "alpha": "1/2", "snr_points_db": (60,)},
        {"scheme": "zf", "alpha": "1/2", "snr_points_db": (-10, 60)},
        {"scheme": "zf", "alpha": "1/2", "trials": 99},
        {"scheme": "zf", "alpha": "1/2", "seed": -1},
        {"scheme": "zf", "alpha": "1/2", "options": (("variant", "wsw"),)},
        {"scheme": "zf", "alpha": "1/2", "options": (("strong_user", 3),)},
        {"scheme": "tsm4", "alpha": "1/2", "options": (("variant", "sss"),)},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        SweepConfig(**kwargs)


def test_config_rejects_irrational_looking_alpha_for_scheme3():
    with pytest.raises(NonIntegerPhases):
        SweepConfig("tsm3", 0.1234567, trials=100)


def test_config_checks_scheme5_distribution():
    dist = StateDistribution.from_labels({("PN", "SW"): "1/2", ("NP", "SW"): "1/2"}, "1/4")
    with pytest.raises(ValueError):
        SweepConfig("tsm5", "1/2", trials=100, options=(("dist", dist),))

    delayed = StateDistribution.from_labels({("DD", "SW"): 1}, "1/2")
    with pytest.raises(ValueError):
        SweepConfig("tsm5", "1/2", trials=100, options=(("dist", delayed),))


def test_config_rejects_unpairable_horizon(monkeypatch):
    monkeypatch.setattr(harness, "MAX_UNPAIRED", 0)
    with pytest.raises(UnpairableSchedule):
        SweepConfig("tsm5", "1/2", trials=100, options=(("horizon", 5),))


# ======================
# MEASUREMENT
# ======================

def test_single_user_rate_at_60_db():
    table = measure_rates(SweepConfig("su", "1/2", (60, 80), trials=400, seed=1), workers=1)
    row = table.iloc[0]
    assert row["rate_sum"] == pytest.approx(19.9, abs=1.0)
    assert row["rate_u2"] == 0
    assert row["se_sum"] < 0.2


def test_zero_forcing_sum_rate_at_60_db():
    table = measure_rates(SweepConfig("zf", 1, (60, 80), trials=400, seed=2), workers=1)
    assert table.iloc[0]["rate_sum"] == pytest.approx(2 * log2_rho(60), abs=6.0)


def test_table_columns():
    table = measure_rates(SweepConfig("zf", "1/2", (40, 60), trials=100), workers=1)
    assert list(table.columns) == [
        "snr_db", "rho", "rate_u1", "rate_u2", "rate_sum",
        "se_u1", "se_u2", "se_sum", "trials", "failed", "quant_error_power",
    ]
    assert table["trials"].tolist() == [100, 100]
    assert table["quant_error_power"].isna().all()


def test_same_seed_gives_identical_tables():
    config = SweepConfig("tsm1", "1/2", (40, 60), trials=100, seed=5)
    pd.testing.assert_frame_equal(measure_rates(config, workers=1), measure_rates(config, workers=1))


def test_different_seed_changes_rates():
    a = measure_rates(SweepConfig("tsm1", "1/2", (40, 60), trials=100, seed=5), workers=1)
    b = measure_rates(SweepConfig("tsm1", "1/2", (40, 60), trials=100, seed=6), workers=1)
    assert not a["rate_sum"].equals(b["rate_sum"])


def test_results_do_not_depend_on_worker_count():
    config = SweepConfig("tsm4", "1/2", (40, 60), trials=120, seed=9)
    serial = measure_rates(config, workers=1)
    parallel = measure_rates(config, workers=3)
    pd.testing.assert_frame_equal(serial, parallel)


def test_standard_error_shrinks_with_trials():
    small = measure_rates(SweepConfig("zf", "1/2", (40, 60), trials=100, seed=3), workers=1)
    large = measure_rates(SweepConfig("zf", "1/2", (40, 60), trials=1600, seed=3), workers=1)
    ratio = small["se_sum"] / large["se_sum"]
    assert ratio.between(3.0, 5.0).all()


def _failing(alpha, snr, rng, mode, opts):
    raise SchemeError("singular draw")


def test_too_many_failures_abort_the_run(monkeypatch):
    monkeypatch.setitem(harness.SCHEMES, "zf", _failing)
    with pytest.raises(HarnessError):
        measure_rates(SweepConfig("zf", "1/2", (40, 60), trials=100), workers=1)


def test_rare_failures_are_excluded_and_counted(monkeypatch, caplog):
    calls = {"n": 0}
    real = harness.SCHEMES["zf"]

    def flaky(alpha, snr, rng, mode, opts):
        calls["n"] += 1
        if calls["n"] == 1:
            raise SchemeError("near-singular draw")
        return real(alpha, snr, rng, mode, opts)

    monkeypatch.setitem(harness.SCHEMES, "zf", flaky)
    table = measure_rates(SweepConfig("zf", "1/2", (40, 60), trials=200), workers=1)

    assert table["failed"].tolist() == [1, 0]
    assert table["trials"].tolist() == [199, 200]
    assert "excluded 1 failed trials" in caplog.text


def test_safe_trial_returns_fail_value():
    def boom(*args):
        raise SchemeError("x")

    assert safe_trial(boom, 1, 2, fail_value="failed") == "failed"
    assert safe_trial(lambda a, b: SchemeOutcome("ok", a, b, 1), 1.0, 2.0).rate_sum == 3.0


def test_worker_count_from_env(monkeypatch):
    monkeypatch.setattr(harness.os, "cpu_count", lambda: 8)
    monkeypatch.setenv("TOPO_BC_THREADS", "3")
    assert worker_count() == 3

    # the variable caps the pool, it never raises it past the CPU count
    monkeypatch.setenv("TOPO_BC_THREADS", "64")
    assert worker_count() == 8

    monkeypatch.setenv("TOPO_BC_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count()

    monkeypatch.setenv("TOPO_BC_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()

    monkeypatch.delenv("TOPO_BC_THREADS")
    assert worker_count() >= 1


# ======================
# SLOPE FITTING
# ======================

def test_fit_exact_line():
    snrs = [40, 60, 80]
    rates = [1.5 * log2_rho(s) + 3.0 for s in snrs]
    estimate = fit_slope(rates, snrs)

    assert estimate.slope == pytest.approx(1.5)
    assert estimate.intercept == pytest.approx(3.0)
    assert estimate.residual_rms == pytest.approx(0.0, abs=1e-9)
    assert estimate.per_point_rates == tuple(rates)


def test_fit_uses_top_three_points():
    snrs = [80, 20, 60, 40]
    rates = [2.0 * log2_rho(s) for s in snrs]
    rates[1] = -100.0  # lowest SNR point is ignored
    assert fit_slope(rates, snrs).slope == pytest.approx(2.0)


def test_fit_with_two_points():
    estimate = fit_slope([10.0, 20.0], [30, 60])
    assert estimate.slope == pytest.approx(10.0 / (log2_rho(60) - log2_rho(30)))


def test_fit_rejects_degenerate_input():
    with pytest.raises(DegenerateFit):
        fit_slope([1.0, 2.0], [60, 60])
    with pytest.raises(DegenerateFit):
        fit_slope([1.0], [60])
    with pytest.raises(ValueError):
        fit_slope([1.0, 2.0, 3.0], [40, 60])


def test_slope_standard_error():
    se = slope_standard_error([0.1, 0.1, 0.1], [40, 60, 80])
    spread = math.sqrt(sum((log2_rho(s) - log2_rho(60)) ** 2 for s in (40, 60, 80)))
    assert se == pytest.approx(0.1 / spread)


def test_sweep_reports_slope_and_bounded_residual():
    table, estimate = sweep(SweepConfig("zf", "1/2", trials=400, seed=4), workers=1)
    assert len(table) == 3
    assert estimate.slope == pytest.approx(1.5, abs=0.05)
    assert estimate.residual_rms < 0.5


# ======================
# CLAIM VERIFICATION
# ======================

def test_verify_passes_within_tolerance():
    report = verify_against_claims(
        alpha_grid=("1/2",), trials=400, schemes=("zf", "su", "mat"), workers=1
    )
    assert report["status"].tolist() == ["PASS", "PASS", "PASS"]
    assert report["claimed"].tolist() == pytest.approx([1.5, 1.0, 1.0])
    assert (report["slope"] <= report["bound"] + 0.05).all()


def test_verify_fails_below_noise_floor():
    report = verify_against_claims(alpha_grid=("1/2",), tolerance=0.0, trials=100, schemes=("zf",), workers=1)
    assert report["status"].tolist() == ["FAIL"]
