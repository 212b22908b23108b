import math

import numpy as np
import pytest

from topobc.baselines import baseline_single_user, baseline_zero_forcing
from topobc.channel import SnrPoint, trial_stream

SLOPE_TOLERANCE = 0.05


@pytest.mark.parametrize(
    "scheme, alpha, claimed",
    [("zf", "1/2", 1.5), ("zf", "0", 1.0), ("zf", "1", 2.0), ("su", "1/2", 1.0), ("su", "0", 1.0)],
)
def test_baseline_slopes(measured_slope, scheme, alpha, claimed):
    assert measured_slope(scheme, alpha) == pytest.approx(claimed, abs=SLOPE_TOLERANCE)


def test_zero_forcing_streams_are_interference_free():
    snr = SnrPoint.from_db(60)
    outcomes = [baseline_zero_forcing(1, snr, trial_stream(40, 0, t)) for t in range(200)]

    assert all(o.block_length == 1 for o in outcomes)
    # each user keeps a full stream: log2(rho) minus power split and fading loss
    assert np.mean([o.rate_user1 for o in outcomes]) == pytest.approx(snr.log2_rho - 1.83, abs=0.5)
    assert np.mean([o.rate_user2 for o in outcomes]) == pytest.approx(snr.log2_rho - 1.83, abs=0.5)


def test_single_user_serves_only_the_strong_user():
    snr = SnrPoint.from_db(60)
    rates = [baseline_single_user(0.5, snr, trial_stream(41, 0, t)) for t in range(500)]

    assert all(r.rate_user2 == 0 for r in rates)
    # E log2(1 + rho |h|^2) with |h|^2 ~ Gamma(2, 1)
    assert np.mean([r.rate_user1 for r in rates]) == pytest.approx(snr.log2_rho + 0.61, abs=0.3)


def test_single_user_for_user_two():
    outcome = baseline_single_user(0.5, SnrPoint.from_db(60), trial_stream(42, 0, 0), strong_user=2)
    assert outcome.rate_user1 == 0
    assert outcome.rate_user2 > 0


def test_baselines_reject_bad_alpha():
    with pytest.raises(ValueError):
        baseline_zero_forcing(1.5, SnrPoint.from_db(60), trial_stream(43, 0, 0))
    with pytest.raises(ValueError):
        baseline_single_user(math.nan, SnrPoint.from_db(60), trial_stream(43, 0, 0))
