import json

import pytest

from topobc.harness import SweepConfig, sweep

SLOPE_SNR_DB = (40.0, 60.0, 80.0)
SLOPE_TRIALS = 400


@pytest.fixture
def measured_slope():
    """Fitted sum-rate slope of one scheme over 40/60/80 dB, single process."""

    def run(scheme, alpha, trials=SLOPE_TRIALS, seed=7, mode="analytic", **options):
        config = SweepConfig(
            scheme=scheme,
            alpha=alpha,
            snr_points_db=SLOPE_SNR_DB,
            trials=trials,
            seed=seed,
            mode=mode,
            options=tuple(options.items()),
        )
        _, estimate = sweep(config, workers=1)
        return estimate.slope

    return run


@pytest.fixture
def write_dist(tmp_path):
    """Writes a distribution JSON file and returns its path."""

    def write(alpha, states, name="dist.json"):
        path = tmp_path / name
        payload = {
            "alpha": alpha,
            "states": [{"csit": c, "topology": t, "fraction": f} for c, t, f in states],
        }
        path.write_text(json.dumps(payload, indent=2))
        return path

    return write
