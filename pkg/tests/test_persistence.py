from fractions import Fraction

import pandas as pd
import pytest

from topobc.persistence import (
    ConfigError,
    dump_distribution,
    load_distribution,
    parse_distribution,
    read_body,
    read_manifest,
    render_csv,
    write_csv_with_manifest,
)
from topobc.state_model import TOPO_1A, TOPO_A1, CsitState


def test_load_distribution(write_dist):
    path = write_dist("1/2", [("DD", "SW", 0.5), ("DD", "WS", 0.5)])
    dist = load_distribution(path)

    dd = CsitState.parse("DD")
    assert dist.alpha == Fraction(1, 2)
    assert dist.fraction(dd, TOPO_1A) == Fraction(1, 2)
    assert dist.fraction(dd, TOPO_A1) == Fraction(1, 2)


def test_decimal_alpha_and_duplicate_states():
    dist = parse_distribution({
        "alpha": 0.6,
        "states": [
            {"csit": "PN", "topology": "SW", "fraction": 0.25},
            {"csit": "PN", "topology": "SW", "fraction": 0.25},
            {"csit": "NP", "topology": "SW", "fraction": "1/2"},
        ],
    })
    assert dist.alpha == Fraction(3, 5)
    assert dist.fraction(CsitState.parse("PN"), TOPO_1A) == Fraction(1, 2)


@pytest.mark.parametrize(
    "data, field",
    [
        ({"states": [{"csit": "PP", "topology": "SW", "fraction": 1}]}, "alpha"),
        ({"alpha": "x", "states": [{"csit": "PP", "topology": "SW", "fraction": 1}]}, "alpha"),
        ({"alpha": "1/2", "states": []}, "states"),
        ({"alpha": "1/2", "states": [{"csit": "PP", "fraction": 1}]}, "states[0].topology"),
        (
            {"alpha": "1/2", "states": [
                {"csit": "PP", "topology": "SW", "fraction": 0.5},
                {"csit": "PX", "topology": "SW", "fraction": 0.5},
            ]},
            "states[1].csit",
        ),
        ({"alpha": "1/2", "states": [{"csit": "PP", "topology": 7, "fraction": 1}]}, "states[0].topology"),
        ({"alpha": "1/2", "states": [{"csit": "PP", "topology": "SW", "fraction": None}]}, "states[0].fraction"),
        ({"alpha": "1/2", "states": ["PP"]}, "states[0]"),
    ],
)
def test_config_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as e:
        parse_distribution(data)
    assert e.value.field == field
    assert field in str(e.value)


def test_unit_sum_violation_is_a_config_error(write_dist):
    path = write_dist("1/2", [("PN", "SW", 0.5), ("NP", "SW", 0.6)])
    with pytest.raises(ConfigError) as e:
        load_distribution(path)
    assert e.value.field == "states"
    assert "sum=1.1" in str(e.value)


def test_json_syntax_error_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "alpha": "1/2",\n  "states": [,]\n}\n')
    with pytest.raises(ConfigError) as e:
        load_distribution(path)
    assert e.value.line == 3
    assert e.value.column is not None


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_distribution(tmp_path / "missing.json")


def test_dump_then_parse_preserves_distribution():
    original = parse_distribution({
        "alpha": "2/3",
        "states": [
            {"csit": "PN", "topology": "SW", "fraction": "1/3"},
            {"csit": "ND", "topology": "WS", "fraction": "2/3"},
        ],
    })
    assert parse_distribution(dump_distribution(original)).same_as(original, tol=0)


def test_csv_with_manifest(tmp_path):
    table = pd.DataFrame({"snr_db": [40.0, 60.0], "rate_sum": [14.123456789, 21.5]})
    manifest = {"command": "simulate", "seed": 3, "argv": "simulate --scheme zf"}
    path = write_csv_with_manifest(tmp_path / "out" / "run.csv", manifest, table, ["slope,1.500000"])

    assert read_manifest(path) == {"command": "simulate", "seed": "3", "argv": "simulate --scheme zf"}
    assert read_body(path) == "snr_db,rate_sum\n40.000000,14.123457\n60.000000,21.500000\nslope,1.500000\n"
    assert not (tmp_path / "out" / "run.csv.tmp").exists()


def test_render_csv_matches_written_body(tmp_path):
    table = pd.DataFrame({"alpha": [0.0, 0.5], "su": [1.0, 1.0]})
    path = write_csv_with_manifest(tmp_path / "fig.csv", {"command": "sweep-fig3"}, table)
    assert read_body(path) == render_csv(table)
