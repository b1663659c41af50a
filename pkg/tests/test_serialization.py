import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oblate_crystal.config import ConfigError, TrapConfig, parse_config
from oblate_crystal.serialization import csv_bytes, format_number, json_bytes


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip(x):
    assert float(format_number(x)) == x


def test_number_formats():
    assert format_number(True) == "true"
    assert format_number(np.int64(3)) == "3"
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(math.nan) == "nan"


def test_csv_layout():
    data = csv_bytes(["a", "b"], [(1, 0.5), ("x", -2.0)])
    assert data == b"a,b\n1,0.5\nx,-2\n"


def test_json_is_valid_and_exact():
    doc = {"x": [0.1, 1e-300, np.float64(2.5)], "nested": {"flag": np.bool_(True), "none": None}, "nan": math.nan}
    parsed = json.loads(json_bytes(doc))
    assert parsed["x"] == [0.1, 1e-300, 2.5]
    assert parsed["nested"] == {"flag": True, "none": None}
    assert parsed["nan"] is None


def test_json_rejects_unknown_types():
    with pytest.raises(TypeError):
        json_bytes({"x": object()})


def test_empty_config_is_reference_setup():
    cfg = parse_config("")
    assert cfg == TrapConfig()
    assert cfg.drive.V_ring_dc == 46.3 and cfg.drive.V_top == 50.0
    assert cfg.drive.Omega_rf == pytest.approx(2 * math.pi * 35e6)


def test_config_units():
    cfg = parse_config(
        "[species]\nmass_u = 40\n[geometry]\nr_o_m = 1e-3\n[drive]\nrf_frequency_Hz = 10e6 ; comment\nring_dc_V = 3\n"
    )
    assert cfg.species.mass == pytest.approx(40 * 1.66053906660e-27)
    assert cfg.geometry.r_o == 1e-3
    assert cfg.drive.Omega_rf == pytest.approx(2 * math.pi * 10e6)
    assert cfg.drive.V_ring_dc == 3.0


def test_angular_frequency_key():
    cfg = parse_config("[drive]\nrf_angular_frequency_rad_s = 1e8\n")
    assert cfg.drive.Omega_rf == 1e8


@pytest.mark.parametrize(
    "text",
    [
        "[drive]\nrf_frequency_Hz = 1e6\nrf_angular_frequency_rad_s = 1e7\n",
        "[drive]\nrf_frequency_Hz = -1e6\n",
        "[species]\nmass_u = 0\n",
        "[geometry]\nc_m = inf\n",
        "[geometry]\nb_b_m = 1\n",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)
