import math

import pytest

from hetnet_mec.units import UnitError, dbm_to_watt, parse_quantity


@pytest.mark.parametrize("text, dim, expected", [
    ("10Mb", "bits", 10e6),
    ("5GHz", "hz", 5e9),
    ("1300Mcycles", "cycles", 1.3e9),
    ("1e5bps", "bps", 1e5),
    ("1W/GHz", "j_per_cycle", 1e-9),
    ("500m", "meters", 500.0),
    ("10units/Mbps", "price_per_bps", 1e-5),
    ("3units/kHz", "price_per_hz", 3e-3),
    ("40e-6units/J", "price_per_joules", 40e-6),
    ("20units/Mb", "price_per_bits", 2e-5),
    ("1MB", "bits", 8e6),
])
def test_parse_examples(text, dim, expected):
    assert parse_quantity(text, dim) == pytest.approx(expected, rel=1e-12)


def test_plain_numbers_are_si():
    assert parse_quantity(7, "bits") == 7.0
    assert parse_quantity(2.5, "hz") == 2.5


@pytest.mark.parametrize("text, dim", [("10MHz", "bits"), ("abc", "bits"), ("3furlongs", "meters"),
                                       ("1units/Mpc", "price_per_bps")])
def test_bad_quantities_name_the_field(text, dim):
    with pytest.raises(UnitError, match="bss.cache"):
        parse_quantity(text, dim, "bss.cache")


def test_bool_rejected():
    with pytest.raises(UnitError):
        parse_quantity(True, "bits")


def test_dbm():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert parse_quantity("27dBm", "watts") == pytest.approx(10 ** -0.3)
    assert math.isclose(dbm_to_watt(-174.0), 10 ** -20.4, rel_tol=1e-12)
