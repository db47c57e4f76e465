"""Parsing of unit-suffixed quantities used in scenario config files.

Every quantity is normalized to SI base units (bits, Hz, seconds, Joules,
CPU cycles, Watts).  Prices are normalized to units per SI base unit, e.g.
``"10units/Mbps"`` becomes ``1e-5`` units/bps.
"""

from __future__ import annotations

import math
import re

__all__ = ["UnitError", "parse_quantity", "dbm_to_watt"]


class UnitError(ValueError):
    """Raised for malformed or dimensionally wrong quantities."""


_PREFIX = {"": 1.0, "k": 1e3, "K": 1e3, "M": 1e6, "G": 1e9, "T": 1e12}

# unit symbol -> (dimension, factor to SI)
_UNITS: dict[str, tuple[str, float]] = {}


def _register(dimension: str, symbols: dict[str, float]) -> None:
    for sym, factor in symbols.items():
        _UNITS[sym] = (dimension, factor)


_register("bits", {p + "b": f for p, f in _PREFIX.items()})
_register("bits", {p + "bit": f for p, f in _PREFIX.items()})
_register("bits", {"B": 8.0, "kB": 8e3, "MB": 8e6, "GB": 8e9})
_register("hz", {p + "Hz": f for p, f in _PREFIX.items()})
_register("bps", {p + "bps": f for p, f in _PREFIX.items()})
_register("cycles", {p + "cycles": f for p, f in _PREFIX.items()})
_register("cycles", {"Megacycles": 1e6, "Gigacycles": 1e9})
_register("seconds", {"s": 1.0, "ms": 1e-3, "us": 1e-6})
_register("meters", {"m": 1.0, "km": 1e3})
_register("joules", {"J": 1.0, "mJ": 1e-3})
_register("j_per_cycle", {"J/cycle": 1.0, "nJ/cycle": 1e-9})
# Watts per GHz of clock: 1 W at 1e9 cycles/s is 1e-9 J per cycle.
_register("j_per_cycle", {"W/GHz": 1e-9, "W/MHz": 1e-6})
_register("watts", {"W": 1.0, "mW": 1e-3})
_register("dimensionless", {"": 1.0})

_PRICE_BASE = {
    "bps": "bps", "Hz": "hz", "b": "bits", "bit": "bits", "J": "joules",
}


def _price_unit(denominator: str) -> tuple[str, float] | None:
    for base, dim in _PRICE_BASE.items():
        if denominator.endswith(base):
            prefix = denominator[: -len(base)]
            if prefix in _PREFIX:
                return "price_per_" + dim, 1.0 / _PREFIX[prefix]
    return None


_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*(?P<num>{_NUMBER})(?:\s*\*\s*(?P<mul>{_NUMBER}))?\s*(?P<unit>\S*)\s*$")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def parse_quantity(value, dimension: str, field: str = "value") -> float:
    """Return ``value`` converted to SI for the given ``dimension``.

    Plain numbers are taken to already be in SI.  Strings carry a unit
    suffix, e.g. ``"5GHz"``, ``"1300Mcycles"``, ``"3units/kHz"``.  Powers
    accept ``dBm`` (and noise densities ``dBm/Hz``), returned in Watts
    (Watts/Hz).
    """
    if isinstance(value, bool):
        raise UnitError(f"{field}: expected a quantity, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _QUANTITY.match(value)
        if m is None:
            raise UnitError(f"{field}: cannot parse quantity {value!r}")
        num = float(m["num"]) * (float(m["mul"]) if m["mul"] else 1.0)
        unit = m["unit"]
        out = _convert(num, unit, dimension, field, value)
    else:
        raise UnitError(f"{field}: expected number or string, got {type(value).__name__}")
    if not math.isfinite(out):
        raise UnitError(f"{field}: non-finite value {value!r}")
    return out


def _convert(num: float, unit: str, dimension: str, field: str, raw: str) -> float:
    if dimension == "watts" and unit in ("dBm", "dBm/Hz"):
        return dbm_to_watt(num)
    if unit.startswith("units/"):
        found = _price_unit(unit[len("units/"):])
        if found is None:
            raise UnitError(f"{field}: unknown price unit in {raw!r}")
        dim, factor = found
    elif unit == "units":
        dim, factor = "units", 1.0
    elif unit in _UNITS:
        dim, factor = _UNITS[unit]
    else:
        raise UnitError(f"{field}: unknown unit {unit!r} in {raw!r}")
    if unit == "" or dim == dimension:
        return num * factor
    raise UnitError(f"{field}: {raw!r} has dimension {dim}, expected {dimension}")
