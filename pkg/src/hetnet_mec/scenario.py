"""Scenario description: base stations, users, tasks, prices, popularity, channels.

A scenario is built either programmatically or from a TOML config file with
sections ``[[bss]]``, ``[users]``, ``[popularity]``, ``[channel]`` and
``[prices]``.  Anything left out of the config is filled with the default
parameter set (see ``DEFAULTS``).  All stored values are SI.

Random draws use one independent stream per (seed, purpose, index), so the
first ``k`` users of a scenario with ``U > k`` users are identical to the
users of the scenario with ``k`` users.  This is what lets a user sweep grow
the population incrementally.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .units import UnitError, parse_quantity

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

__all__ = [
    "ScenarioError",
    "BaseStation",
    "ComputationTask",
    "User",
    "PopularityModel",
    "ChannelRealization",
    "Scenario",
    "DEFAULTS",
    "zipf_popularity",
    "spectral_efficiency",
    "draw_channel",
    "caching_gain",
    "build_scenario",
    "load_scenario",
    "dump_scenario",
    "save_scenario",
    "builtin_config",
]


class ScenarioError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


# stream ids for np.random.default_rng([seed, stream, index])
_CHANNEL_STREAM = 0
_USER_STREAM = 1
_PRICE_STREAM = 2
_BS_POSITION_STREAM = 3

DEFAULTS: dict[str, Any] = {
    "sp_count": 2,
    "channel": {"tx_power_dbm": 27.0, "noise_psd_dbm_hz": -174.0, "path_loss_exponent": 4.0},
    "popularity": {"catalog_size": 20, "exponent": 0.8},
    "prices": {
        "spectrum": {"low": "1units/kHz", "high": "3units/kHz"},
        "energy": {"low": "40e-6units/J", "high": "80e-6units/J"},
        "cache_before": {"low": "10units/Mb", "high": "20units/Mb"},
        "cache_after": {"low": "10units/Mb", "high": "20units/Mb"},
        "backhaul": ["10units/Mbps", "12units/Mbps"],
        "access": "10units/Mbps",
        "compute": "100units/bps",
    },
    "bs": {
        "bandwidth": "10MHz",
        "compute": ["10GHz", "5GHz"],
        "max_tasks": 10,
        "cache": ["10Mb", "5Mb"],
        "energy_per_cycle": "1W/GHz",
        "area_radius": "500m",
    },
    "users": {
        "count": 8,
        "area_radius": "500m",
        "input_size": {"low": "1Mb", "high": "4Mb"},
        "output_size": {"low": "1Mb", "high": "4Mb"},
        "cycles": {"low": "100Mcycles", "high": "1300Mcycles"},
        "min_comm_rate": "1e5bps",
        "min_compute_rate": "1e5bps",
        "backhaul_rate": "100Mbps",
    },
}


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str
    bandwidth_hz: float
    compute_capability_cps: float
    max_tasks: int
    cache_capacity_bits: float
    energy_per_cycle_j: float
    spectrum_price: float
    backhaul_price: float
    energy_price: float
    cache_price_before: float
    cache_price_after: float
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        where = f"bss[{self.id}]"
        if self.kind not in ("macro", "small"):
            raise ScenarioError(f"{where}.kind: expected 'macro' or 'small', got {self.kind!r}")
        _positive(self.bandwidth_hz, f"{where}.bandwidth")
        _positive(self.compute_capability_cps, f"{where}.compute")
        _positive(self.energy_per_cycle_j, f"{where}.energy_per_cycle")
        if int(self.max_tasks) != self.max_tasks or self.max_tasks < 1:
            raise ScenarioError(f"{where}.max_tasks: must be an integer >= 1, got {self.max_tasks}")
        _nonnegative(self.cache_capacity_bits, f"{where}.cache")
        for name in ("spectrum_price", "backhaul_price", "energy_price",
                     "cache_price_before", "cache_price_after"):
            _nonnegative(getattr(self, name), f"{where}.{name}")


@dataclass(frozen=True)
class ComputationTask:
    input_size_bits: float
    output_size_bits: float
    cycles: float
    min_compute_rate_bps: float
    content_id_before: int
    content_id_after: int
    download_time_before_s: float
    download_time_after_s: float

    def validate(self, where: str, catalog_size: int) -> None:
        _positive(self.input_size_bits, f"{where}.input_size")
        _positive(self.output_size_bits, f"{where}.output_size")
        _positive(self.cycles, f"{where}.cycles")
        _nonnegative(self.min_compute_rate_bps, f"{where}.min_compute_rate")
        _positive(self.download_time_before_s, f"{where}.download_time_before")
        _positive(self.download_time_after_s, f"{where}.download_time_after")
        for name in ("content_id_before", "content_id_after"):
            cid = getattr(self, name)
            if not 0 <= cid < catalog_size:
                raise ScenarioError(f"{where}.{name}: {cid} outside catalog of size {catalog_size}")


@dataclass(frozen=True)
class User:
    id: int
    sp_id: int
    task: ComputationTask
    min_comm_rate_bps: float
    access_price: float
    compute_price: float
    position: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True, eq=False)
class PopularityModel:
    catalog_size: int
    exponent: float
    probabilities: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, PopularityModel):
            return NotImplemented
        return (self.catalog_size == other.catalog_size and self.exponent == other.exponent
                and np.array_equal(self.probabilities, other.probabilities))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    spectral_efficiency: np.ndarray
    tx_power_dbm: float
    noise_psd_dbm_hz: float
    path_loss_exponent: float
    rng_seed: int

    def __eq__(self, other):
        if not isinstance(other, ChannelRealization):
            return NotImplemented
        return (self.tx_power_dbm == other.tx_power_dbm
                and self.noise_psd_dbm_hz == other.noise_psd_dbm_hz
                and self.path_loss_exponent == other.path_loss_exponent
                and self.rng_seed == other.rng_seed
                and np.array_equal(self.spectral_efficiency, other.spectral_efficiency))


@dataclass(frozen=True)
class Scenario:
    base_stations: tuple[BaseStation, ...]
    users: tuple[User, ...]
    sp_count: int
    popularity: PopularityModel
    channel: ChannelRealization
    seed: int = 0

    def __post_init__(self):
        if not self.base_stations:
            raise ScenarioError("bss: at least one base station is required")
        if not self.users:
            raise ScenarioError("users: at least one user is required")
        if self.sp_count < 1:
            raise ScenarioError("sp_count: must be >= 1")
        for n, bs in enumerate(self.base_stations):
            if bs.id != n:
                raise ScenarioError(f"bss[{n}].id: expected {n}, got {bs.id}")
        for u, user in enumerate(self.users):
            where = f"users[{u}]"
            if user.id != u:
                raise ScenarioError(f"{where}.id: expected {u}, got {user.id}")
            if not 0 <= user.sp_id < self.sp_count:
                raise ScenarioError(f"{where}.sp: {user.sp_id} is not a service provider index < {self.sp_count}")
            _nonnegative(user.min_comm_rate_bps, f"{where}.min_comm_rate")
            _nonnegative(user.access_price, f"{where}.access_price")
            _nonnegative(user.compute_price, f"{where}.compute_price")
            user.task.validate(where, self.popularity.catalog_size)
        r = self.channel.spectral_efficiency
        if r.shape != (self.n_users, self.n_bs):
            raise ScenarioError(f"channel.spectral_efficiency: shape {r.shape}, expected {(self.n_users, self.n_bs)}")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ScenarioError("channel.spectral_efficiency: entries must be finite and >= 0")

    @property
    def n_bs(self) -> int:
        return len(self.base_stations)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def bs_array(self, name: str) -> np.ndarray:
        return np.array([getattr(bs, name) for bs in self.base_stations], dtype=float)

    def user_array(self, name: str) -> np.ndarray:
        return np.array([getattr(u, name) for u in self.users], dtype=float)

    def task_array(self, name: str) -> np.ndarray:
        return np.array([getattr(u.task, name) for u in self.users], dtype=float)

    def with_users(self, count: int) -> "Scenario":
        """Prefix of the user population (channels of kept users unchanged)."""
        if not 1 <= count <= self.n_users:
            raise ScenarioError(f"users.count: {count} not in [1, {self.n_users}]")
        ch = replace(self.channel, spectral_efficiency=_frozen(self.channel.spectral_efficiency[:count]))
        return replace(self, users=self.users[:count], channel=ch)


def _positive(x: float, name: str) -> None:
    if not (math.isfinite(x) and x > 0):
        raise ScenarioError(f"{name}: must be > 0, got {x}")


def _nonnegative(x: float, name: str) -> None:
    if not (math.isfinite(x) and x >= 0):
        raise ScenarioError(f"{name}: must be >= 0, got {x}")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# models


def zipf_popularity(catalog_size: int, exponent: float) -> PopularityModel:
    """Zipf content popularity, ``p_f`` proportional to ``1 / f**exponent``."""
    if int(catalog_size) != catalog_size or catalog_size < 1:
        raise ValueError(f"catalog_size must be a positive integer, got {catalog_size}")
    if not exponent >= 0:
        raise ValueError(f"exponent must be >= 0, got {exponent}")
    ranks = np.arange(1, int(catalog_size) + 1, dtype=float)
    w = ranks ** -float(exponent)
    return PopularityModel(int(catalog_size), float(exponent), _frozen(w / w.sum()))


def spectral_efficiency(gain, tx_power_dbm: float, noise_psd_dbm_hz: float) -> np.ndarray:
    """Shannon efficiency ``log2(1 + P |h|^2 / N0)`` per Hz of bandwidth."""
    p_w = 10.0 ** ((tx_power_dbm - 30.0) / 10.0)
    n0 = 10.0 ** ((noise_psd_dbm_hz - 30.0) / 10.0)
    return np.log2(1.0 + p_w * np.asarray(gain, dtype=float) / n0)


def draw_channel(bs_positions, user_positions, tx_power_dbm: float = 27.0,
                 noise_psd_dbm_hz: float = -174.0, path_loss_exponent: float = 4.0,
                 seed: int = 0) -> ChannelRealization:
    """Draw Rayleigh-faded gains with variance ``1/(1+d)**alpha`` and map to bps/Hz.

    Each user row comes from its own random stream so that adding users
    leaves the existing rows untouched.
    """
    if not path_loss_exponent > 0:
        raise ValueError(f"path_loss_exponent must be > 0, got {path_loss_exponent}")
    bs = np.atleast_2d(np.asarray(bs_positions, dtype=float))
    us = np.atleast_2d(np.asarray(user_positions, dtype=float))
    d = np.linalg.norm(us[:, None, :] - bs[None, :, :], axis=-1)
    var = (1.0 + d) ** -path_loss_exponent
    gain = np.empty_like(var)
    for u in range(us.shape[0]):
        rng = np.random.default_rng([seed, _CHANNEL_STREAM, u])
        re, im = rng.standard_normal((2, bs.shape[0]))
        gain[u] = var[u] * (re**2 + im**2) / 2.0
    r = spectral_efficiency(gain, tx_power_dbm, noise_psd_dbm_hz)
    return ChannelRealization(_frozen(r), float(tx_power_dbm), float(noise_psd_dbm_hz),
                              float(path_loss_exponent), int(seed))


def caching_gain(p_content, size_bits, download_time_s):
    """Expected backhaul rate saved by caching a content: ``p * size / T``."""
    t = np.asarray(download_time_s, dtype=float)
    if np.any(t <= 0):
        raise ValueError("download_time_s must be > 0")
    out = np.asarray(p_content, dtype=float) * np.asarray(size_bits, dtype=float) / t
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# config ingestion


def builtin_config(name: str) -> Path:
    """Path of a shipped config (``fig2`` or ``fig3``)."""
    path = Path(__file__).parent / "configs" / f"{name}.toml"
    if not path.exists():
        raise ScenarioError(f"no builtin config named {name!r}")
    return path


def load_scenario(source, *, seed: int | None = None, users: int | None = None) -> Scenario:
    """Build a validated scenario from a config path, TOML text or mapping.

    ``seed`` and ``users`` override the config's ``seed`` and ``users.count``.
    """
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source):
            path = Path(source)
            if not path.exists() and isinstance(source, str):
                path = builtin_config(source)
            text = path.read_text(encoding="utf-8")
        else:
            text = source
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"config: {exc}") from exc
    return build_scenario(doc, seed=seed, users=users)


def build_scenario(doc: Mapping[str, Any], *, seed: int | None = None,
                   users: int | None = None) -> Scenario:
    try:
        return _build(doc, seed, users)
    except UnitError as exc:
        raise ScenarioError(str(exc)) from exc


_TOP_KEYS = {"seed", "sp_count", "bss", "users", "popularity", "channel", "prices"}


def _build(doc, seed_override, users_override) -> Scenario:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"config: unknown top-level keys {sorted(unknown)}")
    if seed_override is None and "seed" not in doc:
        raise ScenarioError("seed: field is mandatory")
    seed = int(doc["seed"] if seed_override is None else seed_override)
    if seed < 0:
        raise ScenarioError("seed: must be >= 0")
    sp_count = int(doc.get("sp_count", DEFAULTS["sp_count"]))

    pop_cfg = {**DEFAULTS["popularity"], **doc.get("popularity", {})}
    try:
        popularity = zipf_popularity(pop_cfg["catalog_size"], float(pop_cfg["exponent"]))
    except ValueError as exc:
        raise ScenarioError(f"popularity: {exc}") from exc

    prices = {**DEFAULTS["prices"], **doc.get("prices", {})}
    bs_entries = doc.get("bss")
    if bs_entries is None:
        bs_entries = [{"kind": "macro"}, {"kind": "small"}]
    if not isinstance(bs_entries, list) or not bs_entries:
        raise ScenarioError("bss: expected a non-empty array of tables")
    base_stations = tuple(_make_bs(n, dict(e), prices, seed) for n, e in enumerate(bs_entries))

    user_cfg = {**DEFAULTS["users"], **doc.get("users", {})}
    entries = user_cfg.pop("entries", [])
    count = len(entries) if "entries" in doc.get("users", {}) and "count" not in doc.get("users", {}) \
        else int(user_cfg["count"])
    if users_override is not None:
        count = int(users_override)
    if count < 1:
        raise ScenarioError("users.count: must be >= 1")
    user_list = []
    for u in range(count):
        if u < len(entries):
            user_list.append(_explicit_user(u, dict(entries[u]), user_cfg, prices, popularity))
        else:
            user_list.append(_generated_user(u, user_cfg, prices, popularity, sp_count, seed))
    user_tuple = tuple(user_list)

    ch_cfg = {**DEFAULTS["channel"], **doc.get("channel", {})}
    alpha = float(ch_cfg["path_loss_exponent"])
    if not alpha > 0:
        raise ScenarioError("channel.path_loss_exponent: must be > 0")
    explicit = ch_cfg.get("spectral_efficiency")
    if explicit is not None:
        r = np.array(explicit, dtype=float)
        if r.ndim != 2 or r.shape[1] != len(base_stations) or r.shape[0] < count:
            raise ScenarioError(f"channel.spectral_efficiency: shape {r.shape} does not match "
                                f"{count} users x {len(base_stations)} BSs")
        channel = ChannelRealization(_frozen(r[:count]), float(ch_cfg["tx_power_dbm"]),
                                     float(ch_cfg["noise_psd_dbm_hz"]), alpha, seed)
    else:
        channel = draw_channel([bs.position for bs in base_stations], [u.position for u in user_tuple],
                               float(ch_cfg["tx_power_dbm"]), float(ch_cfg["noise_psd_dbm_hz"]), alpha, seed)
    return Scenario(base_stations, user_tuple, sp_count, popularity, channel, seed)


def _pick(spec, dimension: str, field: str, index: int, rng: np.random.Generator | None):
    """Resolve a price/parameter spec: scalar, per-index list, or {low, high} range."""
    if isinstance(spec, list):
        if not spec:
            raise ScenarioError(f"{field}: empty list")
        # lists shorter than the index count repeat their last value
        return parse_quantity(spec[min(index, len(spec) - 1)], dimension, field)
    if isinstance(spec, Mapping):
        try:
            lo = parse_quantity(spec["low"], dimension, field + ".low")
            hi = parse_quantity(spec["high"], dimension, field + ".high")
        except KeyError as exc:
            raise ScenarioError(f"{field}: range needs 'low' and 'high'") from exc
        if hi < lo:
            raise ScenarioError(f"{field}: high < low")
        u = rng.random() if rng is not None else 0.5
        return lo + (hi - lo) * u
    return parse_quantity(spec, dimension, field)


_BS_KEYS = {"kind", "position", "bandwidth", "compute", "max_tasks", "cache", "energy_per_cycle",
            "spectrum_price", "backhaul_price", "energy_price", "cache_price_before",
            "cache_price_after", "id"}


def _make_bs(n: int, e: dict, prices: Mapping, seed: int) -> BaseStation:
    where = f"bss[{n}]"
    unknown = set(e) - _BS_KEYS
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    d = DEFAULTS["bs"]
    kind = e.get("kind", "macro" if n == 0 else "small")
    if "position" in e:
        pos = tuple(float(v) for v in e["position"])
        if len(pos) != 2:
            raise ScenarioError(f"{where}.position: expected [x, y]")
    elif kind == "macro" and n == 0:
        pos = (0.0, 0.0)
    else:
        rng = np.random.default_rng([seed, _BS_POSITION_STREAM, n])
        pos = _disk_point(rng, parse_quantity(d["area_radius"], "meters"))
    max_tasks = e.get("max_tasks", d["max_tasks"])
    if isinstance(max_tasks, float) and max_tasks.is_integer():
        max_tasks = int(max_tasks)
    if not isinstance(max_tasks, int):
        raise ScenarioError(f"{where}.max_tasks: expected integer, got {max_tasks!r}")

    rng = np.random.default_rng([seed, _PRICE_STREAM, n])
    price = {}
    # draw every range in a fixed order so per-BS overrides do not shift other draws
    for key, cfg_key, dim in (("spectrum_price", "spectrum", "price_per_hz"),
                              ("energy_price", "energy", "price_per_joules"),
                              ("cache_price_before", "cache_before", "price_per_bits"),
                              ("cache_price_after", "cache_after", "price_per_bits"),
                              ("backhaul_price", "backhaul", "price_per_bps")):
        drawn = _pick(prices[cfg_key], dim, f"prices.{cfg_key}", n, rng)
        price[key] = parse_quantity(e[key], dim, f"{where}.{key}") if key in e else drawn

    return BaseStation(
        id=n,
        kind=kind,
        bandwidth_hz=_pick(e.get("bandwidth", d["bandwidth"]), "hz", f"{where}.bandwidth", n, None),
        compute_capability_cps=_pick(e.get("compute", d["compute"]), "hz", f"{where}.compute", n, None),
        max_tasks=max_tasks,
        cache_capacity_bits=_pick(e.get("cache", d["cache"]), "bits", f"{where}.cache", n, None),
        energy_per_cycle_j=_pick(e.get("energy_per_cycle", d["energy_per_cycle"]), "j_per_cycle",
                                 f"{where}.energy_per_cycle", n, None),
        position=pos,
        **price,
    )


def _disk_point(rng: np.random.Generator, radius: float) -> tuple[float, float]:
    rr = radius * math.sqrt(rng.random())
    th = 2.0 * math.pi * rng.random()
    return (rr * math.cos(th), rr * math.sin(th))


def _sample_content(rng: np.random.Generator, popularity: PopularityModel) -> int:
    cdf = np.cumsum(popularity.probabilities)
    return int(min(np.searchsorted(cdf, rng.random(), side="right"), popularity.catalog_size - 1))


def _generated_user(u: int, cfg: Mapping, prices: Mapping, popularity: PopularityModel,
                    sp_count: int, seed: int) -> User:
    rng = np.random.default_rng([seed, _USER_STREAM, u])
    sp = int(rng.integers(sp_count))
    pos = _disk_point(rng, parse_quantity(cfg["area_radius"], "meters", "users.area_radius"))
    z_in = _pick(cfg["input_size"], "bits", "users.input_size", u, rng)
    z_out = _pick(cfg["output_size"], "bits", "users.output_size", u, rng)
    cycles = _pick(cfg["cycles"], "cycles", "users.cycles", u, rng)
    c_before = _sample_content(rng, popularity)
    c_after = _sample_content(rng, popularity)
    bh = parse_quantity(cfg["backhaul_rate"], "bps", "users.backhaul_rate")
    if not bh > 0:
        raise ScenarioError("users.backhaul_rate: must be > 0")
    task = ComputationTask(
        input_size_bits=z_in, output_size_bits=z_out, cycles=cycles,
        min_compute_rate_bps=parse_quantity(cfg["min_compute_rate"], "bps", "users.min_compute_rate"),
        content_id_before=c_before, content_id_after=c_after,
        download_time_before_s=z_in / bh, download_time_after_s=z_out / bh,
    )
    return User(
        id=u, sp_id=sp, task=task,
        min_comm_rate_bps=parse_quantity(cfg["min_comm_rate"], "bps", "users.min_comm_rate"),
        access_price=_pick(prices["access"], "price_per_bps", "prices.access", u, rng),
        compute_price=_pick(prices["compute"], "price_per_bps", "prices.compute", u, rng),
        position=pos,
    )


_USER_KEYS = {"id", "sp", "position", "input_size", "output_size", "cycles", "min_compute_rate",
              "content_before", "content_after", "download_time_before", "download_time_after",
              "min_comm_rate", "access_price", "compute_price"}


def _explicit_user(u: int, e: dict, cfg: Mapping, prices: Mapping, popularity: PopularityModel) -> User:
    where = f"users.entries[{u}]"
    unknown = set(e) - _USER_KEYS
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    for key in ("input_size", "output_size", "cycles", "content_before", "content_after"):
        if key not in e:
            raise ScenarioError(f"{where}.{key}: required for explicit users")
    z_in = parse_quantity(e["input_size"], "bits", f"{where}.input_size")
    z_out = parse_quantity(e["output_size"], "bits", f"{where}.output_size")
    bh = parse_quantity(cfg["backhaul_rate"], "bps", "users.backhaul_rate")
    t_in = parse_quantity(e["download_time_before"], "seconds", f"{where}.download_time_before") \
        if "download_time_before" in e else z_in / bh
    t_out = parse_quantity(e["download_time_after"], "seconds", f"{where}.download_time_after") \
        if "download_time_after" in e else z_out / bh
    task = ComputationTask(
        input_size_bits=z_in, output_size_bits=z_out,
        cycles=parse_quantity(e["cycles"], "cycles", f"{where}.cycles"),
        min_compute_rate_bps=parse_quantity(e.get("min_compute_rate", cfg["min_compute_rate"]), "bps",
                                            f"{where}.min_compute_rate"),
        content_id_before=int(e["content_before"]), content_id_after=int(e["content_after"]),
        download_time_before_s=t_in, download_time_after_s=t_out,
    )
    pos = tuple(float(v) for v in e.get("position", (0.0, 0.0)))
    if len(pos) != 2:
        raise ScenarioError(f"{where}.position: expected [x, y]")
    return User(
        id=u, sp_id=int(e.get("sp", 0)), task=task,
        min_comm_rate_bps=parse_quantity(e.get("min_comm_rate", cfg["min_comm_rate"]), "bps",
                                         f"{where}.min_comm_rate"),
        access_price=_pick(e.get("access_price", prices["access"]), "price_per_bps",
                           f"{where}.access_price", u, None),
        compute_price=_pick(e.get("compute_price", prices["compute"]), "price_per_bps",
                            f"{where}.compute_price", u, None),
        position=pos,
    )


# ---------------------------------------------------------------------------
# serialization


def _as_doc(s: Scenario) -> dict:
    bss = []
    for bs in s.base_stations:
        bss.append({
            "id": bs.id, "kind": bs.kind, "position": list(bs.position),
            "bandwidth": bs.bandwidth_hz, "compute": bs.compute_capability_cps,
            "max_tasks": bs.max_tasks, "cache": bs.cache_capacity_bits,
            "energy_per_cycle": bs.energy_per_cycle_j,
            "spectrum_price": bs.spectrum_price, "backhaul_price": bs.backhaul_price,
            "energy_price": bs.energy_price, "cache_price_before": bs.cache_price_before,
            "cache_price_after": bs.cache_price_after,
        })
    entries = []
    for u in s.users:
        t = u.task
        entries.append({
            "id": u.id, "sp": u.sp_id, "position": list(u.position),
            "input_size": t.input_size_bits, "output_size": t.output_size_bits, "cycles": t.cycles,
            "min_compute_rate": t.min_compute_rate_bps,
            "content_before": t.content_id_before, "content_after": t.content_id_after,
            "download_time_before": t.download_time_before_s, "download_time_after": t.download_time_after_s,
            "min_comm_rate": u.min_comm_rate_bps, "access_price": u.access_price,
            "compute_price": u.compute_price,
        })
    ch = s.channel
    return {
        "seed": s.seed,
        "sp_count": s.sp_count,
        "popularity": {"catalog_size": s.popularity.catalog_size, "exponent": s.popularity.exponent},
        "channel": {
            "tx_power_dbm": ch.tx_power_dbm, "noise_psd_dbm_hz": ch.noise_psd_dbm_hz,
            "path_loss_exponent": ch.path_loss_exponent,
            "spectral_efficiency": ch.spectral_efficiency.tolist(),
        },
        "bss": bss,
        "users": {"entries": entries},
    }


def dump_scenario(s: Scenario) -> str:
    """Normalized SI form of ``s`` as TOML; ``load_scenario`` reads it back exactly."""
    return "# normalized scenario, SI units\n" + tomli_w.dumps(_as_doc(s))


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(dump_scenario(s), encoding="utf-8")
