"""Scenario configuration: INI files with [topology], [traffic], [detector]
and [disco] sections. Every key is optional; defaults describe the TTL-based
attack of the default run.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Any

from ..events import Prefix
from ..simnet import MS, SECOND

VARIANTS = ("ttl", "server", "flash")


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class TopologyConfig:
    filler_nodes: int = 16
    hop_latency_ms: float = 5.0
    jitter_us: int = 0
    leaf_size: int = 4
    # node ids hash from "<id_salt>:<name>"; the default keeps every sensor off the drops rendezvous
    id_salt: str = "disco-node-3"


@dataclass(frozen=True)
class TrafficConfig:
    variant: str = "ttl"
    seed: int = 1
    pre_attack_s: float = 5.0
    attack_s: float = 10.0
    post_attack_s: float = 10.0
    victim_prefix: str = "4.2.0.0/16"
    dilution_prefix: str = "7.7.0.0/16"
    attack_rate: float = 300.0
    dilution_share: float = 0.2
    benign_drop_rate: float = 2.0
    benign_queue_rate: float = 5.0
    request_rate: float = 20.0
    request_cost: int = 100
    attack_request_cost: int = 500
    flash_rate: float = 0.0
    remediate: bool = False
    remediation_factor: float = 0.2


@dataclass(frozen=True)
class DetectorConfig:
    heavy_window_ms: float = 500.0
    heavy_threshold: int = 50
    check_interval_ms: float = 250.0
    rate_window_ms: float = 1000.0
    drop_threshold: int = 100
    end_threshold: int = 25
    end_checks: int = 4
    server_rate_threshold: int = 150
    server_cost_threshold: float = 300.0
    steady_max_events: int = 10
    challenge_max_events: int = 0
    max_period_ms: float = 500.0
    flexible: bool = False
    diagnostic_lookback_s: float = 5.0


@dataclass(frozen=True)
class DiscoConfig:
    edge_latency_ms: float = 100.0
    ttl_multiple: int = 8
    lts_capacity: int = 4096
    zfilter_m: int = 256
    zfilter_k: int = 4
    zfilter_seed: int = 0
    retention_base_s: float = 30.0
    tag_bonus_s: float = 60.0
    lookup_bonus_s: float = 5.0
    subscriber_bonus_s: float = 1.0
    bucket_ms: float = 1000.0
    sweep_interval_s: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    disco: DiscoConfig = field(default_factory=DiscoConfig)

    # -- derived times (microseconds) --------------------------------------------------

    @property
    def attack_start(self) -> int:
        return round(self.traffic.pre_attack_s * SECOND)

    @property
    def attack_end(self) -> int:
        return self.attack_start + round(self.traffic.attack_s * SECOND)

    @property
    def duration(self) -> int:
        return self.attack_end + round(self.traffic.post_attack_s * SECOND)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, traffic=replace(self.traffic, seed=seed))

    def override(self, section: str, **values) -> "ScenarioConfig":
        return replace(self, **{section: replace(getattr(self, section), **values)})

    def validate(self) -> "ScenarioConfig":
        t, d, o, g = self.traffic, self.detector, self.disco, self.topology
        if t.variant not in VARIANTS:
            raise ConfigInvalid(f"traffic.variant must be one of {', '.join(VARIANTS)}")
        for name in ("victim_prefix", "dilution_prefix"):
            try:
                Prefix.parse(getattr(t, name))
            except ValueError as exc:
                raise ConfigInvalid(f"traffic.{name}: {exc}") from None
        rates = ("attack_rate", "benign_drop_rate", "benign_queue_rate", "request_rate", "flash_rate")
        if any(getattr(t, r) < 0 for r in rates):
            raise ConfigInvalid("traffic rates must be >= 0")
        if min(t.pre_attack_s, t.attack_s, t.post_attack_s) < 0:
            raise ConfigInvalid("phase durations must be >= 0")
        if not 0 <= t.dilution_share <= 1 or not 0 <= t.remediation_factor <= 1:
            raise ConfigInvalid("shares and factors must lie in [0, 1]")
        positive = {
            "detector.heavy_threshold": d.heavy_threshold,
            "detector.drop_threshold": d.drop_threshold,
            "detector.end_threshold": d.end_threshold,
            "detector.end_checks": d.end_checks,
            "detector.server_rate_threshold": d.server_rate_threshold,
            "detector.server_cost_threshold": d.server_cost_threshold,
            "detector.steady_max_events": d.steady_max_events,
            "detector.max_period_ms": d.max_period_ms,
            "detector.heavy_window_ms": d.heavy_window_ms,
            "detector.check_interval_ms": d.check_interval_ms,
            "detector.rate_window_ms": d.rate_window_ms,
            "disco.edge_latency_ms": o.edge_latency_ms,
            "disco.ttl_multiple": o.ttl_multiple,
            "disco.lts_capacity": o.lts_capacity,
            "disco.bucket_ms": o.bucket_ms,
            "disco.sweep_interval_s": o.sweep_interval_s,
            "topology.hop_latency_ms": g.hop_latency_ms,
            "topology.leaf_size": g.leaf_size,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigInvalid(f"{name} must be > 0")
        if d.challenge_max_events < 0 or g.filler_nodes < 0 or g.jitter_us < 0:
            raise ConfigInvalid("counts and jitter must be >= 0")
        if not 0 < o.zfilter_k <= o.zfilter_m:
            raise ConfigInvalid("need 0 < disco.zfilter_k <= disco.zfilter_m")
        if min(o.retention_base_s, o.tag_bonus_s, o.lookup_bonus_s, o.subscriber_bonus_s) < 0:
            raise ConfigInvalid("retention durations must be >= 0")
        return self

    # -- conversions ----------------------------------------------------------------------

    @property
    def hop_latency(self) -> int:
        return round(self.topology.hop_latency_ms * MS)

    @property
    def edge_latency(self) -> int:
        return round(self.disco.edge_latency_ms * MS)

    @property
    def max_period(self) -> int:
        return round(self.detector.max_period_ms * MS)


_SECTIONS = {
    "topology": TopologyConfig,
    "traffic": TrafficConfig,
    "detector": DetectorConfig,
    "disco": DiscoConfig,
}


def _convert(section: str, key: str, raw: str, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigInvalid(f"{section}.{key}: {exc}") from None


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigInvalid(str(exc)) from None
    parts = {}
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigInvalid(f"unknown section [{name}]")
    for name, cls in _SECTIONS.items():
        base = cls()
        known = {f.name: f for f in fields(cls)}
        values = {}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigInvalid(f"unknown key {name}.{key}")
                values[key] = _convert(name, key, raw, getattr(base, key))
        parts[name] = replace(base, **values)
    return ScenarioConfig(**parts).validate()


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_config(text, source=path)


def bundled_config(name: str = "default") -> ScenarioConfig:
    """One of the configs shipped with the package (default, flash_crowd, ...)."""
    text = resources.files(__package__).joinpath("data", f"{name}.ini").read_text(encoding="utf-8")
    return parse_config(text, source=f"{name}.ini")


def bundled_vocabulary() -> list[str]:
    return resources.files(__package__).joinpath("data", "vocabulary.txt").read_text(encoding="utf-8").splitlines()
