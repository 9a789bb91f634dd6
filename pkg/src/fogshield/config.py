"""Scenario configuration: documented INI key/value format with strict
validation (unknown sections or keys are errors, never silently ignored).

Shipped presets live in fogshield/data and mirror the three evaluation
scenarios: scenario1 = 3 devices / 2 fog nodes, scenario2 = 5 / 3,
scenario3 = 10 / 5, each with one cloud server and 10,000 packets.
"""

import configparser
import os
from dataclasses import dataclass, field
from importlib import resources

from .cloud import ConfirmationPolicy
from .fog import DetectorParams
from .model import ConfigurationError, Protocol
from .traffic import FloodSpec, TrafficConfig, device_ip

PRESETS = ("scenario1", "scenario2", "scenario3", "scenario1-device-layer")

_SCENARIO_KEYS = {"name", "n_devices", "n_fog_nodes", "n_cloud_servers",
                  "seed", "firewall_rules", "mitigation_rules"}
_TRAFFIC_KEYS = {"total_packets", "attack_ratio", "attacker_devices",
                 "benign_tcp", "benign_udp", "benign_icmp", "duration_s"}
_FLOOD_KEYS = {"target_device", "target_ip", "target_port", "syn_rate",
               "start_s", "end_s", "spoof_sources"}
_DETECTOR_KEYS = {"window_s", "syn_rate_threshold", "syn_fraction_threshold",
                  "conn_init_threshold", "response_time_factor",
                  "flow_spike_threshold", "half_open_threshold",
                  "mac_novelty_threshold", "payload_repeat_fraction",
                  "max_payload_bytes", "min_window_packets"}
_POLICY_KEYS = {"min_analyzer_families", "require_statistical_or_dpi"}
_SECTIONS = {"scenario": _SCENARIO_KEYS, "traffic": _TRAFFIC_KEYS,
             "flood": _FLOOD_KEYS, "detector": _DETECTOR_KEYS,
             "policy": _POLICY_KEYS}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    n_devices: int
    n_fog_nodes: int
    n_cloud_servers: int
    traffic: TrafficConfig
    flood: FloodSpec
    firewall_rules_path: str
    mitigation_rules_path: str
    detector_params: DetectorParams = field(default_factory=DetectorParams)
    confirmation_policy: ConfirmationPolicy = field(
        default_factory=ConfirmationPolicy)
    seed: int = 0

    def validate(self):
        if self.n_devices < 1:
            raise ConfigurationError("n_devices must be >= 1")
        if self.n_fog_nodes < 1:
            raise ConfigurationError("n_fog_nodes must be >= 1")
        if self.n_cloud_servers != 1:
            raise ConfigurationError("n_cloud_servers must be 1")
        self.traffic.validate()
        if round(self.traffic.attack_ratio * self.traffic.total_packets) > 0:
            self.flood.validate(self.traffic.duration_s)
        self.detector_params.validate()

    def to_dict(self):
        return {
            "name": self.name,
            "n_devices": self.n_devices,
            "n_fog_nodes": self.n_fog_nodes,
            "n_cloud_servers": self.n_cloud_servers,
            "seed": self.seed,
            "firewall_rules": os.path.basename(self.firewall_rules_path),
            "mitigation_rules": os.path.basename(self.mitigation_rules_path),
            "traffic": {
                "total_packets": self.traffic.total_packets,
                "attack_ratio": self.traffic.attack_ratio,
                "attacker_devices": sorted(self.traffic.attacker_devices),
                "benign_mix": {p.value: f for p, f in
                               sorted(self.traffic.benign_mix.items(),
                                      key=lambda kv: kv[0].value)},
                "duration_s": self.traffic.duration_s,
            },
            "flood": {
                "target_ip": self.flood.target_ip,
                "target_port": self.flood.target_port,
                "syn_rate": self.flood.syn_rate,
                "start_s": self.flood.start_s,
                "end_s": self.flood.end_s,
                "spoof_sources": self.flood.spoof_sources,
            },
            "policy": {
                "min_analyzer_families":
                    self.confirmation_policy.min_analyzer_families,
                "require_statistical_or_dpi":
                    self.confirmation_policy.require_statistical_or_dpi,
            },
        }


class ConfigError(ConfigurationError):
    pass


def _get(parser, section, key, convert, where, required=True, default=None):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError("%s: missing required key [%s] %s"
                              % (where, section, key))
        return default
    raw = parser.get(section, key)
    try:
        return convert(raw)
    except ValueError as exc:
        raise ConfigError("%s: bad value for [%s] %s: %s"
                          % (where, section, key, exc))


def _bool(raw):
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean, got %r" % raw)


def preset_dir():
    return str(resources.files("fogshield.data"))


def resolve_preset(name):
    path = os.path.join(preset_dir(), name + ".cfg")
    if not os.path.exists(path):
        raise ConfigError("unknown preset %r (have: %s)"
                          % (name, ", ".join(PRESETS)))
    return path


def load_config(path):
    """Load and fully validate a scenario config file."""
    if not os.path.exists(path):
        raise ConfigError("config file not found: %s" % path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError("%s: %s" % (path, exc))
    where = os.path.basename(path)

    for section in parser.sections():
        allowed = _SECTIONS.get(section)
        if allowed is None:
            raise ConfigError("%s: unknown section [%s]" % (where, section))
        for key in parser.options(section):
            if key not in allowed:
                raise ConfigError("%s: unknown key [%s] %s" % (where, section, key))
    for section in ("scenario", "traffic", "flood"):
        if not parser.has_section(section):
            raise ConfigError("%s: missing section [%s]" % (where, section))

    n_devices = _get(parser, "scenario", "n_devices", int, where)
    seed = _get(parser, "scenario", "seed", int, where, required=False, default=0)

    attackers = _get(parser, "traffic", "attacker_devices",
                     lambda s: frozenset(int(x) for x in s.split(",") if x.strip()),
                     where, required=False, default=frozenset())
    traffic = TrafficConfig(
        n_devices=n_devices,
        total_packets=_get(parser, "traffic", "total_packets", int, where),
        attack_ratio=_get(parser, "traffic", "attack_ratio", float, where),
        attacker_devices=attackers,
        benign_mix={
            Protocol.TCP: _get(parser, "traffic", "benign_tcp", float, where,
                               required=False, default=0.7),
            Protocol.UDP: _get(parser, "traffic", "benign_udp", float, where,
                               required=False, default=0.2),
            Protocol.ICMP: _get(parser, "traffic", "benign_icmp", float, where,
                                required=False, default=0.1),
        },
        duration_s=_get(parser, "traffic", "duration_s", float, where,
                        required=False, default=120.0),
        seed=seed,
    )

    if parser.has_option("flood", "target_ip"):
        target_ip = parser.get("flood", "target_ip")
    else:
        target_ip = device_ip(_get(parser, "flood", "target_device", int, where))
    flood = FloodSpec(
        target_ip=target_ip,
        target_port=_get(parser, "flood", "target_port", int, where,
                         required=False, default=80),
        syn_rate=_get(parser, "flood", "syn_rate", float, where,
                      required=False, default=12.0),
        start_s=_get(parser, "flood", "start_s", float, where,
                     required=False, default=2.0),
        end_s=_get(parser, "flood", "end_s", float, where,
                   required=False, default=12.0),
        spoof_sources=_get(parser, "flood", "spoof_sources", _bool, where,
                           required=False, default=False),
    )

    det_kwargs = {}
    if parser.has_section("detector"):
        for key in parser.options("detector"):
            conv = int if key in ("syn_rate_threshold", "conn_init_threshold",
                                  "flow_spike_threshold", "half_open_threshold",
                                  "mac_novelty_threshold", "max_payload_bytes",
                                  "min_window_packets") else float
            det_kwargs[key] = _get(parser, "detector", key, conv, where)
    detector = DetectorParams(**det_kwargs)

    policy_kwargs = {}
    if parser.has_section("policy"):
        if parser.has_option("policy", "min_analyzer_families"):
            policy_kwargs["min_analyzer_families"] = _get(
                parser, "policy", "min_analyzer_families", int, where)
        if parser.has_option("policy", "require_statistical_or_dpi"):
            policy_kwargs["require_statistical_or_dpi"] = _get(
                parser, "policy", "require_statistical_or_dpi", _bool, where)
    policy = ConfirmationPolicy(**policy_kwargs)

    base = os.path.dirname(os.path.abspath(path))
    fw_path = _get(parser, "scenario", "firewall_rules", str, where)
    mit_path = _get(parser, "scenario", "mitigation_rules", str, where)

    config = ScenarioConfig(
        name=_get(parser, "scenario", "name", str, where),
        n_devices=n_devices,
        n_fog_nodes=_get(parser, "scenario", "n_fog_nodes", int, where),
        n_cloud_servers=_get(parser, "scenario", "n_cloud_servers", int, where,
                             required=False, default=1),
        traffic=traffic,
        flood=flood,
        firewall_rules_path=os.path.normpath(os.path.join(base, fw_path)),
        mitigation_rules_path=os.path.normpath(os.path.join(base, mit_path)),
        detector_params=detector,
        confirmation_policy=policy,
        seed=seed,
    )
    try:
        config.validate()
    except ConfigurationError as exc:
        raise ConfigError("%s: %s" % (where, exc))
    return config


def save_config(config, path):
    """Serialize a ScenarioConfig back to the INI format (round-trips)."""
    parser = configparser.ConfigParser()
    parser["scenario"] = {
        "name": config.name,
        "n_devices": str(config.n_devices),
        "n_fog_nodes": str(config.n_fog_nodes),
        "n_cloud_servers": str(config.n_cloud_servers),
        "seed": str(config.seed),
        "firewall_rules": os.path.relpath(
            config.firewall_rules_path, os.path.dirname(os.path.abspath(path))),
        "mitigation_rules": os.path.relpath(
            config.mitigation_rules_path, os.path.dirname(os.path.abspath(path))),
    }
    parser["traffic"] = {
        "total_packets": str(config.traffic.total_packets),
        "attack_ratio": repr(config.traffic.attack_ratio),
        "attacker_devices": ",".join(
            str(d) for d in sorted(config.traffic.attacker_devices)),
        "benign_tcp": repr(config.traffic.benign_mix[Protocol.TCP]),
        "benign_udp": repr(config.traffic.benign_mix[Protocol.UDP]),
        "benign_icmp": repr(config.traffic.benign_mix[Protocol.ICMP]),
        "duration_s": repr(config.traffic.duration_s),
    }
    parser["flood"] = {
        "target_ip": config.flood.target_ip,
        "target_port": str(config.flood.target_port),
        "syn_rate": repr(config.flood.syn_rate),
        "start_s": repr(config.flood.start_s),
        "end_s": repr(config.flood.end_s),
        "spoof_sources": str(config.flood.spoof_sources).lower(),
    }
    default_det = DetectorParams()
    det_overrides = {
        key: getattr(config.detector_params, key)
        for key in sorted(_DETECTOR_KEYS)
        if getattr(config.detector_params, key) != getattr(default_det, key)
    }
    if det_overrides:
        parser["detector"] = {k: repr(v) for k, v in det_overrides.items()}
    parser["policy"] = {
        "min_analyzer_families":
            str(config.confirmation_policy.min_analyzer_families),
        "require_statistical_or_dpi":
            str(config.confirmation_policy.require_statistical_or_dpi).lower(),
    }
    with open(path, "w") as fh:
        parser.write(fh)
