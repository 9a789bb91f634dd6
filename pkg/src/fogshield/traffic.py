"""Deterministic labeled traffic generation.

Benign background traffic (short TCP sessions with complete three-way
handshakes, UDP bursts, ICMP echo pairs) is mixed with an injected TCP
SYN flood.  Generation is a pure function of (TrafficConfig, FloodSpec):
the PRNG is Python's Mersenne Twister (`random.Random(seed)`), which is
stable across platforms and versions, so traces are byte-identical
everywhere.
"""

import random
from dataclasses import dataclass, field

from .model import (
    ConfigurationError, Label, Protocol, TcpFlag, make_packet,
)

# Spoofed source addresses used when spoof_sources is on.  The device
# firewall's shipped ruleset matches these: the primary address is dropped,
# the secondary is alerted.  The split is calibrated so roughly 72% of
# attack packets carry the primary address (85/33 on the default trace).
PRIMARY_SPOOFED_SRC = "203.0.113.66"
SECONDARY_SPOOFED_SRC = "198.51.100.99"
PRIMARY_SPOOF_FRACTION = 0.72

# Fraction of attack SYNs carrying a repetitive junk payload, so payload
# inspection has something to find in attack traffic.
JUNK_PAYLOAD_FRACTION = 0.10
JUNK_PAYLOAD = b"\x41" * 600

# Simulated SYN -> SYN-ACK latency: 10 ms baseline, inflated for
# connections to the flood target while the flood is active.
BASE_RESPONSE_LATENCY_S = 0.010
FLOOD_RESPONSE_INFLATION = 2.5

# Benign destination services outside the device set.
EXTERNAL_SERVERS = ["192.0.2.10", "192.0.2.20", "192.0.2.30", "192.0.2.40"]
TCP_SERVICE_PORTS = [80, 443, 8080, 22, 25]
UDP_SERVICE_PORTS = [53, 123, 5353]


def device_ip(device_id):
    return "10.0.0.%d" % (device_id + 1)


def device_mac(device_id):
    return "02:00:00:00:00:%02x" % (device_id + 1)


@dataclass(frozen=True)
class TrafficConfig:
    n_devices: int
    total_packets: int
    attack_ratio: float
    attacker_devices: frozenset
    benign_mix: dict = field(default_factory=lambda: {
        Protocol.TCP: 0.7, Protocol.UDP: 0.2, Protocol.ICMP: 0.1})
    duration_s: float = 120.0
    seed: int = 0

    def validate(self):
        if self.n_devices < 1:
            raise ConfigurationError("n_devices must be >= 1")
        if self.total_packets < 0:
            raise ConfigurationError("total_packets must be >= 0")
        if not 0.0 <= self.attack_ratio <= 1.0:
            raise ConfigurationError("attack_ratio must be in [0, 1]")
        if self.attack_ratio > 0 and not self.attacker_devices:
            raise ConfigurationError(
                "attack_ratio > 0 requires at least one attacker device")
        if not self.attacker_devices <= set(range(self.n_devices)):
            raise ConfigurationError("attacker_devices outside device range")
        if abs(sum(self.benign_mix.values()) - 1.0) > 1e-9:
            raise ConfigurationError("benign_mix must sum to 1")
        if self.duration_s <= 0:
            raise ConfigurationError("duration_s must be positive")


@dataclass(frozen=True)
class FloodSpec:
    target_ip: str
    target_port: int = 80
    syn_rate: float = 12.0
    start_s: float = 2.0
    end_s: float = 12.0
    spoof_sources: bool = False

    def validate(self, duration_s):
        if self.syn_rate <= 0:
            raise ConfigurationError("syn_rate must be positive")
        if not self.start_s < self.end_s <= duration_s:
            raise ConfigurationError(
                "flood interval must satisfy start < end <= duration")


def _attack_events(config, flood, n_attack, rng):
    """SYN flood events: each attacker fires at syn_rate packets/second."""
    attackers = sorted(config.attacker_devices)
    step = 1.0 / (flood.syn_rate * len(attackers))
    last_t = flood.start_s + (n_attack - 1) * step if n_attack else flood.start_s
    if last_t >= flood.end_s:
        raise ConfigurationError(
            "flood window too short: %d SYNs at %g/s per attacker need %.3fs"
            % (n_attack, flood.syn_rate, n_attack * step))
    n_primary = round(n_attack * PRIMARY_SPOOF_FRACTION)
    events = []
    for i in range(n_attack):
        dev = attackers[i % len(attackers)]
        t = flood.start_s + i * step
        if flood.spoof_sources:
            src = PRIMARY_SPOOFED_SRC if i < n_primary else SECONDARY_SPOOFED_SRC
            mac = "02:66:%02x:%02x:%02x:%02x" % tuple(
                rng.randrange(256) for _ in range(4))
        else:
            src = device_ip(dev)
            mac = device_mac(dev)
        payload = JUNK_PAYLOAD if (i % 10) == 3 else b""
        events.append(dict(
            timestamp=t, src_ip=src, dst_ip=flood.target_ip,
            src_port=rng.randrange(1024, 65536), dst_port=flood.target_port,
            protocol=Protocol.TCP, tcp_flags={TcpFlag.SYN}, payload=payload,
            src_mac=mac, device_id=dev, label=Label.ATTACK,
        ))
    return events


def _varied_payload(rng, length):
    # Cycles through several byte values so no single byte dominates.
    base = rng.randrange(256)
    return bytes((base + i) % 256 for i in range(length))


def _benign_tcp_session(config, flood, src_dev, rng, events):
    dst_choices = ([device_ip(d) for d in range(config.n_devices) if d != src_dev]
                   + EXTERNAL_SERVERS)
    dst = rng.choice(dst_choices)
    dport = rng.choice(TCP_SERVICE_PORTS)
    sport = rng.randrange(1024, 65536)
    t0 = rng.uniform(0.0, config.duration_s - 0.2)
    latency = BASE_RESPONSE_LATENCY_S
    if (flood is not None and dst == flood.target_ip
            and flood.start_s <= t0 < flood.end_s):
        latency *= FLOOD_RESPONSE_INFLATION
    src = device_ip(src_dev)
    mac = device_mac(src_dev)

    def emit(t, s_ip, d_ip, s_p, d_p, flags, payload, dev, dmac):
        events.append(dict(
            timestamp=t, src_ip=s_ip, dst_ip=d_ip, src_port=s_p, dst_port=d_p,
            protocol=Protocol.TCP, tcp_flags=flags, payload=payload,
            src_mac=dmac, device_id=dev, label=Label.BENIGN))

    # SYN from initiator
    emit(t0, src, dst, sport, dport, {TcpFlag.SYN}, b"", src_dev, mac)
    # SYN-ACK response: only present in the trace when the responder is a
    # simulated device (external servers are off-net, only device-originated
    # traffic is captured).
    responder = None
    for d in range(config.n_devices):
        if device_ip(d) == dst:
            responder = d
            break
    if responder is not None:
        emit(t0 + latency, dst, src, dport, sport, {TcpFlag.SYN, TcpFlag.ACK},
             b"", responder, device_mac(responder))
    # Handshake-completing ACK from initiator.
    t_ack = t0 + latency + 0.001
    emit(t_ack, src, dst, sport, dport, {TcpFlag.ACK}, b"", src_dev, mac)
    # 0-6 data segments, then FIN about half the time: sessions run 3-10
    # packets total.
    n_data = rng.randrange(0, 7)
    t = t_ack
    for _ in range(n_data):
        t += rng.uniform(0.001, 0.004)
        payload = _varied_payload(rng, rng.randrange(60, 1200))
        emit(t, src, dst, sport, dport, {TcpFlag.PSH, TcpFlag.ACK}, payload,
             src_dev, mac)
    if rng.random() < 0.5:
        t += rng.uniform(0.001, 0.004)
        emit(t, src, dst, sport, dport, {TcpFlag.FIN, TcpFlag.ACK}, b"",
             src_dev, mac)


def _benign_udp_session(config, src_dev, rng, events):
    dst_choices = ([device_ip(d) for d in range(config.n_devices) if d != src_dev]
                   + EXTERNAL_SERVERS)
    dst = rng.choice(dst_choices)
    dport = rng.choice(UDP_SERVICE_PORTS)
    sport = rng.randrange(1024, 65536)
    t = rng.uniform(0.0, config.duration_s - 0.05)
    for _ in range(rng.randrange(1, 5)):
        events.append(dict(
            timestamp=t, src_ip=device_ip(src_dev), dst_ip=dst,
            src_port=sport, dst_port=dport, protocol=Protocol.UDP,
            tcp_flags=set(), payload=_varied_payload(rng, rng.randrange(20, 300)),
            src_mac=device_mac(src_dev), device_id=src_dev, label=Label.BENIGN))
        t += rng.uniform(0.001, 0.01)


def _benign_icmp_session(config, src_dev, rng, events):
    others = [d for d in range(config.n_devices) if d != src_dev]
    t = rng.uniform(0.0, config.duration_s - 0.05)
    payload = _varied_payload(rng, 56)
    events.append(dict(
        timestamp=t, src_ip=device_ip(src_dev),
        dst_ip=rng.choice([device_ip(d) for d in others] + EXTERNAL_SERVERS),
        src_port=0, dst_port=0, protocol=Protocol.ICMP, tcp_flags=set(),
        payload=payload, src_mac=device_mac(src_dev), device_id=src_dev,
        label=Label.BENIGN))


def generate_trace(config, flood=None):
    """Generate a deterministic labeled trace.

    Exactly round(attack_ratio * total_packets) packets are ATTACK-labeled
    SYN-only TCP packets aimed at the flood target; the remainder is benign
    background traffic following benign_mix.
    """
    config.validate()
    n_attack = round(config.attack_ratio * config.total_packets)
    if n_attack > 0:
        if flood is None:
            raise ConfigurationError("attack_ratio > 0 requires a FloodSpec")
        flood.validate(config.duration_s)
    rng = random.Random(config.seed)

    events = []
    if n_attack > 0:
        events.extend(_attack_events(config, flood, n_attack, rng))

    n_benign = config.total_packets - n_attack
    benign_devices = sorted(set(range(config.n_devices)) - config.attacker_devices)
    if not benign_devices:
        # All devices attack: let them carry background traffic too.
        benign_devices = list(range(config.n_devices))
    benign_events = []
    protos = list(config.benign_mix.keys())
    weights = [config.benign_mix[p] for p in protos]
    while len(benign_events) < n_benign:
        src_dev = rng.choice(benign_devices)
        proto = rng.choices(protos, weights=weights, k=1)[0]
        if proto is Protocol.TCP:
            _benign_tcp_session(config, flood, src_dev, rng, benign_events)
        elif proto is Protocol.UDP:
            _benign_udp_session(config, src_dev, rng, benign_events)
        else:
            _benign_icmp_session(config, src_dev, rng, benign_events)
    # Trim the overshoot in generation order so only the final session is
    # cut, and only from its tail (a dropped ACK can leave one half-open
    # benign connection, never an ACK without its SYN).
    del benign_events[n_benign:]
    events.extend(benign_events)

    events.sort(key=lambda e: e["timestamp"])
    return [make_packet(seq_no=i, **ev) for i, ev in enumerate(events)]


def trace_label_stats(trace):
    """Single-pass label statistics over a trace."""
    benign = 0
    attack = 0
    per_device = {}
    for pkt in trace:
        if pkt.label is Label.ATTACK:
            attack += 1
        else:
            benign += 1
        per_device[pkt.device_id] = per_device.get(pkt.device_id, 0) + 1
    return {
        "benign_count": benign,
        "attack_count": attack,
        "per_device_counts": per_device,
    }
