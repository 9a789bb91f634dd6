import random

import pytest

from fogshield.model import (
    ConfigurationError, Label, Protocol, TcpFlag, packet_to_line, validate_trace,
)
from fogshield.traffic import (
    FloodSpec, TrafficConfig, device_ip, generate_trace, trace_label_stats,
)


def _config(**overrides):
    base = dict(n_devices=3, total_packets=2000, attack_ratio=0.0118,
                attacker_devices=frozenset({2}), duration_s=60.0, seed=7)
    base.update(overrides)
    return TrafficConfig(**base)


def _flood(**overrides):
    base = dict(target_ip=device_ip(0), target_port=80, syn_rate=12.0,
                start_s=2.0, end_s=12.0, spoof_sources=False)
    base.update(overrides)
    return FloodSpec(**base)


def test_exact_attack_count_default_ratio():
    config = _config(total_packets=10000, duration_s=120.0)
    trace = generate_trace(config, _flood())
    stats = trace_label_stats(trace)
    assert stats["attack_count"] == 118
    assert stats["benign_count"] == 9882


def test_zero_attack_ratio_ignores_flood():
    config = _config(attack_ratio=0.0, attacker_devices=frozenset())
    trace = generate_trace(config, _flood())
    assert all(p.label is Label.BENIGN for p in trace)
    assert len(trace) == 2000


def test_determinism_same_seed():
    config = _config()
    a = generate_trace(config, _flood())
    b = generate_trace(config, _flood())
    assert [packet_to_line(p) for p in a] == [packet_to_line(p) for p in b]


def test_different_seed_differs():
    a = generate_trace(_config(seed=1), _flood())
    b = generate_trace(_config(seed=2), _flood())
    assert [packet_to_line(p) for p in a] != [packet_to_line(p) for p in b]


def test_trace_well_formed():
    config = _config()
    trace = generate_trace(config, _flood())
    validate_trace(trace)
    assert len(trace) == config.total_packets
    assert all(0 <= p.timestamp <= config.duration_s for p in trace)


def test_attack_packets_are_syn_only_to_target():
    flood = _flood()
    trace = generate_trace(_config(), flood)
    attacks = [p for p in trace if p.label is Label.ATTACK]
    assert attacks
    for pkt in attacks:
        assert pkt.protocol is Protocol.TCP
        assert pkt.tcp_flags == {TcpFlag.SYN}
        assert pkt.dst_ip == flood.target_ip
        assert pkt.dst_port == flood.target_port
        assert pkt.device_id == 2


def test_benign_handshake_order():
    trace = generate_trace(_config(attack_ratio=0.0,
                                   attacker_devices=frozenset()), None)
    syn_seen = set()
    for pkt in trace:
        if pkt.protocol is not Protocol.TCP:
            continue
        key = (pkt.src_ip, pkt.src_port, pkt.dst_ip, pkt.dst_port)
        if pkt.tcp_flags == {TcpFlag.SYN}:
            syn_seen.add(key)
        elif pkt.tcp_flags == {TcpFlag.ACK}:
            assert key in syn_seen, "handshake ACK before its SYN"


def test_attack_ratio_without_attackers_rejected():
    with pytest.raises(ConfigurationError):
        _config(attacker_devices=frozenset()).validate()


def test_benign_mix_must_sum_to_one():
    with pytest.raises(ConfigurationError):
        _config(benign_mix={Protocol.TCP: 0.5, Protocol.UDP: 0.2,
                            Protocol.ICMP: 0.1}).validate()


def test_flood_window_validation():
    with pytest.raises(ConfigurationError):
        _flood(start_s=5.0, end_s=5.0).validate(60.0)
    with pytest.raises(ConfigurationError):
        _flood(end_s=80.0).validate(60.0)


def test_flood_window_too_short_for_count():
    config = _config(total_packets=10000, attack_ratio=0.5)
    with pytest.raises(ConfigurationError, match="too short"):
        generate_trace(config, _flood())


def test_label_stats_empty():
    assert trace_label_stats([]) == {
        "benign_count": 0, "attack_count": 0, "per_device_counts": {}}


def test_label_stats_matches_brute_force_recount():
    rng = random.Random(99)
    for _ in range(20):
        config = _config(total_packets=rng.randrange(0, 400),
                         attack_ratio=rng.choice([0.0, 0.05, 0.1]),
                         seed=rng.randrange(10000))
        trace = generate_trace(config, _flood())
        stats = trace_label_stats(trace)
        # naive single-pass recount
        benign = sum(1 for p in trace if p.label is Label.BENIGN)
        attack = sum(1 for p in trace if p.label is Label.ATTACK)
        per_dev = {}
        for p in trace:
            per_dev[p.device_id] = per_dev.get(p.device_id, 0) + 1
        assert stats == {"benign_count": benign, "attack_count": attack,
                         "per_device_counts": per_dev}
        assert benign + attack == len(trace)
