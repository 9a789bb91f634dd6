"""End-to-end acceptance suite.

Each test prints an explicit PASS line with the measured numbers so a
plain pytest -s run doubles as an experiment summary.
"""

import random
import time

from oracle import oracle_evaluate

from fogshield.cloud import NOT_APPLICABLE
from fogshield.config import load_config, resolve_preset
from fogshield.fog import DetectorParams, behavioral_analyze, statistical_analyze
from fogshield.metrics import (
    ScalabilityInput, build_comparison_table, render_table_text,
    scalability_ratio,
)
from fogshield.model import Label, Protocol, TcpFlag, Verdict, make_packet
from fogshield.ruledsl import (
    DetectionFilter, Threshold, evaluate_trace, parse_rule, parse_ruleset,
)
from fogshield.runner import mask_volatile, report_to_json, run_scenario, \
    scenario_table_row

RULESET_TEXT = "\n".join([
    'drop tcp any any -> any any (flags: S; msg:"TCP SYN flood detected!"; '
    'sid:100001;)',
    'network activity.alert any any -> any any (threshold: type both, '
    'track by_dst, count 50, seconds 1; msg:"Abnormal response time '
    'detected!"; sid:100002;)',
    'drop tcp any any -> any any (flags: S; count 10; seconds: 1; '
    'threshold: type both, track by_dst, count 50, seconds 1; '
    'msg:"TCP SYN flood detected!"; sid:100008;)',
    'drop tcp any any -> any any (flags: SA; count 5; detection_filter: '
    'track by_dst; msg:"Drop TCP packets with a high number of half-open '
    'connections"; sid:100003;)',
])

PRESET_NAMES = ("scenario1", "scenario2", "scenario3")
REPORTED_DETECTION_PCT = {"scenario1": 99.86, "scenario2": 99.87,
                          "scenario3": 99.89}


def _check_filter_identities(report):
    filt = report["filter"]
    assert filt["forwarded"] + filt["detected_dos"] == filt["total"]
    assert filt["dropped"] + filt["alerted"] == filt["detected_dos"]
    per_device = filt["per_device"]
    assert sum(d["sent"] for d in per_device.values()) == filt["total"]
    assert sum(d["delivered"] for d in per_device.values()) == filt["forwarded"]


def test_criterion_1_device_layer_statistics():
    config = load_config(resolve_preset("scenario1-device-layer"))
    start = time.perf_counter()
    report = run_scenario(config, sample_resources=False)
    elapsed = time.perf_counter() - start
    filt = report["filter"]
    assert filt["total"] == 10000
    assert filt["forwarded"] == 9882
    assert filt["detected_dos"] == 118
    assert filt["dropped"] == 85
    assert filt["alerted"] == 33
    assert filt["packet_delivery_ratio"] == 0.9882
    _check_filter_identities(report)
    assert elapsed < 5.0
    print("PASS criterion 1: forwarded 9882/10000, dropped 85, alerted 33, "
          "PDR 98.82%% in %.2fs" % elapsed)


def _random_trace(rng, n):
    flag_choices = [(TcpFlag.SYN,), (TcpFlag.SYN, TcpFlag.ACK), (TcpFlag.ACK,),
                    (TcpFlag.PSH, TcpFlag.ACK), (TcpFlag.FIN, TcpFlag.ACK)]
    t = 0.0
    packets = []
    for i in range(n):
        t += rng.choice([0.0, 0.001, 0.01, 0.05, 0.4, 1.1])
        proto = rng.choice([Protocol.TCP, Protocol.TCP, Protocol.TCP,
                            Protocol.UDP, Protocol.ICMP])
        packets.append(make_packet(
            i, t, "10.0.0.%d" % rng.randrange(1, 6),
            "10.0.0.%d" % rng.randrange(1, 4),
            rng.randrange(1024, 65536) if proto is not Protocol.ICMP else 0,
            rng.choice([80, 443]) if proto is not Protocol.ICMP else 0,
            proto,
            rng.choice(flag_choices) if proto is Protocol.TCP else (),
            device_id=rng.randrange(3)))
    return packets


def test_criterion_2_rule_dsl_fidelity():
    start = time.perf_counter()
    rules = parse_ruleset(RULESET_TEXT)
    by_sid = {r.sid: r for r in rules}
    assert set(by_sid) == {100001, 100002, 100008, 100003}
    r1 = by_sid[100001]
    assert (r1.action, r1.protocol, r1.flags, r1.msg) == (
        Verdict.DROP, Protocol.TCP, {TcpFlag.SYN}, "TCP SYN flood detected!")
    r2 = by_sid[100002]
    assert r2.action is Verdict.ALERT
    assert r2.threshold == Threshold(count=50, seconds=1)
    r3 = by_sid[100008]
    assert (r3.count, r3.seconds) == (10, 1)
    assert r3.threshold == Threshold(count=50, seconds=1)
    r4 = by_sid[100003]
    assert r4.flags == {TcpFlag.SYN, TcpFlag.ACK}
    assert r4.detection_filter == DetectionFilter(count=5, window_s=1)

    rng = random.Random(0xACCE97)
    for i in range(1000):
        if i % 100 == 99:
            n = rng.randrange(400, 1001)
        elif i % 10 == 9:
            n = rng.randrange(150, 400)
        else:
            n = rng.randrange(0, 150)
        packets = _random_trace(rng, n)
        verdicts, actions = evaluate_trace(rules, packets)
        o_verdicts, o_actions = oracle_evaluate(rules, packets)
        assert verdicts == o_verdicts
        assert [(a.seq_no, a.sid, a.action, a.msg) for a in actions] == o_actions
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print("PASS criterion 2: 4 rules parsed exactly; 1000 random traces "
          "match the brute-force oracle in %.1fs" % elapsed)


def test_criterion_3_detection_quality(preset_runs):
    lines = []
    for name in PRESET_NAMES:
        det = preset_runs(name)["detection"]
        recall = det["detection_rate"]
        benign = det["false_positives"] + det["true_negatives"]
        fpr = det["false_positive_rate"]
        assert recall != NOT_APPLICABLE and recall >= 0.995
        assert fpr != NOT_APPLICABLE and fpr <= 0.005
        reported = REPORTED_DETECTION_PCT[name]
        within_band = abs(100.0 * recall - reported) <= 0.5
        lines.append("%s recall %.2f%% (reported %.2f%%, within +/-0.5pp: %s) "
                     "FPR %.4f%% over %d benign"
                     % (name, 100.0 * recall, reported, within_band,
                        100.0 * fpr, benign))
    print("PASS criterion 3: " + "; ".join(lines))


def test_criterion_4_mitigation_quality(preset_runs):
    lines = []
    for name in PRESET_NAMES:
        mit = preset_runs(name)["mitigation"]
        rate = mit["mitigation_rate"]
        assert rate != NOT_APPLICABLE
        assert rate >= 0.95
        lines.append("%s %.2f%% of %d confirmed"
                     % (name, 100.0 * rate, mit["confirmed_packets"]))
    print("PASS criterion 4: " + "; ".join(lines))


def test_criterion_5_scalability_ratios():
    detect = scalability_ratio(
        ScalabilityInput(rate_a=99.86, rate_b=99.89, n_a=10, n_b=3))
    assert round(detect, 4) == -0.0043
    assert round(abs(detect), 4) == 0.0043
    mitigate = scalability_ratio(
        ScalabilityInput(rate_a=96.32, rate_b=97.95, n_a=3, n_b=10))
    assert round(mitigate, 4) == 0.2329
    rng = random.Random(5151)
    for _ in range(1000):
        a, b = rng.uniform(0, 100), rng.uniform(0, 100)
        na, nb = rng.randrange(1, 500), rng.randrange(500, 1000)
        fwd = scalability_ratio(ScalabilityInput(a, b, na, nb))
        rev = scalability_ratio(ScalabilityInput(b, a, nb, na))
        assert abs(fwd - rev) <= 1e-9 * max(1.0, abs(fwd))
    print("PASS criterion 5: ratios 0.0043 and 0.2329 at 4dp; antisymmetry "
          "holds on 1000 random inputs")


def test_criterion_6_determinism(preset_runs):
    for name in PRESET_NAMES + ("scenario1-device-layer",):
        first = report_to_json(mask_volatile(preset_runs(name)))
        second = report_to_json(mask_volatile(preset_runs(name, rerun=1)))
        assert first == second
        assert first.encode() == second.encode()
    print("PASS criterion 6: masked JSON reports byte-identical across "
          "repeated runs of all 4 presets")


def _random_config(rng, data_dir):
    import dataclasses
    from fogshield.cloud import ConfirmationPolicy
    from fogshield.config import ScenarioConfig
    from fogshield.traffic import FloodSpec, TrafficConfig, device_ip
    import os
    n_devices = rng.randrange(1, 7)
    n_fog = rng.randrange(1, n_devices + 1)
    attack_ratio = rng.choice([0.0, 0.0, 0.01, 0.03, 0.05, 0.1])
    attackers = frozenset({n_devices - 1}) if attack_ratio > 0 else frozenset()
    traffic = TrafficConfig(
        n_devices=n_devices,
        total_packets=rng.randrange(30, 300),
        attack_ratio=attack_ratio,
        attacker_devices=attackers,
        duration_s=rng.choice([30.0, 45.0, 60.0]),
        seed=rng.randrange(1 << 30))
    flood = FloodSpec(
        target_ip=device_ip(0), target_port=80,
        syn_rate=rng.choice([10.0, 15.0, 20.0]),
        start_s=2.0, end_s=12.0,
        spoof_sources=rng.random() < 0.5)
    return ScenarioConfig(
        name="fuzz", n_devices=n_devices, n_fog_nodes=n_fog,
        n_cloud_servers=1, traffic=traffic, flood=flood,
        firewall_rules_path=os.path.join(data_dir, "device.rules"),
        mitigation_rules_path=os.path.join(data_dir, "mitigation.rules"),
        confirmation_policy=ConfirmationPolicy(
            min_analyzer_families=rng.randrange(1, 4)),
        seed=traffic.seed)


def test_criterion_7_conservation_suite():
    from fogshield.config import preset_dir
    rng = random.Random(0xC0D5)
    data_dir = preset_dir()
    for i in range(500):
        config = _random_config(rng, data_dir)
        report = run_scenario(config, sample_resources=False)
        _check_filter_identities(report)
        det = report["detection"]
        confusion_total = (det["true_positives"] + det["false_positives"]
                           + det["true_negatives"] + det["false_negatives"])
        assert confusion_total == report["filter"]["forwarded"]
        mit = report["mitigation"]
        assert 0 <= mit["mitigated_packets"] <= mit["confirmed_packets"]
        assert mit["confirmed_packets"] <= report["filter"]["forwarded"]
        assert report["delivered_final"] == (
            report["filter"]["forwarded"] - mit["mitigated_packets"])
        flagged_total = len(set().union(
            *[set(r["flagged_packets"]) for r in report["fog_reports"]], set()))
        assert mit["confirmed_packets"] + mit["released_packets"] == flagged_total
        if mit["confirmed_packets"] == 0:
            assert mit["mitigation_rate"] == NOT_APPLICABLE
    print("PASS criterion 7: conservation identities hold on 500 randomized "
          "configs")


def test_criterion_8_timing_sanity(preset_runs):
    report = preset_runs("scenario3", serial=True)
    detect_wall = report["detection"]["detection_wall_time_s"]
    assert detect_wall < 2.0
    rows = build_comparison_table([scenario_table_row(report)])
    text = render_table_text(rows)
    assert "0.246" in text and "99.56" in text and "86.66" in text
    assert "scenario3" in text
    print("PASS criterion 8: scenario3 serial fog analysis of 10000 packets "
          "in %.3fs; reference rows rendered:\n%s" % (detect_wall, text))


def test_criterion_9_threshold_boundaries():
    params = DetectorParams()

    def syn_burst(n):
        # spread over two destinations so only the rate check is in play
        return [make_packet(i, i * 0.01, "10.0.0.9",
                            "10.0.0.%d" % (1 + i % 2), 20000 + i, 80,
                            Protocol.TCP, (TcpFlag.SYN,)) for i in range(n)]
    assert statistical_analyze(syn_burst(10), params) == []
    eleven = statistical_analyze(syn_burst(11), params)
    assert {ev.reason for ev in eleven} == {"SYN_RATE"}

    rule2 = parse_rule(
        'network activity.alert any any -> any any (threshold: type both, '
        'track by_dst, count 50, seconds 1; msg:"Abnormal response time '
        'detected!"; sid:100002;)')

    def acks(n):
        return [make_packet(i, i * 0.01, "10.0.0.9", "10.0.0.1", 20000 + i,
                            80, Protocol.TCP, (TcpFlag.ACK,))
                for i in range(n)]
    assert evaluate_trace([rule2], acks(49))[1] == []
    fifty = evaluate_trace([rule2], acks(50))[1]
    assert len(fifty) == 1 and fifty[0].seq_no == 49

    def half_open(n):
        return [make_packet(i, i * 0.05, "10.0.0.9", "10.0.0.1", 50000 + i,
                            80, Protocol.TCP, (TcpFlag.SYN,))
                for i in range(n)]
    assert behavioral_analyze(half_open(5), params) == []
    six = behavioral_analyze(half_open(6), params)
    assert {ev.reason for ev in six} == {"HALF_OPEN"}
    print("PASS criterion 9: boundaries fire at 11 SYNs (not 10), the 50th "
          "event (not 49th), and 6 half-open connections (not 5)")
