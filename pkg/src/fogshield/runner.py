"""Scenario orchestration: generate -> firewall -> fog -> cloud -> metrics.

Reports are plain dicts with a versioned schema; JSON output is
deterministic (sorted keys, native float repr) so two runs of the same
config differ only in wall-time and resource fields.
"""

import concurrent.futures
import copy
import json
import os
import time

from . import firewall as fw
from . import ruledsl
from .cloud import (NOT_APPLICABLE, apply_mitigation, confirm_ddos, consolidate)
from .config import ScenarioConfig
from .fog import fog_node_analyze
from .metrics import (
    ResourceMonitor, ScalabilityInput, build_comparison_table, detection_metrics,
    render_table_csv, render_table_text, samples_to_csv, scalability_ratio,
)
from .model import assign_devices_to_fog
from .traffic import generate_trace

SCHEMA_VERSION = 1

# Report fields that legitimately differ between identical runs; masked
# before byte-comparing reports.
VOLATILE_KEY_SUFFIXES = ("_wall_time_s",)
VOLATILE_KEYS = ("resource_samples", "resource_warning")


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__("[stage: %s] %s" % (stage, cause))
        self.stage = stage
        self.cause = cause


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_scenario(config: ScenarioConfig, serial=True, resource_probe=None,
                 sample_resources=True):
    """Execute the full pipeline for one scenario and build its report."""
    config.validate()
    fw_rules = _stage("load-firewall-rules",
                      fw.load_firewall_ruleset, config.firewall_rules_path)
    mit_rules = _stage("load-mitigation-rules",
                       ruledsl.load_ruleset, config.mitigation_rules_path)

    trace = _stage("generate", generate_trace, config.traffic, config.flood)
    outcome = _stage("firewall", fw.filter_trace, fw_rules, trace)

    assignment = assign_devices_to_fog(config.n_devices, config.n_fog_nodes)
    slices = {node: [] for node in range(config.n_fog_nodes)}
    for pkt in outcome.forwarded_stream:
        slices[assignment[pkt.device_id]].append(pkt)

    monitor = ResourceMonitor(probe=resource_probe) if sample_resources else None
    if monitor is not None:
        monitor.__enter__()
    try:
        if serial:
            reports = [_stage("fog", fog_node_analyze, node, slices[node],
                              config.detector_params)
                       for node in range(config.n_fog_nodes)]
        else:
            with concurrent.futures.ThreadPoolExecutor() as pool:
                futures = {
                    node: pool.submit(fog_node_analyze, node, slices[node],
                                      config.detector_params)
                    for node in range(config.n_fog_nodes)
                }
                # Merge deterministically by fog node id.
                reports = [_stage("fog", futures[node].result)
                           for node in range(config.n_fog_nodes)]

        t_cloud = time.perf_counter()
        view = _stage("consolidate", consolidate, reports)
        confirmed_devices, confirmed_seqs, released_seqs = _stage(
            "confirm", confirm_ddos, view, config.confirmation_policy)
        confirmed_packets = [p for p in outcome.forwarded_stream
                             if p.seq_no in confirmed_seqs]
        mitigation = _stage(
            "mitigate", apply_mitigation, confirmed_packets, mit_rules,
            confirmed_devices=confirmed_devices,
            false_resume_count=len(released_seqs))
        cloud_wall = time.perf_counter() - t_cloud
    finally:
        if monitor is not None:
            monitor.__exit__(None, None, None)

    fog_times = [r.analysis_wall_time_s for r in reports]
    detection_wall = sum(fog_times) if serial else max(fog_times, default=0.0)
    flagged = set()
    for r in reports:
        flagged.update(r.flagged_packets)
    detection = _stage("metrics", detection_metrics,
                       flagged, outcome.forwarded_stream, detection_wall)

    delivered_final = outcome.forwarded - mitigation.mitigated_packets
    pdr = (fw.packet_delivery_ratio(outcome) if outcome.total else NOT_APPLICABLE)

    samples = monitor.samples if monitor is not None else []
    warning = monitor.warning if monitor is not None else None
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "fog_execution_mode": "serial" if serial else "parallel",
        "filter": {
            **outcome.to_dict(),
            "packet_delivery_ratio": pdr,
            "per_device_pdr": {str(d): r for d, r in
                               fw.per_device_pdr(outcome).items()},
        },
        "fog_reports": [r.to_dict() for r in reports],
        "detection": detection.to_dict(),
        "mitigation": {
            **mitigation.to_dict(),
            "mitigation_wall_time_s": cloud_wall,
            "released_packets": len(released_seqs),
        },
        "mitigation_actions": [a.to_dict() for a in mitigation.actions],
        "delivered_final": delivered_final,
        "resource_samples": [
            {"t": s.wall_timestamp_s, "cpu": s.cpu_percent, "mem": s.memory_percent}
            for s in samples],
        "resource_warning": warning,
    }
    return report


def report_to_json(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def mask_volatile(report):
    """Return a copy with wall-time and resource fields nulled, for
    comparing reports across runs."""
    masked = copy.deepcopy(report)

    def walk(obj):
        if isinstance(obj, dict):
            for key in list(obj):
                if key in VOLATILE_KEYS or key.endswith(VOLATILE_KEY_SUFFIXES):
                    obj[key] = None
                else:
                    walk(obj[key])
        elif isinstance(obj, list):
            for item in obj:
                walk(item)

    walk(masked)
    return masked


def _rate_pct(value):
    if value == NOT_APPLICABLE or value is None:
        return None
    return 100.0 * value


def scenario_table_row(report):
    samples = report.get("resource_samples") or []
    cpu = max((s["cpu"] for s in samples), default=None)
    mem = max((s["mem"] for s in samples), default=None)
    return {
        "name": report["config"]["name"],
        "detection_time_s": report["detection"]["detection_wall_time_s"],
        "detection_rate_pct": _rate_pct(report["detection"]["detection_rate"]),
        "mitigation_time_s": report["mitigation"]["mitigation_wall_time_s"],
        "mitigation_rate_pct": _rate_pct(report["mitigation"]["mitigation_rate"]),
        "cpu_pct": cpu,
        "memory_pct": mem,
        "n_devices": report["config"]["n_devices"],
        "reference": False,
    }


def compare_runs(reports):
    """Comparison table plus scalability ratios between the smallest and
    largest scenario by device count."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    rows = [scenario_table_row(r) for r in reports]
    by_devices = sorted(rows, key=lambda r: r["n_devices"])
    small, large = by_devices[0], by_devices[-1]
    if small["n_devices"] == large["n_devices"]:
        raise ZeroDivisionError(
            "all reports share n_devices = %d; scalability ratio undefined"
            % small["n_devices"])
    ratios = {}
    for kind in ("detection_rate_pct", "mitigation_rate_pct"):
        if small[kind] is None or large[kind] is None:
            ratios[kind] = None
            continue
        ratios[kind] = round(scalability_ratio(ScalabilityInput(
            rate_a=small[kind], rate_b=large[kind],
            n_a=small["n_devices"], n_b=large["n_devices"])), 4)
    return {
        "table": build_comparison_table(rows),
        "scalability": {
            "pair": [small["name"], large["name"]],
            "detection_rate_pct_per_device": ratios["detection_rate_pct"],
            "mitigation_rate_pct_per_device": ratios["mitigation_rate_pct"],
        },
    }


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def emit_report(report, out_dir, fmt="json"):
    """Persist a scenario report; returns the list of files written.

    json: canonical report.  csv: flat metric row, per-device PDR,
    packet-statistics and resource-timeline plot data.  text: rendered
    comparison-style table for this single run.
    """
    if fmt not in ("json", "csv", "text"):
        raise ValueError("unknown format %r" % fmt)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def out(name, text):
        path = os.path.join(out_dir, name)
        _write(path, text)
        written.append(path)

    if fmt == "json":
        out("report.json", report_to_json(report))
    elif fmt == "csv":
        rows = build_comparison_table([scenario_table_row(report)],
                                      include_reference=True)
        out("metrics.csv", render_table_csv(rows))
        filt = report["filter"]
        out("packet_stats.csv",
            "category,count\n"
            "forwarded,%d\ndetected_dos,%d\ndropped,%d\nalerted,%d\n"
            % (filt["forwarded"], filt["detected_dos"], filt["dropped"],
               filt["alerted"]))
        pdr_lines = ["device,pdr"]
        pdr_lines += ["%s,%.4f" % (d, r)
                      for d, r in sorted(filt["per_device_pdr"].items(),
                                         key=lambda kv: int(kv[0]))]
        out("per_device_pdr.csv", "\n".join(pdr_lines) + "\n")
        from .metrics import ResourceSample
        samples = [ResourceSample(s["t"], s["cpu"], s["mem"])
                   for s in report.get("resource_samples", [])]
        out("resources.csv", samples_to_csv(samples))
    else:
        rows = build_comparison_table([scenario_table_row(report)],
                                      include_reference=True)
        out("report.txt", render_table_text(rows))

    blocked = report["mitigation"]["blocked_devices"]
    out("blocklist.txt", "".join("%d\n" % d for d in blocked))
    out("mitigation_actions.ndjson",
        "".join(json.dumps(a, sort_keys=True) + "\n"
                for a in report.get("mitigation_actions", [])))
    return written
