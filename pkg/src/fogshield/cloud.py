"""Stage 3: cloud consolidation, correlation-based confirmation, mitigation.

Fog evidence is correlated per device by counting distinct analyzer
families; devices below the confirmation policy are released and their
flagged packets resume normal delivery.  Confirmed traffic is run through
the mitigation ruleset; any device whose packets trigger a drop is
blocked outright, and all of its later confirmed packets count as
mitigated.
"""

import time
from dataclasses import dataclass, field

from .model import Verdict
from .ruledsl import evaluate_trace

NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass
class ConsolidatedView:
    families_by_device: dict = field(default_factory=dict)   # device -> set(Analyzer)
    flagged_packets: set = field(default_factory=set)
    evidence_by_device: dict = field(default_factory=dict)   # device -> [Evidence]
    seqs_by_device: dict = field(default_factory=dict)       # device -> set(seq_no)

    def correlation_count(self, device_id):
        return len(self.families_by_device.get(device_id, ()))


def consolidate(reports):
    """Merge FogReports from distinct fog nodes into one correlation view."""
    seen_nodes = set()
    view = ConsolidatedView()
    for report in reports:
        if report.fog_node_id in seen_nodes:
            raise ValueError("duplicate fog node id %d" % report.fog_node_id)
        seen_nodes.add(report.fog_node_id)
        for ev in report.evidence:
            view.families_by_device.setdefault(ev.device_id, set()).add(ev.analyzer)
            view.evidence_by_device.setdefault(ev.device_id, []).append(ev)
            view.seqs_by_device.setdefault(ev.device_id, set()).update(ev.seq_nos)
            view.flagged_packets.update(ev.seq_nos)
    return view


@dataclass(frozen=True)
class ConfirmationPolicy:
    min_analyzer_families: int = 2
    require_statistical_or_dpi: bool = False

    def __post_init__(self):
        if not 1 <= self.min_analyzer_families <= 4:
            raise ValueError("min_analyzer_families must be in [1, 4]")


def confirm_ddos(view, policy):
    """Partition flagged traffic into confirmed and released.

    Returns (confirmed_devices, confirmed_seq_nos, released_seq_nos).
    """
    from .fog import Analyzer

    confirmed_devices = set()
    for dev, families in view.families_by_device.items():
        if len(families) < policy.min_analyzer_families:
            continue
        if (policy.require_statistical_or_dpi
                and Analyzer.STATISTICAL not in families
                and Analyzer.DPI not in families):
            continue
        confirmed_devices.add(dev)
    confirmed = set()
    for dev in confirmed_devices:
        confirmed.update(view.seqs_by_device.get(dev, ()))
    released = view.flagged_packets - confirmed
    return confirmed_devices, confirmed, released


@dataclass
class MitigationResult:
    confirmed_devices: set = field(default_factory=set)
    blocked_devices: set = field(default_factory=set)
    confirmed_packets: int = 0
    mitigated_packets: int = 0
    mitigation_wall_time_s: float = 0.0
    mitigation_rate: object = NOT_APPLICABLE   # fraction, or NOT_APPLICABLE
    false_resume_count: int = 0
    actions: list = field(default_factory=list)
    mitigated_seq_nos: set = field(default_factory=set)

    def to_dict(self):
        rate = self.mitigation_rate
        return {
            "confirmed_devices": sorted(self.confirmed_devices),
            "blocked_devices": sorted(self.blocked_devices),
            "confirmed_packets": self.confirmed_packets,
            "mitigated_packets": self.mitigated_packets,
            "mitigation_wall_time_s": self.mitigation_wall_time_s,
            "mitigation_rate": rate,
            "false_resume_count": self.false_resume_count,
        }


def apply_mitigation(confirmed_packets, ruleset, confirmed_devices=(),
                     false_resume_count=0):
    """Run the mitigation ruleset over cloud-confirmed packets.

    `confirmed_packets` must be timestamp-ordered.  A device is blocked at
    its first dropped packet; every later confirmed packet from a blocked
    device is mitigated even if no rule drops it.
    """
    start = time.perf_counter()
    result = MitigationResult(
        confirmed_devices=set(confirmed_devices),
        confirmed_packets=len(confirmed_packets),
        false_resume_count=false_resume_count,
    )
    if not confirmed_packets:
        result.mitigation_wall_time_s = time.perf_counter() - start
        return result

    verdicts, actions = evaluate_trace(ruleset, confirmed_packets)
    result.actions = actions
    blocked = set()
    mitigated = 0
    for pkt, verdict in zip(confirmed_packets, verdicts):
        if verdict is Verdict.DROP:
            blocked.add(pkt.device_id)
            mitigated += 1
            result.mitigated_seq_nos.add(pkt.seq_no)
        elif pkt.device_id in blocked:
            mitigated += 1
            result.mitigated_seq_nos.add(pkt.seq_no)
    result.blocked_devices = blocked
    result.mitigated_packets = mitigated
    result.mitigation_rate = mitigated / len(confirmed_packets)
    result.mitigation_wall_time_s = time.perf_counter() - start
    return result
