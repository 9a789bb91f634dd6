"""Stage 2: per-fog-node DDoS analysis.

Four analyzer families run over the firewall-forwarded packets of one fog
node's devices: statistical, specification-based (TCP state machine),
behavioral, and deep packet inspection.  All analyzers work on tumbling
1-second windows keyed by simulated timestamps and compare with strict
`>` at every threshold boundary.  None of them reads ground-truth labels.
"""

import enum
import math
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .model import Protocol, TcpFlag


class Analyzer(enum.Enum):
    STATISTICAL = "STATISTICAL"
    SPECIFICATION = "SPECIFICATION"
    BEHAVIORAL = "BEHAVIORAL"
    DPI = "DPI"


# Closed reason vocabulary per analyzer family.
STATISTICAL_REASONS = ("SYN_RATE", "SIZE_DEVIATION", "DST_CONCENTRATION")
SPECIFICATION_REASONS = ("SYN_ON_ESTABLISHED", "ACK_WITHOUT_SYN", "SYN_FIN",
                         "CONN_RATE")
BEHAVIORAL_REASONS = ("RESPONSE_TIME", "FLOW_SPIKE", "MAC_NOVELTY", "HALF_OPEN")
DPI_REASONS = ("SYN_PAYLOAD", "ILLEGAL_FLAGS", "SYN_ACK_RATIO",
               "REPETITIVE_PAYLOAD", "OVERSIZED_PAYLOAD")


@dataclass(frozen=True)
class DetectorParams:
    window_s: float = 1.0
    syn_rate_threshold: int = 10
    syn_fraction_threshold: float = 0.5
    conn_init_threshold: int = 20
    response_time_factor: float = 3.0
    flow_spike_threshold: int = 50
    half_open_threshold: int = 5
    mac_novelty_threshold: int = 3
    payload_repeat_fraction: float = 0.9
    max_payload_bytes: int = 1400
    # Minimum window activity before destination-concentration and
    # SYN:ACK-ratio checks apply; keeps near-empty windows from flagging.
    min_window_packets: int = 10

    def validate(self):
        for name in ("window_s", "syn_rate_threshold", "syn_fraction_threshold",
                     "conn_init_threshold", "response_time_factor",
                     "flow_spike_threshold", "half_open_threshold",
                     "mac_novelty_threshold", "payload_repeat_fraction",
                     "max_payload_bytes"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        for name in ("syn_fraction_threshold", "payload_repeat_fraction"):
            if getattr(self, name) > 1.0:
                raise ValueError("%s must be in (0, 1]" % name)


@dataclass(frozen=True)
class Evidence:
    analyzer: Analyzer
    device_id: int
    seq_nos: tuple
    reason: str
    window_start_s: float
    detail: str = ""

    def __post_init__(self):
        if not self.seq_nos:
            raise ValueError("evidence must implicate at least one packet")

    def to_dict(self):
        return {
            "analyzer": self.analyzer.value,
            "device_id": self.device_id,
            "seq_nos": list(self.seq_nos),
            "reason": self.reason,
            "window_start_s": self.window_start_s,
            "detail": self.detail,
        }


@dataclass
class FogReport:
    fog_node_id: int
    evidence: list = field(default_factory=list)
    analysis_wall_time_s: float = 0.0

    @property
    def flagged_packets(self):
        out = set()
        for ev in self.evidence:
            out.update(ev.seq_nos)
        return out

    @property
    def suspect_devices(self):
        return {ev.device_id for ev in self.evidence}

    def to_dict(self):
        return {
            "fog_node_id": self.fog_node_id,
            "evidence": [ev.to_dict() for ev in self.evidence],
            "flagged_packets": sorted(self.flagged_packets),
            "suspect_devices": sorted(self.suspect_devices),
            "analysis_wall_time_s": self.analysis_wall_time_s,
        }


def _window_index(pkt, window_s):
    return math.floor(pkt.timestamp / window_s)


def _flow_key(pkt):
    return (pkt.src_ip, pkt.src_port, pkt.dst_ip, pkt.dst_port)


def _is_pure_ack(pkt):
    return (pkt.protocol is Protocol.TCP and TcpFlag.ACK in pkt.tcp_flags
            and TcpFlag.SYN not in pkt.tcp_flags)


def _is_handshake_ack(pkt):
    return pkt.protocol is Protocol.TCP and pkt.tcp_flags == {TcpFlag.ACK}


def statistical_analyze(packets, params):
    """Per-device per-window traffic statistics.

    Flags SYN-rate excess, packet-size deviation from the device's frozen
    baseline, and destination concentration under SYN dominance.
    """
    evidence = []
    windows = defaultdict(list)  # (device, window) -> packets
    for pkt in packets:
        windows[(pkt.device_id, _window_index(pkt, params.window_s))].append(pkt)

    # Size baseline per device: first window with >= 30 samples, frozen.
    baselines = {}
    for (dev, win) in sorted(windows):
        pkts = windows[(dev, win)]
        if dev not in baselines and len(pkts) >= 30:
            sizes = [p.size_bytes for p in pkts]
            mean = sum(sizes) / len(sizes)
            var = sum((s - mean) ** 2 for s in sizes) / len(sizes)
            baselines[dev] = (win, mean, math.sqrt(var))

    for (dev, win) in sorted(windows):
        pkts = windows[(dev, win)]
        win_start = win * params.window_s
        syns = [p for p in pkts if p.is_syn_only]
        syn_frac = len(syns) / len(pkts)
        if (len(syns) > params.syn_rate_threshold
                and syn_frac > params.syn_fraction_threshold):
            evidence.append(Evidence(
                analyzer=Analyzer.STATISTICAL, device_id=dev,
                seq_nos=tuple(p.seq_no for p in syns), reason="SYN_RATE",
                window_start_s=win_start,
                detail="%d SYN-only packets in %.0fs window" % (
                    len(syns), params.window_s)))
        base = baselines.get(dev)
        if base is not None and base[0] != win and len(pkts) >= 30 and base[2] > 0:
            mean = sum(p.size_bytes for p in pkts) / len(pkts)
            if abs(mean - base[1]) > 3 * base[2]:
                evidence.append(Evidence(
                    analyzer=Analyzer.STATISTICAL, device_id=dev,
                    seq_nos=tuple(p.seq_no for p in pkts),
                    reason="SIZE_DEVIATION", window_start_s=win_start,
                    detail="window mean %.1fB vs baseline %.1fB (sigma %.1f)"
                           % (mean, base[1], base[2])))
        if len(pkts) >= params.min_window_packets:
            dst_counts = Counter(p.dst_ip for p in pkts)
            top_dst, top_n = dst_counts.most_common(1)[0]
            if (top_n / len(pkts) > 0.9
                    and syn_frac > params.syn_fraction_threshold):
                evidence.append(Evidence(
                    analyzer=Analyzer.STATISTICAL, device_id=dev,
                    seq_nos=tuple(p.seq_no for p in pkts if p.dst_ip == top_dst),
                    reason="DST_CONCENTRATION", window_start_s=win_start,
                    detail="%.0f%% of traffic to %s while SYN-dominant"
                           % (100 * top_n / len(pkts), top_dst)))
    return evidence


class _FlowState(enum.Enum):
    SYN_SENT = "SYN_SENT"
    ESTABLISHED = "ESTABLISHED"
    CLOSED = "CLOSED"


def specification_analyze(packets, params):
    """TCP handshake conformance and connection-initiation rate.

    SYN-ACK responses are the legal second handshake step and carry no
    state here (the initiator side drives the machine); a bare SYN+FIN
    combination and an ACK on a flow that never sent a SYN are violations.
    """
    evidence = []
    flows = {}
    new_conns = defaultdict(list)  # (device, window) -> SYN packets
    for pkt in packets:
        if pkt.protocol is not Protocol.TCP:
            continue
        key = _flow_key(pkt)
        state = flows.get(key)
        win_start = _window_index(pkt, params.window_s) * params.window_s

        if TcpFlag.SYN in pkt.tcp_flags and TcpFlag.FIN in pkt.tcp_flags:
            evidence.append(Evidence(
                analyzer=Analyzer.SPECIFICATION, device_id=pkt.device_id,
                seq_nos=(pkt.seq_no,), reason="SYN_FIN",
                window_start_s=win_start, detail="SYN+FIN combination"))
            continue
        if pkt.tcp_flags == {TcpFlag.SYN, TcpFlag.ACK}:
            # Handshake response; belongs to the reverse flow.
            continue
        if pkt.is_syn_only:
            if state is _FlowState.ESTABLISHED:
                evidence.append(Evidence(
                    analyzer=Analyzer.SPECIFICATION, device_id=pkt.device_id,
                    seq_nos=(pkt.seq_no,), reason="SYN_ON_ESTABLISHED",
                    window_start_s=win_start,
                    detail="SYN on established connection"))
            elif state is None:
                flows[key] = _FlowState.SYN_SENT
                new_conns[(pkt.device_id,
                           _window_index(pkt, params.window_s))].append(pkt)
            continue
        if _is_pure_ack(pkt):
            if state is None:
                evidence.append(Evidence(
                    analyzer=Analyzer.SPECIFICATION, device_id=pkt.device_id,
                    seq_nos=(pkt.seq_no,), reason="ACK_WITHOUT_SYN",
                    window_start_s=win_start,
                    detail="ACK with no prior SYN on this flow"))
                continue
            if state is _FlowState.SYN_SENT:
                flows[key] = _FlowState.ESTABLISHED
            if TcpFlag.FIN in pkt.tcp_flags or TcpFlag.RST in pkt.tcp_flags:
                flows[key] = _FlowState.CLOSED

    for (dev, win), syns in sorted(new_conns.items()):
        if len(syns) > params.conn_init_threshold:
            evidence.append(Evidence(
                analyzer=Analyzer.SPECIFICATION, device_id=dev,
                seq_nos=tuple(p.seq_no for p in syns), reason="CONN_RATE",
                window_start_s=win * params.window_s,
                detail="%d new connections in one window" % len(syns)))
    return evidence


def response_observations(packets):
    """SYN -> SYN-ACK latencies observable in a packet slice.

    Returns a list of (syn_packet, latency_s) pairs; pairs are only formed
    when both directions of the handshake appear in the slice.
    """
    pending = {}
    obs = []
    for pkt in packets:
        if pkt.protocol is not Protocol.TCP:
            continue
        if pkt.is_syn_only:
            pending[_flow_key(pkt)] = pkt
        elif pkt.tcp_flags == {TcpFlag.SYN, TcpFlag.ACK}:
            reverse = (pkt.dst_ip, pkt.dst_port, pkt.src_ip, pkt.src_port)
            syn = pending.pop(reverse, None)
            if syn is not None:
                obs.append((syn, pkt.timestamp - syn.timestamp))
    return obs


def behavioral_analyze(packets, params, responses=None):
    """Response-time inflation, flow spikes, MAC novelty, half-open excess.

    `responses` defaults to the SYN/SYN-ACK pairs observable in the slice.
    The first window of the slice seeds the MAC and response-time baselines.
    """
    evidence = []
    if responses is None:
        responses = response_observations(packets)

    # Response-time inflation: baseline frozen at the first window that has
    # observations, so a later flood cannot poison it.
    by_window = defaultdict(list)
    for syn, latency in responses:
        by_window[_window_index(syn, params.window_s)].append((syn, latency))
    baseline = None
    for win in sorted(by_window):
        lat = [l for _, l in by_window[win]]
        mean = sum(lat) / len(lat)
        if baseline is None:
            baseline = mean
            continue
        if baseline > 0 and mean > params.response_time_factor * baseline:
            for dev in sorted({syn.device_id for syn, _ in by_window[win]}):
                seqs = tuple(syn.seq_no for syn, _ in by_window[win]
                             if syn.device_id == dev)
                evidence.append(Evidence(
                    analyzer=Analyzer.BEHAVIORAL, device_id=dev, seq_nos=seqs,
                    reason="RESPONSE_TIME",
                    window_start_s=win * params.window_s,
                    detail="mean response %.4fs vs baseline %.4fs"
                           % (mean, baseline)))

    # Flow spike and MAC novelty, per window over the whole slice.
    windows = defaultdict(list)
    for pkt in packets:
        windows[_window_index(pkt, params.window_s)].append(pkt)
    seen_macs = set()
    first_window = True
    for win in sorted(windows):
        pkts = windows[win]
        win_start = win * params.window_s
        flows = {}
        for pkt in pkts:
            flows.setdefault((pkt.src_ip, pkt.dst_ip), pkt)
        if len(flows) > params.flow_spike_threshold:
            evidence.append(Evidence(
                analyzer=Analyzer.BEHAVIORAL,
                device_id=min(p.device_id for p in pkts),
                seq_nos=tuple(sorted(p.seq_no for p in flows.values())),
                reason="FLOW_SPIKE", window_start_s=win_start,
                detail="%d distinct (src, dst) flows in window" % len(flows)))
        new_macs = {}
        for pkt in pkts:
            if pkt.src_mac not in seen_macs:
                seen_macs.add(pkt.src_mac)
                new_macs.setdefault(pkt.src_mac, pkt)
        if not first_window and len(new_macs) > params.mac_novelty_threshold:
            by_dev = defaultdict(list)
            for pkt in new_macs.values():
                by_dev[pkt.device_id].append(pkt.seq_no)
            for dev in sorted(by_dev):
                evidence.append(Evidence(
                    analyzer=Analyzer.BEHAVIORAL, device_id=dev,
                    seq_nos=tuple(sorted(by_dev[dev])), reason="MAC_NOVELTY",
                    window_start_s=win_start,
                    detail="%d previously unseen MACs in window" % len(new_macs)))
        first_window = False

    # Half-open excess: checked at each window close and at end of slice.
    half_open = {}  # flow key -> SYN packet still awaiting its handshake ACK
    flagged = set()

    def check_half_open(win_start):
        per_dst = defaultdict(list)
        for syn in half_open.values():
            per_dst[syn.dst_ip].append(syn)
        for dst in sorted(per_dst):
            syns = per_dst[dst]
            if len(syns) > params.half_open_threshold:
                seqs = tuple(sorted(p.seq_no for p in syns))
                marker = (dst, seqs)
                if marker not in flagged:
                    flagged.add(marker)
                    evidence.append(Evidence(
                        analyzer=Analyzer.BEHAVIORAL,
                        device_id=min(p.device_id for p in syns),
                        seq_nos=seqs, reason="HALF_OPEN",
                        window_start_s=win_start,
                        detail="%d half-open connections to %s" % (len(syns), dst)))

    current_win = None
    for pkt in packets:
        win = _window_index(pkt, params.window_s)
        if current_win is not None and win != current_win:
            check_half_open(current_win * params.window_s)
        current_win = win
        if pkt.protocol is not Protocol.TCP:
            continue
        key = _flow_key(pkt)
        if pkt.is_syn_only:
            half_open.setdefault(key, pkt)
        elif _is_handshake_ack(pkt) or TcpFlag.RST in pkt.tcp_flags:
            half_open.pop(key, None)
    if current_win is not None:
        check_half_open(current_win * params.window_s)
    return evidence


def deep_packet_inspect(packets, params):
    """Header and payload inspection.

    Per-packet checks: SYN carrying payload, illegal flag combinations,
    repetitive payload, oversized payload.  Per-window per-destination:
    SYNs not followed up by handshake ACKs at a ratio beyond 10:1.
    """
    evidence = []
    windows = defaultdict(list)
    for pkt in packets:
        win_start = _window_index(pkt, params.window_s) * params.window_s
        if pkt.protocol is Protocol.TCP:
            if pkt.is_syn_only and pkt.payload:
                evidence.append(Evidence(
                    analyzer=Analyzer.DPI, device_id=pkt.device_id,
                    seq_nos=(pkt.seq_no,), reason="SYN_PAYLOAD",
                    window_start_s=win_start,
                    detail="SYN-only packet carries %dB payload" % len(pkt.payload)))
            if TcpFlag.SYN in pkt.tcp_flags and TcpFlag.FIN in pkt.tcp_flags:
                evidence.append(Evidence(
                    analyzer=Analyzer.DPI, device_id=pkt.device_id,
                    seq_nos=(pkt.seq_no,), reason="ILLEGAL_FLAGS",
                    window_start_s=win_start, detail="SYN+FIN combination"))
        if pkt.payload:
            top = Counter(pkt.payload).most_common(1)[0][1]
            if top / len(pkt.payload) > params.payload_repeat_fraction:
                evidence.append(Evidence(
                    analyzer=Analyzer.DPI, device_id=pkt.device_id,
                    seq_nos=(pkt.seq_no,), reason="REPETITIVE_PAYLOAD",
                    window_start_s=win_start,
                    detail="one byte fills %.0f%% of payload"
                           % (100 * top / len(pkt.payload))))
            if len(pkt.payload) > params.max_payload_bytes:
                evidence.append(Evidence(
                    analyzer=Analyzer.DPI, device_id=pkt.device_id,
                    seq_nos=(pkt.seq_no,), reason="OVERSIZED_PAYLOAD",
                    window_start_s=win_start,
                    detail="payload %dB exceeds %dB"
                           % (len(pkt.payload), params.max_payload_bytes)))
        if pkt.protocol is Protocol.TCP:
            windows[_window_index(pkt, params.window_s)].append(pkt)

    # SYN:ACK follow-up ratio per window per destination (ip, port).
    for win in sorted(windows):
        pkts = windows[win]
        win_start = win * params.window_s
        per_dst = defaultdict(lambda: ([], set()))
        for pkt in pkts:
            syns, acked = per_dst[(pkt.dst_ip, pkt.dst_port)]
            if pkt.is_syn_only:
                syns.append(pkt)
            elif _is_handshake_ack(pkt):
                acked.add((pkt.src_ip, pkt.src_port))
        for dst in sorted(per_dst):
            syns, acked = per_dst[dst]
            if len(syns) <= params.min_window_packets:
                continue
            n_acks = len(acked)
            if len(syns) > 10 * max(n_acks, 1) or (n_acks == 0 and len(syns) > 10):
                unmatched = [p for p in syns
                             if (p.src_ip, p.src_port) not in acked]
                if unmatched:
                    by_dev = defaultdict(list)
                    for p in unmatched:
                        by_dev[p.device_id].append(p.seq_no)
                    for dev in sorted(by_dev):
                        evidence.append(Evidence(
                            analyzer=Analyzer.DPI, device_id=dev,
                            seq_nos=tuple(sorted(by_dev[dev])),
                            reason="SYN_ACK_RATIO", window_start_s=win_start,
                            detail="%d SYNs vs %d handshake ACKs to %s:%d"
                                   % (len(syns), n_acks, dst[0], dst[1])))
    return evidence


ANALYZERS = (
    (Analyzer.STATISTICAL, statistical_analyze),
    (Analyzer.SPECIFICATION, specification_analyze),
    (Analyzer.BEHAVIORAL, behavioral_analyze),
    (Analyzer.DPI, deep_packet_inspect),
)


def fog_node_analyze(fog_node_id, packets, params=None):
    """Run all four analyzer families over one fog node's packet slice."""
    if params is None:
        params = DetectorParams()
    params.validate()
    start = time.perf_counter()
    evidence = []
    for _, analyze in ANALYZERS:
        evidence.extend(analyze(packets, params))
    wall = time.perf_counter() - start
    return FogReport(fog_node_id=fog_node_id, evidence=evidence,
                     analysis_wall_time_s=wall)
