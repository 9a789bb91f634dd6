"""Core domain types shared by every pipeline stage.

Packets are immutable value objects.  The trace file format (one packet
per line, fields in declared order) is defined here and kept stable:
golden files depend on it.
"""

import enum
import ipaddress
from dataclasses import dataclass, field

# Fixed framing: IPv4 header (20) + TCP header (20).  UDP/ICMP packets use
# the same floor so size arithmetic stays uniform.
HEADER_BYTES = 40


class Protocol(enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"


class TcpFlag(enum.Enum):
    SYN = "S"
    ACK = "A"
    FIN = "F"
    RST = "R"
    PSH = "P"
    URG = "U"


class Label(enum.Enum):
    BENIGN = "BENIGN"
    ATTACK = "ATTACK"


class Verdict(enum.Enum):
    FORWARD = "FORWARD"
    DROP = "DROP"
    ALERT = "ALERT"


_LETTER_TO_FLAG = {f.value: f for f in TcpFlag}

SYN_ONLY = frozenset({TcpFlag.SYN})
NO_FLAGS = frozenset()


class FlagParseError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


def parse_flag_set(text):
    """Parse a canonical flag letter string ("SA") into a frozenset of flags.

    Empty string yields the empty set (matches only flagless packets).
    """
    seen = set()
    for ch in text:
        flag = _LETTER_TO_FLAG.get(ch)
        if flag is None:
            raise FlagParseError("unknown TCP flag character %r" % ch)
        if flag in seen:
            raise FlagParseError("repeated TCP flag character %r" % ch)
        seen.add(flag)
    return frozenset(seen)


def flags_to_text(flags):
    """Canonical letter encoding, fixed S,A,F,R,P,U order."""
    return "".join(f.value for f in TcpFlag if f in flags)


def assign_devices_to_fog(n_devices, n_fog):
    """Round-robin static assignment: device i -> fog node (i mod n_fog)."""
    if n_devices < 1:
        raise ConfigurationError("need at least one device")
    if n_fog < 1:
        raise ConfigurationError("need at least one fog node")
    return {d: d % n_fog for d in range(n_devices)}


def _check_ip(value, name):
    try:
        ipaddress.IPv4Address(value)
    except (ValueError, TypeError):
        raise ValueError("%s is not a valid IPv4 address: %r" % (name, value))


@dataclass(frozen=True)
class Packet:
    """One simulated network packet with ground-truth label.

    The label is visible only to the metrics layer; detection stages must
    never read it.
    """

    seq_no: int
    timestamp: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol
    tcp_flags: frozenset
    size_bytes: int
    payload: bytes
    src_mac: str
    device_id: int
    label: Label

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("negative timestamp")
        _check_ip(self.src_ip, "src_ip")
        _check_ip(self.dst_ip, "dst_ip")
        for port, name in ((self.src_port, "src_port"), (self.dst_port, "dst_port")):
            if not 0 <= port <= 65535:
                raise ValueError("%s out of range: %d" % (name, port))
        if self.protocol is Protocol.TCP:
            if not self.tcp_flags:
                raise ValueError("TCP packet requires at least one flag")
        elif self.tcp_flags:
            raise ValueError("non-TCP packet must have empty flag set")
        if self.size_bytes != HEADER_BYTES + len(self.payload):
            raise ValueError(
                "size_bytes (%d) != header floor (%d) + payload length (%d)"
                % (self.size_bytes, HEADER_BYTES, len(self.payload))
            )

    @property
    def is_syn_only(self):
        return self.protocol is Protocol.TCP and self.tcp_flags == SYN_ONLY


def make_packet(seq_no, timestamp, src_ip, dst_ip, src_port, dst_port,
                protocol, tcp_flags=NO_FLAGS, payload=b"", src_mac="02:00:00:00:00:00",
                device_id=0, label=Label.BENIGN):
    """Convenience constructor computing size_bytes from the payload."""
    return Packet(
        seq_no=seq_no, timestamp=timestamp, src_ip=src_ip, dst_ip=dst_ip,
        src_port=src_port, dst_port=dst_port, protocol=protocol,
        tcp_flags=frozenset(tcp_flags), size_bytes=HEADER_BYTES + len(payload),
        payload=payload, src_mac=src_mac, device_id=device_id, label=label,
    )


class TraceFormatError(ValueError):
    pass


def packet_to_line(pkt):
    """Serialize one packet to the stable trace line format.

    Fields, space separated:
    seq_no timestamp src_ip dst_ip src_port dst_port protocol flags
    size_bytes payload_hex src_mac device_id label
    Empty flags and empty payload are encoded as "-".
    """
    flags = flags_to_text(pkt.tcp_flags) or "-"
    payload = pkt.payload.hex() or "-"
    return " ".join([
        str(pkt.seq_no), repr(pkt.timestamp), pkt.src_ip, pkt.dst_ip,
        str(pkt.src_port), str(pkt.dst_port), pkt.protocol.value, flags,
        str(pkt.size_bytes), payload, pkt.src_mac, str(pkt.device_id),
        pkt.label.value,
    ])


def packet_from_line(line, lineno=None):
    parts = line.split()
    if len(parts) != 13:
        where = " at line %s" % lineno if lineno is not None else ""
        raise TraceFormatError("expected 13 fields, got %d%s" % (len(parts), where))
    (seq, ts, src, dst, sport, dport, proto, flags, size, payload, mac,
     dev, label) = parts
    return Packet(
        seq_no=int(seq), timestamp=float(ts), src_ip=src, dst_ip=dst,
        src_port=int(sport), dst_port=int(dport), protocol=Protocol(proto),
        tcp_flags=parse_flag_set("" if flags == "-" else flags),
        size_bytes=int(size),
        payload=b"" if payload == "-" else bytes.fromhex(payload),
        src_mac=mac, device_id=int(dev), label=Label(label),
    )


def write_trace(packets, path):
    with open(path, "w") as fh:
        for pkt in packets:
            fh.write(packet_to_line(pkt) + "\n")


def read_trace(path):
    packets = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            packets.append(packet_from_line(line, lineno))
    return packets


def validate_trace(packets):
    """Check trace-wide invariants: seq strictly increasing, time non-decreasing."""
    last_seq = None
    last_ts = None
    for pkt in packets:
        if last_seq is not None and pkt.seq_no <= last_seq:
            raise ValueError("seq_no not strictly increasing at %d" % pkt.seq_no)
        if last_ts is not None and pkt.timestamp < last_ts:
            raise ValueError("timestamps decrease at seq %d" % pkt.seq_no)
        last_seq = pkt.seq_no
        last_ts = pkt.timestamp
