"""Snort-compatible rule subset: parser and stateful evaluator.

Supported vocabulary is exactly what the cloud mitigation rules need:
actions drop/alert, protocol tcp or any, any/exact address and port
patterns, and the options flags, count, seconds, threshold (type both,
track by_dst), detection_filter (track by_dst), msg, sid.

All count/seconds clauses use sliding windows over the trailing interval
(t - S, t].  A `threshold: type both` clause fires once when its count is
reached, then starts counting afresh (the event buffer is cleared on
fire), so at most ceil(n / count) alerts are emitted per destination per
window.  A `count N; seconds S` pair on a drop rule gates matching: the
rule matches a packet only once >= N flag-matching packets to the same
destination arrived within the trailing S seconds; every gated packet is
dropped while the alert log entry is rate-limited by the threshold
clause.  A detection_filter makes the rule eligible only after `count`
matching events per destination inside the filter window; every
subsequent matching packet in the window is then acted on.
"""

import json
import re
from dataclasses import dataclass, field

from .model import Protocol, Verdict, parse_flag_set

_ACTIONS = {"drop": Verdict.DROP, "alert": Verdict.ALERT}
_PROTOCOLS = {"tcp": Protocol.TCP, "udp": Protocol.UDP, "icmp": Protocol.ICMP}

DEFAULT_FILTER_WINDOW_S = 1


class RuleParseError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = "%s (at byte offset %d)" % (message, offset)
        super().__init__(message)
        self.offset = offset


class RulesetParseError(ValueError):
    pass


@dataclass(frozen=True)
class Threshold:
    count: int
    seconds: int

    def __post_init__(self):
        if self.count < 1 or self.seconds < 1:
            raise RuleParseError("threshold count/seconds must be >= 1")


@dataclass(frozen=True)
class DetectionFilter:
    count: int
    window_s: int = DEFAULT_FILTER_WINDOW_S

    def __post_init__(self):
        if self.count < 1 or self.window_s < 1:
            raise RuleParseError("detection_filter count/seconds must be >= 1")


@dataclass(frozen=True)
class MitigationRule:
    action: Verdict
    sid: int
    msg: str = ""
    protocol: Protocol = None       # None = any
    src_ip: str = None
    src_port: int = None
    dst_ip: str = None
    dst_port: int = None
    flags: frozenset = None         # None = no flag condition
    count: int = None
    seconds: int = None
    threshold: Threshold = None
    detection_filter: DetectionFilter = None

    def matches(self, pkt):
        """Stateless part of the match: protocol, addresses, ports, flags."""
        if self.protocol is not None and pkt.protocol is not self.protocol:
            return False
        if self.src_ip is not None and pkt.src_ip != self.src_ip:
            return False
        if self.src_port is not None and pkt.src_port != self.src_port:
            return False
        if self.dst_ip is not None and pkt.dst_ip != self.dst_ip:
            return False
        if self.dst_port is not None and pkt.dst_port != self.dst_port:
            return False
        if self.flags is not None and pkt.tcp_flags != self.flags:
            return False
        return True


@dataclass(frozen=True)
class RuleAction:
    seq_no: int
    sid: int
    action: Verdict
    msg: str
    timestamp: float

    def to_dict(self):
        return {
            "seq_no": self.seq_no,
            "sid": self.sid,
            "action": self.action.value,
            "msg": self.msg,
            "timestamp": self.timestamp,
        }


def actions_to_ndjson(actions):
    """Newline-delimited JSON action log."""
    return "".join(json.dumps(a.to_dict(), sort_keys=True) + "\n" for a in actions)


# -- parsing ----------------------------------------------------------------

def _split_options(body, base_offset):
    """Split the option body on top-level semicolons, respecting quotes."""
    parts = []
    current = []
    start = 0
    in_quote = False
    for i, ch in enumerate(body):
        if ch == '"':
            in_quote = not in_quote
            current.append(ch)
        elif ch == ";" and not in_quote:
            text = "".join(current).strip()
            if text:
                parts.append((text, base_offset + start))
            current = []
            start = i + 1
        else:
            current.append(ch)
    text = "".join(current).strip()
    if text:
        parts.append((text, base_offset + start))
    return parts


def _parse_int(value, what, offset):
    value = value.strip()
    if not value:
        raise RuleParseError("empty %s" % what, offset)
    try:
        return int(value)
    except ValueError:
        raise RuleParseError("invalid %s: %r" % (what, value), offset)


def _parse_threshold(value, offset):
    fields = {}
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        m = re.match(r"(\w+)\s+(\S+)$", item)
        if not m:
            raise RuleParseError("malformed threshold clause %r" % item, offset)
        key, val = m.group(1), m.group(2)
        if key == "type":
            if val != "both":
                raise RuleParseError("unsupported threshold type %r" % val, offset)
        elif key == "track":
            if val != "by_dst":
                raise RuleParseError("unsupported threshold track %r" % val, offset)
        elif key in ("count", "seconds"):
            fields[key] = _parse_int(val, "threshold %s" % key, offset)
        else:
            raise RuleParseError("unknown threshold field %r" % key, offset)
    if "count" not in fields or "seconds" not in fields:
        raise RuleParseError("threshold requires count and seconds", offset)
    return Threshold(count=fields["count"], seconds=fields["seconds"])


def _parse_detection_filter(value, offset):
    fields = {}
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        m = re.match(r"(\w+)\s+(\S+)$", item)
        if not m:
            raise RuleParseError("malformed detection_filter clause %r" % item, offset)
        key, val = m.group(1), m.group(2)
        if key == "track":
            if val != "by_dst":
                raise RuleParseError(
                    "unsupported detection_filter track %r" % val, offset)
        elif key in ("count", "seconds"):
            fields[key] = _parse_int(val, "detection_filter %s" % key, offset)
        else:
            raise RuleParseError("unknown detection_filter field %r" % key, offset)
    return fields  # may lack count; the rule-level count is inherited then


def _pattern(token):
    return None if token == "any" else token


def parse_rule(text):
    """Parse a single rule line into a MitigationRule."""
    stripped = text.strip()
    if "(" not in stripped or not stripped.rstrip().endswith(")"):
        raise RuleParseError("rule options must be parenthesised",
                             offset=len(stripped))
    paren = stripped.index("(")
    header = stripped[:paren].strip()
    body = stripped[paren + 1:stripped.rstrip().rindex(")")]

    tokens = header.split()
    action = None
    rest = None
    for i, tok in enumerate(tokens):
        # A stray prose fragment may be glued onto the action ("....alert"):
        # accept the action keyword and discard the fragment.
        candidate = tok.rsplit(".", 1)[-1].lower()
        if candidate in _ACTIONS:
            action = _ACTIONS[candidate]
            rest = tokens[i + 1:]
            break
    if action is None:
        raise RuleParseError("unknown action in rule header %r" % header, offset=0)

    if "->" not in rest:
        raise RuleParseError("missing '->' in rule header", offset=paren)
    arrow = rest.index("->")
    pre, post = rest[:arrow], rest[arrow + 1:]
    if len(post) != 2:
        raise RuleParseError("expected destination address and port", offset=paren)
    protocol = None
    if len(pre) == 3:
        proto_tok = pre[0].lower()
        if proto_tok != "any":
            if proto_tok not in _PROTOCOLS:
                raise RuleParseError("unknown protocol %r" % pre[0], offset=0)
            protocol = _PROTOCOLS[proto_tok]
        pre = pre[1:]
    if len(pre) != 2:
        raise RuleParseError("expected source address and port", offset=0)

    src_ip = _pattern(pre[0])
    src_port = None if pre[1] == "any" else int(pre[1])
    dst_ip = _pattern(post[0])
    dst_port = None if post[1] == "any" else int(post[1])

    flags = None
    count = None
    seconds = None
    threshold = None
    det_filter_fields = None
    msg = ""
    sid = None

    for opt, offset in _split_options(body, paren + 1):
        m = re.match(r"(\w+)\s*:?\s*(.*)$", opt, re.DOTALL)
        if not m:
            raise RuleParseError("malformed option %r" % opt, offset)
        key, value = m.group(1).lower(), m.group(2).strip()
        if key == "flags":
            flags = parse_flag_set(value)
        elif key == "count":
            count = _parse_int(value, "count", offset)
        elif key == "seconds":
            seconds = _parse_int(value, "seconds", offset)
        elif key == "threshold":
            threshold = _parse_threshold(value, offset)
        elif key == "detection_filter":
            det_filter_fields = _parse_detection_filter(value, offset)
        elif key == "msg":
            msg = value.strip('"')
        elif key == "sid":
            sid = _parse_int(value, "sid", offset)
        else:
            raise RuleParseError("unknown option keyword %r" % key, offset)

    if sid is None:
        raise RuleParseError("missing sid", offset=len(stripped))

    detection_filter = None
    if det_filter_fields is not None:
        fcount = det_filter_fields.get("count", count)
        if fcount is None:
            raise RuleParseError("detection_filter needs a count", offset=paren)
        detection_filter = DetectionFilter(
            count=fcount,
            window_s=det_filter_fields.get("seconds", DEFAULT_FILTER_WINDOW_S))

    if count is not None and count < 1:
        raise RuleParseError("count must be >= 1")
    if seconds is not None and seconds < 1:
        raise RuleParseError("seconds must be >= 1")
    if count is not None and seconds is None and detection_filter is None:
        raise RuleParseError("count requires either seconds or a detection_filter")

    return MitigationRule(
        action=action, sid=sid, msg=msg, protocol=protocol,
        src_ip=src_ip, src_port=src_port, dst_ip=dst_ip, dst_port=dst_port,
        flags=flags, count=count, seconds=seconds, threshold=threshold,
        detection_filter=detection_filter,
    )


def parse_ruleset(text):
    """Parse a multi-line rule file; blank lines and # comments skipped."""
    rules = []
    errors = []
    sids = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rule = parse_rule(line)
        except RuleParseError as exc:
            errors.append("line %d: %s" % (lineno, exc))
            continue
        if rule.sid in sids:
            errors.append("line %d: duplicate sid %d" % (lineno, rule.sid))
            continue
        sids.add(rule.sid)
        rules.append(rule)
    if errors:
        raise RulesetParseError("; ".join(errors))
    return rules


def load_ruleset(path):
    with open(path) as fh:
        return parse_ruleset(fh.read())


# -- evaluation --------------------------------------------------------------

class RuleEngineState:
    """Per-(sid, dst_ip) window state; empty at trace start, carryable
    across evaluate_trace calls so a split trace evaluates identically."""

    def __init__(self):
        self.gate_events = {}     # (sid, dst) -> [event times]
        self.filter_events = {}   # (sid, dst) -> [event times]
        self.threshold_events = {}  # (sid, dst) -> [event times since last fire]
        self.last_t = None


def _purge(times, cutoff):
    # Keep events strictly inside the trailing window (t - S, t].
    while times and times[0] <= cutoff:
        times.pop(0)


def evaluate_trace(ruleset, packets, state=None):
    """Evaluate a timestamp-ordered trace against the ruleset.

    Returns (verdicts, actions): one final Verdict per packet and the
    rate-limited action log.  The first rule that drops a packet consumes
    it (later rules never see it); alerts do not consume.
    """
    if state is None:
        state = RuleEngineState()
    verdicts = []
    actions = []
    for pkt in packets:
        if state.last_t is not None and pkt.timestamp < state.last_t:
            raise ValueError(
                "packets must be timestamp-ordered (seq %d goes back in time)"
                % pkt.seq_no)
        state.last_t = pkt.timestamp
        verdict = Verdict.FORWARD
        for rule in ruleset:
            if not rule.matches(pkt):
                continue
            t = pkt.timestamp
            key = (rule.sid, pkt.dst_ip)
            fired = False
            log_entry = True

            if rule.detection_filter is not None:
                events = state.filter_events.setdefault(key, [])
                _purge(events, t - rule.detection_filter.window_s)
                fired = len(events) >= rule.detection_filter.count
                events.append(t)
            elif rule.count is not None and rule.seconds is not None:
                events = state.gate_events.setdefault(key, [])
                _purge(events, t - rule.seconds)
                events.append(t)
                fired = len(events) >= rule.count
                if fired and rule.threshold is not None:
                    tev = state.threshold_events.setdefault(key, [])
                    _purge(tev, t - rule.threshold.seconds)
                    tev.append(t)
                    if len(tev) >= rule.threshold.count:
                        tev.clear()
                    else:
                        log_entry = False
            elif rule.threshold is not None:
                tev = state.threshold_events.setdefault(key, [])
                _purge(tev, t - rule.threshold.seconds)
                tev.append(t)
                if len(tev) >= rule.threshold.count:
                    tev.clear()
                    fired = True
            else:
                fired = True

            if not fired:
                continue
            if log_entry:
                actions.append(RuleAction(
                    seq_no=pkt.seq_no, sid=rule.sid, action=rule.action,
                    msg=rule.msg, timestamp=pkt.timestamp))
            if rule.action is Verdict.DROP:
                verdict = Verdict.DROP
                break
            if verdict is Verdict.FORWARD:
                verdict = Verdict.ALERT
        verdicts.append(verdict)
    return verdicts, actions
