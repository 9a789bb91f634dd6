"""Stage 1: rule-based packet filtering at the device layer.

First-match-wins over declared rule order; packets matching no rule are
forwarded.  ALERT withholds the packet (logged, not delivered), so
forwarded + detected = total always holds.
"""

from dataclasses import dataclass, field

from .model import ConfigurationError, Protocol, Verdict, parse_flag_set

_ACTIONS = {"drop": Verdict.DROP, "alert": Verdict.ALERT, "forward": Verdict.FORWARD}


class RulesetParseError(ValueError):
    pass


@dataclass(frozen=True)
class FirewallRule:
    """Exact-match-or-wildcard rule; None means wildcard."""

    rule_id: int
    action: Verdict
    src_ip: str = None
    dst_ip: str = None
    protocol: Protocol = None
    dst_port: int = None
    flags: frozenset = None

    def __post_init__(self):
        if all(v is None for v in (self.src_ip, self.dst_ip, self.protocol,
                                   self.dst_port, self.flags)):
            raise ValueError("firewall rule needs at least one non-wildcard field")


def match_firewall_rule(rule, packet):
    """True iff every non-wildcard field equals the packet's field."""
    if rule.src_ip is not None and packet.src_ip != rule.src_ip:
        return False
    if rule.dst_ip is not None and packet.dst_ip != rule.dst_ip:
        return False
    if rule.protocol is not None and packet.protocol is not rule.protocol:
        return False
    if rule.dst_port is not None and packet.dst_port != rule.dst_port:
        return False
    if rule.flags is not None and packet.tcp_flags != rule.flags:
        return False
    return True


def parse_firewall_ruleset(text):
    """Parse the ruleset grammar: one rule per line,
    `<action> <src> <dst> <proto> <dport> <flags>` with `*` wildcards.
    Blank lines and `#` comments are skipped.
    """
    rules = []
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            errors.append("line %d: expected 6 fields, got %d" % (lineno, len(parts)))
            continue
        action_txt, src, dst, proto, dport, flags = parts
        try:
            action = _ACTIONS.get(action_txt.lower())
            if action is None:
                raise ValueError("unknown action %r" % action_txt)
            rule = FirewallRule(
                rule_id=len(rules) + 1,
                action=action,
                src_ip=None if src == "*" else src,
                dst_ip=None if dst == "*" else dst,
                protocol=None if proto == "*" else Protocol(proto.upper()),
                dst_port=None if dport == "*" else int(dport),
                flags=None if flags == "*" else parse_flag_set(flags),
            )
        except ValueError as exc:
            errors.append("line %d: %s" % (lineno, exc))
            continue
        rules.append(rule)
    if errors:
        raise RulesetParseError("; ".join(errors))
    return rules


def load_firewall_ruleset(path):
    with open(path) as fh:
        return parse_firewall_ruleset(fh.read())


@dataclass
class FilterOutcome:
    total: int = 0
    forwarded: int = 0
    dropped: int = 0
    alerted: int = 0
    forwarded_stream: list = field(default_factory=list)
    per_device: dict = field(default_factory=dict)

    @property
    def detected_dos(self):
        return self.dropped + self.alerted

    def to_dict(self):
        return {
            "total": self.total,
            "forwarded": self.forwarded,
            "detected_dos": self.detected_dos,
            "dropped": self.dropped,
            "alerted": self.alerted,
            "per_device": {
                str(d): {"sent": s, "delivered": f}
                for d, (s, f) in sorted(self.per_device.items())
            },
        }


def filter_trace(ruleset, trace):
    """Run the firewall over a trace, first-match-wins.

    The firewall is label-blind: nothing here reads packet labels.
    """
    if not ruleset:
        raise ConfigurationError("firewall ruleset must not be empty")
    outcome = FilterOutcome()
    for pkt in trace:
        verdict = Verdict.FORWARD
        for rule in ruleset:
            if match_firewall_rule(rule, pkt):
                verdict = rule.action
                break
        sent, delivered = outcome.per_device.get(pkt.device_id, (0, 0))
        sent += 1
        outcome.total += 1
        if verdict is Verdict.FORWARD:
            outcome.forwarded += 1
            outcome.forwarded_stream.append(pkt)
            delivered += 1
        elif verdict is Verdict.DROP:
            outcome.dropped += 1
        else:
            outcome.alerted += 1
        outcome.per_device[pkt.device_id] = (sent, delivered)
    return outcome


def packet_delivery_ratio(outcome):
    if outcome.total == 0:
        raise ValueError("packet delivery ratio undefined for an empty run")
    return outcome.forwarded / outcome.total


def per_device_pdr(outcome):
    """Per-device delivered/sent ratios; zero-sent devices are excluded."""
    return {
        dev: delivered / sent
        for dev, (sent, delivered) in sorted(outcome.per_device.items())
        if sent > 0
    }
