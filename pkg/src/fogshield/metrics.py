"""Evaluation metrics: detection confusion counts, scalability ratios,
resource sampling, and the scenario comparison table.

Reference constants from prior published measurements are embedded as
data for the comparison table; they are reference rows, never asserted
against locally measured timings.
"""

import csv
import io
import threading
import time
from dataclasses import dataclass, field

from .model import Label

NOT_APPLICABLE = "NOT_APPLICABLE"

# Reference rows for the comparison table (prior-work constants).
REFERENCE_ROWS = [
    {"name": "Existing approach [detection]", "detection_time_s": 0.246,
     "detection_rate_pct": 99.56, "mitigation_time_s": None,
     "mitigation_rate_pct": None, "cpu_pct": None, "memory_pct": None,
     "reference": True},
    {"name": "Existing approach [mitigation]", "detection_time_s": None,
     "detection_rate_pct": None, "mitigation_time_s": None,
     "mitigation_rate_pct": 86.66, "cpu_pct": 55.60, "memory_pct": 53.22,
     "reference": True},
]


@dataclass
class DetectionMetrics:
    detection_wall_time_s: float
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int
    detection_rate: object      # recall, or NOT_APPLICABLE
    accuracy: float
    false_positive_rate: object  # FP / benign, or NOT_APPLICABLE

    def to_dict(self):
        return {
            "detection_wall_time_s": self.detection_wall_time_s,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "true_negatives": self.true_negatives,
            "false_negatives": self.false_negatives,
            "detection_rate": self.detection_rate,
            "accuracy": self.accuracy,
            "false_positive_rate": self.false_positive_rate,
        }


def detection_metrics(flagged_seq_nos, forwarded_packets, fog_wall_time_s):
    """Confusion counts of the fog flag set against ground-truth labels.

    Detection rate is attack recall TP/(TP+FN); accuracy is reported
    alongside.  With no attack packets in the forwarded stream the rate is
    NOT_APPLICABLE.
    """
    flagged = set(flagged_seq_nos)
    if not flagged <= {p.seq_no for p in forwarded_packets}:
        raise ValueError("flagged set contains packets outside the forwarded stream")
    tp = fp = tn = fn = 0
    for pkt in forwarded_packets:
        is_attack = pkt.label is Label.ATTACK
        is_flagged = pkt.seq_no in flagged
        if is_attack and is_flagged:
            tp += 1
        elif is_attack:
            fn += 1
        elif is_flagged:
            fp += 1
        else:
            tn += 1
    total = tp + fp + tn + fn
    rate = tp / (tp + fn) if (tp + fn) > 0 else NOT_APPLICABLE
    fpr = fp / (fp + tn) if (fp + tn) > 0 else NOT_APPLICABLE
    accuracy = (tp + tn) / total if total > 0 else NOT_APPLICABLE
    return DetectionMetrics(
        detection_wall_time_s=fog_wall_time_s,
        true_positives=tp, false_positives=fp,
        true_negatives=tn, false_negatives=fn,
        detection_rate=rate, accuracy=accuracy, false_positive_rate=fpr,
    )


@dataclass(frozen=True)
class ScalabilityInput:
    rate_a: float
    rate_b: float
    n_a: int
    n_b: int


def scalability_ratio(inp):
    """Per-device rate change between two scenario sizes, in percentage
    points per device: (rate_b - rate_a) / (n_b - n_a)."""
    if inp.n_a == inp.n_b:
        raise ZeroDivisionError("scalability ratio needs distinct device counts")
    return (inp.rate_b - inp.rate_a) / (inp.n_b - inp.n_a)


@dataclass(frozen=True)
class ResourceSample:
    wall_timestamp_s: float
    cpu_percent: float
    memory_percent: float

    def __post_init__(self):
        if not 0.0 <= self.cpu_percent <= 100.0:
            raise ValueError("cpu_percent out of [0, 100]")
        if not 0.0 <= self.memory_percent <= 100.0:
            raise ValueError("memory_percent out of [0, 100]")


class HostProbe:
    """Reads live CPU and memory utilisation of the host via psutil."""

    def __init__(self):
        import psutil
        self._psutil = psutil
        self._psutil.cpu_percent(interval=None)  # prime the counter

    def read(self):
        cpu = min(self._psutil.cpu_percent(interval=None), 100.0)
        mem = min(self._psutil.virtual_memory().percent, 100.0)
        return cpu, mem


class ReplayProbe:
    """Replays a recorded {t, cpu, mem} CSV sample file."""

    def __init__(self, path):
        self.samples = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                self.samples.append(ResourceSample(
                    wall_timestamp_s=float(row["t"]),
                    cpu_percent=float(row["cpu"]),
                    memory_percent=float(row["mem"])))
        self._i = 0

    def read(self):
        if self._i >= len(self.samples):
            raise StopIteration
        s = self.samples[self._i]
        self._i += 1
        return s.cpu_percent, s.memory_percent


def sample_resources(probe, duration_s=None, interval_s=0.05, max_samples=None):
    """Collect periodic resource samples from a probe.

    A probe failure disables sampling with a warning recorded in the
    returned dict; the run continues.
    """
    samples = []
    warning = None
    start = time.perf_counter()
    n = 0
    try:
        while True:
            if duration_s is not None and time.perf_counter() - start >= duration_s:
                break
            if max_samples is not None and n >= max_samples:
                break
            try:
                cpu, mem = probe.read()
            except StopIteration:
                break
            samples.append(ResourceSample(
                wall_timestamp_s=time.perf_counter() - start,
                cpu_percent=cpu, memory_percent=mem))
            n += 1
            if duration_s is not None:
                time.sleep(interval_s)
    except Exception as exc:  # probe failure must not abort the run
        warning = "resource sampling disabled: %s" % exc
    return {"samples": samples, "warning": warning}


class ResourceMonitor:
    """Background sampler running for the duration of a scenario stage."""

    def __init__(self, probe=None, interval_s=0.05):
        self.probe = probe
        self.interval_s = interval_s
        self.samples = []
        self.warning = None
        self._stop = threading.Event()
        self._thread = None
        self._start_time = None

    def __enter__(self):
        if self.probe is None:
            try:
                self.probe = HostProbe()
            except Exception as exc:
                self.warning = "resource sampling disabled: %s" % exc
                return self
        self._start_time = time.perf_counter()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def _run(self):
        while not self._stop.is_set():
            try:
                cpu, mem = self.probe.read()
            except StopIteration:
                return
            except Exception as exc:
                self.warning = "resource sampling disabled: %s" % exc
                return
            self.samples.append(ResourceSample(
                wall_timestamp_s=time.perf_counter() - self._start_time,
                cpu_percent=cpu, memory_percent=mem))
            self._stop.wait(self.interval_s)

    def __exit__(self, *exc_info):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        return False


def _fmt(value, digits):
    if value is None:
        return "---"
    if value == NOT_APPLICABLE:
        return NOT_APPLICABLE
    return "%.*f" % (digits, value)


def build_comparison_table(scenario_rows, include_reference=True):
    """Assemble comparison rows: reference constants plus measured scenarios.

    `scenario_rows` maps are expected to carry name, detection_time_s,
    detection_rate_pct, mitigation_time_s, mitigation_rate_pct, cpu_pct,
    memory_pct; missing scenarios appear as gap markers.
    """
    rows = []
    if include_reference:
        rows.extend(dict(r) for r in REFERENCE_ROWS)
    for row in scenario_rows:
        if row is None:
            rows.append({"name": "(missing scenario)", "detection_time_s": None,
                         "detection_rate_pct": None, "mitigation_time_s": None,
                         "mitigation_rate_pct": None, "cpu_pct": None,
                         "memory_pct": None, "reference": False})
        else:
            row = dict(row)
            row.setdefault("reference", False)
            rows.append(row)
    return rows


TABLE_COLUMNS = [
    ("name", "Configuration", None),
    ("detection_time_s", "Detect time (s)", 3),
    ("detection_rate_pct", "Detect rate (%)", 2),
    ("mitigation_time_s", "Mitigate time (s)", 3),
    ("mitigation_rate_pct", "Mitigate rate (%)", 2),
    ("cpu_pct", "CPU (%)", 2),
    ("memory_pct", "Memory (%)", 2),
]


def render_table_text(rows):
    cells = [[label for _, label, _ in TABLE_COLUMNS]]
    for row in rows:
        cells.append([
            str(row.get(key, "")) if digits is None else _fmt(row.get(key), digits)
            for key, _, digits in TABLE_COLUMNS])
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_table_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([key for key, _, _ in TABLE_COLUMNS] + ["reference"])
    for row in rows:
        writer.writerow([
            row.get("name", "")
        ] + [
            "" if row.get(key) is None else
            (row.get(key) if digits is None or row.get(key) == NOT_APPLICABLE
             else _fmt(row.get(key), digits))
            for key, _, digits in TABLE_COLUMNS[1:]
        ] + [str(bool(row.get("reference", False))).lower()])
    return buf.getvalue()


def samples_to_csv(samples):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "cpu", "mem"])
    for s in samples:
        writer.writerow(["%.3f" % s.wall_timestamp_s, "%.2f" % s.cpu_percent,
                         "%.2f" % s.memory_percent])
    return buf.getvalue()
