"""Message and bit accounting, run traces, and CSV/JSON serialization.

The cost model charges ceil(log2 n) bits per channel open and per address
message, b bits per rumor copy, and ceil(log2 ctr_max) bits per piggybacked
median-counter state tag. bit_total is maintained incrementally and is always
recomputable from the counters alone.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .core import Mode, SimConfig, log2_log2, sqrt_log2

CSV_HEADER = [
    "run_id",
    "seed",
    "n",
    "c",
    "b",
    "mode",
    "failure_scale",
    "round",
    "phase",
    "informed",
    "channel_opens",
    "address_msgs",
    "rumor_msgs",
    "state_msgs",
    "bit_total",
]

# payload categories, used by the engine when crediting deliveries
RUMOR = "rumor"
ADDRESS = "address"
LEADER_FLAG = "leader_flag"
RUMOR_STATE = "rumor_state"


@dataclass
class PhaseCounters:
    rounds: int = 0
    channel_opens: int = 0
    address_msgs: int = 0
    rumor_msgs: int = 0
    state_msgs: int = 0


class Metrics:
    """Monotone counters for one run, broken down by phase label."""

    def __init__(self, n: int, b: int, ctr_max: int):
        self.n = n
        self.b = b
        self.ctr_max = ctr_max
        self.addr_bits = max(1, math.ceil(math.log2(n)))
        self.state_bits = math.ceil(math.log2(ctr_max)) if ctr_max > 1 else 0
        self.rounds = 0
        self.channel_opens = 0
        self.address_msgs = 0
        self.rumor_msgs = 0
        self.state_msgs = 0
        self.bit_total = 0
        self.per_phase: dict[str, PhaseCounters] = {}

    def _phase(self, label: str) -> PhaseCounters:
        pc = self.per_phase.get(label)
        if pc is None:
            pc = self.per_phase[label] = PhaseCounters()
        return pc

    def add_opens(self, label: str, k: int):
        if k < 0:
            raise ValueError("negative channel-open count")
        self.channel_opens += k
        self._phase(label).channel_opens += k
        self.bit_total += k * self.addr_bits

    def add_deliveries(self, label: str, kind: str, k: int):
        """Credit k deliveries of one payload kind.

        Address and leader-flag replies both cost one address message; a
        state-tagged rumor costs one rumor message plus one state tag.
        """
        if k < 0:
            raise ValueError("negative delivery count")
        if k == 0:
            return
        pc = self._phase(label)
        if kind == RUMOR:
            self.rumor_msgs += k
            pc.rumor_msgs += k
            self.bit_total += k * self.b
        elif kind in (ADDRESS, LEADER_FLAG):
            self.address_msgs += k
            pc.address_msgs += k
            self.bit_total += k * self.addr_bits
        elif kind == RUMOR_STATE:
            self.rumor_msgs += k
            self.state_msgs += k
            pc.rumor_msgs += k
            pc.state_msgs += k
            self.bit_total += k * (self.b + self.state_bits)
        else:
            raise ValueError(f"unknown payload kind {kind!r}")

    def end_round(self, label: str):
        self.rounds += 1
        self._phase(label).rounds += 1

    def recompute_bit_total(self) -> int:
        """bit_total from the counters alone; must equal the running value."""
        return (
            self.channel_opens * self.addr_bits
            + self.address_msgs * self.addr_bits
            + self.rumor_msgs * self.b
            + self.state_msgs * self.state_bits
        )


def account(metrics: Metrics, label: str, *, opens: int = 0, kind: str | None = None, k: int = 0):
    """Single-event accounting entry point: a channel open and/or a delivery."""
    if opens:
        metrics.add_opens(label, opens)
    if kind is not None:
        metrics.add_deliveries(label, kind, k)


@dataclass(frozen=True)
class RoundRecord:
    """One executed round: phase label, informed count, cumulative counters."""

    round: int  # 1-based
    phase: str
    informed: int
    channel_opens: int
    address_msgs: int
    rumor_msgs: int
    state_msgs: int
    bit_total: int


@dataclass
class Trace:
    """Per-round time series of one run plus end-of-run summary facts."""

    run_id: str
    seed: int
    n: int
    c: int
    b: int
    mode: str
    failure_scale: float
    records: list[RoundRecord]
    failed_count: int = 0
    full_informed_round: int | None = None  # first round with every node informed
    live_informed_round: int | None = None  # first round with every live node informed
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def total_rounds(self) -> int:
        return len(self.records)

    @property
    def final_informed(self) -> int:
        return self.records[-1].informed if self.records else 0

    def header_row(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "n": self.n,
            "c": self.c,
            "b": self.b,
            "mode": self.mode,
            "failure_scale": format(self.failure_scale, "g"),
        }


def trace_rows(trace: Trace) -> list[dict]:
    head = trace.header_row()
    rows = []
    for rec in trace.records:
        row = dict(head)
        row.update(
            round=rec.round,
            phase=rec.phase,
            informed=rec.informed,
            channel_opens=rec.channel_opens,
            address_msgs=rec.address_msgs,
            rumor_msgs=rec.rumor_msgs,
            state_msgs=rec.state_msgs,
            bit_total=rec.bit_total,
        )
        rows.append(row)
    return rows


def write_table(rows: list[dict], header: list[str], fmt: str, sink) -> None:
    """Write a row table as CSV (fixed column order) or JSON (list of objects)."""
    if fmt == "csv":
        writer = csv.DictWriter(sink, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    elif fmt == "json":
        json.dump(rows, sink, indent=2, sort_keys=False)
        sink.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def write_run(trace: Trace, fmt: str, sink) -> None:
    """Serialize one run, one row per round.

    CSV uses the fixed schema in ``CSV_HEADER``; JSON nests the per-round rows
    under the run header so that ``read_run_json`` round-trips exactly.
    """
    if fmt == "csv":
        write_table(trace_rows(trace), CSV_HEADER, "csv", sink)
    elif fmt == "json":
        json.dump(run_to_json(trace), sink, indent=2)
        sink.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def run_to_json(trace: Trace) -> dict:
    doc = trace.header_row()
    doc["failure_scale"] = trace.failure_scale  # keep numeric in JSON
    doc["failed_count"] = trace.failed_count
    doc["full_informed_round"] = trace.full_informed_round
    doc["live_informed_round"] = trace.live_informed_round
    doc["rounds"] = [
        {
            "round": r.round,
            "phase": r.phase,
            "informed": r.informed,
            "channel_opens": r.channel_opens,
            "address_msgs": r.address_msgs,
            "rumor_msgs": r.rumor_msgs,
            "state_msgs": r.state_msgs,
            "bit_total": r.bit_total,
        }
        for r in trace.records
    ]
    return doc


def read_run_json(text: str) -> Trace:
    doc = json.loads(text)
    records = [RoundRecord(**row) for row in doc["rounds"]]
    return Trace(
        run_id=doc["run_id"],
        seed=doc["seed"],
        n=doc["n"],
        c=doc["c"],
        b=doc["b"],
        mode=doc["mode"],
        failure_scale=float(doc["failure_scale"]),
        records=records,
        failed_count=doc["failed_count"],
        full_informed_round=doc["full_informed_round"],
        live_informed_round=doc["live_informed_round"],
    )


SUMMARY_HEADER = [
    "n",
    "mode",
    "runs",
    "completed_runs",
    "median_completion_round",
    "p95_completion_round",
    "mean_total_rounds",
    "mean_bit_total",
    "rounds_ratio",
    "bits_ratio",
]


def rounds_denominator(n: int) -> int:
    """ceil(sqrt(log2 n)), the unit every phase length is measured in."""
    return sqrt_log2(n)


def bits_denominator(n: int, b: int) -> float:
    """n * (log2 n * ceil(sqrt(log2 n)) + b * ceil(log2 log2 n)).

    The log^{3/2} term uses the same integer-rounded sqrt-log convention as
    the schedule itself, so the ratio is comparable across n.
    """
    return n * (math.log2(n) * sqrt_log2(n) + b * log2_log2(n))


def _median(vals: list[float]) -> float:
    s = sorted(vals)
    m = len(s) // 2
    return s[m] if len(s) % 2 else (s[m - 1] + s[m]) / 2


def _p95(vals: list[float]) -> float:
    s = sorted(vals)
    idx = max(0, math.ceil(0.95 * len(s)) - 1)
    return s[idx]


def summarize_sweep(traces: list[Trace]) -> list[dict]:
    """Aggregate per (n, mode): completion stats, mean bits, fitted ratios."""
    groups: dict[tuple[int, str], list[Trace]] = {}
    for t in traces:
        groups.setdefault((t.n, t.mode), []).append(t)
    rows = []
    for (n, mode), runs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        completions = [t.full_informed_round for t in runs if t.full_informed_round]
        total_rounds = [t.total_rounds for t in runs]
        bit_totals = [t.records[-1].bit_total if t.records else 0 for t in runs]
        b = runs[0].b
        mean_rounds = sum(total_rounds) / len(runs)
        mean_bits = sum(bit_totals) / len(runs)
        rows.append(
            {
                "n": n,
                "mode": mode,
                "runs": len(runs),
                "completed_runs": len(completions),
                "median_completion_round": _median(completions) if completions else "",
                "p95_completion_round": _p95(completions) if completions else "",
                "mean_total_rounds": round(mean_rounds, 3),
                "mean_bit_total": round(mean_bits, 1),
                "rounds_ratio": round(mean_rounds / rounds_denominator(n), 4),
                "bits_ratio": round(mean_bits / bits_denominator(n, b), 4),
            }
        )
    return rows


def render_table(rows: list[dict], header: list[str], fmt: str) -> str:
    buf = io.StringIO()
    write_table(rows, header, fmt, buf)
    return buf.getvalue()
