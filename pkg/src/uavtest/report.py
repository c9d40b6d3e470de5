"""Comparison reports and test-script export.

``compile_report`` aggregates two trace sets (learned tester vs baseline)
into per-flight-state violation totals and unique counts, attaches the
diversity statistics, and renders both an aligned text table and
machine-readable records.  Violations inside flattened substates aggregate
under the parent state (the root of the dotted name), matching how state
invariants are scoped.

``export_script`` turns one episode trace into an executable script by
expanding every correct action through a command template; incorrect
actions caused no state change and are kept as comments.  The bundled
internal-simulator template emits ``do <event>`` lines, which
``replay_script`` executes against a fresh environment to reproduce the
recorded flight-state sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

from .analysis import DiversityScore, cliffs_delta, path_diversity, wilcoxon_signed_rank
from .traces import EpisodeTrace

__all__ = [
    "ReportError",
    "ComparisonReport",
    "StateRow",
    "violation_counts",
    "compile_report",
    "render_report",
    "report_records",
    "parse_template",
    "export_script",
    "replay_script",
]


class ReportError(ValueError):
    pass


def _root(state: str) -> str:
    return state.split(".", 1)[0]


def violation_counts(traces) -> dict[str, dict[str, int]]:
    """Per root flight state: constraint id -> number of failing steps."""
    counts: dict[str, dict[str, int]] = {}
    for trace in traces:
        for step in trace.steps:
            if not step.failed_ids:
                continue
            bucket = counts.setdefault(_root(step.state), {})
            for cid in step.failed_ids:
                bucket[cid] = bucket.get(cid, 0) + 1
    return counts


@dataclass(frozen=True)
class StateRow:
    state: str
    subject_total: int
    subject_unique: int
    baseline_total: int
    baseline_unique: int


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[StateRow, ...]
    subject_total: int
    subject_unique: int
    baseline_total: int
    baseline_unique: int
    subject_diversity: DiversityScore | None
    baseline_diversity: DiversityScore | None
    wilcoxon_p: float | None
    cliffs: float | None


def compile_report(
    subject_traces,
    baseline_traces,
    constraints,
    initial_state: str,
) -> ComparisonReport:
    """Build the comparison: per-state violation table plus diversity
    statistics over per-episode diversity contributions."""
    known = {c.cid for c in constraints}
    for traces, label in ((subject_traces, "subject"), (baseline_traces, "baseline")):
        for trace in traces:
            for step in trace.steps:
                stray = set(step.failed_ids) - known
                if stray:
                    raise ReportError(
                        f"{label} trace episode {trace.episode} references unknown "
                        f"constraint ids {sorted(stray)}"
                    )

    subject = violation_counts(subject_traces)
    baseline = violation_counts(baseline_traces)
    states = sorted(set(subject) | set(baseline))
    rows = []
    for state in states:
        s = subject.get(state, {})
        b = baseline.get(state, {})
        rows.append(
            StateRow(
                state=state,
                subject_total=sum(s.values()),
                subject_unique=len(s),
                baseline_total=sum(b.values()),
                baseline_unique=len(b),
            )
        )

    def diversity_of(traces):
        if len(traces) < 2:
            return None
        return path_diversity([t.transition_set(initial_state) for t in traces])

    sub_div = diversity_of(subject_traces)
    base_div = diversity_of(baseline_traces)
    p = delta = None
    if sub_div is not None and base_div is not None:
        a, b = sub_div.contributions, base_div.contributions
        delta = cliffs_delta(a, b)
        if len(a) == len(b):
            try:
                p = wilcoxon_signed_rank(a, b)
            except Exception:
                p = None
    return ComparisonReport(
        rows=tuple(rows),
        subject_total=sum(r.subject_total for r in rows),
        subject_unique=sum(r.subject_unique for r in rows),
        baseline_total=sum(r.baseline_total for r in rows),
        baseline_unique=sum(r.baseline_unique for r in rows),
        subject_diversity=sub_div,
        baseline_diversity=base_div,
        wilcoxon_p=p,
        cliffs=delta,
    )


def render_report(report: ComparisonReport, subject="Learned", baseline="Random") -> str:
    """Aligned text table: per-state totals and unique violation counts for
    both runs, then the diversity statistics."""
    head_state = "State"
    cols = [
        f"{subject} Violations",
        f"{subject} Unique",
        f"{baseline} Violations",
        f"{baseline} Unique",
    ]
    names = [r.state for r in report.rows] + ["Total"]
    width0 = max(len(head_state), *(len(n) for n in names)) if names else len(head_state)
    widths = [len(c) for c in cols]
    lines = []
    header = head_state.ljust(width0) + "  " + "  ".join(
        c.rjust(w) for c, w in zip(cols, widths)
    )
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.rows:
        cells = [r.subject_total, r.subject_unique, r.baseline_total, r.baseline_unique]
        lines.append(
            r.state.ljust(width0)
            + "  "
            + "  ".join(str(v).rjust(w) for v, w in zip(cells, widths))
        )
    lines.append("-" * len(header))
    totals = [
        report.subject_total,
        report.subject_unique,
        report.baseline_total,
        report.baseline_unique,
    ]
    lines.append(
        "Total".ljust(width0)
        + "  "
        + "  ".join(str(v).rjust(w) for v, w in zip(totals, widths))
    )
    lines.append("")
    if report.subject_diversity is not None:
        lines.append(f"{subject} path diversity: {report.subject_diversity.score!r}")
    if report.baseline_diversity is not None:
        lines.append(f"{baseline} path diversity: {report.baseline_diversity.score!r}")
    if report.wilcoxon_p is not None:
        lines.append(f"Wilcoxon signed-rank p-value: {report.wilcoxon_p!r}")
    if report.cliffs is not None:
        lines.append(f"Cliff's delta: {report.cliffs!r}")
    return "\n".join(lines) + "\n"


def report_records(report: ComparisonReport) -> str:
    """Line-delimited machine-readable form: one row per state plus stats."""
    lines = []
    for r in report.rows:
        lines.append(
            f"state,{r.state},{r.subject_total},{r.subject_unique},"
            f"{r.baseline_total},{r.baseline_unique}"
        )
    lines.append(
        f"total,ALL,{report.subject_total},{report.subject_unique},"
        f"{report.baseline_total},{report.baseline_unique}"
    )
    if report.subject_diversity is not None:
        lines.append(f"diversity,subject,{report.subject_diversity.score!r}")
    if report.baseline_diversity is not None:
        lines.append(f"diversity,baseline,{report.baseline_diversity.score!r}")
    if report.wilcoxon_p is not None:
        lines.append(f"wilcoxon_p,,{report.wilcoxon_p!r}")
    if report.cliffs is not None:
        lines.append(f"cliffs_delta,,{report.cliffs!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# script export


def parse_template(text: str) -> dict[str, str]:
    """Command template: ``action <Name> =>`` then body lines until ``end``."""
    templates: dict[str, str] = {}
    name = None
    body: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if name is None:
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 3 or parts[0] != "action" or parts[2] != "=>":
                raise ReportError(f"line {lineno}: expected 'action <Name> =>'")
            name = parts[1]
            if name in templates:
                raise ReportError(f"line {lineno}: duplicate template for {name!r}")
            body = []
        elif stripped == "end":
            templates[name] = "\n".join(body)
            name = None
        else:
            body.append(raw.rstrip())
    if name is not None:
        raise ReportError(f"template for {name!r} is never closed with 'end'")
    return templates


def export_script(trace: EpisodeTrace, templates: dict[str, str]) -> str:
    """One operation call per correct action, in trace order, each expanded
    through its template; incorrect actions are emitted as comments."""
    lines = [f"# test script for episode {trace.episode} ({trace.terminal})"]
    for step in trace.steps:
        if step.correct:
            if step.action not in templates:
                raise ReportError(f"no template for action {step.action!r}")
            lines.append(f"# step {step.tick}: {step.action} -> {step.state}")
            body = templates[step.action]
            if body:
                lines.extend(body.splitlines())
        else:
            lines.append(f"# step {step.tick}: skipped incorrect action {step.action}")
    return "\n".join(lines) + "\n"


def replay_script(script: str, env) -> list[str]:
    """Execute the internal-simulator command form (``do <event>`` lines)
    against a fresh environment; returns the visited flight states."""
    states = []
    for lineno, raw in enumerate(script.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "do" or len(parts) != 2:
            raise ReportError(f"line {lineno}: replay expects 'do <event>' lines")
        outcome = env.step(parts[1])
        states.append(outcome.flight_state)
    return states
