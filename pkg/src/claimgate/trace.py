"""Line-oriented trace persistence and human-readable rendering.

One JSON object per line, each self-contained. Image evidence payloads are
written to an artifact directory as content-addressed PNGs and replaced by
their relative path, so trace files stay plain text.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Union

from .imaging import save_artifact
from .model import RunTrace


class TraceLoadError(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def append_trace(
    trace: RunTrace,
    path: Union[str, Path],
    artifact_dir: Optional[Union[str, Path]] = None,
    extra: Optional[dict] = None,
) -> None:
    """Append one trace as a single JSON line, flushed before returning.

    extra lets the caller attach bookkeeping the pipeline must never see,
    e.g. the gold label for later scoring.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    saver = None
    if artifact_dir is not None:
        base = Path(artifact_dir)
        saver = lambda img: str(save_artifact(img, base))
    record = trace.to_dict(image_saver=saver)
    if extra:
        overlap = set(extra) & set(record)
        if overlap:
            raise ValueError(f"extra keys collide with trace fields: {sorted(overlap)}")
        record.update(extra)
    line = json.dumps(record, sort_keys=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_trace_records(
    path: Union[str, Path], strict: bool = False
) -> tuple[list[dict], list[str]]:
    """Raw dicts per line; malformed lines become diagnostics, not crashes."""
    records: list[dict] = []
    problems: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("line is not a JSON object")
            records.append(record)
        except (json.JSONDecodeError, ValueError) as exc:
            problems.append(f"line {lineno}: {exc}")
    if strict and problems:
        raise TraceLoadError(problems)
    return records, problems


def load_traces(
    path: Union[str, Path], strict: bool = False
) -> tuple[list[RunTrace], list[str]]:
    records, problems = load_trace_records(path, strict=False)
    traces: list[RunTrace] = []
    for i, record in enumerate(records):
        try:
            traces.append(RunTrace.from_dict(record))
        except (KeyError, ValueError, TypeError) as exc:
            problems.append(f"record {i + 1} ({record.get('sample_id', '?')}): {exc}")
    if strict and problems:
        raise TraceLoadError(problems)
    return traces, problems


def _fmt_latency(latency: dict) -> str:
    if not latency:
        return ""
    parts = ", ".join(f"{k}={v}ms" for k, v in sorted(latency.items()))
    return f"  [{parts}]"


def render_trace(trace: RunTrace) -> str:
    """Multi-line human dump of one run."""
    lines = [
        f"sample {trace.sample_id}  (config {trace.config_hash or '-'})",
        f'Q: "{trace.question}"',
        f"initial answer: {trace.initial_answer.value}"
        f"   expected claim type: {trace.expected_claim_type.value}",
    ]
    if trace.yes_guard:
        g = trace.yes_guard
        lines.append(f"yes-guard: {g.answer.value}/{g.confidence.value} ({g.reason})")
    for rec in trace.rounds:
        lines.append(f"round {rec.round}:{_fmt_latency(rec.latency_ms)}")
        for claim in rec.claims:
            lines.append(f'  claim {claim.id} [{claim.ctype.value}] "{claim.text}"')
        lines.append(f"  evidence: {', '.join(rec.evidence_ids) or '(none)'}")
        for check in rec.report.checked:
            cites = ", ".join(check.citations) or "-"
            lines.append(
                f"  check {check.claim_id}: {check.status.value}"
                f" conf={check.confidence:.2f} cites=[{cites}] {check.why}"
            )
        judge = rec.report.judge_verdict.value if rec.report.judge_verdict else "-"
        lines.append(
            f"  verdict: {rec.report.verdict.value} (judge said: {judge},"
            f" repaired: {'yes' if rec.report.repaired else 'no'})"
        )
        for violation in rec.report.citation_violations:
            lines.append(f"  citation violation: {violation}")
        lines.append(
            f"  answer: {rec.answer_before.value} -> proposed"
            f" {rec.proposed_answer.value} -> {rec.answer_after.value}"
            f"  ({rec.gate_decision.value})"
        )
        for note in rec.notes:
            lines.append(f"  note: {note}")
    n_img = sum(1 for e in trace.evidence if e.is_image)
    lines.append(
        f"evidence store: {len(trace.evidence)} item(s)"
        f" ({n_img} image, {len(trace.evidence) - n_img} text)"
    )
    lines.append(
        f"stopped after {len(trace.rounds)} round(s): {trace.stop_reason.value};"
        f" final answer: {trace.final_answer.value}"
    )
    for note in trace.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)
