"""Trace persistence: JSONL append/load, artifact externalization, rendering."""

import json

import pytest

from claimgate.model import (
    BinaryAnswer,
    CheckStatus,
    ClaimCheck,
    ClaimType,
    EvidenceItem,
    EvidenceKind,
    GateDecision,
    RoundRecord,
    RunTrace,
    StopReason,
    VerificationReport,
    YesGuardAnswer,
    YesGuardConfidence,
    YesGuardResult,
)
from claimgate.trace import TraceLoadError, append_trace, load_trace_records, load_traces, render_trace

from conftest import make_claim, solid_image


def sample_trace(sample_id="s1", with_image=False, with_guard=False):
    claim = make_claim()
    check = ClaimCheck(
        claim_id="c1",
        status=CheckStatus.SUPPORTED,
        confidence=0.93,
        why="matches segmentation",
        citations=("e_seg_dog",),
        ctype=ClaimType.EXISTENCE,
    )
    report = VerificationReport(
        verdict=CheckStatus.SUPPORTED,
        checked=[check],
        round=1,
        judge_verdict=CheckStatus.SUPPORTED,
        citation_violations=("c1: unknown citation 'e_bogus' removed",),
    )
    evidence = [
        EvidenceItem(
            id="e_seg_dog",
            etype=EvidenceKind.EXISTENCE_TEXT,
            payload="1 instance(s) of 'dog' found (max score 0.99).",
            target="dog",
            round=1,
        )
    ]
    if with_image:
        evidence.append(
            EvidenceItem(
                id="e_crop_dog",
                etype=EvidenceKind.CROP_ZOOM,
                payload=solid_image((10, 200, 30)),
                target="dog",
                round=1,
            )
        )
    rec = RoundRecord(
        round=1,
        claims=[claim],
        evidence_ids=[e.id for e in evidence],
        report=report,
        answer_before=BinaryAnswer.NO,
        proposed_answer=BinaryAnswer.YES,
        answer_after=BinaryAnswer.YES,
        gate_decision=GateDecision.FLIPPED,
        latency_ms={"ground": 12, "verify": 30},
        notes=["round note"],
    )
    guard = None
    if with_guard:
        guard = YesGuardResult(
            answer=YesGuardAnswer.NO,
            confidence=YesGuardConfidence.HIGH,
            reason="no dog segment",
        )
    return RunTrace(
        sample_id=sample_id,
        question="Is there a dog in the image?",
        initial_answer=BinaryAnswer.NO,
        expected_claim_type=ClaimType.EXISTENCE,
        final_answer=BinaryAnswer.YES,
        stop_reason=StopReason.STABLE_SUPPORTED,
        yes_guard=guard,
        rounds=[rec],
        evidence=evidence,
        notes=["run note"],
        config_hash="abc123def456",
    )


class TestAppendLoad:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "runs" / "trace.jsonl"
        append_trace(sample_trace("s1"), path)
        append_trace(sample_trace("s2"), path)
        traces, problems = load_traces(path)
        assert problems == []
        assert [t.sample_id for t in traces] == ["s1", "s2"]
        assert traces[0].to_dict() == sample_trace("s1").to_dict()
        assert traces[0].rounds[0].report.checked[0].citations == ("e_seg_dog",)
        assert traces[0].yes_guard is None

    def test_guard_round_trip(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        append_trace(sample_trace(with_guard=True), path)
        (trace,), _ = load_traces(path)
        assert trace.yes_guard.answer is YesGuardAnswer.NO
        assert trace.yes_guard.confidence is YesGuardConfidence.HIGH

    def test_one_json_object_per_line(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        append_trace(sample_trace("s1"), path)
        append_trace(sample_trace("s2"), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        for line in lines:
            assert isinstance(json.loads(line), dict)

    def test_extra_keys_attached(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        append_trace(sample_trace(), path, extra={"gold_label": "Yes", "scene_seed": 3})
        records, _ = load_trace_records(path)
        assert records[0]["gold_label"] == "Yes"
        assert records[0]["scene_seed"] == 3
        traces, problems = load_traces(path)
        assert problems == []
        assert not hasattr(traces[0], "gold_label")

    def test_extra_collision_rejected(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        with pytest.raises(ValueError, match="sample_id"):
            append_trace(sample_trace(), path, extra={"sample_id": "evil"})
        assert not path.exists()


class TestArtifacts:
    def test_image_payload_externalized(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        art = tmp_path / "artifacts"
        append_trace(sample_trace(with_image=True), path, artifact_dir=art)
        records, _ = load_trace_records(path)
        img_rec = next(e for e in records[0]["evidence"] if e["id"] == "e_crop_dog")
        assert img_rec["payload"].endswith(".png")
        assert (art / img_rec["payload"]).exists()

    def test_artifact_content_addressed(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        art = tmp_path / "artifacts"
        append_trace(sample_trace("s1", with_image=True), path, artifact_dir=art)
        append_trace(sample_trace("s2", with_image=True), path, artifact_dir=art)
        assert len(list(art.glob("*.png"))) == 1  # same pixels, one file

    def test_no_artifact_dir_drops_pixels(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        append_trace(sample_trace(with_image=True), path)
        records, _ = load_trace_records(path)
        img_rec = next(e for e in records[0]["evidence"] if e["id"] == "e_crop_dog")
        assert img_rec["payload"] is None

    def test_text_payloads_inline_either_way(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        append_trace(sample_trace(with_image=True), path, artifact_dir=tmp_path / "a")
        records, _ = load_trace_records(path)
        text_rec = next(e for e in records[0]["evidence"] if e["id"] == "e_seg_dog")
        assert "max score 0.99" in text_rec["payload"]


class TestTolerantLoading:
    def write_mixed(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        good = json.dumps(sample_trace().to_dict())
        path.write_text(good + "\nnot json at all\n\n[1, 2, 3]\n" + good + "\n")
        return path

    def test_bad_lines_become_diagnostics(self, tmp_path):
        path = self.write_mixed(tmp_path)
        records, problems = load_trace_records(path)
        assert len(records) == 2
        assert len(problems) == 2
        assert problems[0].startswith("line 2:")
        assert problems[1].startswith("line 4:")
        assert "not a JSON object" in problems[1]

    def test_strict_raises(self, tmp_path):
        path = self.write_mixed(tmp_path)
        with pytest.raises(TraceLoadError) as exc:
            load_trace_records(path, strict=True)
        assert len(exc.value.problems) == 2

    def test_semantically_broken_record(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        good = json.dumps(sample_trace().to_dict())
        path.write_text(good + "\n" + json.dumps({"sample_id": "s9"}) + "\n")
        traces, problems = load_traces(path)
        assert len(traces) == 1
        assert len(problems) == 1
        assert "record 2 (s9)" in problems[0]

    def test_load_traces_strict(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        path.write_text(json.dumps({"sample_id": "s9"}) + "\n")
        with pytest.raises(TraceLoadError):
            load_traces(path, strict=True)


class TestRenderTrace:
    def test_renders_whole_run(self):
        text = render_trace(sample_trace(with_image=True, with_guard=True))
        assert "sample s1  (config abc123def456)" in text
        assert 'Q: "Is there a dog in the image?"' in text
        assert "initial answer: No" in text
        assert "expected claim type: existence" in text
        assert "yes-guard: no/high (no dog segment)" in text
        assert "round 1:" in text
        assert "ground=12ms" in text and "verify=30ms" in text
        assert 'claim c1 [existence] "A dog appears in the image."' in text
        assert "evidence: e_seg_dog, e_crop_dog" in text
        assert "check c1: supported conf=0.93 cites=[e_seg_dog] matches segmentation" in text
        assert "verdict: supported (judge said: supported, repaired: no)" in text
        assert "citation violation: c1: unknown citation 'e_bogus' removed" in text
        assert "answer: No -> proposed Yes -> Yes  (flipped)" in text
        assert "note: round note" in text
        assert "evidence store: 2 item(s) (1 image, 1 text)" in text
        assert "stopped after 1 round(s): stable_supported; final answer: Yes" in text
        assert "note: run note" in text

    def test_renders_minimal_trace(self):
        trace = RunTrace(
            sample_id="s0",
            question="Is there a cat?",
            initial_answer=BinaryAnswer.NO,
            expected_claim_type=ClaimType.EXISTENCE,
            final_answer=BinaryAnswer.NO,
            stop_reason=StopReason.EARLY_ERROR,
        )
        text = render_trace(trace)
        assert "(config -)" in text
        assert "stopped after 0 round(s): early_error; final answer: No" in text
        assert "yes-guard" not in text
