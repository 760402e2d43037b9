import numpy as np
import pytest
from PIL import Image

from claimgate.config import GateConfig
from claimgate.grounding import GroundedInstance, GroundingResult
from claimgate.model import (
    BinaryAnswer,
    CheckStatus,
    Claim,
    ClaimType,
    GateDecision,
    RoundRecord,
    RunTrace,
    StopReason,
    VerificationReport,
)


@pytest.fixture
def cfg() -> GateConfig:
    return GateConfig()


def solid_image(rgb, size=(64, 48)) -> Image.Image:
    return Image.new("RGB", size, tuple(int(c) for c in rgb))


def box_mask(box, width, height) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    x0, y0, x1, y1 = box
    mask[y0:y1, x0:x1] = True
    return mask


def make_instance(box, width=64, height=48, score=0.9) -> GroundedInstance:
    return GroundedInstance(score=score, bbox=tuple(box), mask=box_mask(box, width, height))


def make_result(
    target="dog",
    boxes=((4, 4, 20, 20),),
    scores=None,
    width=64,
    height=48,
    rechecked=False,
    strict=0.5,
    recheck=0.35,
) -> GroundingResult:
    scores = scores or [0.9] * len(boxes)
    instances = tuple(
        make_instance(b, width, height, s) for b, s in zip(boxes, scores)
    )
    return GroundingResult(
        target=target,
        instances=instances,
        threshold_used=recheck if rechecked else strict,
        rechecked=rechecked,
        strict_threshold=strict,
        recheck_threshold=recheck,
    )


def make_claim(
    cid="c1", ctype=ClaimType.EXISTENCE, text="A dog appears in the image.", targets=("dog",),
    priority=1,
) -> Claim:
    return Claim(id=cid, ctype=ctype, text=text, targets=targets, priority=priority)


def make_trace_rounds(sample_id, latencies) -> RunTrace:
    """Trace skeleton with one round per latency dict; metric tests only
    look at rounds and their latency_ms."""
    rounds = []
    for i, latency in enumerate(latencies, 1):
        report = VerificationReport(
            verdict=CheckStatus.SUPPORTED, checked=[], round=i
        )
        rounds.append(
            RoundRecord(
                round=i,
                claims=[make_claim(f"c{i}")],
                evidence_ids=[],
                report=report,
                answer_before=BinaryAnswer.YES,
                proposed_answer=BinaryAnswer.YES,
                answer_after=BinaryAnswer.YES,
                gate_decision=GateDecision.KEPT_SUPPORTED,
                latency_ms=dict(latency),
            )
        )
    return RunTrace(
        sample_id=sample_id,
        question="Is there a dog in the image?",
        initial_answer=BinaryAnswer.YES,
        expected_claim_type=ClaimType.EXISTENCE,
        final_answer=BinaryAnswer.YES,
        stop_reason=StopReason.MAX_ROUNDS,
        rounds=rounds,
    )
