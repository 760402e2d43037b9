"""Shared domain types: samples, answers, claims, evidence, verdicts, traces.

Everything here is a plain value type with dict round-tripping; no I/O.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

SCHEMA_VERSION = 1


class InvalidTarget(ValueError):
    """A target phrase normalized to the empty string."""


class BinaryAnswer(str, Enum):
    YES = "Yes"
    NO = "No"

    def flipped(self) -> "BinaryAnswer":
        return BinaryAnswer.NO if self is BinaryAnswer.YES else BinaryAnswer.YES

    @classmethod
    def parse(cls, raw: str) -> "BinaryAnswer":
        """Accepts the exact token case-insensitively ("Yes", "no", "YES")."""
        token = str(raw).strip().lower()
        if token == "yes":
            return cls.YES
        if token == "no":
            return cls.NO
        raise ValueError(f"not a binary answer: {raw!r}")


class ClaimType(str, Enum):
    EXISTENCE = "existence"
    COUNT = "count"
    COLOR = "color"
    POSITION = "position"


class CheckStatus(str, Enum):
    SUPPORTED = "supported"
    CONTRADICTED = "contradicted"
    INSUFFICIENT = "insufficient"


class GateDecision(str, Enum):
    KEPT_NO_TRIGGER = "kept_no_trigger"
    KEPT_BELOW_GATE = "kept_below_gate"
    KEPT_NO_CITATION = "kept_no_citation"
    FLIPPED = "flipped"
    KEPT_SUPPORTED = "kept_supported"


class StopReason(str, Enum):
    STABLE_SUPPORTED = "stable_supported"
    MAX_ROUNDS = "max_rounds"
    NO_STRONGER_EVIDENCE = "no_stronger_evidence"
    EARLY_ERROR = "early_error"


class EvidenceKind(str, Enum):
    SEG_OVERLAY = "seg_overlay"
    CROP_ZOOM = "crop_zoom"
    COUNT_TEXT = "count_text"
    COUNT_COMPARE_TEXT = "count_compare_text"
    COUNT_VISION_TEXT = "count_vision_text"
    COUNT_VISION_COMPARE_TEXT = "count_vision_compare_text"
    COLOR_TEXT = "color_text"
    POSITION_TEXT = "position_text"
    POSITION_RELATION_TEXT = "position_relation_text"
    EXISTENCE_TEXT = "existence_text"


IMAGE_EVIDENCE_KINDS = frozenset({EvidenceKind.SEG_OVERLAY, EvidenceKind.CROP_ZOOM})

# Evidence kinds scoped to a claim id instead of a target key.
CLAIM_SCOPED_KINDS = frozenset({EvidenceKind.POSITION_RELATION_TEXT})


def normalize_target(phrase: str) -> str:
    """Deterministic key for a target phrase: lowercase, spaces to "_",
    everything but [a-z0-9_] stripped. Idempotent.
    """
    key = phrase.strip().lower()
    key = re.sub(r"\s+", "_", key)
    key = re.sub(r"[^a-z0-9_]", "", key)
    if not key:
        raise InvalidTarget(f"target phrase {phrase!r} is empty after normalization")
    return key


@dataclass(frozen=True)
class Sample:
    """One (image, yes/no question) input.

    gold_label is evaluation-only; the engine blanks it before any pipeline
    stage runs (see engine.run_sample).
    """

    sample_id: str
    image_ref: Any
    question: str
    gold_label: Optional[BinaryAnswer] = None
    benchmark_meta: Optional[dict] = None

    def __post_init__(self) -> None:
        if not self.question or not self.question.strip():
            raise ValueError("question must be non-empty")


@dataclass(frozen=True)
class Claim:
    """A single visually checkable proposition anchored to 1-2 entities."""

    id: str
    ctype: ClaimType
    text: str
    targets: tuple[str, ...]
    priority: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))

    def target_keys(self) -> tuple[str, ...]:
        return tuple(normalize_target(t) for t in self.targets)

    def dedup_key(self) -> tuple:
        text = re.sub(r"\s+", " ", self.text.strip().lower()).rstrip(".!?")
        return (self.ctype.value, self.target_keys(), text)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": self.ctype.value,
            "text": self.text,
            "targets": list(self.targets),
            "priority": self.priority,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Claim":
        return cls(
            id=d["id"],
            ctype=ClaimType(d["type"]),
            text=d["text"],
            targets=tuple(d["targets"]),
            priority=int(d.get("priority", 1)),
        )


# Lexical stop-lists for target validation. Non-position targets must be bare
# object nouns: no color, number, position, or quantifier words.
COLOR_WORDS = frozenset(
    "white black red green yellow blue brown orange pink purple gray grey "
    "cyan magenta silver gold golden beige violet".split()
)
NUMBER_WORDS = frozenset(
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty".split()
)
SPATIAL_WORDS = frozenset(
    "left right top bottom above below behind front under over beside near "
    "middle center upper lower inside outside next between".split()
)
QUANTIFIER_WORDS = frozenset(
    "many few several some all every any no most multiple single both numerous".split()
)
TARGET_STOPWORDS = COLOR_WORDS | NUMBER_WORDS | SPATIAL_WORDS | QUANTIFIER_WORDS


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[Violation, ...] = ()


def validate_claim(claim: Claim, extra_stopwords: frozenset[str] = frozenset()) -> ValidationResult:
    """Mechanical re-check of the claim contract.

    Violations are data, not faults: target-count rules, the bare-noun lexical
    rule for non-position targets, non-empty text, positive priority.
    """
    violations: list[Violation] = []
    if not claim.text.strip():
        violations.append(Violation("empty_text", "claim text is empty"))
    if claim.priority < 1:
        violations.append(Violation("priority", f"priority must be >= 1, got {claim.priority}"))

    n = len(claim.targets)
    if claim.ctype is ClaimType.POSITION:
        if n not in (1, 2):
            violations.append(
                Violation("target_count", f"position claims take 1-2 targets, got {n}")
            )
    elif n != 1:
        violations.append(
            Violation("target_count", f"{claim.ctype.value} claims take exactly 1 target, got {n}")
        )

    stop = TARGET_STOPWORDS | extra_stopwords
    for target in claim.targets:
        if not target.strip():
            violations.append(Violation("empty_target", "target phrase is empty"))
            continue
        if claim.ctype is ClaimType.POSITION:
            continue  # position targets may keep distinguishing modifiers
        for token in re.findall(r"[a-zA-Z]+|\d+", target.lower()):
            if token.isdigit() or token in stop:
                violations.append(
                    Violation(
                        "attribute_word_in_target",
                        f"target {target!r} contains attribute word {token!r}",
                    )
                )
                break
    return ValidationResult(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class EvidenceItem:
    """A cited, typed piece of evidence with a stable id.

    payload is the evidence text for textual kinds, or an image handle
    (in memory) / artifact path (serialized) for image kinds.
    """

    id: str
    etype: EvidenceKind
    payload: Any
    target: Optional[str] = None
    claim_id: Optional[str] = None
    round: int = 0

    @property
    def is_image(self) -> bool:
        return self.etype in IMAGE_EVIDENCE_KINDS

    def to_dict(self, image_saver: Optional[Callable[[Any], str]] = None) -> dict:
        if self.is_image and not isinstance(self.payload, str):
            payload = image_saver(self.payload) if image_saver else None
        else:
            payload = self.payload
        return {
            "id": self.id,
            "etype": self.etype.value,
            "payload": payload,
            "target": self.target,
            "claim_id": self.claim_id,
            "round": self.round,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceItem":
        return cls(
            id=d["id"],
            etype=EvidenceKind(d["etype"]),
            payload=d.get("payload"),
            target=d.get("target"),
            claim_id=d.get("claim_id"),
            round=int(d.get("round", 0)),
        )


@dataclass
class ClaimCheck:
    """The judge's ruling on one claim after citation validation."""

    claim_id: str
    status: CheckStatus
    confidence: float
    why: str = ""
    citations: tuple[str, ...] = ()
    ctype: Optional[ClaimType] = None
    # Set when validate_citations downgraded a decisive status for lacking
    # any registered citation; kept for gate diagnostics and re-gating.
    status_before_citation_check: Optional[CheckStatus] = None

    def __post_init__(self) -> None:
        self.citations = tuple(self.citations)

    def to_dict(self) -> dict:
        d = {
            "claim_id": self.claim_id,
            "status": self.status.value,
            "confidence": self.confidence,
            "why": self.why,
            "citations": list(self.citations),
        }
        if self.ctype is not None:
            d["ctype"] = self.ctype.value
        if self.status_before_citation_check is not None:
            d["status_before_citation_check"] = self.status_before_citation_check.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClaimCheck":
        before = d.get("status_before_citation_check")
        return cls(
            claim_id=d["claim_id"],
            status=CheckStatus(d["status"]),
            confidence=float(d["confidence"]),
            why=d.get("why", ""),
            citations=tuple(d.get("citations", ())),
            ctype=ClaimType(d["ctype"]) if d.get("ctype") else None,
            status_before_citation_check=CheckStatus(before) if before else None,
        )


@dataclass
class VerificationReport:
    """Per-claim checks plus the locally consolidated top verdict.

    judge_verdict is the model's own top-level field, recorded as telemetry
    and never used for decisions.
    """

    verdict: CheckStatus
    checked: list[ClaimCheck]
    round: int
    repaired: bool = False
    judge_verdict: Optional[CheckStatus] = None
    citation_violations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "checked": [c.to_dict() for c in self.checked],
            "round": self.round,
            "repaired": self.repaired,
            "judge_verdict": self.judge_verdict.value if self.judge_verdict else None,
            "citation_violations": list(self.citation_violations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        return cls(
            verdict=CheckStatus(d["verdict"]),
            checked=[ClaimCheck.from_dict(c) for c in d["checked"]],
            round=int(d["round"]),
            repaired=bool(d.get("repaired", False)),
            judge_verdict=CheckStatus(d["judge_verdict"]) if d.get("judge_verdict") else None,
            citation_violations=tuple(d.get("citation_violations", ())),
        )


class YesGuardAnswer(str, Enum):
    YES = "yes"
    NO = "no"
    UNCLEAR = "unclear"


class YesGuardConfidence(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


@dataclass(frozen=True)
class YesGuardResult:
    answer: YesGuardAnswer
    confidence: YesGuardConfidence
    reason: str

    def to_dict(self) -> dict:
        return {
            "answer": self.answer.value,
            "confidence": self.confidence.value,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "YesGuardResult":
        return cls(
            answer=YesGuardAnswer(d["answer"]),
            confidence=YesGuardConfidence(d["confidence"]),
            reason=d["reason"],
        )


@dataclass(frozen=True)
class InitResult:
    answer: BinaryAnswer
    claims: tuple[Claim, ...]

    def to_dict(self) -> dict:
        return {
            "answer": self.answer.value,
            "verifiable_claims": [c.to_dict() for c in self.claims],
        }


@dataclass(frozen=True)
class RefineResult:
    answer: BinaryAnswer
    new_claims: tuple[Claim, ...]

    def to_dict(self) -> dict:
        return {
            "Answer": self.answer.value,
            "new_claims": [c.to_dict() for c in self.new_claims],
        }


@dataclass
class RoundRecord:
    """Everything one refinement round produced."""

    round: int
    claims: list[Claim]
    evidence_ids: list[str]
    report: VerificationReport
    answer_before: BinaryAnswer
    proposed_answer: BinaryAnswer
    answer_after: BinaryAnswer
    gate_decision: GateDecision
    latency_ms: dict[str, int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "claims": [c.to_dict() for c in self.claims],
            "evidence_ids": list(self.evidence_ids),
            "report": self.report.to_dict(),
            "answer_before": self.answer_before.value,
            "proposed_answer": self.proposed_answer.value,
            "answer_after": self.answer_after.value,
            "gate_decision": self.gate_decision.value,
            "latency_ms": dict(self.latency_ms),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(
            round=int(d["round"]),
            claims=[Claim.from_dict(c) for c in d["claims"]],
            evidence_ids=list(d["evidence_ids"]),
            report=VerificationReport.from_dict(d["report"]),
            answer_before=BinaryAnswer(d["answer_before"]),
            proposed_answer=BinaryAnswer(d["proposed_answer"]),
            answer_after=BinaryAnswer(d["answer_after"]),
            gate_decision=GateDecision(d["gate_decision"]),
            latency_ms={k: int(v) for k, v in d.get("latency_ms", {}).items()},
            notes=list(d.get("notes", [])),
        )


@dataclass
class RunTrace:
    """Full stateful history of one sample run; self-contained for replay."""

    sample_id: str
    question: str
    initial_answer: BinaryAnswer
    expected_claim_type: ClaimType
    final_answer: BinaryAnswer
    stop_reason: StopReason
    yes_guard: Optional[YesGuardResult] = None
    rounds: list[RoundRecord] = field(default_factory=list)
    evidence: list[EvidenceItem] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    config_hash: Optional[str] = None

    def cited_ids(self) -> set[str]:
        ids: set[str] = set()
        for rec in self.rounds:
            for check in rec.report.checked:
                ids.update(check.citations)
        return ids

    def to_dict(self, image_saver: Optional[Callable[[Any], str]] = None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "sample_id": self.sample_id,
            "question": self.question,
            "initial_answer": self.initial_answer.value,
            "expected_claim_type": self.expected_claim_type.value,
            "final_answer": self.final_answer.value,
            "stop_reason": self.stop_reason.value,
            "yes_guard": self.yes_guard.to_dict() if self.yes_guard else None,
            "rounds": [r.to_dict() for r in self.rounds],
            "evidence": [e.to_dict(image_saver) for e in self.evidence],
            "notes": list(self.notes),
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunTrace":
        return cls(
            sample_id=d["sample_id"],
            question=d["question"],
            initial_answer=BinaryAnswer(d["initial_answer"]),
            expected_claim_type=ClaimType(d["expected_claim_type"]),
            final_answer=BinaryAnswer(d["final_answer"]),
            stop_reason=StopReason(d["stop_reason"]),
            yes_guard=YesGuardResult.from_dict(d["yes_guard"]) if d.get("yes_guard") else None,
            rounds=[RoundRecord.from_dict(r) for r in d.get("rounds", [])],
            evidence=[EvidenceItem.from_dict(e) for e in d.get("evidence", [])],
            notes=list(d.get("notes", [])),
            config_hash=d.get("config_hash"),
        )
