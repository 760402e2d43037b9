"""Prompt assembly for the four template families.

Templates live as resource files with {name} placeholders; substitution
touches only known placeholder names so literal JSON braces in the
templates survive untouched. Lines whose optional placeholder has no value
are dropped whole.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional, Sequence

from .model import (
    BinaryAnswer,
    Claim,
    ClaimType,
    COLOR_WORDS,
    EvidenceItem,
    EvidenceKind,
    NUMBER_WORDS,
    SPATIAL_WORDS,
    VerificationReport,
)

TEMPLATE_IDS = ("init", "yes_guard", "verify", "refine")

# Full placeholder grammar; OPTIONAL ones drop their line when absent.
PLACEHOLDERS = frozenset(
    {
        "question",
        "expected_claim_type",
        "example_targets",
        "prev_summary",
        "target_hint",
        "claims_json",
        "prev_verdict_json",
        "previous_answer",
        "round_history_json",
        "current_round_context_json",
    }
)
OPTIONAL_PLACEHOLDERS = frozenset({"prev_summary", "prev_verdict_json"})


class UnknownEvidenceKind(ValueError):
    """Evidence item carries a kind the prompt serializer cannot render."""


class UnsubstitutedPlaceholder(ValueError):
    """A required placeholder was left unfilled."""


@dataclass(frozen=True)
class Part:
    kind: str  # "text" | "image"
    payload: Any


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[Part, ...]
    template_id: str
    substitutions: dict = field(default_factory=dict)

    def text(self) -> str:
        return "\n".join(p.payload for p in self.messages if p.kind == "text")

    def images(self) -> list[Any]:
        return [p.payload for p in self.messages if p.kind == "image"]


def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise ValueError(f"unknown template id {template_id!r}")
    ref = resources.files("claimgate") / "templates" / f"{template_id}.txt"
    return ref.read_text(encoding="utf-8")


def template_versions() -> dict[str, str]:
    """Content hash per template, recorded in run manifests."""
    return {
        tid: hashlib.sha256(load_template(tid).encode()).hexdigest()[:12]
        for tid in TEMPLATE_IDS
    }


def render_template(template_id: str, values: dict[str, Optional[str]]) -> str:
    """Substitute known placeholders; drop lines for absent optional ones."""
    text = load_template(template_id)
    lines = []
    for line in text.split("\n"):
        names_in_line = [
            name for name in PLACEHOLDERS if "{" + name + "}" in line
        ]
        if any(values.get(n) is None and n in OPTIONAL_PLACEHOLDERS for n in names_in_line):
            continue
        for name in names_in_line:
            value = values.get(name)
            if value is None:
                raise UnsubstitutedPlaceholder(
                    f"template {template_id!r} needs placeholder {name!r}"
                )
            line = line.replace("{" + name + "}", value)
        lines.append(line)
    return "\n".join(lines)


# Question-to-claim-type routing. Precedence: count, then color, then
# position, then existence. Documented default; callers may override.
_WORD_RE = re.compile(r"[a-zA-Z]+|\d+")


def route_claim_type(question: str) -> ClaimType:
    lowered = question.lower()
    tokens = set(_WORD_RE.findall(lowered))
    if "how many" in lowered or any(t.isdigit() for t in tokens) or tokens & NUMBER_WORDS:
        return ClaimType.COUNT
    if tokens & COLOR_WORDS:
        return ClaimType.COLOR
    if tokens & SPATIAL_WORDS:
        return ClaimType.POSITION
    return ClaimType.EXISTENCE


def example_targets_for(ctype: ClaimType) -> str:
    if ctype is ClaimType.POSITION:
        return '["subject", "anchor"]'
    return '["object_name"]'


def build_init_prompt(
    sample, expected_type: ClaimType, prev_summary: Optional[str] = None
) -> PromptBundle:
    values = {
        "question": sample.question,
        "expected_claim_type": expected_type.value,
        "example_targets": example_targets_for(expected_type),
        "prev_summary": prev_summary,
    }
    text = render_template("init", values)
    return PromptBundle(
        messages=(Part("image", sample.image_ref), Part("text", text)),
        template_id="init",
        substitutions=values,
    )


def build_yes_guard_prompt(sample, target_hint: str) -> PromptBundle:
    values = {"question": sample.question, "target_hint": target_hint}
    text = render_template("yes_guard", values)
    return PromptBundle(
        messages=(Part("image", sample.image_ref), Part("text", text)),
        template_id="yes_guard",
        substitutions=values,
    )


def serialize_evidence_parts(evidence: Sequence[EvidenceItem]) -> list[Part]:
    """One text line per item; image items follow their announcement line."""
    parts: list[Part] = []
    for item in evidence:
        if not isinstance(item.etype, EvidenceKind):
            raise UnknownEvidenceKind(f"evidence {item.id} has kind {item.etype!r}")
        if item.is_image:
            parts.append(Part("text", f"[{item.id}] ({item.etype.value}) see attached image"))
            parts.append(Part("image", item.payload))
        else:
            parts.append(Part("text", f"[{item.id}] ({item.etype.value}) {item.payload}"))
    return parts


def build_verify_prompt(
    question: str,
    claims: Sequence[Claim],
    evidence: Sequence[EvidenceItem],
    prev_report: Optional[VerificationReport] = None,
) -> PromptBundle:
    if not claims:
        raise ValueError("verify prompt needs at least one claim")
    evidence_parts = serialize_evidence_parts(evidence)
    legal_ids = ", ".join(item.id for item in evidence) if evidence else "(none)"
    evidence_parts.append(Part("text", f"Legal EvidenceIDs: {legal_ids}"))
    values = {
        "question": question,
        "claims_json": json.dumps([c.to_dict() for c in claims]),
        "prev_verdict_json": json.dumps(prev_report.to_dict()) if prev_report else None,
    }
    text = render_template("verify", values)
    return PromptBundle(
        messages=tuple(evidence_parts) + (Part("text", text),),
        template_id="verify",
        substitutions=values,
    )


def build_refine_prompt(
    sample,
    expected_type: ClaimType,
    prev_answer: BinaryAnswer,
    round_history: list[dict],
    current_round_context: dict,
    use_history: bool = True,
) -> PromptBundle:
    values = {
        "question": sample.question,
        "expected_claim_type": expected_type.value,
        "example_targets": example_targets_for(expected_type),
        "previous_answer": prev_answer.value,
        "round_history_json": json.dumps(round_history if use_history else []),
        "current_round_context_json": json.dumps(current_round_context),
    }
    text = render_template("refine", values)
    return PromptBundle(
        messages=(Part("image", sample.image_ref), Part("text", text)),
        template_id="refine",
        substitutions=values,
    )


def summarize_round(round_num: int, verdict: str, answer: str) -> str:
    """One-line digest used as the next init call's PrevSummary."""
    return f"round {round_num}: top verdict {verdict}, answer {answer}"
