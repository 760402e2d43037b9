"""Claim verification: judge invocation, citation validation, consolidation.

The judge's own top-level verdict is recorded as telemetry only; the
report's verdict is always recomputed locally from the per-claim checks.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .backends import ChatBackend, ChatRequest
from .config import GateConfig
from .evidence import EvidenceRegistry
from .model import (
    CheckStatus,
    Claim,
    ClaimCheck,
    ClaimType,
    VerificationReport,
)
from .parsing import ParseFailure, SchemaViolation, parse_verify
from .prompts import build_verify_prompt


class EmptyChecks(ValueError):
    """Consolidation requires at least one check."""


def validate_citations(
    checks: Sequence[ClaimCheck], registry: EvidenceRegistry
) -> tuple[list[ClaimCheck], list[str]]:
    """Strip citations that are not registered; a decisive check left with
    none is downgraded to insufficient (confidence kept).
    """
    violations: list[str] = []
    cleaned: list[ClaimCheck] = []
    for check in checks:
        kept = tuple(c for c in check.citations if c in registry)
        for bad in check.citations:
            if bad not in registry:
                violations.append(f"{check.claim_id}: unknown citation {bad!r} removed")
        status = check.status
        before = check.status_before_citation_check
        if not kept and status in (CheckStatus.SUPPORTED, CheckStatus.CONTRADICTED):
            violations.append(
                f"{check.claim_id}: {status.value} without citations downgraded to insufficient"
            )
            before = status
            status = CheckStatus.INSUFFICIENT
        cleaned.append(
            ClaimCheck(
                claim_id=check.claim_id,
                status=status,
                confidence=check.confidence,
                why=check.why,
                citations=kept,
                ctype=check.ctype,
                status_before_citation_check=before,
            )
        )
    return cleaned, violations


def consolidate(
    checks: Sequence[ClaimCheck],
    gates: GateConfig,
    ctype_of: dict[str, ClaimType],
) -> CheckStatus:
    """Top verdict: any confident cited contradiction dominates; supported
    needs every check supported and confident; otherwise insufficient.
    """
    if not checks:
        raise EmptyChecks("consolidate needs at least one check")
    thresholds = gates.gate_threshold
    all_supported = True
    for check in checks:
        ctype = ctype_of.get(check.claim_id) or check.ctype
        if ctype is None:
            raise KeyError(f"no claim type known for check {check.claim_id!r}")
        confident = check.confidence >= thresholds[ctype]
        if check.status is CheckStatus.CONTRADICTED and confident and check.citations:
            return CheckStatus.CONTRADICTED
        if not (check.status is CheckStatus.SUPPORTED and confident):
            all_supported = False
    return CheckStatus.SUPPORTED if all_supported else CheckStatus.INSUFFICIENT


def totalize_checks(
    claims: Sequence[Claim], checks: Sequence[ClaimCheck]
) -> tuple[list[ClaimCheck], list[str]]:
    """Exactly one check per claim: extras dropped, missing synthesized as
    insufficient/0.0, claim types attached.
    """
    notes: list[str] = []
    by_id: dict[str, ClaimCheck] = {}
    claim_ids = {c.id for c in claims}
    for check in checks:
        if check.claim_id not in claim_ids:
            notes.append(f"check for unknown claim {check.claim_id!r} dropped")
            continue
        if check.claim_id in by_id:
            notes.append(f"duplicate check for claim {check.claim_id!r} dropped")
            continue
        by_id[check.claim_id] = check
    out: list[ClaimCheck] = []
    for claim in claims:
        check = by_id.get(claim.id)
        if check is None:
            notes.append(f"claim {claim.id!r} missing from judge output; marked insufficient")
            check = ClaimCheck(
                claim_id=claim.id,
                status=CheckStatus.INSUFFICIENT,
                confidence=0.0,
                why="missing from judge output",
            )
        check.ctype = claim.ctype
        out.append(check)
    return out, notes


def verify_round(
    question: str,
    claims: Sequence[Claim],
    registry: EvidenceRegistry,
    round_num: int,
    judge: ChatBackend,
    cfg: GateConfig,
    prev_report: Optional[VerificationReport] = None,
) -> VerificationReport:
    """One judge pass. Unparseable output degrades to an all-insufficient
    report; backend unavailability propagates to the loop's error handling.
    """
    evidence = registry.round_slice(round_num)
    bundle = build_verify_prompt(question, claims, evidence, prev_report)
    response = judge.chat(ChatRequest.from_bundle(bundle))
    ctype_of = {c.id: c.ctype for c in claims}
    try:
        raw_checks, judge_verdict, repaired = parse_verify(response.text)
    except (ParseFailure, SchemaViolation) as exc:
        checks = [
            ClaimCheck(
                claim_id=c.id,
                status=CheckStatus.INSUFFICIENT,
                confidence=0.0,
                why="judge output unparseable",
                ctype=c.ctype,
            )
            for c in claims
        ]
        return VerificationReport(
            verdict=CheckStatus.INSUFFICIENT,
            checked=checks,
            round=round_num,
            repaired=False,
            judge_verdict=None,
            citation_violations=(f"judge output rejected: {exc}",),
        )
    checks, notes = totalize_checks(claims, raw_checks)
    checks, citation_violations = validate_citations(checks, registry)
    verdict = consolidate(checks, cfg, ctype_of)
    return VerificationReport(
        verdict=verdict,
        checked=checks,
        round=round_num,
        repaired=repaired,
        judge_verdict=judge_verdict,
        citation_violations=tuple(notes + citation_violations),
    )
