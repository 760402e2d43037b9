"""The refinement loop: initialize, ground, verify, refine, gate, stop.

Answer flips happen only through gate_update; every other stage merely
proposes. Gold labels are stripped from the working sample before any
backend sees it, so label leakage is structurally impossible.
"""

from __future__ import annotations

import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

from .backends import (
    BackendUnavailable,
    Backends,
    ChatRequest,
    MalformedResponse,
)
from .config import GateConfig
from .evidence import EvidenceRegistry, RoundEvidenceBuilder, claimed_count_from_text
from .grounding import GroundingClient
from .model import (
    BinaryAnswer,
    CheckStatus,
    Claim,
    ClaimCheck,
    ClaimType,
    COLOR_WORDS,
    GateDecision,
    InitResult,
    RoundRecord,
    RunTrace,
    Sample,
    SPATIAL_WORDS,
    StopReason,
    TARGET_STOPWORDS,
    VerificationReport,
    YesGuardAnswer,
    YesGuardConfidence,
    YesGuardResult,
    normalize_target,
    validate_claim,
)
from .parsing import ParseFailure, SchemaViolation, parse_init, parse_refine, parse_yes_guard
from .prompts import (
    Part,
    build_init_prompt,
    build_refine_prompt,
    build_yes_guard_prompt,
    route_claim_type,
)
from .verification import consolidate, verify_round

MAX_PRIORITY = 10

_FILLER_WORDS = frozenset(
    "is are was were there any a an the in on at of to this that these those "
    "image picture photo scene does do did can could you see how what which "
    "where it its their his her and or with".split()
)


def _candidate_nouns(question: str) -> list[str]:
    tokens = re.findall(r"[a-zA-Z]+", question.lower())
    return [t for t in tokens if t not in _FILLER_WORDS and t not in TARGET_STOPWORDS]


def fallback_claim(question: str, expected_type: ClaimType, claim_id: str = "c1") -> Claim:
    """Routing-rule claim for when the initializer output is unusable."""
    nouns = _candidate_nouns(question) or ["object"]
    tokens = set(re.findall(r"[a-zA-Z]+", question.lower()))
    if expected_type is ClaimType.POSITION:
        targets = (nouns[0], nouns[-1]) if len(nouns) >= 2 else (nouns[0],)
        spatial = next((w for w in tokens if w in SPATIAL_WORDS), "left")
        if len(targets) == 2:
            text = f"The {targets[0]} is {spatial} of the {targets[1]}."
        else:
            text = f"The {targets[0]} is at the {spatial} of the image."
        return Claim(id=claim_id, ctype=expected_type, text=text, targets=targets)
    target = nouns[-1]
    if expected_type is ClaimType.COUNT:
        n = claimed_count_from_text(question)
        n = 1 if n is None else n
        text = f"The image contains {n} {target}."
    elif expected_type is ClaimType.COLOR:
        color = next((w for w in tokens if w in COLOR_WORDS), "red")
        text = f"The {target} is {color}."
    else:
        text = f"A {target} appears in the image."
    return Claim(id=claim_id, ctype=expected_type, text=text, targets=(target,))


def _claim_usable(claim: Claim, expected_type: ClaimType, cfg: GateConfig) -> bool:
    if claim.ctype is not expected_type:
        return False
    if not validate_claim(claim, frozenset(cfg.extra_target_stopwords)).ok:
        return False
    try:
        claim.target_keys()
    except ValueError:
        return False
    return True


_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def _direct_answer(sample: Sample, backends: Backends, notes: list[str]) -> BinaryAnswer:
    prompt = (
        'Answer the question about the image with exactly "Yes" or "No".\n'
        f'Question: "{sample.question}"'
    )
    from .backends import ChatMessage

    request = ChatRequest(
        messages=(ChatMessage("user", (Part("image", sample.image_ref), Part("text", prompt))),),
        max_tokens=8,
    )
    try:
        reply = backends.initializer.chat(request).text
    except (BackendUnavailable, MalformedResponse):
        notes.append("fallback_answer_default: direct query failed")
        return BinaryAnswer.NO
    match = _YES_NO_RE.search(reply)
    if match:
        return BinaryAnswer.parse(match.group(1))
    notes.append("fallback_answer_default: direct reply had no yes/no token")
    return BinaryAnswer.NO


@dataclass
class InitOutcome:
    answer: BinaryAnswer
    claim: Claim
    yes_guard: Optional[YesGuardResult]
    notes: list[str]


def initialize(
    sample: Sample,
    backends: Backends,
    cfg: GateConfig,
    expected_type: ClaimType,
) -> InitOutcome:
    """Initial answer plus the first verifiable claim, with one re-ask and a
    deterministic fallback path when the model output is unusable.
    """
    notes: list[str] = []
    bundle = build_init_prompt(sample, expected_type)
    request = ChatRequest.from_bundle(bundle)
    result: Optional[InitResult] = None
    for attempt in range(2):
        response = backends.initializer.chat(request)
        try:
            parsed, repaired = parse_init(response.text)
        except (ParseFailure, SchemaViolation) as exc:
            notes.append(f"init attempt {attempt + 1} unparseable: {exc}")
            continue
        if repaired:
            notes.append("init output repaired")
        claim = parsed.claims[0]
        if not _claim_usable(claim, expected_type, cfg):
            notes.append(f"init claim {claim.id!r} violates claim rules")
            continue
        result = parsed
        break
    if result is None:
        notes.append("fallback_init")
        answer = _direct_answer(sample, backends, notes)
        claim = fallback_claim(sample.question, expected_type)
    else:
        answer = result.answer
        claim = result.claims[0]

    yes_guard: Optional[YesGuardResult] = None
    if answer is BinaryAnswer.YES and cfg.enable_yes_guard:
        guard_bundle = build_yes_guard_prompt(sample, target_hint=claim.targets[0])
        try:
            guard_text = backends.initializer.chat(ChatRequest.from_bundle(guard_bundle)).text
            yes_guard, _ = parse_yes_guard(guard_text)
        except (ParseFailure, SchemaViolation) as exc:
            notes.append(f"yes-guard unparseable: {exc}")
        if (
            yes_guard is not None
            and yes_guard.answer is YesGuardAnswer.NO
            and yes_guard.confidence is YesGuardConfidence.HIGH
        ):
            claim = replace(claim, priority=MAX_PRIORITY)
            notes.append("initial_answer_low_trust: yes-guard voted no/high")
    return InitOutcome(answer=answer, claim=claim, yes_guard=yes_guard, notes=notes)


def _gate_of(check: ClaimCheck, cfg: GateConfig) -> float:
    if check.ctype is not None:
        return cfg.gate_threshold[check.ctype]
    return min(cfg.gate_threshold.values())


def gate_update(
    prev: BinaryAnswer,
    proposed: BinaryAnswer,
    report: VerificationReport,
    cfg: GateConfig,
) -> tuple[BinaryAnswer, GateDecision]:
    """Evidence gate: a change of answer needs a confident, cited verdict."""
    if not cfg.use_gating:
        if proposed == prev:
            return prev, (
                GateDecision.KEPT_SUPPORTED
                if report.verdict is CheckStatus.SUPPORTED
                else GateDecision.KEPT_NO_TRIGGER
            )
        return proposed, GateDecision.FLIPPED
    if proposed == prev:
        if report.verdict is CheckStatus.SUPPORTED:
            return prev, GateDecision.KEPT_SUPPORTED
        return prev, GateDecision.KEPT_NO_TRIGGER

    if report.verdict is CheckStatus.CONTRADICTED:
        # Consolidation already required confidence and citations.
        return proposed, GateDecision.FLIPPED
    if report.verdict is CheckStatus.SUPPORTED:
        # Symmetric case: confidently supported claims entitle the refiner's
        # opposite answer (e.g. an initial No refuted by a present object).
        if cfg.require_citations_for_flip and any(
            not c.citations for c in report.checked
        ):
            return prev, GateDecision.KEPT_NO_CITATION
        return proposed, GateDecision.FLIPPED

    # Insufficient verdict. Without the citation requirement, a confident
    # contradiction that lost its citations may still flip.
    if not cfg.require_citations_for_flip:
        for check in report.checked:
            was_contradicted = (
                check.status is CheckStatus.CONTRADICTED
                or check.status_before_citation_check is CheckStatus.CONTRADICTED
            )
            if was_contradicted and check.confidence >= _gate_of(check, cfg):
                return proposed, GateDecision.FLIPPED
    blocked_by_citation = False
    for check in report.checked:
        confident = check.confidence >= _gate_of(check, cfg)
        if not confident:
            continue
        if check.status_before_citation_check is not None:
            blocked_by_citation = True
        elif check.status is CheckStatus.CONTRADICTED and not check.citations:
            blocked_by_citation = True
    if blocked_by_citation:
        return prev, GateDecision.KEPT_NO_CITATION
    return prev, GateDecision.KEPT_BELOW_GATE


def next_claims(
    report: VerificationReport,
    proposed: Sequence[Claim],
    history: Sequence[Claim],
    expected_type: ClaimType,
    cfg: GateConfig,
    notes: list[str],
) -> list[Claim]:
    """Select the next round's claims: contradiction-implicated first, then
    still-uncertain ones, then by priority; duplicates of history trigger the
    reuse path.
    """
    usable = []
    for claim in proposed:
        if _claim_usable(claim, expected_type, cfg):
            usable.append(claim)
        else:
            notes.append(f"refiner claim {claim.id!r} rejected by claim rules")

    status_by_tkeys: dict[str, CheckStatus] = {}
    claims_by_id = {c.id: c for c in history}
    for check in report.checked:
        claim = claims_by_id.get(check.claim_id)
        if claim is None:
            continue
        for tkey in claim.target_keys():
            status_by_tkeys[tkey] = check.status

    def rank(claim: Claim) -> tuple:
        statuses = {status_by_tkeys.get(t) for t in claim.target_keys()}
        if CheckStatus.CONTRADICTED in statuses:
            bucket = 0
        elif CheckStatus.INSUFFICIENT in statuses:
            bucket = 1
        else:
            bucket = 2
        return (bucket, -claim.priority)

    usable.sort(key=rank)
    seen = {c.dedup_key() for c in history}
    fresh = [c for c in usable if c.dedup_key() not in seen]
    if fresh:
        return fresh[:1]

    notes.append("claims_reused: refiner proposed no novel claim")
    unresolved = [
        claims_by_id[check.claim_id]
        for check in report.checked
        if check.status is CheckStatus.INSUFFICIENT and check.claim_id in claims_by_id
    ]
    pool = unresolved or list(history)
    best = max(pool, key=lambda c: c.priority)
    return [best]


def should_stop(
    rounds: Sequence[RoundRecord], cfg: GateConfig, registry: EvidenceRegistry
) -> Optional[StopReason]:
    k = cfg.stable_supported_rounds
    if len(rounds) >= k:
        tail = rounds[-k:]
        if all(r.report.verdict is CheckStatus.SUPPORTED for r in tail) and (
            len({r.answer_after for r in tail}) == 1
        ):
            return StopReason.STABLE_SUPPORTED
    if len(rounds) >= cfg.max_rounds:
        return StopReason.MAX_ROUNDS
    if len(rounds) >= 2:
        last, prev = rounds[-1], rounds[-2]
        if (
            not registry.new_ids_in_round(last.round)
            and last.report.verdict is prev.report.verdict
            and last.answer_after == prev.answer_after
        ):
            return StopReason.NO_STRONGER_EVIDENCE
    return None


def _history_digest(rounds: Sequence[RoundRecord]) -> list[dict]:
    return [
        {
            "round": r.round,
            "claims": [c.text for c in r.claims],
            "verdict": r.report.verdict.value,
            "answer_before": r.answer_before.value,
            "answer_after": r.answer_after.value,
            "gate_decision": r.gate_decision.value,
        }
        for r in rounds
    ]


def _disabled_report(claims: Sequence[Claim], round_num: int) -> VerificationReport:
    checks = [
        ClaimCheck(
            claim_id=c.id,
            status=CheckStatus.INSUFFICIENT,
            confidence=0.0,
            why="claim verification disabled",
            ctype=c.ctype,
        )
        for c in claims
    ]
    return VerificationReport(
        verdict=CheckStatus.INSUFFICIENT, checked=checks, round=round_num
    )


class _StageTimer:
    def __init__(self) -> None:
        self.laps: dict[str, int] = {}

    def time(self, stage: str):
        timer = self

        class _Lap:
            def __enter__(self):
                self.start = time.monotonic()

            def __exit__(self, *exc):
                timer.laps[stage] = timer.laps.get(stage, 0) + int(
                    (time.monotonic() - self.start) * 1000
                )

        return _Lap()


def run_sample(
    sample: Sample,
    backends: Backends,
    cfg: GateConfig,
    expected_type: Optional[ClaimType] = None,
) -> RunTrace:
    """Full loop over one sample; never raises, failures become trace states."""
    cfg.validate()
    work = replace(sample, gold_label=None)  # pipeline never sees the label
    ctype = expected_type or route_claim_type(work.question)
    registry = EvidenceRegistry()
    notes: list[str] = []

    try:
        init = initialize(work, backends, cfg, ctype)
    except (BackendUnavailable, MalformedResponse) as exc:
        notes.append(f"early_error at initialize: {exc}")
        answer = BinaryAnswer.NO
        return RunTrace(
            sample_id=work.sample_id,
            question=work.question,
            initial_answer=answer,
            expected_claim_type=ctype,
            final_answer=answer,
            stop_reason=StopReason.EARLY_ERROR,
            notes=notes,
            config_hash=cfg.config_hash(),
        )
    notes.extend(init.notes)

    trace = RunTrace(
        sample_id=work.sample_id,
        question=work.question,
        initial_answer=init.answer,
        expected_claim_type=ctype,
        final_answer=init.answer,
        stop_reason=StopReason.MAX_ROUNDS,
        yes_guard=init.yes_guard,
        notes=notes,
        config_hash=cfg.config_hash(),
    )

    grounder: Optional[GroundingClient] = None
    builder: Optional[RoundEvidenceBuilder] = None
    if cfg.use_grounding:
        try:
            grounder = GroundingClient(backends.grounder, work.image_ref)
        except Exception as exc:
            trace.notes.append(f"early_error creating grounding client: {exc}")
            trace.stop_reason = StopReason.EARLY_ERROR
            trace.final_answer = init.answer
            return trace
        builder = RoundEvidenceBuilder(
            registry, cfg, grounder.image, observer=backends.color_observer
        )

    answer = init.answer
    claims = [init.claim]
    all_claims: list[Claim] = []
    prev_report: Optional[VerificationReport] = None

    for round_num in range(1, cfg.max_rounds + 1):
        timer = _StageTimer()
        round_notes: list[str] = []
        all_claims.extend(claims)

        try:
            results = {}
            artifacts = {}
            if grounder is not None and builder is not None:
                with timer.time("ground"):
                    for claim in claims:
                        for phrase in claim.targets:
                            tkey = normalize_target(phrase)
                            if tkey in results:
                                continue
                            result = grounder.ground(phrase, claim.ctype, cfg)
                            results[tkey] = result
                            artifacts[tkey] = grounder.render_artifacts(result, cfg)
                with timer.time("evidence"):
                    for claim in claims:
                        builder.build(round_num, claim, results, artifacts)
                    if builder.notes:
                        round_notes.extend(builder.notes)
                        builder.notes.clear()

            with timer.time("verify"):
                if cfg.use_claim_verification:
                    report = verify_round(
                        work.question,
                        claims,
                        registry,
                        round_num,
                        backends.judge,
                        cfg,
                        prev_report if cfg.use_history else None,
                    )
                else:
                    report = _disabled_report(claims, round_num)
                    round_notes.append("claim verification disabled")

            with timer.time("refine"):
                history = _history_digest(trace.rounds)
                current_ctx = {
                    "claims": [c.to_dict() for c in claims],
                    "verify": report.to_dict(),
                }
                refine_bundle = build_refine_prompt(
                    work,
                    ctype,
                    answer,
                    history,
                    current_ctx,
                    use_history=cfg.use_history,
                )
                refine_text = backends.refiner.chat(
                    ChatRequest.from_bundle(refine_bundle)
                ).text
                try:
                    refine_result, refine_repaired = parse_refine(refine_text)
                    proposed = refine_result.answer
                    proposed_claims = list(refine_result.new_claims)
                    if refine_repaired:
                        round_notes.append("refine output repaired")
                except (ParseFailure, SchemaViolation) as exc:
                    round_notes.append(f"refine unparseable, keeping answer: {exc}")
                    proposed = answer
                    proposed_claims = []
        except (BackendUnavailable, MalformedResponse) as exc:
            trace.notes.append(f"early_error in round {round_num}: {exc}")
            trace.stop_reason = StopReason.EARLY_ERROR
            trace.final_answer = answer
            trace.evidence = registry.all_items()
            return trace

        new_answer, decision = gate_update(answer, proposed, report, cfg)
        record = RoundRecord(
            round=round_num,
            claims=list(claims),
            evidence_ids=list(registry.round_index.get(round_num, [])),
            report=report,
            answer_before=answer,
            proposed_answer=proposed,
            answer_after=new_answer,
            gate_decision=decision,
            latency_ms=timer.laps,
            notes=round_notes,
        )
        trace.rounds.append(record)
        answer = new_answer
        prev_report = report

        reason = should_stop(trace.rounds, cfg, registry)
        if reason is not None:
            trace.stop_reason = reason
            break

        claims = next_claims(report, proposed_claims, all_claims, ctype, cfg, round_notes)

    trace.final_answer = answer
    trace.evidence = registry.all_items()
    return trace


def regate_trace(
    trace: RunTrace, cfg: GateConfig
) -> tuple[BinaryAnswer, list[GateDecision]]:
    """Re-run consolidation and gating over a stored trace under a different
    config; pure function of the recorded checks.
    """
    answer = trace.initial_answer
    decisions: list[GateDecision] = []
    for record in trace.rounds:
        checks = record.report.checked
        ctype_of = {c.id: c.ctype for c in record.claims}
        verdict = consolidate(checks, cfg, ctype_of) if checks else CheckStatus.INSUFFICIENT
        shadow = VerificationReport(
            verdict=verdict,
            checked=checks,
            round=record.round,
            repaired=record.report.repaired,
            judge_verdict=record.report.judge_verdict,
        )
        answer, decision = gate_update(answer, record.proposed_answer, shadow, cfg)
        decisions.append(decision)
    return answer, decisions


def run_many(
    samples: Sequence[Sample],
    backends_for: Callable[[Sample], Backends],
    cfg: GateConfig,
    workers: int = 4,
    expected_type: Optional[ClaimType] = None,
    sink: Optional[Callable[[RunTrace], None]] = None,
) -> list[RunTrace]:
    """Bounded-parallel batch; trace emission is serialized; result order
    matches input order.
    """
    results: list[Optional[RunTrace]] = [None] * len(samples)
    lock = threading.Lock()

    def work(index: int, sample: Sample) -> None:
        trace = run_sample(sample, backends_for(sample), cfg, expected_type)
        with lock:
            results[index] = trace
            if sink is not None:
                sink(trace)

    if workers <= 1:
        for i, sample in enumerate(samples):
            work(i, sample)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(work, i, s) for i, s in enumerate(samples)]
            for future in futures:
                future.result()
    return [t for t in results if t is not None]
