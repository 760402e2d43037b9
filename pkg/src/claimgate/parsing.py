"""Constrained-JSON parsing with a bounded repair ladder.

Model outputs are supposed to be bare JSON; real ones drift. The ladder
tries, in order: strict parse, markdown fence stripping, first balanced
object extraction, then smart-quote / trailing-comma normalization. Any
success past step one is flagged repaired=True and the final text is kept
so callers can re-verify with a strict parser.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Optional, Union

from .model import (
    BinaryAnswer,
    CheckStatus,
    Claim,
    ClaimCheck,
    ClaimType,
    InitResult,
    RefineResult,
    YesGuardAnswer,
    YesGuardConfidence,
    YesGuardResult,
)


class ParseFailure(ValueError):
    """No ladder step produced valid JSON; raw text preserved."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class SchemaViolation(ValueError):
    """JSON parsed but does not fit the expected schema."""

    def __init__(self, fields: list[str], raw: str = ""):
        self.fields = list(fields)
        self.raw = raw
        super().__init__("schema violation: " + ", ".join(self.fields))


@dataclass(frozen=True)
class ParsedJson:
    data: Any
    repaired: bool
    text: str


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n?(.*?)\n?\s*```", re.DOTALL)
_SMART_QUOTES = {
    "“": '"',
    "”": '"',
    "‘": "'",
    "’": "'",
}


def _strip_fences(text: str) -> Optional[str]:
    match = _FENCE_RE.search(text)
    if match:
        return match.group(1)
    return None


def _first_balanced_object(text: str) -> Optional[str]:
    """Extract the first {...} block, tracking strings and escapes."""
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _normalize_quotes_and_commas(text: str) -> str:
    for bad, good in _SMART_QUOTES.items():
        text = text.replace(bad, good)
    text = re.sub(r",(\s*[}\]])", r"\1", text)
    return text


def repair_and_parse(raw: Union[str, bytes]) -> ParsedJson:
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    if not isinstance(raw, str):
        raise ParseFailure(f"expected text, got {type(raw).__name__}", str(raw))

    try:
        return ParsedJson(json.loads(raw), repaired=False, text=raw)
    except (json.JSONDecodeError, RecursionError):
        pass

    candidates: list[str] = []
    defenced = _strip_fences(raw)
    if defenced is not None:
        candidates.append(defenced)
    block = _first_balanced_object(defenced if defenced is not None else raw)
    if block is not None:
        candidates.append(block)
    candidates.extend(_normalize_quotes_and_commas(c) for c in list(candidates) or [raw])

    for candidate in candidates:
        try:
            return ParsedJson(json.loads(candidate), repaired=True, text=candidate)
        except (json.JSONDecodeError, RecursionError):
            continue
    raise ParseFailure("no repair step yielded valid JSON", raw)


def _require_dict(parsed: ParsedJson) -> dict:
    if not isinstance(parsed.data, dict):
        raise SchemaViolation(
            [f"top-level: expected object, got {type(parsed.data).__name__}"], parsed.text
        )
    return parsed.data


def _coerce_claim(entry: Any, index: int, errors: list[str]) -> Optional[Claim]:
    loc = f"claims[{index}]"
    if not isinstance(entry, dict):
        errors.append(f"{loc}: expected object")
        return None
    cid = entry.get("id")
    if not isinstance(cid, str) or not cid.strip():
        errors.append(f"{loc}.id: missing or empty")
        return None
    try:
        ctype = ClaimType(str(entry.get("type", "")).strip().lower())
    except ValueError:
        errors.append(f"{loc}.type: not one of existence/count/color/position")
        return None
    text = entry.get("text")
    if not isinstance(text, str) or not text.strip():
        errors.append(f"{loc}.text: missing or empty")
        return None
    targets = entry.get("targets")
    if not isinstance(targets, list) or not targets:
        errors.append(f"{loc}.targets: expected non-empty list")
        return None
    clean_targets: list[str] = []
    for t in targets:
        if not isinstance(t, str) or not t.strip():
            errors.append(f"{loc}.targets: entries must be non-empty strings")
            return None
        clean_targets.append(t.strip())
    priority = entry.get("priority", 1)
    try:
        priority = int(priority)
    except (TypeError, ValueError):
        errors.append(f"{loc}.priority: not an integer")
        return None
    return Claim(id=cid.strip(), ctype=ctype, text=text.strip(), targets=tuple(clean_targets),
                 priority=priority)


def _coerce_claims(
    data: dict, key: str, errors: list[str], allow_multi: bool
) -> tuple[Claim, ...]:
    raw_claims = data.get(key)
    if not isinstance(raw_claims, list) or not raw_claims:
        errors.append(f"{key}: expected non-empty list")
        return ()
    if len(raw_claims) > 1 and not allow_multi:
        errors.append(f"{key}: expected exactly one claim, got {len(raw_claims)}")
        return ()
    claims = []
    for i, entry in enumerate(raw_claims):
        claim = _coerce_claim(entry, i, errors)
        if claim is not None:
            claims.append(claim)
    return tuple(claims)


def _coerce_answer(value: Any, field: str, errors: list[str]) -> Optional[BinaryAnswer]:
    if isinstance(value, str):
        try:
            return BinaryAnswer.parse(value)
        except ValueError:
            pass
    errors.append(f'{field}: expected "Yes" or "No", got {value!r}')
    return None


def parse_init(raw: str, allow_multi: bool = False) -> tuple[InitResult, bool]:
    parsed = repair_and_parse(raw)
    data = _require_dict(parsed)
    errors: list[str] = []
    answer = _coerce_answer(data.get("answer"), "answer", errors)
    claims = _coerce_claims(data, "verifiable_claims", errors, allow_multi)
    if errors or answer is None:
        raise SchemaViolation(errors, parsed.text)
    return InitResult(answer=answer, claims=claims), parsed.repaired


def parse_yes_guard(raw: str) -> tuple[YesGuardResult, bool]:
    parsed = repair_and_parse(raw)
    data = _require_dict(parsed)
    errors: list[str] = []
    try:
        answer = YesGuardAnswer(str(data.get("answer", "")).strip().lower())
    except ValueError:
        errors.append('answer: expected "yes"/"no"/"unclear"')
        answer = None
    try:
        confidence = YesGuardConfidence(str(data.get("confidence", "")).strip().lower())
    except ValueError:
        errors.append('confidence: expected "high"/"medium"/"low"')
        confidence = None
    reason = data.get("reason")
    if not isinstance(reason, str) or not reason.strip():
        errors.append("reason: missing or empty")
    if errors:
        raise SchemaViolation(errors, parsed.text)
    return YesGuardResult(answer=answer, confidence=confidence, reason=reason.strip()), parsed.repaired


def _coerce_check(entry: Any, index: int, errors: list[str]) -> Optional[ClaimCheck]:
    loc = f"checked[{index}]"
    if not isinstance(entry, dict):
        errors.append(f"{loc}: expected object")
        return None
    claim_id = entry.get("claim_id")
    if not isinstance(claim_id, str) or not claim_id.strip():
        errors.append(f"{loc}.claim_id: missing or empty")
        return None
    try:
        status = CheckStatus(str(entry.get("status", "")).strip().lower())
    except ValueError:
        errors.append(f"{loc}.status: not one of supported/contradicted/insufficient")
        return None
    conf_raw = entry.get("confidence")
    try:
        confidence = float(conf_raw)
    except (TypeError, ValueError):
        errors.append(f"{loc}.confidence: not a number")
        return None
    confidence = min(1.0, max(0.0, confidence))
    why = entry.get("why")
    why = why.strip() if isinstance(why, str) else ""
    citations_raw = entry.get("citations", [])
    if not isinstance(citations_raw, list):
        citations_raw = [citations_raw]
    citations = tuple(str(c) for c in citations_raw if isinstance(c, (str, int)))
    return ClaimCheck(
        claim_id=claim_id.strip(),
        status=status,
        confidence=confidence,
        why=why,
        citations=citations,
    )


def parse_verify(raw: str) -> tuple[list[ClaimCheck], Optional[CheckStatus], bool]:
    """Returns the judge's per-claim checks plus its advisory top verdict."""
    parsed = repair_and_parse(raw)
    data = _require_dict(parsed)
    errors: list[str] = []
    try:
        judge_verdict = CheckStatus(str(data.get("verdict", "")).strip().lower())
    except ValueError:
        judge_verdict = None  # advisory only; absence is tolerated
    raw_checks = data.get("checked")
    if not isinstance(raw_checks, list):
        raise SchemaViolation(["checked: expected list"], parsed.text)
    checks: list[ClaimCheck] = []
    for i, entry in enumerate(raw_checks):
        check = _coerce_check(entry, i, errors)
        if check is not None:
            checks.append(check)
    if errors:
        raise SchemaViolation(errors, parsed.text)
    return checks, judge_verdict, parsed.repaired


def parse_refine(raw: str, allow_multi: bool = False) -> tuple[RefineResult, bool]:
    parsed = repair_and_parse(raw)
    data = _require_dict(parsed)
    errors: list[str] = []
    answer = _coerce_answer(data.get("Answer"), "Answer", errors)
    claims = _coerce_claims(data, "new_claims", errors, allow_multi)
    if errors or answer is None:
        raise SchemaViolation(errors, parsed.text)
    return RefineResult(answer=answer, new_claims=claims), parsed.repaired


_PARSERS = {
    "init": lambda raw: parse_init(raw),
    "yes_guard": lambda raw: parse_yes_guard(raw),
    "verify": lambda raw: parse_verify(raw),
    "refine": lambda raw: parse_refine(raw),
}


def parse_constrained_json(raw: str, template_id: str):
    """Dispatch by template family; raises ParseFailure or SchemaViolation."""
    if template_id not in _PARSERS:
        raise ValueError(f"unknown template id {template_id!r}")
    return _PARSERS[template_id](raw)
