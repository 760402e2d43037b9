"""Evidence derivation and the per-run citation registry.

Every artifact or derived statement becomes an EvidenceItem with a stable
ID the judge can cite. Identical content re-derived in a later round reuses
its existing ID (so "no new evidence" is detectable); same-ID collisions
with different content get a _r{round} suffix.
"""

from __future__ import annotations

import re
from typing import Any, Optional, Sequence

from .backends import (
    BackendUnavailable,
    ChatBackend,
    ChatMessage,
    ChatRequest,
    MalformedResponse,
)
from .config import GateConfig
from .geometry import box_center, grid_cell, relation, union_box
from .imaging import image_content_hash, mean_masked_rgb, rgb_to_color_term
from .model import (
    Claim,
    ClaimType,
    EvidenceItem,
    EvidenceKind,
    NUMBER_WORDS,
    normalize_target,
)
from .grounding import ArtifactKind, GroundingResult, VisualArtifact
from .prompts import Part


class MissingScope(ValueError):
    """Evidence kind needs a target (or claim id) that was not supplied."""


class NoInstances(ValueError):
    """Derivation needs at least one grounded instance."""


_ID_PREFIX = {
    EvidenceKind.SEG_OVERLAY: "e_seg",
    EvidenceKind.CROP_ZOOM: "e_crop",
    EvidenceKind.COUNT_TEXT: "e_count",
    EvidenceKind.COUNT_COMPARE_TEXT: "e_countcmp",
    EvidenceKind.COUNT_VISION_TEXT: "e_countvis",
    EvidenceKind.COUNT_VISION_COMPARE_TEXT: "e_countviscmp",
    EvidenceKind.COLOR_TEXT: "e_color",
    EvidenceKind.POSITION_TEXT: "e_pos",
    EvidenceKind.POSITION_RELATION_TEXT: "e_posrel",
    EvidenceKind.EXISTENCE_TEXT: "e_exist",
}


def make_evidence_id(etype: EvidenceKind, target_or_claim: str) -> str:
    if not target_or_claim:
        raise MissingScope(f"evidence kind {etype.value} needs a scope id")
    return f"{_ID_PREFIX[etype]}_{target_or_claim}"


class EvidenceRegistry:
    """Per-sample-run evidence store; single writer, insertion ordered."""

    def __init__(self) -> None:
        self.items: dict[str, EvidenceItem] = {}
        self.round_index: dict[int, list[str]] = {}
        self._by_content: dict[tuple, str] = {}

    def _fingerprint(self, etype: EvidenceKind, payload: Any) -> str:
        if isinstance(payload, str):
            return payload
        return image_content_hash(payload)

    def add(
        self,
        etype: EvidenceKind,
        payload: Any,
        round_num: int,
        target: Optional[str] = None,
        claim_id: Optional[str] = None,
    ) -> tuple[EvidenceItem, bool]:
        """Register (or reuse) one evidence item; returns (item, created)."""
        scope = claim_id if etype in (EvidenceKind.POSITION_RELATION_TEXT,) else target
        if scope is None:
            raise MissingScope(f"evidence kind {etype.value} needs a scope id")
        if isinstance(payload, str) and not payload:
            raise ValueError("text evidence payload must be non-empty")
        content_key = (etype.value, target, claim_id, self._fingerprint(etype, payload))
        existing_id = self._by_content.get(content_key)
        slice_ids = self.round_index.setdefault(round_num, [])
        if existing_id is not None:
            if existing_id not in slice_ids:
                slice_ids.append(existing_id)
            return self.items[existing_id], False

        base = make_evidence_id(etype, scope)
        eid = base
        if eid in self.items:
            eid = f"{base}_r{round_num}"
        bump = 2
        while eid in self.items:
            eid = f"{base}_r{round_num}_{bump}"
            bump += 1
        item = EvidenceItem(
            id=eid, etype=etype, payload=payload, target=target, claim_id=claim_id,
            round=round_num,
        )
        self.items[eid] = item
        self._by_content[content_key] = eid
        slice_ids.append(eid)
        return item, True

    def round_slice(self, round_num: int) -> list[EvidenceItem]:
        return [self.items[eid] for eid in self.round_index.get(round_num, [])]

    def new_ids_in_round(self, round_num: int) -> list[str]:
        return [
            eid
            for eid in self.round_index.get(round_num, [])
            if self.items[eid].round == round_num
        ]

    def __contains__(self, eid: str) -> bool:
        return eid in self.items

    def all_items(self) -> list[EvidenceItem]:
        return list(self.items.values())


_NUMBER_VALUE = {w: i for i, w in enumerate(
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty".split()
)}


NUMBER_VALUE_WORDS = frozenset(_NUMBER_VALUE) & NUMBER_WORDS


def claimed_count_from_text(text: str) -> Optional[int]:
    """First numeral or spelled-out number in the claim text, if any."""
    for token in re.findall(r"[a-zA-Z]+|\d+", text.lower()):
        if token.isdigit():
            return int(token)
        if token in NUMBER_VALUE_WORDS:
            return _NUMBER_VALUE[token]
    return None


def existence_text(result: GroundingResult) -> str:
    target = result.target
    if result.count > 0:
        text = (
            f"{result.count} instance(s) of '{target}' found "
            f"(max score {result.max_score:.2f})."
        )
        if result.rechecked:
            text += (
                " Low-confidence detection: matched only at relaxed threshold "
                f"{result.recheck_threshold:.2f}."
            )
        return text
    if result.rechecked:
        return (
            f"no instance of '{target}' detected at threshold "
            f"{result.strict_threshold:.2f} or {result.recheck_threshold:.2f}."
        )
    return f"no instance of '{target}' detected at threshold {result.strict_threshold:.2f}."


def count_text(result: GroundingResult, max_instances: int) -> str:
    if result.count >= max_instances:
        return (
            f"≥{max_instances} instance(s) of '{result.target}' segmented "
            f"(reporting capped at {max_instances})."
        )
    return f"{result.count} instance(s) of '{result.target}' segmented."


def count_compare_text(result: GroundingResult, claimed: int) -> str:
    word = "agrees" if result.count == claimed else "disagrees"
    return f"segmented count {result.count} {word} with claimed count {claimed}."


_INT_RE = re.compile(r"-?\d+")


def parse_counted_reply(text: str) -> Optional[int]:
    match = _INT_RE.search(text)
    if match:
        return int(match.group())
    for token in re.findall(r"[a-zA-Z]+", text.lower()):
        if token in _NUMBER_VALUE:
            return _NUMBER_VALUE[token]
    return None


def position_text(result: GroundingResult, width: int, height: int) -> str:
    if result.count == 0:
        return f"position undeterminable: '{result.target}' not grounded."
    union = union_box([inst.bbox for inst in result.instances])
    cell = grid_cell(box_center(union), width, height)
    return f"'{result.target}' occupies grid cell {cell} (union box center)."


def relation_text(
    claim_id: str,
    subject: GroundingResult,
    anchor: GroundingResult,
) -> str:
    missing = [r.target for r in (subject, anchor) if r.count == 0]
    if missing:
        parts = ", ".join(f"'{t}' not found" for t in missing)
        return f"relation undeterminable: {parts}."
    rel = relation(box_center(subject.instances[0].bbox), box_center(anchor.instances[0].bbox))
    if rel == "coincident/ambiguous":
        return (
            f"relation between '{subject.target}' and '{anchor.target}' is "
            "coincident/ambiguous (identical box centers)."
        )
    return f"'{subject.target}' is {rel} '{anchor.target}' (top-instance box centers)."


def observe_color(
    image,
    crop,
    phrase: str,
    observer: Optional[ChatBackend],
) -> Optional[str]:
    """One-line color observation from the chat backend; hue-bucket fallback."""
    if observer is not None:
        prompt = (
            f"Look at the zoomed view of '{phrase}' (first image) and the full "
            "image (second image). In one short phrase, what is the main color "
            f"of the '{phrase}'? Reply with the color only."
        )
        request = ChatRequest(
            messages=(
                ChatMessage(
                    "user", (Part("image", crop), Part("image", image), Part("text", prompt))
                ),
            ),
            max_tokens=32,
        )
        try:
            reply = observer.chat(request).text.strip().splitlines()[0].strip()
            if reply:
                return f"observed color: {reply}"
        except (BackendUnavailable, MalformedResponse, IndexError):
            pass
    return None


def fallback_color_text(image, mask) -> str:
    term = rgb_to_color_term(mean_masked_rgb(image, mask))
    return f"low-fidelity observed color: {term} (mean masked pixel estimate)."


def derive_color(
    image,
    result: GroundingResult,
    crop,
    observer: Optional[ChatBackend],
) -> str:
    if result.count == 0:
        raise NoInstances(f"no grounded instance of '{result.target}' for color evidence")
    observed = observe_color(image, crop, result.target, observer)
    if observed is not None:
        return observed
    return fallback_color_text(image, result.instances[0].mask)


def observe_count(
    bbox_render,
    phrase: str,
    observer: ChatBackend,
) -> Optional[int]:
    prompt = (
        f"Count the boxed instances of '{phrase}' in this annotated image. "
        "Reply with a single integer."
    )
    request = ChatRequest(
        messages=(ChatMessage("user", (Part("image", bbox_render), Part("text", prompt))),),
        max_tokens=16,
    )
    try:
        return parse_counted_reply(observer.chat(request).text)
    except (BackendUnavailable, MalformedResponse):
        return None


class RoundEvidenceBuilder:
    """Derives and registers all evidence for one round of one claim."""

    def __init__(
        self,
        registry: EvidenceRegistry,
        cfg: GateConfig,
        image,
        observer: Optional[ChatBackend] = None,
    ):
        self.registry = registry
        self.cfg = cfg
        self.image = image
        self.observer = observer
        self.notes: list[str] = []

    def _add(self, etype, payload, round_num, target=None, claim_id=None) -> None:
        self.registry.add(etype, payload, round_num, target=target, claim_id=claim_id)

    def build(
        self,
        round_num: int,
        claim: Claim,
        results: dict[str, GroundingResult],
        artifacts: dict[str, list[VisualArtifact]],
    ) -> list[EvidenceItem]:
        """results/artifacts are keyed by normalized target."""
        cfg = self.cfg
        textual_on = cfg.use_textual_evidence.get(claim.ctype, True)
        for phrase in claim.targets:
            tkey = normalize_target(phrase)
            result = results.get(tkey)
            if result is None:
                continue
            for artifact in artifacts.get(tkey, []):
                if artifact.kind is ArtifactKind.SEG_OVERLAY:
                    self._add(EvidenceKind.SEG_OVERLAY, artifact.image, round_num, target=tkey)
                elif artifact.kind is ArtifactKind.CROP_ZOOM and artifact.instance_index == 0:
                    self._add(EvidenceKind.CROP_ZOOM, artifact.image, round_num, target=tkey)
            if claim.ctype is ClaimType.EXISTENCE and textual_on:
                self._add(EvidenceKind.EXISTENCE_TEXT, existence_text(result), round_num, target=tkey)
            if claim.ctype is ClaimType.COUNT and textual_on:
                self._build_count(round_num, claim, tkey, result, artifacts.get(tkey, []))
            if claim.ctype is ClaimType.COLOR and textual_on:
                self._build_color(round_num, tkey, result, artifacts.get(tkey, []))
        if claim.ctype is ClaimType.POSITION and textual_on:
            self._build_position(round_num, claim, results)
        return self.registry.round_slice(round_num)

    def _build_count(
        self,
        round_num: int,
        claim: Claim,
        tkey: str,
        result: GroundingResult,
        artifacts: list[VisualArtifact],
    ) -> None:
        self._add(EvidenceKind.COUNT_TEXT, count_text(result, self.cfg.max_instances),
                  round_num, target=tkey)
        claimed = claimed_count_from_text(claim.text)
        if claimed is not None:
            self._add(
                EvidenceKind.COUNT_COMPARE_TEXT,
                count_compare_text(result, claimed),
                round_num,
                target=tkey,
            )
        if self.observer is None:
            return
        bbox_render = next(
            (a.image for a in artifacts if a.kind is ArtifactKind.BBOX_RENDER), None
        )
        if bbox_render is None:
            return
        seen = observe_count(bbox_render, tkey, self.observer)
        if seen is None:
            self.notes.append(f"count_vision unavailable for '{tkey}'")
            return
        self._add(
            EvidenceKind.COUNT_VISION_TEXT,
            f"visual count of '{tkey}' from annotated image: {seen}.",
            round_num,
            target=tkey,
        )
        if claimed is not None:
            word = "agrees" if seen == claimed else "disagrees"
            self._add(
                EvidenceKind.COUNT_VISION_COMPARE_TEXT,
                f"visual count {seen} {word} with claimed count {claimed}.",
                round_num,
                target=tkey,
            )

    def _build_color(
        self,
        round_num: int,
        tkey: str,
        result: GroundingResult,
        artifacts: list[VisualArtifact],
    ) -> None:
        if result.count == 0:
            self.notes.append(f"color evidence skipped: '{tkey}' not grounded")
            return
        crop = next(
            (a.image for a in artifacts if a.kind is ArtifactKind.CROP_ZOOM), None
        )
        text = derive_color(self.image, result, crop, self.observer if crop is not None else None)
        self._add(EvidenceKind.COLOR_TEXT, text, round_num, target=tkey)

    def _build_position(
        self,
        round_num: int,
        claim: Claim,
        results: dict[str, GroundingResult],
    ) -> None:
        width, height = self.image.width, self.image.height
        keys = [normalize_target(p) for p in claim.targets]
        for tkey in keys:
            result = results.get(tkey)
            if result is None:
                continue
            self._add(
                EvidenceKind.POSITION_TEXT,
                position_text(result, width, height),
                round_num,
                target=tkey,
            )
        if len(keys) == 2 and all(k in results for k in keys):
            self._add(
                EvidenceKind.POSITION_RELATION_TEXT,
                relation_text(claim.id, results[keys[0]], results[keys[1]]),
                round_num,
                claim_id=claim.id,
            )
