"""Segmentation grounding: backend client, confidence filtering, artifacts.

ground() sends the raw target phrase as the concept prompt, requesting down
to the recheck threshold so the existence recheck can re-filter the cached
response locally without a second backend query.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .backends import MalformedResponse, SegmentBackend, SegmentRequest
from .config import GateConfig
from .geometry import Box, check_box, mask_to_bbox, rle_decode
from .imaging import load_image, render_bboxes, render_crop, render_overlay
from .model import ClaimType


@dataclass(frozen=True)
class GroundedInstance:
    score: float
    bbox: Box
    mask: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise MalformedResponse(f"instance score {self.score} outside [0,1]")


@dataclass(frozen=True)
class GroundingResult:
    target: str
    instances: tuple[GroundedInstance, ...]
    threshold_used: float
    rechecked: bool
    strict_threshold: float
    recheck_threshold: float

    @property
    def count(self) -> int:
        return len(self.instances)

    @property
    def max_score(self) -> Optional[float]:
        return self.instances[0].score if self.instances else None


class ArtifactKind(str, Enum):
    SEG_OVERLAY = "seg_overlay"
    BBOX_RENDER = "bbox_render"
    CROP_ZOOM = "crop_zoom"


@dataclass(frozen=True)
class VisualArtifact:
    kind: ArtifactKind
    image: Image.Image
    source_target: str
    instance_index: Optional[int] = None


def polygon_to_mask(points: Sequence[Sequence[float]], width: int, height: int) -> np.ndarray:
    if len(points) < 3:
        raise MalformedResponse(f"polygon needs >= 3 points, got {len(points)}")
    canvas = Image.new("1", (width, height), 0)
    ImageDraw.Draw(canvas).polygon([(float(x), float(y)) for x, y in points], fill=1)
    return np.array(canvas, dtype=bool)


def decode_mask(mask_field: Any, width: int, height: int) -> np.ndarray:
    if not isinstance(mask_field, dict):
        raise MalformedResponse(f"mask must be an object, got {type(mask_field).__name__}")
    fmt = mask_field.get("format")
    data = mask_field.get("data")
    if fmt == "rle":
        if not isinstance(data, list):
            raise MalformedResponse("rle mask data must be a list of run lengths")
        try:
            return rle_decode(data, width, height)
        except (ValueError, TypeError) as exc:
            raise MalformedResponse(f"bad RLE mask: {exc}") from exc
    if fmt == "polygon":
        if not isinstance(data, list):
            raise MalformedResponse("polygon mask data must be a list of points")
        return polygon_to_mask(data, width, height)
    raise MalformedResponse(f"unknown mask format {fmt!r}")


def parse_instances(response: dict, width: int, height: int) -> list[GroundedInstance]:
    if not isinstance(response, dict) or not isinstance(response.get("instances"), list):
        raise MalformedResponse("segment response must carry an 'instances' list")
    out: list[GroundedInstance] = []
    for i, entry in enumerate(response["instances"]):
        if not isinstance(entry, dict):
            raise MalformedResponse(f"instances[{i}] must be an object")
        try:
            score = float(entry["score"])
            bbox = check_box(entry["bbox"], width, height)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"instances[{i}]: {exc}") from exc
        mask = decode_mask(entry.get("mask"), width, height)
        if not mask.any():
            raise MalformedResponse(f"instances[{i}]: mask has zero area")
        out.append(GroundedInstance(score=score, bbox=bbox, mask=mask))
    return out


def filter_instances(
    instances: Sequence[GroundedInstance], threshold: float
) -> list[GroundedInstance]:
    """Strict score filter; the recheck relaxation is layered on top of it."""
    return [inst for inst in instances if inst.score >= threshold]


class GroundingClient:
    """Per-sample-run grounding with a raw-response cache.

    The cache key is the wire request (concept, max_instances, min_score);
    the image is fixed within one sample run.
    """

    def __init__(self, backend: SegmentBackend, image_ref: Any):
        self.backend = backend
        self.image = load_image(image_ref)
        self._cache: dict[tuple[str, int, float], list[GroundedInstance]] = {}

    def _raw_instances(self, phrase: str, cfg: GateConfig) -> list[GroundedInstance]:
        key = (phrase, cfg.max_instances, cfg.ground_recheck_conf)
        if key not in self._cache:
            response = self.backend.segment(
                SegmentRequest(
                    image=self.image,
                    concept=phrase,
                    max_instances=cfg.max_instances,
                    min_score=cfg.ground_recheck_conf,
                )
            )
            self._cache[key] = parse_instances(response, self.image.width, self.image.height)
        return self._cache[key]

    def ground(self, phrase: str, ctype: ClaimType, cfg: GateConfig) -> GroundingResult:
        from .model import normalize_target

        raw = self._raw_instances(phrase, cfg)
        kept = filter_instances(raw, cfg.ground_conf)
        threshold = cfg.ground_conf
        rechecked = False
        if not kept and ctype is ClaimType.EXISTENCE:
            rechecked = True
            if cfg.ground_recheck_conf < cfg.ground_conf:
                kept = filter_instances(raw, cfg.ground_recheck_conf)
                threshold = cfg.ground_recheck_conf
        kept.sort(key=lambda inst: -inst.score)
        return GroundingResult(
            target=normalize_target(phrase),
            instances=tuple(kept[: cfg.max_instances]),
            threshold_used=threshold,
            rechecked=rechecked,
            strict_threshold=cfg.ground_conf,
            recheck_threshold=cfg.ground_recheck_conf,
        )

    def render_artifacts(self, result: GroundingResult, cfg: GateConfig) -> list[VisualArtifact]:
        """Overlay + box render + one crop per instance; bare context image
        when nothing was grounded.
        """
        if not result.instances:
            return [
                VisualArtifact(ArtifactKind.SEG_OVERLAY, self.image.copy(), result.target)
            ]
        masks = [inst.mask for inst in result.instances]
        boxes = [inst.bbox for inst in result.instances]
        artifacts = [
            VisualArtifact(ArtifactKind.SEG_OVERLAY, render_overlay(self.image, masks), result.target),
            VisualArtifact(ArtifactKind.BBOX_RENDER, render_bboxes(self.image, boxes), result.target),
        ]
        for i, inst in enumerate(result.instances):
            crop = render_crop(self.image, inst.bbox, cfg.crop_margin, cfg.crop_min_side, inst.mask)
            artifacts.append(
                VisualArtifact(ArtifactKind.CROP_ZOOM, crop, result.target, instance_index=i)
            )
        return artifacts


__all__ = [
    "ArtifactKind",
    "GroundedInstance",
    "GroundingClient",
    "GroundingResult",
    "VisualArtifact",
    "decode_mask",
    "filter_instances",
    "mask_to_bbox",
    "parse_instances",
    "polygon_to_mask",
]
