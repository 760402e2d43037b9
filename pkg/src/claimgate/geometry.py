"""Box, grid-cell, relation, and mask geometry shared across the pipeline.

Single reference implementation: evidence derivation, scene gold answers,
and wire-contract mask handling all call these functions, so they cannot
drift apart. Boxes are half-open pixel rectangles [x0, y0, x1, y1) with
x0 < x1 and y0 < y1.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

Box = tuple[int, int, int, int]
Point = tuple[float, float]


class EmptyMask(ValueError):
    """Mask has no set pixels."""


class BadBox(ValueError):
    """Box violates the half-open convention or image bounds."""


def check_box(box: Sequence[float], width: int, height: int) -> Box:
    x0, y0, x1, y1 = (int(v) for v in box)
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise BadBox(f"box {box!r} invalid for {width}x{height} image")
    return (x0, y0, x1, y1)


def box_center(box: Sequence[float]) -> Point:
    x0, y0, x1, y1 = box
    return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def box_area(box: Sequence[float]) -> float:
    x0, y0, x1, y1 = box
    return max(0.0, x1 - x0) * max(0.0, y1 - y0)


def union_box(boxes: Iterable[Sequence[float]]) -> Box:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union_box of zero boxes")
    return (
        min(int(b[0]) for b in boxes),
        min(int(b[1]) for b in boxes),
        max(int(b[2]) for b in boxes),
        max(int(b[3]) for b in boxes),
    )


def expand_box(box: Sequence[float], margin: float, width: int, height: int) -> Box:
    """Grow a box by margin (fraction of its size) and clamp to the image."""
    x0, y0, x1, y1 = box
    dx = (x1 - x0) * margin
    dy = (y1 - y0) * margin
    nx0 = max(0, int(np.floor(x0 - dx)))
    ny0 = max(0, int(np.floor(y0 - dy)))
    nx1 = min(width, int(np.ceil(x1 + dx)))
    ny1 = min(height, int(np.ceil(y1 + dy)))
    # Degenerate clamps cannot happen for valid inputs, but guard anyway.
    if nx1 <= nx0:
        nx1 = min(width, nx0 + 1)
    if ny1 <= ny0:
        ny1 = min(height, ny0 + 1)
    return (nx0, ny0, nx1, ny1)


GRID_COLS = ("left", "center", "right")
GRID_ROWS = ("top", "middle", "bottom")


def grid_cell(center: Point, width: int, height: int) -> str:
    """Name the 3x3 grid cell containing a point, e.g. "center-middle"."""
    cx, cy = center
    col = min(2, max(0, int(cx * 3 / width)))
    row = min(2, max(0, int(cy * 3 / height)))
    return f"{GRID_COLS[col]}-{GRID_ROWS[row]}"


RELATION_COINCIDENT = "coincident/ambiguous"
RELATION_SWAP = {
    "left of": "right of",
    "right of": "left of",
    "above": "below",
    "below": "above",
    RELATION_COINCIDENT: RELATION_COINCIDENT,
}


def relation(center_a: Point, center_b: Point) -> str:
    """Dominant-axis relation of A relative to B between two centers.

    Horizontal wins ties (|dx| == |dy| != 0); identical centers are
    "coincident/ambiguous".
    """
    dx = center_b[0] - center_a[0]
    dy = center_b[1] - center_a[1]
    if dx == 0 and dy == 0:
        return RELATION_COINCIDENT
    if abs(dx) >= abs(dy):
        return "left of" if dx > 0 else "right of"
    return "above" if dy > 0 else "below"


def mask_to_bbox(mask: np.ndarray) -> Box:
    """Tight half-open bounds of all set pixels in a (H, W) binary mask."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyMask("mask has no set pixels")
    return (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def box_to_mask(box: Sequence[float], width: int, height: int) -> np.ndarray:
    x0, y0, x1, y1 = check_box(box, width, height)
    mask = np.zeros((height, width), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths alternating background/foreground, background first.

    An all-background mask encodes as [H*W]; a mask starting with foreground
    gets a leading zero-length background run.
    """
    flat = np.asarray(mask, dtype=bool).ravel(order="C")
    if flat.size == 0:
        return []
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], width: int, height: int) -> np.ndarray:
    total = sum(int(r) for r in runs)
    if total != width * height:
        raise ValueError(f"RLE runs sum to {total}, expected {width * height}")
    if any(int(r) < 0 for r in runs):
        raise ValueError("RLE runs must be non-negative")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        run = int(run)
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape((height, width))
