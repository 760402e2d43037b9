"""Image handles, codecs, and the visual artifact renderers."""

from __future__ import annotations

import base64
import hashlib
import io
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image, ImageDraw

from .geometry import Box, expand_box

ImageRef = Union[str, Path, Image.Image, bytes, np.ndarray]


class ImageDecodeError(ValueError):
    """Input could not be decoded into an image."""


def load_image(ref: ImageRef) -> Image.Image:
    """Accepts a path, PIL image, raw PNG/JPEG bytes, or HxWx3 array."""
    if isinstance(ref, Image.Image):
        return ref.convert("RGB")
    if isinstance(ref, np.ndarray):
        return Image.fromarray(ref.astype(np.uint8), mode="RGB")
    if isinstance(ref, bytes):
        try:
            return Image.open(io.BytesIO(ref)).convert("RGB")
        except Exception as exc:
            raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc
    if isinstance(ref, (str, Path)):
        try:
            return Image.open(ref).convert("RGB")
        except Exception as exc:
            raise ImageDecodeError(f"cannot open image {ref}: {exc}") from exc
    raise ImageDecodeError(f"unsupported image reference type {type(ref).__name__}")


def image_to_png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def image_to_base64(img: Image.Image) -> str:
    return base64.b64encode(image_to_png_bytes(img)).decode("ascii")


def image_from_base64(data: str) -> Image.Image:
    try:
        return Image.open(io.BytesIO(base64.b64decode(data))).convert("RGB")
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode base64 image: {exc}") from exc


def image_content_hash(img: Image.Image) -> str:
    """Stable hash of pixel content (mode, size, raw bytes)."""
    rgb = img.convert("RGB")
    h = hashlib.sha256()
    h.update(rgb.mode.encode())
    h.update(f"{rgb.width}x{rgb.height}".encode())
    h.update(rgb.tobytes())
    return h.hexdigest()


def save_artifact(img: Image.Image, directory: Union[str, Path]) -> str:
    """Write an image as artifacts/<sha>.png; returns the relative filename."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = f"{image_content_hash(img)}.png"
    path = directory / name
    if not path.exists():
        tmp = path.with_suffix(".tmp")
        img.save(tmp, format="PNG")
        tmp.replace(path)
    return name


# Deterministic per-instance overlay hues (RGB).
_OVERLAY_COLORS = (
    (230, 60, 60),
    (60, 140, 230),
    (60, 190, 90),
    (235, 170, 40),
    (160, 80, 220),
    (240, 110, 180),
    (70, 200, 200),
    (150, 150, 70),
)


def render_overlay(img: Image.Image, masks: Sequence[np.ndarray]) -> Image.Image:
    """Semi-transparent per-instance fill over the full image."""
    base = img.convert("RGBA")
    layer = Image.new("RGBA", base.size, (0, 0, 0, 0))
    layer_arr = np.array(layer)
    for i, mask in enumerate(masks):
        r, g, b = _OVERLAY_COLORS[i % len(_OVERLAY_COLORS)]
        layer_arr[np.asarray(mask, dtype=bool)] = (r, g, b, 115)
    out = Image.alpha_composite(base, Image.fromarray(layer_arr))
    return out.convert("RGB")


def render_bboxes(img: Image.Image, boxes: Sequence[Box]) -> Image.Image:
    out = img.convert("RGB").copy()
    draw = ImageDraw.Draw(out)
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        color = _OVERLAY_COLORS[i % len(_OVERLAY_COLORS)]
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), outline=color, width=3)
    return out


def render_crop(
    img: Image.Image,
    box: Box,
    margin: float,
    min_side: int,
    mask: Optional[np.ndarray] = None,
) -> Image.Image:
    """Crop around a box with margin, clamped to the image, upscaled so the
    short side reaches min_side. An optional mask dims background pixels so
    the instance stands out in the zoomed view.
    """
    x0, y0, x1, y1 = expand_box(box, margin, img.width, img.height)
    source = img.convert("RGB")
    if mask is not None:
        arr = np.array(source)
        dim = (arr * 0.35).astype(np.uint8)
        keep = np.asarray(mask, dtype=bool)
        arr = np.where(keep[..., None], arr, dim)
        source = Image.fromarray(arr)
    crop = source.crop((x0, y0, x1, y1))
    short = min(crop.width, crop.height)
    if short < min_side:
        scale = min_side / short
        crop = crop.resize(
            (max(1, round(crop.width * scale)), max(1, round(crop.height * scale))),
            Image.NEAREST,
        )
    return crop


def mean_masked_rgb(img: Image.Image, mask: np.ndarray) -> tuple[float, float, float]:
    arr = np.array(img.convert("RGB"), dtype=np.float64)
    keep = np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValueError("mask has no set pixels")
    pixels = arr[keep]
    r, g, b = pixels.mean(axis=0)
    return (float(r), float(g), float(b))


# Hue buckets for the degraded color path: 11 basic English color terms.
COLOR_TERMS = (
    "black",
    "white",
    "gray",
    "red",
    "orange",
    "yellow",
    "green",
    "blue",
    "purple",
    "pink",
    "brown",
)


def rgb_to_color_term(rgb: tuple[float, float, float]) -> str:
    """Nearest basic color term via HSV bucketing."""
    r, g, b = (max(0.0, min(255.0, c)) / 255.0 for c in rgb)
    mx, mn = max(r, g, b), min(r, g, b)
    v = mx
    s = 0.0 if mx == 0 else (mx - mn) / mx
    if v < 0.18:
        return "black"
    if s < 0.16:
        if v > 0.85:
            return "white"
        return "gray"
    delta = mx - mn
    if mx == r:
        hue = (60 * ((g - b) / delta)) % 360
    elif mx == g:
        hue = 60 * ((b - r) / delta) + 120
    else:
        hue = 60 * ((r - g) / delta) + 240
    if hue < 15 or hue >= 345:
        return "pink" if (s < 0.45 and v > 0.75) else "red"
    if hue < 45:
        return "brown" if v < 0.55 else "orange"
    if hue < 75:
        return "yellow"
    if hue < 165:
        return "green"
    if hue < 255:
        return "blue"
    if hue < 345:
        return "purple"
    return "red"
