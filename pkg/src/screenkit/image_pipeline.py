"""Deterministic radiograph preprocessing.

Turns arbitrary 8-bit input images into square, intensity-normalized
8-bit grayscale images via four fixed steps: grayscale conversion,
Otsu-based foreground cropping with a relative margin and an area
fallback, percentile clip-and-rescale, and bilinear resizing.

Every stage is a pure function with pinned rounding conventions
(round half away from zero for pixel quantization, half-pixel-center
sampling for the resizer), so identical input bytes produce identical
output bytes on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FormatError, ValidationError

__all__ = [
    "BoundingBox",
    "OtsuResult",
    "PreprocessConfig",
    "PreprocessTrace",
    "foreground_bbox",
    "otsu_threshold",
    "percentile_clip_rescale",
    "preprocess",
    "preprocess_record",
    "resize_bilinear",
    "to_grayscale",
]


@dataclass(frozen=True)
class PreprocessConfig:
    """Tunable knobs of the preprocessing pipeline (defaults are pinned)."""

    margin_fraction: float = 0.03
    fallback_area_fraction: float = 0.10
    clip_low_pct: float = 1.0
    clip_high_pct: float = 99.0
    target_size: int = 512

    def __post_init__(self) -> None:
        if not 0.0 <= self.margin_fraction < 0.5:
            raise ValidationError(f"margin_fraction out of range: {self.margin_fraction}")
        if not 0.0 < self.fallback_area_fraction < 1.0:
            raise ValidationError(
                f"fallback_area_fraction out of range: {self.fallback_area_fraction}"
            )
        if not 0.0 <= self.clip_low_pct < self.clip_high_pct <= 100.0:
            raise ValidationError(
                f"bad clip percentiles: ({self.clip_low_pct}, {self.clip_high_pct})"
            )
        if self.target_size < 1:
            raise ValidationError(f"target_size must be >= 1, got {self.target_size}")


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box: x0/y0 inclusive, x1/y1 exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValidationError(f"degenerate bounding box: {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height


class OtsuResult(NamedTuple):
    threshold: int
    degenerate: bool


@dataclass(frozen=True)
class PreprocessTrace:
    """What the pipeline actually did to one image (for sidecar manifests)."""

    otsu_threshold: int
    otsu_degenerate: bool
    bbox: BoundingBox
    used_fallback: bool
    p_lo: float
    p_hi: float


def _round_half_up(values: np.ndarray) -> np.ndarray:
    # Round half away from zero; all pixel quantities here are nonnegative.
    return np.floor(values + 0.5)


def _require_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise FormatError(f"expected a nonempty 2-D grayscale array, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise FormatError(f"expected uint8 pixels, got dtype {image.dtype}")
    return image


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Collapse a 1- or 3-channel 8-bit image to single-channel grayscale.

    3-channel inputs are combined with the 0.299/0.587/0.114 luma weights
    and rounded half away from zero; 1-channel inputs pass through.
    """
    image = np.asarray(image)
    if image.size == 0:
        raise FormatError("empty image")
    if image.dtype != np.uint8:
        raise FormatError(f"expected uint8 pixels, got dtype {image.dtype}")
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 1:
        return image[:, :, 0]
    if image.ndim == 3 and image.shape[2] == 3:
        # Integer arithmetic: (299R + 587G + 114B) / 1000 rounded half up,
        # exact even when the luma lands on a .5 boundary.
        weighted = (
            299 * image[:, :, 0].astype(np.int64)
            + 587 * image[:, :, 1].astype(np.int64)
            + 114 * image[:, :, 2].astype(np.int64)
        )
        return ((weighted + 500) // 1000).astype(np.uint8)
    raise FormatError(f"unsupported channel layout: shape {image.shape}")


def otsu_threshold(image: np.ndarray) -> OtsuResult:
    """Pick the smallest cut level maximizing between-class variance.

    Pixels strictly above the returned level are foreground. A constant
    image has no valid cut; it yields ``(0, degenerate=True)`` and the
    caller is expected to fall back to the full frame.
    """
    image = _require_gray(image)
    hist = np.bincount(image.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    cum_count = np.cumsum(hist)
    cum_sum = np.cumsum(hist * np.arange(256, dtype=np.float64))
    grand_sum = cum_sum[-1]

    w0 = cum_count
    w1 = total - cum_count
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return OtsuResult(0, True)

    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = cum_sum / w0
        mu1 = (grand_sum - cum_sum) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~valid] = -np.inf
    best = int(np.argmax(between))  # argmax returns the smallest index on ties
    if between[best] <= 0.0:
        return OtsuResult(0, True)
    return OtsuResult(best, False)


def _tight_bbox(mask: np.ndarray) -> BoundingBox | None:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    return BoundingBox(
        x0=int(cols[0]), y0=int(rows[0]), x1=int(cols[-1]) + 1, y1=int(rows[-1]) + 1
    )


def _bbox_with_fallback(
    image: np.ndarray, threshold: int, config: PreprocessConfig
) -> tuple[BoundingBox, bool]:
    height, width = image.shape
    full = BoundingBox(0, 0, width, height)

    tight = _tight_bbox(image > threshold)
    if tight is None:
        return full, True
    if tight.area < config.fallback_area_fraction * width * height:
        return full, True

    mx = math.ceil(config.margin_fraction * tight.width)
    my = math.ceil(config.margin_fraction * tight.height)
    box = BoundingBox(
        x0=max(0, tight.x0 - mx),
        y0=max(0, tight.y0 - my),
        x1=min(width, tight.x1 + mx),
        y1=min(height, tight.y1 + my),
    )
    return box, False


def foreground_bbox(
    image: np.ndarray, threshold: int, config: PreprocessConfig | None = None
) -> BoundingBox:
    """Bounding box of pixels above ``threshold``, padded by a relative margin.

    The margin is ``margin_fraction`` of the detected box's own width and
    height, rounded up, clamped to the frame. If nothing exceeds the
    threshold or the pre-margin box covers less than
    ``fallback_area_fraction`` of the frame, the full frame is returned.
    """
    image = _require_gray(image)
    if not 0 <= threshold <= 255:
        raise ValidationError(f"threshold out of range: {threshold}")
    box, _ = _bbox_with_fallback(image, threshold, config or PreprocessConfig())
    return box


def _percentile_bounds(image: np.ndarray, low_pct: float, high_pct: float) -> tuple[float, float]:
    flat = image.astype(np.float64).ravel()
    p_lo, p_hi = np.percentile(flat, [low_pct, high_pct], method="linear")
    return float(p_lo), float(p_hi)


def percentile_clip_rescale(
    image: np.ndarray, low_pct: float = 1.0, high_pct: float = 99.0
) -> np.ndarray:
    """Clip to the [low_pct, high_pct] percentile range, rescale to 0..255.

    Percentiles are linearly interpolated order statistics. When the two
    bounds coincide (constant-ish image) the output is all 128.
    """
    image = _require_gray(image)
    if not low_pct < high_pct:
        raise ValidationError(f"need low_pct < high_pct, got ({low_pct}, {high_pct})")
    p_lo, p_hi = _percentile_bounds(image, low_pct, high_pct)
    if p_hi == p_lo:
        return np.full_like(image, 128)
    clipped = np.clip(image.astype(np.float64), p_lo, p_hi)
    scaled = 255.0 * (clipped - p_lo) / (p_hi - p_lo)
    return _round_half_up(scaled).astype(np.uint8)


def _resize_bilinear_float(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers; float64 output, no rounding."""
    src = np.asarray(image, dtype=np.float64)
    in_h, in_w = src.shape

    def axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        coords = np.clip(coords, 0.0, n_in - 1.0)
        lo = np.floor(coords).astype(np.int64)
        lo = np.minimum(lo, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = coords - lo
        return lo, hi, frac

    y_lo, y_hi, fy = axis_coords(out_h, in_h)
    x_lo, x_hi, fx = axis_coords(out_w, in_w)

    top = src[y_lo][:, x_lo] * (1.0 - fx) + src[y_lo][:, x_hi] * fx
    bottom = src[y_hi][:, x_lo] * (1.0 - fx) + src[y_hi][:, x_hi] * fx
    return top * (1.0 - fy[:, None]) + bottom * fy[:, None]


def resize_bilinear(image: np.ndarray, target: int) -> np.ndarray:
    """Resize to ``target`` x ``target`` with half-pixel-center bilinear sampling.

    Output pixels are rounded half away from zero. Matching source and
    target sizes reproduce the input exactly.
    """
    image = _require_gray(image)
    if target < 1:
        raise ValidationError(f"target must be >= 1, got {target}")
    if image.shape == (target, target):
        return image.copy()
    blended = _resize_bilinear_float(image, target, target)
    return _round_half_up(blended).astype(np.uint8)


def preprocess_record(
    image: np.ndarray, config: PreprocessConfig | None = None
) -> tuple[np.ndarray, PreprocessTrace]:
    """Run the full pipeline and report what happened.

    Returns the ``target_size`` x ``target_size`` output together with a
    trace of the Otsu level, the crop actually applied, whether the
    full-frame fallback fired, and the percentile bounds used.
    """
    config = config or PreprocessConfig()
    gray = to_grayscale(image)

    otsu = otsu_threshold(gray)
    bbox, used_fallback = _bbox_with_fallback(gray, otsu.threshold, config)

    cropped = gray[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1]
    p_lo, p_hi = _percentile_bounds(cropped, config.clip_low_pct, config.clip_high_pct)
    rescaled = percentile_clip_rescale(cropped, config.clip_low_pct, config.clip_high_pct)
    final = resize_bilinear(rescaled, config.target_size)

    trace = PreprocessTrace(
        otsu_threshold=otsu.threshold,
        otsu_degenerate=otsu.degenerate,
        bbox=bbox,
        used_fallback=used_fallback,
        p_lo=p_lo,
        p_hi=p_hi,
    )
    return final, trace


def preprocess(image: np.ndarray, config: PreprocessConfig | None = None) -> np.ndarray:
    """Grayscale -> Otsu crop -> percentile rescale -> bilinear resize."""
    final, _ = preprocess_record(image, config)
    return final
