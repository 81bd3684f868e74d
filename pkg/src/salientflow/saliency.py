"""Magnification of unstable responses, two-stage segmentation, region extraction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DegenerateField
from .stability import StabilityField

ALPHA_MODES = ("fixed", "percentile", "otsu")
COMBINE_MODES = ("union", "intersection")
LOCAL_MARGIN = 1e-9
DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class SaliencyConfig:
    """Parameters of the magnification and segmentation stages.

    ``alpha_floor`` applies to the automatic modes only: the selected
    threshold is never below it, so a field that is flat for most of the frame
    (and hence has its percentile sitting on rounding noise around zero) does
    not flag the flat part.
    """

    beta: float = 0.8
    alpha_mode: str = "percentile"
    alpha_value: float = 90.0
    local_window: int = 15
    local_k: float = 2.0
    min_region_area: int = 25
    combine_mode: str = "union"
    alpha_floor: float = 1e-6

    def __post_init__(self):
        if not (0.5 < self.beta <= 1.0):
            raise ConfigError(f"beta must lie in (0.5, 1], got {self.beta}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}")
        if self.alpha_mode == "percentile" and not (0.0 < self.alpha_value < 100.0):
            raise ConfigError(f"percentile must lie in (0, 100), got {self.alpha_value}")
        if not math.isfinite(self.alpha_value):
            raise ConfigError("alpha_value must be finite")
        if self.local_window < 3 or self.local_window % 2 == 0:
            raise ConfigError(f"local_window must be an odd integer >= 3, got {self.local_window}")
        if self.min_region_area < 1:
            raise ConfigError(f"min_region_area must be >= 1, got {self.min_region_area}")
        if self.combine_mode not in COMBINE_MODES:
            raise ConfigError(f"combine_mode must be one of {COMBINE_MODES}, got {self.combine_mode!r}")


@dataclass(frozen=True)
class SalientRegion:
    id: int
    area: int
    bbox: tuple[int, int, int, int]  # x, y, w, h
    centroid: tuple[float, float]  # x, y
    mean_phi: float
    max_phi: float


@dataclass
class SalientRegionSet:
    labels: np.ndarray
    regions: list[SalientRegion] = field(default_factory=list)

    def __len__(self):
        return len(self.regions)

    def to_json_dict(self, frame_window=None, alpha_used=None) -> dict:
        alpha = None if alpha_used is None or not math.isfinite(alpha_used) else float(alpha_used)
        return {
            "frame_window": None if frame_window is None else list(frame_window),
            "alpha_used": alpha,
            "regions": [
                {**asdict(r), "bbox": list(r.bbox), "centroid": list(r.centroid)}
                for r in self.regions
            ],
        }


def _values(phi) -> np.ndarray:
    if isinstance(phi, StabilityField):
        return phi.phi
    return getattr(phi, "values", phi)


def magnify_values(phi, alpha, beta):
    """Elementwise piecewise gain; ``phi == alpha`` takes the amplified branch."""
    phi = np.asarray(phi, dtype=np.float64)
    return np.where(phi >= alpha, beta * phi, (1.0 - beta) * phi)


def magnify(phi, cfg: SaliencyConfig, alpha: float) -> np.ndarray:
    return magnify_values(_values(phi), alpha, cfg.beta)


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu threshold over ``bins`` equal-width bins spanning ``[min, max]``.

    Class means come from per-bin sums of the raw values, so the score for
    each candidate split is the exact between-class variance of the data.
    Returns the lower edge of the first bin in the upper class.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    sums, _ = np.histogram(v, bins=bins, range=(lo, hi), weights=v)
    n = counts.sum()
    c0 = np.cumsum(counts)[:-1].astype(np.float64)
    s0 = np.cumsum(sums)[:-1]
    c1 = n - c0
    s1 = sums.sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        score = c0 * c1 * (s0 / c0 - s1 / c1) ** 2
    score = np.where((c0 > 0) & (c1 > 0), score, -np.inf)
    k = int(np.argmax(score)) + 1
    return float(edges[k])


def select_alpha(phi, cfg: SaliencyConfig) -> float:
    if cfg.alpha_mode == "fixed":
        return float(cfg.alpha_value)
    v = _values(phi)
    if float(v.max()) - float(v.min()) < DEGENERATE_SPREAD:
        raise DegenerateField("instability field has no spread; no threshold exists")
    if cfg.alpha_mode == "percentile":
        alpha = float(np.percentile(v, cfg.alpha_value, method="linear"))
    else:
        alpha = otsu_threshold(v)
    return max(alpha, cfg.alpha_floor)


def local_statistics(values: np.ndarray, window: int):
    """Sliding-window mean and standard deviation (reflected borders)."""
    mean = ndimage.uniform_filter(values, size=window, mode="reflect")
    sq = ndimage.uniform_filter(values * values, size=window, mode="reflect")
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    return mean, std


def global_mask(phi_hat, cfg: SaliencyConfig, alpha: float) -> np.ndarray:
    return _values(phi_hat) >= cfg.beta * alpha


def local_mask(phi_hat, cfg: SaliencyConfig) -> np.ndarray:
    v = _values(phi_hat)
    mean, std = local_statistics(v, cfg.local_window)
    return v > mean + np.maximum(cfg.local_k * std, LOCAL_MARGIN)


def segment(phi_hat, cfg: SaliencyConfig, alpha: float) -> np.ndarray:
    """Combine the coarse (global threshold) and fine (local contrast) masks."""
    g = global_mask(phi_hat, cfg, alpha)
    loc = local_mask(phi_hat, cfg)
    return (g | loc) if cfg.combine_mode == "union" else (g & loc)


EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def extract_regions(mask: np.ndarray, phi, cfg: SaliencyConfig) -> SalientRegionSet:
    """8-connected components of ``mask`` with descriptors taken from raw ``phi``.

    Regions smaller than ``min_region_area`` are dropped; survivors are
    numbered 1..N by descending mean instability.
    """
    mask = np.asarray(mask).astype(bool)
    phi = _values(phi)
    raw, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    labels = np.zeros(mask.shape, dtype=np.int32)
    if n == 0:
        return SalientRegionSet(labels, [])

    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(np.ones_like(phi), raw, idx)
    means = ndimage.mean(phi, raw, idx)
    maxes = ndimage.maximum(phi, raw, idx)
    ys, xs = np.indices(mask.shape)
    cx = ndimage.mean(xs.astype(np.float64), raw, idx)
    cy = ndimage.mean(ys.astype(np.float64), raw, idx)
    slices = ndimage.find_objects(raw)

    keep = [i for i in range(n) if areas[i] >= cfg.min_region_area]
    keep.sort(key=lambda i: (-means[i], i))
    regions = []
    for new_id, i in enumerate(keep, start=1):
        sy, sx = slices[i]
        labels[raw == i + 1] = new_id
        regions.append(SalientRegion(
            id=new_id,
            area=int(areas[i]),
            bbox=(int(sx.start), int(sy.start), int(sx.stop - sx.start), int(sy.stop - sy.start)),
            centroid=(float(cx[i]), float(cy[i])),
            mean_phi=float(means[i]),
            max_phi=float(maxes[i]),
        ))
    return SalientRegionSet(labels, regions)


@dataclass
class Detection:
    alpha: float
    phi_hat: np.ndarray
    mask: np.ndarray
    regions: SalientRegionSet


def detect(phi: StabilityField, cfg: SaliencyConfig) -> Detection:
    """Threshold selection, magnification, segmentation and labelling in one call.

    A field with no spread has no threshold; it is treated as having nothing
    above threshold (alpha = +inf), so only the local stage can fire.
    """
    try:
        alpha = select_alpha(phi, cfg)
    except DegenerateField:
        alpha = math.inf
    phi_hat = magnify(phi, cfg, alpha)
    mask = segment(phi_hat, cfg, alpha)
    regions = extract_regions(mask, phi, cfg)
    return Detection(alpha, phi_hat, mask, regions)


def box_iou(a, b) -> float:
    """IoU of two ``(x, y, w, h)`` pixel boxes."""
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ix = max(0, min(ax0 + aw, bx0 + bw) - max(ax0, bx0))
    iy = max(0, min(ay0 + ah, by0 + bh) - max(ay0, by0))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0
