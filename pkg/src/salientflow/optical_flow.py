"""Dense optical flow (pyramidal Horn-Schunck) and temporal mean-flow accumulation."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ShapeMismatch, WindowFull, WindowIncomplete
from .field_core import GridShape, VectorField2

LUMA = (0.299, 0.587, 0.114)
# The estimator works on 8-bit scale intensities so the smoothness weight keeps
# its conventional magnitude even though frames are stored in [0, 1].
INTENSITY_SCALE = 255.0


class Frame:
    """Grayscale frame, intensities in ``[0, 1]``, stored as ``(height, width)``."""

    __slots__ = ("intensity", "shape")

    def __init__(self, intensity):
        arr = np.array(intensity, dtype=np.float64, copy=True)
        if arr.ndim == 3:
            arr = to_grayscale(arr)
        if arr.ndim != 2:
            raise ShapeMismatch(f"frame must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ConfigError("frame intensities must be finite and lie in [0, 1]")
        arr.setflags(write=False)
        self.intensity = arr
        self.shape = GridShape.of(arr)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]


@dataclass(frozen=True)
class FlowParams:
    smoothness_weight: float = 40.0
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    iterations_per_level: int = 100
    convergence_eps: float = 1e-4

    def __post_init__(self):
        if not self.smoothness_weight > 0:
            raise ConfigError("smoothness_weight must be positive")
        if int(self.pyramid_levels) < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if not (0.0 < self.pyramid_scale < 1.0):
            raise ConfigError("pyramid_scale must lie in (0, 1)")
        if int(self.iterations_per_level) < 1:
            raise ConfigError("iterations_per_level must be >= 1")
        if not self.convergence_eps > 0:
            raise ConfigError("convergence_eps must be positive")


# 5-point derivative and the Horn-Schunck neighbourhood average
_DERIV = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_HS_AVG = np.array([[1.0, 2.0, 1.0], [2.0, 0.0, 2.0], [1.0, 2.0, 1.0]]) / 12.0


def _resample(img: np.ndarray, out_shape, order: int = 1) -> np.ndarray:
    """Periodic resampling; output pixel ``i`` reads input coordinate ``i * n_in / n_out``."""
    h, w = img.shape
    oh, ow = out_shape
    yy = np.arange(oh) * (h / oh)
    xx = np.arange(ow) * (w / ow)
    gy, gx = np.meshgrid(yy, xx, indexing="ij")
    return ndimage.map_coordinates(img, [gy, gx], order=order, mode="grid-wrap")


def _pyramid(img: np.ndarray, levels: int, scale: float) -> list[np.ndarray]:
    pyr = [img]
    sigma = 1.0 / (2.0 * scale)
    for _ in range(1, levels):
        prev = pyr[-1]
        oh = max(2, int(round(prev.shape[0] * scale)))
        ow = max(2, int(round(prev.shape[1] * scale)))
        if (oh, ow) == prev.shape:
            break
        blurred = ndimage.gaussian_filter(prev, sigma, mode="wrap")
        pyr.append(_resample(blurred, (oh, ow)))
    return pyr


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(img, [gy + v, gx + u], order=3, mode="grid-wrap")


def _hs_level(i1, i2, u, v, alpha2, iterations, eps):
    """Refine ``(u, v)`` on one pyramid level: warp once, then Jacobi sweeps."""
    i2w = _warp(i2, u, v)
    ix = 0.5 * (ndimage.correlate1d(i1, _DERIV, axis=1, mode="wrap")
                + ndimage.correlate1d(i2w, _DERIV, axis=1, mode="wrap"))
    iy = 0.5 * (ndimage.correlate1d(i1, _DERIV, axis=0, mode="wrap")
                + ndimage.correlate1d(i2w, _DERIV, axis=0, mode="wrap"))
    it = i2w - i1
    denom = alpha2 + ix * ix + iy * iy
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    for _ in range(iterations):
        ua = ndimage.correlate(u + du, _HS_AVG, mode="wrap") - u
        va = ndimage.correlate(v + dv, _HS_AVG, mode="wrap") - v
        r = (ix * ua + iy * va + it) / denom
        du_new = ua - ix * r
        dv_new = va - iy * r
        change = max(np.max(np.abs(du_new - du)), np.max(np.abs(dv_new - dv)))
        du, dv = du_new, dv_new
        if change < eps:
            break
    return u + du, v + dv


def estimate_flow(prev: Frame, nxt: Frame, params: FlowParams | None = None) -> VectorField2:
    """Dense flow ``(u, v)`` with ``prev(x, y) ~ next(x + u, y + v)``.

    Coarse-to-fine Horn-Schunck: each level warps ``next`` by the upsampled
    coarser estimate and solves for the increment. Frame borders are treated
    as periodic throughout.
    """
    params = params or FlowParams()
    if prev.shape != nxt.shape:
        raise ShapeMismatch(f"frame shapes differ: {prev.shape} vs {nxt.shape}")
    i1 = prev.intensity * INTENSITY_SCALE
    i2 = nxt.intensity * INTENSITY_SCALE
    p1 = _pyramid(i1, params.pyramid_levels, params.pyramid_scale)
    p2 = _pyramid(i2, len(p1), params.pyramid_scale)
    u = np.zeros(p1[-1].shape)
    v = np.zeros(p1[-1].shape)
    for lvl in range(len(p1) - 1, -1, -1):
        shape = p1[lvl].shape
        if u.shape != shape:
            sy = shape[0] / u.shape[0]
            sx = shape[1] / u.shape[1]
            u = _resample(u, shape) * sx
            v = _resample(v, shape) * sy
        u, v = _hs_level(p1[lvl], p2[lvl], u, v, params.smoothness_weight,
                         params.iterations_per_level, params.convergence_eps)
    return VectorField2(u, v)


class MeanFlowAccumulator:
    """Running sum of ``tau`` flow fields; the mean is available once full."""

    def __init__(self, tau: int, shape: GridShape):
        if int(tau) < 1:
            raise ConfigError(f"tau must be >= 1, got {tau}")
        self.tau = int(tau)
        self.shape = shape
        self.count = 0
        self.sum_u = np.zeros(shape.array_shape)
        self.sum_v = np.zeros(shape.array_shape)

    @property
    def full(self) -> bool:
        return self.count == self.tau


def accumulate(acc: MeanFlowAccumulator, flow: VectorField2) -> MeanFlowAccumulator:
    """Return a new accumulator with ``flow`` added; ``acc`` is left unchanged."""
    if acc.count >= acc.tau:
        raise WindowFull(f"accumulator already holds tau={acc.tau} flows")
    if flow.shape != acc.shape:
        raise ShapeMismatch(f"flow {flow.shape} does not match accumulator {acc.shape}")
    out = MeanFlowAccumulator(acc.tau, acc.shape)
    out.sum_u = acc.sum_u + flow.u
    out.sum_v = acc.sum_v + flow.v
    out.count = acc.count + 1
    return out


def finalize_mean(acc: MeanFlowAccumulator) -> VectorField2:
    if acc.count < acc.tau:
        raise WindowIncomplete(f"window has {acc.count} of tau={acc.tau} flows")
    return VectorField2(acc.sum_u / acc.tau, acc.sum_v / acc.tau)


class SlidingMeanFlow:
    """Mean of the most recent ``tau`` flows, emitted after every flow once primed."""

    def __init__(self, tau: int):
        if int(tau) < 1:
            raise ConfigError(f"tau must be >= 1, got {tau}")
        self.tau = int(tau)
        self._window: deque[VectorField2] = deque(maxlen=self.tau)

    def push(self, flow: VectorField2) -> VectorField2 | None:
        self._window.append(flow)
        if len(self._window) < self.tau:
            return None
        su = sum((f.u for f in self._window), np.zeros(flow.u.shape))
        sv = sum((f.v for f in self._window), np.zeros(flow.v.shape))
        return VectorField2(su / self.tau, sv / self.tau)
