"""Regular-grid field containers, bilinear sampling and finite differences.

Arrays are stored row-major as ``(height, width)`` so that the flat index of
pixel ``(x, y)`` is ``y * width + x``. ``x`` grows rightward, ``y`` downward.
Everything is float64 internally.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeMismatch


@dataclass(frozen=True)
class GridShape:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 2 or int(self.height) < 2:
            raise ConfigError(f"grid must be at least 2x2, got {self.width}x{self.height}")

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def array_shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def of(cls, arr: np.ndarray) -> "GridShape":
        h, w = arr.shape
        return cls(int(w), int(h))


class BoundaryPolicy(str, enum.Enum):
    CLAMP = "clamp"
    ZERO = "zero"
    REFLECT = "reflect"


def _frozen(a, name: str, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        if shape is not None and arr.ndim == 1 and arr.size == shape.size:
            arr = arr.reshape(shape.array_shape)
        else:
            raise ShapeMismatch(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class ScalarField:
    """Immutable scalar field on a regular grid."""

    __slots__ = ("values", "shape")

    def __init__(self, values, shape: GridShape | None = None):
        self.values = _frozen(values, "values", shape)
        self.shape = GridShape.of(self.values)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __repr__(self):
        return f"ScalarField({self.shape.width}x{self.shape.height})"


class VectorField2:
    """Immutable 2-vector field ``(u, v)`` in pixels/frame."""

    __slots__ = ("u", "v", "shape")

    def __init__(self, u, v, shape: GridShape | None = None):
        self.u = _frozen(u, "u", shape)
        self.v = _frozen(v, "v", shape)
        if self.u.shape != self.v.shape:
            raise ShapeMismatch(f"u {self.u.shape} and v {self.v.shape} differ")
        self.shape = GridShape.of(self.u)

    @classmethod
    def zeros(cls, shape: GridShape) -> "VectorField2":
        z = np.zeros(shape.array_shape)
        return cls(z, z)

    @classmethod
    def constant(cls, shape: GridShape, u: float, v: float) -> "VectorField2":
        return cls(np.full(shape.array_shape, float(u)), np.full(shape.array_shape, float(v)))

    @classmethod
    def from_function(cls, shape: GridShape, fn) -> "VectorField2":
        """Build from ``fn(x, y) -> (u, v)`` evaluated on the pixel grid."""
        y, x = np.mgrid[0 : shape.height, 0 : shape.width].astype(np.float64)
        u, v = fn(x, y)
        return cls(np.broadcast_to(u, x.shape), np.broadcast_to(v, x.shape))

    def speed(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def __repr__(self):
        return f"VectorField2({self.shape.width}x{self.shape.height})"


def _reflect(c: np.ndarray, n: int) -> np.ndarray:
    period = 2.0 * (n - 1)
    m = np.mod(c, period)
    return np.where(m > n - 1, period - m, m)


def bilinear(arrays, x, y, policy: BoundaryPolicy | str = BoundaryPolicy.CLAMP):
    """Sample each 2-D array in ``arrays`` at the points ``(x, y)``.

    ``x``/``y`` may be scalars or arrays of matching shape. Returns a list with
    one result per input array.
    """
    policy = BoundaryPolicy(policy)
    h, w = arrays[0].shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    if policy is BoundaryPolicy.ZERO:
        ix0 = np.floor(x)
        iy0 = np.floor(y)
        fx = x - ix0
        fy = y - iy0
        ix0 = ix0.astype(np.int64)
        iy0 = iy0.astype(np.int64)
        ix1 = ix0 + 1
        iy1 = iy0 + 1
        vx0 = (ix0 >= 0) & (ix0 < w)
        vx1 = (ix1 >= 0) & (ix1 < w)
        vy0 = (iy0 >= 0) & (iy0 < h)
        vy1 = (iy1 >= 0) & (iy1 < h)
        cx0, cx1 = np.clip(ix0, 0, w - 1), np.clip(ix1, 0, w - 1)
        cy0, cy1 = np.clip(iy0, 0, h - 1), np.clip(iy1, 0, h - 1)
        w00 = (1 - fx) * (1 - fy) * (vx0 & vy0)
        w10 = fx * (1 - fy) * (vx1 & vy0)
        w01 = (1 - fx) * fy * (vx0 & vy1)
        w11 = fx * fy * (vx1 & vy1)
        return [
            w00 * a[cy0, cx0] + w10 * a[cy0, cx1] + w01 * a[cy1, cx0] + w11 * a[cy1, cx1]
            for a in arrays
        ]

    if policy is BoundaryPolicy.CLAMP:
        x = np.clip(x, 0.0, w - 1.0)
        y = np.clip(y, 0.0, h - 1.0)
    else:
        x = _reflect(x, w)
        y = _reflect(y, h)
    # lower node clipped so that the far edge is reached with weight 1
    ix0 = np.minimum(np.floor(x).astype(np.int64), w - 2)
    iy0 = np.minimum(np.floor(y).astype(np.int64), h - 2)
    fx = x - ix0
    fy = y - iy0
    out = []
    for a in arrays:
        top = (1 - fx) * a[iy0, ix0] + fx * a[iy0, ix0 + 1]
        bot = (1 - fx) * a[iy0 + 1, ix0] + fx * a[iy0 + 1, ix0 + 1]
        out.append((1 - fy) * top + fy * bot)
    return out


def sample_bilinear(field: VectorField2, x: float, y: float,
                    policy: BoundaryPolicy | str = BoundaryPolicy.CLAMP) -> tuple[float, float]:
    u, v = bilinear((field.u, field.v), x, y, policy)
    return float(u), float(v)


def sample_bilinear_many(field: VectorField2, xs, ys,
                         policy: BoundaryPolicy | str = BoundaryPolicy.CLAMP):
    """Vectorised :func:`sample_bilinear`; returns ``(u, v)`` arrays."""
    u, v = bilinear((field.u, field.v), xs, ys, policy)
    return u, v


def gradient_central(field: ScalarField, spacing: float = 1.0) -> tuple[ScalarField, ScalarField]:
    """Return ``(d/dx, d/dy)``: central differences inside, one-sided at the borders."""
    dy, dx = np.gradient(field.values, spacing, spacing, edge_order=1)
    return ScalarField(dx), ScalarField(dy)
