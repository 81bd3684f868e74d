"""Synthetic crowd-flow scenes with known ground truth.

A scene is a list of elements whose velocity contributions are summed. Each
element may also contribute ground-truth boxes (``x, y, w, h`` in pixels).
Scenes round-trip through a YAML document, and a few named scenes ship as
fixture files in ``salientflow/fixtures``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage

from .advection import AdvectionConfig, advect_points
from .errors import ConfigError, InputUnreadable, SpecOutOfBounds
from .field_core import GridShape, VectorField2
from .optical_flow import Frame

KINDS = (
    "uniform_lane", "saddle", "rotation", "shear",
    "bottleneck_channel", "counterflow_band", "noise_patch",
)
FIXTURES = ("bottleneck-64", "counterflow-64", "noise-injection-64")
SADDLE_BOX_HALF = 4


@dataclass(frozen=True)
class SceneElement:
    kind: str
    bbox: tuple[float, float, float, float] | None = None
    center: tuple[float, float] | None = None
    radius: float | None = None
    magnitude: float = 1.0
    direction: tuple[float, float] | None = None
    rng_seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scene element kind {self.kind!r}")
        if self.kind == "noise_patch" and (self.rng_seed is None or self.bbox is None):
            raise ConfigError("noise_patch needs both bbox and rng_seed")
        if self.kind in ("bottleneck_channel", "counterflow_band") and self.bbox is None:
            raise ConfigError(f"{self.kind} needs a bbox")
        if self.direction is not None:
            d = np.asarray(self.direction, dtype=np.float64)
            n = float(np.hypot(*d))
            if n == 0:
                raise ConfigError("direction must be non-zero")
            object.__setattr__(self, "direction", (float(d[0] / n), float(d[1] / n)))

    def unit(self) -> np.ndarray:
        return np.array(self.direction if self.direction is not None else (1.0, 0.0))


@dataclass(frozen=True)
class SceneSpec:
    shape: GridShape
    elements: tuple[SceneElement, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        w, h = self.shape.width, self.shape.height
        for el in self.elements:
            if el.bbox is not None:
                x, y, bw, bh = el.bbox
                if bw <= 0 or bh <= 0 or x < 0 or y < 0 or x + bw > w or y + bh > h:
                    raise SpecOutOfBounds(f"{el.kind} bbox {el.bbox} outside {w}x{h} frame")
            if el.center is not None:
                cx, cy = el.center
                if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
                    raise SpecOutOfBounds(f"{el.kind} center {el.center} outside {w}x{h} frame")


@dataclass
class GroundTruth:
    salient_boxes: list[tuple[int, int, int, int]] = field(default_factory=list)
    analytic_field: dict | None = None


def _inside(x, y, bbox):
    bx, by, bw, bh = bbox
    return (x >= bx) & (x < bx + bw) & (y >= by) & (y < by + bh)


def _envelope(x, y, cx, cy, radius):
    if radius is None:
        return np.ones_like(x)
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * radius**2))


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _smoothstep_slope(t):
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 6.0 * t * (1.0 - t), 0.0)


def _frame_center(shape: GridShape):
    return (shape.width - 1) / 2.0, (shape.height - 1) / 2.0


def _clip_box(box, shape: GridShape):
    x, y, w, h = (int(round(c)) for c in box)
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, shape.width), min(y + h, shape.height)
    return (x0, y0, x1 - x0, y1 - y0)


def element_field(el: SceneElement, shape: GridShape, x: np.ndarray, y: np.ndarray):
    """Velocity contribution ``(u, v)`` and ground-truth boxes of one element."""
    m = float(el.magnitude)
    zeros = np.zeros_like(x)
    boxes = []
    cx, cy = el.center if el.center is not None else _frame_center(shape)

    if el.kind == "uniform_lane":
        d = el.unit()
        mask = _inside(x, y, el.bbox) if el.bbox is not None else np.ones_like(x, dtype=bool)
        return m * d[0] * mask, m * d[1] * mask, boxes

    if el.kind == "saddle":
        env = _envelope(x, y, cx, cy, el.radius)
        r = el.radius if el.radius is not None else SADDLE_BOX_HALF
        boxes.append(_clip_box((cx - r, cy - r, 2 * r + 1, 2 * r + 1), shape))
        return m * (x - cx) * env, -m * (y - cy) * env, boxes

    if el.kind == "rotation":
        env = _envelope(x, y, cx, cy, el.radius)
        return -m * (y - cy) * env, m * (x - cx) * env, boxes

    if el.kind == "shear":
        mask = _inside(x, y, el.bbox) if el.bbox is not None else np.ones_like(x, dtype=bool)
        return m * (y - cy) * mask, zeros, boxes

    if el.kind == "bottleneck_channel":
        return _bottleneck(el, x, y) + (boxes + [_clip_box(el.bbox, shape)],)

    if el.kind == "counterflow_band":
        d = el.unit()
        band = _inside(x, y, el.bbox)
        sign = np.where(band, -1.0, 1.0)
        bx, by, bw, bh = el.bbox
        # the shear layer spans the last pixel on each side of the band edge
        if abs(d[0]) >= abs(d[1]):
            boxes.append(_clip_box((bx, by - 1, bw, 2), shape))
            boxes.append(_clip_box((bx, by + bh - 1, bw, 2), shape))
        else:
            boxes.append(_clip_box((bx - 1, by, 2, bh), shape))
            boxes.append(_clip_box((bx + bw - 1, by, 2, bh), shape))
        return m * d[0] * sign, m * d[1] * sign, boxes

    if el.kind == "noise_patch":
        rng = np.random.default_rng(el.rng_seed)
        inside = _inside(x, y, el.bbox)
        du = rng.uniform(-m, m, size=x.shape)
        dv = rng.uniform(-m, m, size=x.shape)
        boxes.append(_clip_box(el.bbox, shape))
        return du * inside, dv * inside, boxes

    raise ConfigError(f"unhandled element kind {el.kind!r}")  # pragma: no cover


def _bottleneck(el: SceneElement, x, y):
    """Converging-then-parallel flow through the constriction ``el.bbox``.

    Along the travel direction the speed ramps smoothly from ``magnitude`` to
    twice that across the box; the cross-stream component pulls streamlines
    toward the box's centre line so that the flux is conserved (the field is
    divergence free), which halves the width of the moving crowd.
    """
    d = el.unit()
    nrm = np.array([-d[1], d[0]])
    bx, by, bw, bh = el.bbox
    c = np.array([bx + (bw - 1) / 2.0, by + (bh - 1) / 2.0])
    length = abs(d[0]) * bw + abs(d[1]) * bh
    s = (x - c[0]) * d[0] + (y - c[1]) * d[1]
    n = (x - c[0]) * nrm[0] + (y - c[1]) * nrm[1]
    t = (s + length / 2.0) / length
    g = 1.0 + _smoothstep(t)
    dg = _smoothstep_slope(t) / length
    m = float(el.magnitude)
    along = m * g
    across = -m * dg * n
    return along * d[0] + across * nrm[0], along * d[1] + across * nrm[1]


def render_field(spec: SceneSpec) -> tuple[VectorField2, GroundTruth]:
    shape = spec.shape
    y, x = np.mgrid[0 : shape.height, 0 : shape.width].astype(np.float64)
    u = np.zeros_like(x)
    v = np.zeros_like(x)
    boxes = []
    for el in spec.elements:
        du, dv, b = element_field(el, shape, x, y)
        u += du
        v += dv
        boxes.extend(b)
    analytic = None
    if len(spec.elements) == 1 and spec.elements[0].kind != "noise_patch":
        el = spec.elements[0]
        analytic = {"kind": el.kind, "magnitude": el.magnitude,
                    "center": list(el.center) if el.center else list(_frame_center(shape))}
    return VectorField2(u, v), GroundTruth(boxes, analytic)


def make_texture(shape: GridShape, seed: int, corr_sigma: float = 2.0) -> np.ndarray:
    """Periodic, smoothed random texture rescaled to ``[0.1, 0.9]``."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(shape.array_shape)
    tex = ndimage.gaussian_filter(noise, corr_sigma, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return 0.1 + 0.8 * tex


def sample_periodic(texture: np.ndarray, x, y) -> np.ndarray:
    """Cubic-spline sample of a periodic image at real coordinates."""
    return ndimage.map_coordinates(texture, [y, x], order=3, mode="grid-wrap")


def render_frames(spec: SceneSpec, n_frames: int, texture_seed: int = 0,
                  step_h: float = 0.25) -> list[Frame]:
    """Frames of a texture carried along by the scene's (steady) field.

    Frame ``k`` shows at pixel ``p`` the texture found at the point that
    reaches ``p`` after ``k`` frames, so consecutive frames are related by the
    scene field. The texture is periodic and wraps at the frame edges.
    """
    if n_frames < 2:
        raise ConfigError("n_frames must be at least 2")
    fld, _ = render_field(spec)
    tex = make_texture(spec.shape, texture_seed)
    back = VectorField2(-fld.u, -fld.v)
    y, x = np.mgrid[0 : spec.shape.height, 0 : spec.shape.width].astype(np.float64)
    frames = [Frame(tex.copy())]
    if not (np.any(fld.u) or np.any(fld.v)):
        return frames + [Frame(tex.copy()) for _ in range(n_frames - 1)]
    step = AdvectionConfig(horizon_tau=1.0, step_h=step_h)
    px, py = x, y
    for _ in range(1, n_frames):
        px, py = advect_points(back, px, py, step)
        frames.append(Frame(np.clip(sample_periodic(tex, px, py), 0.0, 1.0)))
    return frames


# -- serialisation --------------------------------------------------------

def _el_to_dict(el: SceneElement) -> dict:
    out = {"kind": el.kind}
    for key in ("bbox", "center", "radius", "direction", "rng_seed"):
        val = getattr(el, key)
        if val is not None:
            out[key] = list(val) if isinstance(val, tuple) else val
    out["magnitude"] = el.magnitude
    return out


def spec_to_dict(spec: SceneSpec) -> dict:
    doc = {"width": spec.shape.width, "height": spec.shape.height,
           "elements": [_el_to_dict(e) for e in spec.elements]}
    if spec.name:
        doc = {"name": spec.name, **doc}
    return doc


def spec_from_dict(doc: dict) -> SceneSpec:
    try:
        shape = GridShape(int(doc["width"]), int(doc["height"]))
        elements = []
        for e in doc.get("elements", []):
            e = dict(e)
            for key in ("bbox", "center", "direction"):
                if e.get(key) is not None:
                    e[key] = tuple(float(c) for c in e[key])
            elements.append(SceneElement(**e))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed scene spec: {exc}") from exc
    return SceneSpec(shape, tuple(elements), name=str(doc.get("name", "")))


def dump_spec(spec: SceneSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=None)


def save_spec(spec: SceneSpec, path) -> None:
    Path(path).write_text(dump_spec(spec))


def load_spec(path) -> SceneSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputUnreadable(f"cannot read scene spec {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"scene spec {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"scene spec {path} must be a mapping")
    return spec_from_dict(doc)


def load_fixture(name: str) -> SceneSpec:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    ref = resources.files("salientflow") / "fixtures" / f"{name}.yaml"
    return spec_from_dict(yaml.safe_load(ref.read_text()))


def resolve_scene(name_or_path) -> SceneSpec:
    """Accept a fixture name or a path to a YAML scene spec."""
    if str(name_or_path) in FIXTURES:
        return load_fixture(str(name_or_path))
    return load_spec(name_or_path)
