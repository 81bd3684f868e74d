"""Window-by-window orchestration: flow -> mean flow -> advection -> stability -> saliency."""
from __future__ import annotations

import json
import logging
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .advection import AdvectionConfig, advect_grid
from .errors import ConfigError, InputUnreadable, NumericError
from .field_core import VectorField2
from .optical_flow import (FlowParams, MeanFlowAccumulator, SlidingMeanFlow, accumulate,
                           estimate_flow, finalize_mean)
from .saliency import Detection, SaliencyConfig, detect
from .stability import (StabilityField, jacobian_of_flow_map, max_eigenvalue_ctc,
                        stability_exponent)
from .synth import render_field, render_frames, resolve_scene

log = logging.getLogger(__name__)

INPUT_KINDS = ("frames", "flow", "scene")
WINDOW_MODES = ("tumbling", "sliding")
OUTPUTS = frozenset({"phi_map", "phi_hat_map", "mask", "regions_json", "heatmap_image", "timing"})


@dataclass
class PipelineConfig:
    input_kind: str
    input_path: str
    tau: int = 10
    window_mode: str = "tumbling"
    flow: FlowParams = field(default_factory=FlowParams)
    advection: AdvectionConfig | None = None
    saliency: SaliencyConfig = field(default_factory=SaliencyConfig)
    outputs: frozenset = frozenset({"regions_json", "timing"})
    output_dir: str | None = None
    workers: int = 1
    horizon_override: bool = False
    scene_frames: bool = False
    texture_seed: int = 0

    def __post_init__(self):
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"input kind must be one of {INPUT_KINDS}, got {self.input_kind!r}")
        if not self.input_path:
            raise ConfigError("no input given")
        if int(self.tau) < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.window_mode not in WINDOW_MODES:
            raise ConfigError(f"window mode must be one of {WINDOW_MODES}")
        unknown = set(self.outputs) - OUTPUTS
        if unknown:
            raise ConfigError(f"unknown outputs: {sorted(unknown)}")
        if self.advection is None:
            self.advection = AdvectionConfig(horizon_tau=float(self.tau))
        elif self.advection.horizon_tau != float(self.tau) and not self.horizon_override:
            raise ConfigError(
                f"advection horizon {self.advection.horizon_tau} differs from tau {self.tau}; "
                "pass horizon_override to allow it")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class WindowResult:
    index: int
    frame_window: tuple[int, int]
    detection: Detection
    mean_field: VectorField2 | None = None
    stability: StabilityField | None = None

    def regions_doc(self, seed_stride: int = 1) -> dict:
        doc = self.detection.regions.to_json_dict(self.frame_window, self.detection.alpha)
        if seed_stride != 1:
            doc["seed_stride"] = seed_stride
        return doc


@dataclass
class RunSummary:
    windows: list[WindowResult]
    stage_seconds: dict[str, float]
    pixels: int
    skipped_flows: int = 0

    @property
    def regions_per_window(self) -> list[int]:
        return [len(w.detection.regions) for w in self.windows]

    def timing_doc(self) -> dict:
        total = sum(self.stage_seconds.values())
        work = self.pixels * max(len(self.windows), 1)
        return {
            "windows": len(self.windows),
            "stage_seconds": dict(self.stage_seconds),
            "total_seconds": total,
            "pixels_per_second": work / total if total > 0 else None,
        }


class _Clock:
    def __init__(self):
        self.seconds = defaultdict(float)

    @contextmanager
    def __call__(self, stage):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[stage] += time.perf_counter() - t0


def analyze_field(mean: VectorField2, adv: AdvectionConfig, sal: SaliencyConfig,
                  workers: int = 1, clock: _Clock | None = None):
    """Stability and detection for one mean field; returns ``(StabilityField, Detection)``."""
    clock = clock or _Clock()
    with clock("advection"):
        fmap = advect_grid(mean, adv, workers=workers)
    with clock("stability"):
        lam = max_eigenvalue_ctc(jacobian_of_flow_map(fmap))
        phi = stability_exponent(lam, adv.horizon_tau)
    with clock("saliency"):
        det = detect(phi, sal)
    if not np.all(np.isfinite(det.phi_hat)):
        raise NumericError("magnified field is non-finite")
    return phi, det


def _flows(cfg: PipelineConfig, clock: _Clock):
    """Yield ``(flow_index, VectorField2)`` one flow at a time."""
    if cfg.input_kind == "flow":
        for i, (_, fl) in enumerate(io.iter_flows(cfg.input_path)):
            yield i, fl
        return

    if cfg.input_kind == "scene":
        spec = resolve_scene(cfg.input_path)
        if not cfg.scene_frames:
            fld, _ = render_field(spec)
            for i in range(cfg.tau):
                yield i, fld
            return
        frames = iter(render_frames(spec, cfg.tau + 1, cfg.texture_seed))
    else:
        frames = (f for _, f in io.iter_frames(cfg.input_path))

    prev = next(frames, None)
    if prev is None:
        raise InputUnreadable(f"no frames found in {cfg.input_path}")
    for i, frame in enumerate(frames):
        with clock("flow"):
            fl = estimate_flow(prev, frame, cfg.flow)
        yield i, fl
        prev = frame


def _means(cfg: PipelineConfig, clock: _Clock, stats: dict):
    """Yield ``(first_frame, last_frame, mean_field)`` per complete window."""
    tau = cfg.tau
    if cfg.window_mode == "sliding":
        slider = SlidingMeanFlow(tau)
        for i, fl in _flows(cfg, clock):
            with clock("accumulate"):
                mean = slider.push(fl)
            if mean is not None:
                yield i + 1 - tau, i + 1, mean
        return

    acc = None
    start = 0
    for i, fl in _flows(cfg, clock):
        if acc is None:
            acc = MeanFlowAccumulator(tau, fl.shape)
            start = i
        with clock("accumulate"):
            acc = accumulate(acc, fl)
        if acc.full:
            with clock("accumulate"):
                mean = finalize_mean(acc)
            yield start, i + 1, mean
            acc = None
    if acc is not None and acc.count:
        log.warning("skipping partial trailing window of %d/%d flows", acc.count, tau)
        stats["skipped_flows"] = acc.count


def _write_window(res: WindowResult, phi: StabilityField, cfg: PipelineConfig) -> None:
    out = Path(cfg.output_dir)
    stem = out / f"window_{res.index:04d}"
    det = res.detection
    if "phi_map" in cfg.outputs:
        np.save(f"{stem}_phi.npy", phi.phi)
    if "phi_hat_map" in cfg.outputs:
        np.save(f"{stem}_phi_hat.npy", det.phi_hat)
    if "heatmap_image" in cfg.outputs:
        io.write_heatmap(phi.phi, f"{stem}_phi.pgm")
    if "mask" in cfg.outputs:
        io.write_mask(det.mask, f"{stem}_mask.pgm")
    if "regions_json" in cfg.outputs:
        doc = res.regions_doc(cfg.advection.seed_stride)
        Path(f"{stem}_regions.json").write_text(json.dumps(doc, indent=2) + "\n")


def run_pipeline(cfg: PipelineConfig, keep_fields: bool = False) -> RunSummary:
    """Process every complete window of the input.

    Only the accumulator and the current window are held in memory unless
    ``keep_fields`` asks for the per-window mean and stability fields.
    """
    clock = _Clock()
    if cfg.output_dir is not None:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    windows = []
    pixels = 0
    stats = {"skipped_flows": 0}
    for k, (first, last, mean) in enumerate(_means(cfg, clock, stats)):
        pixels = mean.shape.size
        phi, det = analyze_field(mean, cfg.advection, cfg.saliency, cfg.workers, clock)
        res = WindowResult(k, (first, last), det,
                           mean if keep_fields else None, phi if keep_fields else None)
        if cfg.output_dir is not None:
            with clock("io"):
                _write_window(res, phi, cfg)
        windows.append(res)
    summary = RunSummary(windows, dict(clock.seconds), pixels, stats["skipped_flows"])
    if not windows:
        log.warning("input produced no complete window of tau=%d flows", cfg.tau)
    if "timing" in cfg.outputs and cfg.output_dir is not None:
        Path(cfg.output_dir, "timing.json").write_text(json.dumps(summary.timing_doc(), indent=2) + "\n")
    return summary

