"""Command line front-end.

Subcommands: ``analyze``, ``flow``, ``stability``, ``synth``, ``bench``.
Exit codes: 0 success, 1 configuration error, 2 input/format error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import io
from .advection import AdvectionConfig
from .errors import ConfigError, InputUnreadable, SalientFlowError
from .optical_flow import FlowParams, MeanFlowAccumulator, accumulate, estimate_flow, finalize_mean
from .pipeline import OUTPUTS, PipelineConfig, analyze_field, run_pipeline
from .saliency import SaliencyConfig
from .stability import compute_stability
from .synth import render_field, render_frames, resolve_scene

log = logging.getLogger("salientflow")

FLOW_KEYS = {"smoothness_weight": float, "pyramid_levels": int, "pyramid_scale": float,
             "iterations_per_level": int, "convergence_eps": float}
ADVECTION_KEYS = {"horizon_tau": float, "step_h": float, "seed_stride": int, "boundary": str}
SALIENCY_KEYS = {"beta": float, "alpha_mode": str, "alpha_value": float, "local_window": int,
                 "local_k": float, "min_region_area": int, "combine_mode": str,
                 "alpha_floor": float}


def _add_flow_args(p):
    g = p.add_argument_group("optical flow")
    g.add_argument("--smoothness-weight", dest="smoothness_weight", type=float)
    g.add_argument("--pyramid-levels", dest="pyramid_levels", type=int)
    g.add_argument("--pyramid-scale", dest="pyramid_scale", type=float)
    g.add_argument("--iterations", dest="iterations_per_level", type=int)
    g.add_argument("--convergence-eps", dest="convergence_eps", type=float)


def _add_stability_args(p):
    g = p.add_argument_group("advection")
    g.add_argument("--horizon", dest="horizon_tau", type=float,
                   help="integration horizon in frames (defaults to tau)")
    g.add_argument("--step", dest="step_h", type=float)
    g.add_argument("--stride", dest="seed_stride", type=int)
    g.add_argument("--boundary", choices=["clamp", "zero", "reflect"])
    g.add_argument("--workers", type=int)


def _add_saliency_args(p):
    g = p.add_argument_group("saliency")
    g.add_argument("--beta", type=float)
    g.add_argument("--alpha-mode", dest="alpha_mode", choices=["fixed", "percentile", "otsu"])
    g.add_argument("--alpha-value", dest="alpha_value", type=float)
    g.add_argument("--alpha-floor", dest="alpha_floor", type=float)
    g.add_argument("--local-window", dest="local_window", type=int)
    g.add_argument("--local-k", dest="local_k", type=float)
    g.add_argument("--min-area", dest="min_region_area", type=int)
    g.add_argument("--combine", dest="combine_mode", choices=["union", "intersection"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="salientflow", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full pipeline")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--frames", help="directory of numbered PGM/PPM frames")
    src.add_argument("--flows", help="directory of .flo files")
    src.add_argument("--scene", help="scene spec file or fixture name")
    p.add_argument("--config", help="YAML file supplying any option; flags override it")
    p.add_argument("--tau", type=int)
    p.add_argument("--window-mode", dest="window_mode", choices=["tumbling", "sliding"])
    p.add_argument("--scene-frames", dest="scene_frames", action="store_true", default=None,
                   help="render scene input to frames and estimate flow instead of using the field")
    p.add_argument("--texture-seed", dest="texture_seed", type=int)
    p.add_argument("--outputs", help=f"comma list from {sorted(OUTPUTS)}")
    p.add_argument("--out", dest="output_dir")
    _add_flow_args(p)
    _add_stability_args(p)
    _add_saliency_args(p)

    p = sub.add_parser("flow", help="frames -> .flo files")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    _add_flow_args(p)

    p = sub.add_parser("stability", help=".flo window -> instability map")
    p.add_argument("flows", nargs="+", help=".flo files averaged as one window")
    p.add_argument("--out", required=True, help="output stem; writes <stem>.npy and <stem>.pgm")
    _add_stability_args(p)

    p = sub.add_parser("synth", help="scene spec -> frames and/or field")
    p.add_argument("scene", help="scene spec file or fixture name")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", dest="n_frames", type=int, default=0)
    p.add_argument("--texture-seed", dest="texture_seed", type=int, default=0)

    p = sub.add_parser("bench", help="time the stability stage on a fixture")
    p.add_argument("--scene", default="bottleneck-64")
    p.add_argument("--strides", default="1,2,4")
    p.add_argument("--workers", default="1,4")
    p.add_argument("--repeat", type=int, default=3)
    return parser


def _pick(args: dict, keys: dict, base: dict) -> dict:
    out = {}
    for k, cast in keys.items():
        if args.get(k) is not None:
            out[k] = args[k]
        elif k in base:
            out[k] = cast(base[k])
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise InputUnreadable(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return doc


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return sec


def _advection(a: dict, doc: dict, tau: int) -> AdvectionConfig:
    kw = _pick(a, ADVECTION_KEYS, _section(doc, "advection"))
    kw.setdefault("horizon_tau", float(tau))
    return AdvectionConfig(**kw)


def pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    a = vars(args)
    doc = _load_config(a.get("config"))
    sources = {k: a.get(k) or doc.get(k) for k in ("frames", "flows", "scene")}
    given = [k for k, v in sources.items() if v]
    if len(given) != 1:
        raise ConfigError("exactly one of --frames, --flows, --scene is required")
    kind = {"frames": "frames", "flows": "flow", "scene": "scene"}[given[0]]

    def opt(name, default, cast=lambda v: v):
        if a.get(name) is not None:
            return a[name]
        return cast(doc[name]) if name in doc else default

    tau = opt("tau", 10, int)
    adv = _advection(a, doc, tau)
    outputs = opt("outputs", "regions_json,timing")
    if isinstance(outputs, str):
        outputs = [s.strip() for s in outputs.split(",") if s.strip()]
    return PipelineConfig(
        input_kind=kind,
        input_path=str(sources[given[0]]),
        tau=tau,
        window_mode=opt("window_mode", "tumbling"),
        flow=FlowParams(**_pick(a, FLOW_KEYS, _section(doc, "flow"))),
        advection=adv,
        saliency=SaliencyConfig(**_pick(a, SALIENCY_KEYS, _section(doc, "saliency"))),
        outputs=frozenset(outputs),
        output_dir=opt("output_dir", None),
        workers=opt("workers", 1, int),
        horizon_override=adv.horizon_tau != float(tau),
        scene_frames=bool(opt("scene_frames", False)),
        texture_seed=opt("texture_seed", 0, int),
    )


def cmd_analyze(args) -> int:
    cfg = pipeline_config(args)
    summary = run_pipeline(cfg)
    report = {
        "windows": [
            {"index": w.index, "frame_window": list(w.frame_window),
             "alpha_used": w.regions_doc()["alpha_used"], "regions": len(w.detection.regions)}
            for w in summary.windows
        ],
        "skipped_flows": summary.skipped_flows,
        "timing": summary.timing_doc(),
    }
    print(json.dumps(report, indent=2))
    return 0


def cmd_flow(args) -> int:
    params = FlowParams(**_pick(vars(args), FLOW_KEYS, {}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prev = None
    n = 0
    for _, frame in io.iter_frames(args.frames):
        if prev is not None:
            io.write_flo(estimate_flow(prev, frame, params), out / f"flow_{n:05d}.flo")
            n += 1
        prev = frame
    if n == 0:
        raise InputUnreadable(f"need at least two frames in {args.frames}")
    print(f"wrote {n} flow files to {out}")
    return 0


def cmd_stability(args) -> int:
    flows = [io.read_flo(p) for p in args.flows]
    acc = MeanFlowAccumulator(len(flows), flows[0].shape)
    for fl in flows:
        acc = accumulate(acc, fl)
    a = vars(args)
    cfg = _advection(a, {}, len(flows))
    phi = compute_stability(finalize_mean(acc), cfg, workers=a.get("workers") or 1)
    np.save(f"{args.out}.npy", phi.phi)
    io.write_heatmap(phi.phi, f"{args.out}.pgm")
    print(f"phi range [{phi.phi.min():.6g}, {phi.phi.max():.6g}] -> {args.out}.npy, {args.out}.pgm")
    return 0


def cmd_synth(args) -> int:
    spec = resolve_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fld, gt = render_field(spec)
    io.write_flo(fld, out / "field.flo")
    (out / "ground_truth.json").write_text(json.dumps(
        {"salient_boxes": [list(b) for b in gt.salient_boxes]}, indent=2) + "\n")
    if args.n_frames:
        for i, frame in enumerate(render_frames(spec, args.n_frames, args.texture_seed)):
            io.write_frame(frame, out / f"frame_{i:05d}.pgm")
    print(f"wrote field{' and %d frames' % args.n_frames if args.n_frames else ''} to {out}")
    return 0


def cmd_bench(args) -> int:
    spec = resolve_scene(args.scene)
    fld, _ = render_field(spec)
    sal = SaliencyConfig()
    rows = []
    for stride in (int(s) for s in args.strides.split(",")):
        for workers in (int(w) for w in args.workers.split(",")):
            adv = AdvectionConfig(seed_stride=stride)
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                analyze_field(fld, adv, sal, workers)
                best = min(best, time.perf_counter() - t0)
            rows.append({"stride": stride, "workers": workers, "seconds": best,
                         "pixels_per_second": fld.shape.size / best})
    print(json.dumps(rows, indent=2))
    return 0


COMMANDS = {"analyze": cmd_analyze, "flow": cmd_flow, "stability": cmd_stability,
            "synth": cmd_synth, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SalientFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
