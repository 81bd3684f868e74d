import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from salientflow.errors import ConfigError, ShapeMismatch, WindowFull, WindowIncomplete
from salientflow.field_core import GridShape, VectorField2
from salientflow.optical_flow import (Frame, FlowParams, MeanFlowAccumulator, SlidingMeanFlow,
                                      accumulate, estimate_flow, finalize_mean, to_grayscale)
from salientflow.synth import SceneElement, SceneSpec, make_texture, render_frames

MARGIN = 8


def translated_pair(n, u, v, seed=0):
    spec = SceneSpec(GridShape(n, n), (SceneElement("uniform_lane", magnitude=np.hypot(u, v),
                                                    direction=(u, v)),))
    return render_frames(spec, 2, texture_seed=seed)


def endpoint_error(flow, u, v):
    e = np.hypot(flow.u - u, flow.v - v)
    return e[MARGIN:-MARGIN, MARGIN:-MARGIN].mean()


def test_identical_frames_zero_flow():
    f = Frame(make_texture(GridShape(48, 40), 3))
    fl = estimate_flow(f, f)
    assert np.max(fl.speed()) <= 1e-6


@pytest.mark.parametrize("params", [
    FlowParams(),
    FlowParams(smoothness_weight=1.0, pyramid_levels=1, iterations_per_level=5),
    FlowParams(smoothness_weight=500.0, pyramid_levels=4, pyramid_scale=0.7),
])
def test_zero_motion_any_params(params):
    f = Frame(make_texture(GridShape(40, 40), 9))
    assert np.max(estimate_flow(f, f, params).speed()) <= 1e-6


def test_one_pixel_translation():
    f0, f1 = translated_pair(128, 1.0, 0.0)
    assert endpoint_error(estimate_flow(f0, f1, FlowParams()), 1.0, 0.0) <= 0.25


def test_two_pixel_translation_two_levels():
    f0, f1 = translated_pair(128, 0.0, 2.0)
    assert endpoint_error(estimate_flow(f0, f1, FlowParams(pyramid_levels=2)), 0.0, 2.0) <= 0.35


def test_subpixel_translation():
    f0, f1 = translated_pair(64, 0.5, 0.0, seed=4)
    assert endpoint_error(estimate_flow(f0, f1), 0.5, 0.0) <= 0.25


def test_shift_equivariance():
    f0, f1 = translated_pair(64, 0.7, -0.4, seed=2)
    base = estimate_flow(f0, f1)
    # offset divisible by 2**(levels-1) so every pyramid level shifts by whole pixels
    dy, dx = 4, 8
    s0 = Frame(np.roll(f0.intensity, (dy, dx), axis=(0, 1)))
    s1 = Frame(np.roll(f1.intensity, (dy, dx), axis=(0, 1)))
    shifted = estimate_flow(s0, s1)
    assert np.max(np.abs(np.roll(base.u, (dy, dx), axis=(0, 1)) - shifted.u)) <= 1e-6
    assert np.max(np.abs(np.roll(base.v, (dy, dx), axis=(0, 1)) - shifted.v)) <= 1e-6


def test_deterministic():
    f0, f1 = translated_pair(48, 1.0, 0.5)
    a, b = estimate_flow(f0, f1), estimate_flow(f0, f1)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        estimate_flow(Frame(np.zeros((8, 8))), Frame(np.zeros((8, 9))))


def test_frame_validation_and_luma():
    with pytest.raises(ConfigError):
        Frame(np.full((4, 4), 1.5))
    rgb = np.zeros((3, 3, 3))
    rgb[..., 1] = 1.0
    assert np.allclose(Frame(rgb).intensity, 0.587)
    assert to_grayscale(np.ones((2, 2, 3)))[0, 0] == pytest.approx(1.0)


def test_flow_params_validation():
    with pytest.raises(ConfigError):
        FlowParams(pyramid_scale=1.0)
    with pytest.raises(ConfigError):
        FlowParams(smoothness_weight=0)


# -- accumulation -----------------------------------------------------------

SHAPE = GridShape(5, 4)


def const(u, v):
    return VectorField2.constant(SHAPE, u, v)


def test_first_accumulate():
    acc = MeanFlowAccumulator(3, SHAPE)
    fl = const(1.5, -2)
    new = accumulate(acc, fl)
    assert new.count == 1 and acc.count == 0
    assert np.array_equal(new.sum_u, fl.u) and np.array_equal(new.sum_v, fl.v)


def test_mean_of_constant_flows():
    acc = MeanFlowAccumulator(4, SHAPE)
    for _ in range(4):
        acc = accumulate(acc, const(2, -1))
    m = finalize_mean(acc)
    assert np.all(m.u == 2) and np.all(m.v == -1)


def test_two_term_average():
    acc = accumulate(accumulate(MeanFlowAccumulator(2, SHAPE), const(1, 0)), const(3, 0))
    assert np.all(finalize_mean(acc).u == 2.0)


def test_zero_and_pixel_means():
    acc = MeanFlowAccumulator(4, SHAPE)
    for _ in range(4):
        acc = accumulate(acc, const(0, 0))
    assert not finalize_mean(acc).u.any()
    acc = MeanFlowAccumulator(3, SHAPE)
    for k in (1, 2, 3):
        acc = accumulate(acc, const(k, 0))
    assert finalize_mean(acc).u[2, 3] == 2.0


def test_window_errors():
    acc = accumulate(MeanFlowAccumulator(1, SHAPE), const(1, 1))
    with pytest.raises(WindowFull):
        accumulate(acc, const(1, 1))
    with pytest.raises(WindowIncomplete):
        finalize_mean(MeanFlowAccumulator(2, SHAPE))
    with pytest.raises(ShapeMismatch):
        accumulate(MeanFlowAccumulator(2, SHAPE), VectorField2.zeros(GridShape(3, 3)))


def _random_flows(seed, tau):
    r = np.random.default_rng(seed)
    return [VectorField2(r.normal(0, 3, SHAPE.array_shape), r.normal(0, 3, SHAPE.array_shape))
            for _ in range(tau)]


def _mean_of(flows):
    acc = MeanFlowAccumulator(len(flows), SHAPE)
    for f in flows:
        acc = accumulate(acc, f)
    return finalize_mean(acc)


def test_matches_one_shot_oracle():
    flows = _random_flows(7, 6)
    m = _mean_of(flows)
    oracle_u = [[sum(f.u[y, x] for f in flows) / len(flows) for x in range(SHAPE.width)]
                for y in range(SHAPE.height)]
    assert np.max(np.abs(m.u - np.array(oracle_u))) <= 1e-12
    assert np.max(np.abs(m.v - np.mean([f.v for f in flows], axis=0))) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), tau=st.integers(1, 6), perm_seed=st.integers(0, 10**6))
def test_order_invariance(seed, tau, perm_seed):
    flows = _random_flows(seed, tau)
    order = np.random.default_rng(perm_seed).permutation(tau)
    a = _mean_of(flows)
    b = _mean_of([flows[i] for i in order])
    assert np.max(np.abs(a.u - b.u)) <= 1e-12 and np.max(np.abs(a.v - b.v)) <= 1e-12


def test_sliding_mean():
    flows = [const(k, 0) for k in range(5)]
    s = SlidingMeanFlow(3)
    out = [s.push(f) for f in flows]
    assert out[0] is None and out[1] is None
    assert [float(m.u[0, 0]) for m in out[2:]] == [1.0, 2.0, 3.0]
