"""Quantitative constants: reach radii, derivative bounds, norm ratios."""

import math

import numpy as np
import pytest

from atlasdiffeo.engine import (
    compute_constants,
    estimate_first_second_exp_bounds,
    estimate_grenz_exp,
    estimate_log_constants,
    estimate_quot_norm,
    estimate_rad_exp_fib_inv,
)
from atlasdiffeo.errors import DegenerateRegion, SigmaOutOfRange
from atlasdiffeo.oracles import flat_oracle
from atlasdiffeo.spec import load_manifold_from_dict


def _chart_with_metric(rows, d, norm="euclidean", extent=2.0):
    data = {
        "charts": [
            {
                "id": "c",
                "dim": d,
                "domain": {"shape": "box", "extent": [extent] * d, "norm": norm},
                "metric": {"rows": rows},
                "r": 0.25,
                "R": 0.1,
                "epsilon": 0.05,
            }
        ]
    }
    return load_manifold_from_dict(data).chart("c")


def test_reach_radius_flat(flat1):
    chart = flat1.spec.chart("k0")
    # inner ball radius 0.75, boundary at 1.0: straight lines run 0.25
    # before exiting, located by bisection to within one grid cell.
    val = estimate_grenz_exp(chart, region="inner", n=16)
    assert 0.25 - 0.25 / 16 <= val <= 0.25 + 1e-12
    finer = estimate_grenz_exp(chart, region="inner", n=32)
    assert finer >= val - 1e-9  # refinement never shrinks the estimate


def test_reach_radius_conservative(flat1):
    chart = flat1.spec.chart("k0")
    v64 = estimate_grenz_exp(chart, region="inner", n=64)
    assert v64 <= 0.25 + 1e-12
    assert v64 == pytest.approx(0.25, abs=0.25 / 64)


def test_norm_ratio_identity_metric():
    c = _chart_with_metric([["1", "0"], ["0", "1"]], 2)
    assert estimate_quot_norm(c, region="inner", n=8) == pytest.approx(1.0, abs=1e-9)


def test_norm_ratio_anisotropic_metric():
    c = _chart_with_metric([["1", "0"], ["0", "4"]], 2)
    assert estimate_quot_norm(c, region="inner", n=8) == pytest.approx(0.5, abs=1e-9)


def test_norm_ratio_uniform_scaling():
    c = _chart_with_metric([["4", "0"], ["0", "4"]], 2)
    # coordinate norm / metric norm = 1/2, metric norm / coord = 2;
    # the quotient compares against the *unit* coordinate ball both ways,
    # so a uniform scaling cancels.
    assert estimate_quot_norm(c, region="inner", n=8) == pytest.approx(1.0, abs=1e-9)


def test_norm_ratio_sup_box():
    d = 3
    c = _chart_with_metric(
        [["1" if i == j else "0" for j in range(d)] for i in range(d)], d, norm="sup"
    )
    assert estimate_quot_norm(c, region="inner", n=6) == pytest.approx(
        1 / math.sqrt(d), abs=1e-9
    )


def test_inverse_radius_flat_and_sigma_monotone(flat1):
    chart = flat1.spec.chart("k0")
    g = estimate_grenz_exp(chart, region="inner", n=16)
    lo = estimate_rad_exp_fib_inv(chart, region="inner", sigma=0.25, n=16, exp_radius=g)
    hi = estimate_rad_exp_fib_inv(chart, region="inner", sigma=0.75, n=16, exp_radius=g)
    mid = estimate_rad_exp_fib_inv(chart, region="inner", sigma=0.5, n=16, exp_radius=g)
    assert lo <= mid <= hi or hi <= mid <= lo  # monotone one way
    # flat charts have no curvature correction: the cap binds
    assert mid <= g + 1e-12
    with pytest.raises(SigmaOutOfRange):
        estimate_rad_exp_fib_inv(chart, region="inner", sigma=1.5, n=16, exp_radius=g)


def test_exp_derivative_bounds_flat(flat2):
    chart = flat2.spec.chart("k0_0")
    a, b = estimate_first_second_exp_bounds(chart, region="inner", delta=0.1, n=8)
    assert a == pytest.approx(1.0, abs=1e-6)
    assert b == pytest.approx(0.0, abs=1e-6)


def test_exp_derivative_bounds_curved():
    """On the standard negatively curved half-plane model, first-order
    growth over a small ball around height 1.5 stays below 12%."""
    rows = [["1 / (x2*x2)", "0"], ["0", "1 / (x2*x2)"]]
    data = {
        "charts": [
            {
                "id": "h",
                "dim": 2,
                "domain": {"shape": "box", "extent": [2.0, 1.45], "norm": "euclidean"},
                "metric": {"rows": rows},
                "r": 0.3,
                "R": 0.1,
                "epsilon": 0.04,
                "anchor": [0.0, 1.5],
            }
        ]
    }
    spec = load_manifold_from_dict(data, strict=False)
    chart = spec.chart("h")
    # explicit base sample: closed disc of radius 0.25 around (0, 1.5)
    ts = np.linspace(0.0, 2 * np.pi, 12, endpoint=False)
    ring = 0.25 * np.stack([np.cos(ts), np.sin(ts)], axis=1)
    base = np.concatenate([[[0.0, 0.0]], ring, 0.5 * ring]) + np.array([0.0, 1.5])
    a, b = estimate_first_second_exp_bounds(chart, region=base, delta=0.1, n=6)
    assert 1.0 <= a <= 1.12
    assert b >= 0.0


def test_log_constants_flat(flat1, flat1_constants):
    chart = flat1.spec.chart("k0")
    cc = flat1_constants.charts["k0"]
    lc = estimate_log_constants(
        chart,
        region="inner",
        delta=cc.delta_log,
        sigma=0.5,
        n=16,
        inverse_radius=cc.inverse_radius,
        norm_ratio=cc.norm_ratio,
    )
    d = chart.dim
    expected = (1.0 / math.sqrt(d)) * (1.0 - 0.75)
    assert lc.log_radius == pytest.approx(expected, abs=0.75 / 16 + 1e-9)
    assert lc.log_d1_bound == pytest.approx(1.0, abs=1e-6)
    assert lc.log_d2_bound == pytest.approx(0.0, abs=1e-6)
    # analytic ceiling: first-order log growth is at most 1/(1-sigma)
    assert lc.log_d1_bound <= 1.0 / (1.0 - 0.5) + 1e-6


def test_degenerate_region_rejected(flat1):
    chart = flat1.spec.chart("k0")
    # a base point on the domain boundary leaves no room for any geodesic
    with pytest.raises(DegenerateRegion):
        estimate_grenz_exp(chart, region=[[1.0]], n=8)


def test_compute_constants_merges_charts(flat1, flat1_constants):
    assert set(flat1_constants.charts) == set(flat1.spec.chart_ids())
    one = compute_constants(flat1.spec, chart_id="k0", sigma=0.5, n=16)
    merged = flat1_constants.charts["k0"]
    solo = one.charts["k0"]
    for fieldname in (
        "exp_radius",
        "exp_d1_bound",
        "exp_d2_bound",
        "log_radius",
        "log_d1_bound",
        "log_d2_bound",
        "norm_ratio",
        "inverse_radius",
    ):
        assert getattr(solo, fieldname) == getattr(merged, fieldname), fieldname


def test_constants_report_round_trips_to_dict(flat1_constants):
    d = flat1_constants.as_dict()
    assert list(d["charts"]) == sorted(d["charts"])
    k0 = d["charts"]["k0"]
    assert k0["exp_d1_bound"] == pytest.approx(1.0, abs=1e-6)
    assert k0["exp_d2_bound"] == pytest.approx(0.0, abs=1e-6)


def test_scaled_flat_constants_match_flat(flat1, scaled1):
    """A constant conformal factor rescales lengths uniformly; all the
    adimensional constants must agree with the unscaled chart."""
    a = compute_constants(flat1.spec, chart_id="k0", sigma=0.5, n=8).charts["k0"]
    b = compute_constants(scaled1.spec, chart_id="k0", sigma=0.5, n=8).charts["k0"]
    assert b.exp_d1_bound == pytest.approx(a.exp_d1_bound, abs=1e-9)
    assert b.exp_d2_bound == pytest.approx(a.exp_d2_bound, abs=1e-9)
    assert b.log_d1_bound == pytest.approx(a.log_d1_bound, abs=1e-9)
    assert b.exp_radius == pytest.approx(a.exp_radius, abs=1e-9)
