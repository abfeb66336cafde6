"""Geodesic exponential / logarithm: closed forms, invariants, failure modes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasdiffeo.engine import geodesic_exp, riemannian_log
from atlasdiffeo.errors import (
    LeftChartDomain,
    NoConvergence,
    OutsideInjectivityRadius,
)
from atlasdiffeo.oracles import flat_oracle
from atlasdiffeo.spec import load_manifold_from_dict


def test_flat_exp_is_translation(flat2, rng):
    chart = flat2.spec.chart("k0_0")
    for _ in range(50):
        x = rng.uniform(-0.5, 0.5, size=2)
        y = rng.uniform(-0.3, 0.3, size=2)
        ev = geodesic_exp(chart, x, y)
        assert np.max(np.abs(ev.value - (x + y))) < 1e-10


def test_scaled_flat_exp_is_translation(scaled1, rng):
    # constant metric c^2 * Id: geodesics are still straight coordinate lines
    chart = scaled1.spec.chart("k0")
    x = rng.uniform(-0.4, 0.4, size=1)
    y = np.array([0.21])
    ev = geodesic_exp(chart, x, y)
    assert np.max(np.abs(ev.value - (x + y))) < 1e-10


def test_zero_velocity_returns_base_point_exactly(flat2, cylinder, half_plane):
    for om in (flat2, cylinder, half_plane):
        for cid in om.spec.chart_ids()[:3]:
            chart = om.spec.chart(cid)
            x = np.zeros(chart.dim) + 0.123
            ev = geodesic_exp(chart, x, np.zeros(chart.dim))
            assert ev.value is not x
            assert np.all(ev.value == x)  # bitwise, no integration noise
            assert ev.steps == 0


def test_left_chart_domain_reports_exit_time(flat1):
    chart = flat1.spec.chart("k0")
    # halfwidth 1.0; start at 0.5, shoot velocity 1.0 -> exits at t = 0.5
    with pytest.raises(LeftChartDomain) as exc:
        geodesic_exp(chart, np.array([0.5]), np.array([1.0]))
    assert 0.45 < exc.value.t_exit < 0.55


def test_log_inverts_exp(flat2, cylinder, half_plane, rng):
    for om in (flat2, cylinder, half_plane):
        chart = om.spec.chart(om.spec.chart_ids()[0])
        d = chart.dim
        for _ in range(20):
            x = rng.uniform(-0.05, 0.05, size=d)
            y = rng.uniform(-0.08, 0.08, size=d)
            z = geodesic_exp(chart, x, y).value
            back = riemannian_log(chart, x, z)
            assert np.max(np.abs(back.value - y)) < 1e-8
            assert back.residual < 1e-9


def test_log_flat_closed_form(flat2, rng):
    chart = flat2.spec.chart("k0_0")
    x = rng.uniform(-0.4, 0.4, size=2)
    z = rng.uniform(-0.4, 0.4, size=2)
    ev = riemannian_log(chart, x, z)
    assert np.max(np.abs(ev.value - (z - x))) < 1e-10


def test_log_rejects_targets_outside_radius(flat1):
    chart = flat1.spec.chart("k0")
    with pytest.raises(OutsideInjectivityRadius):
        riemannian_log(chart, np.array([0.0]), np.array([0.3]), radius=0.2)


def test_log_no_convergence_within_iteration_budget(half_plane):
    # curved target needs several Newton corrections; one is not enough
    chart = half_plane.spec.chart(half_plane.spec.chart_ids()[0])
    with pytest.raises(NoConvergence):
        riemannian_log(chart, np.array([0.0, 0.01]), np.array([0.0, 1.2]), max_iter=1)


def test_constant_metric_fast_path_matches_generic_integrator():
    """A metric written so the constant-coefficient shortcut can't fire must
    integrate to the same answer as the literal constant form."""
    fast = flat_oracle(d=2, r1=1.0, r2=0.75)
    cf = fast.spec.chart("k0_0")
    slow = load_manifold_from_dict(
        {
            "charts": [
                {
                    "id": "k0",
                    "dim": 2,
                    "domain": {"shape": "box", "extent": [1.5, 1.5], "norm": "sup"},
                    "metric": {"rows": [["1 + 0*x1", "0"], ["0", "1 + 0*x1"]]},
                    "r": 0.25,
                    "R": 0.1,
                    "epsilon": 0.05,
                }
            ]
        }
    )
    cs = slow.chart("k0")
    x = np.array([0.11, -0.07])
    y = np.array([0.23, 0.31])
    vf = geodesic_exp(cf, x, y).value
    vs = geodesic_exp(cs, x, y).value
    assert np.max(np.abs(vf - vs)) < 1e-13


def test_half_plane_exp_closed_form(half_plane):
    """Vertical geodesic through (0, 1) with unit upward velocity lands at
    (0, e): the standard upper-half-plane picture after anchoring."""
    spec = half_plane.spec
    cid = spec.chart_ids()[0]
    chart = spec.chart(cid)
    res = half_plane.exp(cid, np.array([0.0, 0.0]), np.array([0.0, 1.0]))
    eng = geodesic_exp(chart, np.array([0.0, 0.0]), np.array([0.0, 1.0])).value
    assert np.max(np.abs(eng - res)) < 1e-6


def test_half_plane_engine_matches_oracle(half_plane, rng):
    spec = half_plane.spec
    cid = spec.chart_ids()[0]
    chart = spec.chart(cid)
    for _ in range(10):
        x = rng.uniform(-0.1, 0.1, size=2)
        y = rng.uniform(-0.15, 0.15, size=2)
        eng = geodesic_exp(chart, x, y).value
        assert np.max(np.abs(eng - half_plane.exp(cid, x, y))) < 1e-6
        z = half_plane.exp(cid, x, y)
        lg = riemannian_log(chart, x, z).value
        assert np.max(np.abs(lg - half_plane.log(cid, x, z))) < 1e-6


def test_integration_refinement_converges(half_plane):
    """Doubling the step count moves the endpoint by O(h^4); 64 steps is
    already far below the library-wide 1e-9 slack."""
    chart = half_plane.spec.chart(half_plane.spec.chart_ids()[0])
    x = np.array([0.05, -0.03])
    y = np.array([0.1, 0.12])
    v64 = geodesic_exp(chart, x, y, steps=64).value
    v128 = geodesic_exp(chart, x, y, steps=128).value
    assert np.max(np.abs(v64 - v128)) < 1e-12


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
@settings(max_examples=40, deadline=None)
def test_exp_scaling_property_flat(a, b):
    """exp(x, t*y) traces the same straight line in a flat chart."""
    om = flat_oracle(d=1, r1=1.0, r2=0.75)
    chart = om.spec.chart("k0")
    x = np.array([a])
    y = np.array([b])
    half = geodesic_exp(chart, x, 0.5 * y).value
    full = geodesic_exp(chart, x, y).value
    assert abs((full[0] - x[0]) - 2 * (half[0] - x[0])) < 1e-9


def test_batched_exp_matches_loop(flat2, rng):
    chart = flat2.spec.chart("k0_0")
    xs = rng.uniform(-0.4, 0.4, size=(16, 2))
    ys = rng.uniform(-0.2, 0.2, size=(16, 2))
    batch = geodesic_exp(chart, xs, ys).value
    for i in range(16):
        single = geodesic_exp(chart, xs[i], ys[i]).value
        assert np.max(np.abs(batch[i] - single)) < 1e-12
