"""Acceptance audit: the nine end-to-end checks this library ships against.

Each test covers one numbered criterion and prints a single pass/fail line,
so `pytest tests/test_acceptance.py -v -s` doubles as an audit transcript.
Randomized inputs are drawn from per-criterion generators with fixed seeds;
tolerances are the shipped ones, not loosened for the audit.
"""

import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from atlasdiffeo.engine import (
    MetricField,
    QiftProblem,
    certify_qift,
    compute_constants,
    geodesic_exp,
    riemannian_log,
)
from atlasdiffeo.fields import ExprField
from atlasdiffeo.group import NeighborhoodGauge, certify_diffeo, compose, group_chart, invert
from atlasdiffeo.norms import matrix_op_norm, vector_norm
from atlasdiffeo.oracles import localize_global_exprs
from atlasdiffeo.seminorms import MEMBERSHIP_CAP, seminorm
from atlasdiffeo.weights import (
    ExprWeight,
    construct_adjusted,
    estimate_bound_families,
    ext_mult,
    pair_omega_exp_log,
    saturate,
)


@contextmanager
def criterion(num: int, title: str):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"criterion {num} ({title}): FAIL  [{time.perf_counter() - t0:.1f}s]")
        raise
    print(f"criterion {num} ({title}): pass  [{time.perf_counter() - t0:.1f}s]")


def _seed(k: int) -> np.random.Generator:
    return np.random.default_rng(20260821 + k)


def _sample_inner(chart, rng, m: int, frac: float) -> np.ndarray:
    """m random points in the chart-norm ball of radius frac * r."""
    pts = rng.uniform(-1.0, 1.0, (m, chart.dim))
    nrm = np.maximum(vector_norm(pts, chart.norm), 1e-12)
    radii = frac * chart.r * rng.uniform(0.2, 1.0, m)
    return pts * (radii / nrm)[:, None]


# --------------------------------------------------------------- fixtures

# Constants reports beyond the session-scoped ones; resolutions match each
# fixture's cost profile (the curved fixture integrates geodesics per node).


@pytest.fixture(scope="module")
def flat2_constants(flat2):
    return compute_constants(flat2.spec, n=8, sigma=0.5)


@pytest.fixture(scope="module")
def scaled1_constants(scaled1):
    return compute_constants(scaled1.spec, n=16, sigma=0.5)


@pytest.fixture(scope="module")
def hp_constants(half_plane):
    return compute_constants(half_plane.spec, n=6, sigma=0.5)


# ------------------------------------------------- randomized field builder


def _field_coeffs(rng, d: int, periodic):
    coeffs = {}
    for i in range(d):
        coeffs[(i, "c")] = rng.uniform(-1.0, 1.0)
        for j in range(d):
            coeffs[(i, j, "s")] = rng.uniform(-1.0, 1.0)
            if j in periodic:
                coeffs[(i, j, "q")] = rng.uniform(-1.0, 1.0)
            else:
                coeffs[(i, j, "l")] = rng.uniform(-1.0, 1.0)
    return coeffs


def _coeff_field(spec, coeffs, scale: float, periodic, name: str) -> ExprField:
    """Affine-plus-trigonometric field in global coordinates.

    Periodic axes only enter through sin/cos so the exprs stay coherent
    across wrap-around transitions.
    """
    d = spec.dim
    comps = []
    for i in range(d):
        terms = [f"({scale * coeffs[(i, 'c')]:.17g})"]
        for j in range(d):
            terms.append(f"({scale * coeffs[(i, j, 's')]:.17g}) * sin(x{j + 1})")
            if j in periodic:
                terms.append(f"({scale * coeffs[(i, j, 'q')]:.17g}) * cos(x{j + 1})")
            else:
                terms.append(f"({scale * coeffs[(i, j, 'l')]:.17g}) * x{j + 1}")
        comps.append(" + ".join(terms))
    return ExprField(components=localize_global_exprs(spec, tuple(comps)), name=name)


def _scaled_field(spec, rng, s0_cap, s1_cap, periodic=(), n=6, name="X"):
    """Random field rescaled to sit under the requested plain seminorms."""
    coeffs = _field_coeffs(rng, spec.dim, periodic)
    unit = _coeff_field(spec, coeffs, 1.0, periodic, name)
    s0 = seminorm(spec, unit, 1.0, 0, atlas="C", n=n).value
    s1 = seminorm(spec, unit, 1.0, 1, atlas="C", n=n).value
    t = min(s0_cap / max(s0, 1e-12), s1_cap / max(s1, 1e-12))
    return _coeff_field(spec, coeffs, t, periodic, name)


def _zero_field(spec) -> ExprField:
    return ExprField(
        components=localize_global_exprs(spec, ("0",) * spec.dim), name="zero"
    )


# ------------------------------------------------------------- criterion 1


def test_criterion_1_flat_comparison(flat1, flat2):
    t0 = time.perf_counter()
    with criterion(1, "flat comparison, grid 64"):
        for om, d, grid in ((flat1, 1, 64), (flat2, 2, 32)):
            spec = om.spec
            dirs = np.concatenate([np.eye(d), -np.eye(d)], axis=0)
            for c in spec.charts:
                mf = MetricField(c)
                base, _ = c.region_grid("inner", grid, style="margin")
                ys = np.concatenate([0.05 * dirs, 0.2 * dirs], axis=0)
                x = np.repeat(base, len(ys), axis=0)
                y = np.tile(ys, (len(base), 1))
                ev = geodesic_exp(c, x, y, metric=mf).value
                assert float(np.max(np.abs(ev - (x + y)))) <= 1e-10
                lg = riemannian_log(c, x, x + y, metric=mf).value
                assert float(np.max(np.abs(lg - y))) <= 1e-10
            report = compute_constants(spec, n=64, sigma=0.5)
            cell = 2.0 * 1.0 / 64  # halfwidth r1 = 1.0: one grid cell per axis
            for cid, cc in report.charts.items():
                assert 0.25 - cell <= cc.exp_radius <= 0.25 + 1e-12, cid
                target = 0.25 / math.sqrt(d)
                assert abs(cc.log_radius - target) <= cell, cid
                assert abs(cc.exp_d1_bound - 1.0) <= 1e-6, cid
                assert abs(cc.exp_d2_bound) <= 1e-6, cid
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"flat comparison took {elapsed:.1f}s"


# ------------------------------------------------------------- criterion 2


def test_criterion_2_zero_section_identity(flat1, flat2, scaled1, cylinder, half_plane):
    rng = _seed(2)
    with criterion(2, "zero-section identity, 10^3 samples"):
        for om in (flat1, flat2, scaled1, cylinder, half_plane):
            spec = om.spec
            d = spec.dim
            ids = spec.chart_ids()
            per_chart = {cid: [] for cid in ids}
            for _ in range(200):
                cid = ids[rng.integers(len(ids))]
                per_chart[cid].append(
                    (rng.integers(d), rng.integers(d), rng.integers(3))
                )
            for cid, draws in per_chart.items():
                if not draws:
                    continue
                c = spec.chart(cid)
                mf = MetricField(c)
                m = len(draws)
                x = _sample_inner(c, rng, m, 0.5)
                v = np.zeros((m, d))
                w = np.zeros((m, d))
                for k, (i, j, mode) in enumerate(draws):
                    if mode != 1:
                        v[k, i] = 1.0  # (e_i, 0) or (e_i, e_j)
                    if mode != 0:
                        w[k, j] = 1.0  # (0, e_j) or (e_i, e_j)
                t = 1e-3 * c.extent_scale()

                def diff(step):
                    p = geodesic_exp(c, x + step * v, step * w, metric=mf).value
                    q = geodesic_exp(c, x - step * v, -step * w, metric=mf).value
                    return (p - q) / (2.0 * step)

                deriv = (4.0 * diff(t / 2.0) - diff(t)) / 3.0
                err = vector_norm(deriv - (v + w), c.norm)
                assert float(np.max(err)) <= 1e-6, (om.kind, cid)


# ------------------------------------------------------------- criterion 3


def _estimate_suite(spec, consts, rng, periodic, n_fields: int, m_pts: int):
    charts = spec.charts
    s0_cap = 0.45 * min(
        min(cc.delta_exp, cc.delta_log) for cc in consts.charts.values()
    )
    base = {c.id: _sample_inner(c, rng, m_pts, 0.6) for c in charts}
    # per chart: stacked field values and one-sided shifts for the FD columns
    rows = {c.id: {"y": [], "p": [], "m": []} for c in charts}
    for k in range(n_fields):
        X = _scaled_field(spec, rng, s0_cap, 0.9, periodic=periodic, name=f"f{k}")
        for c in charts:
            h = 1e-5 * c.extent_scale()
            pts = base[c.id]
            rows[c.id]["y"].append(X.evaluate(c.id, pts))
            plus, minus = [], []
            for j in range(spec.dim):
                e = np.zeros(spec.dim)
                e[j] = h
                plus.append(X.evaluate(c.id, pts + e))
                minus.append(X.evaluate(c.id, pts - e))
            rows[c.id]["p"].append(plus)
            rows[c.id]["m"].append(minus)
    for c in charts:
        cc = consts.chart(c.id)
        mf = MetricField(c)
        d = spec.dim
        h = 1e-5 * c.extent_scale()
        x = np.tile(base[c.id], (n_fields, 1))
        y = np.concatenate(rows[c.id]["y"], axis=0)
        ny = vector_norm(y, c.norm)
        # exp and log displacement bounds
        ev = geodesic_exp(c, x, y, metric=mf).value
        lhs = vector_norm(ev - x, c.norm)
        assert float(np.max(lhs - (cc.exp_d1_bound * ny))) <= 1e-6, c.id
        lg = riemannian_log(c, x, x + y, metric=mf).value
        assert float(np.max(vector_norm(lg, c.norm) - cc.log_d1_bound * ny)) <= 1e-6
        # derivative bounds: finite-difference jacobians, one axis at a time
        Xp = [
            np.concatenate([rows[c.id]["p"][k][j] for k in range(n_fields)], axis=0)
            for j in range(d)
        ]
        Xm = [
            np.concatenate([rows[c.id]["m"][k][j] for k in range(n_fields)], axis=0)
            for j in range(d)
        ]
        DX = np.stack([(Xp[j] - Xm[j]) / (2.0 * h) for j in range(d)], axis=-1)
        ndx = matrix_op_norm(DX, c.norm)
        Jcols = []
        h2 = 1e-4 * c.extent_scale()
        Gcols = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            pj = geodesic_exp(c, x + e, Xp[j], metric=mf).value
            mj = geodesic_exp(c, x - e, Xm[j], metric=mf).value
            Jcols.append((pj - mj) / (2.0 * h))
            e2 = np.zeros(d)
            e2[j] = h2
            lp = riemannian_log(
                c, x + e2, x + e2 + Xp[j], metric=mf, tol=1e-12
            ).value
            lm = riemannian_log(
                c, x - e2, x - e2 + Xm[j], metric=mf, tol=1e-12
            ).value
            Gcols.append((lp - lm) / (2.0 * h2))
        J = np.stack(Jcols, axis=-1) - np.eye(d)
        bound = cc.exp_d2_bound * ny + ndx + 1e-6
        assert float(np.max(matrix_op_norm(J, c.norm) - bound)) <= 0.0, c.id
        G = np.stack(Gcols, axis=-1)
        bound_log = cc.log_d2_bound * ny + cc.log_d1_bound * ndx + 1e-6
        assert float(np.max(matrix_op_norm(G, c.norm) - bound_log)) <= 0.0, c.id


def test_criterion_3_estimate_suite(
    flat1,
    flat2,
    scaled1,
    cylinder,
    half_plane,
    flat1_constants,
    flat2_constants,
    scaled1_constants,
    cylinder_constants,
    hp_constants,
):
    rng = _seed(3)
    with criterion(3, "estimate suite, 100 fields per fixture"):
        suites = [
            (flat1, flat1_constants, ()),
            (flat2, flat2_constants, ()),
            (scaled1, scaled1_constants, ()),
            (cylinder, cylinder_constants, (1,)),
            (half_plane, hp_constants, ()),
        ]
        for om, consts, periodic in suites:
            m = 2 if om.kind == "half_plane_strip" else 4
            _estimate_suite(om.spec, consts, rng, periodic, n_fields=100, m_pts=m)


# ------------------------------------------------------------- criterion 4


def test_criterion_4_quantitative_inverse(tmp_path):
    rng = _seed(4)
    with criterion(4, "quantitative inverse, 20 maps"):
        pair_total = 0
        for k in range(20):
            d = 1 + (k % 2)
            A = rng.uniform(-0.3, 0.3, (d, d))
            for i in range(d):
                A[i, i] = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 1.6)
            cvec = rng.uniform(-0.5, 0.5, d)
            mu = rng.uniform(0.005, 0.03)
            exprs = []
            for i in range(d):
                terms = [f"({A[i, j]:.17g}) * x{j + 1}" for j in range(d)]
                terms.append(f"({cvec[i]:.17g})")
                terms.append(f"({mu:.17g}) * sin(x{(i % d) + 1})")
                exprs.append(" + ".join(terms))
            problem = QiftProblem(
                exprs=tuple(exprs), center=np.zeros(d), radius=1.0, norm="sup"
            )
            cert = certify_qift(
                problem, n=33 if d == 1 else 15, n_targets=10, n_pairs=50, seed=k
            )
            assert cert.passed, (k, [c.name for c in cert.failing_clauses()])
            names = {c.name for c in cert.clauses}
            assert any("preimage" in n for n in names), names
            assert any("lipschitz" in n for n in names), names
            pair_total += 50
        assert pair_total == 1000


# ------------------------------------------------------------- criterion 5


def _scaled_to_certify(spec, consts, rng, periodic, frac, name):
    """Random field rescaled to a fraction of every certificate threshold."""
    coeffs = _field_coeffs(rng, spec.dim, periodic)
    unit = _coeff_field(spec, coeffs, 1.0, periodic, name)
    probe = certify_diffeo(spec, unit, consts, n=8, n_pairs=1, n_targets=1)
    worst = 0.0
    for cl in probe.clauses:
        if "value" in cl.detail and "threshold" in cl.detail:
            worst = max(worst, cl.detail["value"] / cl.detail["threshold"])
    return _coeff_field(spec, coeffs, frac / worst, periodic, name)


def test_criterion_5_diffeo_certificates(
    flat1, cylinder, flat1_constants, cylinder_constants
):
    rng = _seed(5)
    with criterion(5, "diffeomorphism certificates, 50 fields"):
        pairs_checked = 0
        for om, consts, periodic in (
            (flat1, flat1_constants, ()),
            (cylinder, cylinder_constants, (1,)),
        ):
            spec = om.spec
            for k in range(25):
                X = _scaled_to_certify(
                    spec, consts, rng, periodic, frac=0.4, name=f"c5-{k}"
                )
                cert = certify_diffeo(
                    spec, X, consts, n=8, n_pairs=70, n_targets=5, seed=1000 + k
                )
                assert cert.passed, (
                    om.kind,
                    k,
                    [c.name for c in cert.failing_clauses()],
                )
                pairs_checked += 70 * len(spec.charts)
            # the canonical failing field is rejected by the C^1 clause
            big = ExprField(
                components=localize_global_exprs(
                    spec, tuple(f"0.9 * x{i + 1}" for i in range(spec.dim))
                ),
                name="ninety",
            )
            cert = certify_diffeo(spec, big, consts, n=8)
            assert not cert.passed
            failing = [c.name for c in cert.failing_clauses()]
            assert any("1-seminorm" in n for n in failing), failing
        assert pairs_checked >= 10_000, pairs_checked


# ------------------------------------------------------------- criterion 6


def _gauge_scaled(spec, gauge, rng, periodic, frac, name):
    coeffs = _field_coeffs(rng, spec.dim, periodic)
    unit = _coeff_field(spec, coeffs, 1.0, periodic, name)
    worst = 0.0
    for which in ("compose_left", "compose_right", "invert"):
        cert = gauge.membership(unit, which, n=8)
        for cl in cert.clauses:
            worst = max(worst, cl.detail["value"] / cl.detail["threshold"])
    return _coeff_field(spec, coeffs, frac / worst, periodic, name)


def test_criterion_6_group_laws(flat1, cylinder, flat1_constants, cylinder_constants):
    rng = _seed(6)
    with criterion(6, "group laws, 25 fields per fixture"):
        for om, consts, periodic, deltas, n in (
            (flat1, flat1_constants, (), 0.2, 16),
            (cylinder, cylinder_constants, (1,), None, 8),
        ):
            spec = om.spec
            pair = pair_omega_exp_log(spec, consts, sigma=0.5, deltas=deltas)
            gauge = NeighborhoodGauge(
                spec=spec, omega=pair.omega_exp, constants=consts
            )
            zero = _zero_field(spec)
            lim = 0.5
            mesh = np.meshgrid(
                *([np.linspace(-lim, lim, 4 if spec.dim > 1 else 7)] * spec.dim),
                indexing="ij",
            )
            pts = np.stack([g.reshape(-1) for g in mesh], axis=-1)

            def gap(F, G):
                worst = 0.0
                for c in spec.charts:
                    diff = np.abs(F.evaluate(c.id, pts) - G.evaluate(c.id, pts))
                    worst = max(worst, float(np.max(diff)))
                return worst

            fields = [
                _gauge_scaled(spec, gauge, rng, periodic, 0.2, f"g{k}")
                for k in range(25)
            ]
            for k, X in enumerate(fields):
                Y = fields[(k + 7) % 25]
                W = fields[(k + 13) % 25]
                right = compose(spec, X, zero, gauge, pair.omega_log, n=n)
                left = compose(spec, zero, X, gauge, pair.omega_log, n=n)
                assert gap(right.field, X) <= 1e-6
                assert gap(left.field, X) <= 1e-6
                inv = invert(spec, X, gauge, pair.omega_log, n=n)
                cancel = compose(spec, X, inv.field, gauge, pair.omega_log, n=n)
                assert gap(cancel.field, zero) <= 1e-6
                XY = compose(spec, X, Y, gauge, pair.omega_log, n=n)
                YW = compose(spec, Y, W, gauge, pair.omega_log, n=n)
                lhs = compose(spec, XY.field, W, gauge, pair.omega_log, n=n)
                rhs = compose(spec, X, YW.field, gauge, pair.omega_log, n=n)
                assert gap(lhs.field, rhs.field) <= 1e-6
                # composition/inversion norm bounds, with audit slack
                for res in (right, left, cancel, XY, YW, lhs, rhs, inv):
                    for cl in res.certificate.clauses:
                        assert cl.passed, cl.name
                        if "bound" in cl.detail:
                            assert (
                                cl.detail["value"] <= cl.detail["bound"] + 1e-6
                            ), cl.name

                # chart-map round trip through the recovered displacement
                def phi(cid, q, X=X):
                    c = spec.chart(cid)
                    return geodesic_exp(c, q, X.evaluate(cid, q)).value

                Xr = group_chart(spec, phi, consts, n=n)
                for c in spec.charts:
                    nodes = Xr.table(c.id).node_points()
                    ends = geodesic_exp(
                        c, nodes, Xr.evaluate(c.id, nodes)
                    ).value
                    assert float(np.max(np.abs(ends - phi(c.id, nodes)))) <= 1e-6


# ------------------------------------------------------------- criterion 7


def test_criterion_7_weight_algorithms(flat1, cylinder, flat1_constants):
    with criterion(7, "weight algorithms"):
        # adjusted weights: finite above, >= max(1/delta, 1) on inner regions
        cases = [
            (flat1.spec, {"k-1": 0.1, "k0": 0.25, "k1": 2.0}),
            (cylinder.spec, {c.id: 0.1 for c in cylinder.spec.charts}),
        ]
        for spec, targets in cases:
            w = construct_adjusted(spec, targets, n=8)
            ceiling = max(w.plateaus.values())
            for c in spec.charts:
                dom, _ = c.region_grid("domain", 9, style="margin")
                vals = w.eval(c.id, dom)
                assert float(np.max(vals)) <= ceiling + 1e-12
                inner, _ = c.region_grid("inner", 9, style="closed")
                floor = max(1.0 / targets[c.id], 1.0)
                assert float(np.min(w.eval(c.id, inner))) >= floor - 1e-12
        # multiplication dominance is exact on grids
        spec = flat1.spec
        fams = estimate_bound_families(spec, flat1_constants, n=8)
        adjusted = construct_adjusted(spec, 0.25, n=8)
        for fam in fams:
            for g in ext_mult(spec, adjusted, fam, n=8):
                ell = int(g.name.split("#")[1].split("]")[0])
                for c in spec.charts:
                    pts, _ = c.region_grid("domain", 9, style="margin")
                    lhs = fam.bound(c.id, ell) * adjusted.eval(c.id, pts)
                    assert float(np.max(lhs - g.eval(c.id, pts))) <= 1e-12
        # flat saturation: one level adds nothing beyond factor 1 + 1e-6
        one = ExprWeight.constant(spec, 1.0)
        res = saturate(spec, seeds=[one], families=fams, levels=1, n=8)
        for w in res.weights:
            value = w.constant_value()
            assert value is not None and value <= 1.0 + 1e-6
        # paired weights reproduce the closed-form flat values exactly
        pair = pair_omega_exp_log(spec, flat1_constants, sigma=0.5, deltas=0.2)
        assert pair.certificate.passed
        probe = np.array([[0.0]])
        for cid in spec.chart_ids():
            assert pair.omega_exp.eval(cid, probe)[0] == 30.0
            assert pair.omega_log.eval(cid, probe)[0] == 10.0


# ------------------------------------------------------------- criterion 8


def test_criterion_8_compact_support_membership(
    flat1, cylinder, flat1_constants, cylinder_constants
):
    with criterion(8, "compact-support membership"):
        theta = 2.0 * math.pi / 3.0
        cases = [
            (flat1, flat1_constants, 0.2, ("(max(0, 0.04 - x1*x1))^3",), 0.2, 2),
            (
                cylinder,
                cylinder_constants,
                None,
                (
                    f"(max(0, 0.09 - x1*x1 - (x2 - {theta:.17g})^2))^3",
                    f"0.5 * (max(0, 0.09 - x1*x1 - (x2 - {theta:.17g})^2))^3",
                ),
                None,
                1,
            ),
        ]
        for om, consts, deltas, exprs, _, levels in cases:
            spec = om.spec
            bump = ExprField(
                components=localize_global_exprs(spec, exprs), name="bump"
            )
            fams = estimate_bound_families(spec, consts, n=8)
            adjusted = construct_adjusted(spec, 0.25, n=8)
            one = ExprWeight.constant(spec, 1.0)
            sat = saturate(
                spec, seeds=[one, adjusted], families=fams, levels=levels, n=8
            )
            for w in sat.weights:
                for ell in (0, 1, 2):
                    v = seminorm(spec, bump, w, ell, atlas="B", n=8).value
                    assert np.isfinite(v) and v < MEMBERSHIP_CAP
            # after rescaling, the bump joins every gauge neighborhood
            pair = pair_omega_exp_log(spec, consts, sigma=0.5, deltas=deltas)
            gauge = NeighborhoodGauge(
                spec=spec, omega=pair.omega_exp, constants=consts
            )
            worst = 0.0
            for which in ("compose_left", "compose_right", "invert"):
                cert = gauge.membership(bump, which, n=8)
                for cl in cert.clauses:
                    worst = max(worst, cl.detail["value"] / cl.detail["threshold"])
            s = 0.5 / worst
            scaled = ExprField(
                components=localize_global_exprs(
                    spec, tuple(f"({s:.17g}) * ({e})" for e in exprs)
                ),
                name="bump-scaled",
            )
            for which in ("compose_left", "compose_right", "invert"):
                cert = gauge.membership(scaled, which, n=8)
                assert cert.passed, (om.kind, which)


# ------------------------------------------------------------- criterion 9


def test_criterion_9_determinism(flat1, tmp_path):
    with criterion(9, "full-pipeline determinism"):
        spec_path = tmp_path / "flat.toml"
        spec_path.write_text(flat1.emit_toml())

        def run(threads: str) -> bytes:
            import os

            env = dict(os.environ)
            env["ATLASDIFFEO_THREADS"] = threads
            proc = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "atlasdiffeo.cli",
                    "full-pipeline",
                    str(spec_path),
                    "--grid",
                    "8",
                    "--delta",
                    "0.2",
                ],
                capture_output=True,
                env=env,
                timeout=300,
            )
            assert proc.returncode == 0, proc.stderr.decode()
            return proc.stdout

        runs = [run("1") for _ in range(3)]
        assert runs[0] == runs[1] == runs[2]
        assert run("8") == runs[0]
