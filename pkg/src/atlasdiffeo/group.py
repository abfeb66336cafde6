"""Certified near-identity diffeomorphisms and their local group structure.

A displacement field X below the certification thresholds induces the map
phi(u) = exp(u, X(u)), a diffeomorphism onto its image.  This module
certifies that property quantitatively (``certify_diffeo``), applies such
maps with chart hand-off (``apply_diffeo``), and realizes the local group
operations on displacement fields: ``compose`` and ``invert`` produce the
displacement of the composite and inverse maps, ``group_chart`` recovers the
displacement of a given near-identity map.  Composite fields are returned in
tabulated form on per-chart boxes inscribed in the padded regions.

Membership tests for the operations run against three nested neighborhood
gauges; each operation states which gauge its inputs must satisfy, and the
returned certificates carry the seminorm bounds its output provably obeys.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .certs import Certificate
from .engine import ConstantsReport, MetricField, _exp_core, _log_core
from .errors import (
    ConstantsMissing,
    GaugeViolation,
    LogDomainExceeded,
    NewtonFailure,
    NoContainingChart,
    OutsideTrustRegion,
    SpecError,
)
from .fields import GridField, GridTable, LocalizedField
from .norms import vector_norm
from .seminorms import seminorm
from .spec import Chart, ManifoldSpec
from .weights import Weight

__all__ = [
    "NeighborhoodGauge",
    "GAUGE_NAMES",
    "certify_diffeo",
    "apply_diffeo",
    "containing_charts",
    "DiffeoRep",
    "ComposeResult",
    "compose",
    "InvertResult",
    "invert",
    "group_chart",
]

GAUGE_NAMES = ("compose_left", "compose_right", "invert")


def _metric_cache(spec: ManifoldSpec) -> dict[str, MetricField]:
    return {c.id: MetricField(c) for c in spec.charts}


@dataclass
class NeighborhoodGauge:
    """Three nested smallness gauges for displacement fields.

    compose_left:  |X|_{omega,0} < 1/2 over the padded atlas and
                   |X|_{1,1} < 1/2 — the outer factor of a composition.
    compose_right: |X|_{omega,0} < min(1/4, R) over the inner atlas — the
                   inner factor.
    invert:        |X|_{omega,0} < (1-rho) min(rho, R)/2 and
                   |X|_{1,1} < min(rho/2, eps/4) — invertible fields.

    R is the smallest chart log radius, eps the smallest chart margin; the
    invert gauge is contained in both composition gauges for any rho in
    (0, 1).
    """

    spec: ManifoldSpec
    omega: Weight
    constants: ConstantsReport
    rho: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.rho < 1.0):
            raise SpecError(f"rho must lie in (0, 1), got {self.rho}")
        missing = {c.id for c in self.spec.charts} - set(self.constants.charts)
        if missing:
            raise ConstantsMissing(f"no constants for charts {sorted(missing)}")
        self.radius = min(cc.log_radius for cc in self.constants.charts.values())
        self.epsilon = min(c.epsilon for c in self.spec.charts)

    def clauses(self, which: str) -> list[tuple[str, Weight, int, str, float]]:
        """(label, weight, order, atlas, threshold) rows for one gauge."""
        if which == "compose_left":
            return [
                ("weighted-0-seminorm", self.omega, 0, "B", 0.5),
                ("1-seminorm", 1.0, 1, "B", 0.5),
            ]
        if which == "compose_right":
            return [
                ("weighted-0-seminorm", self.omega, 0, "C", min(0.25, self.radius)),
            ]
        if which == "invert":
            t0 = (1.0 - self.rho) * min(self.rho, self.radius) / 2.0
            t1 = min(self.rho / 2.0, self.epsilon / 4.0)
            return [
                ("weighted-0-seminorm", self.omega, 0, "B", t0),
                ("1-seminorm", 1.0, 1, "B", t1),
            ]
        raise SpecError(f"unknown gauge {which!r}; expected one of {GAUGE_NAMES}")

    def membership(
        self, X: LocalizedField, which: str, n: Optional[int] = None
    ) -> Certificate:
        cert = Certificate(kind=f"gauge:{which}")
        cert.info = {"rho": self.rho, "radius": self.radius, "epsilon": self.epsilon}
        for label, w, ell, atlas, threshold in self.clauses(which):
            val = seminorm(self.spec, X, w, ell, atlas=atlas, n=n).value
            cert.add(label, val < threshold, threshold - val, value=val, threshold=threshold)
        return cert

    def contains(self, X: LocalizedField, which: str, n: Optional[int] = None) -> bool:
        return self.membership(X, which, n=n).passed


# --- certification ------------------------------------------------------------


def certify_diffeo(
    spec: ManifoldSpec,
    X: LocalizedField,
    constants: ConstantsReport,
    epsilon: Optional[float] = None,
    nu: Optional[float] = None,
    n: Optional[int] = None,
    n_pairs: int = 2000,
    n_targets: int = 50,
    seed: int = 0,
) -> Certificate:
    """Certify that u -> exp(u, X(u)) is injective and onto a shrunken ball.

    Per chart, the displacement's plain seminorms must clear
    |X|_0 < min(eps r / (2a), nu, eps / (4(b+1))) and |X|_1 < eps/4, with the
    derivative bounds a, b inflated by the report's safety factor.  When all
    clauses pass, injectivity and surjectivity onto the ball of radius
    r(1 - 2 eps) are spot-checked by sampling and Newton inversion.
    """
    missing = {c.id for c in spec.charts if X.has_chart(c.id)} - set(constants.charts)
    if missing:
        raise ConstantsMissing(f"no constants for charts {sorted(missing)}")
    cert = Certificate(kind="diffeomorphism")
    cert.resolution = {
        "points_per_axis": n or spec.grid_resolution,
        "injectivity_pairs": n_pairs,
        "surjectivity_targets": n_targets,
    }
    rng = np.random.default_rng(seed)
    mfs = _metric_cache(spec)
    all_passed = True
    for c in spec.charts:
        if not X.has_chart(c.id):
            continue
        cc = constants.chart(c.id)
        eps = epsilon if epsilon is not None else c.epsilon
        a = constants.safety * cc.exp_d1_bound
        b = constants.safety * cc.exp_d2_bound
        cap = nu if nu is not None else 0.9 * cc.exp_radius
        t0 = min(eps * c.r / (2.0 * a), cap, eps / (4.0 * (b + 1.0)))
        v0 = seminorm(spec, X, 1.0, 0, atlas="B", n=n, charts=[c.id]).value
        v1 = seminorm(spec, X, 1.0, 1, atlas="B", n=n, charts=[c.id]).value
        cert.add(
            f"0-seminorm:{c.id}", v0 < t0, t0 - v0, value=v0, threshold=t0,
            epsilon=eps, nu=cap,
        )
        cert.add(
            f"1-seminorm:{c.id}", v1 < eps / 4.0, eps / 4.0 - v1,
            value=v1, threshold=eps / 4.0,
        )
        all_passed = all_passed and v0 < t0 and v1 < eps / 4.0
    if not all_passed:
        return cert
    for c in spec.charts:
        if not X.has_chart(c.id):
            continue
        eps = epsilon if epsilon is not None else c.epsilon
        mf = mfs[c.id]
        u = _sample_ball(rng, n_pairs, c, c.r)
        up = _sample_ball(rng, n_pairs, c, c.r)
        phi_u = _exp_core(mf, u, X.evaluate(c.id, u))
        phi_up = _exp_core(mf, up, X.evaluate(c.id, up))
        lhs = vector_norm(phi_u - phi_up, c.norm)
        rhs = (1.0 - 2.0 * eps) * vector_norm(u - up, c.norm)
        margin = float(np.min(lhs - rhs))
        cert.add(
            f"injectivity:{c.id}", margin >= -1e-9, margin,
            pairs=n_pairs, expansion_floor=1.0 - 2.0 * eps,
        )
        targets = _sample_ball(rng, n_targets, c, c.r * (1.0 - 2.0 * eps))
        seeds = _exp_core(mf, targets, -X.evaluate(c.id, targets))
        sol, res = _solve_phi(mf, X, c.id, targets, seeds)
        inside = np.all(vector_norm(sol, c.norm) <= c.r + c.R + 1e-9)
        ok = res <= 1e-9 and bool(inside)
        cert.add(
            f"surjectivity:{c.id}", ok, 1e-9 - res,
            targets=n_targets, max_residual=res, preimages_in_padded=bool(inside),
        )
    return cert


def _sample_ball(rng: np.random.Generator, k: int, chart: Chart, radius: float) -> np.ndarray:
    if chart.norm == "euclidean":
        v = rng.normal(size=(k, chart.dim))
        v /= np.maximum(vector_norm(v, "euclidean"), 1e-300)[:, None]
        return v * (radius * rng.uniform(0, 1, size=k) ** (1.0 / chart.dim))[:, None]
    return rng.uniform(-radius, radius, size=(k, chart.dim))


def _solve_phi(
    mf: MetricField,
    X: LocalizedField,
    chart_id: str,
    targets: np.ndarray,
    seeds: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> tuple[np.ndarray, float]:
    """Batched damped Newton for exp(v, X(v)) = target, from given seeds."""
    h = 1e-5 * mf.chart.extent_scale()
    v = np.array(seeds, dtype=float)
    d = v.shape[-1]

    def F(vv: np.ndarray) -> np.ndarray:
        return _exp_core(mf, vv, X.evaluate(chart_id, vv)) - targets_active

    targets_active = targets
    res = vector_norm(_exp_core(mf, v, X.evaluate(chart_id, v)) - targets, "sup")
    for _ in range(max_iter):
        active = res > tol
        if not np.any(active):
            break
        va = v[active]
        targets_active = targets[active]
        Fa = F(va)
        cols = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            cols.append((F(va + e) - F(va - e)) / (2 * h))
        J = np.stack(cols, axis=-1)
        try:
            step = np.linalg.solve(J, -Fa[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -(np.linalg.pinv(J) @ Fa[..., None])[..., 0]
        ra = vector_norm(Fa, "sup")
        scale = np.ones(len(va))
        for _ in range(8):
            rt = vector_norm(F(va + scale[:, None] * step), "sup")
            good = rt < ra
            if np.all(good):
                break
            scale = np.where(good, scale, scale / 2.0)
        v[active] = va + scale[:, None] * step
        targets_active = targets
        res = vector_norm(_exp_core(mf, v, X.evaluate(chart_id, v)) - targets, "sup")
    return v, float(np.max(res))


# --- application with chart hand-off ------------------------------------------


def containing_charts(
    spec: ManifoldSpec, chart_id: str, pts: np.ndarray
) -> list[tuple[str, np.ndarray]]:
    """All charts whose domain contains the given points, with coordinates.

    Candidates are the current chart and its declared transition targets;
    the list is sorted by chart id.
    """
    pts = np.asarray(pts, dtype=float)
    out = []
    here = spec.chart(chart_id)
    if bool(np.all(here.domain.contains(pts))):
        out.append((chart_id, pts))
    for t in sorted(spec.transitions_from(chart_id), key=lambda s: s.to):
        if not np.all(t.overlap_mask(pts)):
            continue
        q = t.apply(pts)
        if bool(np.all(spec.chart(t.to).domain.contains(q))):
            out.append((t.to, q))
    return out


def apply_diffeo(
    spec: ManifoldSpec,
    X: LocalizedField,
    chart_id: str,
    point: np.ndarray,
    metrics: Optional[dict[str, MetricField]] = None,
) -> tuple[str, np.ndarray]:
    """Apply u -> exp(u, X(u)) to one point and re-chart the image.

    The image is handed to the candidate chart whose center is nearest in
    its own norm (ties to the lowest chart id); NoContainingChart if the
    image escapes every candidate domain.
    """
    pt = np.atleast_2d(np.asarray(point, dtype=float))
    chart = spec.chart(chart_id)
    if not np.all(chart.domain.contains(pt)):
        raise SpecError(
            f"point {np.asarray(point).tolist()} lies outside the domain of "
            f"chart {chart_id!r}"
        )
    mfs = metrics if metrics is not None else {chart_id: MetricField(chart)}
    mf = mfs.get(chart_id) or MetricField(chart)
    image = _exp_core(mf, pt, X.evaluate(chart_id, pt))
    candidates = containing_charts(spec, chart_id, image)
    if not candidates:
        raise NoContainingChart(
            f"image {image[0].tolist()} of chart {chart_id!r} lies in no "
            f"candidate chart domain"
        )
    best = None
    for cid, coords in candidates:
        c = coords[0]
        dist = float(vector_norm(c, spec.chart(cid).norm))
        if best is None or dist < best[0] - 1e-15 or (abs(dist - best[0]) <= 1e-15 and cid < best[1]):
            best = (dist, cid, c)
    return best[1], best[2]


# --- group operations ----------------------------------------------------------


def _tab_axes(chart: Chart, n: int) -> tuple[np.ndarray, ...]:
    """Axes of the tabulation box inscribed in the inner region.

    Gauge-sized displacements are far smaller than one grid cell, so grids
    stepping one cell in from the box edge keep every interpolation query of
    a composition inside the table.
    """
    h = chart.r
    if chart.norm == "euclidean":
        h = h / np.sqrt(chart.dim)
    cell = 2.0 * h / n
    return tuple(np.linspace(-h + cell, h - cell, n) for _ in range(chart.dim))


def _tab_grid(axes: tuple[np.ndarray, ...]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass
class ComposeResult:
    field: GridField
    certificate: Certificate


def compose(
    spec: ManifoldSpec,
    X: LocalizedField,
    Y: LocalizedField,
    gauge: NeighborhoodGauge,
    omega_log: Weight,
    n: Optional[int] = None,
    check_gauges: bool = True,
) -> ComposeResult:
    """Displacement of (exp X) after (exp Y): Z with exp Z = (exp X)(exp Y).

    X must satisfy the compose_left gauge and Y compose_right; per chart,
    Z(u) = log(u, exp(v, X(v))) at v = exp(u, Y(u)), tabulated on the
    inner-region box.  The certificate carries the defining identity's
    residual and the product bound
    |Z|_{omegaL,0} <= (1 + |X|_{omega,0} + |X|_{1,1}) |Y|_{omega,0} + |X|_{omega,0}.
    """
    n = n or spec.grid_resolution
    if check_gauges:
        for which, F in (("compose_left", X), ("compose_right", Y)):
            mem = gauge.membership(F, which, n=n)
            if not mem.passed:
                bad = mem.failing_clauses()[0]
                raise GaugeViolation(
                    clause=f"{which}:{bad.name}",
                    value=bad.detail.get("value"),
                    threshold=bad.detail.get("threshold"),
                )
    mfs = _metric_cache(spec)
    tables = {}
    cert = Certificate(kind="composition")
    worst_resid = 0.0
    for c in spec.charts:
        if not (X.has_chart(c.id) and Y.has_chart(c.id)):
            continue
        mf = mfs[c.id]
        axes = _tab_axes(c, n)
        u = _tab_grid(axes)
        v = _exp_core(mf, u, Y.evaluate(c.id, u))
        if not np.all(c.domain.contains(v, pad=-1e-12)):
            raise LogDomainExceeded(
                f"inner factor pushes tabulation points of chart {c.id!r} "
                f"outside its domain"
            )
        w = _exp_core(mf, v, X.evaluate(c.id, v))
        if not np.all(c.domain.contains(w, pad=-1e-12)):
            raise LogDomainExceeded(
                f"composite image leaves the domain of chart {c.id!r}"
            )
        Z, _, res = _log_core(mf, u, w)
        worst_resid = max(worst_resid, float(np.max(res)))
        if float(np.max(res)) > 1e-9:
            raise LogDomainExceeded(
                f"logarithm failed to converge on chart {c.id!r} "
                f"(residual {float(np.max(res)):.3g})"
            )
        sizes = vector_norm(Z, c.norm)
        limit = gauge.constants.chart(c.id).log_radius
        if float(np.max(sizes)) >= limit:
            raise LogDomainExceeded(
                f"composite displacement {float(np.max(sizes)):.6g} reaches "
                f"the log radius {limit:.6g} on chart {c.id!r}"
            )
        tables[c.id] = GridTable(
            axes=axes, values=Z.reshape(tuple(len(ax) for ax in axes) + (c.dim,))
        )
    name = f"({getattr(X, 'name', 'X')})*({getattr(Y, 'name', 'Y')})"
    Zf = GridField(tables=tables, name=name)
    cert.add("defining-identity", worst_resid <= 1e-8, 1e-8 - worst_resid,
             residual=worst_resid)
    x0 = seminorm(spec, X, gauge.omega, 0, atlas="B", n=n).value
    x1 = seminorm(spec, X, 1.0, 1, atlas="B", n=n).value
    y0 = seminorm(spec, Y, gauge.omega, 0, atlas="C", n=n).value
    z0 = seminorm(spec, Zf, omega_log, 0, atlas="C", n=n).value
    bound = (1.0 + x0 + x1) * y0 + x0
    cert.add("product-bound", z0 <= bound + 1e-9, bound + 1e-9 - z0,
             value=z0, bound=bound, x0=x0, x1=x1, y0=y0)
    cert.resolution = {"points_per_axis": n, "style": "inner-box"}
    return ComposeResult(field=Zf, certificate=cert)


@dataclass
class InvertResult:
    field: GridField
    certificate: Certificate


def invert(
    spec: ManifoldSpec,
    X: LocalizedField,
    gauge: NeighborhoodGauge,
    omega_log: Weight,
    n: Optional[int] = None,
    check_gauges: bool = True,
) -> InvertResult:
    """Displacement of the inverse map: Z with exp(u, Z(u)) = (exp X)^{-1}(u).

    X must satisfy the invert gauge.  Per chart and tabulation point u the
    preimage v solves exp(v, X(v)) = u by damped Newton from the seed
    exp(u, -X(u)); the certificate carries the inversion residual and the
    bound |Z|_{omegaL,0} <= |X|_{omega,0} / (1 - |X|_{omega,0} - |X|_{1,1}).
    """
    n = n or spec.grid_resolution
    if check_gauges:
        mem = gauge.membership(X, "invert", n=n)
        if not mem.passed:
            bad = mem.failing_clauses()[0]
            raise GaugeViolation(
                clause=f"invert:{bad.name}",
                value=bad.detail.get("value"),
                threshold=bad.detail.get("threshold"),
            )
    mfs = _metric_cache(spec)
    tables = {}
    cert = Certificate(kind="inversion")
    worst = 0.0
    for c in spec.charts:
        if not X.has_chart(c.id):
            continue
        mf = mfs[c.id]
        axes = _tab_axes(c, n)
        u = _tab_grid(axes)
        seeds = _exp_core(mf, u, -X.evaluate(c.id, u))
        v, res = _solve_phi(mf, X, c.id, u, seeds)
        if res > 1e-9:
            raise NewtonFailure(
                f"inversion stalled on chart {c.id!r} with residual {res:.3g}"
            )
        worst = max(worst, res)
        Z, _, logres = _log_core(mf, u, v)
        if float(np.max(logres)) > 1e-9:
            raise LogDomainExceeded(
                f"logarithm of the inverse failed on chart {c.id!r}"
            )
        tables[c.id] = GridTable(
            axes=axes, values=Z.reshape(tuple(len(ax) for ax in axes) + (c.dim,))
        )
    Zf = GridField(tables=tables, name=f"inv({getattr(X, 'name', 'X')})")
    cert.add("inversion-residual", worst <= 1e-9, 1e-9 - worst, residual=worst)
    x0 = seminorm(spec, X, gauge.omega, 0, atlas="B", n=n).value
    x1 = seminorm(spec, X, 1.0, 1, atlas="B", n=n).value
    z0 = seminorm(spec, Zf, omega_log, 0, atlas="C", n=n).value
    denom = 1.0 - (x0 + x1)
    bound = x0 / denom if denom > 0 else np.inf
    cert.add("inverse-bound", z0 <= bound + 1e-9, bound + 1e-9 - z0,
             value=z0, bound=bound, x0=x0, x1=x1)
    cert.resolution = {"points_per_axis": n, "style": "inner-box"}
    return InvertResult(field=Zf, certificate=cert)


# --- charting a given near-identity map ----------------------------------------


class DiffeoRep:
    """A chart-wise realization of the map induced by a displacement field.

    Inverse evaluations tabulate preimages on the chart's inner-region grid
    on first use; later queries interpolate that table for Newton seeds and
    refine, which keeps repeated inversions cheap.
    """

    def __init__(
        self,
        spec: ManifoldSpec,
        X: LocalizedField,
        certificate: Optional[Certificate] = None,
        n: Optional[int] = None,
    ):
        self.spec = spec
        self.field = X
        self.certificate = certificate
        self._n = n or spec.grid_resolution
        self._mfs = _metric_cache(spec)
        self._inverse_tables: dict[str, GridTable] = {}

    def forward(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        mf = self._mfs[chart_id]
        return _exp_core(mf, pts, self.field.evaluate(chart_id, pts))

    def _inverse_table(self, chart_id: str) -> GridTable:
        table = self._inverse_tables.get(chart_id)
        if table is None:
            chart = self.spec.chart(chart_id)
            mf = self._mfs[chart_id]
            axes = _tab_axes(chart, self._n)
            u = _tab_grid(axes)
            seeds = _exp_core(mf, u, -self.field.evaluate(chart_id, u))
            v, res = _solve_phi(mf, self.field, chart_id, u, seeds)
            if res > 1e-9:
                raise NewtonFailure(
                    f"inverse tabulation stalled on chart {chart_id!r} "
                    f"(residual {res:.3g})"
                )
            table = GridTable(
                axes=axes,
                values=(v - u).reshape(tuple(len(ax) for ax in axes) + (chart.dim,)),
            )
            self._inverse_tables[chart_id] = table
        return table

    def inverse(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        mf = self._mfs[chart_id]
        table = self._inverse_table(chart_id)
        seeds = pts + table.interpolate(pts)
        v, res = _solve_phi(mf, self.field, chart_id, pts, seeds)
        if res > 1e-9:
            raise NewtonFailure(f"inverse evaluation stalled (residual {res:.3g})")
        return v


MapLike = Union[DiffeoRep, Callable[[str, np.ndarray], np.ndarray]]


def group_chart(
    spec: ManifoldSpec,
    phi: MapLike,
    constants: ConstantsReport,
    n: Optional[int] = None,
) -> GridField:
    """Displacement field of a near-identity map: X = log(id, phi).

    ``phi`` maps (chart id, points) to image points in the same chart.
    Raises OutsideTrustRegion when an image leaves the chart domain or its
    displacement reaches the chart's log radius.
    """
    n = n or spec.grid_resolution
    fn = phi.forward if isinstance(phi, DiffeoRep) else phi
    mfs = _metric_cache(spec)
    tables = {}
    for c in spec.charts:
        axes = _tab_axes(c, n)
        u = _tab_grid(axes)
        w = np.asarray(fn(c.id, u), dtype=float)
        if not np.all(c.domain.contains(w, pad=-1e-12)):
            raise OutsideTrustRegion(
                f"map image leaves the domain of chart {c.id!r}"
            )
        Z, _, res = _log_core(mfs[c.id], u, w)
        if float(np.max(res)) > 1e-9:
            raise OutsideTrustRegion(
                f"logarithm did not converge on chart {c.id!r} "
                f"(residual {float(np.max(res)):.3g})"
            )
        limit = constants.chart(c.id).log_radius
        sizes = vector_norm(Z, c.norm)
        if float(np.max(sizes)) >= limit:
            raise OutsideTrustRegion(
                f"displacement {float(np.max(sizes)):.6g} reaches the log "
                f"radius {limit:.6g} on chart {c.id!r}"
            )
        tables[c.id] = GridTable(
            axes=axes, values=Z.reshape(tuple(len(ax) for ax in axes) + (c.dim,))
        )
    return GridField(tables=tables, name="charted")
