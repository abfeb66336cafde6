"""Weighted seminorms of localized fields over chart atlases.

The seminorm of a field X against a weight f at derivative order ell is the
supremum, over charts and sampled points, of |f(x)| times the operator norm
of the ell-th derivative of the chart representation of X.  The atlas
selector picks the per-chart region the supremum ranges over: "A" the full
domain, "B" the padded ball of radius r+R, "C" the inner ball of radius r.

Open regions are sampled on tensor grids that stay one cell away from the
boundary; each result records the region, resolution, and the witness point
attaining the supremum (ties resolve to the lowest chart id, then the
lexicographically first grid index).  Formula fields take derivatives by
nested central differences with a per-order step schedule; tabulated fields
differentiate their own table stencils and support first order only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    EmptyIntersection,
    MultiplierConditionUnverified,
    NotSubordinate,
    OrderUnavailable,
)
from .expr import evaluate_at_points
from .fields import GridField, LocalizedField
from .norms import matrix_op_norm, op_norm, vector_norm
from .spec import ATLAS_SELECTORS, Chart, ManifoldSpec, Transition

__all__ = [
    "SeminormResult",
    "seminorm",
    "MembershipReport",
    "membership",
    "subordinate_restrict",
    "intersect_atlas_seminorm",
    "chart_change_transfer",
    "TransferReport",
    "MEMBERSHIP_CAP",
]

MEMBERSHIP_CAP = 1e12  # default finiteness threshold for membership checks
MAX_ORDER = 3


@dataclass
class SeminormResult:
    value: float
    order: int
    atlas: str
    weight: str
    witness_chart: Optional[str]
    witness_point: Optional[list]
    witness_index: Optional[int]
    resolution: dict

    def __float__(self) -> float:
        return self.value

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "order": self.order,
            "atlas": self.atlas,
            "weight": self.weight,
            "witness_chart": self.witness_chart,
            "witness_point": self.witness_point,
            "witness_index": self.witness_index,
            "resolution": self.resolution,
        }


WeightLike = Union[float, int, dict, object]


def _weight_values(f: WeightLike, chart_id: str, pts: np.ndarray) -> np.ndarray:
    if isinstance(f, (int, float)):
        return np.full(pts.shape[:-1], float(f))
    if isinstance(f, dict):  # chart id -> Expr
        return np.abs(evaluate_at_points(f[chart_id], pts))
    return np.abs(np.asarray(f.eval(chart_id, pts), dtype=float))


def _weight_name(f: WeightLike) -> str:
    if isinstance(f, (int, float)):
        return repr(float(f))
    return getattr(f, "name", "weight")


def _derivative_steps(chart: Chart, ell: int) -> list[float]:
    scale = chart.extent_scale()
    return [1e-3 * scale ** (1.0 / 2**k) for k in range(1, ell + 1)]


def _nested_tensor(
    X: LocalizedField, chart_id: str, pts: np.ndarray, ell: int, steps: Sequence[float]
) -> np.ndarray:
    """ell-fold nested central difference of the field's value tensor."""
    if ell == 0:
        return X.evaluate(chart_id, pts)
    h = steps[ell - 1]
    d = pts.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append(
            (
                _nested_tensor(X, chart_id, pts + e, ell - 1, steps)
                - _nested_tensor(X, chart_id, pts - e, ell - 1, steps)
            )
            / (2 * h)
        )
    return np.stack(cols, axis=-1)


def _chart_values(
    spec: ManifoldSpec,
    X: LocalizedField,
    f: WeightLike,
    ell: int,
    chart: Chart,
    region: str,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """(points, |f| * |D^ell X| at them) for one chart, or empty arrays."""
    if isinstance(X, GridField):
        tab = X.table(chart.id)
        pts = tab.node_points()
        keep = chart.region_contains(region, pts, pad=-1e-12)
        pts = pts[keep]
        if ell == 0:
            tensor = tab.node_values()[keep]
        else:  # ell == 1, enforced by the caller
            tensor = tab.node_gradients()[keep]
    else:
        pts, _ = chart.region_grid(region, n, style="margin")
        tensor = _nested_tensor(X, chart.id, pts, ell, _derivative_steps(chart, ell))
    if len(pts) == 0:
        return pts, np.zeros(0)
    total_args = X.arg_slots + ell
    if total_args == 0:
        size = vector_norm(tensor, chart.norm)
    else:
        size = op_norm(tensor, chart.norm, total_args)
    return pts, _weight_values(f, chart.id, pts) * size


def _check_order(X: LocalizedField, ell: int) -> None:
    if ell < 0:
        raise OrderUnavailable(f"derivative order must be nonnegative, got {ell}")
    if ell > X.max_order():
        raise OrderUnavailable(
            f"field {X.name!r} supports derivative orders up to "
            f"{X.max_order()}, got {ell}"
        )
    if X.arg_slots + ell > MAX_ORDER:
        raise OrderUnavailable(
            f"total derivative order {X.arg_slots + ell} exceeds the "
            f"supported maximum {MAX_ORDER}"
        )


def seminorm(
    spec: ManifoldSpec,
    X: LocalizedField,
    f: WeightLike = 1.0,
    ell: int = 0,
    atlas: str = "A",
    n: Optional[int] = None,
    charts: Optional[Sequence[str]] = None,
) -> SeminormResult:
    """Weighted seminorm sup |f| * |D^ell X| over the selected atlas regions."""
    _check_order(X, ell)
    region = ATLAS_SELECTORS[atlas]
    n = n or spec.grid_resolution
    best = -np.inf
    wit_chart = None
    wit_point = None
    wit_index = None
    ids = sorted(charts) if charts is not None else sorted(spec.chart_ids())
    for cid in ids:
        chart = spec.chart(cid)
        if not X.has_chart(cid):
            continue
        pts, vals = _chart_values(spec, X, f, ell, chart, region, n)
        if len(vals) == 0:
            continue
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            wit_chart = cid
            wit_point = pts[k].tolist()
            wit_index = k
    sample_chart = spec.chart(ids[0]) if ids else spec.charts[0]
    return SeminormResult(
        value=0.0 if best == -np.inf else best,
        order=ell,
        atlas=atlas,
        weight=_weight_name(f),
        witness_chart=wit_chart,
        witness_point=wit_point,
        witness_index=wit_index,
        resolution={
            "points_per_axis": n,
            "style": "margin" if not isinstance(X, GridField) else "table-nodes",
            "region": region,
            "margin_cells": 1,
            "fd_steps": _derivative_steps(sample_chart, ell),
        },
    )


@dataclass
class MembershipReport:
    member: bool
    cap: float
    values: dict  # (weight name, order) -> float
    worst: float

    def as_dict(self) -> dict:
        return {
            "member": self.member,
            "cap": self.cap,
            "worst": self.worst,
            "values": {f"{k[0]}|{k[1]}": v for k, v in sorted(self.values.items())},
        }


def membership(
    spec: ManifoldSpec,
    X: LocalizedField,
    weights: Sequence[WeightLike],
    orders: Sequence[int] = (0, 1),
    atlas: str = "A",
    cap: float = MEMBERSHIP_CAP,
    n: Optional[int] = None,
) -> MembershipReport:
    """Finiteness of all listed weighted seminorms below the cap."""
    values: dict = {}
    worst = 0.0
    for f in weights:
        for ell in orders:
            v = seminorm(spec, X, f, ell, atlas=atlas, n=n).value
            values[(_weight_name(f), ell)] = v
            worst = max(worst, v)
    member = bool(np.isfinite(worst)) and worst < cap
    return MembershipReport(member=member, cap=cap, values=values, worst=worst)


def subordinate_restrict(
    spec: ManifoldSpec,
    X: LocalizedField,
    chart_ids: Sequence[str],
    n: Optional[int] = None,
    tol: float = 1e-12,
) -> ManifoldSpec:
    """Restrict to a chart subfamily that still carries all of X's support.

    Every sampled point where any dropped chart sees |X| > tol must map into
    a kept chart's inner region through a declared transition; otherwise the
    family is not subordinate to the field and NotSubordinate is raised.
    Returns the sub-description (kept charts, transitions between them).
    """
    n = n or spec.grid_resolution
    keep = set(chart_ids)
    unknown = keep - set(spec.chart_ids())
    if unknown:
        raise NotSubordinate(f"unknown chart ids {sorted(unknown)}")
    for c in spec.charts:
        if c.id in keep or not X.has_chart(c.id):
            continue
        pts, _ = c.region_grid("inner", n, style="margin")
        sizes = vector_norm(X.evaluate(c.id, pts), "sup")
        live = sizes > tol
        if not np.any(live):
            continue
        covered = np.zeros(len(pts), dtype=bool)
        for t in spec.transitions_from(c.id):
            if t.to not in keep:
                continue
            m = t.overlap_mask(pts)
            if not np.any(m):
                continue
            q = t.apply(pts[m])
            inside = spec.chart(t.to).region_contains("inner", q)
            sub = np.zeros(len(pts), dtype=bool)
            sub[np.flatnonzero(m)[inside]] = True
            covered |= sub
        missing = live & ~covered
        if np.any(missing):
            k = int(np.argmax(missing))
            raise NotSubordinate(
                f"chart {c.id!r} carries field support at "
                f"{pts[k].tolist()} not covered by the kept charts"
            )
    kept_charts = [c for c in spec.charts if c.id in keep]
    kept_transitions = [
        t for t in spec.transitions if t.frm in keep and t.to in keep
    ]
    return ManifoldSpec(
        charts=kept_charts,
        transitions=kept_transitions,
        weights={
            name: {k: v for k, v in tab.items() if k in keep}
            for name, tab in spec.weights.items()
        },
        fields={
            name: {k: v for k, v in tab.items() if k in keep}
            for name, tab in spec.fields.items()
        },
        grid_resolution=spec.grid_resolution,
    )


def intersect_atlas_seminorm(
    spec: ManifoldSpec,
    X: LocalizedField,
    f: WeightLike = 1.0,
    ell: int = 0,
    atlas: str = "A",
    n: Optional[int] = None,
    pairs: Optional[Sequence[tuple[str, str]]] = None,
) -> SeminormResult:
    """Seminorm with the supremum restricted to pairwise chart overlaps.

    The overlap of a declared transition is sampled in source coordinates;
    EmptyIntersection is raised when no sampled point lies in any overlap.
    """
    _check_order(X, ell)
    region = ATLAS_SELECTORS[atlas]
    n = n or spec.grid_resolution
    wanted = set(pairs) if pairs is not None else None
    best = -np.inf
    wit_chart = None
    wit_point = None
    wit_index = None
    found_any = False
    for t in sorted(spec.transitions, key=lambda s: (s.frm, s.to)):
        if wanted is not None and (t.frm, t.to) not in wanted:
            continue
        chart = spec.chart(t.frm)
        if not X.has_chart(t.frm):
            continue
        pts, vals = _chart_values(spec, X, f, ell, chart, region, n)
        if len(pts) == 0:
            continue
        m = t.overlap_mask(pts)
        if not np.any(m):
            continue
        found_any = True
        sub_vals = np.where(m, vals, -np.inf)
        k = int(np.argmax(sub_vals))
        if sub_vals[k] > best:
            best = float(sub_vals[k])
            wit_chart = t.frm
            wit_point = pts[k].tolist()
            wit_index = k
    if not found_any:
        raise EmptyIntersection(
            "no sampled point lies in any requested chart overlap"
        )
    return SeminormResult(
        value=best,
        order=ell,
        atlas=atlas,
        weight=_weight_name(f),
        witness_chart=wit_chart,
        witness_point=wit_point,
        witness_index=wit_index,
        resolution={"points_per_axis": n, "style": "margin", "region": region},
    )


@dataclass
class TransferReport:
    source_value: float
    target_value: float
    multiplier: float
    bound: float
    holds: bool
    margin: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def chart_change_transfer(
    spec: ManifoldSpec,
    X: LocalizedField,
    f: WeightLike,
    ell: int,
    transition: Transition,
    multiplier: Optional[float] = None,
    n: Optional[int] = None,
    tol: float = 1e-9,
) -> TransferReport:
    """Bound the overlap seminorm in source coordinates by the target one.

    The multiplier must dominate the transition differential's operator norm
    to the power ell+1 over the overlap; it is computed from samples when the
    transition's differential is constant there, and must be supplied
    otherwise (MultiplierConditionUnverified).
    """
    _check_order(X, ell)
    n = n or spec.grid_resolution
    src = spec.chart(transition.frm)
    dst = spec.chart(transition.to)
    pts, _ = src.region_grid("domain", n, style="margin")
    m = transition.overlap_mask(pts)
    p = pts[m]
    if len(p) == 0:
        raise EmptyIntersection(
            f"transition {transition.frm!r}->{transition.to!r} has no sampled overlap"
        )
    h = 1e-5 * src.extent_scale()
    J = transition.jacobian(p, h)
    norms_J = matrix_op_norm(J, src.norm)
    spread = float(np.max(norms_J) - np.min(norms_J))
    if multiplier is None:
        if spread > 1e-8:
            raise MultiplierConditionUnverified(
                f"transition differential varies by {spread:.3g} over the "
                f"overlap; supply a verified multiplier"
            )
        multiplier = float(np.max(norms_J)) ** (ell + 1)
    # measure both sides on the same overlap
    steps_src = _derivative_steps(src, ell)
    tensor_src = _nested_tensor(X, src.id, p, ell, steps_src) if not isinstance(
        X, GridField
    ) else None
    if tensor_src is None:
        keep = X.table(src.id).covers(p)
        p = p[keep]
        q = transition.apply(p)
        keep2 = X.table(dst.id).covers(q)
        p, q = p[keep2], q[keep2]
        v_src = _grid_side_values(X, src, p, f, ell)
        v_dst = _grid_side_values(X, dst, q, f, ell)
    else:
        q = transition.apply(p)
        total = X.arg_slots + ell
        size_src = (
            vector_norm(tensor_src, src.norm)
            if total == 0
            else op_norm(tensor_src, src.norm, total)
        )
        v_src = _weight_values(f, src.id, p) * size_src
        tensor_dst = _nested_tensor(X, dst.id, q, ell, _derivative_steps(dst, ell))
        size_dst = (
            vector_norm(tensor_dst, dst.norm)
            if total == 0
            else op_norm(tensor_dst, dst.norm, total)
        )
        v_dst = _weight_values(f, dst.id, q) * size_dst
    source_value = float(np.max(v_src))
    target_value = float(np.max(v_dst))
    bound = multiplier * target_value
    margin = bound + tol - source_value
    return TransferReport(
        source_value=source_value,
        target_value=target_value,
        multiplier=multiplier,
        bound=bound,
        holds=margin >= 0.0,
        margin=margin,
    )


def _grid_side_values(
    X: GridField, chart: Chart, pts: np.ndarray, f: WeightLike, ell: int
) -> np.ndarray:
    if ell == 0:
        vals = X.evaluate(chart.id, pts)
        size = vector_norm(vals, chart.norm)
    else:
        raise OrderUnavailable(
            "chart-change transfer of tabulated fields supports order 0 only"
        )
    return _weight_values(f, chart.id, pts) * size
