"""Manifold descriptions: charts, transitions, loading, and atlas validation.

A manifold is described by finitely many charts.  Each chart works in its own
local coordinates, with the domain (an axis-aligned box or a ball) centered
at the origin; the chart carries a metric matrix of formulas, an inner radius
r, a padding R, and a margin epsilon.  Transitions are explicit coordinate
changes between overlapping charts, given as formula vectors together with an
overlap predicate (> 0 inside the overlap) expressed in the source chart's
coordinates.

Files are TOML.  Minimal example::

    grid_resolution = 16

    [[charts]]
    id = "c0"
    dim = 1
    r = 0.75
    R = 0.125
    epsilon = 0.03
      [charts.domain]
      shape = "box"
      center = [0.0]
      extent = [1.0]
      norm = "sup"
      [charts.metric]
      rows = [["1"]]

    [[transitions]]
    from = "c0"
    to = "c1"
    map = ["x1 - 1.0"]
    overlap = "1.0 - abs(x1 - 1.0)"
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .certs import Certificate
from .errors import InvariantViolation, MissingTransition, SpecError
from .expr import Expr, evaluate_at_points, parse_expr
from .norms import vector_norm

__all__ = [
    "Domain",
    "Chart",
    "Transition",
    "ManifoldSpec",
    "load_manifold",
    "load_manifold_from_dict",
    "validate_adapted",
    "locally_finite_report",
    "region_radius",
    "ATLAS_SELECTORS",
]

# atlas selectors: which per-chart region a sup ranges over
ATLAS_SELECTORS = {"A": "domain", "B": "padded", "C": "inner"}


@dataclass(frozen=True)
class Domain:
    shape: str  # "box" | "ball"
    extent: np.ndarray  # half-widths per axis (box) or [radius]*d (ball)
    norm: str  # "sup" | "euclidean"

    def halfwidths(self) -> np.ndarray:
        return self.extent

    def inradius(self) -> float:
        """Largest rho with the chart-norm ball of radius rho inside."""
        if self.shape == "ball" and self.norm == "euclidean":
            return float(self.extent[0])
        # boxes (and sup-norm balls, which are boxes): a sup ball needs
        # rho <= min halfwidth, and a euclidean ball likewise
        return float(np.min(self.extent))

    def contains(self, pts: np.ndarray, pad: float = 0.0) -> np.ndarray:
        """Strict interior test, with the boundary pulled in by ``pad``."""
        pts = np.asarray(pts, dtype=float)
        if self.shape == "ball":
            r = float(self.extent[0]) - pad
            return vector_norm(pts, self.norm) < r
        return np.all(np.abs(pts) < self.extent - pad, axis=-1)


@dataclass
class Chart:
    id: str
    dim: int
    domain: Domain
    metric: tuple[tuple[Expr, ...], ...]  # d x d formulas in local coords
    r: float  # inner radius
    R: float  # padding
    epsilon: float
    anchor: Optional[np.ndarray] = None  # informational position label
    tag: str = "main"

    @property
    def norm(self) -> str:
        return self.domain.norm

    def extent_scale(self) -> float:
        return float(np.max(self.domain.halfwidths()))

    # --- sampling ---------------------------------------------------------

    def region_grid(
        self, region: str, n: int, style: str = "margin"
    ) -> tuple[np.ndarray, dict]:
        """Tensor grid over a named region of this chart.

        region: "domain", "padded" (ball of radius r+R), "inner" (radius r),
        or "ball:<rho>" for an explicit radius.  style "closed" includes the
        boundary (used for suprema over closures); style "margin" stays one
        grid cell inside (used when sampling open regions).  Returns the
        points, flattened in lexicographic grid order, plus metadata.
        """
        rho = region_radius(self, region)
        if region == "domain" and self.domain.shape == "box":
            halfw = self.domain.halfwidths().copy()
        else:
            halfw = np.full(self.dim, rho)
        axes = []
        cells = []
        for h in halfw:
            cell = 2.0 * h / n
            cells.append(cell)
            if style == "closed":
                axes.append(np.linspace(-h, h, n))
            elif style == "margin":
                axes.append(np.linspace(-h + cell, h - cell, n))
            else:
                raise ValueError(f"unknown grid style {style!r}")
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        # euclidean-norm regions are round: mask the bounding-box grid
        if self._region_is_round(region):
            keep = vector_norm(pts, "euclidean") <= rho + 1e-15
            pts = pts[keep]
        meta = {
            "region": region,
            "style": style,
            "points_per_axis": n,
            "cell": max(cells),
        }
        return pts, meta

    def _region_is_round(self, region: str) -> bool:
        if self.domain.norm != "euclidean":
            return False
        if region == "domain":
            return self.domain.shape == "ball"
        return True  # padded/inner/explicit radii are chart-norm balls

    def region_contains(
        self, region: str, pts: np.ndarray, pad: float = 0.0
    ) -> np.ndarray:
        if region == "domain":
            return self.domain.contains(pts, pad=pad)
        rho = region_radius(self, region)
        return vector_norm(pts, self.norm) < rho - pad

    def grid_cell(self, region: str, n: int) -> float:
        rho = region_radius(self, region)
        if region == "domain" and self.domain.shape == "box":
            rho = float(np.max(self.domain.halfwidths()))
        return 2.0 * rho / n


def region_radius(chart: Chart, region: str) -> float:
    if region == "domain":
        return chart.domain.inradius()
    if region == "padded":
        return chart.r + chart.R
    if region == "inner":
        return chart.r
    if region.startswith("ball:"):
        return float(region.split(":", 1)[1])
    raise ValueError(f"unknown region {region!r}")


@dataclass
class Transition:
    frm: str
    to: str
    map: tuple[Expr, ...]  # target coords as formulas in source coords
    overlap: Expr  # predicate, > 0 inside the overlap (source coords)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        cols = [evaluate_at_points(e, pts) for e in self.map]
        return np.stack(cols, axis=-1)

    def overlap_mask(self, pts: np.ndarray) -> np.ndarray:
        return evaluate_at_points(self.overlap, pts) > 0.0

    def jacobian(self, pts: np.ndarray, h: float) -> np.ndarray:
        """D(map) by central differences, shape (..., d, d)."""
        pts = np.asarray(pts, dtype=float)
        d = pts.shape[-1]
        cols = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            cols.append((self.apply(pts + e) - self.apply(pts - e)) / (2 * h))
        return np.stack(cols, axis=-1)


@dataclass
class ManifoldSpec:
    charts: list[Chart]
    transitions: list[Transition]
    weights: dict[str, dict[str, Expr]] = field(default_factory=dict)
    fields: dict[str, dict[str, tuple[Expr, ...]]] = field(default_factory=dict)
    grid_resolution: int = 16

    def __post_init__(self) -> None:
        self._by_id = {c.id: c for c in self.charts}

    @property
    def dim(self) -> int:
        return self.charts[0].dim

    def chart(self, chart_id: str) -> Chart:
        try:
            return self._by_id[chart_id]
        except KeyError:
            raise SpecError(f"no chart with id {chart_id!r}") from None

    def chart_ids(self) -> list[str]:
        return [c.id for c in self.charts]

    def transitions_from(self, chart_id: str) -> list[Transition]:
        return [t for t in self.transitions if t.frm == chart_id]

    def reverse_of(self, t: Transition) -> Transition:
        for s in self.transitions:
            if s.frm == t.to and s.to == t.frm:
                return s
        raise MissingTransition(t.to, t.frm)


# --- loading ---------------------------------------------------------------


def load_manifold(path: str, strict: bool = True) -> ManifoldSpec:
    """Read and validate a manifold description file (TOML)."""
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except FileNotFoundError:
        raise SpecError(f"no such file: {path}") from None
    except _toml.TOMLDecodeError as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    return load_manifold_from_dict(data, strict=strict)


def load_manifold_from_dict(data: Mapping[str, Any], strict: bool = True) -> ManifoldSpec:
    charts = [_parse_chart(raw) for raw in _req(data, "charts", list)]
    transitions = [_parse_transition(raw) for raw in data.get("transitions", [])]
    weights: dict[str, dict[str, Expr]] = {}
    for raw in data.get("weights", []):
        name = _req(raw, "name", str)
        weights[name] = _per_chart_scalar(raw, charts)
    fields: dict[str, dict[str, tuple[Expr, ...]]] = {}
    for raw in data.get("fields", []):
        name = _req(raw, "name", str)
        fields[name] = _per_chart_vector(raw, charts)
    spec = ManifoldSpec(
        charts=charts,
        transitions=transitions,
        weights=weights,
        fields=fields,
        grid_resolution=int(data.get("grid_resolution", 16)),
    )
    violations = validate_structure(spec)
    if violations and strict:
        raise InvariantViolation(violations)
    return spec


def _req(data: Mapping[str, Any], key: str, typ: type) -> Any:
    if key not in data:
        raise SpecError(f"missing required key {key!r}")
    val = data[key]
    if not isinstance(val, typ):
        raise SpecError(f"key {key!r} must be a {typ.__name__}")
    return val


def _parse_chart(raw: Mapping[str, Any]) -> Chart:
    cid = _req(raw, "id", str)
    dim = int(_req(raw, "dim", int))
    if dim < 1:
        raise SpecError(f"chart {cid!r}: dim must be positive")
    dom_raw = _req(raw, "domain", dict)
    shape = dom_raw.get("shape", "box")
    if shape not in ("box", "ball"):
        raise SpecError(f"chart {cid!r}: unknown domain shape {shape!r}")
    norm = dom_raw.get("norm", "sup")
    if norm not in ("sup", "euclidean"):
        raise SpecError(f"chart {cid!r}: unknown norm {norm!r}")
    center = np.asarray(dom_raw.get("center", [0.0] * dim), dtype=float)
    ext_raw = dom_raw.get("extent")
    if ext_raw is None:
        raise SpecError(f"chart {cid!r}: domain.extent is required")
    if isinstance(ext_raw, (int, float)):
        extent = np.full(dim, float(ext_raw))
    else:
        extent = np.asarray(ext_raw, dtype=float)
    if extent.shape != (dim,):
        raise SpecError(f"chart {cid!r}: extent must have {dim} entries")
    if shape == "ball" and not np.all(extent == extent[0]):
        raise SpecError(f"chart {cid!r}: a ball domain has a single radius")
    if center.shape != (dim,) or np.any(center != 0.0):
        raise SpecError(
            f"chart {cid!r}: domains are centered at the origin in local "
            f"coordinates (translate the chart map instead)"
        )
    metric_raw = _req(raw, "metric", dict)
    rows = _req(metric_raw, "rows", list)
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise SpecError(f"chart {cid!r}: metric must be {dim}x{dim}")
    metric = tuple(tuple(parse_expr(str(e)) for e in row) for row in rows)
    anchor = raw.get("anchor")
    return Chart(
        id=cid,
        dim=dim,
        domain=Domain(shape=shape, extent=extent, norm=norm),
        metric=metric,
        r=float(_req(raw, "r", (int, float))),
        R=float(_req(raw, "R", (int, float))),
        epsilon=float(_req(raw, "epsilon", (int, float))),
        anchor=None if anchor is None else np.asarray(anchor, dtype=float),
        tag=str(raw.get("tag", "main")),
    )


def _parse_transition(raw: Mapping[str, Any]) -> Transition:
    frm = _req(raw, "from", str)
    to = _req(raw, "to", str)
    map_exprs = tuple(parse_expr(str(e)) for e in _req(raw, "map", list))
    overlap = parse_expr(str(_req(raw, "overlap", str)))
    return Transition(frm=frm, to=to, map=map_exprs, overlap=overlap)


def _per_chart_scalar(raw: Mapping[str, Any], charts: list[Chart]) -> dict[str, Expr]:
    if "by_chart" in raw:
        table = {k: parse_expr(str(v)) for k, v in raw["by_chart"].items()}
    elif "expr" in raw:
        e = parse_expr(str(raw["expr"]))
        table = {c.id: e for c in charts}
    else:
        raise SpecError(f"weight {raw.get('name')!r}: needs 'expr' or 'by_chart'")
    return table


def _per_chart_vector(
    raw: Mapping[str, Any], charts: list[Chart]
) -> dict[str, tuple[Expr, ...]]:
    if "by_chart" in raw:
        return {
            k: tuple(parse_expr(str(e)) for e in v)
            for k, v in raw["by_chart"].items()
        }
    if "exprs" in raw:
        comp = tuple(parse_expr(str(e)) for e in raw["exprs"])
        return {c.id: comp for c in charts}
    raise SpecError(f"field {raw.get('name')!r}: needs 'exprs' or 'by_chart'")


# --- structural validation --------------------------------------------------


def validate_structure(spec: ManifoldSpec) -> list[str]:
    """All cheap/structural invariants; returns human-readable violations."""
    out: list[str] = []
    seen: set[str] = set()
    n = spec.grid_resolution
    for c in spec.charts:
        if c.id in seen:
            out.append(f"duplicate chart id {c.id!r}")
        seen.add(c.id)
        if c.dim != spec.dim:
            out.append(f"chart {c.id!r}: dim {c.dim} != manifold dim {spec.dim}")
        if c.r <= 0 or c.R <= 0:
            out.append(f"chart {c.id!r}: r and R must be positive")
        if not (0.0 < c.epsilon < 1.0):
            out.append(f"chart {c.id!r}: epsilon must lie in (0, 1)")
        if c.r + c.R >= c.domain.inradius():
            out.append(
                f"chart {c.id!r}: closed ball of radius r+R={c.r + c.R:.6g} "
                f"does not fit inside the domain (inradius "
                f"{c.domain.inradius():.6g})"
            )
        out.extend(_check_metric(c, n))
    out.extend(_check_transitions(spec, n))
    out.extend(_check_weight_tables(spec))
    if not _connected(spec):
        out.append("chart adjacency graph is not connected")
    return out


def _check_metric(c: Chart, n: int) -> list[str]:
    out: list[str] = []
    pts, _ = c.region_grid("domain", min(n, 12), style="margin")
    d = c.dim
    G = np.empty(pts.shape[:-1] + (d, d))
    for i in range(d):
        for j in range(d):
            G[..., i, j] = evaluate_at_points(c.metric[i][j], pts)
    if not np.all(np.isfinite(G)):
        out.append(f"chart {c.id!r}: metric not finite on the domain sample")
        return out
    asym = np.max(np.abs(G - np.swapaxes(G, -1, -2)))
    if asym > 1e-12:
        k = int(np.argmax(np.max(np.abs(G - np.swapaxes(G, -1, -2)), axis=(-1, -2))))
        out.append(
            f"chart {c.id!r}: metric asymmetric at sample {pts[k].tolist()} "
            f"(deviation {asym:.3g})"
        )
    eigs = np.linalg.eigvalsh((G + np.swapaxes(G, -1, -2)) / 2.0)
    if np.min(eigs) <= 0:
        k = int(np.argmin(np.min(eigs, axis=-1)))
        out.append(
            f"chart {c.id!r}: metric not positive definite at sample "
            f"{pts[k].tolist()} (min eigenvalue {np.min(eigs):.3g})"
        )
    return out


def _check_transitions(spec: ManifoldSpec, n: int) -> list[str]:
    out: list[str] = []
    ids = set(spec.chart_ids())
    for t in spec.transitions:
        if t.frm not in ids or t.to not in ids:
            out.append(f"transition {t.frm!r}->{t.to!r} references unknown charts")
            continue
        if len(t.map) != spec.dim:
            out.append(f"transition {t.frm!r}->{t.to!r}: map must have {spec.dim} entries")
            continue
        rev = None
        for s in spec.transitions:
            if s.frm == t.to and s.to == t.frm:
                rev = s
                break
        if rev is None:
            raise MissingTransition(t.frm, t.to)
        src = spec.chart(t.frm)
        dst = spec.chart(t.to)
        pts, _ = src.region_grid("domain", min(n, 12), style="margin")
        mask = t.overlap_mask(pts)
        if not np.any(mask):
            out.append(
                f"transition {t.frm!r}->{t.to!r}: overlap predicate is "
                f"nowhere positive on the sampled domain"
            )
            continue
        p = pts[mask]
        q = t.apply(p)
        if not np.all(dst.domain.contains(q, pad=-1e-9)):
            out.append(
                f"transition {t.frm!r}->{t.to!r}: maps sampled overlap "
                f"points outside the target domain"
            )
            continue
        back = rev.apply(q)
        err = float(np.max(vector_norm(back - p, "sup")))
        if err > 1e-8:
            out.append(
                f"transition {t.frm!r}->{t.to!r}: round trip deviates by "
                f"{err:.3g} > 1e-8"
            )
    out.extend(_check_cocycles(spec, n))
    return out


def _check_cocycles(spec: ManifoldSpec, n: int) -> list[str]:
    out: list[str] = []
    by_pair = {(t.frm, t.to): t for t in spec.transitions}
    for t1 in spec.transitions:
        for t2 in spec.transitions_from(t1.to):
            if t2.to == t1.frm:
                continue
            t3 = by_pair.get((t1.frm, t2.to))
            if t3 is None:
                continue
            src = spec.chart(t1.frm)
            pts, _ = src.region_grid("domain", min(n, 10), style="margin")
            m = t1.overlap_mask(pts) & t3.overlap_mask(pts)
            if not np.any(m):
                continue
            p = pts[m]
            q = t1.apply(p)
            m2 = t2.overlap_mask(q)
            if not np.any(m2):
                continue
            lhs = t2.apply(q[m2])
            rhs = t3.apply(p[m2])
            err = float(np.max(vector_norm(lhs - rhs, "sup")))
            if err > 1e-8:
                out.append(
                    f"cocycle {t1.frm!r}->{t1.to!r}->{t2.to!r} deviates by "
                    f"{err:.3g} > 1e-8"
                )
    return out


def _check_weight_tables(spec: ManifoldSpec) -> list[str]:
    out: list[str] = []
    ids = set(spec.chart_ids())
    for name, table in spec.weights.items():
        missing = ids - set(table)
        if missing:
            out.append(f"weight {name!r}: missing charts {sorted(missing)}")
    for name, table in spec.fields.items():
        missing = ids - set(table)
        if missing:
            out.append(f"field {name!r}: missing charts {sorted(missing)}")
        for cid, comp in table.items():
            if len(comp) != spec.dim:
                out.append(f"field {name!r}, chart {cid!r}: needs {spec.dim} components")
    return out


def _connected(spec: ManifoldSpec) -> bool:
    ids = spec.chart_ids()
    if len(ids) <= 1:
        return True
    parent = {i: i for i in ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in spec.transitions:
        if t.frm in parent and t.to in parent:
            parent[find(t.frm)] = find(t.to)
    roots = {find(i) for i in ids}
    return len(roots) == 1


# --- atlas-level validation --------------------------------------------------


def validate_adapted(spec: ManifoldSpec, n: Optional[int] = None) -> Certificate:
    """Adaptedness certificate: ball fit, margin inequality, sampled cover.

    Per chart: (i) the closed ball of radius r+R fits inside the domain,
    (ii) r < (1/(2 epsilon) - 1) * R, (iii) every sampled inner-ball point
    lies in some chart's declared inner region (reachable via transitions).
    """
    n = n or spec.grid_resolution
    cert = Certificate(kind="adapted-atlas")
    cert.resolution = {"points_per_axis": n, "style": "margin"}
    for c in spec.charts:
        fit = c.domain.inradius() - (c.r + c.R)
        cert.add(f"ball-in-domain:{c.id}", fit > 0, fit, r_plus_R=c.r + c.R)
        bound = (1.0 / (2.0 * c.epsilon) - 1.0) * c.R
        cert.add(
            f"adapted-inequality:{c.id}",
            c.r < bound,
            bound - c.r,
            r=c.r,
            bound=bound,
            epsilon=c.epsilon,
        )
        frac, neighbor_frac = _cover_fractions(spec, c, n)
        cert.add(
            f"cover:{c.id}",
            frac >= 1.0,
            frac - 1.0,
            covered_fraction=frac,
            neighbor_covered_fraction=neighbor_frac,
        )
    connected = _connected(spec)
    cert.add("connected", connected, 0.0 if connected else -1.0)
    return cert


def _cover_fractions(spec: ManifoldSpec, c: Chart, n: int) -> tuple[float, float]:
    pts, _ = c.region_grid("inner", n, style="margin")
    own = c.region_contains("inner", pts)
    other = np.zeros(len(pts), dtype=bool)
    for t in spec.transitions_from(c.id):
        dst = spec.chart(t.to)
        m = t.overlap_mask(pts)
        if not np.any(m):
            continue
        q = t.apply(pts[m])
        inside = dst.region_contains("inner", q)
        sub = np.zeros(len(pts), dtype=bool)
        sub[np.flatnonzero(m)[inside]] = True
        other |= sub
    covered = own | other
    return float(np.mean(covered)), float(np.mean(other))


def locally_finite_report(spec: ManifoldSpec, n: Optional[int] = None) -> dict:
    """Neighbor counts per chart plus the unique-point flag.

    A neighbor is a distinct chart connected by a declared transition whose
    overlap predicate is positive somewhere on the sampled domain.  The
    unique-point flag records whether some sampled point lies in exactly one
    chart domain — the hypothesis under which a certified local
    diffeomorphism is globally one.
    """
    n = n or spec.grid_resolution
    neighbors: dict[str, int] = {}
    unique: Optional[dict] = None
    for c in spec.charts:
        pts, _ = c.region_grid("domain", n, style="margin")
        count = np.ones(len(pts), dtype=int)  # the chart itself
        seen: set[str] = set()
        for t in spec.transitions_from(c.id):
            m = t.overlap_mask(pts)
            if np.any(m):
                seen.add(t.to)
                count += m.astype(int)
        neighbors[c.id] = len(seen)
        if unique is None:
            k = int(np.argmin(count))
            if count[k] == 1:
                unique = {"chart": c.id, "point": pts[k].tolist()}
    return {
        "neighbors": neighbors,
        "unique_point": {"exists": unique is not None, **(unique or {})},
    }
