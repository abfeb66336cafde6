"""Vector fields localized to charts: formula-backed, tabulated, derived.

A localized field assigns to each chart a coordinate representation of one
global vector field.  Two storage forms exist: per-chart formulas
(ExprField) and per-chart value tables on regular grids (GridField — the
output form of the group operations, which produce values rather than
formulas).  Representations of the same global field must agree across
transitions: X_to(T(p)) = DT(p) X_from(p); ``validate_localization`` samples
that identity on every declared overlap.

Tabulated fields interpolate multilinearly between nodes and support
derivatives up to first order (table stencils); formula fields support
derivatives up to third order via nested central differences.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .certs import Certificate
from .errors import SpecError
from .expr import Expr, evaluate_at_points, parse_expr
from .norms import vector_norm
from .spec import ManifoldSpec

__all__ = [
    "ExprField",
    "GridTable",
    "GridField",
    "DerivedField",
    "LocalizedField",
    "field_from_spec",
    "validate_localization",
    "write_field",
    "read_field",
]


@dataclass
class ExprField:
    """A field given by formulas, one component tuple per chart."""

    components: dict[str, tuple[Expr, ...]]
    name: str = "field"
    arg_slots: int = 0  # value tensor rank beyond the output axis

    @classmethod
    def from_strings(
        cls, table: dict[str, tuple[str, ...]], name: str = "field"
    ) -> "ExprField":
        return cls(
            components={
                cid: tuple(parse_expr(s) for s in comps)
                for cid, comps in table.items()
            },
            name=name,
        )

    @classmethod
    def uniform(cls, spec: ManifoldSpec, exprs: tuple[str, ...], name: str = "field") -> "ExprField":
        parsed = tuple(parse_expr(s) for s in exprs)
        return cls(components={c.id: parsed for c in spec.charts}, name=name)

    def chart_ids(self) -> list[str]:
        return sorted(self.components)

    def has_chart(self, chart_id: str) -> bool:
        return chart_id in self.components

    def evaluate(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        try:
            comps = self.components[chart_id]
        except KeyError:
            raise SpecError(
                f"field {self.name!r} has no representation on chart {chart_id!r}"
            ) from None
        pts = np.asarray(pts, dtype=float)
        return np.stack([evaluate_at_points(e, pts) for e in comps], axis=-1)

    def max_order(self) -> int:
        return 3


@dataclass
class GridTable:
    """Values of one chart representation on a regular tensor grid."""

    axes: tuple[np.ndarray, ...]
    values: np.ndarray  # (n_1, ..., n_d, d_out)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def node_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def node_values(self) -> np.ndarray:
        return self.values.reshape(-1, self.values.shape[-1])

    def covers(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        ok = np.ones(pts.shape[:-1], dtype=bool)
        for j, ax in enumerate(self.axes):
            ok &= (pts[..., j] >= ax[0] - 1e-12) & (pts[..., j] <= ax[-1] + 1e-12)
        return ok

    def interpolate(self, pts: np.ndarray) -> np.ndarray:
        """Multilinear interpolation, extrapolating from the edge cells.

        Queries outside the bounding box continue the boundary cell's linear
        model rather than clamping, so tables of affine data reproduce the
        affine function everywhere and near-boundary queries (composition
        displacements smaller than a cell) stay first-order accurate.
        """
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        idx = []
        frac = []
        for j, ax in enumerate(self.axes):
            x = pts[..., j]
            i = np.clip(np.searchsorted(ax, x, side="right") - 1, 0, len(ax) - 2)
            idx.append(i)
            frac.append((x - ax[i]) / (ax[i + 1] - ax[i]))
        out = np.zeros(pts.shape[:-1] + (self.values.shape[-1],))
        for corner in range(1 << d):
            w = np.ones(pts.shape[:-1])
            sel = []
            for j in range(d):
                if corner >> j & 1:
                    w = w * frac[j]
                    sel.append(idx[j] + 1)
                else:
                    w = w * (1.0 - frac[j])
                    sel.append(idx[j])
            out += w[..., None] * self.values[tuple(sel)]
        return out

    def node_gradients(self) -> np.ndarray:
        """dX_i/dx_j at the nodes via table stencils, shape (N, d_out, d)."""
        grads = np.gradient(self.values, *self.axes, axis=tuple(range(self.dim)))
        if self.dim == 1:
            grads = [grads]
        stacked = np.stack(grads, axis=-1)  # (n_1..n_d, d_out, d)
        return stacked.reshape(-1, self.values.shape[-1], self.dim)


@dataclass
class GridField:
    """A field stored as per-chart value tables."""

    tables: dict[str, GridTable]
    name: str = "field"
    arg_slots: int = 0

    def chart_ids(self) -> list[str]:
        return sorted(self.tables)

    def has_chart(self, chart_id: str) -> bool:
        return chart_id in self.tables

    def table(self, chart_id: str) -> GridTable:
        try:
            return self.tables[chart_id]
        except KeyError:
            raise SpecError(
                f"field {self.name!r} has no table on chart {chart_id!r}"
            ) from None

    def evaluate(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        return self.table(chart_id).interpolate(pts)

    def max_order(self) -> int:
        return 1


@dataclass
class DerivedField:
    """Finite-difference derivative view of another field.

    Raises the tensor rank by one: values gain a trailing argument axis.
    Used to express identities between a field's higher seminorms and its
    derivative's lower ones.
    """

    base: Union[ExprField, GridField, "DerivedField"]
    h: float = 1e-3

    @property
    def name(self) -> str:
        return f"D({self.base.name})"

    @property
    def arg_slots(self) -> int:
        return self.base.arg_slots + 1

    def chart_ids(self) -> list[str]:
        return self.base.chart_ids()

    def has_chart(self, chart_id: str) -> bool:
        return self.base.has_chart(chart_id)

    def evaluate(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = pts.shape[-1]
        cols = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = self.h
            cols.append(
                (
                    self.base.evaluate(chart_id, pts + e)
                    - self.base.evaluate(chart_id, pts - e)
                )
                / (2 * self.h)
            )
        return np.stack(cols, axis=-1)

    def max_order(self) -> int:
        return max(self.base.max_order() - 1, 0)


LocalizedField = Union[ExprField, GridField, DerivedField]


def field_from_spec(spec: ManifoldSpec, name: str) -> ExprField:
    try:
        table = spec.fields[name]
    except KeyError:
        raise SpecError(f"manifold declares no field named {name!r}") from None
    return ExprField(components=dict(table), name=name)


# --- localization ------------------------------------------------------------


def validate_localization(
    spec: ManifoldSpec,
    X: LocalizedField,
    n: Optional[int] = None,
    tol: float = 1e-6,
) -> Certificate:
    """Sample X_to(T(p)) = DT(p) X_from(p) on every declared overlap."""
    n = n or spec.grid_resolution
    cert = Certificate(kind="field-localization")
    cert.resolution = {"points_per_axis": n, "style": "margin"}
    cert.info = {"field": X.name, "tolerance": tol}
    h = 1e-5
    for t in spec.transitions:
        label = f"overlap:{t.frm}->{t.to}"
        if not (X.has_chart(t.frm) and X.has_chart(t.to)):
            cert.add(label, True, 0.0, skipped="field absent on a side")
            continue
        src = spec.chart(t.frm)
        pts, _ = src.region_grid("domain", n, style="margin")
        mask = t.overlap_mask(pts)
        p = pts[mask]
        if isinstance(X, GridField):
            p = p[X.table(t.frm).covers(p)]
        if len(p) == 0:
            cert.add(label, True, 0.0, skipped="no sampled overlap points")
            continue
        q = t.apply(p)
        if isinstance(X, GridField):
            keep = X.table(t.to).covers(q)
            p, q = p[keep], q[keep]
            if len(p) == 0:
                cert.add(label, True, 0.0, skipped="no shared table points")
                continue
        J = t.jacobian(p, h * src.extent_scale())
        lhs = X.evaluate(t.to, q)
        rhs = np.einsum("...ij,...j->...i", J, X.evaluate(t.frm, p))
        dev = float(np.max(vector_norm(lhs - rhs, "sup")))
        cert.add(label, dev <= tol, tol - dev, deviation=dev, points=len(p))
    return cert


# --- tabulated-field file format ---------------------------------------------

_MAGIC = b"atlasdiffeo-field 1"


def write_field(path: str, X: GridField) -> None:
    """Text header plus row-major little-endian float64 payload per chart."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b"\n")
        fh.write(f"name {X.name}\n".encode())
        fh.write(f"charts {len(X.tables)}\n".encode())
        for cid in sorted(X.tables):
            tab = X.tables[cid]
            shape = ",".join(str(s) for s in tab.values.shape)
            los = ",".join(repr(float(ax[0])) for ax in tab.axes)
            his = ",".join(repr(float(ax[-1])) for ax in tab.axes)
            fh.write(f"chart {cid} shape {shape} lo {los} hi {his}\n".encode())
            fh.write(np.ascontiguousarray(tab.values, dtype="<f8").tobytes())


def read_field(path: str) -> GridField:
    with open(path, "rb") as fh:
        buf = fh.read()
    stream = io.BytesIO(buf)

    def line() -> str:
        out = bytearray()
        while True:
            b = stream.read(1)
            if not b or b == b"\n":
                break
            out += b
        return out.decode()

    if line() != _MAGIC.decode():
        raise SpecError(f"{path} is not a tabulated-field file")
    name = line().split(" ", 1)[1]
    count = int(line().split(" ", 1)[1])
    tables: dict[str, GridTable] = {}
    for _ in range(count):
        parts = line().split(" ")
        # chart <id> shape <s> lo <l> hi <h>
        cid = parts[1]
        shape = tuple(int(s) for s in parts[3].split(","))
        los = [float(s) for s in parts[5].split(",")]
        his = [float(s) for s in parts[7].split(",")]
        n_vals = int(np.prod(shape))
        raw = stream.read(8 * n_vals)
        if len(raw) != 8 * n_vals:
            raise SpecError(f"{path}: truncated payload for chart {cid!r}")
        values = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        axes = tuple(
            np.linspace(lo, hi, shape[k]) for k, (lo, hi) in enumerate(zip(los, his))
        )
        tables[cid] = GridTable(axes=axes, values=values)
    return GridField(tables=tables, name=name)
