"""Analytic fixtures with closed-form geometry, used as ground truth.

Each oracle builds a loader-shaped description dict, runs it through the
standard loader (so every fixture exercises parsing and validation), and
pairs the resulting manifold with closed-form exponential/logarithm maps and
reference constants.  Three families:

* ``flat_oracle`` / ``scaled_flat_oracle`` — a lattice of identity charts on
  R^d with sup norm; geodesics are straight lines, every derivative bound is
  exact.
* ``cylinder_oracle`` — R x S^1 in covering coordinates (x, theta) with the
  flat product metric; transitions wrap theta by one period, weights are the
  polynomial family 1, x, ..., x^4 in the global first coordinate.
* ``half_plane_oracle`` — one chart of the upper half-plane with metric
  y^{-2} (dx^2 + dy^2); exp and log follow the classical half-circle
  geodesics, giving curved-space ground truth with nonzero derivative
  bounds.

``emit_toml`` serializes any of these descriptions to a TOML document the
CLI and loader round-trip.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Optional

import numpy as np

from .errors import RadiiOrderViolation, SpecError
from .expr import BinOp, Call, Const, Expr, Neg, Num, Var, parse_expr
from .spec import ManifoldSpec, load_manifold_from_dict

__all__ = [
    "OracleManifold",
    "flat_oracle",
    "scaled_flat_oracle",
    "cylinder_oracle",
    "half_plane_oracle",
    "oracle_by_name",
    "emit_toml",
    "localize_global_exprs",
]


class OracleManifold:
    """A fixture: spec + closed-form exp/log + reference constant values."""

    def __init__(
        self,
        kind: str,
        data: dict,
        exp: Callable[[str, np.ndarray, np.ndarray], np.ndarray],
        log: Callable[[str, np.ndarray, np.ndarray], np.ndarray],
        constants: Optional[dict] = None,
        notes: str = "",
    ):
        self.kind = kind
        self.data = data
        self.spec: ManifoldSpec = load_manifold_from_dict(data)
        self._exp = exp
        self._log = log
        self.constants = dict(constants or {})
        self.notes = notes

    def exp(self, chart_id: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._exp(chart_id, np.asarray(x, float), np.asarray(y, float))

    def log(self, chart_id: str, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self._log(chart_id, np.asarray(x, float), np.asarray(z, float))

    def anchor(self, chart_id: str) -> np.ndarray:
        a = self.spec.chart(chart_id).anchor
        return np.zeros(self.spec.dim) if a is None else a

    def to_global(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, float) + self.anchor(chart_id)

    def emit_toml(self) -> str:
        return emit_toml(self.data)


# --- description helpers -------------------------------------------------------


def _identity_rows(d: int, diag: str = "1") -> list[list[str]]:
    return [[diag if i == j else "0" for j in range(d)] for i in range(d)]


def _box_overlap_expr(h: float, shift: np.ndarray) -> str:
    """Positive exactly where the shifted point stays in a box of halfwidth h."""
    terms = [f"{h!r} - abs(x{i + 1} + {float(t)!r})" for i, t in enumerate(shift)]
    if len(terms) == 1:
        return f"({terms[0]})"
    return "min(" + ", ".join(terms) + ")"


def _shift_map_exprs(shift: np.ndarray) -> list[str]:
    return [f"x{i + 1} + {float(t)!r}" for i, t in enumerate(shift)]


def _lattice_id(center: np.ndarray) -> str:
    return "k" + "_".join(str(int(round(c))) for c in center)


# --- flat lattice ---------------------------------------------------------------


def flat_oracle(d: int = 1, r1: float = 1.0, r2: float = 0.75) -> OracleManifold:
    """Lattice of identity charts on R^d; geodesics are straight lines.

    Chart centers sit on the integer lattice intersected with [-1, 1]^d,
    each chart an open sup-norm box of halfwidth r1 around its center with
    plateau radius r2.  Requires 1 >= r1 > r2 > 1/2 so that neighboring
    charts overlap and the padding collar fits.
    """
    return _lattice_oracle(d, r1, r2, metric_diag="1", kind="flat")


def scaled_flat_oracle(
    d: int = 1, c: float = 2.0, r1: float = 1.0, r2: float = 0.75
) -> OracleManifold:
    """Flat lattice with metric c^2 * identity.

    A constant conformal factor leaves geodesics straight and every
    chart-norm quantity equal to the unscaled case — the reference constants
    are identical to ``flat_oracle``'s, which is the point of the fixture.
    """
    if c <= 0:
        raise SpecError("scale must be positive")
    return _lattice_oracle(
        d, r1, r2, metric_diag=repr(float(c) * float(c)), kind="scaled_flat"
    )


def _lattice_oracle(d: int, r1: float, r2: float, metric_diag: str, kind: str) -> OracleManifold:
    if d < 1:
        raise SpecError("dimension must be at least 1")
    if not (1.0 >= r1 > r2 > 0.5):
        raise RadiiOrderViolation(
            f"lattice radii need 1 >= r1 > r2 > 1/2, got r1={r1}, r2={r2}"
        )
    eps = min(0.03, 0.45 * (r1 - r2) / (r1 + r2))
    centers = [
        np.array(t, dtype=float)
        for t in itertools.product((-1.0, 0.0, 1.0), repeat=d)
    ]
    charts = [
        {
            "id": _lattice_id(c),
            "dim": d,
            "domain": {"shape": "box", "extent": float(r1), "norm": "sup"},
            "metric": {"rows": _identity_rows(d, metric_diag)},
            "r": float(r2),
            "R": float((r1 - r2) / 2.0),
            "epsilon": float(eps),
            "anchor": [float(v) for v in c],
        }
        for c in centers
    ]
    transitions = []
    for ca, cb in itertools.permutations(centers, 2):
        delta = cb - ca
        if np.max(np.abs(delta)) != 1.0:
            continue
        shift = ca - cb
        transitions.append(
            {
                "from": _lattice_id(ca),
                "to": _lattice_id(cb),
                "map": _shift_map_exprs(shift),
                "overlap": _box_overlap_expr(r1, shift),
            }
        )
    data = {
        "grid_resolution": 16,
        "charts": charts,
        "transitions": transitions,
        "weights": [{"name": "one", "expr": "1"}],
        "fields": [{"name": "zero", "exprs": ["0"] * d}],
    }
    gap = r1 - r2
    constants = {
        "exp_radius": gap,
        "norm_ratio": d ** -0.5,
        "inverse_radius": gap,
        "log_radius": (d ** -0.5) * gap,
        "exp_d1_bound": 1.0,
        "exp_d2_bound": 0.0,
        "log_d1_bound": 1.0,
        "log_d2_bound": 0.0,
    }

    def exp(_cid: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return x + y

    def log(_cid: str, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return z - x

    return OracleManifold(
        kind=kind,
        data=data,
        exp=exp,
        log=log,
        constants=constants,
        notes=(
            "Straight-line geodesics; inner-ball launch radius r1-r2; "
            "norm ratio 1/sqrt(d) between the sup box norm and the "
            "euclidean metric norm."
        ),
    )


# --- cylinder -------------------------------------------------------------------


def cylinder_oracle(length: float = 6.0, n_charts: int = 3) -> OracleManifold:
    """R x S^1 in covering coordinates with the flat product metric.

    Charts tile x with spacing 2 and the circle with n_charts equal shifts;
    every chart is a sup box of halfwidth 1.3, plateau 1.1, collar 0.15.
    Transition maps translate; theta legs wrap by one period where the
    shorter way around crosses the cut.  Weights are the polynomial family
    (global x)^k for k = 0..4.
    """
    if n_charts < 3:
        raise SpecError("the circle needs at least 3 charts")
    if length <= 0:
        raise SpecError("length must be positive")
    h, r, collar, eps = 1.3, 1.1, 0.15, 0.05
    m = max(2, int(round(length / 2.0)))
    x_centers = [2.0 * (j - (m - 1) / 2.0) for j in range(m)]
    step = 2.0 * math.pi / n_charts
    t_centers = [step * k for k in range(n_charts)]
    ids = {}
    charts = []
    for j, xc in enumerate(x_centers):
        for k, tc in enumerate(t_centers):
            cid = f"c{j}t{k}"
            ids[(j, k)] = cid
            charts.append(
                {
                    "id": cid,
                    "dim": 2,
                    "domain": {"shape": "box", "extent": h, "norm": "sup"},
                    "metric": {"rows": _identity_rows(2)},
                    "r": r,
                    "R": collar,
                    "epsilon": eps,
                    "anchor": [float(xc), float(tc)],
                }
            )
    transitions = []
    for (ja, ka), (jb, kb) in itertools.permutations(ids, 2):
        dx = x_centers[ja] - x_centers[jb]
        dt = math.remainder(t_centers[ka] - t_centers[kb], 2.0 * math.pi)
        if abs(dx) >= 2 * h or abs(dt) >= 2 * h:
            continue
        shift = np.array([dx, dt])
        transitions.append(
            {
                "from": ids[(ja, ka)],
                "to": ids[(jb, kb)],
                "map": _shift_map_exprs(shift),
                "overlap": _box_overlap_expr(h, shift),
            }
        )
    weights = []
    for k in range(5):
        table = {}
        for (j, _k), cid in ids.items():
            base = f"({x_centers[j]!r} + x1)"
            table[cid] = "1" if k == 0 else (base if k == 1 else f"{base} ^ {k}")
        weights.append({"name": f"poly{k}", "by_chart": table})
    data = {
        "grid_resolution": 16,
        "charts": charts,
        "transitions": transitions,
        "weights": weights,
        "fields": [{"name": "zero", "exprs": ["0", "0"]}],
    }
    gap = h - r
    constants = {
        "exp_radius": gap,
        "norm_ratio": 2 ** -0.5,
        "inverse_radius": gap,
        "log_radius": (2 ** -0.5) * gap,
        "exp_d1_bound": 1.0,
        "exp_d2_bound": 0.0,
        "log_d1_bound": 1.0,
        "log_d2_bound": 0.0,
    }

    def exp(_cid: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return x + y

    def log(_cid: str, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return z - x

    return OracleManifold(
        kind="cylinder",
        data=data,
        exp=exp,
        log=log,
        constants=constants,
        notes=(
            "Covering-coordinate geodesics are straight; interior charts "
            "have 8 overlap neighbors; points near the outer x edges of the "
            "extremal charts lie in exactly one chart."
        ),
    )


# --- hyperbolic half-plane strip -------------------------------------------------


_HP_ANCHOR = np.array([0.0, 1.75])


def half_plane_oracle() -> OracleManifold:
    """One chart of the upper half-plane, metric (dx^2 + dy^2) / y^2.

    Local coordinates are a box around the anchor (0, 1.75), keeping the
    strip 0.3 < y < 3.2 away from the singular boundary.  Geodesics are
    vertical rays and half-circles centered on y = 0; ``exp`` and ``log``
    are evaluated from those closed forms, in local coordinates.
    """
    d = 2
    metric = "1 / ((x2 + 1.75) ^ 2)"
    charts = [
        {
            "id": "h0",
            "dim": d,
            "domain": {
                "shape": "box",
                "extent": [2.0, 1.45],
                "norm": "euclidean",
            },
            "metric": {"rows": [[metric, "0"], ["0", metric]]},
            "r": 0.25,
            "R": 0.1,
            "epsilon": 0.05,
            "anchor": [float(v) for v in _HP_ANCHOR],
        }
    ]
    data = {
        "grid_resolution": 16,
        "charts": charts,
        "transitions": [],
        "weights": [{"name": "one", "expr": "1"}],
        "fields": [{"name": "zero", "exprs": ["0", "0"]}],
    }

    def exp(_cid: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return _hp_exp_global(x + _HP_ANCHOR, y) - _HP_ANCHOR

    def log(_cid: str, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return _hp_log_global(x + _HP_ANCHOR, z + _HP_ANCHOR)

    return OracleManifold(
        kind="half_plane_strip",
        data=data,
        exp=exp,
        log=log,
        constants={},
        notes=(
            "Curved reference: derivative bounds depend on the probed "
            "region; from (0, 1) a unit vertical displacement lands at "
            "(0, e) in global coordinates."
        ),
    )


def _hp_exp_global(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hyperbolic exponential in global half-plane coordinates, batched."""
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    p, v = np.broadcast_arrays(p, v)
    x0, y0 = p[..., 0], p[..., 1]
    xi, eta = v[..., 0], v[..., 1]
    w = np.hypot(xi, eta)
    vertical = np.abs(xi) <= 1e-14 * np.maximum(w, 1.0)
    out = np.empty_like(p, dtype=float)
    # vertical ray: y scales exponentially in arclength
    out[..., 0] = x0
    out[..., 1] = y0 * np.exp(eta / y0)
    if np.all(vertical):
        return out
    with np.errstate(all="ignore"):
        xin = np.where(vertical, 1.0, xi)  # placeholder where unused
        s = w / y0
        u0 = np.arctanh(np.where(vertical, 0.0, -eta / np.maximum(w, 1e-300)))
        radius = y0 * w / np.abs(xin)
        xc = x0 + y0 * eta / xin
        sign = -np.sign(xin)
        u1 = u0 + s
        gx = xc - sign * radius * np.tanh(u1)
        gy = radius / np.cosh(u1)
    out[..., 0] = np.where(vertical, out[..., 0], gx)
    out[..., 1] = np.where(vertical, out[..., 1], gy)
    return out


def _hp_log_global(p: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Hyperbolic logarithm in global half-plane coordinates, batched."""
    p = np.asarray(p, float)
    z = np.asarray(z, float)
    p, z = np.broadcast_arrays(p, z)
    x0, y0 = p[..., 0], p[..., 1]
    z1, z2 = z[..., 0], z[..., 1]
    scale = np.maximum(np.abs(x0), np.abs(z1)) + np.maximum(y0, z2)
    vertical = np.abs(z1 - x0) <= 1e-14 * scale
    out = np.empty_like(p, dtype=float)
    out[..., 0] = 0.0
    out[..., 1] = y0 * np.log(z2 / y0)
    if np.all(vertical):
        return out
    with np.errstate(all="ignore"):
        dx = np.where(vertical, 1.0, z1 - x0)
        xc = (z1 * z1 + z2 * z2 - x0 * x0 - y0 * y0) / (2.0 * dx)
        radius = np.hypot(x0 - xc, y0)
        up = np.arctanh(np.clip((xc - x0) / radius, -1 + 1e-16, 1 - 1e-16))
        uz = np.arctanh(np.clip((xc - z1) / radius, -1 + 1e-16, 1 - 1e-16))
        s = uz - up
        gxi = -s * y0 / np.cosh(up)
        geta = -s * y0 * np.tanh(up)
    out[..., 0] = np.where(vertical, out[..., 0], gxi)
    out[..., 1] = np.where(vertical, out[..., 1], geta)
    return out


# --- global-coordinate field building --------------------------------------------


def localize_global_exprs(
    spec: ManifoldSpec, exprs: list[str]
) -> dict[str, tuple[Expr, ...]]:
    """Per-chart expression tables for components written in global coordinates.

    Each variable x_i is replaced by (anchor_i + x_i) per chart, so one
    global formula yields a consistent localized family on translation
    atlases (the lattice and cylinder fixtures).
    """
    parsed = [parse_expr(s) for s in exprs]
    table = {}
    for c in spec.charts:
        anchor = c.anchor if c.anchor is not None else np.zeros(spec.dim)
        table[c.id] = tuple(_shift_expr(e, anchor) for e in parsed)
    return table


def _shift_expr(node: Expr, anchor: np.ndarray) -> Expr:
    if isinstance(node, Var):
        idx = int(node.name[1:]) - 1
        off = float(anchor[idx])
        if off == 0.0:
            return node
        return BinOp("+", Num(off), node)
    if isinstance(node, Neg):
        return Neg(_shift_expr(node.operand, anchor))
    if isinstance(node, BinOp):
        return BinOp(node.op, _shift_expr(node.left, anchor), _shift_expr(node.right, anchor))
    if isinstance(node, Call):
        return Call(node.func, tuple(_shift_expr(a, anchor) for a in node.args))
    return node  # Num, Const


# --- registry and emission -------------------------------------------------------


def oracle_by_name(kind: str, **params) -> OracleManifold:
    """Build an oracle from its registry name and keyword parameters."""
    registry = {
        "flat": flat_oracle,
        "scaled_flat": scaled_flat_oracle,
        "cylinder": cylinder_oracle,
        "half_plane": half_plane_oracle,
    }
    try:
        builder = registry[kind]
    except KeyError:
        raise SpecError(
            f"unknown oracle {kind!r}; expected one of {sorted(registry)}"
        ) from None
    return builder(**params)


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        out = repr(float(v))
        return out
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    if isinstance(v, dict):
        inner = ", ".join(f'"{k}" = {_toml_scalar(x)}' for k, x in v.items())
        return "{" + inner + "}"
    raise SpecError(f"cannot serialize {type(v).__name__} to TOML")


def emit_toml(data: dict) -> str:
    """Serialize a loader-shaped description dict to a TOML document."""
    lines = [f"grid_resolution = {int(data.get('grid_resolution', 16))}", ""]
    for chart in data.get("charts", []):
        lines.append("[[charts]]")
        for key in ("id", "dim", "r", "R", "epsilon", "anchor", "domain", "metric"):
            if key in chart:
                lines.append(f"{key} = {_toml_scalar(chart[key])}")
        lines.append("")
    for t in data.get("transitions", []):
        lines.append("[[transitions]]")
        lines.append(f'from = {_toml_scalar(t["from"])}')
        lines.append(f'to = {_toml_scalar(t["to"])}')
        lines.append(f'map = {_toml_scalar(t["map"])}')
        lines.append(f'overlap = {_toml_scalar(t["overlap"])}')
        lines.append("")
    for w in data.get("weights", []):
        lines.append("[[weights]]")
        lines.append(f'name = {_toml_scalar(w["name"])}')
        if "expr" in w:
            lines.append(f'expr = {_toml_scalar(w["expr"])}')
        else:
            lines.append(f'by_chart = {_toml_scalar(w["by_chart"])}')
        lines.append("")
    for f in data.get("fields", []):
        lines.append("[[fields]]")
        lines.append(f'name = {_toml_scalar(f["name"])}')
        if "exprs" in f:
            lines.append(f'exprs = {_toml_scalar(f["exprs"])}')
        else:
            lines.append(f'by_chart = {_toml_scalar(f["by_chart"])}')
        lines.append("")
    return "\n".join(lines)
