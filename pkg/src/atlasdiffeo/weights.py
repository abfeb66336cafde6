"""Weight construction: adjusted plateaus, bound families, saturation.

Weights are localized like fields: one nonnegative function per chart,
evaluated in that chart's coordinates, with cross-chart contributions folded
in through declared transitions by pointwise maximum.  Three constructions
live here:

* ``construct_adjusted`` builds plateau weights — per-chart bumps that hold
  a prescribed height over the inner ball and fall to zero across the
  padding collar with a cubic ramp — whose maximum is a weight adjusted to
  given per-chart radius targets.
* ``estimate_bound_families`` measures derivative bounds of the exponential
  displacement, the logarithm displacement, and the transition
  differentials; ``ext_mult`` multiplies a weight through such a family and
  ``saturate`` iterates that to a family of weights closed under the three
  operations (up to a level cap and structural deduplication).
* ``pair_omega_exp_log`` derives the matched weight pair for the forward
  and inverse operations at a contraction level sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .certs import Certificate
from .engine import ConstantsReport, MetricField, _exp_core, _log_core
from .errors import (
    ConstantsIncompatible,
    CoverViolation,
    ExplosionGuard,
    InvariantViolation,
    SpecError,
)
from .expr import (
    Expr,
    constant_value,
    evaluate_at_points,
    format_expr,
    is_constant,
    parse_expr,
)
from .norms import op_norm, supball_op_norm, unit_directions, vector_norm
from .spec import Chart, ManifoldSpec, _cover_fractions

__all__ = [
    "ExprWeight",
    "AdjustedWeight",
    "GeneratedWeight",
    "ScaledWeight",
    "Weight",
    "weight_from_spec",
    "construct_adjusted",
    "BoundFamily",
    "estimate_bound_families",
    "ext_mult",
    "SaturationResult",
    "saturate",
    "PairedOmega",
    "pair_omega_exp_log",
]


# --- weight representations --------------------------------------------------


@dataclass
class ExprWeight:
    """A weight given by one formula per chart."""

    table: dict[str, Expr]
    name: str = "weight"

    @classmethod
    def constant(cls, spec: ManifoldSpec, value: float, name: Optional[str] = None) -> "ExprWeight":
        e = parse_expr(repr(float(value)))
        return cls(
            table={c.id: e for c in spec.charts},
            name=name if name is not None else repr(float(value)),
        )

    def eval(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        return np.abs(evaluate_at_points(self.table[chart_id], pts))

    def constant_value(self) -> Optional[float]:
        return _base_constant(self)

    def structure_key(self) -> tuple:
        c = _base_constant(self)
        if c is not None:
            return ("const", float(c).hex())
        return ("expr",) + tuple(
            (cid, format_expr(e)) for cid, e in sorted(self.table.items())
        )


def _plateau_profile(chart: Chart, pts: np.ndarray) -> np.ndarray:
    """1 on the inner ball, cubic ramp to 0 across the padding collar."""
    s = vector_norm(np.asarray(pts, dtype=float), chart.norm)
    u = np.clip((chart.r + chart.R - s) / chart.R, 0.0, 1.0)
    ramp = u * u * (3.0 - 2.0 * u)
    return np.where(s <= chart.r, 1.0, ramp)


@dataclass
class AdjustedWeight:
    """Pointwise maximum of per-chart plateau bumps.

    Each chart carries a bump of height ``plateaus[id]`` over its inner ball
    decaying through the padding collar; evaluating on a chart folds in the
    bumps of transition neighbors.  On the inner ball the value is exactly
    the plateau height (neighbor bumps never exceed their own plateaus, and
    the maximum with the local plateau is taken pointwise).
    """

    spec: ManifoldSpec
    plateaus: dict[str, float]
    name: str = "omega"

    def eval(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        chart = self.spec.chart(chart_id)
        out = self.plateaus[chart_id] * _plateau_profile(chart, pts)
        for t in self.spec.transitions_from(chart_id):
            mask = t.overlap_mask(pts)
            if not np.any(mask):
                continue
            q = t.apply(pts[mask])
            other = self.plateaus[t.to] * _plateau_profile(self.spec.chart(t.to), q)
            piece = np.zeros(pts.shape[:-1])
            piece[mask] = other
            out = np.maximum(out, piece)
        return out

    def structure_key(self) -> tuple:
        return ("adjusted",) + tuple(
            (cid, float(m).hex()) for cid, m in sorted(self.plateaus.items())
        )


@dataclass
class GeneratedWeight:
    """Pointwise |base| times per-chart constants, maxed over covering charts.

    g(x) = |base(x)| * max{ coeffs[kappa] : x in the open domain of kappa },
    the maximum running over the point's own chart and every declared
    transition target that contains it.
    """

    spec: ManifoldSpec
    base: Union[float, "Weight"]
    coeffs: dict[str, float]
    name: str = "generated"

    def eval(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        chart = self.spec.chart(chart_id)
        coeff = np.where(chart.domain.contains(pts), self.coeffs[chart_id], 0.0)
        for t in self.spec.transitions_from(chart_id):
            mask = t.overlap_mask(pts)
            if not np.any(mask):
                continue
            q = t.apply(pts[mask])
            inside = self.spec.chart(t.to).domain.contains(q)
            piece = np.zeros(pts.shape[:-1])
            piece[np.flatnonzero(mask)[inside]] = self.coeffs[t.to]
            coeff = np.maximum(coeff, piece)
        return coeff * _base_values(self.base, chart_id, pts)

    def constant_value(self) -> Optional[float]:
        """The single global constant this weight equals, when detectable.

        Requires a globally constant base and equal coefficients on every
        chart; the cross-chart maximum is then that constant everywhere.
        """
        base_c = _base_constant(self.base)
        if base_c is None:
            return None
        vals = {float(v) for v in self.coeffs.values()}
        if len(vals) == 1:
            return base_c * vals.pop()
        return None

    def structure_key(self) -> tuple:
        c = self.constant_value()
        if c is not None:
            return ("const", float(c).hex())
        return ("ext-mult", _base_key(self.base)) + tuple(
            (cid, float(v).hex()) for cid, v in sorted(self.coeffs.items())
        )


def _base_values(base, chart_id: str, pts: np.ndarray) -> np.ndarray:
    if isinstance(base, (int, float)):
        return np.full(np.asarray(pts).shape[:-1], abs(float(base)))
    return np.abs(base.eval(chart_id, pts))


def _base_constant(base) -> Optional[float]:
    if isinstance(base, (int, float)):
        return abs(float(base))
    if isinstance(base, ExprWeight):
        vals = set()
        for e in base.table.values():
            if not is_constant(e):
                return None
            vals.add(abs(constant_value(e)))
        return vals.pop() if len(vals) == 1 else None
    if isinstance(base, GeneratedWeight):
        return base.constant_value()
    if isinstance(base, ScaledWeight):
        inner = _base_constant(base.base)
        return None if inner is None else abs(base.factor) * inner
    return None


def _base_key(base) -> tuple:
    if isinstance(base, (int, float)):
        return ("const", float(abs(base)).hex())
    return base.structure_key()


@dataclass
class ScaledWeight:
    base: Union[ExprWeight, AdjustedWeight, GeneratedWeight, "ScaledWeight"]
    factor: float
    name: str = "scaled"

    def eval(self, chart_id: str, pts: np.ndarray) -> np.ndarray:
        return self.factor * self.base.eval(chart_id, pts)

    def constant_value(self) -> Optional[float]:
        return _base_constant(self)

    def structure_key(self) -> tuple:
        return ("scaled", float(self.factor).hex()) + self.base.structure_key()


Weight = Union[ExprWeight, AdjustedWeight, GeneratedWeight, ScaledWeight]


def weight_from_spec(spec: ManifoldSpec, name: str) -> ExprWeight:
    try:
        table = spec.weights[name]
    except KeyError:
        raise SpecError(f"manifold declares no weight named {name!r}") from None
    return ExprWeight(table=dict(table), name=name)


# --- adjusted weights --------------------------------------------------------


def construct_adjusted(
    spec: ManifoldSpec,
    targets: Union[float, dict[str, float]],
    name: str = "omega",
    n: Optional[int] = None,
) -> AdjustedWeight:
    """Weight adjusted to per-chart radius targets delta_kappa.

    Plateau heights are max(1/delta, 1); the resulting weight equals the
    height exactly on each inner ball.  Raises CoverViolation when the inner
    regions fail to cover the sampled manifold (the construction's standing
    hypothesis).
    """
    n = n or spec.grid_resolution
    if isinstance(targets, (int, float)):
        targets = {c.id: float(targets) for c in spec.charts}
    missing = {c.id for c in spec.charts} - set(targets)
    if missing:
        raise SpecError(f"no radius target for charts {sorted(missing)}")
    for c in spec.charts:
        frac, _ = _cover_fractions(spec, c, n)
        if frac < 1.0:
            raise CoverViolation(
                f"inner regions cover only {frac:.4f} of chart {c.id!r}'s "
                f"sampled inner ball"
            )
    plateaus = {}
    for cid, delta in targets.items():
        if delta <= 0:
            raise SpecError(f"radius target for chart {cid!r} must be positive")
        plateaus[cid] = max(1.0 / delta, 1.0)
    return AdjustedWeight(spec=spec, plateaus=plateaus, name=name)


# --- bound families ----------------------------------------------------------

FamilyKey = Union[str, tuple[str, str]]  # chart id, or (from, to) pair


@dataclass
class BoundFamily:
    """Derivative bounds indexed by (chart or transition pair, order)."""

    kind: str  # "exp-superposition" | "log-superposition" | "transition-differential"
    entries: dict[tuple[FamilyKey, int], float]
    resolution: dict = field(default_factory=dict)

    def bound(self, chart_id: str, order: Optional[int] = None) -> float:
        vals = []
        for (key, ell), v in self.entries.items():
            if order is not None and ell != order:
                continue
            if key == chart_id or (isinstance(key, tuple) and chart_id in key):
                vals.append(v)
        if not vals:
            if self.kind == "transition-differential":
                return 0.0  # a chart with no overlaps transfers nothing
            raise SpecError(
                f"bound family {self.kind!r} has no entry for chart {chart_id!r}"
                + (f" at order {order}" if order is not None else "")
            )
        return max(vals)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "entries": {
                (f"{k[0]}|{k[1]}" if isinstance(k, tuple) else k) + f"#{ell}": v
                for (k, ell), v in sorted(
                    self.entries.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])
                )
            },
            "resolution": self.resolution,
        }


def _joint_steps(chart: Chart, ell: int) -> list[float]:
    scale = chart.extent_scale()
    return [1e-3 * scale ** (1.0 / 2**k) for k in range(1, ell + 1)]


def _joint_nested(fn, X: np.ndarray, Y: np.ndarray, ell: int, steps: Sequence[float]) -> np.ndarray:
    """Nested central differences of fn(x, y) in the joint 2d coordinates."""
    if ell == 0:
        return fn(X, Y)
    h = steps[ell - 1]
    d = X.shape[-1]
    cols = []
    for q in range(2 * d):
        ex = np.zeros(d)
        ey = np.zeros(d)
        if q < d:
            ex[q] = h
        else:
            ey[q - d] = h
        cols.append(
            (
                _joint_nested(fn, X + ex, Y + ey, ell - 1, steps)
                - _joint_nested(fn, X - ex, Y - ey, ell - 1, steps)
            )
            / (2 * h)
        )
    return np.stack(cols, axis=-1)


def estimate_bound_families(
    spec: ManifoldSpec,
    constants: ConstantsReport,
    delta_exp: Optional[Union[float, dict[str, float]]] = None,
    delta_log: Optional[Union[float, dict[str, float]]] = None,
    max_order: int = 3,
    n: Optional[int] = None,
) -> tuple[BoundFamily, BoundFamily, BoundFamily]:
    """(exp-superposition, log-superposition, transition-differential) bounds.

    The first family bounds derivatives (orders 1..max_order, in the joint
    base-and-displacement coordinates with the max norm) of the exponential
    displacement exp(x, y) - x over each chart's inner region with |y| up to
    delta_exp; the second does the same for the logarithm displacement
    log(x, x + y) up to delta_log; the third bounds derivatives (orders
    0..max_order-1) of each transition's differential over the sampled
    overlap.  Displacement caps default to the per-chart tube radii recorded
    in the constants report.
    """
    n = n or spec.grid_resolution
    thin = max(2, n // 4)
    fam1: dict[tuple[FamilyKey, int], float] = {}
    fam2: dict[tuple[FamilyKey, int], float] = {}
    fam3: dict[tuple[FamilyKey, int], float] = {}
    for c in spec.charts:
        mf = MetricField(c)
        cc = constants.chart(c.id)
        dE = _per_chart(delta_exp, c.id) if delta_exp is not None else cc.delta_exp
        dL = _per_chart(delta_log, c.id) if delta_log is not None else cc.delta_log
        base, _ = c.region_grid("inner", thin, style="closed")
        base = base[vector_norm(base, c.norm) <= c.r + 1e-12]
        dirs = unit_directions(c.dim, c.norm)
        ladder = np.arange(1, 4) / 3.0

        def tube(delta: float) -> tuple[np.ndarray, np.ndarray]:
            ys = (delta * ladder[:, None, None] * dirs[None, :, :]).reshape(-1, c.dim)
            ys = np.concatenate([np.zeros((1, c.dim)), ys], axis=0)
            X = np.repeat(base, len(ys), axis=0)
            Y = np.tile(ys, (len(base), 1))
            return X, Y

        def exp_minus(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
            return _exp_core(mf, X, Y) - X

        def log_plus(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
            return _log_core(mf, X, X + Y)[0]

        XE, YE = tube(dE)
        XL, YL = tube(dL)
        for ell in range(1, max_order + 1):
            steps = _joint_steps(c, ell)
            TE = _joint_nested(exp_minus, XE, YE, ell, steps)
            fam1[(c.id, ell)] = float(np.max(supball_op_norm(TE, c.norm, ell)))
            TL = _joint_nested(log_plus, XL, YL, ell, steps)
            fam2[(c.id, ell)] = float(np.max(supball_op_norm(TL, c.norm, ell)))
    for t in spec.transitions:
        src = spec.chart(t.frm)
        pts, _ = src.region_grid("domain", n, style="margin")
        mask = t.overlap_mask(pts)
        p = pts[mask]
        if len(p) == 0:
            continue
        h = 1e-5 * src.extent_scale()
        steps = _joint_steps(src, max_order)

        def djac(q: np.ndarray, level: int) -> np.ndarray:
            if level == 0:
                return t.jacobian(q, h)
            hh = steps[level - 1]
            cols = []
            for j in range(src.dim):
                e = np.zeros(src.dim)
                e[j] = hh
                cols.append((djac(q + e, level - 1) - djac(q - e, level - 1)) / (2 * hh))
            return np.stack(cols, axis=-1)

        for ell in range(0, max_order):
            T = djac(p, ell)
            fam3[((t.frm, t.to), ell)] = float(np.max(op_norm(T, src.norm, ell + 1)))
    res = {"points_per_axis": n, "thinned_base": thin, "ladder": 3}
    return (
        BoundFamily(kind="exp-superposition", entries=fam1, resolution=res),
        BoundFamily(kind="log-superposition", entries=fam2, resolution=res),
        BoundFamily(kind="transition-differential", entries=fam3, resolution=res),
    )


def _per_chart(val: Union[float, dict[str, float], None], cid: str) -> float:
    if isinstance(val, dict):
        return float(val[cid])
    return float(val)


# --- extension by multiplication and saturation --------------------------------


def ext_mult(
    spec: ManifoldSpec,
    f: Union[float, Weight],
    family: BoundFamily,
    order: Optional[int] = None,
    n: Optional[int] = None,
) -> Union[GeneratedWeight, list[GeneratedWeight]]:
    """Weights g_i(x) = |f(x)| * max over charts containing x of B(chart, i).

    One generated weight per derivative order present in the family (or just
    the requested ``order``).  Dominance B(kappa, i)*|f(p)| <= g_i(p) is
    exact at every point of chart kappa — the maximum includes the chart's
    own coefficient — and is asserted on sampled grids before returning.
    """
    n = n or spec.grid_resolution
    orders = [order] if order is not None else sorted(
        {ell for (_, ell) in family.entries}
    )
    out = []
    for ell in orders:
        coeffs = {c.id: family.bound(c.id, ell) for c in spec.charts}
        g = GeneratedWeight(
            spec=spec,
            base=f,
            coeffs=coeffs,
            name=f"mult[{family.kind}#{ell}]({getattr(f, 'name', 'weight')})",
        )
        check_n = min(n, 8)
        for c in spec.charts:
            pts, _ = c.region_grid("domain", check_n, style="margin")
            lhs = coeffs[c.id] * _base_values(f, c.id, pts)
            gap = float(np.max(lhs - g.eval(c.id, pts)))
            if gap > 1e-12:
                raise InvariantViolation(
                    [
                        f"generated weight fails dominance on chart {c.id!r} "
                        f"at order {ell} by {gap:.3g}"
                    ]
                )
        out.append(g)
    return out[0] if order is not None else out


@dataclass
class SaturationResult:
    weights: list
    levels_used: int
    stabilized: bool
    new_per_level: list
    local_bounds: dict = field(default_factory=dict)

    def values(self) -> list:
        return list(self.weights)

    def count(self) -> int:
        return len(self.weights)


def saturate(
    spec: ManifoldSpec,
    seeds: Sequence[Weight],
    families: Sequence[BoundFamily],
    levels: int = 3,
    n: Optional[int] = None,
    cap: int = 10_000,
) -> SaturationResult:
    """Close a weight family under multiplication by the bound families.

    Each level multiplies every frontier weight by every family and order;
    weights are deduplicated by structural key — the max-tree hashed as
    (chart id, coefficient) tuples, with globally constant weights folded to
    their value.  Stops early when a level adds nothing; raises
    ExplosionGuard beyond ``cap`` weights.  ``local_bounds`` reports, per
    generated weight, the smallest sampled K with |g| <= K*|f| for some seed
    f — finite by construction since K is a product of family entries.
    """
    if levels < 0:
        raise SpecError("levels must be non-negative")
    known: dict[tuple, Weight] = {}
    order: list = []
    for w in seeds:
        k = w.structure_key()
        if k not in known:
            known[k] = w
            order.append(w)
    seed_list = list(order)
    frontier = list(order)
    new_per_level = []
    used = 0
    stabilized = False
    for level in range(1, levels + 1):
        used = level
        fresh: list = []
        for f in frontier:
            for fam in families:
                for g in ext_mult(spec, f, fam, n=n):
                    k = g.structure_key()
                    if k not in known:
                        known[k] = g
                        order.append(g)
                        fresh.append(g)
                    if len(known) > cap:
                        raise ExplosionGuard(count=len(known), cap=cap)
        new_per_level.append(len(fresh))
        if not fresh:
            stabilized = True
            break
        frontier = fresh
    local_bounds = _local_bound_report(spec, seed_list, order[len(seed_list):], n)
    return SaturationResult(
        weights=order,
        levels_used=used,
        stabilized=stabilized,
        new_per_level=new_per_level,
        local_bounds=local_bounds,
    )


def _local_bound_report(
    spec: ManifoldSpec,
    seeds: Sequence[Weight],
    generated: Sequence[Weight],
    n: Optional[int],
) -> dict:
    """Sampled K per generated weight with |g| <= K * max over seeds |f|."""
    check_n = min(n or spec.grid_resolution, 8)
    grids = {}
    seed_floor = {}
    for c in spec.charts:
        pts, _ = c.region_grid("domain", check_n, style="margin")
        grids[c.id] = pts
        best = np.zeros(len(pts))
        for f in seeds:
            best = np.maximum(best, _base_values(f, c.id, pts))
        seed_floor[c.id] = best
    report = {}
    for idx, g in enumerate(generated):
        worst = 0.0
        for c in spec.charts:
            denom = seed_floor[c.id]
            vals = g.eval(c.id, grids[c.id])
            usable = denom > 1e-300
            if np.any(usable):
                worst = max(worst, float(np.max(vals[usable] / denom[usable])))
        report[f"{idx}:{getattr(g, 'name', 'weight')}"] = worst
    return report


# --- matched pair ------------------------------------------------------------


@dataclass
class PairedOmega:
    omega_exp: AdjustedWeight
    omega_log: ScaledWeight
    sigma: float
    targets_exp: dict[str, float]
    certificate: Certificate


def pair_omega_exp_log(
    spec: ManifoldSpec,
    constants: ConstantsReport,
    sigma: Optional[float] = None,
    deltas: Union[float, dict[str, float], None] = None,
    n: Optional[int] = None,
) -> PairedOmega:
    """Matched weights for the forward and inverse maps at level sigma.

    Requires per-chart radius targets delta strictly inside the certified
    window (0, inverse_radius * norm_ratio); the forward weight is adjusted
    to ((1-sigma)^2/(1+sigma)) * delta with plateau at least
    (1+sigma)/(1-sigma), and the inverse weight is its (1-sigma)/(1+sigma)
    multiple — adjusted to (1-sigma) * delta by construction.  Raises
    ConstantsIncompatible when a target leaves the window or when the
    measured derivative bounds break a * aL <= (1+sigma)/(1-sigma).
    """
    sigma = constants.sigma if sigma is None else sigma
    if deltas is None:
        deltas = {
            cid: 0.8 * cc.inverse_radius * cc.norm_ratio
            for cid, cc in constants.charts.items()
        }
    if isinstance(deltas, (int, float)):
        deltas = {c.id: float(deltas) for c in spec.charts}
    ratio = (1.0 + sigma) / (1.0 - sigma)
    cert = Certificate(kind="paired-weights")
    targets = {}
    plateaus = {}
    for c in spec.charts:
        cc = constants.chart(c.id)
        window = cc.inverse_radius * cc.norm_ratio
        delta = deltas[c.id]
        if not (0.0 < delta < window):
            raise ConstantsIncompatible(
                f"chart {c.id!r}: target {delta:.6g} outside the certified "
                f"window (0, {window:.6g})"
            )
        prod = cc.exp_d1_bound * cc.log_d1_bound
        if prod > ratio * (1.0 + 1e-6):
            raise ConstantsIncompatible(
                f"chart {c.id!r}: derivative bounds multiply to {prod:.6g} > "
                f"(1+sigma)/(1-sigma) = {ratio:.6g}"
            )
        tE = ((1.0 - sigma) ** 2 / (1.0 + sigma)) * delta
        targets[c.id] = tE
        plateaus[c.id] = max(1.0 / tE, ratio, 1.0)
        cert.add(
            f"window:{c.id}",
            True,
            window - delta,
            delta=delta,
            window=window,
            target_exp=tE,
        )
        cert.add(f"bound-product:{c.id}", True, ratio - prod, product=prod)
    omega_exp = AdjustedWeight(spec=spec, plateaus=plateaus, name="omega-exp")
    back = (1.0 - sigma) / (1.0 + sigma)
    omega_log = ScaledWeight(base=omega_exp, factor=back, name="omega-log")
    # the inverse weight must be adjusted to (1 - sigma) * delta: plateau
    # times the back factor must reach 1/((1 - sigma) * delta)
    n = n or spec.grid_resolution
    for c in spec.charts:
        needed = 1.0 / ((1.0 - sigma) * deltas[c.id])
        have = plateaus[c.id] * back
        cert.add(
            f"inverse-adjusted:{c.id}",
            have >= needed - 1e-12,
            have - needed,
            plateau=have,
            needed=needed,
        )
        prod = constants.chart(c.id).exp_d1_bound * constants.chart(c.id).log_d1_bound
        cert.add(
            f"inverse-dominated:{c.id}",
            back <= 1.0 / prod + 1e-9,
            1.0 / prod + 1e-9 - back,
            factor=back,
            bound_product=prod,
        )
    return PairedOmega(
        omega_exp=omega_exp,
        omega_log=omega_log,
        sigma=sigma,
        targets_exp=targets,
        certificate=cert,
    )
