"""Geodesic engine: exponential and logarithm maps with quantitative bounds.

Everything here works in the local coordinates of one chart.  The
exponential map integrates the geodesic equation with a fixed-step RK4
scheme; the logarithm inverts it with a damped Newton iteration.  The
``estimate_*`` functions produce the quantitative constants (domain radii,
first/second derivative bounds, norm ratios) that the weight-construction
and diffeomorphism layers consume; they are sampled estimates over closed
tensor grids and direction ladders, and report the resolution used.

Charts whose metric entries are constant formulas get an exact fast path
(geodesics are straight lines; the integrator is bypassed inside the
estimators).  The public ``geodesic_exp`` always runs the integrator so its
output reflects the declared scheme.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .certs import Certificate
from .errors import (
    DegenerateRegion,
    DeltaTooLarge,
    LeftChartDomain,
    NoConvergence,
    OutsideInjectivityRadius,
    SigmaOutOfRange,
    SingularDifferential,
)
from .expr import Expr, constant_value, evaluate_at_points, is_constant, parse_expr
from .norms import (
    matrix_op_norm,
    sign_patterns,
    supball_op_norm,
    unit_directions,
    vector_norm,
)
from .spec import Chart, ManifoldSpec, region_radius

__all__ = [
    "MetricField",
    "ExpEvaluation",
    "LogEvaluation",
    "geodesic_exp",
    "riemannian_log",
    "estimate_grenz_exp",
    "estimate_quot_norm",
    "estimate_rad_exp_fib_inv",
    "estimate_first_second_exp_bounds",
    "estimate_log_constants",
    "LogConstants",
    "ChartConstants",
    "ConstantsReport",
    "compute_constants",
    "QiftProblem",
    "certify_qift",
]

RK4_STEPS = 64
_CHUNK = 200_000  # max batch rows pushed through the integrator at once


class MetricField:
    """Metric matrix, its inverse, and Christoffel symbols on one chart.

    Derivatives of the metric are central differences with a step of
    ``1e-4`` times the per-axis domain extent.  When every metric entry is a
    constant formula the Christoffel symbols are identically zero and are
    returned as exact zeros.
    """

    def __init__(self, chart: Chart, fd_scale: float = 1e-4):
        self.chart = chart
        self.dim = chart.dim
        self._steps = fd_scale * chart.domain.halfwidths()
        self.is_constant = all(
            is_constant(e) for row in chart.metric for e in row
        )
        if self.is_constant:
            self._G0 = np.array(
                [[constant_value(e) for e in row] for row in chart.metric]
            )
            self._Ginv0 = np.linalg.inv(self._G0)

    def metric(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        if self.is_constant:
            return np.broadcast_to(self._G0, pts.shape[:-1] + (d, d)).copy()
        G = np.empty(pts.shape[:-1] + (d, d))
        for i in range(d):
            for j in range(d):
                G[..., i, j] = evaluate_at_points(self.chart.metric[i][j], pts)
        return G

    def inverse(self, pts: np.ndarray) -> np.ndarray:
        if self.is_constant:
            pts = np.asarray(pts, dtype=float)
            d = self.dim
            return np.broadcast_to(self._Ginv0, pts.shape[:-1] + (d, d)).copy()
        return np.linalg.inv(self.metric(pts))

    def christoffel(self, pts: np.ndarray) -> np.ndarray:
        """Gamma^k_{ij}, indexed [..., k, i, j]."""
        pts = np.asarray(pts, dtype=float)
        d = self.dim
        if self.is_constant:
            return np.zeros(pts.shape[:-1] + (d, d, d))
        dG = np.empty(pts.shape[:-1] + (d, d, d))  # [..., l, i, j] = dg_ij/dx_l
        for l in range(d):
            h = self._steps[l]
            e = np.zeros(d)
            e[l] = h
            dG[..., l, :, :] = (self.metric(pts + e) - self.metric(pts - e)) / (2 * h)
        ginv = self.inverse(pts)
        # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
        term = (
            np.einsum("...ijl->...lij", dG)
            + np.einsum("...jil->...lij", dG)
            - dG
        )
        return 0.5 * np.einsum("...kl,...lij->...kij", ginv, term)

    def acceleration(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.is_constant:
            return np.zeros_like(v)
        gamma = self.christoffel(x)
        return -np.einsum("...kij,...i,...j->...k", gamma, v, v)


# --- integration -------------------------------------------------------------


def _rk4(
    mf: MetricField,
    x: np.ndarray,
    v: np.ndarray,
    steps: int,
    watch: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[np.ndarray, np.ndarray, Optional[float]]:
    """Integrate the geodesic equation on [0, 1].

    ``watch``, if given, maps positions to a boolean in-domain mask; the
    first time any point leaves, integration stops and the exit parameter is
    returned as the third element.
    """
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    h = 1.0 / steps
    if watch is not None and not np.all(watch(x)):
        return x, v, 0.0

    def deriv(xc: np.ndarray, vc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return vc, mf.acceleration(xc, vc)

    for k in range(steps):
        k1x, k1v = deriv(x, v)
        k2x, k2v = deriv(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = deriv(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = deriv(x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if watch is not None and not np.all(watch(x)):
            return x, v, (k + 1) * h
    return x, v, None


def _exp_core(
    mf: MetricField, x: np.ndarray, y: np.ndarray, steps: int = RK4_STEPS, fast: bool = True
) -> np.ndarray:
    """Endpoint of the geodesic from x with initial velocity y (batched)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if mf.is_constant and fast:
        return x + y
    shape = np.broadcast_shapes(x.shape, y.shape)
    xb = np.broadcast_to(x, shape).reshape(-1, shape[-1])
    yb = np.broadcast_to(y, shape).reshape(-1, shape[-1])
    out = np.empty_like(xb)
    for lo in range(0, len(xb), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        out[sl], _, _ = _rk4(mf, xb[sl], yb[sl], steps)
    return out.reshape(shape)


@dataclass
class ExpEvaluation:
    value: np.ndarray
    velocity: np.ndarray
    steps: int


@dataclass
class LogEvaluation:
    value: np.ndarray
    iterations: int
    residual: float


def geodesic_exp(
    chart: Chart,
    x: np.ndarray,
    y: np.ndarray,
    metric: Optional[MetricField] = None,
    steps: int = RK4_STEPS,
) -> ExpEvaluation:
    """Exponential map at x applied to y, staying inside the chart domain.

    Raises LeftChartDomain with the exit parameter if any integration node
    falls outside the (open) domain.  A zero displacement returns x itself
    without integrating.
    """
    mf = metric or MetricField(chart)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        return ExpEvaluation(value=x.copy(), velocity=y.copy(), steps=0)
    end, vel, t_exit = _rk4(mf, x, y, steps, watch=chart.domain.contains)
    if t_exit is not None:
        raise LeftChartDomain(t_exit)
    return ExpEvaluation(value=end, velocity=vel, steps=steps)


# --- jacobians ---------------------------------------------------------------


def _exp_jacobians(
    mf: MetricField, x: np.ndarray, y: np.ndarray, h: float, fast: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """(d exp/dx, d exp/dy) by central differences, each shaped (..., d, d)."""
    d = mf.dim
    cols1, cols2 = [], []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols1.append(
            (_exp_core(mf, x + e, y, fast=fast) - _exp_core(mf, x - e, y, fast=fast))
            / (2 * h)
        )
        cols2.append(
            (_exp_core(mf, x, y + e, fast=fast) - _exp_core(mf, x, y - e, fast=fast))
            / (2 * h)
        )
    return np.stack(cols1, axis=-1), np.stack(cols2, axis=-1)


def _exp_d2(mf: MetricField, x: np.ndarray, y: np.ndarray, h1: float, h2: float) -> np.ndarray:
    """Second derivative of exp in the joint variable (x, y).

    Returns a bilinear form indexed [..., i, p, q] with p, q over the 2d
    joint coordinates, computed as central differences (step h2) of the
    first-derivative matrix (step h1).
    """
    d = mf.dim

    def jac(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        J1, J2 = _exp_jacobians(mf, xs, ys, h1)
        return np.concatenate([J1, J2], axis=-1)  # (..., d, 2d)

    rows = []
    for q in range(2 * d):
        ex = np.zeros(d)
        ey = np.zeros(d)
        if q < d:
            ex[q] = h2
        else:
            ey[q - d] = h2
        rows.append((jac(x + ex, y + ey) - jac(x - ex, y - ey)) / (2 * h2))
    return np.stack(rows, axis=-1)  # (..., d, 2d, 2d) with [..., i, p, q]


def _bilinear_sup_norm(B: np.ndarray, out_kind: str) -> np.ndarray:
    """Bilinear form norm over max-norm unit balls (see supball_op_norm)."""
    return supball_op_norm(B, out_kind, 2)


# --- logarithm ---------------------------------------------------------------


def _log_core(
    mf: MetricField,
    x: np.ndarray,
    z: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 50,
    h: Optional[float] = None,
    fast: bool = True,
) -> tuple[np.ndarray, int, np.ndarray]:
    """Damped Newton solve of exp(x, y) = z, seeded with y = z - x (batched).

    Returns (y, iterations_used, residual_sup_per_point).  Does not raise;
    callers inspect the residual.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast_shapes(x.shape, z.shape)
    xb = np.broadcast_to(x, shape).reshape(-1, shape[-1]).copy()
    zb = np.broadcast_to(z, shape).reshape(-1, shape[-1]).copy()
    y = zb - xb
    h = h or 1e-4 * mf.chart.extent_scale()
    res = vector_norm(_exp_core(mf, xb, y, fast=fast) - zb, "sup")
    used = 0
    for it in range(max_iter):
        active = res > tol
        if not np.any(active):
            break
        used = it + 1
        xa, ya, za = xb[active], y[active], zb[active]
        Fa = _exp_core(mf, xa, ya, fast=fast) - za
        _, J2 = _exp_jacobians(mf, xa, ya, h, fast=fast)
        try:
            step = np.linalg.solve(J2, -Fa[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -(np.linalg.pinv(J2) @ Fa[..., None])[..., 0]
        ra = res[active]
        scale = np.ones(len(ya))
        for _ in range(8):  # halve until the residual actually drops
            trial = ya + scale[:, None] * step
            rt = vector_norm(_exp_core(mf, xa, trial, fast=fast) - za, "sup")
            good = rt < ra
            if np.all(good):
                break
            scale = np.where(good, scale, scale / 2.0)
        trial = ya + scale[:, None] * step
        y[active] = trial
        res[active] = vector_norm(_exp_core(mf, xa, trial, fast=fast) - za, "sup")
    return y.reshape(shape), used, res.reshape(shape[:-1])


def riemannian_log(
    chart: Chart,
    x: np.ndarray,
    z: np.ndarray,
    metric: Optional[MetricField] = None,
    tol: float = 1e-9,
    max_iter: int = 50,
    radius: Optional[float] = None,
) -> LogEvaluation:
    """Inverse of the exponential: the y with exp(x, y) = z.

    Damped Newton from the straight-line seed z - x.  Raises NoConvergence
    when the residual stays above ``tol`` after ``max_iter`` iterations, and
    OutsideInjectivityRadius when a trust radius is supplied and the solution
    lands outside it.
    """
    mf = metric or MetricField(chart)
    y, iters, res = _log_core(mf, x, z, tol=tol, max_iter=max_iter)
    worst = float(np.max(res))
    if worst > tol:
        raise NoConvergence(iterations=max_iter, residual=worst)
    if radius is not None:
        sizes = vector_norm(y, chart.norm)
        if np.any(sizes > radius):
            raise OutsideInjectivityRadius(
                f"logarithm displacement {float(np.max(sizes)):.6g} exceeds "
                f"the trust radius {radius:.6g}"
            )
    return LogEvaluation(value=y, iterations=iters, residual=worst)


# --- region helpers ----------------------------------------------------------

RegionLike = Union[str, np.ndarray]


def _base_points(chart: Chart, region: RegionLike, n: int) -> np.ndarray:
    """Closed sample of a compact region (suprema run over closures)."""
    if isinstance(region, str):
        pts, _ = chart.region_grid(region, n, style="closed")
        if region != "domain":
            rho = region_radius(chart, region)
            pts = pts[vector_norm(pts, chart.norm) <= rho + 1e-12]
            if chart.norm == "euclidean":
                # the box grid misses the sphere's extreme points; add them
                shell = rho * unit_directions(chart.dim, "euclidean")
                pts = np.concatenate([pts, shell], axis=0)
    else:
        pts = np.asarray(region, dtype=float).reshape(-1, chart.dim)
    if len(pts) == 0:
        raise DegenerateRegion("region sample is empty")
    return pts


def _tube(
    chart: Chart, base: np.ndarray, delta: float, n_rad: int, include_zero: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) pairs with x in base and y on radial ladders up to ``delta``.

    Directions are the chart-norm unit directions (axes plus diagonals);
    ladders are the closed radii k/n_rad * delta.  Flattened for batching.
    """
    dirs = unit_directions(chart.dim, chart.norm)
    start = 0 if include_zero else 1
    radii = delta * np.arange(start, n_rad + 1) / n_rad
    ys = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, chart.dim)
    X = np.repeat(base, len(ys), axis=0)
    Y = np.tile(ys, (len(base), 1))
    return X, Y


# --- constants ---------------------------------------------------------------


def estimate_grenz_exp(
    chart: Chart,
    region: RegionLike = "inner",
    metric: Optional[MetricField] = None,
    n: int = 16,
) -> float:
    """Largest radius t such that exp stays inside the domain from ``region``.

    Geodesics are launched from a closed sample of the region along every
    chart-norm unit direction; the whole integration path must stay strictly
    inside the domain.  Bisection returns the conservative lower endpoint,
    to a sixteenth of a grid cell.
    """
    mf = metric or MetricField(chart)
    base = _base_points(chart, region, n)
    dirs = unit_directions(chart.dim, chart.norm)
    X = np.repeat(base, len(dirs), axis=0)
    U = np.tile(dirs, (len(base), 1))

    def ok(t: float) -> bool:
        if mf.is_constant:
            # straight segments in a convex domain: endpoints suffice
            return bool(np.all(chart.domain.contains(X + t * U)))
        for lo in range(0, len(X), _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            _, _, t_exit = _rk4(
                mf, X[sl], t * U[sl], RK4_STEPS, watch=chart.domain.contains
            )
            if t_exit is not None:
                return False
        return True

    hi = 2.0 * chart.domain.inradius()
    tol = chart.grid_cell("domain", n) / 16.0
    if ok(hi):
        return hi  # domain never exited at twice the inradius: flat torus etc.
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo <= tol:
        raise DegenerateRegion(
            "no positive geodesic radius fits inside the domain from this region"
        )
    return lo


def estimate_quot_norm(
    chart: Chart,
    region: RegionLike = "inner",
    metric: Optional[MetricField] = None,
    n: int = 16,
) -> float:
    """Ratio c/C of the extreme chart-norm-to-metric-norm ratios.

    c is the exact infimum and C a supremum bound of |v|_chart / |v|_g over
    the sampled region; the quotient lies in (0, 1] and equals 1 when the
    metric distorts all directions equally.
    """
    mf = metric or MetricField(chart)
    base = _base_points(chart, region, n)
    G = mf.metric(base)
    eigs = np.linalg.eigvalsh((G + np.swapaxes(G, -1, -2)) / 2.0)
    lo_eig = eigs[..., 0]
    hi_eig = eigs[..., -1]
    if chart.norm == "euclidean":
        c = float(np.min(1.0 / np.sqrt(hi_eig)))
        C = float(np.max(1.0 / np.sqrt(lo_eig)))
    else:
        signs = sign_patterns(chart.dim)
        quad = np.einsum("sp,...pq,sq->...s", signs, G, signs)
        c = float(np.min(1.0 / np.sqrt(np.max(quad, axis=-1))))
        C = float(np.max(1.0 / np.sqrt(lo_eig)))
    return c / C


def estimate_rad_exp_fib_inv(
    chart: Chart,
    region: RegionLike = "inner",
    sigma: float = 0.5,
    metric: Optional[MetricField] = None,
    n: int = 16,
    exp_radius: Optional[float] = None,
) -> float:
    """Largest radius below the exp radius keeping the fiber derivative
    within sigma of the identity.

    Bisection on r of sup |d2 exp(x, y) - I| over x in the region and y on
    radial ladders of length r; monotone in sigma by construction.
    """
    if not (0.0 < sigma < 1.0):
        raise SigmaOutOfRange(f"sigma must lie in (0, 1), got {sigma}")
    mf = metric or MetricField(chart)
    base = _base_points(chart, region, n)
    grenz = exp_radius if exp_radius is not None else estimate_grenz_exp(
        chart, region, metric=mf, n=n
    )
    h = 1e-4 * chart.extent_scale()
    n_rad = max(4, n // 2)

    def dev(r: float) -> float:
        X, Y = _tube(chart, base, r, n_rad)
        worst = 0.0
        I = np.eye(chart.dim)
        for lo in range(0, len(X), _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            _, J2 = _exp_jacobians(mf, X[sl], Y[sl], h)
            worst = max(worst, float(np.max(matrix_op_norm(J2 - I, chart.norm))))
        return worst

    hi = grenz * (1.0 - 1e-9)
    if dev(hi) < sigma:
        return hi
    lo = 0.0
    tol = chart.grid_cell("domain", n) / 16.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dev(mid) < sigma:
            lo = mid
        else:
            hi = mid
    if lo <= tol:
        raise DegenerateRegion(
            f"fiber derivative deviates by at least {sigma} arbitrarily close "
            f"to the zero section"
        )
    return lo


def estimate_first_second_exp_bounds(
    chart: Chart,
    region: RegionLike = "inner",
    delta: float = 0.1,
    metric: Optional[MetricField] = None,
    n: int = 16,
) -> tuple[float, float]:
    """(a, b): first and second derivative bounds of exp over a tube.

    a bounds the fiber derivative's operator norm over base points in the
    region and displacements up to ``delta``; b bounds the full second
    derivative as a bilinear form on the max-norm ball of the doubled
    coordinates.  The second derivative runs on a thinned base grid.
    """
    mf = metric or MetricField(chart)
    base = _base_points(chart, region, n)
    h1 = 1e-4 * chart.extent_scale()
    h2 = 5e-2 * chart.extent_scale()
    n_rad = max(4, n // 2)
    X, Y = _tube(chart, base, delta, n_rad)
    a = 0.0
    for lo in range(0, len(X), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        _, J2 = _exp_jacobians(mf, X[sl], Y[sl], h1)
        a = max(a, float(np.max(matrix_op_norm(J2, chart.norm))))
    thin = max(2, n // 4)
    base_thin = _base_points(chart, region, thin) if isinstance(region, str) else base
    Xt, Yt = _tube(chart, base_thin, delta, max(2, thin))
    b = 0.0
    for lo in range(0, len(Xt), _CHUNK // 8 or 1):
        sl = slice(lo, lo + (_CHUNK // 8))
        B = _exp_d2(mf, Xt[sl], Yt[sl], h1, h2)
        b = max(b, float(np.max(_bilinear_sup_norm(B, chart.norm))))
    return a, b


@dataclass
class LogConstants:
    log_radius: float
    log_d1_bound: float
    log_d2_bound: float
    sigma: float
    delta: float
    d1_cross_check_gap: float  # 1/(1 - sigma) + tol - log_d1_bound


def estimate_log_constants(
    chart: Chart,
    region: RegionLike = "inner",
    delta: float = 0.1,
    sigma: float = 0.5,
    metric: Optional[MetricField] = None,
    n: int = 16,
    inverse_radius: Optional[float] = None,
    norm_ratio: Optional[float] = None,
) -> LogConstants:
    """(log radius, aL, bL) for the chart logarithm.

    The log radius is the norm-ratio–scaled inverse radius at ``sigma``; aL
    bounds the derivative of log in its second slot over the tube of pairs
    (x, x + y) with |y| <= delta, and bL bounds its second derivative.
    Raises DeltaTooLarge when the tube would leave the certified log domain.
    """
    mf = metric or MetricField(chart)
    q = norm_ratio if norm_ratio is not None else estimate_quot_norm(
        chart, region, metric=mf, n=n
    )
    rad = inverse_radius if inverse_radius is not None else estimate_rad_exp_fib_inv(
        chart, region, sigma, metric=mf, n=n
    )
    log_radius = q * rad
    if delta >= log_radius:
        raise DeltaTooLarge(
            f"delta {delta:.6g} >= certified log radius {log_radius:.6g}"
        )
    base = _base_points(chart, region, n)
    h1 = 1e-4 * chart.extent_scale()
    h2 = 5e-2 * chart.extent_scale()
    n_rad = max(4, n // 2)
    X, Y = _tube(chart, base, delta, n_rad)
    Z = X + Y
    aL = 0.0
    for lo in range(0, len(X), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        W, _, _ = _log_core(mf, X[sl], Z[sl])
        _, J2 = _exp_jacobians(mf, X[sl], W, h1)
        aL = max(aL, float(np.max(matrix_op_norm(np.linalg.inv(J2), chart.norm))))
    # second derivative: difference the implicit first derivative of log
    thin = max(2, n // 4)
    base_thin = _base_points(chart, region, thin) if isinstance(region, str) else base
    Xt, Yt = _tube(chart, base_thin, delta, max(2, thin))
    Zt = Xt + Yt
    d = chart.dim

    def dlog(xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
        W, _, _ = _log_core(mf, xs, zs)
        J1, J2 = _exp_jacobians(mf, xs, W, h1)
        J2inv = np.linalg.inv(J2)
        return np.concatenate([-J2inv @ J1, J2inv], axis=-1)  # (..., d, 2d)

    bL = 0.0
    step = _CHUNK // 16 or 1
    for lo in range(0, len(Xt), step):
        sl = slice(lo, lo + step)
        rows = []
        for qq in range(2 * d):
            ex = np.zeros(d)
            ez = np.zeros(d)
            if qq < d:
                ex[qq] = h2
            else:
                ez[qq - d] = h2
            rows.append(
                (dlog(Xt[sl] + ex, Zt[sl] + ez) - dlog(Xt[sl] - ex, Zt[sl] - ez))
                / (2 * h2)
            )
        B = np.stack(rows, axis=-1)
        bL = max(bL, float(np.max(_bilinear_sup_norm(B, chart.norm))))
    gap = 1.0 / (1.0 - sigma) + 0.05 - aL
    return LogConstants(
        log_radius=log_radius,
        log_d1_bound=aL,
        log_d2_bound=bL,
        sigma=sigma,
        delta=delta,
        d1_cross_check_gap=gap,
    )


@dataclass
class ChartConstants:
    chart_id: str
    exp_radius: float
    norm_ratio: float
    inverse_radius: float
    exp_d1_bound: float
    exp_d2_bound: float
    log_radius: float
    log_d1_bound: float
    log_d2_bound: float
    sigma: float
    delta_exp: float
    delta_log: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ConstantsReport:
    charts: dict[str, ChartConstants]
    sigma: float
    safety: float
    resolution: dict

    def chart(self, chart_id: str) -> ChartConstants:
        return self.charts[chart_id]

    def as_dict(self) -> dict:
        return {
            "charts": {k: v.as_dict() for k, v in sorted(self.charts.items())},
            "sigma": self.sigma,
            "safety": self.safety,
            "resolution": self.resolution,
        }


def compute_constants(
    spec: ManifoldSpec,
    chart_id: Optional[str] = None,
    sigma: float = 0.5,
    delta: Optional[float] = None,
    n: Optional[int] = None,
    safety: float = 1.1,
) -> ConstantsReport:
    """All per-chart constants over the inner regions.

    ``delta`` (displacement bound for the derivative tubes) defaults to 0.9
    times each chart's exp radius and is capped there; the log tube is
    additionally capped by 0.9 times the log radius.
    """
    n = n or spec.grid_resolution
    out: dict[str, ChartConstants] = {}
    targets = [spec.chart(chart_id)] if chart_id else spec.charts
    for c in targets:
        mf = MetricField(c)
        exp_radius = estimate_grenz_exp(c, "inner", metric=mf, n=n)
        ratio = estimate_quot_norm(c, "inner", metric=mf, n=n)
        rad_inv = estimate_rad_exp_fib_inv(
            c, "inner", sigma, metric=mf, n=n, exp_radius=exp_radius
        )
        d_exp = min(delta, 0.95 * exp_radius) if delta else 0.9 * exp_radius
        a, b = estimate_first_second_exp_bounds(c, "inner", d_exp, metric=mf, n=n)
        log_radius = ratio * rad_inv
        d_log = min(d_exp, 0.9 * log_radius)
        logc = estimate_log_constants(
            c,
            "inner",
            d_log,
            sigma,
            metric=mf,
            n=n,
            inverse_radius=rad_inv,
            norm_ratio=ratio,
        )
        out[c.id] = ChartConstants(
            chart_id=c.id,
            exp_radius=exp_radius,
            norm_ratio=ratio,
            inverse_radius=rad_inv,
            exp_d1_bound=a,
            exp_d2_bound=b,
            log_radius=logc.log_radius,
            log_d1_bound=logc.log_d1_bound,
            log_d2_bound=logc.log_d2_bound,
            sigma=sigma,
            delta_exp=d_exp,
            delta_log=d_log,
        )
    return ConstantsReport(
        charts=out,
        sigma=sigma,
        safety=safety,
        resolution={"points_per_axis": n, "style": "closed"},
    )


# --- quantitative inverse function certificates ------------------------------


@dataclass
class QiftProblem:
    """A map on a ball, for inverse-function certification.

    exprs: the map's components as formulas in x1..xd; center/radius/norm
    describe the ball U; x is the base point (defaults to the center).
    """

    exprs: tuple[Expr, ...]
    center: np.ndarray
    radius: float
    norm: str = "sup"
    x: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.exprs = tuple(
            parse_expr(e) if isinstance(e, str) else e for e in self.exprs
        )
        self.center = np.asarray(self.center, dtype=float)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([evaluate_at_points(e, pts) for e in self.exprs], axis=-1)

    def jacobian(self, pts: np.ndarray, h: float) -> np.ndarray:
        d = len(self.exprs)
        cols = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            cols.append((self.apply(pts + e) - self.apply(pts - e)) / (2 * h))
        return np.stack(cols, axis=-1)


def certify_qift(
    problem: QiftProblem,
    n: int = 24,
    n_targets: int = 40,
    n_pairs: int = 200,
    seed: int = 0,
) -> Certificate:
    """Certify a quantitative inverse on a ball.

    Measures the differential's deviation over the ball, derives the
    certified target radius r' and the inverse Lipschitz bound, then checks
    both by Newton-solving for preimages of sampled targets.
    """
    d = len(problem.exprs)
    x0 = np.asarray(problem.x if problem.x is not None else problem.center, dtype=float)
    r = problem.radius
    h = 1e-5 * r
    Dx = problem.jacobian(x0, h)
    cond = float(np.linalg.cond(Dx))
    if not np.isfinite(cond) or cond >= 1e8:
        raise SingularDifferential(
            f"differential at the base point has condition number {cond:.3g}"
        )
    inv_norm = float(matrix_op_norm(np.linalg.inv(Dx), problem.norm))
    # deviation of the differential over the closed ball
    axes = [np.linspace(-r, r, n) for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    if problem.norm == "euclidean":
        pts = pts[vector_norm(pts, "euclidean") <= r + 1e-15]
    pts = pts + problem.center
    Dy = problem.jacobian(pts, h)
    delta_hat = float(np.max(matrix_op_norm(Dy - Dx, problem.norm)))

    cert = Certificate(kind="quantitative-inverse")
    cert.resolution = {"points_per_axis": n, "fd_step": h}
    contraction = delta_hat * inv_norm
    cert.add(
        "contraction",
        contraction < 1.0,
        1.0 - contraction,
        delta_hat=delta_hat,
        inverse_norm=inv_norm,
    )
    if contraction >= 1.0:
        cert.info = {"delta_hat": delta_hat, "inverse_norm": inv_norm}
        return cert
    r_prime = r * (1.0 - contraction) / inv_norm
    lipschitz = inv_norm / (1.0 - contraction)
    gx = problem.apply(x0)

    rng = np.random.default_rng(seed)
    targets = gx + _random_ball(rng, n_targets, d, problem.norm) * r_prime
    # Newton preimages
    ys = np.broadcast_to(x0, targets.shape).copy()
    ok = True
    for _ in range(60):
        F = problem.apply(ys) - targets
        if float(np.max(vector_norm(F, "sup"))) <= 1e-11:
            break
        J = problem.jacobian(ys, h)
        ys = ys - np.linalg.solve(J, F[..., None])[..., 0]
    else:
        ok = float(np.max(vector_norm(problem.apply(ys) - targets, "sup"))) <= 1e-9
    resid = float(np.max(vector_norm(problem.apply(ys) - targets, "sup")))
    inside = vector_norm(ys - x0, problem.norm) <= lipschitz * vector_norm(
        targets - gx, problem.norm
    ) + 1e-9
    in_domain = vector_norm(ys - problem.center, problem.norm) <= r + 1e-9
    cert.add(
        "preimages",
        ok and bool(np.all(inside)) and bool(np.all(in_domain)) and resid <= 1e-9,
        1e-9 - resid,
        targets=n_targets,
        max_residual=resid,
    )
    # Lipschitz bound on sampled preimage pairs
    i = rng.integers(0, len(ys), size=n_pairs)
    j = rng.integers(0, len(ys), size=n_pairs)
    lhs = vector_norm(ys[i] - ys[j], problem.norm)
    rhs = lipschitz * vector_norm(
        problem.apply(ys[i]) - problem.apply(ys[j]), problem.norm
    )
    slack = float(np.min(rhs - lhs))
    cert.add("inverse-lipschitz", slack >= -1e-6, slack, pairs=n_pairs)
    cert.info = {
        "delta_hat": delta_hat,
        "inverse_norm": inv_norm,
        "r_prime": r_prime,
        "lipschitz": lipschitz,
        "condition": cond,
    }
    return cert


def _random_ball(rng: np.random.Generator, k: int, d: int, norm: str) -> np.ndarray:
    """k points in the closed unit ball of the given norm."""
    if norm == "euclidean":
        v = rng.normal(size=(k, d))
        v /= np.maximum(vector_norm(v, "euclidean"), 1e-300)[:, None]
        radii = rng.uniform(0, 1, size=k) ** (1.0 / d)
        return v * radii[:, None]
    return rng.uniform(-1.0, 1.0, size=(k, d))
