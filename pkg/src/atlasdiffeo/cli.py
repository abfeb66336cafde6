"""Command-line front end: orchestrates the library, emits JSON reports.

Every subcommand prints one canonical-JSON report to stdout (sorted keys,
no whitespace variance, shortest-round-trip floats) so that identical inputs
and configuration produce byte-identical output.  Human-facing messages and
timing go to stderr only.  Exit codes: 0 success, 1 a certificate failed,
2 input error (bad file, unknown name, bad parameters).

The report schema puts every numeric claim next to the resolution and safety
factor it was measured with; reported constants are grid estimates and are
meant to be audited, not trusted blindly.

ATLASDIFFEO_THREADS caps worker threads for per-chart constant estimation
(default 1).  Thread count never changes report bytes: charts are computed
independently and merged in sorted order.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from .certs import canonical_json
from .engine import ConstantsReport, QiftProblem, certify_qift, compute_constants
from .errors import (
    AtlasDiffeoError,
    ConstantsIncompatible,
    ConstantsMissing,
    CoverViolation,
    DegenerateRegion,
    DeltaTooLarge,
    EmptyIntersection,
    ExplosionGuard,
    GaugeViolation,
    InvariantViolation,
    LeftChartDomain,
    LogDomainExceeded,
    NewtonFailure,
    NoContainingChart,
    NoConvergence,
    NotSubordinate,
    OrderUnavailable,
    OutsideInjectivityRadius,
    OutsideTrustRegion,
    RadiiOrderViolation,
    SigmaOutOfRange,
    SingularDifferential,
    SpecError,
)
from .fields import field_from_spec, read_field, validate_localization, write_field
from .group import NeighborhoodGauge, certify_diffeo, compose, invert
from .oracles import oracle_by_name
from .seminorms import seminorm
from .spec import (
    ManifoldSpec,
    load_manifold,
    locally_finite_report,
    validate_adapted,
    validate_structure,
)
from .weights import (
    construct_adjusted,
    estimate_bound_families,
    pair_omega_exp_log,
    saturate,
    weight_from_spec,
)

REPORT_SCHEMA = "atlasdiffeo-report 1"

# the inputs were fine but a quantitative requirement did not hold
_CERT_ERRORS = (
    ConstantsIncompatible,
    CoverViolation,
    DegenerateRegion,
    ExplosionGuard,
    GaugeViolation,
    LeftChartDomain,
    LogDomainExceeded,
    NewtonFailure,
    NoContainingChart,
    NoConvergence,
    NotSubordinate,
    OutsideInjectivityRadius,
    OutsideTrustRegion,
    SingularDifferential,
)

# the request itself was malformed
_INPUT_ERRORS = (
    SpecError,
    InvariantViolation,
    OrderUnavailable,
    RadiiOrderViolation,
    SigmaOutOfRange,
    DeltaTooLarge,
    ConstantsMissing,
    EmptyIntersection,
)


def _thread_count() -> int:
    raw = os.environ.get("ATLASDIFFEO_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-report-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(report: dict, json_out: Optional[str]) -> None:
    text = canonical_json(report)
    if json_out:
        _atomic_write_text(json_out, text + "\n")
    sys.stdout.write(text + "\n")


def _load(path: str) -> tuple[ManifoldSpec, str]:
    return load_manifold(path), _sha256_file(path)


def _resolve_field(spec: ManifoldSpec, name: str):
    """A field named in the description, or a tabulated-field file path."""
    if name in spec.fields:
        return field_from_spec(spec, name)
    if os.path.exists(name):
        return read_field(name)
    raise SpecError(
        f"{name!r} is neither a declared field nor a tabulated-field file"
    )


def _resolve_weight(spec: ManifoldSpec, token: str):
    """A declared weight name, or a constant weight from a float literal."""
    if token in spec.weights:
        return weight_from_spec(spec, token)
    try:
        return float(token)
    except ValueError:
        raise SpecError(
            f"{token!r} is neither a declared weight nor a constant"
        ) from None


def _constants(spec: ManifoldSpec, args) -> ConstantsReport:
    """Per-chart constants, fanned out over ATLASDIFFEO_THREADS workers."""
    workers = _thread_count()
    ids = sorted(spec.chart_ids())
    kw = dict(sigma=args.sigma, delta=args.delta, n=args.grid, safety=args.safety)
    if workers == 1 or len(ids) == 1:
        return compute_constants(spec, **kw)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(
            ex.map(lambda cid: compute_constants(spec, chart_id=cid, **kw), ids)
        )
    charts = {}
    for part in parts:
        charts.update(part.charts)
    return ConstantsReport(
        charts=charts,
        sigma=parts[0].sigma,
        safety=parts[0].safety,
        resolution=parts[0].resolution,
    )


def _weight_summary(w) -> dict:
    out = {"name": getattr(w, "name", "weight"), "type": type(w).__name__}
    const = getattr(w, "constant_value", lambda: None)()
    if const is not None:
        out["constant"] = const
    plateaus = getattr(w, "plateaus", None)
    if plateaus is not None:
        out["plateaus"] = dict(sorted(plateaus.items()))
    factor = getattr(w, "factor", None)
    if factor is not None:
        out["factor"] = factor
    return out


# --- subcommand bodies (return (results dict, passed)) ------------------------


def _cmd_validate(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    violations = validate_structure(spec)
    adapted = validate_adapted(spec, n=args.grid)
    finiteness = locally_finite_report(spec, n=args.grid)
    results = {
        "violations": violations,
        "adapted": adapted.as_dict(),
        "local_finiteness": finiteness,
    }
    return {"spec_sha256": digest, **results}, not violations and adapted.passed


def _cmd_constants(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    report = _constants(spec, args)
    return {"spec_sha256": digest, "constants": report.as_dict()}, True


def _cmd_seminorm(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    X = _resolve_field(spec, args.field)
    f = _resolve_weight(spec, args.weight)
    result = seminorm(spec, X, f, args.order, atlas=args.atlas, n=args.grid)
    return {"spec_sha256": digest, "seminorm": result.as_dict()}, True


def _cmd_saturate(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    constants = _constants(spec, args)
    families = estimate_bound_families(spec, constants, n=args.grid)
    seeds = [weight_from_spec(spec, name) for name in sorted(spec.weights)]
    if not seeds:
        raise SpecError("the description declares no weights to saturate")
    result = saturate(spec, seeds, families, levels=args.levels, n=args.grid)
    weights = []
    for w in result.weights:
        row = _weight_summary(w)
        row["local_bound"] = result.local_bounds.get(
            f"{len(weights) - len(seeds)}:{row['name']}"
        )
        weights.append(row)
    results = {
        "spec_sha256": digest,
        "families": [fam.as_dict() for fam in families],
        "levels_used": result.levels_used,
        "stabilized": result.stabilized,
        "new_per_level": result.new_per_level,
        "count": len(result.weights),
        "weights": weights,
        "local_bounds": result.local_bounds,
    }
    return results, True


def _gauge(spec: ManifoldSpec, constants: ConstantsReport, args) -> tuple:
    pair = pair_omega_exp_log(
        spec, constants, sigma=args.sigma, deltas=args.delta, n=args.grid
    )
    gauge = NeighborhoodGauge(
        spec=spec, omega=pair.omega_exp, constants=constants, rho=args.rho
    )
    return pair, gauge


def _cmd_certify(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    X = _resolve_field(spec, args.field)
    constants = _constants(spec, args)
    localization = validate_localization(spec, X, n=args.grid, tol=args.tol)
    cert = certify_diffeo(spec, X, constants, n=args.grid)
    results = {
        "spec_sha256": digest,
        "field": getattr(X, "name", args.field),
        "localization": localization.as_dict(),
        "certificate": cert.as_dict(),
    }
    return results, localization.passed and cert.passed


def _cmd_compose(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    X = _resolve_field(spec, args.lhs)
    Y = _resolve_field(spec, args.rhs)
    constants = _constants(spec, args)
    pair, gauge = _gauge(spec, constants, args)
    result = compose(spec, X, Y, gauge, pair.omega_log, n=args.grid)
    if args.out:
        write_field(args.out, result.field)
    results = {
        "spec_sha256": digest,
        "lhs": getattr(X, "name", args.lhs),
        "rhs": getattr(Y, "name", args.rhs),
        "out": args.out,
        "charts": result.field.chart_ids(),
        "certificate": result.certificate.as_dict(),
    }
    return results, result.certificate.passed


def _cmd_invert(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    X = _resolve_field(spec, args.field)
    constants = _constants(spec, args)
    pair, gauge = _gauge(spec, constants, args)
    result = invert(spec, X, gauge, pair.omega_log, n=args.grid)
    if args.out:
        write_field(args.out, result.field)
    results = {
        "spec_sha256": digest,
        "field": getattr(X, "name", args.field),
        "out": args.out,
        "charts": result.field.chart_ids(),
        "certificate": result.certificate.as_dict(),
    }
    return results, result.certificate.passed


def _cmd_oracle(args) -> tuple[dict, bool]:
    if args.action != "emit":
        raise SpecError(f"unknown oracle action {args.action!r}")
    params: dict = {}
    if args.kind in ("flat", "scaled_flat"):
        params = {"d": args.d, "r1": args.r1, "r2": args.r2}
        if args.kind == "scaled_flat":
            params["c"] = args.c
    elif args.kind == "cylinder":
        params = {"length": args.length, "n_charts": args.n_charts}
    oracle = oracle_by_name(args.kind, **params)
    text = oracle.emit_toml()
    _atomic_write_text(args.out, text)
    results = {
        "kind": args.kind,
        "params": params,
        "out": args.out,
        "spec_sha256": _sha256_file(args.out),
        "charts": sorted(oracle.spec.chart_ids()),
    }
    return results, True


def _cmd_qift(args) -> tuple[dict, bool]:
    try:
        import tomllib as _toml  # py >= 3.11
    except ModuleNotFoundError:  # pragma: no cover
        import tomli as _toml
    try:
        with open(args.problem, "rb") as fh:
            raw = _toml.load(fh)
    except FileNotFoundError:
        raise SpecError(f"no such file: {args.problem}") from None
    except _toml.TOMLDecodeError as exc:
        raise SpecError(f"cannot parse {args.problem}: {exc}") from None
    try:
        problem = QiftProblem(
            exprs=tuple(str(e) for e in raw["exprs"]),
            center=[float(v) for v in raw["center"]],
            radius=float(raw["radius"]),
            norm=str(raw.get("norm", "sup")),
            x=[float(v) for v in raw["x"]] if "x" in raw else None,
        )
    except KeyError as exc:
        raise SpecError(f"{args.problem}: missing key {exc}") from None
    cert = certify_qift(problem, n=args.grid)
    results = {
        "problem_sha256": _sha256_file(args.problem),
        "certificate": cert.as_dict(),
    }
    return results, cert.passed


def _cmd_weights(args) -> tuple[dict, bool]:
    if args.action != "adjust":
        raise SpecError(f"unknown weights action {args.action!r}")
    spec, digest = _load(args.spec)
    import json

    with open(args.delta_per_chart, "r") as fh:
        targets = {str(k): float(v) for k, v in json.load(fh).items()}
    w = construct_adjusted(spec, targets, name=args.name, n=args.grid)
    results = {
        "spec_sha256": digest,
        "targets": dict(sorted(targets.items())),
        "weight": _weight_summary(w),
    }
    return results, True


def _cmd_full_pipeline(args) -> tuple[dict, bool]:
    spec, digest = _load(args.spec)
    ok = True

    violations = validate_structure(spec)
    adapted = validate_adapted(spec, n=args.grid)
    ok &= not violations and adapted.passed

    constants = _constants(spec, args)
    pair, gauge = _gauge(spec, constants, args)
    ok &= pair.certificate.passed

    seeds = [weight_from_spec(spec, name) for name in sorted(spec.weights)]
    saturation: dict = {"skipped": "no declared weights"}
    if seeds:
        families = estimate_bound_families(spec, constants, n=args.grid)
        sat = saturate(spec, seeds, families, levels=args.levels, n=args.grid)
        saturation = {
            "count": len(sat.weights),
            "levels_used": sat.levels_used,
            "stabilized": sat.stabilized,
            "new_per_level": sat.new_per_level,
            "weights": [_weight_summary(w) for w in sat.weights],
            "local_bounds": sat.local_bounds,
        }

    fields_report: dict = {}
    for name in sorted(spec.fields):
        X = field_from_spec(spec, name)
        localization = validate_localization(spec, X, n=args.grid, tol=args.tol)
        cert = certify_diffeo(spec, X, constants, n=args.grid)
        gauges = {
            which: gauge.membership(X, which, n=args.grid).as_dict()
            for which in ("compose_left", "compose_right", "invert")
        }
        fields_report[name] = {
            "localization": localization.as_dict(),
            "certificate": cert.as_dict(),
            "gauges": gauges,
        }
        ok &= localization.passed and cert.passed
        ok &= all(g["passed"] for g in gauges.values())

    results = {
        "spec_sha256": digest,
        "validate": {"violations": violations, "adapted": adapted.as_dict()},
        "constants": constants.as_dict(),
        "paired_weights": {
            "sigma": pair.sigma,
            "targets": dict(sorted(pair.targets_exp.items())),
            "omega_exp": _weight_summary(pair.omega_exp),
            "omega_log": _weight_summary(pair.omega_log),
            "certificate": pair.certificate.as_dict(),
        },
        "saturation": saturation,
        "fields": fields_report,
    }
    return results, bool(ok)


# --- argument parsing ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="atlasdiffeo",
        description="certified chart-based calculus: validation, constants, "
        "weights, and diffeomorphism group operations",
    )
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, spec: bool = True) -> None:
        if spec:
            p.add_argument("spec", help="manifold description file (TOML)")
        p.add_argument("--grid", type=int, default=None, metavar="N",
                       help="sample points per axis (default: from the description)")
        p.add_argument("--safety", type=float, default=1.1, metavar="F",
                       help="safety factor applied to estimated constants")
        p.add_argument("--sigma", type=float, default=0.5, metavar="F",
                       help="contraction level for derivative windows")
        p.add_argument("--rho", type=float, default=0.5, metavar="F",
                       help="inversion gauge parameter in (0, 1)")
        p.add_argument("--tol", type=float, default=1e-6, metavar="F",
                       help="localization coherence tolerance")
        p.add_argument("--delta", type=float, default=None, metavar="F",
                       help="per-chart radius target (default: 0.8 of the window)")
        p.add_argument("--json-out", default=None, metavar="PATH",
                       help="also write the report to PATH (atomic)")

    common(sub.add_parser("validate", help="structural and adaptedness checks"))
    p = sub.add_parser("constants", help="per-chart quantitative constants")
    common(p)

    p = sub.add_parser("seminorm", help="weighted seminorm of a field")
    common(p)
    p.add_argument("--field", required=True, help="declared field name or .field file")
    p.add_argument("--weight", default="1.0", help="declared weight name or constant")
    p.add_argument("--order", type=int, default=0, help="derivative order")
    p.add_argument("--atlas", default="A", choices=("A", "B", "C"),
                   help="region selector: domain, padded ball, inner ball")

    p = sub.add_parser("saturate", help="saturated weight family")
    common(p)
    p.add_argument("--levels", type=int, default=3, help="saturation levels")

    p = sub.add_parser("certify", help="certify a field generates a diffeomorphism")
    common(p)
    p.add_argument("--field", required=True, help="declared field name or .field file")

    p = sub.add_parser("compose", help="compose two certified displacements")
    common(p)
    p.add_argument("--lhs", required=True, help="outer field (name or file)")
    p.add_argument("--rhs", required=True, help="inner field (name or file)")
    p.add_argument("--out", default=None, help="write the tabulated result here")

    p = sub.add_parser("invert", help="invert a certified displacement")
    common(p)
    p.add_argument("--field", required=True, help="field to invert (name or file)")
    p.add_argument("--out", default=None, help="write the tabulated result here")

    p = sub.add_parser("oracle", help="emit a reference fixture description")
    osub = p.add_subparsers(dest="action", required=True)
    pe = osub.add_parser("emit", help="write a loadable description file")
    pe.add_argument("--kind", required=True,
                    choices=("flat", "scaled_flat", "cylinder", "half_plane"))
    pe.add_argument("--d", type=int, default=1, help="dimension (flat kinds)")
    pe.add_argument("--r1", type=float, default=1.0, help="chart extent (flat kinds)")
    pe.add_argument("--r2", type=float, default=0.75, help="inner radius (flat kinds)")
    pe.add_argument("--c", type=float, default=2.0, help="metric scale (scaled_flat)")
    pe.add_argument("--length", type=float, default=6.0, help="cylinder length")
    pe.add_argument("--n-charts", type=int, default=3,
                    help="angular charts (cylinder)")
    pe.add_argument("--out", required=True, help="output description path")
    pe.add_argument("--json-out", default=None, metavar="PATH")

    p = sub.add_parser("qift", help="quantitative inverse certificate for a map")
    p.add_argument("problem",
                   help="TOML file with exprs, center, radius, optional norm/x")
    p.add_argument("--grid", type=int, default=24, metavar="N",
                   help="sample points per axis over the ball")
    p.add_argument("--json-out", default=None, metavar="PATH")

    p = sub.add_parser("weights", help="weight construction utilities")
    wsub = p.add_subparsers(dest="action", required=True)
    pa = wsub.add_parser("adjust", help="build a weight adjusted to radius targets")
    common(pa)
    pa.add_argument("--delta-per-chart", required=True,
                    help="JSON file mapping chart id to radius target")
    pa.add_argument("--name", default="omega", help="name of the built weight")

    p = sub.add_parser(
        "full-pipeline",
        help="validate, estimate, build weights, certify every declared field",
    )
    common(p)
    p.add_argument("--levels", type=int, default=3, help="saturation levels")

    return top


_BODIES = {
    "validate": _cmd_validate,
    "constants": _cmd_constants,
    "seminorm": _cmd_seminorm,
    "saturate": _cmd_saturate,
    "certify": _cmd_certify,
    "compose": _cmd_compose,
    "invert": _cmd_invert,
    "oracle": _cmd_oracle,
    "qift": _cmd_qift,
    "weights": _cmd_weights,
    "full-pipeline": _cmd_full_pipeline,
}


def _configuration(args) -> dict:
    skip = {"command", "spec", "problem", "json_out"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        out[key] = value
    return out


def main(argv: Optional[list] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        results, passed = _BODIES[args.command](args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _CERT_ERRORS as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1
    except AtlasDiffeoError as exc:  # anything else from the library
        print(f"error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.monotonic() - started
    report = {
        "schema": REPORT_SCHEMA,
        "command": args.command,
        "configuration": _configuration(args),
        "results": results,
        "passed": bool(passed),
    }
    _emit(report, getattr(args, "json_out", None))
    print(f"{args.command}: {'pass' if passed else 'FAIL'} "
          f"({elapsed:.3f}s)", file=sys.stderr)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
