"""Command-line interface: ``mlmoments estimate | verify | simulate``.

Exit codes: 0 success, 1 failed verification check, 2 usage, format or
validation error, 3 singular fourth-moment system when order 4 was requested.
Reports are JSON on standard output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone

from . import __version__, three_level, two_level, verify
from .design import ThreeLevelDataset, TwoLevelDataset, validate_three_level, validate_two_level
from .errors import (
    BadColumnCount,
    IngestError,
    InvalidDistribution,
    MissingHeader,
    MomentsError,
    UnparseableValue,
    ValidationError,
)
from .oracle import DiscreteDistribution, SimulationPlan, run_monte_carlo

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_SINGULAR = 0, 1, 2, 3

HEADERS = {2: ["group_id", "value"], 3: ["group_id", "subgroup_id", "value"]}


def _read_csv(path, levels: int):
    header = HEADERS[levels]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise MissingHeader(f"expected header {','.join(header)!r}, got {first!r}")
        groups: dict = {}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise BadColumnCount(row_no, len(header), len(row))
            text = row[-1].strip()
            try:
                value = float(text)
            except ValueError:
                raise UnparseableValue(row_no, "value", text) from None
            key = row[0].strip()
            if levels == 2:
                groups.setdefault(key, []).append(value)
            else:
                groups.setdefault(key, {}).setdefault(row[1].strip(), []).append(value)
    if levels == 2:
        data = TwoLevelDataset([tuple(v) for v in groups.values()])
    else:
        data = ThreeLevelDataset([[tuple(s) for s in g.values()] for g in groups.values()])
    return data, list(groups)


def ingest_csv(path, levels: int):
    """Read a long-format CSV into a dataset.

    Identifiers are opaque strings; groups (and subgroups within a group) are
    numbered in order of first appearance.  Row numbers in errors count the
    header as row 1.
    """
    return _read_csv(path, levels)[0]


def canonical(data):
    """Same dataset with values, subgroups and groups in sorted order.

    Estimates are permutation invariant in exact arithmetic; computing them on
    this ordering makes float results independent of CSV row order too.
    """
    if isinstance(data, ThreeLevelDataset):
        groups = [sorted(tuple(sorted(s)) for s in g) for g in data.groups]
        return ThreeLevelDataset(sorted(groups, key=lambda g: (len(g), [len(s) for s in g], g)))
    return TwoLevelDataset(sorted((tuple(sorted(g)) for g in data.groups), key=lambda g: (len(g), g)))


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _num(x):
    return None if x is None else float(x)


def _error(exc) -> dict:
    d = {"code": type(exc).__name__, "message": str(exc)}
    for attr in ("row", "column", "kind"):
        if hasattr(exc, attr):
            d[attr] = getattr(exc, attr)
    if hasattr(exc, "det"):
        d["det"] = _num(exc.det)
    return d


def _header(deterministic: bool) -> dict:
    out = {"tool": {"name": "mlmoments", "version": __version__}}
    if not deterministic:
        out["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return out


def _parse_orders(text):
    try:
        orders = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad order list {text!r}") from None
    if not orders or any(k not in (2, 3, 4) for k in orders):
        raise argparse.ArgumentTypeError(f"orders must be drawn from 2,3,4, got {text!r}")
    return orders


def _estimate_two(data, schemes, orders, report):
    fourth = 4 in orders
    est = two_level.estimate_two_level(data, schemes=schemes, fourth=fourth)
    s = est.summary
    report["design"] = {"n": s.n, "J": list(s.J), "N": s.N, "balanced": s.balanced}
    w = est.within
    within = {}
    if 2 in orders:
        within["mu2v"] = _num(w.mu2v)
    if 3 in orders:
        within["mu3v"] = _num(w.mu3v)
    diag = {"negative": list(w.negative)}
    singular = False
    if fourth:
        diag["det_v"] = _num(w.det_v)
        diag["singular_v"] = w.error == "SingularSystem"
        if w.error:
            singular = True
            report["errors"].append({
                "code": "SingularSystem", "kind": "v", "det": _num(w.det_v),
                "message": "within-group fourth-moment system is singular; mu4v and mu2v_sq omitted",
            })
        else:
            within.update(mu4v=_num(w.mu4v), mu2v_sq=_num(w.mu2v_sq))
    between = {}
    for name, b in est.between.items():
        out = {}
        if 2 in orders:
            out["mu2u"] = _num(b.mu2u)
        if 3 in orders:
            out["mu3u"] = _num(b.mu3u)
        diag["negative"] += [f"{k}_{name}" for k in b.negative]
        if fourth:
            diag.setdefault("det_u", {})[name] = _num(b.det_u)
            diag.setdefault("singular_u", {})[name] = b.error == "SingularSystem"
            if b.error:
                singular = True
                msg = ("between-group fourth-moment system is singular" if b.error == "SingularSystem"
                       else "needs the within-group fourth moments, which are unavailable")
                report["errors"].append({
                    "code": b.error, "kind": name, "det": _num(b.det_u),
                    "message": f"{msg}; mu4u and mu2u_sq omitted",
                })
            else:
                out.update(mu4u=_num(b.mu4u), mu2u_sq=_num(b.mu2u_sq))
        between[name] = out
    report["estimates"] = {"within": within, "between": between}
    report["diagnostics"] = diag
    return EXIT_SINGULAR if singular else EXIT_OK


def _estimate_three(data, schemes, orders, report):
    est = three_level.estimate_three_level(data, schemes=schemes)
    s = est.summary
    report["design"] = {
        "n": s.n, "J": list(s.J), "K": [list(r) for r in s.K], "N": s.N, "balanced": s.balanced,
    }
    keep = [k for k in (2, 3) if k in orders]
    within = {f"mu{k}w": _num(getattr(est, f"mu{k}w")) for k in keep}
    levels = {}
    for name, e in est.schemes.items():
        levels[name] = {f"mu{k}{lvl}": _num(getattr(e, f"mu{k}{lvl}")) for lvl in "vu" for k in keep}
    report["estimates"] = {"within": within, "between": levels}
    report["diagnostics"] = {"negative": list(est.negative)}
    return EXIT_OK


def cmd_estimate(args) -> int:
    report = _header(args.deterministic)
    report.update(levels=args.levels, orders=args.orders)
    report["errors"] = []
    schemes = list(two_level.SCHEMES) if args.scheme == "both" else [args.scheme]
    report["schemes"] = schemes
    try:
        data, ids = _read_csv(args.input, args.levels)
        if args.levels == 2:
            validate_two_level(data)
            code = _estimate_two(canonical(data), schemes, args.orders, report)
            report["design"]["J"] = list(data.sizes)
        else:
            validate_three_level(data)
            code = _estimate_three(canonical(data), schemes, args.orders, report)
            report["design"]["J"] = [len(g) for g in data.groups]
            report["design"]["K"] = [list(r) for r in data.sizes]
        report["design"]["group_ids"] = ids
    except (IngestError, ValidationError, OSError, UnicodeDecodeError) as e:
        report["errors"].append(_error(e))
        print(f"mlmoments: {e}", file=sys.stderr)
        _emit(report)
        return EXIT_USAGE
    _emit(report)
    return code


def cmd_verify(args) -> int:
    results = verify.run_suite(args.suite, reps=args.reps, seed=args.seed)
    report = _header(True)
    report.update(verify.suite_report(results, suite=args.suite, reps=args.reps, seed=args.seed))
    _emit(report)
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


def _parse_design(text):
    try:
        if "/" in text:
            return tuple(tuple(int(k) for k in part.split(",")) for part in text.split("/"))
        return tuple(int(k) for k in text.split(","))
    except ValueError:
        raise ValueError(f"bad design {text!r}") from None


def cmd_simulate(args) -> int:
    try:
        design = _parse_design(args.design)
        dists = {}
        for lvl in "uvw":
            spec = getattr(args, f"dist_{lvl}")
            if spec is not None:
                dists[lvl] = DiscreteDistribution.parse(spec)
        plan = SimulationPlan(design, dists, args.reps, args.seed)
    except (InvalidDistribution, ValidationError, ValueError) as e:
        print(f"mlmoments: {e}", file=sys.stderr)
        return EXIT_USAGE
    reports = run_monte_carlo(plan)
    out = _header(args.deterministic)
    out.update(
        levels=plan.levels,
        design=[list(r) for r in design] if plan.levels == 3 else list(design),
        distributions={k: str(v) for k, v in dists.items()},
        reps=plan.reps,
        seed=plan.seed,
        reports=[r.to_dict() for r in reports],
    )
    _emit(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mlmoments",
        description="Unbiased higher-moment estimators for unbalanced multilevel designs.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate moments from a long-format CSV")
    p.add_argument("--levels", type=int, choices=(2, 3), required=True)
    p.add_argument("--input", required=True, metavar="PATH")
    p.add_argument("--scheme", choices=("grp", "obs", "both"), default="both")
    p.add_argument("--orders", type=_parse_orders, default=[2, 3], help="comma list from 2,3,4")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("verify", help="run the acceptance suites")
    p.add_argument("--suite", choices=verify.SUITES, default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=verify.DEFAULT_REPS,
                   help="two-level Monte Carlo replications; the three-level run uses 5x")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo bias report for a design")
    p.add_argument("--design", required=True, help='"3,3,4" or "3,3,3/3,3,3/3,3,3"')
    p.add_argument("--dist-u", required=True, metavar="LAW", help='e.g. "1:0.5,-1:0.5"')
    p.add_argument("--dist-v", required=True, metavar="LAW")
    p.add_argument("--dist-w", metavar="LAW", help="three-level designs only")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "estimate" and args.levels == 3 and 4 in args.orders:
        ap.error("order 4 is available only with --levels 2")
    if getattr(args, "reps", 1) < 1:
        ap.error("--reps must be at least 1")
    if getattr(args, "seed", 0) < 0:
        ap.error("--seed must be non-negative")
    try:
        return args.func(args)
    except MomentsError as e:  # pragma: no cover - every known error is mapped above
        print(f"mlmoments: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
