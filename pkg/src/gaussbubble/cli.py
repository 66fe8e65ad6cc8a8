"""Batch command-line front end.

Every command writes one report (JSON by default, CSV with ``--format csv``)
to ``--output`` or standard output. Reports embed the effective configuration
and the package version; values print with 17 significant digits so equal
inputs give byte-identical reports.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure or
topology event, 4 failed acceptance check (``verify-all``).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings

import numpy as np

from . import __version__, _io, acceptance, frontflow, simplicial, stability
from .errors import GaussBubbleError, NumericFailure, StructuralViolation, TopologyEvent
from .geometry import barycenter_spectrum
from .measure import SectorRegion, barycenter

log = logging.getLogger("gaussbubble")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
RENORMALIZE_TOL = 1e-6

COMMANDS = (
    "simplex-cost",
    "solve-shift",
    "gradient-check",
    "hessian-check",
    "spectrum",
    "optimize-1d",
    "optimize-2d",
    "barycenters",
    "verify-all",
)


class UsageError(GaussBubbleError):
    pass


# --------------------------------------------------------------------------
# argument parsing


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v

    return conv


def _volumes(values, m):
    """Volume vector from the command line; near-unit sums are renormalized."""
    if values is None:
        raise UsageError("--a is required for this command")
    a = np.asarray(values, dtype=float)
    if m is not None and a.size != m:
        raise UsageError(f"--a has {a.size} entries but --m is {m}")
    if a.size and np.all(np.isfinite(a)) and np.all(a > 0):
        s = math.fsum(a)
        if 0.0 < abs(s - 1.0) <= RENORMALIZE_TOL:
            log.warning("volumes sum to %.17g; renormalizing", s)
            a = a / s
    return a


def _direction(values, m):
    if values is None:
        raise UsageError("--b is required for this command")
    b = np.asarray(values, dtype=float)
    if m is not None and b.size != m:
        raise UsageError(f"--b has {b.size} entries but --m is {m}")
    return b


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value file; flags override it")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", metavar="PATH", help="report path (default: stdout)")

    vol = argparse.ArgumentParser(add_help=False)
    vol.add_argument("--m", type=int, help="number of sets")
    vol.add_argument("--a", type=_float_list, help="volumes, comma separated")
    vol.add_argument("--tol", type=_positive(float), default=1e-9, help="shift-solve tolerance")

    parser = argparse.ArgumentParser(
        prog="gaussbubble", description="Gaussian multi-bubble candidate computations."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", metavar="PATH", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    parser.commands = sub.choices

    sub.add_parser("simplex-cost", parents=[common, vol], help="cost of the simplicial candidate")
    sub.add_parser("solve-shift", parents=[common, vol], help="shift realizing the volumes")
    sub.add_parser("barycenters", parents=[common, vol], help="sector barycenters and their rank")
    for name, h in (("gradient-check", 1e-4), ("hessian-check", 1e-3)):
        p = sub.add_parser(name, parents=[common, vol], help="finite differences vs identity")
        p.add_argument("--b", type=_float_list, help="zero-sum direction, comma separated")
        p.add_argument("--h", type=_positive(float), default=h, help="difference step")

    p = sub.add_parser("spectrum", parents=[common], help="fundamental tone of a curve network")
    p.add_argument("--mesh", choices=("tripod", "circle", "line"), default="tripod")
    p.add_argument("--mesh-file", metavar="PATH", help="network or mesh JSON (overrides --mesh)")
    p.add_argument("--nodes", type=_positive(int), default=400, help="nodes per edge")
    p.add_argument("--constrained", action="store_true", help="also preserve volumes")
    p.add_argument("--n-eigs", type=_positive(int), default=5)

    p = sub.add_parser("optimize-1d", parents=[common, vol], help="best labeled line partition")
    p.add_argument("--max-breaks", type=_positive(int), default=4)

    p = sub.add_parser("optimize-2d", parents=[common, vol], help="network descent for m = 3")
    p.add_argument("--init", choices=("tripod", "slab"), default="tripod")
    p.add_argument("--init-file", metavar="PATH", help="network JSON to start from")
    p.add_argument("--jitter", type=float, default=0.1)
    p.add_argument("--steps", type=_positive(int), default=5000)
    p.add_argument("--stop-tol", type=_positive(float), default=1e-7, help="velocity stop tolerance")
    p.add_argument("--plot", metavar="PATH", help="write (x, y, edge_label) rows here")
    p.add_argument("--snapshot-every", type=int, default=0)

    p = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    p.add_argument("--quick", action="store_true", help="smaller property-suite samples")
    return parser


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_path(argv):
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    """Namespace from flags layered over an optional config file."""
    parser = build_parser()
    path = _config_path(argv)
    file_cfg = read_config(path) if path else {}
    command = file_cfg.pop("command", None)
    if command is not None and not any(tok in COMMANDS for tok in argv):
        argv = [command, *argv]
    subparsers = parser.commands
    chosen = next((tok for tok in argv if tok in COMMANDS), None)
    if chosen is not None and file_cfg:
        sp = subparsers[chosen]
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in file_cfg.items():
            if key not in known or key in ("help", "config"):
                raise UsageError(f"unknown config key {key!r} for {chosen}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                # argparse runs string defaults through the action's type
                defaults[key] = value
        sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return args


# --------------------------------------------------------------------------
# commands


def _effective_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "output")}
    return cfg


def _m_of(args, a=None):
    if args.m is not None:
        return args.m
    if a is not None:
        return len(a)
    raise UsageError("--m or --a is required")


def cmd_simplex_cost(args):
    a = _volumes(args.a, args.m)
    sol = simplicial.solve_shift(a, tol=args.tol)
    c = simplicial.cost(a, tol=args.tol)
    lam = simplicial.multipliers(sol.y, sol.m)
    return {
        "cost": c.value,
        "cost_error_bound": c.abs_error_bound,
        "method": c.method,
        "shift": sol.y.tolist(),
        "volume_residual": sol.residual,
        "multipliers": list(lam.lam),
    }


def cmd_solve_shift(args):
    a = _volumes(args.a, args.m)
    sol = simplicial.solve_shift(a, tol=args.tol)
    out = sol.to_dict()
    out["volume_error_bounds"] = list(simplicial.sector_volumes(sol.y, sol.m)[1])
    return out


def _derivative(args, check):
    a = _volumes(args.a, args.m)
    b = _direction(args.b, _m_of(args, a))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = check(a, b, h=args.h)
    out = res.to_dict()
    out["warnings"] = [str(w.message) for w in caught]
    for w in caught:
        log.warning("%s", w.message)
    return out


def cmd_gradient_check(args):
    return _derivative(args, simplicial.gradient_check)


def cmd_hessian_check(args):
    return _derivative(args, simplicial.hessian_check)


def _load_mesh(args):
    if args.mesh_file:
        with open(args.mesh_file, encoding="utf-8") as fh:
            text = fh.read()
        d = _io.loads(text)
        if "chains" in d:
            return frontflow.PolygonalNetwork.from_dict(d).to_mesh()
        return stability.CurveNetworkMesh.from_dict(d)
    if args.mesh == "tripod":
        return stability.tripod_mesh(args.nodes)
    if args.mesh == "circle":
        return stability.circle_mesh(args.nodes)
    return stability.straight_line_mesh(args.nodes)


def cmd_spectrum(args):
    mesh = _load_mesh(args)
    rep = stability.fundamental_tone(mesh, args.constrained, args.n_eigs)
    out = rep.to_dict()
    resid, lam = stability.stationarity_residual(mesh)
    out["stationarity_residual"] = resid
    out["edge_multipliers"] = lam
    out["nodes"] = int(mesh.offsets[-1])
    return out


def cmd_optimize_1d(args):
    a = _volumes(args.a, args.m)
    res = frontflow.optimize_1d(_m_of(args, a), a, args.max_breaks, args.seed)
    return res.to_dict()


def cmd_optimize_2d(args):
    a = _volumes(args.a, 3 if args.m is None else args.m)
    if args.init_file:
        with open(args.init_file, encoding="utf-8") as fh:
            init = frontflow.PolygonalNetwork.from_json(fh.read())
    else:
        build = frontflow.tripod_network if args.init == "tripod" else frontflow.slab_network
        init = frontflow.jitter(build(a), args.jitter, args.seed) if args.jitter else build(a)
    res = frontflow.optimize_2d(
        a, init, steps=args.steps, seed=args.seed, tol=args.stop_tol,
        snapshot_every=args.snapshot_every,
    )
    if args.plot:
        with open(args.plot, "w", encoding="utf-8", newline="") as fh:
            fh.write(_io.write_csv(res.network.plot_rows(), ["x", "y", "edge_label"]))
    out = res.to_dict()
    out["initial_cost"] = init.cost()
    out["volumes"] = res.network.volumes().tolist()
    out["first_variation"] = frontflow.first_variation_residual(res.network).to_dict()
    out["_trace_csv"] = res.trace_csv()
    return out


def cmd_barycenters(args):
    a = _volumes(args.a, args.m)
    sol = simplicial.solve_shift(a, tol=args.tol)
    p = sol.partition()
    regions = [SectorRegion(p, i) for i in range(1, sol.m + 1)]
    pairs = [barycenter(r) for r in regions]
    rank, sv, _ = barycenter_spectrum(regions)
    return {
        "shift": sol.y.tolist(),
        "barycenters": [list(v) for v, _ in pairs],
        "barycenter_error_bounds": [list(e) for _, e in pairs],
        "singular_values": list(sv),
        "rank": rank,
    }


def cmd_verify_all(args):
    results = acceptance.run_all(quick=args.quick)
    for r in results:
        print(r.line(), file=sys.stderr)
    rows = []
    for r in results:
        d = r.to_dict()
        d.pop("elapsed")  # wall time goes to stderr only, keeping the report reproducible
        rows.append(d)
    return {"passed": all(r.passed for r in results), "criteria": rows}


HANDLERS = {
    "simplex-cost": cmd_simplex_cost,
    "solve-shift": cmd_solve_shift,
    "gradient-check": cmd_gradient_check,
    "hessian-check": cmd_hessian_check,
    "spectrum": cmd_spectrum,
    "optimize-1d": cmd_optimize_1d,
    "optimize-2d": cmd_optimize_2d,
    "barycenters": cmd_barycenters,
    "verify-all": cmd_verify_all,
}


# --------------------------------------------------------------------------
# reports


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for k, v in enumerate(obj):
            _flatten(f"{prefix}[{k}]", v, rows)
    else:
        rows.append([prefix, obj])


def render(report, fmt):
    trace = report["result"].pop("_trace_csv", None)
    if fmt == "json":
        return _io.dumps(report) + "\n"
    if trace is not None:
        return trace
    rows = []
    _flatten("", report, rows)
    return _io.write_csv(rows, ["key", "value"])


def run(args):
    """Execute a parsed command; returns ``(exit_code, report_text)``."""
    result = HANDLERS[args.command](args)
    report = {
        "tool": "gaussbubble",
        "version": __version__,
        "command": args.command,
        "config": _effective_config(args),
        "result": result,
    }
    code = EXIT_OK
    if args.command == "verify-all" and not result["passed"]:
        code = EXIT_CHECK
    return code, render(report, args.format)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(levelname)s: %(message)s")
    logging.captureWarnings(True)
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        code, text = run(args)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    except (NumericFailure, TopologyEvent, StructuralViolation) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC
    except (GaussBubbleError, ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
