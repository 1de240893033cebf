"""Command-line entry point: ``walkforge <subcommand> ...``.

Every artifact-producing run also writes a manifest (``<out>.manifest.json``)
recording the resolved arguments, seed, code version, input digests and
timestamps.  ``walkforge replay`` re-runs a manifest into a new directory;
in deterministic mode the artifacts come out byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from ._validation import check_ratio, check_theta, parse_int_expr, parse_rational

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_BUDGET = 4

SEED_ENV = "WALKFORGE_SEED"
log = logging.getLogger("walkforge")


class InputError(Exception):
    """Bad values in otherwise well-formed arguments."""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- argument types ---------------------------------------------------------

def _rational(text):
    try:
        return parse_rational(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _theta(text):
    if text == "auto":
        return "auto"
    return _rational(text)


def _int_expr(text):
    try:
        return parse_int_expr(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _u64(text):
    value = _int_expr(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {value}")
    return value


def _int_range(text):
    """``"4..16"`` or ``"4,6,9"`` or ``"9"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed integer range {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return values


def _rational_list(text):
    return [_rational(x) for x in text.split(",") if x.strip()]


def _json_default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


# -- output handling --------------------------------------------------------

class Outputs:
    """Collects artifacts in memory and commits them atomically after success."""

    def __init__(self):
        self.pending: list[tuple[Path | None, str]] = []

    def add(self, path, text: str):
        self.pending.append((Path(path) if path else None, text))

    def commit(self) -> list[dict]:
        written, temps = [], []
        try:
            for path, text in self.pending:
                if path is None:
                    sys.stdout.write(text)
                    continue
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
                temps.append(tmp)
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
            idx = 0
            for path, text in self.pending:
                if path is None:
                    continue
                os.replace(temps[idx], path)
                idx += 1
                written.append({"path": str(path), "sha256": hashlib.sha256(text.encode()).hexdigest()})
        except BaseException:
            for tmp in temps:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            for entry in written:
                Path(entry["path"]).unlink(missing_ok=True)
            raise
        return written


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


# -- subcommands ----------------------------------------------------------------

def _parse_group(text: str):
    """``[1009]``, ``360,12`` or ``Z_360+Z_12`` for explicit groups; a negative integer is a discriminant."""
    from .class_group import ClassGroupBackend, ClassGroupCtx, DiscriminantError
    from .group_core import AbelianGroupBackend, MalformedGroupError, make_group

    t = text.strip()
    try:
        if t.startswith("-"):
            return ClassGroupBackend(ClassGroupCtx(int(t)))
        t = t.strip("[]() ").replace("Z_", "").replace("+", ",")
        factors = [int(x) for x in t.split(",") if x.strip()]
        return AbelianGroupBackend(make_group(factors))
    except (ValueError, MalformedGroupError, DiscriminantError) as exc:
        raise InputError(f"bad group {text!r}: {exc}") from None


def _parse_element(text: str, backend):
    from .class_group import QuadForm, reduce
    from .group_core import element

    try:
        coords = [int(x) for x in text.strip("[]() ").split(",")]
        if backend.kind == "abstract":
            return element(backend.spec, coords)
        if len(coords) != 3:
            raise ValueError("a form needs three coefficients a,b,c")
        form = reduce(QuadForm(*coords))
        if form.discriminant != backend.ctx.discriminant:
            raise ValueError(f"form has discriminant {form.discriminant}")
        return form
    except (ValueError, TypeError) as exc:
        raise InputError(f"bad element {text!r}: {exc}") from None


def cmd_solve(args, out: Outputs) -> dict:
    from .collision_search import CollisionSearchSolver, NonGeneratingSetError, _element_json
    from .rng import SplitMix64, derive_seed

    backend = _parse_group(args.group)
    solver = CollisionSearchSolver(r=args.r, w=args.w, theta=args.theta, walkers=args.walkers,
                                   random_state=args.seed, threads=args.threads, max_nodes=args.max_nodes)
    try:
        solver.fit(backend)
    except (ValueError, NonGeneratingSetError) as exc:
        raise InputError(str(exc)) from None
    rng = SplitMix64(derive_seed(args.seed, 1 << 41))
    x0 = _parse_element(args.x0, backend) if args.x0 else backend.random_element(rng)
    x1 = _parse_element(args.x1, backend) if args.x1 else backend.act(backend.random_element(rng), x0)
    report = solver.solve(x0, x1)
    doc = {
        "group": backend.describe(),
        "group_order": backend.order,
        "x0": _element_json(x0),
        "x1": _element_json(x1),
        "supporting_set": [_element_json(h) for h in solver.supporting_set_],
        "r": args.r, "w": str(args.w), "theta": str(solver.params_.theta),
        "c_max": solver.params_.c_max, "walkers": args.walkers, "seed": args.seed,
        "report": report.to_dict(),
    }
    out.add(args.out, _dumps(doc))
    return {"wall_time": report.wall_time}


def _timings(args):
    from .cost_model import TimingTableError, load_timing_table

    try:
        table = load_timing_table(args.timings)
    except (OSError, TimingTableError) as exc:
        raise InputError(str(exc)) from None
    if getattr(args, "time_scale", None):
        table = table.scaled(args.time_scale)
    return table


def cmd_predict(args, out: Outputs) -> dict:
    from . import theory
    from .walk_engine import auto_modulus, build_partition_plan

    if args.n_bits is not None:
        n = 1 << args.n_bits
    elif args.n is not None:
        n = args.n
    else:
        raise InputError("give --n or --n-bits")
    if n < 2:
        raise InputError("group order must be at least 2")
    try:
        plan = build_partition_plan(args.r, args.w)
        theta = Fraction(1, auto_modulus(n)) if args.theta == "auto" else check_theta(args.theta)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    est = theory.estimates(n, theta, plan.probabilities)
    doc = est.to_dict()
    doc["w"] = str(plan.w)
    doc["sigma"] = args.sigma
    doc["E_L"] = args.sigma * est.E_L_pi
    mont = theory.montenegro_lambda(n, plan.probabilities)
    doc["montenegro_diverges"] = mont.diverges
    if args.timings is not None or args.with_runtime:
        from .cost_model import SECONDS_PER_YEAR, MissingTimingError, average_hop_seconds, \
            enumerate_supporting_sets

        table = _timings(args)
        try:
            pt = average_hop_seconds(plan, enumerate_supporting_sets(args.r), table)
        except (ValueError, MissingTimingError) as exc:
            raise InputError(f"cannot average hop costs: {exc}") from None
        secs = args.sigma * est.E_alpha_pi * pt
        doc["mean_hop_seconds"] = pt
        doc["predicted_seconds"] = secs
        doc["predicted_years"] = secs / SECONDS_PER_YEAR
    out.add(args.out, _dumps(doc))
    return {}


def cmd_table1(args, out: Outputs) -> dict:
    import csv
    import io

    from .theory import table1

    n = 1 << args.n_bits if args.n_bits is not None else args.n
    rows = table1(n=n, theta=check_theta(args.theta))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["w", "r", "d", "E_L_pi", "Stdev_L_pi"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    out.add(args.out, buf.getvalue())
    return {}


def cmd_experiment(args, out: Outputs) -> dict:
    from .experiment import ExperimentConfig, export_table, run_batch

    batches = []
    try:
        for r in args.r:
            for w in args.w:
                cfg = ExperimentConfig(m=args.m, r=r, w=w, k=args.k, seed=args.seed,
                                       theta=None if args.theta == "auto" else args.theta,
                                       backend=args.backend)
                batches.append(run_batch(cfg, threads=args.threads))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out.add(args.out, export_table(batches))
    if args.summary:
        out.add(args.summary, _dumps([b.to_dict() for b in batches]))
    return {}


def cmd_optimize(args, out: Outputs) -> dict:
    from .cost_model import MeasuredMeans, MissingTimingError, SigmaProvider, runtime_grid
    from .walk_engine import auto_modulus

    n = 1 << (args.n_bits // 2)
    theta = Fraction(1, auto_modulus(n)) if args.theta == "auto" else check_theta(args.theta)
    table = _timings(args)
    try:
        means = MeasuredMeans.load(args.means)
        sigma = SigmaProvider(means, mode=args.sigma_mode, target_m=n.bit_length() - 1)
        grid = runtime_grid(n, theta, args.r, args.w, sigma, table)
    except (ValueError, MissingTimingError, OSError, KeyError) as exc:
        raise InputError(str(exc)) from None
    out.add(args.out, grid.to_csv())
    best = grid.best
    ref = (16, Fraction(1))
    summary = {
        "n_bits_field": args.n_bits, "group_order_bits": n.bit_length() - 1, "theta": str(theta),
        "sigma_mode": args.sigma_mode,
        "best": {"r": best[0], "w": str(best[1]), "years": grid.cells[best]},
        "reference": {"r": 16, "w": "1", "years": grid.cells.get(ref)},
        "speedup": grid.speedup(ref) if ref in grid.cells else None,
    }
    out.add(args.summary, _dumps(summary))
    return {}


def cmd_ratio(args, out: Outputs) -> dict:
    import math

    from .cost_model import improvement_ratio

    if args.q_ln is not None:
        q_ln = args.q_ln
    else:
        q_ln = args.q_bits * math.log(2)
    if q_ln <= 0:
        raise InputError("ln q must be positive")
    res = improvement_ratio(q_ln, args.uniform_el, args.skewed_el)
    doc = {
        "ln_q": q_ln, "ratio": res.value, "asymptote": res.asymptote,
        "uniform_constant": res.uniform_constant, "skewed_constant": res.skewed_constant,
        "prefactor": res.prefactor,
    }
    out.add(args.out, _dumps(doc))
    return {}


def cmd_replay(args, out: Outputs) -> dict:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    outdir = Path(args.out_dir)
    for flag in ("--out", "--summary"):
        if flag in argv:
            i = argv.index(flag)
            argv[i + 1] = str(outdir / Path(argv[i + 1]).name)
    sub = build_parser().parse_args(argv)
    return _run(sub, argv, out)


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="walkforge", description="Collision search for group action inverse problems.")
    p.add_argument("--version", action="version", version=f"walkforge {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("solve", help="solve one instance g * x0 = x1")
    s.add_argument("--group", required=True, help="invariant factors like [1009] or 360,12, or a negative discriminant")
    s.add_argument("--r", type=int, default=16, help="number of partitions")
    s.add_argument("--w", type=_rational, default=Fraction(1), help="probability ratio in (0, 1]")
    s.add_argument("--theta", type=_theta, default="auto", help="distinguished probability or 'auto' (n^-1/4)")
    s.add_argument("--walkers", type=int, default=1, help="walkers per side (t)")
    s.add_argument("--seed", type=_u64, default=0, help=f"master seed (overridden by ${SEED_ENV})")
    s.add_argument("--x0", help="start element (coords, or a,b,c for a form); random if omitted")
    s.add_argument("--x1", help="target element; random if omitted")
    s.add_argument("--max-nodes", type=_int_expr, default=None, help="node budget before giving up")
    s.add_argument("--threads", type=int, default=1,
                   help="worker threads; 1 is the deterministic lockstep mode")
    s.add_argument("--out", help="JSON report path (stdout if omitted)")
    s.set_defaults(func=cmd_solve, seeded=True)

    s = sub.add_parser("predict", help="closed-form estimates as JSON")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--n", type=_int_expr, help="group order, e.g. 2^80")
    g.add_argument("--n-bits", type=int, help="group order as a power of two")
    s.add_argument("--r", type=int, required=True)
    s.add_argument("--w", type=_rational, default=Fraction(1))
    s.add_argument("--theta", type=_theta, default="auto")
    s.add_argument("--sigma", type=float, default=1.0, help="practice-to-theory ratio")
    s.add_argument("--timings", help="ell,seconds CSV for a runtime prediction")
    s.add_argument("--with-runtime", action="store_true", help="predict runtime with the bundled timings")
    s.add_argument("--time-scale", type=float, help="multiply all timings by this factor")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict, seeded=False)

    s = sub.add_parser("table1", help="d, E(L_pi), Stdev(L_pi) grid as CSV")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--n", type=_int_expr, default=1 << 80)
    g.add_argument("--n-bits", type=int)
    s.add_argument("--theta", type=_rational, default=Fraction(1, 1 << 20))
    s.add_argument("--out")
    s.set_defaults(func=cmd_table1, seeded=False)

    s = sub.add_parser("experiment", help="batch runs on random groups, CSV of L statistics")
    s.add_argument("--m", type=int, required=True, help="bit size class: n in (2^(m-1), 2^m]")
    s.add_argument("--r", type=_int_range, required=True, help="r, list or range a..b")
    s.add_argument("--w", type=_rational_list, default=[Fraction(1)], help="comma-separated ratios")
    s.add_argument("--k", type=int, required=True, help="runs per cell")
    s.add_argument("--theta", type=_theta, default="auto")
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--backend", choices=["abstract", "classgroup"], default="abstract")
    s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    s.add_argument("--out", help="CSV path (stdout if omitted)")
    s.add_argument("--summary", help="optional JSON with full batch statistics")
    s.set_defaults(func=cmd_experiment, seeded=True)

    s = sub.add_parser("optimize", help="expected-years grid over (r, w) for a class-group instance")
    s.add_argument("--n-bits", type=int, default=160, help="field size in bits; group order is 2^(bits/2)")
    s.add_argument("--r", type=_int_range, default=list(range(4, 17)))
    s.add_argument("--w", type=_rational_list, default=[Fraction(1), Fraction(3, 4), Fraction(1, 2),
                                                        Fraction(1, 3), Fraction(1, 4)])
    s.add_argument("--theta", type=_theta, default="auto")
    s.add_argument("--timings", help="ell,seconds CSV (bundled 160-bit table if omitted)")
    s.add_argument("--time-scale", type=float, help="multiply all timings by this factor")
    s.add_argument("--means", help="w,r,m,mean_L CSV of measured means (bundled if omitted)")
    s.add_argument("--sigma-mode", choices=["constant", "linear"], default="constant")
    s.add_argument("--out", help="grid CSV path (stdout if omitted)")
    s.add_argument("--summary", help="JSON summary path (stdout if omitted)")
    s.set_defaults(func=cmd_optimize, seeded=False)

    s = sub.add_parser("ratio", help="asymptotic speedup of (9, 1/3) over (16, 1)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--q-bits", type=float, default=160.0)
    g.add_argument("--q-ln", type=float)
    s.add_argument("--uniform-el", type=float, default=1.836, help="E(L) for 16 equal partitions")
    s.add_argument("--skewed-el", type=float, default=3.023, help="E(L) for r=9, w=1/3")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ratio, seeded=False)

    s = sub.add_parser("replay", help="re-run a manifest, writing artifacts into a directory")
    s.add_argument("manifest")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_replay, seeded=False)
    return p


def _params(args) -> dict:
    skip = {"func", "seeded", "verbose", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _run(args, argv: list[str], out: Outputs) -> dict:
    if args.func is cmd_replay:
        return args.func(args, out)
    started = _now()
    extra = args.func(args, out)
    finished = _now()
    inputs = {}
    for attr in ("timings", "means"):
        path = getattr(args, attr, None)
        if path:
            inputs[path] = _digest(path)
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "params": _params(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": inputs,
        "started": started,
        "finished": finished,
    }
    manifest.update(extra)
    return manifest


def _normalized_argv(args, argv: list[str]) -> list[str]:
    """argv with the effective seed spelled out, so a manifest replays without the environment."""
    argv = list(argv)
    if getattr(args, "seeded", False):
        if "--seed" in argv:
            argv[argv.index("--seed") + 1] = str(args.seed)
        else:
            argv += ["--seed", str(args.seed)]
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seeded", False) and os.environ.get(SEED_ENV):
        try:
            args.seed = _u64(os.environ[SEED_ENV])
        except argparse.ArgumentTypeError as exc:
            print(f"walkforge: bad ${SEED_ENV}: {exc}", file=sys.stderr)
            return EXIT_INPUT
    if args.command != "replay":
        argv = _normalized_argv(args, argv[argv.index(args.command):])

    from .collision_search import SolveBudgetExceeded

    out = Outputs()
    try:
        manifest = _run(args, argv, out)
        written = out.commit()
    except SolveBudgetExceeded as exc:
        print(f"walkforge: {exc}", file=sys.stderr)
        if exc.report is not None:
            sys.stderr.write(_dumps({"partial": exc.report.to_dict()}))
        return EXIT_BUDGET
    except (InputError, OSError) as exc:
        print(f"walkforge: {exc}", file=sys.stderr)
        return EXIT_INPUT
    manifest["artifacts"] = written
    target = next((Path(e["path"]) for e in written), None)
    text = _dumps(manifest)
    if target is not None:
        mpath = target.with_name(target.name + ".manifest.json")
        mpath.write_text(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
