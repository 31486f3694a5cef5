"""Command line entry point ``estimate``.

Subcommands
-----------
run      sweep ``(eps, N)`` for one problem and write the tables
eoc      recompute the EoC columns of a sweep CSV and print them
kernels  dump a SIAC kernel as JSON

Exit codes: 0 success, 1 failed rows (or EoC mismatch), 2 configuration error.
"""
import argparse
import logging
import sys

from .bspline import SiacKernel, dump_kernel
from .errors import ConfigurationError
from .harness import (ABSENT, COLUMNS, EXTRA_COLUMNS, RunConfig, UNDEFINED, load_config,
                      read_csv, recompute_eocs, run_sweep)

log = logging.getLogger("dgsiac")

EXIT_OK, EXIT_ROWS, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _list(kind):
    def parse(text):
        try:
            return tuple(kind(x) for x in text.replace(",", " ").split())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def build_parser():
    p = _Parser(prog="estimate", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a convergence sweep")
    run.add_argument("--config", help="JSON or key = value file")
    run.add_argument("--full", action="store_true", help="include N = 64 and 128")
    run.add_argument("--problem")
    run.add_argument("--q", type=int)
    run.add_argument("--N", type=_list(int), help="comma separated mesh sizes")
    run.add_argument("--eps", type=_list(float), help="comma separated viscosities")
    run.add_argument("--out", help="output directory")

    eoc = sub.add_parser("eoc", help="recompute EoCs from a sweep CSV")
    eoc.add_argument("csv")

    ker = sub.add_parser("kernels", help="dump a SIAC kernel")
    ker.add_argument("--q", type=int, required=True)
    ker.add_argument("--order", type=int, help="spline order (default q + 1)")
    ker.add_argument("--h", type=float, default=1.0, help="mesh width")
    ker.add_argument("--dump", required=True, help="output JSON path")
    return p


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(problem=args.problem, q=args.q, N=args.N, eps=args.eps,
                             out=args.out, full=True if args.full else None)
    res = run_sweep(cfg, progress=lambda msg: log.info("running %s", msg))
    print(open(res.paths["csv"]).read(), end="")
    for r in res.failures:
        print(f"row eps={r.eps:g} N={r.N}: {r.status}", file=sys.stderr)
    return EXIT_ROWS if res.failures else EXIT_OK


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, str):
        return v
    return f"{v:.3f}"


def _cmd_eoc(args):
    try:
        rows = read_csv(args.csv)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.csv!r}: {exc}") from exc
    bad = 0
    names = dict(COLUMNS + EXTRA_COLUMNS)
    print("eps,N," + ",".join(f"EoC {n}" for n in names.values()))
    table = {}
    for row, key, stored, new in recompute_eocs(rows):
        table.setdefault((row.eps, row.N), {})[key] = new
        if isinstance(stored, float) and isinstance(new, float):
            bad += abs(stored - new) > 1e-6
        elif stored != new and not (stored in (ABSENT, UNDEFINED, "") and new == stored):
            bad += 1
    for (eps, N), vals in table.items():
        print(f"{eps:g},{N}," + ",".join(_fmt(vals[k]) for k in names))
    if bad:
        print(f"{bad} stored EoC entries disagree with the recomputed values", file=sys.stderr)
    return EXIT_ROWS if bad else EXIT_OK


def _cmd_kernels(args):
    if args.q < 1:
        raise ConfigurationError(f"q must be >= 1, got {args.q}")
    order = args.order if args.order is not None else args.q + 1
    if order < 1:
        raise ConfigurationError(f"spline order must be >= 1, got {order}")
    if not args.h > 0:
        raise ConfigurationError(f"mesh width must be positive, got {args.h}")
    dump_kernel(SiacKernel(args.q, order, args.h), args.dump)
    print(args.dump)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "eoc": _cmd_eoc, "kernels": _cmd_kernels}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
