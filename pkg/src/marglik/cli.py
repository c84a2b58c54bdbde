"""Command-line front end: enumerate, extreme, scan, estimate, simulate.

Exit codes: 0 success, 2 input error, 3 budget or limit exceeded,
4 identification failure, 5 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .core_tables import (
    DEFAULT_TABLE_LIMIT,
    InvalidMarginsError,
    TableLimitError,
    enumerate_tables,
    parse_margins,
)
from .estimators import (
    FitResult,
    IdentificationError,
    IPFConvergenceError,
    RankDeficientError,
    fisher_scoring,
    goodman,
    independence_fit,
    metric_me,
)
from .extreme_tables import (
    PermutationBudgetError,
    PermutationPair,
    build_extreme,
    enumerate_extremes,
    format_extreme,
)
from .likelihood import dataset_eval, inverse_link
from .scan import DEFAULT_XI, likelihood_scan
from .simulate import TRUE_PI, simulate_units
from .unitsfile import (
    UnitsFileError,
    format_units,
    read_matrix,
    read_truth,
    read_units,
    sidecar_path,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BUDGET = 3
EXIT_IDENT = 4
EXIT_NONCONVERGED = 5

log = logging.getLogger("marglik")


def _num(x: float) -> str:
    return f"{x:.12g}"


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def cmd_enumerate(args) -> int:
    margins = parse_margins(args.margins)
    coll = enumerate_tables(margins, limit=args.limit)
    with _output(args.out) as out:
        out.write(f"{coll.count}\n")
        if not args.count_only:
            for t in coll.tables:
                out.write("\n")
                for row in t:
                    out.write(",".join(map(str, row)) + "\n")
    return EXIT_OK


def cmd_extreme(args) -> int:
    margins = parse_margins(args.margins)
    if args.all:
        tables = enumerate_extremes(margins)
    else:
        try:
            perms = PermutationPair.parse(args.perms)
        except ValueError as exc:
            raise InvalidMarginsError(f"bad permutation literal: {exc}") from None
        R, C = margins.shape
        if len(perms.pi_r) != R or len(perms.pi_c) != C:
            raise InvalidMarginsError("permutation sizes do not match the margins")
        tables = [build_extreme(margins, perms)]
    with _output(args.out) as out:
        for k, z in enumerate(tables):
            if k:
                out.write("\n")
            out.write(f"# perms {z.perms}\n")
            out.write(format_extreme(z) + "\n")
    return EXIT_OK


def cmd_scan(args) -> int:
    margins = parse_margins(args.margins)
    records = likelihood_scan(
        margins,
        xi=args.xi,
        random_mixtures=args.random_mixtures,
        seed=args.seed,
        floor=args.scan_floor,
        limit=args.limit,
    )
    with _output(args.out) as out:
        out.write("index,loglik,kind\n")
        for r in records:
            out.write(f"{r.table_index},{_num(r.loglik)},{r.kind}\n")
    return EXIT_OK


def _goodman_fit(data) -> tuple[FitResult, dict]:
    g = goodman(data)
    params = inverse_link(g.repaired)
    ll, scores = dataset_eval(data, params)
    fit = FitResult(params, g.repaired, ll, 0, True, float(np.abs(scores.total).max()))
    return fit, {"raw": g.raw.tolist(), "clipped_cells": g.clipped_cells}


def cmd_estimate(args) -> int:
    data = read_units(args.units, max_tables=args.max_tables)
    extra: dict = {"method": args.method, "units": data.s}
    if args.method == "ml":
        fit = fisher_scoring(data)
        extra["trace"] = [
            {"iteration": t["iteration"], "loglik": t["loglik"], "score_norm": t["score_norm"], "step": t["step"]}
            for t in fit.trace
        ]
        extra["info_condition"] = fit.info_condition
    elif args.method == "goodman":
        fit, more = _goodman_fit(data)
        extra.update(more)
    else:
        fit = independence_fit(data)

    truth_path = Path(args.truth) if args.truth else sidecar_path(args.units)
    if truth_path.exists():
        truth = read_truth(truth_path)["pi"]
        extra["truth"] = truth.tolist()
        extra["me"] = metric_me(fit.probs, truth, data.s)

    doc = fit.to_json() | extra
    with _output(args.out) as out:
        json.dump(doc, out, indent=2)
        out.write("\n")
    if args.method == "ml" and not fit.converged:
        log.error("Fisher scoring did not converge (max |score| = %.3g)", fit.score_norm)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.pi == "table3":
        pi = TRUE_PI
    else:
        pi = read_matrix(args.pi)
    if pi.shape != (args.R, args.C):
        raise UnitsFileError(f"truth matrix is {pi.shape[0]}x{pi.shape[1]}, expected {args.R}x{args.C}")
    sim = simulate_units(s=args.s, n=args.n, truth=pi, seed=args.seed)
    with _output(args.out) as out:
        out.write(format_units(sim.data))
    sidecar = {
        "pi": sim.truth.tolist(),
        "seed": args.seed,
        "s": args.s,
        "n": args.n,
        "rejections": sim.rejections,
    }
    truth_out = args.truth_out or (sidecar_path(args.out) if args.out not in (None, "-") else None)
    if truth_out is not None:
        Path(truth_out).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    else:
        log.warning("no --out given; truth sidecar not written")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="marglik", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enumerate", help="list all tables with given margins")
    e.add_argument("margins", help='margins literal "r1,r2,.../c1,c2,..."')
    e.add_argument("--limit", type=int, default=DEFAULT_TABLE_LIMIT)
    e.add_argument("--count-only", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_enumerate)

    x = sub.add_parser("extreme", help="extreme tables in permuted layout")
    x.add_argument("margins")
    g = x.add_mutually_exclusive_group(required=True)
    g.add_argument("--perms", help='1-based permutations "3,4,1,2/2,1,3,4"')
    g.add_argument("--all", action="store_true", help="every distinct extreme table")
    x.add_argument("--out")
    x.set_defaults(func=cmd_extreme)

    s = sub.add_parser("scan", help="log-likelihood of every table-derived distribution")
    s.add_argument("margins")
    s.add_argument("--xi", type=float, default=DEFAULT_XI, help="-log(eps) for zero cells")
    s.add_argument("--random-mixtures", type=int, default=0, metavar="K")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--scan-floor", type=float, default=None, help="drop mixtures below this loglik")
    s.add_argument("--limit", type=int, default=DEFAULT_TABLE_LIMIT)
    s.add_argument("--out")
    s.set_defaults(func=cmd_scan)

    m = sub.add_parser("estimate", help="fit shared conditional probabilities")
    m.add_argument("units", help="units CSV file")
    m.add_argument("--method", choices=("ml", "goodman", "independence"), default="ml")
    m.add_argument("--seed", type=int, default=None, help="accepted for symmetry; fits are deterministic")
    m.add_argument("--truth", help="truth sidecar (default: <units>.truth.json if present)")
    m.add_argument("--max-tables", type=int, default=DEFAULT_TABLE_LIMIT)
    m.add_argument("--out")
    m.set_defaults(func=cmd_estimate)

    g = sub.add_parser("simulate", help="simulate unit margins")
    g.add_argument("--s", type=int, default=60)
    g.add_argument("--n", type=int, default=40)
    g.add_argument("--R", type=int, default=3)
    g.add_argument("--C", type=int, default=3)
    g.add_argument("--pi", default="table3", help='"table3" or a JSON/CSV matrix file')
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out")
    g.add_argument("--truth-out", help="truth sidecar path (default: <out>.truth.json)")
    g.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except TableLimitError as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    except PermutationBudgetError as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    except (IdentificationError, RankDeficientError) as exc:
        log.error("%s", exc)
        return EXIT_IDENT
    except IPFConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_NONCONVERGED
    except (InvalidMarginsError, UnitsFileError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
