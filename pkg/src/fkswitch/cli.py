"""Command-line front end.

    fkswitch validate     --config run.ini
    fkswitch price        --config run.ini --t 0 --x 0 --regime 1
    fkswitch picard-trace --config run.ini --out trace.csv
    fkswitch mc           --config run.ini --paths 1000000 --seed 7
    fkswitch pde          --config run.ini --out surface.csv
    fkswitch compare      --config run.ini

Regimes are numbered from 1 on the command line and in CSV files. Exit codes:
0 success, 1 configuration or model error, 2 numerical failure, 3 the
methods in ``compare`` disagree.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import math
import sys
import warnings
from dataclasses import replace

import numpy as np

from .analytics import supermartingale_certificate
from .config import RunConfig, load_config
from .errors import FkSwitchError, ModelError, NumericalError
from .fixed_point import contraction_factor, picard_solve, price
from .grid import GridSpec, write_surface_csv
from .model import PricingQuery, warn_if_uncertified
from .monte_carlo import dump_paths, mc_price
from .pde import pde_price, pde_solve, write_pde_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DISAGREE = 0, 1, 2, 3
PDE_WIDTH = 8.0
PDE_REL_BUDGET = 2e-3
MC_SIGMAS = 3.0
STORED_PDE_LEVELS = 40

SUBCOMMANDS = ("validate", "price", "picard-trace", "mc", "pde", "compare")
NEEDS_QUERY = {"price", "mc", "pde", "compare"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="INI run configuration")
    common.add_argument("--t", type=float, help="query time")
    common.add_argument("--x", type=float, help="query log-price")
    common.add_argument("--regime", type=int, help="query regime (1-based)")
    common.add_argument("--tol", type=float, help="a-posteriori stopping tolerance")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--paths", type=int, help="Monte Carlo paths (even)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--nt", type=int, help="time nodes of the solver grid")
    common.add_argument("--nx", type=int, help="space nodes of the solver grid")
    common.add_argument("--xmin", type=float)
    common.add_argument("--xmax", type=float)
    common.add_argument("--timings", action="store_true",
                        help="write wall-clock seconds (otherwise 0, so reruns are byte-identical)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fkswitch", description="Regime-switching Feynman-Kac pricing.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check model, generator and dampening certificate")
    sub.add_parser("price", parents=[common], help="Picard price and error bound at the query")
    p = sub.add_parser("picard-trace", parents=[common], help="convergence trace CSV")
    p.add_argument("--surface", metavar="PATH", help="also write the solution surface CSV")
    p = sub.add_parser("mc", parents=[common], help="Monte Carlo estimate CSV")
    p.add_argument("--dump-paths", metavar="PATH", dest="dump_paths", help="per-path debug CSV")
    sub.add_parser("pde", parents=[common], help="finite-difference surface CSV")
    sub.add_parser("compare", parents=[common], help="Picard vs Monte Carlo vs PDE")
    return parser


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Command-line values replace the matching config keys."""
    keys = ("tol", "max_iter", "paths", "seed", "nt", "nx", "xmin", "xmax")
    changes = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    settings = replace(cfg.settings, **changes)
    q = cfg.query or PricingQuery(0.0, 0.0, 0)
    query = cfg.query
    if any(v is not None for v in (args.t, args.x, args.regime)) or query is None:
        query = PricingQuery(
            q.t if args.t is None else args.t,
            q.x if args.x is None else args.x,
            q.regime if args.regime is None else args.regime - 1,
        )
    return replace(cfg, settings=settings, query=query)


def solver_grid(cfg: RunConfig) -> GridSpec:
    s, q, model = cfg.settings, cfg.query, cfg.model
    focus = None
    if s.x_grid == "clustered" or (s.x_grid == "auto" and cfg.payoff.kind == "call"):
        focus = math.log(cfg.payoff.strike) if cfg.payoff.kind == "call" else q.x
    return GridSpec.default(model, x0=q.x, nt=s.nt, nx=s.nx, t_query=q.t,
                            xmin=s.xmin, xmax=s.xmax, focus=focus)


def pde_range(cfg: RunConfig) -> tuple[float, float]:
    s, q = cfg.settings, cfg.query
    half = PDE_WIDTH * cfg.model.stationary_sd()
    centre = [q.x] + ([math.log(cfg.payoff.strike)] if cfg.payoff.kind == "call" else [])
    lo = min(centre) - half if s.xmin is None else s.xmin
    hi = max(centre) + half if s.xmax is None else s.xmax
    return lo, hi


def _solve(cfg: RunConfig, strict: bool = True):
    warn_if_uncertified(cfg.payoff, cfg.dampening)
    return picard_solve(cfg.model, cfg.payoff, cfg.dampening, solver_grid(cfg),
                        tol=cfg.settings.tol, max_iter=cfg.settings.max_iter, strict=strict)


def _pde(cfg: RunConfig):
    lo, hi = pde_range(cfg)
    s = cfg.settings
    steps = max(1, round(cfg.model.horizon / s.pde_dt))
    return pde_solve(cfg.model, cfg.payoff, lo, hi, dt=s.pde_dt, dx=s.pde_dx,
                     store_every=max(1, steps // STORED_PDE_LEVELS))


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_validate(cfg: RunConfig, args, out) -> int:
    model = cfg.model
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["check", "regime", "value", "status"])
    w.writerow(["generator_rows", "", _fmt(np.max(np.abs(model.generator.rates.sum(axis=1)))), "ok"])
    w.writerow(["rho", "", _fmt(contraction_factor(model.generator, model.horizon)), "ok"])
    residual = model.relation_residual()
    failed = False
    for i in range(model.n_regimes):
        w.writerow(["theta_relation", i + 1, _fmt(abs(residual[i])),
                    "ok" if abs(residual[i]) <= 1e-12 else "unchecked"])
    if cfg.dampening.kind == "ou_call":
        for i in range(model.n_regimes):
            rep = supermartingale_certificate(model, i, raise_on_fail=False)
            w.writerow(["certificate", i + 1, _fmt(rep.max_violation), "pass" if rep.passed else "fail"])
            failed |= not rep.passed
    if failed:
        print("CertificateFailed: dampening supermartingale check violated", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_price(cfg: RunConfig, args, out) -> int:
    sol, rep = _solve(cfg)
    v = price(sol, cfg.dampening, cfg.query)
    out.write(f"{_fmt(v)},{_fmt(rep.a_posteriori)}\n")
    return EXIT_OK


def cmd_trace(cfg: RunConfig, args, out) -> int:
    sol, rep = _solve(cfg, strict=False)
    rep.write_csv(out, timings=args.timings)
    if args.surface:
        with open(args.surface, "w", newline="", encoding="utf-8") as fh:
            write_surface_csv(fh, sol, cfg.dampening)
    return EXIT_OK


def cmd_mc(cfg: RunConfig, args, out) -> int:
    s = cfg.settings
    est = mc_price(cfg.model, cfg.payoff, cfg.query, s.paths, s.seed)
    est.write_csv(out, timings=args.timings)
    if args.dump_paths:
        with open(args.dump_paths, "w", newline="", encoding="utf-8") as fh:
            dump_paths(cfg.model, cfg.payoff, cfg.query, s.paths, s.seed, fh)
    return EXIT_OK


def cmd_pde(cfg: RunConfig, args, out) -> int:
    write_pde_csv(out, _pde(cfg))
    return EXIT_OK


def compare_rows(cfg: RunConfig) -> tuple[list[list], bool]:
    """Rows ``method, value, error_scale, abs_diff, budget, agree`` and the overall verdict."""
    s = cfg.settings
    sol, rep = _solve(cfg)
    v_fp = price(sol, cfg.dampening, cfg.query)
    bound = rep.a_posteriori
    est = mc_price(cfg.model, cfg.payoff, cfg.query, s.paths, s.seed)
    v_pde = pde_price(_pde(cfg), cfg.query)
    mc_budget = MC_SIGMAS * est.stderr + bound
    pde_budget = bound + PDE_REL_BUDGET * max(1.0, abs(v_fp))
    d_mc, d_pde = abs(v_fp - est.mean), abs(v_fp - v_pde)
    ok_mc, ok_pde = d_mc <= mc_budget, d_pde <= pde_budget
    rows = [
        ["picard", _fmt(v_fp), _fmt(bound), "", "", ""],
        ["mc", _fmt(est.mean), _fmt(est.stderr), _fmt(d_mc), _fmt(mc_budget), "pass" if ok_mc else "fail"],
        ["pde", _fmt(v_pde), "", _fmt(d_pde), _fmt(pde_budget), "pass" if ok_pde else "fail"],
    ]
    return rows, ok_mc and ok_pde


def cmd_compare(cfg: RunConfig, args, out) -> int:
    rows, ok = compare_rows(cfg)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["method", "value", "error_scale", "abs_diff_vs_picard", "budget", "agree"])
    w.writerows(rows)
    if not ok:
        print("Disagreement: at least one method is outside its budget", file=sys.stderr)
        return EXIT_DISAGREE
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "price": cmd_price,
    "picard-trace": cmd_trace,
    "mc": cmd_mc,
    "pde": cmd_pde,
    "compare": cmd_compare,
}


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _report(exc: FkSwitchError) -> None:
    name = type(exc).__name__
    msg = str(exc)
    print(msg if msg.startswith(name) else f"{name}: {msg}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.command in NEEDS_QUERY:
            cfg.query.check(cfg.model)
        with _output(args.out) as out:
            return COMMANDS[args.command](cfg, args, out)
    except ModelError as exc:
        _report(exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        _report(exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
