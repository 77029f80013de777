"""Command-line entry point: ``besovmap <command> [--config FILE] ...``.

Exit codes: 0 success, 1 invalid input, 2 experiment failure (with ``--strict``
or when a verification check fails).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config, read_json, write_csv, write_json
from .consistency import CSV_HEADER as CONSISTENCY_HEADER
from .consistency import ConsistencySchedule, consistency_summary, penalty_bound, run_consistency
from .forward import Observation
from .lab import CSV_HEADER, anderson_check, om_ratio_experiment, rn_limit_experiment
from .prior import CoefficientField, log_rn_derivative, log_rn_via_logderivative, sample_prior
from .solver import solve_map


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults to the bundled config")

    p = _Parser(prog="besovmap", description="MAP estimation and small-ball checks for Besov priors")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("sample-prior", parents=[common], help="draw from the prior")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--out", required=True)

    sm = sub.add_parser("solve-map", parents=[common], help="compute the MAP estimate")
    sm.add_argument("--data", required=True)
    sm.add_argument("--out", required=True)
    sm.add_argument("--trace", action="store_true")
    sm.add_argument("--strict", action="store_true")

    ver = sub.add_parser("verify", help="Monte Carlo verification experiments")
    vsub = ver.add_subparsers(dest="check", required=True, parser_class=_Parser)

    om = vsub.add_parser("om-ratio", parents=[common])
    om.add_argument("--z1", required=True)
    om.add_argument("--z2", required=True)
    om.add_argument("--data", help="observation file; omit to use the prior")
    _lab_flags(om)

    rn = vsub.add_parser("rn", parents=[common])
    rn.add_argument("--u", required=True)
    rn.add_argument("--h", required=True)
    _lab_flags(rn)

    an = vsub.add_parser("anderson", parents=[common])
    an.add_argument("--eps", type=float, required=True)
    an.add_argument("--shifts", required=True)
    an.add_argument("--samples", type=int, required=True)
    an.add_argument("--seed", type=int, required=True)
    an.add_argument("--out", required=True)

    ld = vsub.add_parser("logderivative", parents=[common])
    ld.add_argument("--u", required=True)
    ld.add_argument("--h", required=True)

    cs = sub.add_parser("consistency", parents=[common], help="repeated-data consistency run")
    cs.add_argument("--truth", required=True)
    cs.add_argument("--schedule", type=_ints, default=[1, 4, 16, 64, 256, 1024])
    cs.add_argument("--replicates", type=int, default=20)
    cs.add_argument("--seed", type=int, required=True)
    cs.add_argument("--out", required=True)
    cs.add_argument("--strict", action="store_true")

    sub.add_parser("info", parents=[common], help="print the resolved config and prior weights")
    return p


def _lab_flags(p):
    p.add_argument("--eps", type=_floats, help="comma-separated radii; defaults to the config's eps_grid")
    p.add_argument("--samples", type=int, help="defaults to the config's n_samples")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)


def _field(path, prior) -> CoefficientField:
    return CoefficientField.from_json(read_json(path), prior)


def _observation(path, problem) -> Observation:
    obj = read_json(path)
    if "ys" in obj:
        return Observation.pooled(obj["ys"], problem)
    if "y" not in obj:
        raise ConfigError(f"{path}: expected key 'y' or 'ys'")
    return Observation(obj["y"], problem, n=int(obj.get("n", 1)))


def _meta(cfg, **extra) -> dict:
    return {"config_hash": cfg.hash, **extra}


def _write_table(out, rows, meta) -> None:
    write_csv(out, CSV_HEADER, [r.as_csv() for r in rows])
    meta = dict(meta, flags=[r.flags for r in rows])
    write_json(str(out) + ".json", meta)


def cmd_sample_prior(args, cfg) -> int:
    draws = sample_prior(cfg.prior, args.seed, args.count)
    samples = [CoefficientField(row, cfg.prior).to_json() for row in draws]
    write_json(args.out, _meta(cfg, seed=args.seed, count=args.count, samples=samples))
    return 0


def cmd_solve_map(args, cfg) -> int:
    obs = _observation(args.data, cfg.problem())
    res = solve_map(obs, cfg.prior, cfg.solver)
    write_json(args.out, _meta(cfg, seed=None, **res.to_json(trace=args.trace)))
    if not res.converged:
        print(f"solve-map: not converged after {res.iterations} iterations "
              f"(residual {res.optimality_residual:.3e})", file=sys.stderr)
        return 2 if args.strict else 0
    return 0


def _lab_settings(args, cfg):
    return (args.eps if args.eps else cfg.lab.eps_grid), (args.samples or cfg.lab.n_samples)


def cmd_om_ratio(args, cfg) -> int:
    eps, n = _lab_settings(args, cfg)
    z1, z2 = _field(args.z1, cfg.prior), _field(args.z2, cfg.prior)
    obs = _observation(args.data, cfg.problem()) if args.data else None
    rows = om_ratio_experiment(z1, z2, eps, cfg.prior, obs=obs, n_samples=n, seed=args.seed)
    _write_table(args.out, rows, _meta(cfg, experiment="om-ratio", seed=args.seed, n_samples=n,
                                       measure="posterior" if obs else "prior"))
    return 0


def cmd_rn(args, cfg) -> int:
    eps, n = _lab_settings(args, cfg)
    u, h = _field(args.u, cfg.prior), _field(args.h, cfg.prior)
    rows = rn_limit_experiment(u, h, eps, cfg.prior, n_samples=n, seed=args.seed)
    _write_table(args.out, rows, _meta(cfg, experiment="rn", seed=args.seed, n_samples=n))
    return 0


def cmd_anderson(args, cfg) -> int:
    obj = read_json(args.shifts)
    items = obj["shifts"] if isinstance(obj, dict) else obj
    shifts = [CoefficientField.from_json(x, cfg.prior) for x in items]
    rows = anderson_check(args.eps, cfg.prior, shifts, args.samples, args.seed)
    table = [[args.eps, r.shifted, r.diff_se, r.centered, (r.shifted - r.centered) / r.centered
              if r.centered else math.nan] for r in rows]
    write_csv(args.out, CSV_HEADER, table)
    passed = [r.passed for r in rows]
    write_json(str(args.out) + ".json", _meta(cfg, experiment="anderson", seed=args.seed,
                                             n_samples=args.samples, passed=passed, all_passed=all(passed)))
    return 0 if all(passed) else 2


def cmd_logderivative(args, cfg) -> int:
    u, h = _field(args.u, cfg.prior), _field(args.h, cfg.prior)
    direct = float(log_rn_derivative(h, u, cfg.prior))
    integral = log_rn_via_logderivative(h, u, cfg.prior)
    print(f"log R_h(u) direct:            {direct!r}")
    print(f"log R_h(u) via log-derivative: {integral!r}")
    diff = abs(direct - integral)
    print(f"absolute difference:           {diff!r}")
    return 0 if diff <= 1e-12 * max(1.0, abs(direct)) else 2


def cmd_consistency(args, cfg) -> int:
    truth = _field(args.truth, cfg.prior)
    problem = cfg.problem()
    schedule = ConsistencySchedule(tuple(args.schedule), args.replicates, args.seed)
    rows = run_consistency(truth, problem, cfg.prior, schedule, cfg.solver)
    write_csv(args.out, CONSISTENCY_HEADER, [r.as_csv() for r in rows])
    summary = consistency_summary(rows).to_json()
    summary["penalty_bound"] = penalty_bound(truth, problem, cfg.prior)
    write_json(str(args.out) + ".json", _meta(cfg, experiment="consistency", seed=args.seed,
                                             replicates=args.replicates, summary=summary))
    if not all(r.converged for r in rows):
        print("consistency: some inner solves did not converge", file=sys.stderr)
        return 2 if args.strict else 0
    return 0


def cmd_info(args, cfg) -> int:
    info = {
        "version": __version__,
        "config_hash": cfg.hash,
        "config": cfg.normalized(),
        "alpha": cfg.prior.alpha[:10].tolist(),
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


COMMANDS = {
    "sample-prior": cmd_sample_prior,
    "solve-map": cmd_solve_map,
    "consistency": cmd_consistency,
    "info": cmd_info,
    ("verify", "om-ratio"): cmd_om_ratio,
    ("verify", "rn"): cmd_rn,
    ("verify", "anderson"): cmd_anderson,
    ("verify", "logderivative"): cmd_logderivative,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        key = (args.command, args.check) if args.command == "verify" else args.command
        return COMMANDS[key](args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"besovmap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
