"""Command-line front end.

Subcommands: `env` generates/dumps/inspects environments, `walk` runs
single-walk replicas and writes regeneration CSVs, `verify` runs a named
verification experiment and exits 0/1 on pass/fail.  The OPBW_OUT
environment variable overrides --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import experiments, rng
from .config import CapacityLaw, ConfigError, SimConfig, config_from_mapping, load_config_file, parse_offsets
from .env import dump_environment, generate_environment, load_environment
from .report import config_echo, write_manifest, write_report


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="base seed (64-bit)")
    p.add_argument("--jobs", type=int, default=1, help="worker count; results do not depend on it")
    p.add_argument("--out", default="out", help="output directory (OPBW_OUT overrides)")
    p.add_argument("--p", type=float, help="site-open probability")
    p.add_argument("--d", type=int, help="spatial dimension")
    p.add_argument("--horizon", type=int, help="time horizon H")
    p.add_argument("--steps", type=int, help="walk steps N")
    p.add_argument("--half-width", type=int, help="explicit box half-width L")
    p.add_argument("--replicas", type=int, help="replica count")
    p.add_argument("--capacity-law", help="const:K | uniform:A..B | pmf:v:p,...")
    p.add_argument("--neighborhood", help="box:R | pm1 | (u1),(u2),...")


def build_config(args) -> SimConfig:
    raw = load_config_file(args.config) if args.config else {}
    cfg = config_from_mapping(raw)
    kwargs = {
        "d": args.d if args.d is not None else cfg.d,
        "p": args.p if args.p is not None else cfg.p,
        "H": args.horizon if args.horizon is not None else cfg.H,
        "base_seed": args.seed if args.seed is not None else cfg.base_seed,
        "walk_steps": args.steps if args.steps is not None else cfg.walk_steps,
        "L": args.half_width if args.half_width is not None else cfg.L,
        "capacity_law": cfg.capacity_law,
        "U_offsets": cfg.U_offsets if (args.d is None or args.d == cfg.d) else None,
    }
    if args.neighborhood:
        kwargs["U_offsets"] = parse_offsets(args.neighborhood, kwargs["d"])
    if args.capacity_law:
        kwargs["capacity_law"] = CapacityLaw.parse(args.capacity_law)
    return SimConfig(**kwargs)


def resolve_out(args) -> str:
    return os.environ.get("OPBW_OUT", args.out)


def cmd_env(args) -> int:
    cfg = build_config(args)
    out = resolve_out(args)
    os.makedirs(out, exist_ok=True)
    if args.inspect:
        env = load_environment(args.inspect)
        summary = {
            "d": env.config.d, "L": env.L, "H": env.H,
            "sites": int(env.omega_bits.size),
            "open_fraction": env.open_fraction(),
            "seed": env.seed,
        }
        print(json.dumps(summary, indent=1))
        return 0
    replica = args.replica
    env = generate_environment(cfg, replica)
    path = os.path.join(out, f"env_r{replica}.bin")
    dump_environment(env, path)
    summary = {
        "path": path, "d": cfg.d, "L": env.L, "H": env.H,
        "p": cfg.p, "seed": env.seed, "replica": replica,
        "sites": int(env.omega_bits.size),
        "open_fraction": env.open_fraction(),
    }
    with open(os.path.join(out, f"env_r{replica}_summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_walk(args) -> int:
    from . import engine
    from .walk import build_record

    cfg = build_config(args)
    out = resolve_out(args)
    os.makedirs(out, exist_ok=True)
    replicas = args.replicas or 1
    n = cfg.walk_steps
    params = engine.EngineParams.from_config(cfg)
    reg_rows = []
    summary_rows = []
    for rep in range(replicas):
        res = engine.conditioned_run(params, rep, [(0,) * cfg.d], [0], n)
        w = res.walkers[0]
        rec = build_record(w.path, w.regen_times, cfg.radius)
        for i in range(rec.count):
            reg_rows.append((rep, i + 1, int(rec.times[i + 1]), int(rec.taus[i]),
                             *rec.Ys[i].astype(int).tolist()))
        summary_rows.append((rep, n, *w.path[min(n, w.achieved)].astype(int).tolist(),
                             rec.count, res.rejections))
    ycols = tuple(f"y{j}" for j in range(cfg.d))
    with open(os.path.join(out, "regenerations.csv"), "w") as f:
        f.write(",".join(("replica", "i", "T_i", "tau_i") + ycols) + "\n")
        for row in reg_rows:
            f.write(",".join(str(v) for v in row) + "\n")
    xcols = tuple(f"x{j}" for j in range(cfg.d))
    with open(os.path.join(out, "walks.csv"), "w") as f:
        f.write(",".join(("replica", "N") + xcols + ("n_regens", "rejections")) + "\n")
        for row in summary_rows:
            f.write(",".join(str(v) for v in row) + "\n")
    print(f"wrote {len(reg_rows)} regeneration rows over {replicas} walks to {out}")
    return 0


def _experiment_kwargs(args, name: str) -> dict:
    kw: dict = {"jobs": args.jobs}
    if args.replicas is not None:
        if name in ("lln", "annealed-clt"):
            kw["replicas"] = args.replicas
        elif name == "quenched-clt":
            kw["env_count"] = args.replicas
        elif name in ("tv-decay",):
            kw["samples"] = args.replicas
        elif name in ("annulus", "height-tail", "pc-scan", "d1-diag"):
            kw["samples"] = args.replicas
        elif name == "sigma-scan":
            kw["per_p_budget"] = args.replicas
        elif name == "tails":
            kw["tau_regs"] = args.replicas
        elif name == "regen-diag":
            kw["target_regs"] = args.replicas
    if args.steps is not None and name in ("lln", "annealed-clt"):
        kw["n"] = args.steps
    return kw


def cmd_verify(args) -> int:
    name = args.experiment
    if name not in experiments.EXPERIMENTS:
        print(f"unknown experiment {name!r}; choose from "
              + ", ".join(sorted(experiments.EXPERIMENTS)), file=sys.stderr)
        return 2
    cfg = build_config(args)
    out = resolve_out(args)
    mhash = write_manifest(out, name, config_echo(cfg), cfg.base_seed,
                           extra={"jobs": args.jobs})
    t0 = time.time()
    report = experiments.EXPERIMENTS[name](cfg, **_experiment_kwargs(args, name))
    report.runtime_s = time.time() - t0
    path = write_report(report, out, mhash)
    failures = [k for k, v in report.metrics.items()
                if isinstance(v, dict) and v.get("passed") is False]
    status = "PASS" if report.passed else "FAIL"
    print(f"{name}: {status} ({path})")
    if failures:
        print("failed metrics: " + ", ".join(failures))
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="opbw",
        description="Monte Carlo toolkit for directed walks on oriented-percolation backbones",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_env = sub.add_parser("env", help="generate, dump or inspect environments")
    _add_common(p_env)
    p_env.add_argument("--replica", type=int, default=0)
    p_env.add_argument("--inspect", help="summarise an existing dump instead")
    p_env.set_defaults(fn=cmd_env)

    p_walk = sub.add_parser("walk", help="run single-walk replicas")
    _add_common(p_walk)
    p_walk.set_defaults(fn=cmd_walk)

    p_ver = sub.add_parser("verify", help="run a named verification experiment")
    _add_common(p_ver)
    p_ver.add_argument("--experiment", required=True,
                       help="|".join(sorted(experiments.EXPERIMENTS)))
    p_ver.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
