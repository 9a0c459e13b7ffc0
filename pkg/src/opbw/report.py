"""Experiment reports and run manifests.

results.json carries only deterministic content (bit-identical across
re-runs with the same seed, regardless of --jobs); wall-clock and other
environment-dependent facts live in manifest.json.  Both reference the
manifest hash, computed over the deterministic core, so outputs are
traceable to (seed set, config)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import subprocess
import time
from dataclasses import dataclass, field

from . import __version__
from .config import CapacityLaw, SimConfig


def _sanitize(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def config_echo(cfg: SimConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["U_offsets"] = [list(u) for u in cfg.U_offsets]
    if cfg.capacity_law is not None:
        d["capacity_law"] = {"values": list(cfg.capacity_law.values),
                             "probs": list(cfg.capacity_law.probs)}
    return d


def metric(estimate=None, se=None, ci=None, pvalue=None, n=None, passed=None, **extra):
    out = {"estimate": estimate, "se": se, "ci": ci, "pvalue": pvalue,
           "n": n, "passed": passed}
    out.update(extra)
    return _sanitize(out)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    seed: int
    metrics: dict
    passed: bool
    csv_tables: dict = field(default_factory=dict)  # name -> (header, rows)
    runtime_s: float = 0.0

    def core(self) -> dict:
        return _sanitize({
            "experiment": self.experiment,
            "config": self.config,
            "seed": self.seed,
            "metrics": self.metrics,
            "passed": self.passed,
            "version": __version__,
        })


def build_fingerprint() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(__file__)).stdout.strip()
    except Exception:
        rev = ""
    return f"opbw-{__version__}" + (f"+{rev}" if rev else "")


def manifest_hash(core: dict) -> str:
    blob = json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_manifest(outdir: str, experiment: str, cfg_echo: dict, seed: int,
                   extra: dict | None = None) -> str:
    """Written before results; returns the deterministic manifest hash."""
    os.makedirs(outdir, exist_ok=True)
    core = _sanitize({"experiment": experiment, "config": cfg_echo, "seed": seed})
    h = manifest_hash(core)
    man = dict(core)
    man["manifest_hash"] = h
    man["fingerprint"] = build_fingerprint()
    man["started_unix"] = time.time()
    man["outdir"] = os.path.abspath(outdir)
    if extra:
        man.update(_sanitize(extra))
    with open(os.path.join(outdir, "manifest.json"), "w") as f:
        json.dump(man, f, indent=1, sort_keys=True)
    return h


def write_report(report: ExperimentReport, outdir: str, mhash: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    core = report.core()
    core["manifest_hash"] = mhash
    path = os.path.join(outdir, "results.json")
    with open(path, "w") as f:
        json.dump(core, f, indent=1, sort_keys=True)
    for name, (header, rows) in report.csv_tables.items():
        with open(os.path.join(outdir, f"{name}.csv"), "w") as f:
            f.write("# manifest=" + mhash + "\n")
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(str(v) for v in row) + "\n")
    # wall clock belongs to the manifest side, appended after the results
    man_path = os.path.join(outdir, "manifest.json")
    if os.path.exists(man_path):
        with open(man_path) as f:
            man = json.load(f)
        man["runtime_s"] = report.runtime_s
        with open(man_path, "w") as f:
            json.dump(man, f, indent=1, sort_keys=True)
    return path
