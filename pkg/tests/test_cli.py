import json
import os

import numpy as np
import pytest

from opbw.cli import main


def test_env_dump_and_inspect(tmp_path):
    out = str(tmp_path / "envout")
    rc = main(["env", "--d", "1", "--p", "1.0", "--half-width", "8",
               "--horizon", "8", "--steps", "0", "--seed", "3", "--out", out])
    assert rc == 0
    path = os.path.join(out, "env_r0.bin")
    assert os.path.exists(path)
    summary = json.load(open(os.path.join(out, "env_r0_summary.json")))
    assert summary["open_fraction"] == 1.0
    rc = main(["env", "--inspect", path, "--out", out])
    assert rc == 0


def test_env_roundtrip_bits(tmp_path):
    out = str(tmp_path / "e2")
    main(["env", "--d", "1", "--p", "0.7", "--half-width", "16",
          "--horizon", "16", "--steps", "0", "--seed", "5", "--out", out])
    from opbw.env import load_environment
    from opbw import SimConfig, generate_environment
    env = load_environment(os.path.join(out, "env_r0.bin"))
    ref = generate_environment(SimConfig(d=1, p=0.7, L=16, H=16, walk_steps=0,
                                         base_seed=5), 0)
    assert np.array_equal(env.omega_bits, ref.omega_bits)


def test_walk_command_row_counts(tmp_path):
    out = str(tmp_path / "w")
    rc = main(["walk", "--d", "1", "--p", "1.0", "--steps", "10",
               "--replicas", "3", "--seed", "1", "--out", out])
    assert rc == 0
    lines = open(os.path.join(out, "regenerations.csv")).read().strip().splitlines()
    # p = 1: a regeneration at every step, 3 walks x 10 steps + header
    assert len(lines) == 1 + 30
    walks = open(os.path.join(out, "walks.csv")).read().strip().splitlines()
    assert len(walks) == 1 + 3
    assert walks[1].split(",")[3] == "10"  # n_regens column


def test_verify_unknown_experiment():
    assert main(["verify", "--experiment", "nope"]) == 2


def test_verify_lln_small(tmp_path):
    out = str(tmp_path / "v")
    rc = main(["verify", "--experiment", "lln", "--p", "1.0", "--d", "1",
               "--steps", "64", "--replicas", "200", "--seed", "11",
               "--out", out])
    assert rc == 0
    res = json.load(open(os.path.join(out, "results.json")))
    assert res["passed"] is True
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert res["manifest_hash"] == man["manifest_hash"]
    first_csv_line = open(os.path.join(out, "xn.csv")).readline()
    assert man["manifest_hash"] in first_csv_line


def test_opbw_out_env_var_overrides(tmp_path, monkeypatch):
    out_flag = str(tmp_path / "flagdir")
    out_env = str(tmp_path / "envdir")
    monkeypatch.setenv("OPBW_OUT", out_env)
    rc = main(["env", "--d", "1", "--p", "1.0", "--half-width", "4",
               "--horizon", "4", "--steps", "0", "--out", out_flag])
    assert rc == 0
    assert os.path.exists(os.path.join(out_env, "env_r0.bin"))
    assert not os.path.exists(out_flag)


def test_determinism_across_jobs(tmp_path):
    """Same seed, different --jobs: results.json must be bit-identical."""
    outs = []
    for jobs in ("1", "2"):
        out = str(tmp_path / f"j{jobs}")
        rc = main(["verify", "--experiment", "lln", "--p", "0.8", "--d", "1",
                   "--steps", "80", "--replicas", "60", "--seed", "21",
                   "--jobs", jobs, "--out", out])
        assert rc == 0
        outs.append(open(os.path.join(out, "results.json"), "rb").read())
    assert outs[0] == outs[1]


def test_config_file_and_flag_precedence(tmp_path):
    cfg_path = str(tmp_path / "run.cfg")
    with open(cfg_path, "w") as f:
        f.write("# sample config\n")
        f.write("d = 1\np = 0.9\nhorizon = 16\nsteps = 8\nbase_seed = 4\n")
        f.write("neighborhood = pm1\n")
    out = str(tmp_path / "c")
    rc = main(["env", "--config", cfg_path, "--p", "1.0", "--half-width", "8",
               "--out", out])
    assert rc == 0
    summary = json.load(open(os.path.join(out, "env_r0_summary.json")))
    assert summary["p"] == 1.0  # flag wins over file
