import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from rmv.cli import main
from rmv.config import ConfigError, parse_config

CHAOS = """\
[experiment]
kind = chaos
seed = 42

[domain]
type = box
lo = -1
hi = 1

[coefficients]
name = mean_reverting
theta = 1.0
sigma = 0.3
jump_scale = 0.2

[noise]
intensity = 1.0
marks = two_point

[initial]
kind = gaussian
mean = 0.2
scale = 0.3

[numerics]
T = 1.0
steps = 20
N_list = 4, 8, 16
reps = 3

[output]
dir = unused
"""

SKOROKHOD_CONST = """\
[experiment]
kind = skorokhod
seed = 0

[domain]
type = ball
center = 0, 0
radius = 1

[input]
kind = constant
value = 0.1, 0.2
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cli(tmp_path, kind, text, *extra, out="out"):
    cfg = write(tmp_path, text)
    code = main([kind, "--config", str(cfg), "--out", str(tmp_path / out), *extra])
    man = tmp_path / out / "manifest.json"
    return code, (json.loads(man.read_text()) if man.exists() else None)


class TestConfig:
    def test_parses_and_builds(self):
        cfg = parse_config(CHAOS)
        assert cfg.kind == "chaos" and cfg.seed == 42
        assert cfg.numerics["N_list"] == [4, 8, 16]
        fam = cfg.domain_family()
        assert fam.dim == 1
        assert cfg.coefficients(1).a == 1.0
        assert cfg.noise(1).intensity == 1.0

    def test_missing_seed(self):
        with pytest.raises(ConfigError, match="seed") as e:
            parse_config(CHAOS.replace("seed = 42\n", ""))
        assert e.value.line == 1 and e.value.field == "experiment.seed"

    def test_bad_type_reports_line(self):
        text = CHAOS.replace("steps = 20", "steps = twenty")
        with pytest.raises(ConfigError) as e:
            parse_config(text, source="x.ini")
        assert e.value.line == text.splitlines().index("steps = twenty") + 1
        assert e.value.field == "numerics.steps"
        assert str(e.value).startswith(f"x.ini:{e.value.line}:")

    def test_unknown_field_and_section(self):
        with pytest.raises(ConfigError, match="unknown field"):
            parse_config(CHAOS.replace("reps = 3", "repz = 3"))
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(CHAOS + "\n[extras]\na = 1\n")

    def test_kind_checks(self):
        with pytest.raises(ConfigError, match="not 'picard'"):
            parse_config(CHAOS, kind="picard")
        with pytest.raises(ConfigError, match="unknown kind"):
            parse_config(CHAOS.replace("kind = chaos", "kind = nope"))
        with pytest.raises(ConfigError, match="coefficients"):
            parse_config(SKOROKHOD_CONST.replace("skorokhod", "simulate"))

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError, match="d=2"):
            parse_config(CHAOS.replace("name = mean_reverting", "name = mean_reverting\nd = 2"))

    def test_bad_domain(self):
        with pytest.raises(ConfigError, match="domain"):
            parse_config(CHAOS.replace("type = box", "type = blob"))

    def test_hash_ignores_formatting_and_output(self):
        base = parse_config(CHAOS).config_hash()
        reformatted = CHAOS.replace("theta = 1.0", "theta=1   # comment").replace("dir = unused", "dir = other")
        assert parse_config(reformatted).config_hash() == base
        assert parse_config(CHAOS, seed=42).config_hash() == base

    @pytest.mark.parametrize("old,new", [("steps = 20", "steps = 21"), ("sigma = 0.3", "sigma = 0.31"),
                                         ("seed = 42", "seed = 43"), ("N_list = 4, 8, 16", "N_list = 4, 8, 32"),
                                         ("marks = two_point", "marks = gaussian")])
    def test_hash_tracks_semantic_fields(self, old, new):
        assert parse_config(CHAOS.replace(old, new)).config_hash() != parse_config(CHAOS).config_hash()


class TestRun:
    def test_skorokhod_constant_interior(self, tmp_path):
        code, man = run_cli(tmp_path, "skorokhod", SKOROKHOD_CONST)
        assert code == 0 and man["k_variation"] == 0.0 and man["passed"]
        lines = (tmp_path / "out" / "solution.csv").read_text().splitlines()
        assert lines[0] == "t,x1,x2,k1,k2,y1,y2"
        assert lines[1] == "0.0,0.1,0.2,0.0,0.0,0.1,0.2"

    def test_chaos_outputs_and_fit(self, tmp_path):
        code, man = run_cli(tmp_path, "chaos", CHAOS)
        assert code == 0
        rows = (tmp_path / "out" / "chaos.csv").read_text().splitlines()
        assert rows[0] == "N,error,stderr,w2_coupled,w2_independent,reps" and len(rows) == 4
        table = np.loadtxt(tmp_path / "out" / "chaos.csv", delimiter=",", skiprows=1)
        fit = man["fit"]
        slope, _ = np.polyfit(np.log(table[:, 0]), np.log(table[:, 1]), 1, w=table[:, 1] / table[:, 2])
        assert fit["slope"] == pytest.approx(slope, abs=1e-12)
        assert {"residuals", "picard_converged", "slope_in_band", "decreasing_beyond_stderr"} <= set(man["checks"])

    def test_rerun_and_threads_byte_identical(self, tmp_path):
        run_cli(tmp_path, "chaos", CHAOS, "--threads", "1", out="a")
        run_cli(tmp_path, "chaos", CHAOS, "--threads", "3", out="b")
        for name in ("chaos.csv", "chaos_reps.csv", "picard_trace.csv", "chaos_fit.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override(self, tmp_path):
        run_cli(tmp_path, "chaos", CHAOS, out="a")
        _, man = run_cli(tmp_path, "chaos", CHAOS, "--seed", "7", out="b")
        assert man["seed"] == 7
        assert (tmp_path / "a" / "chaos.csv").read_bytes() != (tmp_path / "b" / "chaos.csv").read_bytes()

    def test_env_overrides(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, SKOROKHOD_CONST)
        monkeypatch.setenv("RMV_OUT", str(tmp_path / "env_out"))
        monkeypatch.setenv("RMV_THREADS", "2")
        assert main(["skorokhod", "--config", str(cfg)]) == 0
        assert (tmp_path / "env_out" / "manifest.json").exists()
        # the flag beats the environment
        assert main(["skorokhod", "--config", str(cfg), "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "manifest.json").exists()

    def test_missing_seed_exit(self, tmp_path, capsys):
        code, man = run_cli(tmp_path, "chaos", CHAOS.replace("seed = 42\n", ""))
        assert code == 2 and man is None
        assert "seed" in capsys.readouterr().err

    def test_hard_failure_exit(self, tmp_path):
        text = textwrap.dedent("""\
            [experiment]
            kind = picard
            seed = 1
            [domain]
            type = box
            lo = -1
            hi = 1
            [coefficients]
            name = linear
            a = -20
            [initial]
            kind = gaussian
            scale = 0.3
            [numerics]
            steps = 20
            M = 16
            """)
        code, man = run_cli(tmp_path, "picard", text)
        assert code == 1 and man["hard_failure"] and not man["checks"]["converged"]["passed"]

    @pytest.mark.parametrize("kind,text", [
        ("simulate", CHAOS.replace("chaos", "simulate").replace("N_list = 4, 8, 16", "N = 12")),
        ("picard", CHAOS.replace("chaos", "picard").replace("N_list = 4, 8, 16", "M = 12")),
        ("stability", CHAOS.replace("chaos", "stability").replace("N_list = 4, 8, 16", "n_list = 1, 2, 4\nN_mc = 16")),
        ("wasserstein", "[experiment]\nkind = wasserstein\nseed = 2\n[clouds]\nk = 10\nd = 2\n"),
    ])
    def test_other_kinds(self, tmp_path, kind, text):
        code, man = run_cli(tmp_path, kind, text)
        assert code == 0 and man["kind"] == kind and man["files"]
        for name in man["files"]:
            data = (tmp_path / "out" / name).read_bytes()
            assert b"\r" not in data and data.endswith(b"\n")

    def test_wasserstein_csv_clouds(self, tmp_path):
        rng = np.random.default_rng(0)
        A, B = rng.normal(size=(2, 5, 2))
        np.savetxt(tmp_path / "a.csv", A, delimiter=",")
        np.savetxt(tmp_path / "b.csv", B, delimiter=",")
        text = f"[experiment]\nkind = wasserstein\nseed = 0\n[clouds]\nkind = csv\nfile_a = {tmp_path / 'a.csv'}\nfile_b = {tmp_path / 'b.csv'}\n"
        code, man = run_cli(tmp_path, "wasserstein", text)
        from itertools import permutations

        brute = min(np.mean(np.sum((A - B[list(p)]) ** 2, axis=1)) for p in permutations(range(5)))
        assert code == 0 and man["distance"] == pytest.approx(np.sqrt(brute), abs=1e-12)


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, SKOROKHOD_CONST)
    r = subprocess.run([sys.executable, "-m", "rmv.cli", "skorokhod", "--config", str(cfg), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS verification" in r.stdout
