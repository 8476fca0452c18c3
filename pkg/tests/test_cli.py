import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from ddlqg.cli import main
from ddlqg.config import bundled_config, load_config, validate_config
from ddlqg.errors import InsufficientDataError, ValidationError
from ddlqg.lqr import build_synthesis
from ddlqg.system import (CostWeights, ExperimentInputSpec, LinearSystem,
                          generate_open_loop_dataset)


def small_cfg(**changes):
    cfg = bundled_config()
    cfg.update(T=10, N=400, seed=5)
    cfg["harness"] = {"N_grid": [200, 400, 800], "repetitions": 2, "M": 30}
    cfg.update(changes)
    return cfg


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(small_cfg()))
    return path


def run(*args):
    return main([str(a) for a in args])


class TestConfig:
    def test_bundled_config_encodes_example(self):
        cfg = bundled_config()
        assert cfg["A"] == [[0.7, 1.2], [0.0, 0.4]]
        assert cfg["Q_x"] == [[5.0, 0.0], [0.0, 5.0]] and cfg["Q_w"] == [[2.0, 0.0], [0.0, 2.0]]
        assert cfg["R_u"] == cfg["R_v"] == cfg["Sigma_u"] == [[1.0]]
        assert cfg["Sigma0"] == [[1.0, 0.0], [0.0, 1.0]] and cfg["T"] == 50

    @pytest.mark.parametrize("mutate", [
        lambda c: c.pop("A"),
        lambda c: c.update(T=0),
        lambda c: c.update(A="not a matrix"),
        lambda c: c.update(extra=1),
        lambda c: c["harness"].update(panels=["z"]),
    ])
    def test_schema_rejections(self, mutate):
        cfg = small_cfg()
        mutate(cfg)
        with pytest.raises(ValidationError):
            validate_config(cfg)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        with pytest.raises(ValidationError):
            load_config(p)


class TestDispatch:
    def test_lqr_outputs(self, cfg_path, tmp_path):
        assert run("lqr", "--config", cfg_path, "--out", tmp_path / "o", "-q") == 0
        K = np.loadtxt(tmp_path / "o/K_lqr.csv", delimiter=",", ndmin=2)
        assert K.shape == (1, 2)
        assert (tmp_path / "o/diagnostics.csv").read_text().startswith("key,value")

    def test_json_diagnostics(self, cfg_path, tmp_path):
        assert run("lqr", "--config", cfg_path, "--out", tmp_path, "--format", "json", "-q") == 0
        diag = json.loads((tmp_path / "diagnostics.json").read_text())
        assert diag["error_2norm"] > 0

    def test_simulate(self, cfg_path, tmp_path):
        assert run("simulate", "--config", cfg_path, "--out", tmp_path, "-q") == 0
        U = np.loadtxt(tmp_path / "dataset/U.csv", delimiter=",", ndmin=2)
        assert U.shape == (10, 400)
        assert len((tmp_path / "dataset/seeds.csv").read_text().split()) == 400

    def test_kf_one_file_per_t(self, cfg_path, tmp_path):
        assert run("kf", "--config", cfg_path, "--out", tmp_path, "-q") == 0
        assert len(list((tmp_path / "filter_gains").glob("L_*.csv"))) == 11

    def test_lqg(self, cfg_path, tmp_path):
        assert run("lqg", "--config", cfg_path, "--out", tmp_path, "-q") == 0
        K = np.loadtxt(tmp_path / "K_lqg.csv", delimiter=",", ndmin=2)
        assert K.shape == (1, 4)
        assert (tmp_path / "closed_loop/U_dlqg.csv").exists()

    def test_lemma_check(self, cfg_path, tmp_path):
        assert run("lemma-check", "--config", cfg_path, "--out", tmp_path, "-q") == 0
        assert "product_violation_freq" in (tmp_path / "lemma.csv").read_text()

    def test_missing_config(self, tmp_path):
        out = tmp_path / "o"
        assert run("lqr", "--config", tmp_path / "nope.json", "--out", out) == 1
        assert not out.exists()

    def test_malformed_config(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(small_cfg(T=-1)))
        assert run("lqr", "--config", p, "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_unwritable_output(self, cfg_path, tmp_path):
        blocker = tmp_path / "f"
        blocker.write_text("")
        assert run("lqr", "--config", cfg_path, "--out", blocker / "sub") == 1

    def test_unknown_subcommand(self, cfg_path):
        assert run("fly", "--config", cfg_path) == 1

    def test_numerical_failure_message_verbatim(self, tmp_path, capsys):
        cfg = small_cfg(N=8)
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        assert run("lqr", "--config", p, "--out", tmp_path / "o") == 2
        ds = generate_open_loop_dataset(LinearSystem.from_config(cfg),
                                        ExperimentInputSpec.from_config(cfg))
        with pytest.raises(InsufficientDataError) as exc:
            build_synthesis(ds, CostWeights.from_config(cfg))
        assert capsys.readouterr().err.strip() == str(exc.value)

    def test_config_not_mutated(self, cfg_path, tmp_path):
        before = hashlib.sha256(cfg_path.read_bytes()).hexdigest()
        for cmd in ("simulate", "lqr", "reproduce-fig1"):
            run(cmd, "--config", cfg_path, "--out", tmp_path / cmd, "--seed", "9", "-q")
        assert hashlib.sha256(cfg_path.read_bytes()).hexdigest() == before

    def test_seed_override(self, cfg_path, tmp_path):
        for name, seed in (("a", 9), ("b", 9), ("c", 10)):
            run("simulate", "--config", cfg_path, "--out", tmp_path / name, "--seed", seed, "-q")
        run("simulate", "--config", cfg_path, "--out", tmp_path / "d", "-q")
        run("simulate", "--config", cfg_path, "--out", tmp_path / "e", "--seed", 5, "-q")
        read = lambda d: (tmp_path / d / "dataset/X.csv").read_bytes()
        assert read("a") == read("b") != read("c")
        assert read("d") == read("e")

    def test_reproduce_emits_panels(self, cfg_path, tmp_path):
        assert run("reproduce-fig1", "--config", cfg_path, "--out", tmp_path, "-q") == 0
        assert sorted(p.name for p in tmp_path.glob("panel_*.csv")) == [
            f"panel_{p}.csv" for p in "abcde"]
        assert (tmp_path / "summary.csv").exists()

    def test_reproduce_threshold_exit(self, tmp_path):
        cfg = small_cfg()
        cfg["harness"]["panels"] = ["a"]
        cfg["harness"]["thresholds"] = {"slope_range": {"panels": ["a"], "range": [5, 6]}}
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        assert run("reproduce-fig1", "--config", p, "--out", tmp_path / "o", "-q") == 3

    def test_module_entry_point(self, cfg_path, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "ddlqg", "lqr", "--config", str(cfg_path),
                               "--out", str(tmp_path), "-q"], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
