import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from rrls.agents import GenerationRecord, TrainLog
from rrls.cli import load_policy, main
from rrls.envs import env_ids, make

GRID = {"env_id": "gridworld-slip", "algorithm": "tabular-robust", "budget": 1, "seeds": [0],
        "env_kwargs": {"width": 3, "height": 3, "gamma": 0.9, "max_steps": 200},
        "evaluation": {"seeds": [0, 1], "episodes_per_seed": 2, "gamma": 0.9}}
CARTPOLE = {"env_id": "cartpole-masses", "algorithm": "nominal", "budget": 2000, "seeds": [0, 1],
            "env_kwargs": {"max_steps": 100},
            "train": {"population": 8, "episodes": 1},
            "evaluation": {"nb_mesh_dim": 2, "seeds": [0], "episodes_per_seed": 1}}


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def tree_bytes(root):
    skip = {"metadata.json"}
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name not in skip}


class TestTrain:
    def test_three_files_and_round_trip(self, tmp_path):
        cfg = write_config(tmp_path, {**GRID, "output_dir": "out"})
        assert main(["train", str(cfg)]) == 0
        seed_dir = tmp_path / "out" / "tabular-robust" / "seed_0"
        for path in (seed_dir / "policy.json", seed_dir / "trainlog.csv", tmp_path / "out" / "config.json"):
            assert path.is_file()
        policy, doc = load_policy(seed_dir / "policy.json")
        assert doc["env_id"] == "gridworld-slip"
        np.testing.assert_array_equal(policy.params, doc["params"])
        obs = np.zeros(9)
        obs[0] = 1.0
        assert policy(obs) in range(4)

    def test_snapshot_reloads_to_same_config(self, tmp_path):
        from rrls.config import load_config

        cfg = write_config(tmp_path, {**GRID, "output_dir": str(tmp_path / "out")})
        main(["train", str(cfg)])
        snap = tmp_path / "out" / "config.json"
        assert load_config(snap).to_dict() == load_config(cfg).to_dict()

    def test_twice_bitwise_identical(self, tmp_path):
        cfg = write_config(tmp_path, CARTPOLE)
        for out in ("a", "b"):
            assert main(["train", str(cfg), "--output-dir", str(tmp_path / out)]) == 0
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        a.pop("config.json"), b.pop("config.json")  # output_dir differs by construction
        assert a == b and len(a) == 4

    def test_timestamps_only_in_metadata(self, tmp_path):
        cfg = write_config(tmp_path, {**GRID, "output_dir": "out"})
        main(["train", str(cfg)])
        meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
        assert {"started", "finished"} <= set(meta)

    def test_unknown_algorithm(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {**GRID, "algorithm": "td3-deep"})
        assert main(["train", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "algorithm" in err
        for name in ("nominal", "dr", "worstcase", "adversarial", "action-robust", "tabular-robust"):
            assert name in err

    @pytest.mark.parametrize("doc,field", [
        ({**GRID, "budget": 0}, "budget"),
        ({**GRID, "seeds": []}, "seeds"),
        ({k: v for k, v in GRID.items() if k != "env_id"}, "env_id"),
        ({**GRID, "env_id": "pong"}, "env_id"),
        ({**GRID, "train": {"learning_rate": 1}}, "train.learning_rate"),
        ({**CARTPOLE, "space": {"dims": [{"name": "mass", "low": 1, "high": 2}], "reference": [1]}}, "space"),
        ({**CARTPOLE, "algorithm": "tabular-robust"}, "algorithm"),
    ])
    def test_config_errors_name_field(self, tmp_path, capsys, doc, field):
        assert main(["train", str(write_config(tmp_path, doc))]) == 2
        assert field in capsys.readouterr().err

    def test_budget_too_small_is_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {**CARTPOLE, "algorithm": "worstcase", "budget": 5, "output_dir": "o"})
        assert main(["train", str(cfg)]) == 2
        assert "budget" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["train", str(tmp_path / "absent.json")]) == 2

    def test_space_file_relative_to_config(self, tmp_path):
        (tmp_path / "space.json").write_text(json.dumps(
            {"dims": [{"name": "pole_mass", "low": 1.0, "high": 31.0}], "reference": [4.9]}))
        cfg = write_config(tmp_path, {**CARTPOLE, "algorithm": "dr", "seeds": [0], "budget": 500,
                                      "space": {"file": "space.json"}, "output_dir": "o"})
        assert main(["train", str(cfg), "--evaluate"]) == 0
        summary = json.loads((tmp_path / "o" / "dr" / "seed_0" / "summary.json").read_text())
        assert summary["param_names"] == ["pole_mass"] and len(summary["cell_means"]) == 2


class TestEvaluate:
    @pytest.fixture
    def trained(self, tmp_path):
        cfg = write_config(tmp_path, {**GRID, "output_dir": "out"})
        main(["train", str(cfg)])
        return cfg, tmp_path / "out" / "tabular-robust" / "seed_0" / "policy.json"

    def test_outputs(self, trained, tmp_path):
        cfg, policy = trained
        assert main(["evaluate", str(policy), str(cfg), "--out", str(tmp_path / "ev")]) == 0
        with open(tmp_path / "ev" / "records.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["cell_index", "slip", "seed", "episode", "return", "length"]
        assert len(rows) == 1 + 5 * 2 * 2
        summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
        assert summary["worst_case"] <= summary["average_case"]

    def test_normalized_scores(self, trained, tmp_path):
        cfg, policy = trained
        base, target = tmp_path / "base.json", tmp_path / "target.json"
        main(["evaluate", str(policy), str(cfg), "--out", str(tmp_path / "ev")])
        summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
        base.write_text(json.dumps({**summary, "worst_case": summary["worst_case"] - 2.0,
                                    "average_case": summary["average_case"]}))
        target.write_text(json.dumps({**summary, "worst_case": summary["worst_case"] + 2.0,
                                      "average_case": summary["average_case"]}))
        assert main(["evaluate", str(policy), str(cfg), "--out", str(tmp_path / "n"),
                     "--base-summary", str(base), "--target-summary", str(target)]) == 0
        normed = json.loads((tmp_path / "n" / "summary.json").read_text())["normalized"]
        assert normed["worst_case"]["normalized"] == 0.5
        assert normed["average_case"]["degenerate"] is True

    def test_one_anchor_rejected(self, trained, tmp_path):
        cfg, policy = trained
        assert main(["evaluate", str(policy), str(cfg), "--base-summary", str(policy)]) == 2

    def test_env_mismatch(self, trained, tmp_path, capsys):
        _, policy = trained
        other = write_config(tmp_path, CARTPOLE, "cp.json")
        assert main(["evaluate", str(policy), str(other)]) == 2
        assert "env_id" in capsys.readouterr().err

    def test_workers_identical(self, trained, tmp_path):
        cfg, policy = trained
        main(["evaluate", str(policy), str(cfg), "--out", str(tmp_path / "w1"), "--workers", "1"])
        main(["evaluate", str(policy), str(cfg), "--out", str(tmp_path / "w2"), "--workers", "2"])
        assert tree_bytes(tmp_path / "w1") == tree_bytes(tmp_path / "w2")

    def test_workers_from_environment(self, trained, tmp_path, monkeypatch):
        cfg, policy = trained
        monkeypatch.setenv("RRLS_WORKERS", "0")
        assert main(["evaluate", str(policy), str(cfg)]) == 2
        monkeypatch.setenv("RRLS_WORKERS", "2")
        assert main(["evaluate", str(policy), str(cfg), "--out", str(tmp_path / "env")]) == 0


def _synthetic_run(root, algos=("nominal", "dr")):
    # two seeds per algorithm with hand-picked curves
    curves = {0: [1.0, 2.0, 3.0], 1: [3.0, 6.0, 3.0]}
    for algo in algos:
        for seed, values in curves.items():
            d = root / algo / f"seed_{seed}"
            d.mkdir(parents=True)
            TrainLog([GenerationRecord(i, 10 * (i + 1), v, v, 0.0) for i, v in enumerate(values)]).write_csv(
                d / "trainlog.csv")
            summary = {"param_names": ["pole_mass", "cart_mass"],
                       "cell_params": [[1.0, 1.0], [1.0, 11.0], [31.0, 1.0], [31.0, 11.0]],
                       "cell_means": [float(seed), 2.0, 3.0, 4.0], "cell_stds": [0.0] * 4,
                       "worst_case": float(seed), "average_case": 2.0 + seed, "best_case": 4.0,
                       "worst_case_std": 0.0, "average_case_std": 0.0, "incomplete_cells": [], "valid": True}
            (d / "summary.json").write_text(json.dumps(summary))


class TestReport:
    def test_outputs(self, tmp_path):
        _synthetic_run(tmp_path)
        assert main(["report", str(tmp_path)]) == 0
        rep = tmp_path / "report"
        for name in ("curves.svg", "heatmap_nominal.svg", "heatmap_dr.svg"):
            assert ET.parse(rep / name).getroot().tag.endswith("svg")
        table = (rep / "table.md").read_text().splitlines()
        assert table[0] == "| Algorithm | Worst-case | Average-case | Seeds |"
        assert [ln.split("|")[1].strip() for ln in table[2:]] == ["dr", "nominal"]
        assert table[2] == "| dr | 0.5 ± 0.5 | 2.5 ± 0.5 | 2 |"

    def test_band_hand_computed(self, tmp_path):
        _synthetic_run(tmp_path, ("nominal",))
        main(["report", str(tmp_path)])
        with open(tmp_path / "report" / "curves.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["mean"]) for r in rows] == [2.0, 4.0, 3.0]
        assert [float(r["std"]) for r in rows] == [1.0, 2.0, 0.0]
        assert [float(r["env_steps"]) for r in rows] == [10.0, 20.0, 30.0]

    def test_window(self, tmp_path):
        _synthetic_run(tmp_path, ("nominal",))
        main(["report", str(tmp_path), "--window", "2"])
        with open(tmp_path / "report" / "curves.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["mean"]) for r in rows] == [3.0, 3.5]

    def test_idempotent(self, tmp_path):
        _synthetic_run(tmp_path)
        main(["report", str(tmp_path), "--out", str(tmp_path / "r1")])
        main(["report", str(tmp_path), "--out", str(tmp_path / "r2")])
        assert tree_bytes(tmp_path / "r1") == tree_bytes(tmp_path / "r2")

    def test_missing_logs(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == 1
        assert "trainlog" in capsys.readouterr().err

    def test_end_to_end(self, tmp_path):
        cfg = write_config(tmp_path, {**CARTPOLE, "output_dir": "run"})
        assert main(["train", str(cfg), "--evaluate"]) == 0
        assert main(["report", str(tmp_path / "run")]) == 0
        assert (tmp_path / "run" / "report" / "heatmap_nominal.svg").is_file()


class TestListEnvs:
    def test_listing(self, capsys):
        assert main(["list-envs"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert [ln.split("\t")[0] for ln in lines] == list(env_ids())
        assert any(ln.startswith("cartpole-masses\t") for ln in lines)
        for ln in lines:
            fields = dict(f.split("=", 1) for f in ln.split("\t")[1:])
            env = make(ln.split("\t")[0])
            assert int(fields["obs"]) == env.obs_dim
            assert fields["params"] == ",".join(env.param_space.names)
            expected = f"discrete({env.n_discrete_actions})" if env.discrete else f"box({env.action_dim})"
            assert fields["action"] == expected

    def test_stable(self, capsys):
        main(["list-envs"])
        first = capsys.readouterr().out
        main(["list-envs"])
        assert capsys.readouterr().out == first

    def test_console_script(self):
        out = subprocess.run([sys.executable, "-m", "rrls.cli", "list-envs"], capture_output=True, text=True,
                             check=True).stdout
        assert "cartpole-masses" in out
