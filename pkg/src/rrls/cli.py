"""Command line front door: ``rrls train|evaluate|report|list-envs``.

Exit codes: 0 success, 1 runtime fault, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from rrls import __version__
from rrls.agents import (
    TabularPolicy,
    TrainLog,
    TrainResult,
    policy_from_dict,
    tabular_robust_agent,
    train_action_robust,
    train_adversarial,
    train_dr,
    train_nominal,
    train_worstcase,
)
from rrls.config import ExperimentConfig, load_config
from rrls.envs import BUNDLED_SPACES, env_ids, extract_tabular_kernel, make
from rrls.evaluation import (
    MetricsSummary,
    band,
    evaluate_policy,
    generate_evaluation_set,
    normalize_score,
    training_curve,
    write_records_csv,
)
from rrls.exceptions import ConfigError, ContractError
from rrls.plotting import plot_cell_heatmap, plot_training_bands


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _dump(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _default_workers() -> int:
    raw = os.environ.get("RRLS_WORKERS", "1")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("RRLS_WORKERS", f"expected an integer, got {raw!r}") from None


# ---------------------------------------------------------------- training

def run_training(cfg: ExperimentConfig, seed: int) -> TrainResult:
    algo, budget = cfg.algorithm, cfg.budget
    if algo == "nominal":
        return train_nominal(cfg.env_id, budget, seed, cfg.train)
    if algo == "dr":
        return train_dr(cfg.env_id, cfg.space, budget, seed, cfg.train)
    if algo == "worstcase":
        return train_worstcase(cfg.env_id, cfg.space, budget, seed, config=cfg.train)
    if algo == "adversarial":
        return train_adversarial(cfg.env_id, cfg.space, budget, seed, cfg.train)
    if algo == "action-robust":
        return train_action_robust(cfg.env_id, None, budget, seed, cfg.train)
    # tabular-robust: exact solver over the kernels of a train.mesh grid of the space
    env = cfg.make_env()
    cells = generate_evaluation_set(cfg.space, cfg.train.mesh).unique_cells()
    table = tabular_robust_agent(extract_tabular_kernel(env, cells))
    return TrainResult(TabularPolicy(table), TrainLog(), 0, 0)


def policy_document(cfg: ExperimentConfig, seed: int, result: TrainResult) -> dict[str, Any]:
    doc = {
        "env_id": cfg.env_id,
        "env_kwargs": cfg.env_kwargs,
        "algorithm": cfg.algorithm,
        "arch": result.policy.arch(),
        "params": np.asarray(result.policy.params, dtype=float).tolist(),
        "train_config": cfg.train.to_dict(),
        "space": cfg.space.to_dict(),
        "seed": seed,
        "budget": cfg.budget,
        "steps_used": result.steps_used,
    }
    if result.adversary is not None:
        doc["adversary"] = {"arch": result.adversary.arch(),
                            "params": result.adversary.params.tolist()}
    if result.extras:
        doc["extras"] = result.extras
    return doc


def load_policy(path) -> tuple[Any, dict[str, Any]]:
    """Rebuild a policy from its JSON file; returns ``(policy, document)``."""
    doc = json.loads(Path(path).read_text())
    return policy_from_dict(doc), doc


def seed_dir(root: Path, algorithm: str, seed: int) -> Path:
    return root / algorithm / f"seed_{seed}"


def cmd_train(config_path, output_dir=None, evaluate: bool = False, workers: int = 1) -> list[Path]:
    started = _now()
    cfg = load_config(config_path)
    if output_dir is not None:
        cfg.output_dir = Path(output_dir)
    root = cfg.output_dir
    root.mkdir(parents=True, exist_ok=True)
    _dump(root / "config.json", cfg.to_dict())
    written = []
    for seed in cfg.seeds:
        out = seed_dir(root, cfg.algorithm, seed)
        out.mkdir(parents=True, exist_ok=True)
        try:
            result = run_training(cfg, seed)
        except ContractError as exc:
            # budget / alpha / mesh preconditions are configuration problems
            raise ConfigError("budget" if "budget" in str(exc) else "train", str(exc)) from None
        _dump(out / "policy.json", policy_document(cfg, seed, result))
        result.log.write_csv(out / "trainlog.csv")
        written.append(out / "policy.json")
        print(f"{cfg.algorithm} seed {seed}: {result.steps_used} env steps, "
              f"{len(result.log)} generations -> {out}")
        if evaluate:
            _evaluate_into(result.policy, cfg, out, workers)
    _dump(root / "metadata.json", {"command": "train", "started": started, "finished": _now(),
                                   "version": __version__})
    return written


# -------------------------------------------------------------- evaluation

def _evaluate_into(policy, cfg: ExperimentConfig, out: Path, workers: int,
                   base: MetricsSummary | None = None, target: MetricsSummary | None = None) -> MetricsSummary:
    mesh = generate_evaluation_set(cfg.space, cfg.nb_mesh_dim)
    ev = cfg.evaluation
    records, summary = evaluate_policy(policy, cfg.env_id, mesh, ev.seeds, ev.episodes_per_seed,
                                       env_kwargs=cfg.env_kwargs, horizon=ev.horizon, gamma=ev.gamma,
                                       workers=workers)
    write_records_csv(out / "records.csv", records, mesh)
    doc = summary.to_dict()
    if base is not None and target is not None:
        doc["normalized"] = {
            key: normalize_score(getattr(summary, key), getattr(base, key), getattr(target, key)).__dict__
            for key in ("worst_case", "average_case")
        }
    _dump(out / "summary.json", doc)
    print(f"worst-case {summary.worst_case:.6g}  average-case {summary.average_case:.6g}"
          + ("" if summary.valid else f"  (INVALID: incomplete cells {summary.incomplete_cells})"))
    return summary


def cmd_evaluate(policy_path, config_path, out=None, base_summary=None, target_summary=None,
                 workers: int = 1) -> MetricsSummary:
    cfg = load_config(config_path)
    policy, doc = load_policy(policy_path)
    if doc.get("env_id") != cfg.env_id:
        raise ConfigError("env_id", f"policy was trained on {doc.get('env_id')!r} but the config "
                                    f"evaluates on {cfg.env_id!r}")
    env = cfg.make_env()
    if doc["arch"].get("obs_dim", env.obs_dim) != env.obs_dim:
        raise ConfigError("env_kwargs", "policy observation size does not match the environment")
    if (base_summary is None) != (target_summary is None):
        raise ConfigError("--base-summary/--target-summary", "give both anchors or neither")
    base = MetricsSummary.load(base_summary) if base_summary else None
    target = MetricsSummary.load(target_summary) if target_summary else None
    out = Path(policy_path).parent if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return _evaluate_into(policy, cfg, out, workers, base, target)


# ------------------------------------------------------------------ report

def _collect(run_dir: Path) -> dict[str, list[Path]]:
    runs: dict[str, list[Path]] = {}
    for log_path in sorted(run_dir.glob("*/seed_*/trainlog.csv")):
        runs.setdefault(log_path.parent.parent.name, []).append(log_path.parent)
    return runs


def _fmt(values: Sequence[float]) -> str:
    arr = np.asarray(values, dtype=float)
    return f"{arr.mean():.1f} ± {arr.std():.1f}"


def cmd_report(run_dir, out=None, window: int = 1) -> Path:
    run_dir = Path(run_dir)
    runs = _collect(run_dir)
    if not runs:
        raise FileNotFoundError(f"no training logs (*/seed_*/trainlog.csv) under {run_dir}")
    out = run_dir / "report" if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)

    bands = {}
    for algo, dirs in runs.items():
        logs = [TrainLog.read_csv(d / "trainlog.csv").phase("agent") for d in dirs]
        curves = [training_curve(log, window) for log in logs if len(log) >= window]
        if curves:
            bands[algo] = band(curves)
    with open(out / "curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "index", "env_steps", "mean", "std"])
        for algo, (x, m, s) in bands.items():
            for i in range(len(x)):
                writer.writerow([algo, i, repr(float(x[i])), repr(float(m[i])), repr(float(s[i]))])
    plot_training_bands(bands, out / "curves.svg")

    lines = ["| Algorithm | Worst-case | Average-case | Seeds |", "|---|---|---|---|"]
    norm_lines = []
    for algo, dirs in runs.items():
        summaries = [json.loads((d / "summary.json").read_text()) for d in dirs if (d / "summary.json").exists()]
        if not summaries:
            lines.append(f"| {algo} | n/a | n/a | 0 |")
            continue
        worst = [s["worst_case"] for s in summaries]
        avg = [s["average_case"] for s in summaries]
        flag = "" if all(s.get("valid", True) for s in summaries) else " (invalid)"
        lines.append(f"| {algo} | {_fmt(worst)}{flag} | {_fmt(avg)} | {len(summaries)} |")
        normed = [s["normalized"] for s in summaries if "normalized" in s]
        if normed and not any(n[k]["degenerate"] for n in normed for k in n):
            norm_lines.append(f"| {algo} | {_fmt([n['worst_case']['normalized'] for n in normed])} | "
                              f"{_fmt([n['average_case']['normalized'] for n in normed])} | {len(normed)} |")
        first = MetricsSummary.from_dict(summaries[0])
        if len(first.param_names) == 2:
            means = np.nanmean([s["cell_means"] for s in summaries], axis=0)
            plot_cell_heatmap(first.cell_params, means, first.param_names, out / f"heatmap_{algo}.svg",
                              title=f"{algo}: mean return per cell")
    table = "\n".join(lines) + "\n"
    if norm_lines:
        table += ("\nNormalized scores\n\n| Algorithm | Worst-case | Average-case | Seeds |\n|---|---|---|---|\n"
                  + "\n".join(norm_lines) + "\n")
    (out / "table.md").write_text(table)
    print(table, end="")
    return out


# --------------------------------------------------------------- list-envs

def cmd_list_envs() -> str:
    rows = []
    for env_id in env_ids():
        env = make(env_id)
        action = f"discrete({env.n_discrete_actions})" if env.discrete else f"box({env.action_dim})"
        spaces = ", ".join(BUNDLED_SPACES.get(env_id, [])) or "-"
        rows.append(f"{env_id}\tobs={env.obs_dim}\taction={action}\t"
                    f"params={','.join(env.param_space.names)}\tspaces={spaces}")
    text = "\n".join(rows)
    print(text)
    return text


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrls", description="Robust RL benchmark at desk scale")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_workers(p):
        p.add_argument("--workers", type=int, default=None,
                       help="parallel evaluation workers (default: $RRLS_WORKERS or 1)")

    p = sub.add_parser("train", help="train one policy per configured seed")
    p.add_argument("config")
    p.add_argument("--output-dir", default=None, help="override the config's output_dir")
    p.add_argument("--evaluate", action="store_true", help="evaluate every trained policy afterwards")
    add_workers(p)

    p = sub.add_parser("evaluate", help="evaluate a policy on the configured mesh")
    p.add_argument("policy")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (default: next to the policy)")
    p.add_argument("--base-summary", default=None)
    p.add_argument("--target-summary", default=None)
    add_workers(p)

    p = sub.add_parser("report", help="plots and score table for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None)
    p.add_argument("--window", type=int, default=1, help="moving-average window")

    sub.add_parser("list-envs", help="registered environments")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        workers = getattr(args, "workers", None)
        if workers is None:
            workers = _default_workers()
        if workers < 1:
            raise ConfigError("--workers", f"must be >= 1, got {workers}")
        if args.command == "train":
            cmd_train(args.config, args.output_dir, args.evaluate, workers)
        elif args.command == "evaluate":
            cmd_evaluate(args.policy, args.config, args.out, args.base_summary, args.target_summary, workers)
        elif args.command == "report":
            cmd_report(args.run_dir, args.out, args.window)
        else:
            cmd_list_envs()
    except ConfigError as exc:
        print(f"rrls: config error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, FileNotFoundError, OSError, RuntimeError, ValueError) as exc:
        print(f"rrls: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
