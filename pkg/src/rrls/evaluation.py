"""Static evaluation over a uniform parameter mesh and score aggregation."""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from rrls.env import restrict
from rrls.exceptions import ContractError
from rrls.spaces import ParamSpace

DEFAULT_EVAL_SEEDS = tuple(range(10))
DEFAULT_EPISODES_PER_SEED = 5


def default_nb_mesh_dim(dim: int) -> int:
    return 5 if dim <= 2 else 4


@dataclass(frozen=True, eq=False)
class EvaluationMesh:
    space: ParamSpace
    nb_mesh_dim: int
    cells: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)

    def unique_cells(self) -> np.ndarray:
        """Distinct cells in first-occurrence order (point dimensions repeat cells)."""
        seen: list[tuple[float, ...]] = []
        for cell in map(tuple, self.cells):
            if cell not in seen:
                seen.append(cell)
        return np.array(seen, dtype=float).reshape(-1, self.space.dim)


def generate_evaluation_set(space: ParamSpace, nb_mesh_dim: int) -> EvaluationMesh:
    """Uniform mesh with ``nb_mesh_dim`` inclusive points per dimension.

    Cells are ordered lexicographically, first dimension slowest.
    """
    if int(nb_mesh_dim) != nb_mesh_dim or nb_mesh_dim < 2:
        raise ContractError(f"nb_mesh_dim must be an integer >= 2, got {nb_mesh_dim}")
    nb_mesh_dim = int(nb_mesh_dim)
    axes = [np.linspace(lo, hi, nb_mesh_dim) for lo, hi in zip(space.low, space.high)]
    cells = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, space.dim)
    cells.flags.writeable = False
    return EvaluationMesh(space, nb_mesh_dim, cells)


@dataclass(frozen=True)
class EpisodeRecord:
    cell_index: int
    seed: int
    episode: int
    ret: float
    length: int
    error: str | None = None


@dataclass
class MetricsSummary:
    """Per-cell mean returns with worst-case and average-case aggregates.

    ``cell_stds`` is the standard deviation across evaluation seeds of the
    per-seed mean return in each cell; ``worst_case_std`` and
    ``average_case_std`` are the same statistic for the aggregates.
    """

    param_names: list[str]
    cell_params: list[list[float]]
    cell_means: list[float]
    cell_stds: list[float]
    worst_case: float
    average_case: float
    best_case: float
    worst_case_std: float
    average_case_std: float
    incomplete_cells: list[int] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.incomplete_cells

    @property
    def worst_cell(self) -> int:
        means = np.array(self.cell_means, dtype=float)
        return int(np.nanargmin(means))

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["valid"] = self.valid
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "MetricsSummary":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in known})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path) -> "MetricsSummary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def derive_seed(cell_index: int, seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([cell_index, seed, episode]).generate_state(1)[0])


def run_episode(env, policy: Callable, seed: int, horizon: int | None = None,
                gamma: float | None = None) -> tuple[float, int]:
    """Roll out ``policy`` for one episode; returns (return, length).

    The return is discounted when ``gamma`` is given, undiscounted otherwise.
    """
    obs = env.reset(seed=seed)
    total, discount, t = 0.0, 1.0, 0
    while horizon is None or t < horizon:
        result = env.step(policy(obs))
        total += discount * result.reward
        t += 1
        if result.terminated or result.truncated:
            break
        if gamma is not None:
            discount *= gamma
        obs = result.observation
    return total, t


def _make_env(env, env_kwargs):
    if isinstance(env, str):
        from rrls.envs import make
        return make(env, **(env_kwargs or {}))
    return env(**(env_kwargs or {}))


def _evaluate_cells(policy, env, env_kwargs, space, cells, seeds, episodes_per_seed, horizon, gamma):
    instance = restrict(_make_env(env, env_kwargs), space)
    records = []
    for index, params in cells:
        for seed in seeds:
            for ep in range(episodes_per_seed):
                try:
                    instance.set_params(params)
                    ret, length = run_episode(instance, policy, derive_seed(index, seed, ep),
                                              horizon, gamma)
                    records.append(EpisodeRecord(index, seed, ep, ret, length))
                except Exception as exc:
                    records.append(EpisodeRecord(index, seed, ep, math.nan, 0, f"{type(exc).__name__}: {exc}"))
    return records


def _mean(values) -> float:
    # fsum then divide can land an ulp outside [min, max]; the exact mean cannot
    vals = list(values)
    return min(max(math.fsum(vals) / len(vals), min(vals)), max(vals))


def summarize(mesh_cells: np.ndarray, param_names: Sequence[str],
              records: Sequence[EpisodeRecord]) -> MetricsSummary:
    """Fold records, sorted by (cell, seed, episode), into a summary."""
    records = sorted(records, key=lambda r: (r.cell_index, r.seed, r.episode))
    n_cells = len(mesh_cells)
    seeds = sorted({r.seed for r in records})
    per_seed = np.full((n_cells, len(seeds)), np.nan)
    incomplete = set()
    seed_pos = {s: i for i, s in enumerate(seeds)}
    grouped: dict[tuple[int, int], list[float]] = {}
    for r in records:
        if r.error is not None or not math.isfinite(r.ret):
            incomplete.add(r.cell_index)
            continue
        grouped.setdefault((r.cell_index, r.seed), []).append(r.ret)
    for (cell, seed), rets in grouped.items():
        per_seed[cell, seed_pos[seed]] = _mean(rets)
    seen_cells = {r.cell_index for r in records}
    incomplete |= set(range(n_cells)) - seen_cells
    cell_means = np.full(n_cells, np.nan)
    cell_stds = np.full(n_cells, np.nan)
    for c in range(n_cells):
        vals = per_seed[c][np.isfinite(per_seed[c])]
        if vals.size:
            cell_means[c] = _mean(vals)
            cell_stds[c] = float(np.std(vals))
    finite = np.isfinite(cell_means)
    if not finite.any():
        raise ContractError("no episode completed; cannot summarise")
    complete_seeds = np.all(np.isfinite(per_seed), axis=0)
    seed_worst = per_seed[:, complete_seeds].min(axis=0) if complete_seeds.any() else np.array([np.nan])
    seed_avg = np.array([_mean(col) for col in per_seed[:, complete_seeds].T]) if complete_seeds.any() else np.array([np.nan])
    return MetricsSummary(
        param_names=list(param_names),
        cell_params=np.asarray(mesh_cells, dtype=float).tolist(),
        cell_means=cell_means.tolist(),
        cell_stds=cell_stds.tolist(),
        worst_case=float(np.min(cell_means[finite])),
        average_case=_mean(cell_means[finite]),
        best_case=float(np.max(cell_means[finite])),
        worst_case_std=float(np.std(seed_worst)),
        average_case_std=float(np.std(seed_avg)),
        incomplete_cells=sorted(incomplete),
    )


def evaluate_policy(policy: Callable, env, mesh: EvaluationMesh,
                    seeds: Sequence[int] = DEFAULT_EVAL_SEEDS,
                    episodes_per_seed: int = DEFAULT_EPISODES_PER_SEED, *,
                    env_kwargs: dict | None = None, horizon: int | None = None,
                    gamma: float | None = None,
                    workers: int = 1) -> tuple[list[EpisodeRecord], MetricsSummary]:
    """Run ``policy`` on every mesh cell for ``len(seeds) * episodes_per_seed`` episodes.

    ``env`` is a registry id or a factory; each worker builds its own
    instance. Returns are undiscounted unless ``gamma`` is given. Episodes
    that raise are recorded with their error and mark the cell incomplete.
    Results do not depend on ``workers``.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ContractError("seed list must be non-empty")
    if episodes_per_seed < 1:
        raise ContractError(f"episodes_per_seed must be >= 1, got {episodes_per_seed}")
    cells = list(enumerate(np.asarray(mesh.cells)))
    args = (seeds, episodes_per_seed, horizon, gamma)
    if workers <= 1 or len(cells) == 1:
        records = _evaluate_cells(policy, env, env_kwargs, mesh.space, cells, *args)
    else:
        chunks = [cells[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate_cells, policy, env, env_kwargs, mesh.space, chunk, *args)
                       for chunk in chunks if chunk]
            records = [r for fut in futures for r in fut.result()]
    records.sort(key=lambda r: (r.cell_index, r.seed, r.episode))
    return records, summarize(mesh.cells, mesh.space.names, records)


def write_records_csv(path, records: Sequence[EpisodeRecord], mesh: EvaluationMesh) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_index", *mesh.space.names, "seed", "episode", "return", "length"])
        for r in records:
            writer.writerow([r.cell_index, *(repr(float(v)) for v in mesh.cells[r.cell_index]),
                             r.seed, r.episode, repr(float(r.ret)), r.length])


def read_records_csv(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


@dataclass(frozen=True)
class NormalizedScore:
    value: float
    base: float
    target: float
    normalized: float | None
    degenerate: bool


def normalize_score(v: float, v_base: float, v_target: float, eps: float = 1e-9) -> NormalizedScore:
    """``(v - v_base) / |v_target - v_base|``; flagged degenerate when the anchors coincide."""
    spread = abs(v_target - v_base)
    if spread < eps:
        return NormalizedScore(v, v_base, v_target, None, True)
    return NormalizedScore(v, v_base, v_target, (v - v_base) / spread, False)


def training_curve(log, window: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Trailing moving average of the per-iteration mean return.

    Returns ``(env_steps, smoothed)``; the first point is at the
    ``window``-th log record.
    """
    if window < 1:
        raise ContractError(f"window must be >= 1, got {window}")
    records = getattr(log, "records", log)
    if not records:
        raise ContractError("training log is empty")
    steps = np.array([r.env_steps for r in records], dtype=float)
    values = np.array([r.mean_fitness for r in records], dtype=float)
    if window > values.size:
        raise ContractError(f"window {window} exceeds log length {values.size}")
    kernel = np.ones(window) / window
    return steps[window - 1:], np.convolve(values, kernel, mode="valid")


def band(curves: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean and population std across seeds, aligned by record index.

    Curves are truncated to the shortest; the x-axis is the mean env-step
    count at each index.
    """
    if not curves:
        raise ContractError("no curves to aggregate")
    n = min(len(c[0]) for c in curves)
    xs = np.stack([c[0][:n] for c in curves])
    ys = np.stack([c[1][:n] for c in curves])
    return xs.mean(axis=0), ys.mean(axis=0), ys.std(axis=0)
