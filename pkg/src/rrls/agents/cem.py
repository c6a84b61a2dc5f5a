"""Cross-entropy method with exact env-step budget accounting."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from rrls.exceptions import ContractError

log = logging.getLogger(__name__)


class OutOfBudget(Exception):
    """Raised by a fitness function when the step budget cannot finish an episode."""


class StepBudget:
    """Counts environment steps against a hard cap."""

    def __init__(self, total: int):
        self.total = int(total)
        self.used = 0
        self.episodes = 0

    @property
    def remaining(self) -> int:
        return self.total - self.used

    def charge(self, steps: int, episodes: int = 1) -> None:
        self.used += steps
        self.episodes += episodes


@dataclass
class GenerationRecord:
    iteration: int
    env_steps: int
    mean_fitness: float
    best_fitness: float
    std_fitness: float
    phase: str = "agent"
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainLog:
    records: list[GenerationRecord] = field(default_factory=list)

    def append(self, record: GenerationRecord) -> None:
        if self.records and record.env_steps < self.records[-1].env_steps:
            raise ContractError("env-step counter must be non-decreasing")
        self.records.append(record)

    def extend(self, other: "TrainLog") -> None:
        for r in other.records:
            self.append(r)

    def phase(self, name: str) -> "TrainLog":
        return TrainLog([r for r in self.records if r.phase == name])

    def __len__(self) -> int:
        return len(self.records)

    CSV_FIELDS = ("iteration", "phase", "env_steps", "mean_fitness", "best_fitness", "std_fitness")

    def write_csv(self, path) -> None:
        """Write every record except wall time, so files are reproducible."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_FIELDS)
            for r in self.records:
                writer.writerow([r.iteration, r.phase, r.env_steps, repr(r.mean_fitness),
                                 repr(r.best_fitness), repr(r.std_fitness)])

    @classmethod
    def read_csv(cls, path) -> "TrainLog":
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(GenerationRecord(int(row["iteration"]), int(row["env_steps"]),
                                            float(row["mean_fitness"]), float(row["best_fitness"]),
                                            float(row["std_fitness"]), row["phase"]))
        return log


def cem_optimize(fitness: Callable[[np.ndarray], float], dim: int, population: int = 64,
                 elite_frac: float = 0.125, iters: int = 100, seed: int = 0, *,
                 init_mean=None, init_std: float = 1.0, extra_std: float = 0.0,
                 on_generation: Callable[[int], None] | None = None,
                 step_counter: Callable[[], int] | None = None,
                 phase: str = "agent") -> tuple[np.ndarray, TrainLog]:
    """Maximise ``fitness`` with a diagonal-Gaussian cross-entropy method.

    Returns the best vector ever evaluated and a per-generation log. When
    ``fitness`` raises :class:`OutOfBudget` the current generation is dropped
    and optimisation stops. ``on_generation(g)`` is called before each
    generation (e.g. to fix common random numbers) and ``step_counter`` feeds
    the log's env-step column.
    """
    if population < 4:
        raise ContractError(f"population must be >= 4, got {population}")
    if not 0 < elite_frac <= 0.5:
        raise ContractError(f"elite_frac must lie in (0, 0.5], got {elite_frac}")
    rng = np.random.default_rng(seed)
    mean = np.zeros(dim) if init_mean is None else np.array(init_mean, dtype=float)
    std = np.full(dim, float(init_std))
    n_elite = max(1, int(round(population * elite_frac)))
    best_x, best_f = mean.copy(), -math.inf
    train_log = TrainLog()
    evaluations = 0
    start = time.perf_counter()
    for g in range(iters):
        if on_generation is not None:
            on_generation(g)
        samples = mean + std * rng.standard_normal((population, dim))
        scores = np.full(population, np.nan)
        try:
            for i, x in enumerate(samples):
                scores[i] = fitness(x)
                evaluations += 1
        except OutOfBudget:
            break
        finite = np.isfinite(scores)
        if not finite.all():
            log.warning("generation %d: discarding %d candidates with non-finite fitness",
                        g, int((~finite).sum()))
        if not finite.any():
            continue
        kept, kept_scores = samples[finite], scores[finite]
        # stable sort: equal scores keep candidate-index order
        order = np.argsort(-kept_scores, kind="stable")
        elites = kept[order[:n_elite]]
        if kept_scores[order[0]] > best_f:
            best_f, best_x = float(kept_scores[order[0]]), kept[order[0]].copy()
        mean = elites.mean(axis=0)
        std = elites.std(axis=0) + extra_std
        train_log.append(GenerationRecord(
            iteration=g,
            env_steps=step_counter() if step_counter else evaluations,
            mean_fitness=float(kept_scores.mean()),
            best_fitness=float(kept_scores.max()),
            std_fitness=float(kept_scores.std()),
            phase=phase,
            wall_time=time.perf_counter() - start,
        ))
    if best_f == -math.inf:
        log.warning("no generation completed; returning the initial mean")
    return best_x, train_log
