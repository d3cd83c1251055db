"""Corpus-level control search: one control vector maximizing an objective."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .control import PRIMARY, ControlVector, grid_values, quantize

STRATEGIES = ("one_plus_one", "random")


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    budget: int = 64
    sigma0: float = 0.2
    seed: int = 0
    objective: str = "sari"
    strategy: str = "one_plus_one"
    free_dims: tuple[str, ...] = PRIMARY

    def __post_init__(self):
        if int(self.budget) < 1:
            raise SearchError(f"budget must be >= 1, got {self.budget}")
        if not self.sigma0 > 0:
            raise SearchError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.strategy not in STRATEGIES:
            raise SearchError(f"unknown search strategy {self.strategy!r}")
        if self.objective != "sari":
            raise SearchError(f"unknown objective {self.objective!r}")
        bad = set(self.free_dims) - set(PRIMARY)
        if bad or not self.free_dims:
            raise SearchError(f"free_dims must be a non-empty subset of {PRIMARY}")


@dataclass(frozen=True)
class SearchStep:
    step: int
    score: float
    vector: ControlVector
    accepted: bool


@dataclass
class SearchResult:
    best: ControlVector
    best_score: float
    trace: list[SearchStep] = field(default_factory=list)

    def best_so_far(self) -> list[float]:
        return list(np.maximum.accumulate([s.score for s in self.trace]))


def _evaluate(eval_fn, vector) -> float:
    score = float(eval_fn(vector))
    if not math.isfinite(score):
        raise SearchError(f"objective returned a non-finite score for {vector}")
    return score


def _free_mask(config: SearchConfig) -> np.ndarray:
    return np.array([name in config.free_dims for name in PRIMARY])


def one_plus_one_search(eval_fn: Callable[[ControlVector], float], config: SearchConfig) -> SearchResult:
    """(1+1) evolution strategy on the quantized control grid.

    Starts from the all-ones vector. A mutation adds Gaussian noise of scale
    sigma to every free dimension and is quantized; mutations that land back
    on the parent are redrawn without spending budget. A candidate replaces
    the parent only on strict improvement; sigma grows by 1.5 on success and
    shrinks by 0.9 on failure.
    """
    rng = np.random.default_rng(config.seed)
    mask = _free_mask(config)
    parent = ControlVector.ones()
    best_score = _evaluate(eval_fn, parent)
    trace = [SearchStep(0, best_score, parent, False)]
    sigma = config.sigma0
    for step in range(1, int(config.budget)):
        base = parent.primary()
        for _ in range(1000):
            noise = rng.normal(0.0, sigma, size=len(PRIMARY)) * mask
            candidate = quantize(ControlVector.from_primary(base + noise))
            if candidate != parent:
                break
            # redraws never shrink sigma below one grid step
            sigma = max(sigma, 0.05)
        else:
            break
        score = _evaluate(eval_fn, candidate)
        accepted = score > best_score
        if accepted:
            parent, best_score = candidate, score
            sigma *= 1.5
        else:
            sigma *= 0.9
        trace.append(SearchStep(step, score, candidate, accepted))
    return SearchResult(parent, best_score, trace)


def random_search(eval_fn: Callable[[ControlVector], float], config: SearchConfig) -> SearchResult:
    """Uniform sampling without replacement on the quantized grid; returns the argmax."""
    rng = np.random.default_rng(config.seed)
    mask = _free_mask(config)
    grid = grid_values()
    k = int(mask.sum())
    size = len(grid) ** k
    n = min(int(config.budget), size)
    picks = rng.choice(size, size=n, replace=False)
    best, best_score = None, -math.inf
    trace = []
    for step, flat in enumerate(picks):
        digits = np.unravel_index(int(flat), (len(grid),) * k)
        values = np.ones(len(PRIMARY))
        values[mask] = grid[list(digits)]
        candidate = ControlVector.from_primary(values)
        score = _evaluate(eval_fn, candidate)
        accepted = score > best_score
        if accepted:
            best, best_score = candidate, score
        trace.append(SearchStep(step, score, candidate, accepted))
    return SearchResult(best, best_score, trace)


def run_search(eval_fn, config: SearchConfig) -> SearchResult:
    if config.strategy == "random":
        return random_search(eval_fn, config)
    return one_plus_one_search(eval_fn, config)


def write_trace(result: SearchResult, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "score", *PRIMARY, "accepted"])
        for s in result.trace:
            writer.writerow([s.step, repr(s.score), *(f"{x:.2f}" for x in s.vector.primary()),
                             int(s.accepted)])
