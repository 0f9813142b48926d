"""Approximate-rank probe of partial-derivative matrices around a trained parameter."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import EmptySelection, ZeroMatrix
from .numerics import singular_values
from .problem import LossModel


@dataclass(frozen=True)
class ProbeConfig:
    k: int = 30
    eps_w: float = 0.005
    energy_fraction: float = 0.9
    seed: int = 0
    subsample: int | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not 0 < self.energy_fraction <= 1:
            raise ValueError("energy_fraction must lie in (0, 1]")
        if self.eps_w < 0:
            raise ValueError("eps_w must be non-negative")
        if self.subsample is not None and self.subsample < 1:
            raise ValueError("subsample must be positive")


def approximate_rank(A, fraction: float = 0.9) -> int:
    """Smallest J whose top-J squared singular values hold ``fraction`` of ||A||_F^2."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    s2 = singular_values(A) ** 2
    total = float(np.sum(s2))
    if s2.size == 0 or total == 0.0:
        raise ZeroMatrix("approximate rank of a zero matrix is undefined")
    cum = np.cumsum(s2)
    # relative slack so exact ties such as diag(3, 1) at 0.9 are not lost to round-off
    target = fraction * total * (1 - 1e-12)
    return int(np.searchsorted(cum, target) + 1)


def perturbations(theta_star, k: int, seed: int) -> np.ndarray:
    """theta_j = theta* + (||theta*||_1 / p) g_j with g_j standard Gaussian."""
    theta_star = np.asarray(theta_star, dtype=float)
    if not np.all(np.isfinite(theta_star)):
        raise ValueError("theta* must be finite")
    p = theta_star.size
    g = rngmod.stream(seed, rngmod.PROBE)
    return theta_star + (np.abs(theta_star).sum() / p) * g.standard_normal((k, p))


def build_gradient_tensor(model: LossModel, points, theta_star, seed: int = 0) -> np.ndarray:
    """M[i, j, q] = d f / d theta_q (x_i; theta_j) for k points and k perturbed parameters."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = points.shape[0]
    thetas = perturbations(theta_star, k, seed)
    return model.grad(points[:, None, :], thetas[None, :, :])


def rank_histogram(tensor: np.ndarray, theta_star, config: ProbeConfig) -> dict[int, int]:
    """Histogram of slice approximate ranks over coordinates with |theta*_q| >= eps_w."""
    theta_star = np.asarray(theta_star, dtype=float)
    selected = np.flatnonzero(np.abs(theta_star) >= config.eps_w)
    if selected.size == 0:
        raise EmptySelection(f"no coordinate of theta* has magnitude >= {config.eps_w}")
    if config.subsample is not None and config.subsample < selected.size:
        g = rngmod.stream(config.seed, rngmod.PROBE, 1)
        selected = np.sort(g.choice(selected, size=config.subsample, replace=False))
    ranks = [approximate_rank(tensor[:, :, q], config.energy_fraction) for q in selected]
    return dict(sorted(Counter(ranks).items()))


def write_histogram(hist: dict, csv_path, json_path=None) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "frequency"])
        for rank, freq in sorted(hist.items()):
            w.writerow([rank, freq])
    if json_path is not None:
        Path(json_path).write_text(json.dumps({str(k): v for k, v in sorted(hist.items())}, indent=2) + "\n")
