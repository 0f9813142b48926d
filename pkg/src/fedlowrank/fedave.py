"""Federated averaging baseline: local single-sample SGD on sampled clients, then averaging."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .complexity import EpochLedger, EpochRecord, gamma
from .errors import DivergenceDetected
from .problem import Dataset, LossModel, empirical_risk, full_gradient

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FedAveConfig:
    b: int
    T: int
    tau: float = 1.0
    step_scale: float | None = None  # c in c/(k+1); defaults to 1/mu
    schedule: str = "inverse"  # "inverse": c/(k+1), "constant": c
    seed: int = 0
    theta0: tuple | None = None

    def __post_init__(self):
        if self.b < 1 or self.T < 1:
            raise ValueError("need b >= 1 and T >= 1")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.schedule not in ("inverse", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.step_scale is not None and not self.step_scale > 0:
            raise ValueError("step_scale must be positive")

    def scale(self, model: LossModel) -> float:
        if self.step_scale is not None:
            return self.step_scale
        mu = model.constants.mu
        if mu is None:
            raise ValueError("model declares no mu; set step_scale explicitly")
        return 1.0 / mu

    def step(self, c: float, k: int) -> float:
        """Step size for global local-step index k (0-based)."""
        return c / (k + 1) if self.schedule == "inverse" else c


def stochastic_gradient(model: LossModel, block: np.ndarray, theta, rng) -> np.ndarray:
    """Gradient at one uniformly drawn sample of the block."""
    j = int(rng.integers(block.shape[0]))
    return model.grad(block[j], theta)


def local_sgd_epoch(model: LossModel, block, theta_in, steps, rng) -> np.ndarray:
    """One single-sample SGD step per entry of ``steps``."""
    block = np.asarray(block, dtype=float)
    if len(steps) < 1:
        raise ValueError("need at least one local step")
    if block.shape[0] == 0:
        raise ValueError("client has no data")
    theta = np.array(theta_in, dtype=float)
    for eta in steps:
        theta = theta - eta * stochastic_gradient(model, block, theta, rng)
        if not np.all(np.isfinite(theta)):
            raise DivergenceDetected("non-finite SGD iterate")
    return theta


def sgd(model: LossModel, points, theta0, n_steps: int, step_fn, seed: int, stream_index: int = 0) -> np.ndarray:
    """Serial single-sample SGD; returns the (n_steps + 1, p) trajectory.

    Uses the same per-client stream as client ``stream_index`` of a FedAve run.
    """
    g = rngmod.stream(seed, rngmod.SGD, stream_index)
    points = np.asarray(points, dtype=float)
    traj = [np.array(theta0, dtype=float)]
    for k in range(n_steps):
        traj.append(local_sgd_epoch(model, points, traj[-1], [step_fn(k)], g))
    return np.array(traj)


@dataclass
class FedAveResult:
    theta: np.ndarray
    trace: np.ndarray  # server parameter after each epoch, (T + 1, p)
    ledger: EpochLedger
    active: list = field(default_factory=list)


def run_fedave(model: LossModel, data: Dataset, config: FedAveConfig) -> FedAveResult:
    m = data.m
    if m < 1 or data.s < 1:
        raise ValueError("FedAve needs at least one client with data")
    k_active = math.ceil(config.tau * m - 1e-12)
    c = config.scale(model)
    sampler = rngmod.stream(config.seed, rngmod.CLIENT_SAMPLING)
    client_rngs = [rngmod.stream(config.seed, rngmod.SGD, i) for i in range(m)]
    theta = np.zeros(model.p) if config.theta0 is None else np.asarray(config.theta0, dtype=float)
    trace = [theta.copy()]
    ledger = EpochLedger(m=m, tau=config.tau)
    active_log = []
    for t in range(config.T):
        if k_active == m:
            active = np.arange(m)
        else:
            active = np.sort(sampler.choice(m, size=k_active, replace=False))
        steps = [config.step(c, t * config.b + j) for j in range(config.b)]
        updates = [local_sgd_epoch(model, data.clients[i], theta, steps, client_rngs[i]) for i in active]
        theta = np.mean(np.stack(updates), axis=0)
        trace.append(theta.copy())
        ledger.append(EpochRecord.a(config.b))
        active_log.append(active.tolist())
    return FedAveResult(theta, np.array(trace), ledger, active_log)


def pooled_clients(data: Dataset) -> Dataset:
    """Dataset holding every client sample and nothing else: FedAve's objective."""
    return Dataset(data.clients.reshape(-1, data.d), np.zeros((0, 0, data.d)), data.seed)


def estimate_sigma2(model: LossModel, data: Dataset, thetas) -> float:
    """Largest per-client variance of a single-sample gradient over the supplied thetas."""
    best = 0.0
    for theta in np.atleast_2d(np.asarray(thetas, dtype=float)):
        for c in range(data.m):
            grads = model.grad(data.clients[c], theta)
            centered = grads - grads.mean(axis=0)
            best = max(best, float(np.mean(np.sum(centered**2, axis=1))))
    return best


def run_record(model, data, config: FedAveConfig, result: FedAveResult, phis=(), extra=None) -> dict:
    pooled = pooled_clients(data)
    record = {
        "schema_version": SCHEMA_VERSION,
        "algorithm": "fedave",
        "config": asdict(config),
        "step_scale_used": config.scale(model),
        "dataset": data.header(),
        "model": list(map(str, model.key())),
        "ledger": result.ledger.rows(),
        "F_trace": [empirical_risk(model, pooled, th) for th in result.trace],
        "final_grad_norm": float(np.linalg.norm(full_gradient(model, pooled, result.theta))),
        "theta": result.theta.tolist(),
        "gamma": {str(phi): gamma(result.ledger, phi) for phi in phis},
    }
    if extra:
        record.update(extra)
    return record
