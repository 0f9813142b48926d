"""Partitioned datasets, loss models and the empirical risk."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import AssumptionViolation
from .numerics import enumerate_multi_indices, monomials


# ---------------------------------------------------------------- dataset


@dataclass(frozen=True, eq=False)
class Dataset:
    """Server samples plus ``m`` clients holding ``s`` samples each, all in [0,1]^d."""

    server: np.ndarray
    clients: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        server = np.array(self.server, dtype=float, ndmin=2)
        clients = np.array(self.clients, dtype=float)
        if clients.ndim != 3:
            clients = clients.reshape(0, 0, server.shape[1])
        if server.shape[0] < 1:
            raise ValueError("the server needs at least one sample")
        if clients.shape[2] != server.shape[1]:
            raise ValueError("server and client points must share a dimension")
        for block in (server, clients):
            if block.size and (np.any(block < 0.0) or np.any(block > 1.0) or not np.all(np.isfinite(block))):
                raise ValueError("all coordinates must lie in [0, 1]")
        server.setflags(write=False)
        clients.setflags(write=False)
        object.__setattr__(self, "server", server)
        object.__setattr__(self, "clients", clients)

    @property
    def d(self) -> int:
        return self.server.shape[1]

    @property
    def r(self) -> int:
        return self.server.shape[0]

    @property
    def m(self) -> int:
        return self.clients.shape[0]

    @property
    def s(self) -> int:
        return self.clients.shape[1]

    @property
    def n(self) -> int:
        return self.m * self.s + self.r

    def all_points(self) -> np.ndarray:
        """Flat (n, d) array: server rows first, then client 1, client 2, ..."""
        return np.concatenate([self.server, self.clients.reshape(-1, self.d)], axis=0)

    def block_ids(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.r, dtype=int), np.repeat(np.arange(1, self.m + 1), self.s)])

    @classmethod
    def generate(cls, d: int, m: int, s: int, r: int, seed: int) -> "Dataset":
        if d < 1 or r < 1 or m < 0 or s < 0:
            raise ValueError("need d >= 1, r >= 1, m >= 0, s >= 0")
        g = rngmod.stream(seed, rngmod.DATA)
        server = g.random((r, d))
        clients = g.random((m, s, d))
        return cls(server, clients, seed)

    def with_server(self, server) -> "Dataset":
        return Dataset(server, self.clients, self.seed)

    def header(self) -> dict:
        return {"d": self.d, "m": self.m, "s": self.s, "r": self.r, "n": self.n, "seed": self.seed}

    def save(self, csv_path, json_path=None) -> None:
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            for bid, row in zip(self.block_ids(), self.all_points()):
                w.writerow([int(bid)] + [repr(float(v)) for v in row])
        json_path.write_text(json.dumps(self.header(), indent=2) + "\n")

    @classmethod
    def load(cls, csv_path, json_path=None) -> "Dataset":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        head = json.loads(json_path.read_text())
        d, m, s, r = (int(head[k]) for k in ("d", "m", "s", "r"))
        server, clients = [], [[] for _ in range(m)]
        with open(csv_path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                bid = int(row[0])
                pt = [float(v) for v in row[1:]]
                if len(pt) != d:
                    raise ValueError(f"row has {len(pt)} coordinates, header says d={d}")
                (server if bid == 0 else clients[bid - 1]).append(pt)
        if len(server) != r or any(len(c) != s for c in clients):
            raise ValueError("CSV block sizes disagree with the JSON header")
        return cls(np.array(server), np.array(clients).reshape(m, s, d), head.get("seed"))


# ------------------------------------------------------------ loss models


@dataclass(frozen=True)
class LossConstants:
    L1: float | None = None
    mu: float | None = None
    eta: float | None = None
    L2: float | None = None
    B: float | None = None

    def __post_init__(self):
        for name in ("L1", "mu", "eta", "L2", "B"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"declared constant {name} must be positive, got {v}")
        if self.L1 is not None and self.mu is not None and self.L1 < self.mu:
            raise ValueError("L1 must be at least mu")

    @property
    def kappa(self) -> float | None:
        if self.L1 is None or self.mu is None:
            return None
        return self.L1 / self.mu


class LossModel:
    """Loss f(x; theta) on [0,1]^d x R^p.

    ``value`` and ``grad`` broadcast leading dimensions of ``x`` (..., d)
    against ``theta`` (..., p).
    """

    name = "base"
    d: int
    p: int
    constants: LossConstants = LossConstants()

    def value(self, x, theta) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x, theta) -> np.ndarray:
        raise NotImplementedError

    def partial(self, i: int, x, theta) -> np.ndarray:
        """g_i(x; theta), the i-th coordinate of the gradient (0-based)."""
        if not 0 <= i < self.p:
            raise IndexError(f"coordinate {i} out of range for p={self.p}")
        return self.grad(x, theta)[..., i]

    def key(self) -> tuple:
        return (self.name, self.d, self.p)


def _softplus(t):
    return np.logaddexp(0.0, t)


def _sigmoid(t):
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(t):
    t = np.asarray(t, dtype=float)
    return _sigmoid(t.reshape(-1)).reshape(t.shape)


class ZeroModel(LossModel):
    name = "zero"

    def __init__(self, d: int, p: int):
        self.d, self.p = d, p

    def value(self, x, theta):
        x, theta = np.asarray(x, float), np.asarray(theta, float)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], theta.shape[:-1]))

    def grad(self, x, theta):
        x, theta = np.asarray(x, float), np.asarray(theta, float)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], theta.shape[:-1]) + (self.p,))


class QuadraticModel(LossModel):
    """f(x; theta) = 0.5 ||theta||^2, independent of x."""

    name = "quadratic"

    def __init__(self, d: int, p: int, L1: float = 1.0, mu: float = 1.0):
        self.d, self.p = d, p
        self.constants = LossConstants(L1=L1, mu=mu)

    def value(self, x, theta):
        x, theta = np.asarray(x, float), np.asarray(theta, float)
        v = 0.5 * np.sum(theta * theta, axis=-1)
        return np.broadcast_to(v, np.broadcast_shapes(x.shape[:-1], theta.shape[:-1])).copy()

    def grad(self, x, theta):
        x, theta = np.asarray(x, float), np.asarray(theta, float)
        shape = np.broadcast_shapes(x.shape[:-1], theta.shape[:-1]) + (self.p,)
        return np.broadcast_to(theta, shape).copy()


def logistic_constants(d: int, mu: float) -> LossConstants:
    """Certified constants of the regularized soft-label logistic loss."""
    if d < 2 or not mu > 0:
        raise ValueError("need d >= 2 and mu > 0")
    return LossConstants(L1=(d - 1) / 2 + mu, mu=mu, eta=2.0, L2=1.0)


class SoftLabelLogistic(LossModel):
    """Cross-entropy with soft label z in [0,1] plus (mu/2)||theta||^2.

    A data point is x = (y, z) with y in [0,1]^(d-1); p = d - 1.
    """

    name = "logistic"

    def __init__(self, d: int, mu: float):
        if d < 2:
            raise ValueError("logistic model needs d >= 2")
        if mu < 0:
            raise ValueError("mu must be non-negative")
        self.d, self.p, self.mu = d, d - 1, float(mu)
        self.constants = logistic_constants(d, mu) if mu > 0 else LossConstants(L1=(d - 1) / 2, eta=2.0, L2=1.0)

    def key(self):
        return (self.name, self.d, self.mu)

    def value(self, x, theta):
        x, theta = np.asarray(x, float), np.asarray(theta, float)
        y, z = x[..., :-1], x[..., -1]
        t = np.sum(y * theta, axis=-1)
        reg = 0.5 * self.mu * np.sum(theta * theta, axis=-1)
        return z * _softplus(-t) + (1.0 - z) * _softplus(t) + reg

    def grad(self, x, theta):
        x, theta = np.asarray(x, float), np.asarray(theta, float)
        y, z = x[..., :-1], x[..., -1]
        t = np.sum(y * theta, axis=-1)
        return (sigmoid(t) - z)[..., None] * y + self.mu * theta


class SeparableModel(LossModel):
    """Strongly convex loss whose partials have exact rank r0 in x.

    f = (mu/2)||theta||^2 + sum_w c_w phi_w(x) softplus(u_w . theta)
    with phi_w the first r0 monomials in graded order (phi_1 = 1), so
    g_i(x; theta) = sum_w phi_w(x) psi_{w,i}(theta).
    """

    name = "separable"

    def __init__(self, d: int, p: int, r0: int, mu: float = 1.0, seed: int = 0):
        if r0 < 1:
            raise ValueError("r0 must be positive")
        l = 0
        while len(enumerate_multi_indices(d, l)) < r0:
            l += 1
        self.d, self.p, self.r0, self.mu, self.seed = d, p, r0, float(mu), seed
        self.indices = enumerate_multi_indices(d, l)[:r0]
        g = rngmod.stream(seed, rngmod.MODEL)
        self.U = g.standard_normal((r0, p)) / math.sqrt(p)
        self.c = g.uniform(0.5, 1.5, r0)
        L1 = self.mu + float(np.sum(self.c * np.sum(self.U**2, axis=1))) / 4
        self.constants = LossConstants(L1=L1, mu=self.mu)

    def key(self):
        return (self.name, self.d, self.p, self.r0, self.mu, self.seed)

    def features(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        flat = x.reshape(-1, self.d)
        return monomials(flat, self.indices).reshape(x.shape[:-1] + (self.r0,))

    def value(self, x, theta):
        theta = np.asarray(theta, float)
        phi = self.features(x)
        t = theta @ self.U.T
        return 0.5 * self.mu * np.sum(theta * theta, axis=-1) + np.sum(self.c * phi * _softplus(t), axis=-1)

    def grad(self, x, theta):
        theta = np.asarray(theta, float)
        phi = self.features(x)
        t = theta @ self.U.T
        w = self.c * phi * sigmoid(t)
        return w @ self.U + self.mu * theta


class TinyMLP(LossModel):
    """Two-layer network with sigmoid hidden units and a sigmoid output.

    Input x = (y, z); y feeds the network and z is a soft label scored by
    cross-entropy. theta packs (W1, b1, w2, b2). Not convex.
    """

    name = "mlp"

    def __init__(self, d: int, hidden: int = 8):
        if d < 2 or hidden < 1:
            raise ValueError("need d >= 2 and hidden >= 1")
        self.d, self.h = d, hidden
        self.dy = d - 1
        self.p = hidden * self.dy + 2 * hidden + 1
        if self.p > 200:
            raise ValueError(f"TinyMLP is capped at 200 parameters, got {self.p}")

    def key(self):
        return (self.name, self.d, self.h)

    def unpack(self, theta):
        theta = np.asarray(theta, float)
        h, dy = self.h, self.dy
        lead = theta.shape[:-1]
        W1 = theta[..., : h * dy].reshape(lead + (h, dy))
        b1 = theta[..., h * dy : h * dy + h]
        w2 = theta[..., h * dy + h : h * dy + 2 * h]
        b2 = theta[..., -1]
        return W1, b1, w2, b2

    def _forward(self, x, theta):
        x = np.asarray(x, float)
        y, z = x[..., :-1], x[..., -1]
        W1, b1, w2, b2 = self.unpack(theta)
        a = np.matmul(W1, y[..., None])[..., 0] + b1
        hid = sigmoid(a)
        out = np.sum(w2 * hid, axis=-1) + b2
        return y, z, hid, out, w2

    def value(self, x, theta):
        _, z, _, out, _ = self._forward(x, theta)
        return z * _softplus(-out) + (1.0 - z) * _softplus(out)

    def grad(self, x, theta):
        y, z, hid, out, w2 = self._forward(x, theta)
        delta = sigmoid(out) - z
        da = (delta[..., None] * w2) * hid * (1.0 - hid)
        gW1 = da[..., :, None] * y[..., None, :]
        lead = gW1.shape[:-2]
        return np.concatenate(
            [gW1.reshape(lead + (-1,)), da, delta[..., None] * hid, delta[..., None]], axis=-1
        )


# ------------------------------------------------------------- empirical risk


def empirical_risk(model: LossModel, data: Dataset, theta, form: str = "split") -> float:
    """Average loss over all n samples, summed flat or as server plus clients."""
    theta = np.asarray(theta, float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if form == "flat":
        return math.fsum(model.value(data.all_points(), theta)) / data.n
    if form != "split":
        raise ValueError(f"unknown form {form!r}")
    total = math.fsum(model.value(data.server, theta))
    for c in range(data.m):
        total += math.fsum(model.value(data.clients[c], theta))
    return total / data.n


def full_gradient(model: LossModel, data: Dataset, theta) -> np.ndarray:
    theta = np.asarray(theta, float)
    return model.grad(data.all_points(), theta).sum(axis=0) / data.n


def is_epsilon_approximate(F_value: float, F_star: float, eps: float) -> bool:
    """F - F_* <= eps, inclusive up to the round-off of the subtraction itself."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    slack = 4 * np.finfo(float).eps * max(abs(F_value), abs(F_star))
    return bool(F_value - F_star <= eps + slack)


def _sample_pairs(model: LossModel, count: int, rng, radius: float):
    x = rng.random((count, model.d))
    t1 = rng.uniform(-radius, radius, (count, model.p))
    t2 = rng.uniform(-radius, radius, (count, model.p))
    return x, t1, t2


def check_smoothness_in_theta(model: LossModel, sample_count: int, rng, radius: float = 3.0) -> float:
    """Largest observed ||grad f(x;t1) - grad f(x;t2)|| / ||t1 - t2|| over random triples."""
    L1 = model.constants.L1
    if L1 is None:
        raise ValueError("model does not declare L1")
    x, t1, t2 = _sample_pairs(model, sample_count, rng, radius)
    num = np.linalg.norm(model.grad(x, t1) - model.grad(x, t2), axis=-1)
    den = np.linalg.norm(t1 - t2, axis=-1)
    ratios = num / den
    worst = int(np.argmax(ratios))
    if ratios[worst] > L1 * (1 + 1e-6):
        raise AssumptionViolation(
            f"gradient Lipschitz ratio {ratios[worst]:.6g} exceeds declared L1={L1}",
            {"x": x[worst].tolist(), "theta1": t1[worst].tolist(), "theta2": t2[worst].tolist(),
             "ratio": float(ratios[worst])},
        )
    return float(ratios[worst])


def check_strong_convexity(model: LossModel, sample_count: int, rng, radius: float = 3.0) -> float:
    """Smallest observed 2(f1 - f2 - g2.(t1-t2)) / ||t1 - t2||^2, compared with mu."""
    mu = model.constants.mu
    if mu is None:
        raise ValueError("model does not declare mu")
    x, t1, t2 = _sample_pairs(model, sample_count, rng, radius)
    diff = t1 - t2
    gap = model.value(x, t1) - model.value(x, t2) - np.sum(model.grad(x, t2) * diff, axis=-1)
    ratios = 2.0 * gap / np.sum(diff * diff, axis=-1)
    worst = int(np.argmin(ratios))
    if ratios[worst] < mu * (1 - 1e-6):
        raise AssumptionViolation(
            f"strong convexity ratio {ratios[worst]:.6g} is below declared mu={mu}",
            {"x": x[worst].tolist(), "theta1": t1[worst].tolist(), "theta2": t2[worst].tolist(),
             "ratio": float(ratios[worst])},
        )
    return float(ratios[worst])


def estimate_gradient_bound(model: LossModel, count: int = 100_000, seed: int = 0, radius: float = 1.0) -> float:
    """max |g_i(x; theta)| over seeded uniform samples of x and theta in [-radius, radius]^p.

    An estimate, not a certificate.
    """
    g = rngmod.stream(seed, rngmod.CHECKS, 1)
    best = 0.0
    for start in range(0, count, 10_000):
        k = min(10_000, count - start)
        x = g.random((k, model.d))
        th = g.uniform(-radius, radius, (k, model.p))
        best = max(best, float(np.max(np.abs(model.grad(x, th)))))
    return best


def gradient_descent(model, data, theta0, step: float, steps: int, tol: float = 0.0):
    """Plain full-gradient descent. Returns (theta, steps_taken)."""
    theta = np.array(theta0, dtype=float)
    for k in range(steps):
        gvec = full_gradient(model, data, theta)
        if tol > 0 and np.linalg.norm(gvec) < tol:
            return theta, k
        theta = theta - step * gvec
    return theta, steps


@dataclass
class Reference:
    theta: np.ndarray
    F_star: float
    steps: int
    grad_norm: float


_REFERENCE_CACHE: dict = {}


def reference_minimum(model: LossModel, data: Dataset, max_steps: int = 100_000, tol: float = 1e-10) -> Reference:
    """Long-run exact GD with step 1/L1, cached per (model, dataset)."""
    key = (model.key(), id(data), data.n)
    hit = _REFERENCE_CACHE.get(key)
    if hit is not None and hit[0] is data:
        return hit[1]
    L1 = model.constants.L1
    if L1 is None:
        raise ValueError("model does not declare L1")
    theta, k = gradient_descent(model, data, np.zeros(model.p), 1.0 / L1, max_steps, tol)
    ref = Reference(theta, empirical_risk(model, data, theta), k,
                    float(np.linalg.norm(full_gradient(model, data, theta))))
    _REFERENCE_CACHE[key] = (data, ref)
    return ref
