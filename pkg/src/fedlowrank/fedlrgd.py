"""Federated low-rank gradient descent.

The server evaluates its own r samples at r parameter vectors, clients learn
weights expressing their gradient sums through those server evaluations, and
the server then runs inexact gradient descent alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from decimal import Decimal, localcontext

import numpy as np

from . import rng as rngmod
from .complexity import EpochLedger, EpochRecord, gamma
from .errors import DivergenceDetected, InvalidCondition, SingularMatrix
from .numerics import enumerate_multi_indices, invert, monomials
from .problem import Dataset, LossModel, empirical_risk, full_gradient

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FedLRGDConfig:
    r: int
    S: int
    L1: float
    seed: int = 0
    singular_tol: float = 1e-12
    max_retries: int = 5
    theta0: tuple | None = None

    def __post_init__(self):
        if self.r < 1 or self.S < 1:
            raise ValueError("need r >= 1 and S >= 1")
        if not self.L1 > 0:
            raise ValueError("L1 must be positive")


@dataclass(frozen=True, eq=False)
class ServerPrecomp:
    varthetas: np.ndarray  # (r, p)
    G: np.ndarray  # (p, r, r); G[i, j, k] = g_i(x_j; vartheta_k)
    G_inv: np.ndarray  # (p, r, r)
    cond: np.ndarray  # (p,)
    attempts: int


def _check_inverse(G: np.ndarray, G_inv: np.ndarray) -> None:
    eye = np.eye(G.shape[0])
    err = np.max(np.abs(G @ G_inv - eye))
    if err > 1e-6:
        raise SingularMatrix(f"inverse check failed: max |G G^-1 - I| = {err:.3e}")


def server_precompute(model: LossModel, data: Dataset, config: FedLRGDConfig) -> ServerPrecomp:
    """Draw r parameter vectors and invert the p matrices of server partials.

    A singular draw is retried with a fresh stream up to ``max_retries`` times.
    """
    r, p = config.r, model.p
    if data.r != r:
        raise ValueError(f"server holds {data.r} samples but config.r = {r}")
    last: Exception | None = None
    for attempt in range(config.max_retries + 1):
        g = rngmod.stream(config.seed, rngmod.VARTHETA, attempt)
        varthetas = g.standard_normal((r, p)) / math.sqrt(p)
        grads = model.grad(data.server[:, None, :], varthetas[None, :, :])  # (r_j, r_k, p)
        G = np.moveaxis(grads, -1, 0).copy()
        G_inv = np.empty_like(G)
        cond = np.empty(p)
        try:
            for i in range(p):
                G_inv[i], cond[i] = invert(G[i], config.singular_tol)
                _check_inverse(G[i], G_inv[i])
        except SingularMatrix as exc:
            last = exc
            continue
        return ServerPrecomp(varthetas, G, G_inv, cond, attempt + 1)
    raise SingularMatrix(
        f"server matrices stayed singular after {config.max_retries + 1} draws; "
        f"the non-singularity assumption fails for this data ({last})"
    )


def client_weights(model: LossModel, block: np.ndarray, precomp: ServerPrecomp) -> np.ndarray:
    """Weights v^(i,c) as a (p, r) array for one client's (s, d) data block."""
    p, r = precomp.G.shape[0], precomp.G.shape[1]
    block = np.asarray(block, dtype=float)
    if block.size == 0:
        return np.zeros((p, r))
    block = block.reshape(-1, block.shape[-1])
    grads = model.grad(block[:, None, :], precomp.varthetas[None, :, :])  # (s, r, p)
    h = grads.sum(axis=0).T  # (p, r): row i is sum_j g_i(x_cj; vartheta_1..r)
    return np.einsum("ik,ikl->il", h, precomp.G_inv)


def pairwise_sum(arrays) -> np.ndarray:
    """Deterministic balanced-tree sum of a list of equally shaped arrays."""
    items = list(arrays)
    if not items:
        raise ValueError("nothing to sum")
    while len(items) > 1:
        nxt = [items[k] + items[k + 1] for k in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def aggregate_weights(per_client, p: int, r: int) -> np.ndarray:
    """Sum of client weights in client-index order; zeros when there are no clients."""
    per_client = list(per_client)
    if not per_client:
        return np.zeros((p, r))
    return pairwise_sum(per_client)


def approx_gradient(model: LossModel, server: np.ndarray, theta, W: np.ndarray, n: int) -> np.ndarray:
    """(1/n) sum_k g_i(x_0k; theta) (1 + W[i, k]) for every coordinate i."""
    grads = model.grad(server, np.asarray(theta, dtype=float))  # (r, p)
    return np.sum(grads.T * (1.0 + W), axis=1) / n


def inexact_gd(theta0, oracle, L1: float, S: int) -> np.ndarray:
    """Iterates theta_g = theta_{g-1} - oracle(theta_{g-1}) / L1; returns the (S+1, p) trajectory."""
    if S < 1:
        raise ValueError("S must be at least 1")
    theta = np.array(theta0, dtype=float)
    traj = np.empty((S + 1, theta.size))
    traj[0] = theta
    for k in range(1, S + 1):
        theta = theta - oracle(theta) / L1
        if not np.all(np.isfinite(theta)):
            raise DivergenceDetected(f"non-finite iterate at step {k}")
        traj[k] = theta
    return traj


def iteration_numerator(F0_gap: float, B: float, p: int, mu: float) -> float:
    """F(theta_0) - F_* + 9 (B+3)^4 p / (2 mu)."""
    return F0_gap + 9.0 * (B + 3.0) ** 4 * p / (2.0 * mu)


def choose_iterations(kappa: float, numerator: float, eps: float) -> int:
    """Smallest S >= 1 with (1 - 1/kappa)^S * numerator <= eps."""
    if not kappa > 1:
        raise InvalidCondition(f"kappa must exceed 1, got {kappa}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if numerator < eps:
        raise ValueError("numerator must be at least eps")
    ratio = numerator / eps
    rate = math.log(kappa / (kappa - 1.0))
    S = max(1, math.ceil(math.log(ratio) / rate))
    shrink = 1.0 - 1.0 / kappa

    def ok(k: int) -> bool:
        # relative slack absorbs round-off in the power
        return ratio * shrink**k <= 1.0 + 1e-12

    while S > 1 and ok(S - 1):
        S -= 1
    while not ok(S):
        S += 1
    return S


def _ceil_exp(log_value: float) -> int:
    """ceil(exp(log_value)) as an exact integer, for arbitrarily large values."""
    if log_value < 700:
        return math.ceil(math.exp(log_value))
    with localcontext() as ctx:
        ctx.prec = int(log_value / math.log(10)) + 30
        return int(Decimal(log_value).exp().to_integral_value(rounding="ROUND_CEILING"))


def rank_branches(d, eta, alpha, L2, kappa, mu, B, p, eps, F0_gap) -> tuple[float, float]:
    """Natural logs of the two quantities whose max (rounded up) is the theoretical rank."""
    first = 1.0 + 0.5 * math.log(d) + d * math.log(2.0) + d * math.log(eta + d)
    log_A = (
        d * math.log(L2)
        + d * math.log(eta)
        + eta * (d + 1)
        + 0.5 * eta * math.log(d)
        + eta * d * math.log(2 * eta + 2 * d)
        - eta * d * math.log(eta - 1)
    )
    num = iteration_numerator(F0_gap, B, p, mu)
    log_Bterm = math.log(kappa) + math.log(num) - math.log(kappa - 1.0) - math.log(eps)
    second = (log_A + 0.5 * d * log_Bterm) / (eta - (2 * alpha + 2) * d)
    return first, second


def choose_rank_theoretical(d, eta, alpha, L2, kappa, mu, B, p, eps, F0_gap) -> int:
    if not eta > (2 * alpha + 2) * d:
        raise InvalidCondition(f"need eta > (2 alpha + 2) d = {(2 * alpha + 2) * d}, got eta={eta}")
    if not 0 < eps <= 9.0 * (B + 3.0) ** 4 * p / (8.0 * mu):
        raise InvalidCondition("eps must lie in (0, 9 (B+3)^4 p / (8 mu)]")
    if not kappa > 1:
        raise InvalidCondition("kappa must exceed 1")
    first, second = rank_branches(d, eta, alpha, L2, kappa, mu, B, p, eps, F0_gap)
    return _ceil_exp(max(first, second))


# ------------------------------------------------------------------ full run


@dataclass
class FedLRGDResult:
    theta: np.ndarray
    trajectory: np.ndarray
    ledger: EpochLedger
    precomp: ServerPrecomp
    W: np.ndarray
    messages: list = field(default_factory=list)
    F_trace: list = field(default_factory=list)
    grad_errors: list = field(default_factory=list)


def run_fedlrgd(model: LossModel, data: Dataset, config: FedLRGDConfig, track: bool = True) -> FedLRGDResult:
    """Run all r + 2 epochs and return the output, trajectory, ledger and uplink messages.

    With ``track`` the objective and the squared gradient error are recorded at every
    iterate; this is bookkeeping outside the protocol and is not charged to the ledger.
    """
    r, p, m = config.r, model.p, data.m
    ledger = EpochLedger(m=m, tau=1.0)

    precomp = server_precompute(model, data, config)
    ledger.append(EpochRecord.server(r * r))

    local = [client_weights(model, data.clients[c], precomp) for c in range(m)]
    # epoch t (1..r) carries column t of every client's weights: p numbers per client
    received = [np.zeros((p, r)) for _ in range(m)]
    messages = []
    for t in range(r):
        for c in range(m):
            msg = local[c][:, t].copy()
            messages.append({"epoch": t + 2, "client": c + 1, "payload": msg})
            received[c][:, t] = msg
        ledger.append(EpochRecord.a(r * data.s) if t == 0 else EpochRecord.comm())
    W = aggregate_weights(received, p, r)

    theta0 = np.zeros(p) if config.theta0 is None else np.asarray(config.theta0, dtype=float)

    def oracle(theta):
        return approx_gradient(model, data.server, theta, W, data.n)

    trajectory = inexact_gd(theta0, oracle, config.L1, config.S)
    ledger.append(EpochRecord.server(r * config.S))

    F_trace, errs = [], []
    if track:
        for th in trajectory:
            F_trace.append(empirical_risk(model, data, th))
        for th in trajectory[:-1]:
            diff = oracle(th) - full_gradient(model, data, th)
            errs.append(float(diff @ diff))
    return FedLRGDResult(trajectory[-1].copy(), trajectory, ledger, precomp, W, messages, F_trace, errs)


def inexact_gd_bound(F0_gap: float, kappa: float, L1: float, errors) -> float:
    """(1-1/kappa)^S (F0 - F*) + (1/(2 L1)) sum_g (1-1/kappa)^{S-g} e_g."""
    S = len(errors)
    rho = 1.0 - 1.0 / kappa
    tail = math.fsum(rho ** (S - g) * e for g, e in enumerate(errors, start=1))
    return rho**S * F0_gap + tail / (2.0 * L1)


# ------------------------------------------------------------- diagnostics


def conditioning_report(precomp: ServerPrecomp, alpha: float | None = None) -> dict:
    """Observed ||G^-1||_op per coordinate, with r^alpha alongside for comparison only."""
    r = precomp.G.shape[1]
    norms = [float(np.linalg.norm(Gi, 2)) for Gi in precomp.G_inv]
    out = {"r": r, "inv_op_norm": norms, "cond": precomp.cond.tolist(), "attempts": precomp.attempts}
    if alpha is not None:
        out["alpha"] = alpha
        out["r_pow_alpha"] = float(r**alpha)
    return out


def phi_matrix(server: np.ndarray, net, l: int) -> np.ndarray:
    """Matrix of piecewise monomials 1{x in I} x^v evaluated at the server samples.

    Rows enumerate (cell, multi-index) pairs; columns enumerate server samples.
    """
    server = np.atleast_2d(np.asarray(server, dtype=float))
    indices = enumerate_multi_indices(server.shape[1], l)
    cells = net.assign(server)
    mono = monomials(server, indices)  # (r, K)
    Phi = np.zeros((len(net) * len(indices), server.shape[0]))
    for j, c in enumerate(cells):
        Phi[c * len(indices) : (c + 1) * len(indices), j] = mono[j]
    return Phi


def phi_diagnostic(server: np.ndarray, net, l: int) -> dict:
    Phi = phi_matrix(server, net, l)
    s = np.linalg.svd(Phi, compute_uv=False)
    square = Phi.shape[0] == Phi.shape[1]
    cond = float(s[0] / s[-1]) if square and s[-1] > 0 else float("inf")
    return {"shape": list(Phi.shape), "square": square, "cond": cond}


def run_record(model, data, config: FedLRGDConfig, result: FedLRGDResult, phis=(), extra=None) -> dict:
    cfg = asdict(config)
    final_grad = full_gradient(model, data, result.theta)
    record = {
        "schema_version": SCHEMA_VERSION,
        "algorithm": "fedlrgd",
        "config": cfg,
        "dataset": data.header(),
        "model": list(map(str, model.key())),
        "ledger": result.ledger.rows(),
        "F_trace": list(map(float, result.F_trace)),
        "final_grad_norm": float(np.linalg.norm(final_grad)),
        "theta": result.theta.tolist(),
        "gamma": {str(phi): gamma(result.ledger, phi) for phi in phis},
    }
    if extra:
        record.update(extra)
    return record


def dumps(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True)
