"""Bound-verification suites. Each returns a list of instance dicts with a ``pass`` flag.

``bound_scale`` multiplies the bound being checked; values below 1 tighten it and
exist so the harness can be shown to fail loudly.
"""

from __future__ import annotations

import math

import numpy as np

from . import covering, complexity
from .fedlrgd import FedLRGDConfig, choose_iterations, iteration_numerator, inexact_gd_bound, run_fedlrgd
from .problem import Dataset, SeparableModel, SoftLabelLogistic, empirical_risk, estimate_gradient_bound, reference_minimum

THETA_SAMPLES = (0.0, 0.7, -1.3)


def taylor_error_suite(qs=(2, 4, 8), slack: float = 1.05, bound_scale: float = 1.0) -> list[dict]:
    rows = []
    for g in covering.holder_suite():
        for q in qs:
            net = covering.build_l1_net(g.d, q)
            grid = covering.dense_grid(net)
            worst_err, worst_ratio, worst_theta = 0.0, -1.0, None
            for th in THETA_SAMPLES:
                theta = np.array([th])
                err = covering.sup_error(g, theta, q, grid)
                bound = covering.uniform_error_bound(g.L2(theta), g.l, q, g.eta) * bound_scale
                ratio = err / bound
                if ratio > worst_ratio:
                    worst_err, worst_ratio, worst_theta = err, ratio, th
            rows.append({
                "function": g.name, "d": g.d, "eta": g.eta, "q": q, "theta": worst_theta,
                "sup_error": worst_err, "bound_ratio": worst_ratio, "pass": worst_ratio <= slack,
            })
    return rows


def latent_rank_suite(only_lipschitz_1d: bool = False, size: int = 64, seed: int = 0, bound_scale: float = 1.0) -> list[dict]:
    rows = []
    rng = np.random.default_rng(seed)
    for g in covering.holder_suite():
        if only_lipschitz_1d and not (g.d == 1 and g.eta == 1.0):
            continue
        r = math.ceil(covering.rank_bound_threshold(g.d, g.eta))
        n = max(size, 2 * r)
        ys = rng.random((n, g.d))
        thetas = np.linspace(-2.0, 2.0, n)
        M = covering.build_latent_matrix(g.value, ys, thetas)
        L2 = max(g.L2(np.array([t])) for t in thetas)
        res = covering.theorem1_check(M, r, g.eta, L2, g.d)
        rhs = res["rhs"] * bound_scale
        rows.append({"function": g.name, "d": g.d, "eta": g.eta, "r": r, "size": n,
                     "lhs": res["lhs"], "rhs": rhs, "pass": res["lhs"] <= rhs})
    return rows


def descent_cases():
    """The FedLRGD instances whose trajectories are checked against the inexact-GD bound."""
    cases = []
    logistic = SoftLabelLogistic(3, 0.5)
    for r, m, s, seed in [(4, 6, 10, 0), (6, 6, 19, 1), (8, 8, 14, 2), (3, 5, 5, 3)]:
        cases.append((f"logistic-r{r}-seed{seed}", logistic, Dataset.generate(3, m, s, r, seed)))
    for r0, d, p in [(2, 2, 3), (3, 3, 4)]:
        cases.append((f"separable-r{r0}", SeparableModel(d, p, r0, mu=0.7, seed=r0), Dataset.generate(d, 4, 6, r0, 10 + r0)))
    cases.append(("logistic-d4", SoftLabelLogistic(4, 1.0), Dataset.generate(4, 5, 8, 5, 7)))
    return cases


def inexact_descent_suite(S: int = 25, slack: float = 1e-6, bound_scale: float = 1.0) -> list[dict]:
    rows = []
    for name, model, data in descent_cases():
        ref = reference_minimum(model, data)
        cfg = FedLRGDConfig(r=data.r, S=S, L1=model.constants.L1, seed=5)
        res = run_fedlrgd(model, data, cfg)
        for gamma_step in range(1, S + 1):
            lhs = res.F_trace[gamma_step] - ref.F_star
            rhs = inexact_gd_bound(res.F_trace[0] - ref.F_star, model.constants.kappa, model.constants.L1,
                               res.grad_errors[:gamma_step]) * bound_scale
            if not lhs <= rhs + slack:
                rows.append({"case": name, "step": gamma_step, "lhs": lhs, "rhs": rhs, "pass": False})
                break
        else:
            rows.append({"case": name, "step": S, "lhs": res.F_trace[-1] - ref.F_star, "rhs": rhs, "pass": True})
    return rows


def quantile_bracket_suite(bound_scale: float = 1.0, residual_tol: float = 1e-10) -> list[dict]:
    rows = []
    for q in range(56, 2001, 97):
        for b in range(1, 21):
            bounds = complexity.prop2_bounds(q, b)
            if not bounds["applicable"]:
                continue
            p = 1.0 - 1.0 / q
            x = complexity.erlang_quantile(p, b)
            resid = abs(complexity.erlang_cdf(x, b) - p)
            upper = bounds["upper"] * bound_scale
            ok = bounds["lower"] <= x <= upper and resid <= residual_tol
            rows.append({"q": q, "b": b, "quantile": x, "lower": bounds["lower"], "upper": upper,
                         "residual": resid, "pass": ok})
    return rows


def h_deviation_suite(points: int = 1000, bound_scale: float = 1.0) -> list[dict]:
    rows = []
    for t in np.linspace(0.0, 1.0, points):
        h = complexity.lemma3_h(float(t))
        dev = abs(h - 0.5 - t / math.sqrt(6.0))
        bound = 5.0 * t * t / 9.0 * bound_scale
        rows.append({"t": float(t), "h": h, "deviation": dev, "bound": bound, "pass": dev <= bound + complexity.ROUNDOFF})
    return rows


FEDAVE_OPTIMUM_CASES = (
    (1000, 1e-4, 1000.0, 1.0, 1.0),
    (1000, 1e-2, 1000.0, 1.0, 1.0),
    (100, 1.0, 40.0, 1.0, 1.0),
    (100, 0.5, 80.0, 0.5, 1.0),
    (500, 1e-3, 200.0, 0.8, 2.0),
    (50, 1e-6, 60.0, 1.0, 1.0),
    (10_000, 1e-2, 45.0, 1.0, 1.0),
    (200, 0.1, 100.0, 0.5, 16.0),
    (3000, 1e-5, 500.0, 0.3, 1.0),
    (20, 0.9, 1e4, 1.0, 0.5),
)


def fedave_optimum_suite(bound_scale: float = 1.0) -> list[dict]:
    rows = []
    for m, ratio, phi, tau, C in FEDAVE_OPTIMUM_CASES:
        opt = complexity.fedave_optimal_b(m, ratio, phi, tau, C)
        f = lambda b: complexity.fedave_stationarity(b, opt.C1, opt.C2, opt.C3)
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
        b_bis = complexity.bisect_root(f, 0.0, hi)
        lo_b, hi_b = opt.b_bounds
        lo_g, hi_g = opt.gamma_bounds
        hi_g *= bound_scale
        ok = (
            opt.stationarity_residual <= 1e-9
            and lo_b <= opt.b_star <= hi_b
            and abs(opt.b_star - b_bis) <= 1e-8 * b_bis
            and lo_g <= opt.gamma_estimate <= hi_g
            and opt.positive_roots == 1
        )
        rows.append({"m": m, "eps_over_Cp": ratio, "phi": phi, "tau": tau, "C": C, "b_star": opt.b_star,
                     "b_bisection": b_bis, "residual": opt.stationarity_residual, "gamma": opt.gamma_estimate,
                     "gamma_bounds": [lo_g, hi_g], "b_bounds": [lo_b, hi_b], "pass": ok})
    return rows


def max_erlang_suite(ks=(1000, 10_000), bs=(1, 5, 10), trials: int = 10_000, seed: int = 0,
               tolerance: float = 0.15, bound_scale: float = 1.0) -> list[dict]:
    rows = []
    for k in ks:
        for b in bs:
            mean, se = complexity.mc_max_erlang_mean(k, b, trials, seed)
            approx = complexity.max_erlang_approximation(k, b)
            rel = abs(mean - approx) / approx
            ok = rel <= tolerance * bound_scale
            row = {"k": k, "b": b, "mc_mean": mean, "se": se, "approximation": approx, "rel_gap": rel}
            if b == 1:
                exact = 1.0 + complexity.harmonic_number(k)
                row["harmonic"] = exact
                ok = ok and abs(mean - exact) <= 2.0 * se
            row["pass"] = ok
            rows.append(row)
    return rows


def convergence_instance(seed: int = 0):
    """Logistic instance with d=3, p=2, n=120: server r=8, eight clients of 14 samples."""
    model = SoftLabelLogistic(3, 0.5)
    return model, Dataset.generate(3, 8, 14, 8, seed)


def fedlrgd_convergence(eps: float = 1e-3, seed: int = 0) -> dict:
    model, data = convergence_instance(seed)
    ref = reference_minimum(model, data)
    F0_gap = empirical_risk(model, data, np.zeros(model.p)) - ref.F_star
    B = estimate_gradient_bound(model)
    S = choose_iterations(model.constants.kappa, iteration_numerator(F0_gap, B, model.p, model.constants.mu), eps)
    res = run_fedlrgd(model, data, FedLRGDConfig(r=data.r, S=S, L1=model.constants.L1, seed=seed))
    gap = res.F_trace[-1] - ref.F_star
    return {"r": data.r, "S": S, "B_estimate": B, "gap": gap, "pass": gap <= eps}


SUITES = {
    "lemma1": taylor_error_suite,
    "theorem1": latent_rank_suite,
    "lemma2": inexact_descent_suite,
    "prop2": quantile_bracket_suite,
    "lemma3": h_deviation_suite,
    "appendixD": fedave_optimum_suite,
    "eq13mc": max_erlang_suite,
}
