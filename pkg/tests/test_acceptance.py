"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

from __future__ import annotations


import numpy as np
import pytest

from conftest import record_acceptance
from fedlowrank import verify
from fedlowrank.complexity import EpochLedger, EpochRecord, fedlrgd_gamma, gamma, lemma3_h, proposition1_sweep
from fedlowrank.fedave import FedAveConfig, pooled_clients, run_fedave
from fedlowrank.fedlrgd import FedLRGDConfig, approx_gradient, run_fedlrgd
from fedlowrank.problem import Dataset, SeparableModel, empirical_risk, full_gradient, reference_minimum
from fedlowrank.rank_probe import ProbeConfig, approximate_rank, build_gradient_tensor, rank_histogram


def _failures(rows):
    return [r for r in rows if not r["pass"]]


def test_criterion_01_gamma_closed_form():
    rng = np.random.default_rng(1)
    bad, lr_checked = [], 0
    # draw until 25 configurations with invertible server matrices have been checked
    for _ in range(200):
        if lr_checked == 25:
            break
        r, s, S, m = (int(v) for v in rng.integers(1, 12, 4))
        phi = float(rng.choice([0.5, 1.0, 10.0, 50.0, 1000.0]))
        d = int(rng.integers(1, 4))
        p = int(rng.integers(1, 5))
        model = SeparableModel(d, p, r, mu=0.5, seed=int(rng.integers(1000)))
        data = Dataset.generate(d, m, s, r, int(rng.integers(1000)))
        try:
            res = run_fedlrgd(model, data, FedLRGDConfig(r=r, S=S, L1=model.constants.L1), track=False)
        except ArithmeticError:
            continue
        lr_checked += 1
        if gamma(res.ledger, phi) != r * r + r * s + r * S + phi * m * r:
            bad.append(("fedlrgd", r, s, S, m, phi))
    checked = 0
    for _ in range(25):
        T, b, m = (int(v) for v in rng.integers(1, 10, 3))
        tau = float(rng.choice([0.25, 0.5, 1.0]))
        phi = float(rng.choice([1.0, 10.0, 100.0]))
        led = EpochLedger(m=m, tau=tau)
        for _ in range(T):
            led.append(EpochRecord.a(b))
        checked += 1
        if gamma(led, phi) != T * (b + phi * tau * m):
            bad.append(("fedave", T, b, m, tau, phi))
    ok = not bad and lr_checked >= 20 and checked >= 20
    record_acceptance(1, "oracle complexity ledger equals closed forms", ok,
                      f"{lr_checked} FedLRGD and {checked} FedAve configs, {len(bad)} mismatches")
    assert ok, bad


def test_criterion_02_exact_low_rank_recovery():
    worst_grad, worst_traj = 0.0, 0.0
    for k, (r0, d, p, m) in enumerate([(1, 1, 2, 3), (2, 2, 3, 5), (3, 2, 4, 10), (3, 3, 5, 7), (2, 3, 5, 10)]):
        model = SeparableModel(d, p, r0, mu=0.6, seed=k)
        data = Dataset.generate(d, m, 6, r0, 50 + k)
        res = run_fedlrgd(model, data, FedLRGDConfig(r=r0, S=20, L1=model.constants.L1, seed=k))
        for th in np.random.default_rng(k).normal(size=(50, p)):
            diff = approx_gradient(model, data.server, th, res.W, data.n) - full_gradient(model, data, th)
            worst_grad = max(worst_grad, float(np.max(np.abs(diff))))
        theta = np.zeros(p)
        for it in range(21):
            worst_traj = max(worst_traj, float(np.max(np.abs(res.trajectory[it] - theta))))
            theta = theta - full_gradient(model, data, theta) / model.constants.L1
    ok = worst_grad <= 1e-8 and worst_traj <= 1e-8
    record_acceptance(2, "exact recovery on separable losses", ok,
                      f"max grad err {worst_grad:.2e}, max trajectory err {worst_traj:.2e}")
    assert ok


def test_criterion_03_piecewise_taylor_error():
    rows = verify.taylor_error_suite()
    worst = max(r["bound_ratio"] for r in rows)
    ok = not _failures(rows)
    record_acceptance(3, "piecewise Taylor sup error within bound x1.05", ok,
                      f"{len(rows)} cases, worst ratio {worst:.3f}")
    assert ok, _failures(rows)


def test_criterion_04_latent_rank_bound():
    rows = verify.latent_rank_suite(only_lipschitz_1d=True)
    ok = bool(rows) and not _failures(rows) and all(r["r"] == 6 and r["size"] == 64 for r in rows)
    worst = max(r["lhs"] / r["rhs"] for r in rows)
    record_acceptance(4, "latent matrix truncation error within closed-form bound", ok,
                      f"{len(rows)} functions at r=6, worst lhs/rhs {worst:.2e}")
    assert ok, rows


def test_criterion_05_inexact_descent_inequality():
    rows = verify.inexact_descent_suite()
    ok = not _failures(rows)
    record_acceptance(5, "inexact GD bound along FedLRGD runs", ok, f"{len(rows)} runs")
    assert ok, _failures(rows)


def test_criterion_06_erlang_quantile_bracket():
    rows = verify.quantile_bracket_suite()
    ok = bool(rows) and not _failures(rows)
    worst = max(r["residual"] for r in rows)
    record_acceptance(6, "Erlang quantile bracket", ok, f"{len(rows)} (q, b) pairs, max residual {worst:.1e}")
    assert ok, _failures(rows)


def test_criterion_07_trig_expansion_bound():
    rows = verify.h_deviation_suite()
    h0 = abs(lemma3_h(0.0) - 0.5)
    ok = len(rows) == 1000 and not _failures(rows) and h0 <= 1e-12
    record_acceptance(7, "quadratic deviation bound of h(t)", ok, f"1000 grid points, |h(0)-1/2| = {h0:.1e}")
    assert ok, _failures(rows)


def test_criterion_08_fedave_optimal_local_steps():
    rows = verify.fedave_optimum_suite()
    ok = len(rows) == 10 and not _failures(rows)
    worst = max(r["residual"] for r in rows)
    record_acceptance(8, "FedAve optimal b: root, brackets, bisection agreement", ok,
                      f"10 parameter sets, max residual {worst:.1e}")
    assert ok, _failures(rows)


@pytest.mark.xfail(strict=True, reason="log k + 2b misses the exact mean by 21-27% for b in {5, 10}; "
                                       "quadrature confirms the gap is not sampling noise")
def test_criterion_09_max_erlang_approximation():
    rows = verify.max_erlang_suite()
    failing = _failures(rows)
    gaps = ", ".join(f"b={r['b']},k={r['k']}:{r['rel_gap']:.1%}" for r in rows)
    record_acceptance(9, "Monte Carlo max-of-Erlang within 15% of log k + 2b", not failing, gaps)
    assert not failing, failing


def test_criterion_10_convergence():
    lr = verify.fedlrgd_convergence(eps=1e-3)
    model, data = verify.convergence_instance()
    pooled = pooled_clients(data)
    F_star = reference_minimum(model, pooled).F_star
    gaps = []
    for seed in range(20):
        res = run_fedave(model, data, FedAveConfig(b=5, T=50, seed=seed))
        gaps.append(empirical_risk(model, pooled, res.theta) - F_star)
    mean_gap = float(np.mean(gaps))
    ok = data.n == 120 and model.p == 2 and lr["pass"] and mean_gap <= 1e-3
    record_acceptance(10, "FedLRGD and FedAve reach eps = 1e-3 on logistic ERM", ok,
                      f"FedLRGD r={lr['r']} S={lr['S']} gap {lr['gap']:.1e}; FedAve b=5 T=50 mean gap {mean_gap:.1e}")
    assert ok


def test_criterion_11_regime_trend():
    rows = proposition1_sweep()
    ratios = [r["ratio"] for r in rows]
    consistent = all(
        r["gamma_fedlrgd"] == fedlrgd_gamma(r["r"], r["s"], r["S"], r["m"], r["phi"]) for r in rows
    )
    ok = consistent and all(b < a for a, b in zip(ratios, ratios[1:])) and ratios[-1] < 0.1
    record_acceptance(11, "FedLRGD/FedAve complexity ratio decreases below 0.1", ok,
                      " > ".join(f"{v:.4f}" for v in ratios))
    assert ok


def test_criterion_12_rank_probe_sanity():
    rng = np.random.default_rng(12)
    bad = 0
    for _ in range(100):
        n, k = (int(v) for v in rng.integers(2, 12, 2))
        true_rank = int(rng.integers(1, min(n, k) + 1))
        A = rng.normal(size=(n, true_rank)) @ rng.normal(size=(true_rank, k))
        f1, f2 = sorted(rng.uniform(0.05, 1.0, 2))
        c = float(rng.choice([-7.5, 1e-3, 2.0, 1e4]))
        rank = approximate_rank(A, 0.9)
        bad += rank != approximate_rank(c * A, 0.9)
        bad += approximate_rank(A, f1) > approximate_rank(A, f2)
        bad += rank > true_rank
    sep_bad = 0
    for r0 in (1, 2, 3):
        model = SeparableModel(2, 4, r0, seed=r0)
        theta = np.array([0.5, -0.3, 0.8, -1.1])
        pts = np.random.default_rng(r0).random((30, 2))
        hist = rank_histogram(build_gradient_tensor(model, pts, theta, seed=r0), theta, ProbeConfig(k=30))
        sep_bad += max(hist) > r0
    ok = bad == 0 and sep_bad == 0
    record_acceptance(12, "approximate rank: scaling, monotonicity, true-rank bound", ok,
                      f"{bad} matrix violations, {sep_bad} separable violations")
    assert ok
