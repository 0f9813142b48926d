from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedlowrank.errors import EmptySelection, ZeroMatrix
from fedlowrank.problem import Dataset, QuadraticModel, SeparableModel, SoftLabelLogistic, reference_minimum
from fedlowrank.rank_probe import (
    ProbeConfig,
    approximate_rank,
    build_gradient_tensor,
    perturbations,
    rank_histogram,
    write_histogram,
)


@pytest.mark.parametrize("A, fraction, expected", [
    (np.eye(5), 0.9, 5),
    (np.outer([1.0, 2.0, 3.0], [1.0, -1.0]), 0.9, 1),
    (np.diag([3.0, 1.0]), 0.9, 1),
    (np.diag([3.0, 1.0]), 1.0, 2),
])
def test_approximate_rank_examples(A, fraction, expected):
    assert approximate_rank(A, fraction) == expected


def test_approximate_rank_of_zero_matrix():
    with pytest.raises(ZeroMatrix):
        approximate_rank(np.zeros((3, 3)))


@settings(max_examples=60)
@given(arrays(float, (6, 5), elements=st.floats(-5, 5)), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_approximate_rank_monotone_in_fraction(A, f1, f2):
    if np.sum(A**2) < 1e-12:
        return
    lo, hi = sorted((f1, f2))
    assert approximate_rank(A, lo) <= approximate_rank(A, hi) <= 5


def test_perturbation_scale():
    theta = np.array([1.0, -2.0, 3.0])
    P = perturbations(theta, 2000, seed=0)
    assert P.shape == (2000, 3)
    assert np.allclose((P - theta).std(axis=0), 2.0, rtol=0.1)


def test_constant_partials_have_rank_one():
    model = QuadraticModel(2, 3)
    theta = np.array([0.5, -0.4, 0.2])
    pts = np.random.default_rng(0).random((10, 2))
    tensor = build_gradient_tensor(model, pts, np.ones(3))
    for q in range(3):
        tensor[:, :, q] = theta[q]
    assert rank_histogram(tensor, theta, ProbeConfig(k=10)) == {1: 3}


def test_separable_slices_respect_true_rank():
    model = SeparableModel(2, 4, 3, seed=1)
    pts = np.random.default_rng(1).random((20, 2))
    theta = np.array([0.3, -0.6, 0.9, 0.2])
    tensor = build_gradient_tensor(model, pts, theta, seed=2)
    hist = rank_histogram(tensor, theta, ProbeConfig(k=20))
    assert max(hist) <= 3 and sum(hist.values()) == 4


def test_zero_theta_selects_nothing():
    with pytest.raises(EmptySelection):
        rank_histogram(np.ones((3, 3, 2)), np.zeros(2), ProbeConfig(k=3))


def test_logistic_probe_end_to_end(tmp_path):
    model = SoftLabelLogistic(6, 0.1)
    data = Dataset.generate(6, 5, 20, 5, seed=0)
    theta = reference_minimum(model, data).theta
    cfg = ProbeConfig(k=30)
    pts = data.all_points()[:30]
    tensor = build_gradient_tensor(model, pts, theta, seed=cfg.seed)
    assert tensor.shape == (30, 30, 5) and np.all(np.isfinite(tensor))
    hist = rank_histogram(tensor, theta, cfg)
    write_histogram(hist, tmp_path / "h.csv", tmp_path / "h.json")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["rank", "frequency"]
    assert sum(int(r[1]) for r in rows[1:]) == sum(hist.values())
    assert json.loads((tmp_path / "h.json").read_text()) == {str(k): v for k, v in hist.items()}


def test_subsample_is_seeded():
    tensor = np.random.default_rng(0).normal(size=(5, 5, 8))
    theta = np.ones(8)
    cfg = ProbeConfig(k=5, subsample=3, seed=4)
    assert rank_histogram(tensor, theta, cfg) == rank_histogram(tensor, theta, cfg)
    assert sum(rank_histogram(tensor, theta, cfg).values()) == 3


def test_probe_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(k=1)
    with pytest.raises(ValueError):
        ProbeConfig(energy_fraction=0.0)
