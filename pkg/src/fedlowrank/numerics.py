"""Small dense linear algebra and multi-index helpers."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .errors import SingularMatrix, Unsupported

MultiIndex = tuple[int, ...]


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def singular_values(A) -> np.ndarray:
    """Singular values in non-increasing order."""
    A = as_matrix(A)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def rank_r_truncation(A, r: int) -> np.ndarray:
    """Best rank-``r`` approximation in Frobenius norm (Eckart-Young)."""
    A = as_matrix(A)
    kmax = min(A.shape)
    if not 1 <= r <= kmax:
        raise ValueError(f"r must lie in [1, {kmax}], got {r}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def invert(A, singular_tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Inverse of a square matrix together with its 2-norm condition number.

    Raises SingularMatrix when sigma_min < singular_tol * sigma_max.
    """
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    s = singular_values(A)
    smax, smin = s[0], s[-1]
    if smax == 0.0 or smin < singular_tol * smax:
        raise SingularMatrix(
            f"matrix is numerically singular (sigma_min={smin:.3e}, sigma_max={smax:.3e})"
        )
    return np.linalg.inv(A), float(smax / smin)


def enumerate_multi_indices(d: int, l: int) -> list[MultiIndex]:
    """All s in Z_+^d with |s| <= l, graded then descending-lexicographic.

    For d=2, l=1 this is [(0, 0), (1, 0), (0, 1)].
    """
    if d < 1 or l < 0:
        raise ValueError("need d >= 1 and l >= 0")
    out: list[MultiIndex] = []
    for total in range(l + 1):
        degree = [s for s in itertools.product(range(total + 1), repeat=d) if sum(s) == total]
        degree.sort(reverse=True)
        out.extend(degree)
    return out


def multi_index_factorial(s: Sequence[int]) -> int:
    value = 1
    for k in s:
        if k < 0:
            raise ValueError("multi-index entries must be non-negative")
        value *= math.factorial(k)
    if not math.isfinite(float(value)):
        raise OverflowError(f"s! overflows a double for s={tuple(s)}")
    return value


def monomials(points: np.ndarray, indices: Sequence[MultiIndex]) -> np.ndarray:
    """Evaluate x**s for every point (rows) and multi-index (columns)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    powers = np.asarray(indices, dtype=int)
    return np.prod(points[:, None, :] ** powers[None, :, :], axis=2)


# Central-difference stencils with O(h^2) error, keyed by derivative order.
_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
}


def finite_diff_partial(
    f: Callable[[np.ndarray], float], x, s: Sequence[int], h: float = 1e-3
) -> float:
    """Central-difference estimate of the mixed partial d^s f at x (|s| <= 4)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = tuple(int(k) for k in s)
    if len(s) != x.size:
        raise ValueError("multi-index length must equal the dimension of x")
    if sum(s) > 4:
        raise Unsupported(f"finite differences support |s| <= 4, got |s|={sum(s)}")
    per_axis = [list(_STENCILS[k].items()) for k in s]
    total = 0.0
    for combo in itertools.product(*per_axis):
        weight = 1.0
        shift = np.zeros_like(x)
        for axis, (offset, w) in enumerate(combo):
            weight *= w
            shift[axis] = offset * h
        total += weight * float(f(x + shift))
    return total / h ** sum(s)
