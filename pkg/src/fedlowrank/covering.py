"""l1-nets of the unit cube, piecewise Taylor approximation and latent-matrix rank bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InconsistentParams, NotApplicable, TooLarge
from .numerics import enumerate_multi_indices, monomials, multi_index_factorial, rank_r_truncation

MAX_CENTERS = 2_000_000
_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class L1Net:
    """Centers whose closed l1-balls of radius 1/q cover [0,1]^d, in a fixed order."""

    d: int
    q: float
    centers: np.ndarray

    @property
    def radius(self) -> float:
        return 1.0 / self.q

    def __len__(self) -> int:
        return self.centers.shape[0]

    def volumetric_bound(self) -> float:
        return math.factorial(self.d) * (self.q + 1) ** self.d

    def assign(self, x) -> np.ndarray:
        """0-based index of the first ball containing each point (rows of x)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[0], -1, dtype=int)
        todo = np.arange(x.shape[0])
        # blocks of centers keep the distance matrix small
        for start in range(0, len(self), 4096):
            if todo.size == 0:
                break
            block = self.centers[start : start + 4096]
            dist = np.abs(x[todo, None, :] - block[None, :, :]).sum(axis=2)
            inside = dist <= self.radius + _TOL
            hit = inside.any(axis=1)
            out[todo[hit]] = start + np.argmax(inside[hit], axis=1)
            todo = todo[~hit]
        if todo.size:
            raise AssertionError(f"covering invariant broken: {todo.size} points lie in no ball")
        return out


def build_l1_net(d: int, q: float) -> L1Net:
    """Cell centers of a cubic lattice fine enough that each cell fits in its center's ball.

    A cube of side h has l1-radius d*h/2, so k = ceil(q*d/2) cells per axis suffice.
    """
    if d < 1 or not q >= 1:
        raise ValueError("need d >= 1 and q >= 1")
    bound = math.factorial(d) * (q + 1) ** d
    k = math.ceil(q * d / 2 - 1e-12)
    count = k**d
    if count > MAX_CENTERS or not math.isfinite(bound):
        raise TooLarge(f"an l1-net for d={d}, q={q} would need {count} centers")
    if count > bound:
        raise TooLarge(f"lattice net has {count} centers, above the volumetric bound {bound:.6g}")
    axis = (np.arange(k) + 0.5) / k
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid.setflags(write=False)
    return L1Net(d, float(q), grid)


def assign_cell(net: L1Net, x) -> int:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d,):
        raise ValueError(f"expected a point of dimension {net.d}")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("point must lie in [0,1]^d")
    return int(net.assign(x[None, :])[0])


# ------------------------------------------------------- Hölder test functions


@dataclass(frozen=True)
class HolderFunction:
    """g(y; theta) with analytic partials in y and known (eta, L2) for a given theta.

    ``value(y, theta)`` maps (N, d) points to N values; ``partial(s, y, theta)``
    returns the mixed partial d^s g. ``L2`` may depend on theta.
    """

    name: str
    d: int
    eta: float
    value: Callable
    partial: Callable
    L2_of: Callable

    @property
    def l(self) -> int:
        return math.ceil(self.eta) - 1

    def L2(self, theta) -> float:
        return float(self.L2_of(theta))


def _sin_derivative(k: int, u):
    """k-th derivative of sin evaluated at u."""
    return [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][k % 4](u)


def _theta0(theta) -> float:
    return float(np.atleast_1d(theta)[0])


def constant_function(d: int, c: float = 1.3) -> HolderFunction:
    def value(y, theta):
        return np.full(np.atleast_2d(y).shape[0], c * (1 + _theta0(theta) ** 2))

    def partial(s, y, theta):
        return value(y, theta) if sum(s) == 0 else np.zeros(np.atleast_2d(y).shape[0])

    return HolderFunction("constant", d, 1.0, value, partial, lambda th: 1.0)


def linear_function(d: int, a: Sequence[float] | None = None, eta: float = 1.0) -> HolderFunction:
    a = np.linspace(0.5, 1.5, d) if a is None else np.asarray(a, dtype=float)

    def value(y, theta):
        return np.atleast_2d(y) @ a + _theta0(theta)

    def partial(s, y, theta):
        y = np.atleast_2d(y)
        if sum(s) == 0:
            return value(y, theta)
        if sum(s) == 1:
            return np.full(y.shape[0], a[int(np.argmax(s))])
        return np.zeros(y.shape[0])

    # for eta > 1 the first partials are constant, so any positive L2 is valid
    L2 = float(np.max(np.abs(a))) if eta <= 1 else 1e-12
    return HolderFunction("linear", d, eta, value, partial, lambda th: L2)


def sum_sine(d: int, eta: float) -> HolderFunction:
    """sin(pi * sum(y) + theta); L2 = pi for eta=1 and pi^2 for eta=2 (l1 Hölder norm)."""

    def value(y, theta):
        return np.sin(np.pi * np.atleast_2d(y).sum(axis=1) + _theta0(theta))

    def partial(s, y, theta):
        k = sum(s)
        u = np.pi * np.atleast_2d(y).sum(axis=1) + _theta0(theta)
        return np.pi**k * _sin_derivative(k, u)

    return HolderFunction("sum_sine", d, eta, value, partial, lambda th: np.pi**eta)


def product_sine(eta: float) -> HolderFunction:
    """sin(pi*y1 + theta) * sin(pi*y2) on [0,1]^2."""

    def value(y, theta):
        y = np.atleast_2d(y)
        return np.sin(np.pi * y[:, 0] + _theta0(theta)) * np.sin(np.pi * y[:, 1])

    def partial(s, y, theta):
        y = np.atleast_2d(y)
        return (
            np.pi ** (s[0] + s[1])
            * _sin_derivative(s[0], np.pi * y[:, 0] + _theta0(theta))
            * _sin_derivative(s[1], np.pi * y[:, 1])
        )

    return HolderFunction("product_sine", 2, eta, value, partial, lambda th: np.pi**eta)


def abs_cosine() -> HolderFunction:
    """|cos(pi (y + theta))| on [0,1]: Lipschitz with constant pi, not differentiable."""

    def value(y, theta):
        return np.abs(np.cos(np.pi * (np.atleast_2d(y)[:, 0] + _theta0(theta))))

    def partial(s, y, theta):
        if sum(s) != 0:
            raise ValueError("only the zeroth partial exists for a Lipschitz-only function")
        return value(y, theta)

    return HolderFunction("abs_cosine", 1, 1.0, value, partial, lambda th: np.pi)


def separable_sine() -> HolderFunction:
    """sin(pi*y) * psi(theta) with psi = cos; eta = 2 and L2 = pi^2 |psi(theta)|."""

    def psi(theta):
        return math.cos(_theta0(theta))

    def value(y, theta):
        return np.sin(np.pi * np.atleast_2d(y)[:, 0]) * psi(theta)

    def partial(s, y, theta):
        k = sum(s)
        return np.pi**k * _sin_derivative(k, np.pi * np.atleast_2d(y)[:, 0]) * psi(theta)

    return HolderFunction("separable_sine", 1, 2.0, value, partial, lambda th: np.pi**2 * abs(psi(th)))


def holder_suite() -> list[HolderFunction]:
    return [
        constant_function(1),
        constant_function(2),
        linear_function(1),
        linear_function(2),
        sum_sine(1, 1.0),
        sum_sine(1, 2.0),
        sum_sine(2, 1.0),
        sum_sine(2, 2.0),
        product_sine(1.0),
        product_sine(2.0),
        abs_cosine(),
        separable_sine(),
    ]


# ------------------------------------------------------ piecewise polynomials


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """One degree-l Taylor polynomial per cell; coeffs[j, k] multiplies (y - z_j)^indices[k]."""

    net: L1Net
    l: int
    indices: tuple
    coeffs: np.ndarray

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        cells = self.net.assign(y)
        shifted = y - self.net.centers[cells]
        return np.sum(self.coeffs[cells] * monomials(shifted, self.indices), axis=1)


def taylor_piecewise(g: HolderFunction, theta, net: L1Net, l: int | None = None) -> PiecewisePoly:
    """Degree-l Taylor expansion of g(.; theta) around every net center."""
    l = g.l if l is None else l
    if net.d != g.d:
        raise ValueError("net and function dimensions differ")
    indices = tuple(enumerate_multi_indices(net.d, l))
    coeffs = np.empty((len(net), len(indices)))
    for k, s in enumerate(indices):
        coeffs[:, k] = g.partial(s, net.centers, theta) / multi_index_factorial(s)
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("non-finite Taylor coefficient")
    coeffs.setflags(write=False)
    return PiecewisePoly(net, l, indices, coeffs)


def uniform_error_bound(L2: float, l: int, q: float, eta: float) -> float:
    """L2 / (l! q^eta), the sup-norm error of the piecewise Taylor approximation."""
    if not (L2 > 0 and q > 0 and eta > 0 and l >= 0):
        raise ValueError("L2, q and eta must be positive and l non-negative")
    if l != math.ceil(eta) - 1:
        raise InconsistentParams(f"l must equal ceil(eta) - 1 = {math.ceil(eta) - 1}, got {l}")
    return L2 / (math.factorial(l) * q**eta)


def dense_grid(net: L1Net, points_per_dim: int | None = None) -> np.ndarray:
    """Deterministic evaluation grid of about 10^4 * d points, plus centers and cell-face midpoints."""
    d = net.d
    per_axis = points_per_dim or math.ceil((10_000 * d) ** (1.0 / d))
    axis = np.linspace(0.0, 1.0, per_axis)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    k = round(len(net) ** (1.0 / d))
    faces = []
    if k**d == len(net):
        cell_axis = (np.arange(k) + 0.5) / k
        bnd = np.arange(k + 1) / k
        for j in range(d):
            axes = [cell_axis] * d
            axes[j] = bnd
            faces.append(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d))
    return np.concatenate([grid, net.centers] + faces, axis=0)


def sup_error(g: HolderFunction, theta, q: float, grid: np.ndarray | None = None) -> float:
    """Measured sup |g - P| over the dense grid for a net of radius 1/q."""
    net = build_l1_net(g.d, q)
    poly = taylor_piecewise(g, theta, net)
    pts = dense_grid(net) if grid is None else grid
    return float(np.max(np.abs(g.value(pts, theta) - poly(pts))))


# ---------------------------------------------------------- latent matrices


@dataclass(frozen=True, eq=False)
class LatentMatrix:
    M: np.ndarray
    ys: np.ndarray
    thetas: np.ndarray


def build_latent_matrix(g: Callable, ys, thetas) -> LatentMatrix:
    """M[i, j] = g(y_i; theta_j) where g maps (N, d) points and one theta to N values."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if np.any(ys < 0) or np.any(ys > 1):
        raise ValueError("latent points must lie in [0,1]^d")
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    M = np.column_stack([np.asarray(g(ys, th), dtype=float) for th in thetas])
    return LatentMatrix(M, ys, thetas)


def rank_bound_threshold(d: int, eta: float) -> float:
    l = math.ceil(eta) - 1
    return math.e * math.sqrt(d) * 2**d * (l + d) ** d


def rank_bound_rhs(r: int, eta: float, L2: float, d: int) -> float:
    l = math.ceil(eta) - 1
    return (
        L2**2
        * math.exp(2 * eta / d)
        * d ** (eta / d)
        * 4**eta
        * (l + d) ** (2 * eta)
        / math.factorial(l) ** 2
        * r ** (-2 * eta / d)
    )


def theorem1_check(M, r: int, eta: float, L2: float, d: int) -> dict:
    """Compare the mean squared rank-r truncation error with the closed-form bound."""
    M = M.M if isinstance(M, LatentMatrix) else np.asarray(M, dtype=float)
    threshold = rank_bound_threshold(d, eta)
    if r < threshold:
        raise NotApplicable(f"r={r} is below the admissible threshold {threshold:.4f}")
    n, k = M.shape
    lhs = float(np.sum((M - rank_r_truncation(M, r)) ** 2) / (n * k))
    rhs = rank_bound_rhs(r, eta, L2, d)
    return {"lhs": lhs, "rhs": rhs, "pass": lhs <= rhs, "r": r, "threshold": threshold}
