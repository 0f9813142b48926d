"""Federated oracle complexity: epoch ledgers, Erlang timing and the FedAve (b, T) optimizer."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ComplexRoots, DomainError, PhiTooSmall


class EpochType(str, enum.Enum):
    A = "A"  # active clients compute, then communicate
    B = "B"  # server computes only
    C = "C"  # communication only


@dataclass(frozen=True)
class EpochRecord:
    epoch_type: EpochType
    b: int
    communicated: bool

    def __post_init__(self):
        t = EpochType(self.epoch_type)
        object.__setattr__(self, "epoch_type", t)
        if int(self.b) != self.b:
            raise ValueError("b must be an integer gradient count")
        ok = {
            EpochType.A: self.communicated and self.b >= 0,
            EpochType.B: (not self.communicated) and self.b >= 1,
            EpochType.C: self.communicated and self.b == 0,
        }[t]
        if not ok:
            raise ValueError(f"invalid epoch record {t.value}(b={self.b}, communicated={self.communicated})")

    @classmethod
    def a(cls, b: int) -> "EpochRecord":
        return cls(EpochType.A, b, True)

    @classmethod
    def server(cls, b: int) -> "EpochRecord":
        return cls(EpochType.B, b, False)

    @classmethod
    def comm(cls) -> "EpochRecord":
        return cls(EpochType.C, 0, True)

    def as_row(self) -> dict:
        return {"type": self.epoch_type.value, "b": int(self.b), "communicated": bool(self.communicated)}


@dataclass
class EpochLedger:
    m: int
    tau: float = 1.0
    records: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.m < 0:
            raise ValueError("m must be non-negative")

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __add__(self, other: "EpochLedger") -> "EpochLedger":
        if (self.m, self.tau) != (other.m, other.tau):
            raise ValueError("ledgers with different (m, tau) cannot be concatenated")
        return EpochLedger(self.m, self.tau, list(self.records) + list(other.records))

    def types(self) -> str:
        return "".join(r.epoch_type.value for r in self.records)

    def rows(self) -> list[dict]:
        return [r.as_row() for r in self.records]


@dataclass(frozen=True)
class CostModel:
    phi: float
    tau: float = 1.0
    m: int = 1

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")

    @property
    def comm_cost(self) -> float:
        return self.phi * self.tau * self.m


def gamma(ledger: EpochLedger, phi: float) -> float:
    """Sum of per-epoch gradient counts plus phi*tau*m for every communicating epoch."""
    if not ledger.records:
        raise ValueError("ledger is empty")
    if not phi > 0:
        raise ValueError("phi must be positive")
    comm = phi * ledger.tau * ledger.m
    total_b = sum(int(r.b) for r in ledger.records)
    n_comm = sum(1 for r in ledger.records if r.communicated)
    return total_b + n_comm * comm


def expected_epoch_time(epoch_type, b: int, cost: CostModel) -> float:
    """Expected wall time of one epoch with Exp(1) gradient and communication times.

    Type A: 2b + log(tau m) + phi tau m; type B: 2b; type C: phi tau m.
    """
    t = EpochType(epoch_type)
    if t is EpochType.B:
        return 2.0 * b
    if cost.tau * cost.m < 1:
        raise ValueError("need tau*m >= 1 for epochs with client communication")
    if t is EpochType.C:
        return cost.comm_cost
    return 2.0 * b + math.log(cost.tau * cost.m) + cost.comm_cost


# ---------------------------------------------------------------- Erlang


def erlang_cdf(y: float, b: int) -> float:
    """P(Y <= y) for Y ~ Erlang(b, 1): 1 - e^{-y} sum_{k<b} y^k / k!."""
    if b < 1 or int(b) != b:
        raise ValueError("shape b must be a positive integer")
    if y < 0:
        raise ValueError("y must be non-negative")
    if y == 0:
        return 0.0
    # terms in log space; the tail sum is at most 1 so no overflow
    logs = [k * math.log(y) - y - math.lgamma(k + 1) for k in range(int(b))]
    tail = math.fsum(math.exp(v) for v in logs)
    return min(1.0, max(0.0, 1.0 - tail))


def erlang_quantile(p: float, b: int, iterations: int = 200) -> float:
    """Inverse Erlang CDF by bisection on [0, b + 40 (log q + 1)], q = 1/(1-p)."""
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    if p == 0:
        return 0.0
    q = 1.0 / (1.0 - p)
    lo, hi = 0.0, b + 40.0 * (math.log(q) + 1.0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if erlang_cdf(mid, b) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def prop2_bounds(q: int, b: int) -> dict:
    """Bracket for the Erlang quantile at 1 - 1/q, valid when (q-1) b >= 55."""
    if q < 2 or b < 1:
        raise ValueError("need q >= 2 and b >= 1")
    return {
        "lower": 0.5 * math.log(q - 1) + 0.5 * math.log(b),
        "upper": 2.0 * math.log(q - 1) + 2.0 * b * math.log(2 * b),
        "applicable": (q - 1) * b >= 55,
    }


def harmonic_number(k: int) -> float:
    return math.fsum(1.0 / j for j in range(1, k + 1))


def max_erlang_approximation(k: int, b: int) -> float:
    """log k + 2b, the extreme-value estimate of b + E[max of k Erlang(b,1)]."""
    return math.log(k) + 2.0 * b


def mc_max_erlang_mean(k: int, b: int, trials: int, seed: int, chunk_elems: int = 4_000_000) -> tuple[float, float]:
    """Monte Carlo estimate of b + E[max of k Erlang(b,1)]; returns (mean, standard error)."""
    if k < 1 or b < 1 or trials < 1:
        raise ValueError("need k, b, trials >= 1")
    g = rngmod.stream(seed, rngmod.MONTE_CARLO, k, b)
    rows = max(1, chunk_elems // k)
    maxima = np.empty(trials)
    for start in range(0, trials, rows):
        t = min(rows, trials - start)
        if b == 1:
            draws = g.standard_exponential((t, k))
        else:
            draws = g.standard_gamma(float(b), (t, k))
        maxima[start : start + t] = draws.max(axis=1)
    mean = b + float(maxima.mean())
    se = float(maxima.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
    return mean, se


# ------------------------------------------------------------ cubic roots and h(t)


def viete_depressed_cubic(p_coef: float, q_coef: float) -> tuple[float, float, float]:
    """Three real roots of a^3 + p a + q = 0 by the trigonometric method, ascending."""
    disc = -4.0 * p_coef**3 - 27.0 * q_coef**2
    if not disc > 0:
        raise ComplexRoots(f"discriminant {disc:.6g} is not positive; roots are not three distinct reals")
    rad = 2.0 * math.sqrt(-p_coef / 3.0)
    arg = 3.0 * q_coef / (p_coef * rad)
    arg = min(1.0, max(-1.0, arg))
    base = math.acos(arg) / 3.0
    roots = [rad * math.cos(base - 2.0 * math.pi * k / 3.0) for k in range(3)]
    return tuple(sorted(roots))


def _half_angle(t: float) -> float:
    """(2/3) asin(t / sqrt 2), so that asin(1 - t^2) = pi/2 - 3 * _half_angle(t)."""
    return 2.0 * math.asin(t / math.sqrt(2.0)) / 3.0


def _h_minus_half(t: float) -> float:
    """h(t) - 1/2 without cancellation: sin(pi/6 + x) - sin(pi/6) as a product."""
    x = _half_angle(t)
    return 2.0 * math.cos(math.pi / 6.0 + 0.5 * x) * math.sin(0.5 * x)


def lemma3_h(t: float) -> float:
    """sin(arcsin(1 - t^2)/3 + 2 pi / 3) on [0, 1]."""
    if not 0 <= t <= 1:
        raise DomainError("t must lie in [0, 1]")
    # asin near 1 loses half the digits; the equivalent sin(pi/6 + x) form does not
    return math.sin(math.pi / 6.0 + _half_angle(t))


ROUNDOFF = 4 * 2.0**-52


def h_deviation_check(t: float) -> bool:
    """|h(t) - 1/2 - t/sqrt(6)| <= 5 t^2 / 9, up to a few ulps of round-off."""
    lemma3_h(t)
    return abs(_h_minus_half(t) - t / math.sqrt(6.0)) <= 5.0 * t * t / 9.0 + ROUNDOFF


@dataclass(frozen=True)
class FedAveOptimum:
    b_star: float
    T_star: float
    gamma_estimate: float
    C1: float
    C2: float
    C3: float
    b_bounds: tuple
    gamma_bounds: tuple
    min_g_upper: float
    stationarity_residual: float
    positive_roots: int


def fedave_objective(b, C1: float, C2: float, C3: float):
    """g(b) = (C1 b + C2 / b)(b + C3)."""
    return C1 * b * b + C1 * C3 * b + C2 * C3 / b + C2


def fedave_stationarity(b, C1: float, C2: float, C3: float):
    return 2.0 * C1 * b**3 + C1 * C3 * b**2 - C2 * C3


def descartes_positive_roots(coeffs) -> int:
    """Upper bound on positive real roots from sign changes of the coefficients."""
    signs = [np.sign(c) for c in coeffs if c != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def bisect_root(f, lo: float, hi: float, iterations: int = 300) -> float:
    flo = f(lo)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    return 0.5 * (lo + hi)


def fedave_optimal_b(m: int, eps_over_Cp: float, phi: float, tau: float = 1.0, C: float = 1.0) -> FedAveOptimum:
    """Stationary point of the FedAve complexity surrogate g(b) and the implied T and Gamma.

    ``eps_over_Cp`` is eps / (C p). ``C`` enters the phi gate separately.
    """
    if not 0 < eps_over_Cp <= 1:
        raise ValueError("eps/(Cp) must lie in (0, 1]")
    if m < 1 or not 0 < tau <= 1 or not C > 0:
        raise ValueError("need m >= 1, tau in (0,1] and C > 0")
    gate = 40.0 / (C**0.25 * tau)
    if phi < gate:
        raise PhiTooSmall(f"phi={phi} is below the required {gate:.6g}")
    ratio = eps_over_Cp
    C1 = 1.0 / (2.0 * m * ratio)
    C2 = m / math.sqrt(ratio)
    C3 = phi * tau * m
    # b* = (C3/3)(h(t) - 1/2) with 1 - t^2 = 1 - 54 C2 / (C1 C3^2)
    t = math.sqrt(54.0 * C2 / (C1 * C3 * C3))
    if t > math.sqrt(2.0):
        raise PhiTooSmall(f"phi={phi} leaves the cubic without a trigonometric root")
    b_star = (C3 / 3.0) * _h_minus_half(t)
    T_star = C1 * b_star + math.sqrt((C1 * b_star) ** 2 + (C2 / b_star) ** 2)
    quarter = ratio**0.25
    scale = phi * tau * m * ratio ** (-0.75)
    resid = abs(fedave_stationarity(b_star, C1, C2, C3)) / (C2 * C3)
    return FedAveOptimum(
        b_star=b_star,
        T_star=T_star,
        gamma_estimate=fedave_objective(b_star, C1, C2, C3),
        C1=C1,
        C2=C2,
        C3=C3,
        b_bounds=(0.5 * m * quarter, 2.0 * m * quarter),
        gamma_bounds=(0.75 * scale, 8.0 * scale),
        min_g_upper=4.0 * scale,
        stationarity_residual=resid,
        positive_roots=descartes_positive_roots([2.0 * C1, C1 * C3, 0.0, -C2 * C3]),
    )


# ------------------------------------------------------------ regime sweep


def fedlrgd_gamma(r: int, s: int, S: int, m: int, phi: float) -> float:
    return r * r + r * s + r * S + phi * m * r


def fedave_gamma_plus(m: int, p: int, eps: float, phi: float) -> float:
    """phi m (p/eps)^{3/4} with unit constant."""
    return phi * m * (p / eps) ** 0.75


@dataclass(frozen=True)
class Regime:
    """Parameter path for the FedLRGD vs FedAve comparison as m doubles.

    s is held fixed, eps = n^{-beta}, and the rank follows r = ceil((p/eps)^{1/(2 c1)}).
    """

    m0: int = 100
    points: int = 6
    s: int = 10
    p: int = 10
    phi: float = 100.0
    beta: float = 0.5
    c1: float = 4.0
    kappa: float = 2.0
    B: float = 1.0
    mu: float = 1.0
    F0_gap: float | None = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def default_regime() -> Regime:
    return Regime()


def proposition1_sweep(regime: Regime | None = None) -> list[dict]:
    from .fedlrgd import choose_iterations, iteration_numerator

    regime = regime or default_regime()
    rows = []
    F0 = regime.p if regime.F0_gap is None else regime.F0_gap
    for k in range(regime.points):
        m = regime.m0 * 2**k
        r = 1
        # r enters n = m s + r, and eps depends on n; iterate to a fixed point
        for _ in range(50):
            n = m * regime.s + r
            eps = n ** (-regime.beta)
            r_new = math.ceil((regime.p / eps) ** (1.0 / (2.0 * regime.c1)))
            if r_new == r:
                break
            r = r_new
        numerator = iteration_numerator(F0, regime.B, regime.p, regime.mu)
        S = choose_iterations(regime.kappa, numerator, eps)
        g1 = fedlrgd_gamma(r, regime.s, S, m, regime.phi)
        g2 = fedave_gamma_plus(m, regime.p, eps, regime.phi)
        rows.append({
            "m": m, "s": regime.s, "p": regime.p, "epsilon": eps, "phi": regime.phi,
            "r": r, "S": S, "gamma_fedlrgd": g1, "gamma_fedave_plus": g2, "ratio": g1 / g2,
        })
    return rows


SWEEP_COLUMNS = ("m", "s", "p", "epsilon", "phi", "r", "S", "gamma_fedlrgd", "gamma_fedave_plus", "ratio")
