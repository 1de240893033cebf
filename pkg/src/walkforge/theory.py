"""Closed-form runtime estimates for collision search with uneven partitions.

Probabilities and the edge fraction d are exact rationals; square roots are
taken in double precision.  The O(ln^4 n) correction of the expectation is
dropped throughout.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Iterable, Sequence

from ._validation import check_probabilities, check_theta
from .walk_engine import auto_modulus, geometric_probabilities

TABLE1_R = (3, 4, 5, 6, 10, 16)
TABLE1_W = (Fraction(1), Fraction(1, 2), Fraction(1, 4))
EXPERIMENT_M = tuple(range(28, 57, 4))
EXPERIMENT_R = tuple(range(3, 17))
EXPERIMENT_W = (Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 3), Fraction(1, 4))


def _probs(p) -> tuple:
    return check_probabilities(p)


def collision_mass(p) -> Fraction | float:
    """P1 = sum p_i^2, the chance that two random nodes fall in the same partition."""
    return sum(x * x for x in _probs(p))


def edge_fraction(p, theta) -> Fraction | float:
    """d = 1 - (1 - theta) * sum p_i^2."""
    theta = check_theta(theta)
    return 1 - (1 - theta) * collision_mass(p)


def _as_float_n(n) -> float:
    n = int(n)
    if n < 1:
        raise ValueError("group order must be positive")
    return float(n)


def expected_alpha_pi(n, theta, p) -> float:
    """sqrt(pi n / d) + 2 / theta."""
    d = float(edge_fraction(p, theta))
    return math.sqrt(math.pi * _as_float_n(n) / d) + 2 / float(theta)


def expected_L_pi(n, theta, p) -> float:
    return expected_alpha_pi(n, theta, p) / math.sqrt(_as_float_n(n))


def variance_alpha_pi(n, theta, p) -> float:
    """(4 - pi) n / d + (4 - 2 theta) / theta^2 + sqrt(pi n / d) / theta."""
    d = float(edge_fraction(p, theta))
    t = float(theta)
    nf = _as_float_n(n)
    return (4 - math.pi) * nf / d + (4 - 2 * t) / t ** 2 + math.sqrt(math.pi * nf / d) / t


def stdev_L_pi(n, theta, p) -> float:
    return math.sqrt(variance_alpha_pi(n, theta, p) / _as_float_n(n))


@dataclass(frozen=True)
class ClassicEstimates:
    E_rho: float
    vOW_lambda: float
    blackburn_rho: float
    bailey_rho: float


def classic_estimates(n, r: int, p, good_prob=Fraction(1, 2)) -> ClassicEstimates:
    """Older predictions: random-mapping rho, the vOW collision count, and the two r-adding-walk corrections."""
    nf = _as_float_n(n)
    good = float(good_prob)
    if not 0 < good <= 1:
        raise ValueError("good-collision probability must lie in (0, 1]")
    P1 = float(collision_mass(p))
    blackburn = math.inf if r == 1 else math.sqrt(math.pi * r * nf / (2 * (r - 1)))
    bailey = math.inf if P1 >= 1 else math.sqrt(math.pi * nf / (2 * (1 - P1)))
    return ClassicEstimates(
        E_rho=math.sqrt(math.pi * nf / 2),
        vOW_lambda=math.sqrt(math.pi * nf / (2 * good)),
        blackburn_rho=blackburn,
        bailey_rho=bailey,
    )


@dataclass(frozen=True)
class MontenegroEstimate:
    P1: Fraction | float
    P2: Fraction | float
    value: float

    @property
    def diverges(self) -> bool:
        return math.isinf(self.value)


def montenegro_lambda(n, p) -> MontenegroEstimate:
    """sqrt(pi n / (1 - P1 - P1^2 + P1^3)), which diverges for a single partition."""
    P1 = collision_mass(p)
    P2 = (1 - P1) * P1 ** 2
    denom = 1 - P1 - P1 ** 2 + P1 ** 3
    if denom <= 0:
        return MontenegroEstimate(P1, P2, math.inf)
    return MontenegroEstimate(P1, P2, math.sqrt(math.pi * _as_float_n(n) / float(denom)))


@dataclass(frozen=True)
class Estimates:
    n: int
    theta: Fraction
    r: int
    d: float
    E_alpha_pi: float
    E_L_pi: float
    Var_alpha_pi: float
    Stdev_L_pi: float
    classic: ClassicEstimates
    montenegro_lambda: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["theta"] = str(self.theta)
        out["n"] = str(self.n) if self.n >= 1 << 53 else self.n
        out["montenegro_lambda"] = None if math.isinf(self.montenegro_lambda) else self.montenegro_lambda
        out["classic"] = {k: (None if math.isinf(v) else v) for k, v in out["classic"].items()}
        return out


def estimates(n, theta, p) -> Estimates:
    theta = check_theta(theta)
    p = _probs(p)
    n = int(n)
    if n < 2:
        raise ValueError("group order must be at least 2")
    var = variance_alpha_pi(n, theta, p)
    return Estimates(
        n=n, theta=theta, r=len(p),
        d=float(edge_fraction(p, theta)),
        E_alpha_pi=expected_alpha_pi(n, theta, p),
        E_L_pi=expected_L_pi(n, theta, p),
        Var_alpha_pi=var,
        Stdev_L_pi=math.sqrt(var / n),
        classic=classic_estimates(n, len(p), p),
        montenegro_lambda=montenegro_lambda(n, p).value,
    )


def sample_size(E_L: float, stdev_L: float, rel_err: float) -> int:
    """Runs needed so that 3 * stdev / sqrt(k) <= rel_err * E."""
    if E_L <= 0 or stdev_L < 0 or rel_err <= 0:
        raise ValueError("need E_L > 0, stdev_L >= 0, rel_err > 0")
    # decimal keeps the ceiling stable when the ratio lands on an integer
    q = (Decimal(repr(3 * stdev_L)) / (Decimal(repr(rel_err)) * Decimal(repr(E_L)))) ** 2
    return max(1, int(q.to_integral_value(rounding="ROUND_CEILING")))


@dataclass(frozen=True)
class SampleSizeResult:
    k: int
    r: int
    w: Fraction
    m: int


def max_sample_size(rel_err: float, ms: Iterable[int], rs: Iterable[int] = EXPERIMENT_R,
                    ws: Iterable = EXPERIMENT_W) -> SampleSizeResult:
    """Largest required k over a grid of (r, w, m) with n = 2^m and theta = n^{-1/4}."""
    best = None
    for m in ms:
        n = 1 << m
        theta = Fraction(1, auto_modulus(n))
        for r in rs:
            for w in ws:
                p = geometric_probabilities(r, w)
                k = sample_size(expected_L_pi(n, theta, p), stdev_L_pi(n, theta, p), rel_err)
                if best is None or k > best.k:
                    best = SampleSizeResult(k, r, Fraction(w), m)
    return best


def experiment_sample_sizes() -> tuple[SampleSizeResult, SampleSizeResult]:
    """(k1, k2): 0.1% accuracy for m <= 44 and 0.5% accuracy above."""
    small = [m for m in EXPERIMENT_M if m <= 44]
    large = [m for m in EXPERIMENT_M if m > 44]
    return max_sample_size(0.001, small), max_sample_size(0.005, large)


def predicted_runtime(n, p, hop_seconds: Sequence[float], sigma: float, theta) -> float:
    """Expected serial seconds: sigma * E(L_pi) * sqrt(n) * sum p_i t_i."""
    p = _probs(p)
    if len(hop_seconds) != len(p):
        raise ValueError(f"need {len(p)} hop costs, got {len(hop_seconds)}")
    if any(t < 0 for t in hop_seconds):
        raise ValueError("hop costs must be nonnegative")
    pt = sum(float(a) * float(b) for a, b in zip(p, hop_seconds))
    return sigma * expected_alpha_pi(n, theta, p) * pt


def round4(x: float) -> str:
    """Half-to-even rounding of the binary value to four decimals."""
    return str(Decimal(x).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def table1(n=1 << 80, theta=Fraction(1, 1 << 20), rs=TABLE1_R, ws=TABLE1_W) -> list[dict]:
    """Rows (w, r, d, E_L_pi, Stdev_L_pi) rendered to four decimals."""
    rows = []
    for w in ws:
        for r in rs:
            p = geometric_probabilities(r, w)
            rows.append({
                "w": str(Fraction(w)),
                "r": r,
                "d": round4(float(edge_fraction(p, theta))),
                "E_L_pi": round4(expected_L_pi(n, theta, p)),
                "Stdev_L_pi": round4(stdev_L_pi(n, theta, p)),
            })
    return rows
