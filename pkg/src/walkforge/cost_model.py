"""Hop-cost model and partition-parameter optimization for isogeny walks.

The expected serial time of a search is sigma * E(L_pi) * sqrt(n) * p.t,
where t_i is the cost of one hop along the i-th supporting prime.  Timings
per prime come from a measured table; sigma is the measured practice-to-theory
ratio, extrapolated from bundled experimental means.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y
from sympy import prime, primerange

from ._validation import check_ratio, check_theta
from .theory import expected_L_pi
from .walk_engine import build_partition_plan, geometric_probabilities

SECONDS_PER_YEAR = 31_557_600  # Julian year
BUNDLED_TIMINGS = "isogeny_hop_times_160bit.csv"
BUNDLED_MEANS = "table2_expected_L.csv"
TABLE4_W = (Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 3), Fraction(1, 4))
TABLE4_R = tuple(range(4, 17))


class TimingTableError(ValueError):
    """Malformed timing data."""


class MissingTimingError(KeyError):
    """A prime without a timing row was looked up."""


# -- timing table -----------------------------------------------------------

@dataclass(frozen=True)
class TimingTable:
    entries: tuple[tuple[int, float], ...]
    note: str = ""
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", dict(self.entries))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, ell):
        return ell in self._index

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(ell for ell, _ in self.entries)

    def seconds(self, ell: int) -> float:
        try:
            return self._index[ell]
        except KeyError:
            raise MissingTimingError(f"no timing for ell={ell}") from None

    def scaled(self, factor: float) -> "TimingTable":
        return TimingTable(tuple((ell, t * factor) for ell, t in self.entries), self.note)


def _parse_timings(text: str, source: str) -> list[tuple[int, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["ell", "seconds"]:
        raise TimingTableError(f"{source}: expected header 'ell,seconds', got {header}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 2:
            raise TimingTableError(f"{source}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            ell, secs = int(row[0]), float(row[1])
        except ValueError:
            raise TimingTableError(f"{source}:{lineno}: malformed row {row}") from None
        if secs <= 0 or not math.isfinite(secs):
            raise TimingTableError(f"{source}:{lineno}: nonpositive time {secs} for ell={ell}")
        if rows and ell == rows[-1][0]:
            raise TimingTableError(f"{source}:{lineno}: duplicate ell={ell}")
        if rows and ell < rows[-1][0]:
            raise TimingTableError(f"{source}:{lineno}: ell={ell} out of order")
        rows.append((ell, secs))
    if not rows:
        raise TimingTableError(f"{source}: no timing rows")
    return rows


def load_timing_table(path: str | Path | None = None, note: str = "") -> TimingTable:
    """Read an ``ell,seconds`` CSV; ``None`` loads the bundled 160-bit table."""
    if path is None:
        text = resources.files("walkforge.data").joinpath(BUNDLED_TIMINGS).read_text()
        return TimingTable(tuple(_parse_timings(text, BUNDLED_TIMINGS)),
                           note or "160-bit prime field, 2.67 GHz core (~6799 MIPS)")
    path = Path(path)
    return TimingTable(tuple(_parse_timings(path.read_text(), str(path))), note)


# -- asymptotic hop cost ----------------------------------------------------

def hop_cost_asymptotic(ell, q_bits, c1: float, c2: float):
    """c1 ell^2 + c2 ell log(ell) q_bits."""
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 3) or q_bits < 2:
        raise ValueError("need ell >= 3 and q_bits >= 2")
    out = c1 * ell ** 2 + c2 * ell * np.log(ell) * q_bits
    return float(out) if out.ndim == 0 else out


class HopCostRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of seconds ~ c1 ell^2 + c2 ell log(ell) q_bits.

    X is a single column of primes ell; y holds seconds per hop.
    """

    def __init__(self, q_bits=160):
        self.q_bits = q_bits

    def _design(self, ell):
        return np.column_stack([ell ** 2, ell * np.log(ell) * self.q_bits])

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[1] != 1:
            raise ValueError("X must have exactly one column (ell)")
        ell = X[:, 0]
        A = self._design(ell)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        self.coef_ = coef
        self.residuals_ = y - A @ coef
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return hop_cost_asymptotic(X[:, 0], self.q_bits, *self.coef_)


def fit_hop_cost(table: TimingTable, q_bits: int = 160) -> HopCostRegressor:
    ells = np.array(table.primes, dtype=float).reshape(-1, 1)
    secs = np.array([t for _, t in table.entries])
    return HopCostRegressor(q_bits=q_bits).fit(ells, secs)


# -- supporting-set ensembles ------------------------------------------------

def _ok_factory(r: int, cap: int | None, lo: int, hi: int):
    def ok(pos: int, q: int) -> bool:
        if pos == r - 1:
            return lo <= q <= hi
        if cap is not None and pos == r - 5:
            return q <= cap
        return True
    return ok


@dataclass(frozen=True)
class SupportEnsemble:
    """All r-sets of odd primes with a capped (r-4)-th smallest element and a bounded largest one.

    Sets are ascending tuples.  The ensemble is usually far too large to
    list (about 4e8 sets at r = 16), so averages use an exact counting
    recursion over positions; ``sets()`` iterates lazily.
    """

    r: int
    candidates: tuple[int, ...]
    cap: int | None
    largest_lo: int
    largest_hi: int
    explicit: tuple[tuple[int, ...], ...] | None = None

    @classmethod
    def of(cls, sets: Iterable[Sequence[int]]) -> "SupportEnsemble":
        sets = tuple(sorted({tuple(sorted(H)) for H in sets}))
        if not sets:
            raise ValueError("empty ensemble")
        r = len(sets[0])
        if any(len(H) != r for H in sets):
            raise ValueError("all sets must have the same size")
        cands = tuple(sorted({q for H in sets for q in H}))
        return cls(r, cands, None, 0, 0, sets)

    def _ok(self):
        return _ok_factory(self.r, self.cap, self.largest_lo, self.largest_hi)

    def _counts(self):
        r, cands, ok = self.r, self.candidates, self._ok()
        m = len(cands)

        @lru_cache(maxsize=None)
        def pre(i, j):
            # ways to fill positions 0..j-1 from cands[:i]
            if j == 0:
                return 1
            if i < j:
                return 0
            total = pre(i - 1, j)
            if ok(j - 1, cands[i - 1]):
                total += pre(i - 1, j - 1)
            return total

        @lru_cache(maxsize=None)
        def suf(i, j):
            # ways to fill positions j..r-1 from cands[i:]
            if j == r:
                return 1
            if m - i < r - j:
                return 0
            total = suf(i + 1, j)
            if ok(j, cands[i]):
                total += suf(i + 1, j + 1)
            return total

        return pre, suf

    def __len__(self) -> int:
        if self.explicit is not None:
            return len(self.explicit)
        _, suf = self._counts()
        return suf(0, 0)

    def sets(self) -> Iterator[tuple[int, ...]]:
        if self.explicit is not None:
            yield from self.explicit
            return
        ok = self._ok()
        for H in combinations(self.candidates, self.r):
            if all(ok(j, q) for j, q in enumerate(H)):
                yield H

    def position_weights(self) -> list[dict[int, Fraction]]:
        """For each position j, the fraction of sets whose j-th smallest prime is q."""
        if self.explicit is not None:
            N = len(self.explicit)
            out = [dict() for _ in range(self.r)]
            for H in self.explicit:
                for j, q in enumerate(H):
                    out[j][q] = out[j].get(q, 0) + Fraction(1, N)
            return out
        pre, suf = self._counts()
        ok = self._ok()
        N = suf(0, 0)
        out = []
        for j in range(self.r):
            weights = {}
            for i, q in enumerate(self.candidates):
                if ok(j, q):
                    c = pre(i, j) * suf(i + 1, j + 1)
                    if c:
                        weights[q] = Fraction(c, N)
            out.append(weights)
        return out

    def mean_hop_vector(self, table: TimingTable) -> list[float]:
        """Average over sets of the ascending hop-cost vector t."""
        return [float(sum(w * Fraction(table.seconds(q)) for q, w in weights.items()))
                for weights in self.position_weights()]


def enumerate_supporting_sets(r: int) -> SupportEnsemble:
    """Candidate supporting sets of r odd primes for a class-group walk.

    The r - 4 smallest primes are at most prime(2r - 7); the largest lies in
    [67, max(67, prime(2r + 1))]; the other primes range over all odd primes
    below the largest.
    """
    if not 4 <= r <= 16:
        raise ValueError(f"r must lie in 4..16, got {r}")
    hi = max(67, prime(2 * r + 1))
    cap = prime(2 * r - 7) if r > 4 else None
    cands = tuple(primerange(3, hi + 1))
    return SupportEnsemble(r, cands, cap, 67, hi)


def average_hop_seconds(plan, ensemble: SupportEnsemble, table: TimingTable) -> float:
    """Mean of sum p_i t(ell_i) over the ensemble; the smallest prime takes the largest probability."""
    if plan.r != ensemble.r:
        raise ValueError(f"plan has r={plan.r}, ensemble has r={ensemble.r}")
    means = ensemble.mean_hop_vector(table)
    return sum(float(p) * t for p, t in zip(plan.probabilities, means))


# -- sigma providers -----------------------------------------------------------

@dataclass(frozen=True)
class MeasuredMeans:
    """Experimental mean L per (w, r, m)."""

    cells: dict  # (Fraction w, r, m) -> mean L

    @classmethod
    def load(cls, path: str | Path | None = None) -> "MeasuredMeans":
        if path is None:
            text = resources.files("walkforge.data").joinpath(BUNDLED_MEANS).read_text()
        else:
            text = Path(path).read_text()
        cells = {}
        for row in csv.DictReader(io.StringIO(text)):
            cells[(Fraction(row["w"]), int(row["r"]), int(row["m"]))] = float(row["mean_L"])
        return cls(cells)

    def sigma(self, w, r, m) -> float:
        n = 1 << m
        theta = Fraction(1, 2 ** (m // 4)) if m % 4 == 0 else Fraction(1, round(2 ** (m / 4)))
        return self.cells[(w, r, m)] / expected_L_pi(n, theta, geometric_probabilities(r, w))

    def grid(self):
        ws = sorted({k[0] for k in self.cells}, reverse=True)
        rs = sorted({k[1] for k in self.cells})
        ms = sorted({k[2] for k in self.cells})
        return ws, rs, ms


class SigmaProvider:
    """sigma(r, w) at the target size, interpolated from measured cells.

    ``mode="constant"`` holds the ratio measured at the largest size fixed;
    ``mode="linear"`` fits sigma linearly in m per cell and extrapolates.
    Between measured r the value is interpolated linearly, between measured
    w linearly in ln w (clamped at the ends).
    """

    def __init__(self, means: MeasuredMeans | None = None, mode: str = "constant", target_m: int = 80):
        if mode not in ("constant", "linear"):
            raise ValueError(f"sigma mode must be 'constant' or 'linear', got {mode!r}")
        self.means = means or MeasuredMeans.load()
        self.mode = mode
        self.target_m = target_m
        ws, rs, ms = self.means.grid()
        self.ws, self.rs, self.ms = ws, rs, ms
        self._cell = {}
        for w in ws:
            for r in rs:
                sig = [self.means.sigma(w, r, m) for m in ms]
                if mode == "constant":
                    self._cell[(w, r)] = sig[-1]
                else:
                    slope, icpt = np.polyfit(ms, sig, 1)
                    self._cell[(w, r)] = float(slope * target_m + icpt)

    def _at_w(self, w, r) -> float:
        return float(np.interp(r, self.rs, [self._cell[(w, x)] for x in self.rs]))

    def __call__(self, r: int, w) -> float:
        w = Fraction(w)
        if w in self.ws:
            return self._at_w(w, r)
        xs = [math.log(float(x)) for x in sorted(self.ws)]
        ys = [self._at_w(x, r) for x in sorted(self.ws)]
        return float(np.interp(math.log(float(w)), xs, ys))


# -- runtime grid ------------------------------------------------------------

@dataclass
class RuntimeGrid:
    n: int
    theta: Fraction
    cells: dict  # (r, w) -> years
    rs: tuple
    ws: tuple

    @property
    def best(self) -> tuple[int, Fraction]:
        return min(self.cells, key=self.cells.get)

    def speedup(self, reference=(16, Fraction(1))) -> float:
        return self.cells[reference] / self.cells[self.best]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r"] + [str(w) for w in self.ws])
        for r in self.rs:
            writer.writerow([r] + [f"{self.cells[(r, w)]:.6g}" for w in self.ws])
        return buf.getvalue()


def runtime_grid(n: int = 1 << 80, theta=Fraction(1, 1 << 20), r_range: Iterable[int] = TABLE4_R,
                 w_set: Iterable = TABLE4_W, sigma_provider: Callable | None = None,
                 table: TimingTable | None = None) -> RuntimeGrid:
    """Expected serial years per (r, w) for solving a class-group instance of size n."""
    theta = check_theta(theta)
    table = table or load_timing_table()
    sigma_provider = sigma_provider or SigmaProvider()
    rs = tuple(r_range)
    ws = tuple(check_ratio(w) for w in w_set)
    cells = {}
    for r in rs:
        means = enumerate_supporting_sets(r).mean_hop_vector(table)
        for w in ws:
            plan = build_partition_plan(r, w)
            pt = sum(float(p) * t for p, t in zip(plan.probabilities, means))
            secs = sigma_provider(r, w) * expected_L_pi(n, theta, plan.probabilities) * math.sqrt(n) * pt
            cells[(r, w)] = secs / SECONDS_PER_YEAR
    return RuntimeGrid(n, theta, cells, rs, ws)


# -- asymptotic improvement ratio ----------------------------------------------

@dataclass(frozen=True)
class ImprovementRatio:
    value: float
    asymptote: float
    uniform_constant: float
    skewed_constant: float
    prefactor: float


def _approx_prime(i: int) -> float:
    return 2 * i * math.log(2 * i)


def improvement_ratio(q_ln: float, uniform_EL: float = 1.836, skewed_EL: float = 3.023,
                      r_uniform: int = 16, r_skewed: int = 9, w_skewed=Fraction(1, 3)) -> ImprovementRatio:
    """Speedup of (r_skewed, w_skewed) over r_uniform equal partitions as the field grows.

    Supporting primes are approximated by 2i ln(2i) for the first r - 1 and
    by ln q for the last; a hop along ell costs c ell ln q.
    """
    if q_ln <= 0:
        raise ValueError("ln q must be positive")
    uni = sum(_approx_prime(i) for i in range(1, r_uniform)) / r_uniform
    probs = geometric_probabilities(r_skewed, w_skewed)
    skew = sum(float(p) * _approx_prime(i) for i, p in enumerate(probs[:-1], start=1))
    last_uni = 1 / r_uniform
    last_skew = float(probs[-1])
    pref = uniform_EL / skewed_EL
    value = pref * (uni + last_uni * q_ln) / (skew + last_skew * q_ln)
    return ImprovementRatio(value, pref * last_uni / last_skew, uni, skew, pref)
