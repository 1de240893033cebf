"""Monte-Carlo simulation of collision search on genuinely random permutations.

The idealized model replaces the group action by r independent random
permutations h_1..h_r of a set of size n with h_i(z) != z and
h_i(z) != h_j(z).  Permutations, partition labels and distinguished flags are
all realized lazily, so a trial touches only the O(sqrt n) nodes it visits.
The walk schedule and the alpha count are the same as in the real solver.
"""
from __future__ import annotations

import math
import random
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate

import numpy as np

from ._validation import check_positive_int, check_theta
from .rng import spawn_seeds
from .theory import expected_alpha_pi
from .walk_engine import DEFAULT_CMAX_FACTOR, auto_modulus, geometric_probabilities


class _LazyGraph:
    __slots__ = ("n", "r", "cum", "theta", "rng", "fwd", "used", "label", "dist")

    def __init__(self, n, probs, theta, rng):
        self.n = n
        self.r = len(probs)
        self.cum = list(accumulate(float(p) for p in probs))
        self.cum[-1] = 1.0
        self.theta = float(theta)
        self.rng = rng
        self.fwd = [dict() for _ in probs]
        self.used = [set() for _ in probs]
        self.label = {}
        self.dist = {}

    def classify(self, z):
        v = self.label.get(z)
        if v is None:
            v = min(bisect_right(self.cum, self.rng.random()), self.r - 1)
            self.label[z] = v
            self.dist[z] = self.rng.random() < self.theta
        return v, self.dist[z]

    def image(self, i, z):
        fwd = self.fwd[i]
        y = fwd.get(z)
        if y is not None:
            return y
        used = self.used[i]
        others = {f[z] for j, f in enumerate(self.fwd) if j != i and z in f}
        randrange = self.rng.randrange
        tries = 0
        while True:
            y = randrange(self.n)
            if y != z and y not in used and y not in others:
                break
            tries += 1
            if tries == 64 and not any(c != z and c not in used and c not in others for c in range(self.n)):
                raise RuntimeError(f"permutation {i} has no admissible image left for {z}")
        fwd[z] = y
        used.add(y)
        return y


def simulate_alpha_pi(n: int, probs, theta, rng: random.Random, walkers: int = 1,
                      c_max_factor: int = DEFAULT_CMAX_FACTOR) -> int:
    """Visited nodes until the first collision between walks from opposite sides.

    The idealized model assumes walks never cycle before reaching a
    distinguished node.  A walk that re-enters its own trail is therefore
    cut off at once and respawned, instead of burning c_max hops the way the
    real solver must; c_max stays only as a safety net.
    """
    graph = _LazyGraph(n, probs, theta, rng)
    c_max = math.ceil(c_max_factor / float(theta))
    store = {}
    walkers_state = []
    for _ in range(walkers):
        for side in (0, 1):
            z = rng.randrange(n)
            walkers_state.append([z, side, {z}])
    alpha = len(walkers_state)
    while True:
        for wk in walkers_state:
            z, s, trail = wk
            v, dist = graph.classify(z)
            if dist:
                hit = store.get(z)
                if hit is None:
                    store[z] = s
                elif hit != s:
                    return alpha
                z = rng.randrange(n)
                wk[0], wk[2] = z, {z}
                alpha += 1
                continue
            z = graph.image(v, z)
            alpha += 1
            if z in trail or len(trail) > c_max:
                z = rng.randrange(n)
                wk[0], wk[2] = z, {z}
                alpha += 1
                continue
            wk[0] = z
            trail.add(z)


@dataclass(frozen=True)
class OracleResult:
    n: int
    r: int
    trials: int
    mean_alpha: float
    stdev_alpha: float
    predicted: float

    @property
    def rel_error(self) -> float:
        return self.mean_alpha / self.predicted - 1

    @property
    def ci99_7(self) -> float:
        return 3 * self.stdev_alpha / math.sqrt(self.trials)


def permutation_oracle(n: int, r: int, w, trials: int, seed: int, theta=None) -> OracleResult:
    """Mean alpha over independent trials, next to the closed-form expectation."""
    n = check_positive_int(n, "n", minimum=4)
    trials = check_positive_int(trials, "trials")
    theta = check_theta(theta) if theta is not None else Fraction(1, auto_modulus(n))
    probs = geometric_probabilities(r, w)
    if r > n - 1:
        raise ValueError("need r < n for distinct images")
    samples = np.array([simulate_alpha_pi(n, probs, theta, random.Random(s))
                        for s in spawn_seeds(seed, trials)], dtype=float)
    return OracleResult(n, r, trials, float(samples.mean()), float(samples.std(ddof=1)),
                        expected_alpha_pi(n, theta, probs))
