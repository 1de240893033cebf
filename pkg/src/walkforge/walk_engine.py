"""Hash-driven adding walks with geometric partition probabilities.

Every node z gets a 64-bit key by folding its canonical byte encoding.  Two
rounds of Wang's 64-to-32 bit hash are taken from that key: the plain round
picks the partition through cumulative 32-bit thresholds, the salted round
decides whether z is distinguished.  Keeping the rounds apart stops the step
choice and the stopping rule from sharing bits.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from ._validation import check_positive_int, check_ratio, check_theta

MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1
TWO32 = 1 << 32
FOLD_MUL = 0x9E3779B97F4A7C15
DIST_SALT = 0xD6E8FEB86659FD93
DEFAULT_CMAX_FACTOR = 30


def hash64to32(key: int) -> int:
    """Thomas Wang's 64-to-32 bit integer hash (shift variant)."""
    k = key & MASK64
    k = ((~k) + (k << 18)) & MASK64
    k ^= k >> 31
    k = (k * 21) & MASK64
    k ^= k >> 11
    k = (k + (k << 6)) & MASK64
    k ^= k >> 22
    return k & MASK32


def fold64(data: bytes) -> int:
    """Fold a byte string into 64 bits: XOR each little-endian word in, then multiply."""
    acc = 0
    for i in range(0, len(data), 8):
        block = int.from_bytes(data[i:i + 8], "little")
        acc = ((acc ^ block) * FOLD_MUL) & MASK64
    return acc


def node_key(z, backend) -> int:
    return fold64(backend.encode(z))


def node_hash(z, backend) -> int:
    """32-bit hash of a node; drives the partition function."""
    return hash64to32(node_key(z, backend))


def distinguisher_hash(z, backend) -> int:
    return hash64to32(node_key(z, backend) ^ DIST_SALT)


@dataclass(frozen=True)
class PartitionPlan:
    r: int
    w: Fraction
    probabilities: tuple[Fraction, ...]
    thresholds: tuple[int, ...]

    def as_floats(self) -> list[float]:
        return [float(p) for p in self.probabilities]


def geometric_probabilities(r: int, w) -> tuple[Fraction, ...]:
    w = check_ratio(w)
    raw = [w ** i for i in range(r)]
    total = sum(raw)
    return tuple(x / total for x in raw)


def build_partition_plan(r: int, w) -> PartitionPlan:
    """Exact geometric probabilities p_{i+1} = w p_i and their 32-bit cumulative thresholds."""
    r = check_positive_int(r, "r")
    w = check_ratio(w)
    probs = geometric_probabilities(r, w)
    thresholds = []
    acc = Fraction(0)
    for p in probs:
        acc += p
        thresholds.append(round(acc * TWO32))
    thresholds[-1] = TWO32
    prev = 0
    for t in thresholds:
        if t <= prev:
            raise ValueError(f"partition with r={r}, w={w} has an empty 32-bit bucket")
        prev = t
    return PartitionPlan(r, w, probs, tuple(thresholds))


def distinguisher_modulus(theta) -> int:
    """Nearest integer to 1/theta (half rounds up)."""
    theta = check_theta(theta)
    inv = 1 / theta
    return max(1, math.floor(inv + Fraction(1, 2)))


def auto_modulus(n: int) -> int:
    """Nearest integer to n^{1/4}, computed exactly."""
    if n < 1:
        raise ValueError("group order must be positive")
    d = math.isqrt(math.isqrt(n))
    while (d + 1) ** 4 <= n:
        d += 1
    # round up iff n >= (d + 1/2)^4, i.e. 16 n >= (2d + 1)^4
    if 16 * n >= (2 * d + 1) ** 4:
        d += 1
    return max(1, d)


@dataclass(frozen=True)
class WalkParams:
    theta: Fraction
    c_max: int
    modulus: int

    @classmethod
    def from_theta(cls, theta, c_max: int | None = None, c_max_factor: int = DEFAULT_CMAX_FACTOR) -> "WalkParams":
        theta = check_theta(theta)
        if c_max is None:
            c_max = math.ceil(c_max_factor / theta)
        if c_max < 0:
            raise ValueError("c_max must be nonnegative")
        return cls(theta, int(c_max), distinguisher_modulus(theta))

    @classmethod
    def auto(cls, n: int, c_max: int | None = None, c_max_factor: int = DEFAULT_CMAX_FACTOR) -> "WalkParams":
        """theta = n^{-1/4}, realised as 1/D with D the nearest integer to n^{1/4}."""
        return cls.from_theta(Fraction(1, auto_modulus(n)), c_max, c_max_factor)


def partition_index(z, plan: PartitionPlan, backend) -> int:
    """1-based partition of ``z``: the least i with node_hash(z) < T_i."""
    return bisect_right(plan.thresholds, node_hash(z, backend)) + 1


def is_distinguished(z, params: WalkParams, backend) -> bool:
    return distinguisher_hash(z, backend) % params.modulus == 0


@dataclass(frozen=True)
class DistinguishedTriple:
    z: Any
    a: Any
    s: int
    hops: int = 0


@dataclass(frozen=True)
class Abandoned:
    """A walk that ran past c_max hops without meeting a distinguished node."""

    hops: int

    def __bool__(self):
        return False


class Stepper:
    """Precomputed per-node decisions for one (plan, params, backend) triple."""

    __slots__ = ("thresholds", "modulus", "encode")

    def __init__(self, plan: PartitionPlan, params: WalkParams, backend):
        self.thresholds = plan.thresholds
        self.modulus = params.modulus
        self.encode = backend.encode

    def classify(self, z) -> tuple[int, bool]:
        """(0-based partition slot, distinguished?) for node ``z``."""
        key = fold64(self.encode(z))
        slot = bisect_right(self.thresholds, hash64to32(key))
        return slot, hash64to32(key ^ DIST_SALT) % self.modulus == 0


def walk(start, a0, s: int, plan: PartitionPlan, params: WalkParams, H, backend):
    """Run one client walk from ``start`` until a distinguished node or abandonment.

    Iterates z <- g_{v(z)} * z and a <- a g_{v(z)}; the walk is abandoned as
    soon as the hop counter exceeds ``params.c_max``.
    """
    if len(H) != plan.r:
        raise ValueError(f"supporting set has {len(H)} elements, plan expects {plan.r}")
    stepper = Stepper(plan, params, backend)
    gens = list(H)
    z, a, c = start, a0, 0
    while True:
        slot, dist = stepper.classify(z)
        if dist:
            return DistinguishedTriple(z, a, s, c)
        g = gens[slot]
        z = backend.act(g, z)
        a = backend.op(a, g)
        c += 1
        if c > params.c_max:
            return Abandoned(c)
