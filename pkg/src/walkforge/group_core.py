"""Explicit finite abelian groups Z_{n1} + ... + Z_{ns} in invariant-factor form.

Elements are exponent vectors over the invariant factors.  Coordinates are
Python integers, so factors wider than 64 bits work unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Iterator, Sequence

from .rng import SplitMix64


class MalformedGroupError(ValueError):
    """Invariant factors that do not describe a group in canonical form."""


@dataclass(frozen=True)
class GroupSpec:
    invariant_factors: tuple[int, ...]
    order: int = field(init=False)

    def __post_init__(self):
        factors = tuple(int(n) for n in self.invariant_factors)
        object.__setattr__(self, "invariant_factors", factors)
        object.__setattr__(self, "order", math.prod(factors))

    @property
    def rank(self) -> int:
        return len(self.invariant_factors)

    @property
    def bits(self) -> int:
        """m = ceil(log2 n)."""
        return (self.order - 1).bit_length()

    @property
    def widths(self) -> tuple[int, ...]:
        """Bytes per coordinate in the canonical encoding."""
        return tuple(max(1, ((n - 1).bit_length() + 7) // 8) for n in self.invariant_factors)

    @classmethod
    def trivial(cls) -> "GroupSpec":
        return cls((1,))

    def __str__(self):
        return " + ".join(f"Z_{n}" for n in self.invariant_factors)


@dataclass(frozen=True, slots=True)
class GroupElement:
    coords: tuple[int, ...]

    def __str__(self):
        return "(" + ",".join(map(str, self.coords)) + ")"


@dataclass(frozen=True)
class SupportingSet:
    generators: tuple

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ValueError("supporting set needs at least one element")
        if len(set(gens)) != len(gens):
            raise ValueError("supporting set elements must be pairwise distinct")
        object.__setattr__(self, "generators", gens)

    @property
    def r(self) -> int:
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def __len__(self):
        return len(self.generators)

    def __getitem__(self, i):
        return self.generators[i]


def make_group(invariant_factors: Iterable[int]) -> GroupSpec:
    factors = [int(n) for n in invariant_factors]
    if not factors:
        raise MalformedGroupError("need at least one invariant factor")
    if any(n < 2 for n in factors):
        raise MalformedGroupError(f"invariant factors must be >= 2, got {factors}")
    for big, small in zip(factors, factors[1:]):
        if big % small:
            raise MalformedGroupError(f"{small} does not divide {big}")
    return GroupSpec(tuple(factors))


def _check(a: GroupElement, spec: GroupSpec) -> None:
    if len(a.coords) != spec.rank:
        raise ValueError(f"element {a} has {len(a.coords)} coordinates, group has rank {spec.rank}")


def element(spec: GroupSpec, coords: Sequence[int]) -> GroupElement:
    """Canonical element with coordinates reduced into range."""
    if len(coords) != spec.rank:
        raise ValueError(f"expected {spec.rank} coordinates, got {len(coords)}")
    return GroupElement(tuple(int(c) % n for c, n in zip(coords, spec.invariant_factors)))


def identity(spec: GroupSpec) -> GroupElement:
    return GroupElement((0,) * spec.rank)


def op(a: GroupElement, b: GroupElement, spec: GroupSpec) -> GroupElement:
    _check(a, spec)
    _check(b, spec)
    return GroupElement(tuple((x + y) % n for x, y, n in zip(a.coords, b.coords, spec.invariant_factors)))


def inverse(a: GroupElement, spec: GroupSpec) -> GroupElement:
    _check(a, spec)
    return GroupElement(tuple(-x % n for x, n in zip(a.coords, spec.invariant_factors)))


def power(a: GroupElement, e: int, spec: GroupSpec) -> GroupElement:
    """``e``-fold sum of ``a``; negative ``e`` goes through the inverse."""
    _check(a, spec)
    return GroupElement(tuple(x * e % n for x, n in zip(a.coords, spec.invariant_factors)))


def random_element(spec: GroupSpec, rng: SplitMix64) -> GroupElement:
    return GroupElement(tuple(rng.randbelow(n) for n in spec.invariant_factors))


def elements(spec: GroupSpec) -> Iterator[GroupElement]:
    for coords in product(*(range(n) for n in spec.invariant_factors)):
        yield GroupElement(coords)


def element_index(a: GroupElement, spec: GroupSpec) -> int:
    """Mixed-radix index of ``a`` in ``[0, n)``; first coordinate least significant."""
    idx, scale = 0, 1
    for x, n in zip(a.coords, spec.invariant_factors):
        idx += x * scale
        scale *= n
    return idx


def encode(a: GroupElement, spec: GroupSpec) -> bytes:
    """Fixed-width little-endian concatenation of the coordinates."""
    _check(a, spec)
    return b"".join(x.to_bytes(w, "little") for x, w in zip(a.coords, spec.widths))


def lattice_index(rows: Iterable[Sequence[int]], dim: int) -> int:
    """Index of the integer lattice spanned by ``rows`` in Z^dim (0 if not full rank).

    Column-by-column Euclidean row reduction; the index is the product of the
    diagonal of the resulting echelon form.
    """
    pending = [list(r) for r in rows if any(r)]
    index = 1
    for col in range(dim):
        active = [r for r in pending if r[col]]
        rest = [r for r in pending if not r[col]]
        while len(active) > 1:
            active.sort(key=lambda r: abs(r[col]))
            pivot = active[0]
            survivors = [pivot]
            for r in active[1:]:
                q = r[col] // pivot[col]
                reduced = [x - q * y for x, y in zip(r, pivot)]
                if reduced[col]:
                    survivors.append(reduced)
                elif any(reduced):
                    rest.append(reduced)
            active = survivors
        if not active:
            return 0
        index *= abs(active[0][col])
        pending = rest
    return index


def subgroup_order(spec: GroupSpec, gens: Iterable[GroupElement]) -> int:
    """Order of the subgroup generated by ``gens``.

    The generated subgroup corresponds to the lattice spanned by the generator
    vectors together with n_i * e_i; its index in Z^s equals [G : <gens>].
    """
    gens = list(gens)
    if not gens:
        raise ValueError("need at least one generator")
    for g in gens:
        _check(g, spec)
    s = spec.rank
    rows = [list(g.coords) for g in gens]
    for i, n in enumerate(spec.invariant_factors):
        row = [0] * s
        row[i] = n
        rows.append(row)
    return spec.order // lattice_index(rows, s)


def generates(spec: GroupSpec, gens: Iterable[GroupElement]) -> bool:
    return subgroup_order(spec, gens) == spec.order


class AbelianGroupBackend:
    """Regular action of an explicit abelian group on itself."""

    kind = "abstract"

    def __init__(self, spec: GroupSpec):
        self.spec = spec

    @property
    def order(self) -> int:
        return self.spec.order

    def identity(self) -> GroupElement:
        return identity(self.spec)

    def op(self, a, b):
        return op(a, b, self.spec)

    def act(self, g, x):
        return op(g, x, self.spec)

    def inverse(self, a):
        return inverse(a, self.spec)

    def power(self, a, e: int):
        return power(a, e, self.spec)

    def random_element(self, rng: SplitMix64):
        return random_element(self.spec, rng)

    def encode(self, z) -> bytes:
        return encode(z, self.spec)

    def key(self, z):
        return z.coords

    def generates(self, gens) -> bool:
        return generates(self.spec, gens)

    def structure(self) -> list[tuple[GroupElement, int]]:
        """Independent generators with their orders (the unit vectors)."""
        out = []
        for i, n in enumerate(self.spec.invariant_factors):
            coords = [0] * self.spec.rank
            coords[i] = 1 if n > 1 else 0
            out.append((GroupElement(tuple(coords)), n))
        return out

    def describe(self) -> str:
        return str(self.spec)
