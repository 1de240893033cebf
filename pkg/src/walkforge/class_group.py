"""Ideal class groups of imaginary quadratic orders as reduced binary quadratic forms.

A form (a, b, c) stands for a x^2 + b x y + c y^2 with discriminant
b^2 - 4ac < 0.  Composition follows Shanks' formulation of Gauss/Dirichlet
composition (Cohen, *A Course in Computational Algebraic Number Theory*,
Alg. 5.4.7) and every result is fully reduced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from sympy import Matrix, divisors, kronecker_symbol, nextprime, sqrt_mod
from sympy.matrices.normalforms import smith_normal_decomp

from .rng import SplitMix64

ENUMERATION_BOUND = 1 << 40


class DiscriminantError(ValueError):
    pass


class RamifiedPrimeError(ValueError):
    """The prime divides the discriminant; its class has order at most two."""


class NonSplit:
    """Sentinel for inert primes (Kronecker symbol -1)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NonSplit"

    def __bool__(self):
        return False


NON_SPLIT = NonSplit()


@dataclass(frozen=True, slots=True)
class QuadForm:
    a: int
    b: int
    c: int

    @property
    def discriminant(self) -> int:
        return self.b * self.b - 4 * self.a * self.c

    def is_reduced(self) -> bool:
        a, b, c = self.a, self.b, self.c
        if not (abs(b) <= a <= c):
            return False
        if (abs(b) == a or a == c) and b < 0:
            return False
        return True

    def __iter__(self):
        yield self.a
        yield self.b
        yield self.c

    def __str__(self):
        return f"({self.a},{self.b},{self.c})"


def check_discriminant(disc: int) -> int:
    disc = int(disc)
    if disc >= 0:
        raise DiscriminantError(f"discriminant must be negative, got {disc}")
    if disc % 4 not in (0, 1):
        raise DiscriminantError(f"discriminant must be 0 or 1 mod 4, got {disc}")
    return disc


def is_fundamental(disc: int) -> bool:
    """True for fundamental discriminants of imaginary quadratic fields."""
    from sympy import factorint

    if disc >= 0:
        return False
    if disc % 4 == 1:
        return all(e == 1 for e in factorint(-disc).values())
    if disc % 4 == 0:
        m = disc // 4
        if m % 4 not in (2, 3):
            return False
        return all(e == 1 for e in factorint(-m).values())
    return False


def principal_form(disc: int) -> QuadForm:
    disc = check_discriminant(disc)
    k = disc & 1
    return QuadForm(1, k, (k - disc) // 4)


def _normalize(a: int, b: int, c: int) -> tuple[int, int, int]:
    r = (a - b) // (2 * a)
    return a, b + 2 * r * a, a * r * r + b * r + c


def _reduce_tuple(a: int, b: int, c: int) -> QuadForm:
    if not (-a < b <= a):
        a, b, c = _normalize(a, b, c)
    while a > c:
        a, b, c = _normalize(c, -b, a)
    if a == c and b < 0:
        b = -b
    return QuadForm(a, b, c)


def reduce(f: QuadForm) -> QuadForm:
    """The unique reduced form properly equivalent to ``f``."""
    a, b, c = f.a, f.b, f.c
    if b * b - 4 * a * c >= 0:
        raise DiscriminantError(f"{f} is not positive definite")
    if a <= 0:
        raise DiscriminantError(f"{f} has nonpositive leading coefficient")
    if math.gcd(math.gcd(a, b), c) != 1:
        raise DiscriminantError(f"{f} is not primitive")
    return _reduce_tuple(a, b, c)


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """(u, v, g) with u a + v b = g = gcd(a, b) >= 0."""
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, r = divmod(a, b)
        a, b = b, r
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        return -x0, -y0, -a
    return x0, y0, a


def compose(f: QuadForm, g: QuadForm) -> QuadForm:
    if f.discriminant != g.discriminant:
        raise DiscriminantError(f"discriminant mismatch: {f.discriminant} vs {g.discriminant}")
    a1, b1, c1 = f.a, f.b, f.c
    a2, b2, c2 = g.a, g.b, g.c
    if a1 > a2:
        a1, b1, c1, a2, b2, c2 = a2, b2, c2, a1, b1, c1
    s = (b1 + b2) // 2
    n = b2 - s
    if a2 % a1 == 0:
        y1, d = 0, a1
    else:
        y1, _, d = _xgcd(a2, a1)
    if s % d == 0:
        y2, x2, d1 = -1, 0, d
    else:
        x2, y2, d1 = _xgcd(s, d)
        y2 = -y2
    v1 = a1 // d1
    v2 = a2 // d1
    r = (y1 * y2 * n - x2 * c2) % v1
    b3 = b2 + 2 * v2 * r
    a3 = v1 * v2
    c3 = (c2 * d1 + r * (b2 + v2 * r)) // v1
    return _reduce_tuple(a3, b3, c3)


def invert(f: QuadForm) -> QuadForm:
    return _reduce_tuple(f.a, -f.b, f.c)


def form_power(f: QuadForm, e: int) -> QuadForm:
    if e < 0:
        f, e = invert(f), -e
    result = principal_form(f.discriminant)
    base = f
    while e:
        if e & 1:
            result = compose(result, base)
        e >>= 1
        if e:
            base = compose(base, base)
    return result


def _sqrt_disc_mod_4l(disc: int, ell: int) -> int:
    """Smallest b > 0 with b^2 = disc (mod 4 ell) and b = disc (mod 2), or 0 if none positive."""
    roots = sqrt_mod(disc % ell, ell, all_roots=True) if ell > 2 else [0, 1]
    best = None
    for root in roots:
        for cand in (root, root + ell, 2 * ell - root, ell - root):
            cand %= 2 * ell
            if (cand * cand - disc) % (4 * ell) == 0:
                b = min(cand, 2 * ell - cand) if cand else 0
                if best is None or b < best:
                    best = b
    if best is None:
        raise ArithmeticError(f"no square root of {disc} modulo {4 * ell}")
    return best


def prime_form(ell: int, ctx: "ClassGroupCtx", allow_ramified: bool = False):
    """Reduced form of the prime ideal above ``ell``, or ``NON_SPLIT`` if ``ell`` is inert.

    Among the two ideals above a split ``ell`` the one with the smaller
    positive middle coefficient is taken, so repeated calls always act by
    the same ideal and never by its conjugate.
    """
    disc = ctx.discriminant
    if disc % ell == 0:
        if not allow_ramified:
            raise RamifiedPrimeError(f"{ell} ramifies in discriminant {disc}")
    elif kronecker_symbol(disc, ell) != 1:
        return NON_SPLIT
    b = _sqrt_disc_mod_4l(disc, ell)
    return reduce(QuadForm(ell, b, (b * b - disc) // (4 * ell)))


def split_primes(ctx: "ClassGroupCtx", count: int, bound: int = 10**6,
                 include_ramified: bool = False) -> list[tuple[int, QuadForm]]:
    """The ``count`` smallest split primes with their prime forms, ascending."""
    if count < 1:
        raise ValueError("need count >= 1")
    out: list[tuple[int, QuadForm]] = []
    seen: set[QuadForm] = set()
    ell = 2
    while len(out) < count:
        if ell > bound:
            raise RuntimeError(f"only {len(out)} usable primes below {bound} for discriminant {ctx.discriminant}")
        ramified = ctx.discriminant % ell == 0
        if ramified and not include_ramified:
            ell = nextprime(ell)
            continue
        f = prime_form(ell, ctx, allow_ramified=include_ramified)
        if f and f not in seen:
            out.append((ell, f))
            seen.add(f)
        ell = nextprime(ell)
    return out


def reduced_forms(disc: int) -> list[QuadForm]:
    """All reduced primitive forms of discriminant ``disc``."""
    disc = check_discriminant(disc)
    if -disc > ENUMERATION_BOUND:
        raise ValueError(f"|disc| = {-disc} exceeds the enumeration bound 2^40")
    out = []
    b = disc & 1
    b_max = math.isqrt(-disc // 3)
    while b <= b_max:
        target = (b * b - disc) // 4
        for a in divisors(target):
            if a < max(b, 1):
                continue
            c = target // a
            if a > c:
                break
            if math.gcd(math.gcd(a, b), c) != 1:
                continue
            out.append(QuadForm(a, b, c))
            if 0 < b < a < c:
                out.append(QuadForm(a, -b, c))
        b += 2
    out.sort(key=lambda f: (f.a, f.b, f.c))
    return out


def class_number_bruteforce(disc: int) -> int:
    return len(reduced_forms(disc))


@dataclass
class ClassGroupCtx:
    discriminant: int
    _class_number: int | None = field(default=None, repr=False)
    _polycyclic: list[tuple[QuadForm, int]] | None = field(default=None, repr=False)
    _invariants: list[int] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.discriminant = check_discriminant(self.discriminant)

    def class_number(self) -> int:
        if self._class_number is None:
            self._class_number = class_number_bruteforce(self.discriminant)
        return self._class_number

    def principal(self) -> QuadForm:
        return principal_form(self.discriminant)


def _closure_step(subgroup: dict, gen: QuadForm):
    """Extend ``subgroup`` (form -> exponent list) by ``gen`` in place.

    Returns the relative order e of ``gen`` modulo the old subgroup and the
    exponent vector of gen^e inside it.  Nothing changes when e == 1.
    """
    e, y = 1, gen
    while y not in subgroup:
        y = compose(y, gen)
        e += 1
    rel = list(subgroup[y])
    if e == 1:
        return 1, rel
    layer = list(subgroup.items())
    for _, vec in layer:
        vec.append(0)
    for i in range(1, e):
        layer = [(compose(f, gen), vec[:-1] + [i]) for f, vec in layer]
        subgroup.update(layer)
    return e, rel


def polycyclic_generators(ctx: ClassGroupCtx, candidates: Iterable[QuadForm] | None = None):
    """Generators f_1..f_k with relative orders e_1..e_k.

    Every class is uniquely f_1^{i_1} ... f_k^{i_k} with 0 <= i_j < e_j, so
    uniform exponents give a uniform class.  Also returns the relation rows.
    """
    h = ctx.class_number()
    principal = ctx.principal()
    subgroup: dict[QuadForm, list[int]] = {principal: []}
    gens: list[tuple[QuadForm, int]] = []
    relations: list[list[int]] = []
    if candidates is None:
        candidates = _generator_candidates(ctx)
    for f in candidates:
        if len(subgroup) == h:
            break
        e, vec = _closure_step(subgroup, f)
        if e == 1:
            continue
        relations.append([-x for x in vec] + [e])
        gens.append((f, e))
    if len(subgroup) != h:
        raise RuntimeError(f"candidates generate a subgroup of order {len(subgroup)}, class number is {h}")
    k = len(gens)
    rows = [row + [0] * (k - len(row)) for row in relations]
    return gens, rows


def _generator_candidates(ctx: ClassGroupCtx):
    disc = ctx.discriminant
    ell = 2
    bound = max(2, math.isqrt(-disc // 3) + 1)
    while ell <= bound:
        f = prime_form(ell, ctx, allow_ramified=True)
        if f:
            yield f
        ell = nextprime(ell)


def structure_bruteforce(ctx: ClassGroupCtx) -> list[int]:
    """Invariant factors n_1, n_2, ... (n_{i+1} | n_i) of the class group."""
    if ctx._invariants is not None:
        return list(ctx._invariants)
    gens, rows = polycyclic_generators(ctx)
    ctx._polycyclic = gens
    if not gens:
        ctx._invariants = [1]
        return [1]
    smf, _, _ = smith_normal_decomp(Matrix(rows))
    diag = [abs(int(smf[i, i])) for i in range(len(gens))]
    factors = sorted((d for d in diag if d > 1), reverse=True) or [1]
    ctx._invariants = factors
    return list(factors)


def form_encoding_width(disc: int) -> int:
    bits = (-disc).bit_length() + 2
    return max(8, (bits + 7) // 8)


class ClassGroupBackend:
    """Cl(O) acting on itself; elements and accumulators are reduced forms."""

    kind = "classgroup"

    def __init__(self, ctx: ClassGroupCtx | int):
        if not isinstance(ctx, ClassGroupCtx):
            ctx = ClassGroupCtx(int(ctx))
        self.ctx = ctx
        self._width = form_encoding_width(ctx.discriminant)
        self._offset = 1 << (8 * self._width - 1)

    @property
    def order(self) -> int:
        return self.ctx.class_number()

    def identity(self) -> QuadForm:
        return self.ctx.principal()

    def op(self, a, b):
        return compose(a, b)

    def act(self, g, x):
        return compose(g, x)

    def inverse(self, a):
        return invert(a)

    def power(self, a, e: int):
        return form_power(a, e)

    def structure(self) -> list[tuple[QuadForm, int]]:
        if self.ctx._polycyclic is None:
            structure_bruteforce(self.ctx)
        return list(self.ctx._polycyclic)

    def random_element(self, rng: SplitMix64):
        h = self.identity()
        for gen, order in self.structure():
            h = compose(h, form_power(gen, rng.randbelow(order)))
        return h

    def encode(self, z: QuadForm) -> bytes:
        w = self._width
        return (z.a.to_bytes(w, "little") + (z.b + self._offset).to_bytes(w, "little")
                + z.c.to_bytes(w, "little"))

    def key(self, z):
        return (z.a, z.b, z.c)

    def generates(self, gens) -> bool:
        try:
            polycyclic_generators(self.ctx, list(gens))
        except RuntimeError:
            return False
        return True

    def describe(self) -> str:
        return f"Cl({self.ctx.discriminant})"
