"""Parallel collision search for the group action inverse problem.

Given x0, x1 with x1 = g * x0 for an unknown g, walks are started from
randomized nodes h * x0 (side 0) and h * x1 (side 1).  Each finished walk
submits its distinguished endpoint (z, a, s) with a * x_s = z.  Two walks
from opposite sides ending at the same z give z = a * x_s = b * x_{1-s},
hence g = a^{1-2s} b^{2s-1}.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_ratio, check_theta
from .class_group import ClassGroupBackend, ClassGroupCtx, QuadForm, split_primes
from .group_core import AbelianGroupBackend, GroupElement, GroupSpec, SupportingSet, random_element
from .rng import SplitMix64, derive_seed
from .walk_engine import (DEFAULT_CMAX_FACTOR, Abandoned, DistinguishedTriple, PartitionPlan, Stepper,
                          WalkParams, build_partition_plan, walk)

log = logging.getLogger(__name__)

KERNEL_ORDER_LIMIT = 1 << 62


class SolveBudgetExceeded(RuntimeError):
    """No verified solution within the node budget."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonGeneratingSetError(ValueError):
    pass


# -- triple store -----------------------------------------------------------

class _NoCollision:
    def __repr__(self):
        return "NoCollision"


NO_COLLISION = _NoCollision()


@dataclass(frozen=True)
class Collision:
    """Same-side hit: the duplicate triple is dropped."""

    z: Any
    side: int


@dataclass(frozen=True)
class GoodCollision:
    """Opposite-side hit.  ``incoming`` came with side ``side``; ``stored`` has side 1 - side."""

    incoming: Any
    stored: Any
    side: int


@dataclass
class TripleStore:
    backend: Any
    entries: dict = field(default_factory=dict)
    collisions: int = 0
    good_collisions: int = 0
    abandoned: int = 0

    def __len__(self):
        return len(self.entries)


def submit_triple(store: TripleStore, triple: DistinguishedTriple):
    key = store.backend.key(triple.z)
    hit = store.entries.get(key)
    if hit is None:
        store.entries[key] = (triple.a, triple.s)
        return NO_COLLISION
    store.collisions += 1
    stored_a, stored_s = hit
    if stored_s == triple.s:
        return Collision(triple.z, triple.s)
    store.good_collisions += 1
    return GoodCollision(triple.a, stored_a, triple.s)


def assemble_solution(a, b, s: int, backend):
    """a^{1-2s} b^{2s-1}: a b^{-1} for s = 0, a^{-1} b for s = 1."""
    if s == 0:
        return backend.op(a, backend.inverse(b))
    return backend.op(backend.inverse(a), b)


def randomized_start(x_s, backend, structure, rng: SplitMix64):
    """(h * x_s, h) with h uniform, drawn as random exponents on independent generators."""
    h = backend.identity()
    for gen, order in structure:
        e = rng.randbelow(order)
        if e:
            h = backend.op(h, backend.power(gen, e))
    return backend.act(h, x_s), h


# -- reports ------------------------------------------------------------------

def _element_json(x):
    if isinstance(x, GroupElement):
        return list(x.coords)
    if isinstance(x, QuadForm):
        return [x.a, x.b, x.c]
    return x


@dataclass
class SolveReport:
    solution: Any
    alpha: int
    triples: int
    collisions: int
    good_collisions: int
    abandoned: int
    walks: int
    group_order: int
    wall_time: float = 0.0

    @property
    def L(self) -> float:
        return self.alpha / math.sqrt(self.group_order)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "solution": _element_json(self.solution),
            "alpha": self.alpha,
            "L": self.L,
            "distinguished_triples": self.triples,
            "collisions": self.collisions,
            "good_collisions": self.good_collisions,
            "abandoned": self.abandoned,
            "walks": self.walks,
            "group_order": self.group_order,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


# -- solve ------------------------------------------------------------------

def _kernel_eligible(backend) -> bool:
    return isinstance(backend, AbelianGroupBackend) and backend.order < KERNEL_ORDER_LIMIT


def _solve_reference(x0, x1, t, plan, params, gens, backend, seed, max_nodes):
    structure = backend.structure()
    stepper = Stepper(plan, params, backend)
    store = TripleStore(backend)
    xs = (x0, x1)
    counter = 0

    def spawn(s):
        nonlocal counter
        rng = SplitMix64(derive_seed(seed, counter))
        counter += 1
        z, h = randomized_start(xs[s], backend, structure, rng)
        return [z, h, s, 0]

    walkers = []
    for _ in range(t):
        walkers.append(spawn(0))
        walkers.append(spawn(1))
    alpha = len(walkers)
    act, mul = backend.act, backend.op
    c_max = params.c_max
    while True:
        for i, wk in enumerate(walkers):
            z, a, s, c = wk
            slot, dist = stepper.classify(z)
            if dist:
                res = submit_triple(store, DistinguishedTriple(z, a, s, c))
                if isinstance(res, GoodCollision):
                    g = assemble_solution(res.incoming, res.stored, res.side, backend)
                    if act(g, x0) == x1:
                        return SolveReport(g, alpha, len(store), store.collisions, store.good_collisions,
                                           store.abandoned, counter, backend.order)
                    log.warning("good collision at %s failed verification; continuing", z)
                walkers[i] = spawn(s)
                alpha += 1
                continue
            gen = gens[slot]
            wk[0] = act(gen, z)
            wk[1] = mul(a, gen)
            wk[3] = c + 1
            alpha += 1
            if c + 1 > c_max:
                store.abandoned += 1
                walkers[i] = spawn(s)
                alpha += 1
        if max_nodes and alpha > max_nodes:
            report = SolveReport(None, alpha, len(store), store.collisions, store.good_collisions,
                                 store.abandoned, counter, backend.order)
            raise SolveBudgetExceeded(f"no solution within {max_nodes} nodes", report)


def _solve_kernel(x0, x1, t, plan, params, gens, backend, seed, max_nodes):
    from . import _kernels

    spec = backend.spec
    rank = spec.rank
    moduli = np.array(spec.invariant_factors, dtype=np.int64)
    widths = np.array(spec.widths, dtype=np.int64)
    gen_arr = np.array([g.coords for g in gens], dtype=np.int64).reshape(len(gens), rank)
    thresholds = np.array(plan.thresholds, dtype=np.uint64)
    out_g = np.zeros(rank, dtype=np.int64)
    stats = np.zeros(6, dtype=np.int64)
    status = _kernels.solve_kernel(moduli, widths, rank, gen_arr, thresholds, params.modulus, params.c_max,
                                   np.array(x0.coords, dtype=np.int64), np.array(x1.coords, dtype=np.int64),
                                   t, np.uint64(seed), int(max_nodes or 0), out_g, stats)
    alpha, walks, stored, coll, good, aband = (int(v) for v in stats)
    if status != _kernels.STATUS_SOLVED:
        report = SolveReport(None, alpha, stored, coll, good, aband, walks, backend.order)
        raise SolveBudgetExceeded(f"no solution within {max_nodes} nodes", report)
    g = GroupElement(tuple(int(v) for v in out_g))
    return SolveReport(g, alpha, stored, coll, good, aband, walks, backend.order)


def _solve_threaded(x0, x1, t, plan, params, gens, backend, seed, max_nodes, threads):
    """Clients run whole walks in a thread pool; the coordinator handles submissions in completion order."""
    structure = backend.structure()
    store = TripleStore(backend)
    xs = (x0, x1)
    counter = 0
    alpha = 0
    H = SupportingSet(tuple(gens))

    def client(s, walk_seed):
        z, h = randomized_start(xs[s], backend, structure, SplitMix64(walk_seed))
        return walk(z, h, s, plan, params, H, backend)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = {}

        def launch(s):
            nonlocal counter
            fut = pool.submit(client, s, derive_seed(seed, counter))
            counter += 1
            pending[fut] = s

        for _ in range(t):
            launch(0)
            launch(1)
        while True:
            done, _ = wait(pending, return_when=FIRST_COMPLETED)
            for fut in done:
                s = pending.pop(fut)
                result = fut.result()
                alpha += result.hops + 1
                if isinstance(result, Abandoned):
                    store.abandoned += 1
                else:
                    res = submit_triple(store, result)
                    if isinstance(res, GoodCollision):
                        g = assemble_solution(res.incoming, res.stored, res.side, backend)
                        if backend.act(g, x0) == x1:
                            for f in pending:
                                f.cancel()
                            return SolveReport(g, alpha, len(store), store.collisions, store.good_collisions,
                                               store.abandoned, counter, backend.order)
                if max_nodes and alpha > max_nodes:
                    for f in pending:
                        f.cancel()
                    report = SolveReport(None, alpha, len(store), store.collisions, store.good_collisions,
                                         store.abandoned, counter, backend.order)
                    raise SolveBudgetExceeded(f"no solution within {max_nodes} nodes", report)
                launch(s)


def solve(x0, x1, t: int, plan: PartitionPlan, params: WalkParams, H, backend, seed: int,
          max_nodes: int | None = None, threads: int = 1, use_kernel: bool = True) -> SolveReport:
    """Find g with g * x0 = x1 by parallel collision search with 2t walkers.

    With ``threads == 1`` the walkers advance in lockstep and the result is
    a deterministic function of the inputs; explicit abelian groups of order
    below 2^62 then run in a compiled kernel that reproduces the reference
    loop exactly.  With more threads each client runs whole walks
    concurrently and only soundness of the returned solution is guaranteed.
    """
    t = check_positive_int(t, "t")
    gens = list(H)
    if len(gens) != plan.r:
        raise ValueError(f"supporting set has {len(gens)} elements, plan expects {plan.r}")
    if not backend.generates(gens):
        raise NonGeneratingSetError("supporting set does not generate the group")
    seed = int(seed) & ((1 << 64) - 1)
    start = time.perf_counter()
    if threads > 1:
        report = _solve_threaded(x0, x1, t, plan, params, gens, backend, seed, max_nodes, threads)
    elif use_kernel and _kernel_eligible(backend):
        report = _solve_kernel(x0, x1, t, plan, params, gens, backend, seed, max_nodes)
    else:
        report = _solve_reference(x0, x1, t, plan, params, gens, backend, seed, max_nodes)
    report.wall_time = time.perf_counter() - start
    if backend.act(report.solution, x0) != x1:
        raise AssertionError("solver returned an unverified solution")
    return report


# -- estimator facade -------------------------------------------------------

def as_backend(group):
    """Coerce a GroupSpec, invariant-factor list, discriminant or context into a backend."""
    if isinstance(group, (AbelianGroupBackend, ClassGroupBackend)):
        return group
    if isinstance(group, GroupSpec):
        return AbelianGroupBackend(group)
    if isinstance(group, ClassGroupCtx):
        return ClassGroupBackend(group)
    if isinstance(group, int):
        return ClassGroupBackend(ClassGroupCtx(group))
    if isinstance(group, (list, tuple)):
        from .group_core import make_group

        return AbelianGroupBackend(make_group(group))
    raise TypeError(f"cannot build a group backend from {type(group).__name__}")


def random_generating_set(spec: GroupSpec, r: int, rng: SplitMix64, max_tries: int = 10_000):
    """r distinct uniform elements that generate ``spec``; returns (set, resamples)."""
    if r < spec.rank:
        raise ValueError(f"{r} elements cannot generate a group of rank {spec.rank}")
    if r > spec.order:
        raise ValueError(f"group of order {spec.order} has fewer than {r} elements")
    backend = AbelianGroupBackend(spec)
    for attempt in range(max_tries):
        chosen: list[GroupElement] = []
        seen = set()
        while len(chosen) < r:
            g = random_element(spec, rng)
            if g.coords not in seen:
                seen.add(g.coords)
                chosen.append(g)
        if backend.generates(chosen):
            return SupportingSet(tuple(chosen)), attempt
    raise NonGeneratingSetError(f"no generating {r}-subset found in {max_tries} tries")


def class_group_supporting_set(backend: ClassGroupBackend, r: int, bound: int = 10**6) -> SupportingSet:
    """The r smallest split prime forms, widened by later primes until they generate."""
    primes = split_primes(backend.ctx, r, bound=bound)
    forms = [f for _, f in primes]
    if backend.generates(forms):
        return SupportingSet(tuple(forms))
    extra = split_primes(backend.ctx, r + 64, bound=bound)[r:]
    for _, f in extra:
        forms[-1] = f
        if backend.generates(forms):
            log.info("replaced the largest split prime form to reach a generating set")
            return SupportingSet(tuple(forms))
    raise NonGeneratingSetError(f"no generating set of {r} split prime forms found")


class CollisionSearchSolver(BaseEstimator):
    """Estimator-style wrapper: ``fit`` binds a group, ``solve``/``predict`` answer instances.

    Parameters
    ----------
    r : int
        Number of partitions (size of the supporting set).
    w : rational
        Ratio of consecutive partition probabilities, in (0, 1].
    theta : rational or "auto"
        Distinguished-node probability; "auto" uses n^{-1/4}.
    walkers : int
        Walkers per side (t).
    c_max_factor : int
        Walks longer than c_max_factor / theta hops are abandoned.
    random_state : int or None
        Master seed for supporting-set sampling and walk starts.
    """

    def __init__(self, r=16, w=1, theta="auto", walkers=1, c_max_factor=DEFAULT_CMAX_FACTOR,
                 random_state=None, threads=1, max_nodes=None, use_kernel=True):
        self.r = r
        self.w = w
        self.theta = theta
        self.walkers = walkers
        self.c_max_factor = c_max_factor
        self.random_state = random_state
        self.threads = threads
        self.max_nodes = max_nodes
        self.use_kernel = use_kernel

    def _seed(self) -> int:
        if self.random_state is None:
            return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
        return int(self.random_state) & ((1 << 64) - 1)

    def fit(self, group, supporting_set=None):
        r = check_positive_int(self.r, "r")
        check_ratio(self.w)
        check_positive_int(self.walkers, "walkers")
        backend = as_backend(group)
        self.seed_ = self._seed()
        if supporting_set is None:
            if isinstance(backend, AbelianGroupBackend):
                supporting_set, _ = random_generating_set(backend.spec, r, SplitMix64(derive_seed(self.seed_, 1 << 40)))
            else:
                supporting_set = class_group_supporting_set(backend, r)
        elif not isinstance(supporting_set, SupportingSet):
            supporting_set = SupportingSet(tuple(supporting_set))
        if len(supporting_set) != r:
            raise ValueError(f"supporting set has {len(supporting_set)} elements but r={r}")
        if not backend.generates(list(supporting_set)):
            raise NonGeneratingSetError("supporting set does not generate the group")
        self.backend_ = backend
        self.supporting_set_ = supporting_set
        self.plan_ = build_partition_plan(r, self.w)
        if isinstance(self.theta, str) and self.theta == "auto":
            self.params_ = WalkParams.auto(backend.order, c_max_factor=self.c_max_factor)
        else:
            self.params_ = WalkParams.from_theta(check_theta(self.theta), c_max_factor=self.c_max_factor)
        self.n_solved_ = 0
        return self

    def solve(self, x0, x1, seed=None) -> SolveReport:
        check_is_fitted(self, "backend_")
        if seed is None:
            seed = derive_seed(self.seed_, self.n_solved_)
        self.n_solved_ += 1
        return solve(x0, x1, self.walkers, self.plan_, self.params_, self.supporting_set_, self.backend_,
                     seed, max_nodes=self.max_nodes, threads=self.threads, use_kernel=self.use_kernel)

    def predict(self, pairs):
        """Solutions g for each (x0, x1) pair."""
        return [self.solve(x0, x1).solution for x0, x1 in pairs]


def theta_of(params: WalkParams) -> Fraction:
    return Fraction(1, params.modulus)
