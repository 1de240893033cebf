"""Batch experiments measuring L = alpha / sqrt(n) on random groups.

Each run samples a fresh group of order n in (2^{m-1}, 2^m], a generating
supporting set, and an instance x1 = g * x0, then solves it.  Runs are seeded
independently from the master seed, so a batch is a pure function of its
config no matter how the runs are scheduled.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sympy import factorint
from sympy.utilities.iterables import partitions

from ._validation import check_positive_int, check_ratio, check_theta
from .class_group import ClassGroupBackend, ClassGroupCtx, is_fundamental
from .collision_search import (SolveBudgetExceeded, class_group_supporting_set, random_generating_set,
                               solve)
from .group_core import GroupSpec, make_group, random_element
from .rng import SplitMix64, spawn_seeds
from .theory import expected_L_pi
from .walk_engine import DEFAULT_CMAX_FACTOR, WalkParams, build_partition_plan

log = logging.getLogger(__name__)

BACKENDS = ("abstract", "classgroup")


def group_classes(n: int, max_rank: int) -> list[GroupSpec]:
    """All abelian groups of order n and rank <= max_rank, in invariant-factor form."""
    per_prime = []
    for p, e in sorted(factorint(n).items()):
        options = []
        for part in partitions(e, m=max_rank):
            parts = sorted((k for k, mult in part.items() for _ in range(mult)), reverse=True)
            options.append(parts)
        options.sort(reverse=True)
        per_prime.append((p, options))
    out = [[]]
    for p, options in per_prime:
        out = [prev + [(p, o)] for prev in out for o in options]
    return [_assemble(choice) for choice in out]


def _assemble(choice) -> GroupSpec:
    rank = max((len(parts) for _, parts in choice), default=0)
    if rank == 0:
        return GroupSpec.trivial()
    factors = [1] * rank
    for p, parts in choice:
        for i, k in enumerate(parts):
            factors[i] *= p ** k
    return make_group(factors)


def sample_random_group(m: int, r: int, rng: SplitMix64) -> GroupSpec:
    """Uniform n in (2^{m-1}, 2^m], then a uniform isomorphism class of rank <= r.

    The class is drawn prime by prime: a class of order n is a choice of one
    partition (with at most r parts) of each prime exponent, so independent
    uniform choices give a uniform class.
    """
    m = check_positive_int(m, "m", minimum=2)
    r = check_positive_int(r, "r")
    n = (1 << (m - 1)) + 1 + rng.randbelow(1 << (m - 1))
    return sample_group_of_order(n, r, rng)


def sample_group_of_order(n: int, r: int, rng: SplitMix64) -> GroupSpec:
    choice = []
    for p, e in sorted(factorint(n).items()):
        options = [sorted((k for k, mult in part.items() for _ in range(mult)), reverse=True)
                   for part in partitions(e, m=r)]
        options.sort(reverse=True)
        choice.append((p, options[rng.randbelow(len(options))]))
    return _assemble(choice)


def sample_fundamental_discriminant(m: int, rng: SplitMix64, min_abs: int | None = None) -> int:
    """Uniform fundamental discriminant with |D| in (2^{m-1}, 2^m] by rejection."""
    lo = min_abs if min_abs is not None else (1 << (m - 1)) + 1
    hi = 1 << m
    while True:
        d = -(lo + rng.randbelow(hi - lo + 1))
        if d % 4 in (0, 1) and is_fundamental(d):
            return d


@dataclass(frozen=True)
class ExperimentConfig:
    m: int
    r: int
    w: Fraction
    k: int
    seed: int
    theta: Fraction | None = None  # None means n^{-1/4} per run
    c_max_factor: int = DEFAULT_CMAX_FACTOR
    backend: str = "abstract"
    max_nodes_factor: int = 1000

    def __post_init__(self):
        check_positive_int(self.m, "m", minimum=4)
        check_positive_int(self.r, "r")
        object.__setattr__(self, "w", check_ratio(self.w))
        check_positive_int(self.k, "k")
        if self.theta is not None:
            object.__setattr__(self, "theta", check_theta(self.theta))
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")

    @property
    def smoke(self) -> bool:
        """Below m = 28 looped walks distort L noticeably."""
        return self.m < 28

    def params_for(self, n: int) -> WalkParams:
        if self.theta is None:
            return WalkParams.auto(n, c_max_factor=self.c_max_factor)
        return WalkParams.from_theta(self.theta, c_max_factor=self.c_max_factor)

    def budget(self, n: int) -> int:
        return self.max_nodes_factor * (math.isqrt(n) + 1) + 100 * self.params_for(n).modulus


@dataclass
class RunRecord:
    n: int
    L: float
    alpha: int
    walks: int
    abandoned: int
    resamples: int


@dataclass
class BatchStats:
    config: ExperimentConfig
    k: int
    mean_L: float
    stdev_L: float
    ci99_7: float
    abandoned_fraction: float
    sigma: float
    failed: int
    resamples: int
    runs: list[RunRecord] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "w": str(self.config.w), "r": self.config.r, "m": self.config.m, "k": self.k,
            "mean_L": self.mean_L, "stdev_L": self.stdev_L, "ci99_7": self.ci99_7,
            "abandoned_fraction": self.abandoned_fraction, "sigma": self.sigma,
            "failed": self.failed, "resamples": self.resamples, "smoke": self.config.smoke,
        }


def _summarize(config: ExperimentConfig, runs: list[RunRecord], failed: int) -> BatchStats:
    if not runs:
        raise RuntimeError("every run in the batch failed")
    L = np.array([rec.L for rec in runs])
    k = len(runs)
    stdev = float(L.std(ddof=1)) if k > 1 else 0.0
    walks = sum(rec.walks for rec in runs)
    stats = BatchStats(
        config=config, k=k, mean_L=float(L.mean()), stdev_L=stdev, ci99_7=3 * stdev / math.sqrt(k),
        abandoned_fraction=sum(rec.abandoned for rec in runs) / walks if walks else 0.0,
        sigma=0.0, failed=failed, resamples=sum(rec.resamples for rec in runs), runs=runs,
    )
    stats.sigma = sigma_ratio(stats)
    return stats


def sigma_ratio(stats: BatchStats, n: int | None = None, theta=None, p=None) -> float:
    """Practice-to-theory ratio E(L) / E(L_pi).

    With ``n`` given the batch mean is compared with the formula at that single
    order; otherwise each run is compared at its own order and the ratios are
    averaged.
    """
    cfg = stats.config
    if p is None:
        p = build_partition_plan(cfg.r, cfg.w).probabilities
    if n is not None:
        th = theta if theta is not None else cfg.params_for(n).theta
        return stats.mean_L / expected_L_pi(n, th, p)
    ratios = [rec.L / expected_L_pi(rec.n, theta if theta is not None else cfg.params_for(rec.n).theta, p)
              for rec in stats.runs]
    return float(np.mean(ratios))


def _setup_abstract(config: ExperimentConfig, seed: int):
    rng = SplitMix64(seed)
    spec = sample_random_group(config.m, config.r, rng)
    if spec.order < config.r:
        raise ValueError(f"group of order {spec.order} is too small for r={config.r}")
    H, resamples = random_generating_set(spec, config.r, rng)
    x0 = random_element(spec, rng)
    g = random_element(spec, rng)
    x1 = type(x0)(tuple((a + b) % q for a, b, q in zip(g.coords, x0.coords, spec.invariant_factors)))
    return spec, H, resamples, x0, x1, rng.next_u64()


def _run_abstract(config: ExperimentConfig, seeds: list[int]) -> tuple[list[RunRecord], int]:
    from . import _kernels

    setups = [_setup_abstract(config, s) for s in seeds]
    k = len(setups)
    plan = build_partition_plan(config.r, config.w)
    S = max(spec.rank for spec, *_ in setups)
    r = config.r
    moduli = np.ones((k, S), dtype=np.int64)
    widths = np.ones((k, S), dtype=np.int64)
    ranks = np.zeros(k, dtype=np.int64)
    gens = np.zeros((k, r, S), dtype=np.int64)
    moduli_d = np.zeros(k, dtype=np.int64)
    cmaxes = np.zeros(k, dtype=np.int64)
    x0s = np.zeros((k, S), dtype=np.int64)
    x1s = np.zeros((k, S), dtype=np.int64)
    run_seeds = np.zeros(k, dtype=np.uint64)
    budgets = np.zeros(k, dtype=np.int64)
    for j, (spec, H, _, x0, x1, solve_seed) in enumerate(setups):
        s = spec.rank
        ranks[j] = s
        moduli[j, :s] = spec.invariant_factors
        widths[j, :s] = spec.widths
        for i, h in enumerate(H):
            gens[j, i, :s] = h.coords
        params = config.params_for(spec.order)
        moduli_d[j] = params.modulus
        cmaxes[j] = params.c_max
        x0s[j, :s] = x0.coords
        x1s[j, :s] = x1.coords
        run_seeds[j] = solve_seed
        budgets[j] = config.budget(spec.order)
    out_g = np.zeros((k, S), dtype=np.int64)
    stats = np.zeros((k, 6), dtype=np.int64)
    status = np.zeros(k, dtype=np.int64)
    thresholds = np.array(plan.thresholds, dtype=np.uint64)
    _kernels.solve_batch_kernel(moduli, widths, ranks, gens, thresholds, moduli_d, cmaxes, x0s, x1s, 1,
                                run_seeds, budgets, out_g, stats, status)
    runs, failed = [], 0
    for j, (spec, _, resamples, x0, x1, _) in enumerate(setups):
        if status[j] != _kernels.STATUS_SOLVED:
            failed += 1
            continue
        s = spec.rank
        g = out_g[j, :s]
        if any((int(a) + b) % q != c for a, b, q, c in zip(g, x0.coords, spec.invariant_factors, x1.coords)):
            raise AssertionError(f"run {j} returned an unverified solution")
        alpha = int(stats[j, 0])
        runs.append(RunRecord(spec.order, alpha / math.sqrt(spec.order), alpha, int(stats[j, 1]),
                              int(stats[j, 5]), resamples))
    return runs, failed


def _run_classgroup(config: ExperimentConfig, seeds: list[int]) -> tuple[list[RunRecord], int]:
    plan = build_partition_plan(config.r, config.w)
    runs, failed = [], 0
    for seed in seeds:
        rng = SplitMix64(seed)
        while True:
            disc = sample_fundamental_discriminant(config.m, rng)
            backend = ClassGroupBackend(ClassGroupCtx(disc))
            if backend.order > config.r:
                break
        H = class_group_supporting_set(backend, config.r)
        x0 = backend.random_element(rng)
        x1 = backend.act(backend.random_element(rng), x0)
        n = backend.order
        try:
            rep = solve(x0, x1, 1, plan, config.params_for(n), H, backend, rng.next_u64(),
                        max_nodes=config.budget(n))
        except SolveBudgetExceeded:
            failed += 1
            continue
        runs.append(RunRecord(n, rep.L, rep.alpha, rep.walks, rep.abandoned, 0))
    return runs, failed


def run_batch(config: ExperimentConfig, threads: int | None = None) -> BatchStats:
    """k independent solves; failed runs are excluded from the statistics and counted."""
    if threads is not None:
        import numba

        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    seeds = spawn_seeds(config.seed, config.k)
    if config.backend == "abstract":
        runs, failed = _run_abstract(config, seeds)
    else:
        runs, failed = _run_classgroup(config, seeds)
    if failed:
        log.warning("%d of %d runs hit the node budget and were excluded", failed, config.k)
    return _summarize(config, runs, failed)


TABLE_COLUMNS = ("w", "r", "m", "k", "mean_L", "stdev_L", "ci", "sigma", "duplicate")


def export_table(batches: list[BatchStats]) -> str:
    """CSV with one row per batch; repeated (w, r, m) cells are kept and flagged."""
    if not batches:
        raise ValueError("need at least one batch")
    counts: dict = {}
    for b in batches:
        key = (b.config.w, b.config.r, b.config.m)
        counts[key] = counts.get(key, 0) + 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for b in batches:
        c = b.config
        writer.writerow([str(c.w), c.r, c.m, b.k, repr(b.mean_L), repr(b.stdev_L), repr(b.ci99_7),
                         repr(b.sigma), int(counts[(c.w, c.r, c.m)] > 1)])
    return buf.getvalue()
