import csv
import io
import logging
import math
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from walkforge.class_group import is_fundamental
from walkforge.experiment import (BatchStats, ExperimentConfig, RunRecord, export_table, group_classes,
                                  run_batch, sample_fundamental_discriminant, sample_group_of_order,
                                  sample_random_group, sigma_ratio)
from walkforge.rng import SplitMix64
from walkforge.theory import expected_L_pi
from walkforge.walk_engine import geometric_probabilities

log = logging.getLogger(__name__)


def fake_stats(mean_L, m, r, w, k=1):
    cfg = ExperimentConfig(m=m, r=r, w=w, k=k, seed=0)
    return BatchStats(cfg, k, mean_L, 0.0, 0.0, 0.0, 0.0, 0, 0)


def test_group_classes_order_12():
    assert sorted(g.invariant_factors for g in group_classes(12, 2)) == [(6, 2), (12,)]
    assert [g.invariant_factors for g in group_classes(12, 1)] == [(12,)]
    assert len(group_classes(2**4 * 3**2, 4)) == 5 * 2


def test_sample_order_12_is_uniform_over_classes():
    rng = SplitMix64(1)
    counts = Counter(sample_group_of_order(12, 3, rng).invariant_factors for _ in range(4000))
    assert set(counts) == {(12,), (6, 2)}
    assert abs(counts[(12,)] / 4000 - 0.5) < 4 * math.sqrt(0.25 / 4000)


def test_prime_order_and_rank_one_are_cyclic():
    rng = SplitMix64(2)
    assert sample_group_of_order(1009, 8, rng).invariant_factors == (1009,)
    for _ in range(50):
        spec = sample_random_group(20, 1, rng)
        assert spec.rank == 1


@given(st.integers(4, 40), st.integers(1, 16), st.integers(0, 2**64 - 1))
def test_sampled_group_in_range(m, r, seed):
    spec = sample_random_group(m, r, SplitMix64(seed))
    assert 2 ** (m - 1) < spec.order <= 2**m
    assert spec.rank <= r


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 24), st.integers(0, 2**64 - 1))
def test_fundamental_discriminant_in_range(m, seed):
    d = sample_fundamental_discriminant(m, SplitMix64(seed))
    assert is_fundamental(d) and 2 ** (m - 1) < -d <= 2**m


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(m=2, r=4, w=1, k=1, seed=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m=16, r=4, w=2, k=1, seed=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m=16, r=4, w=1, k=1, seed=0, backend="gpu")
    cfg = ExperimentConfig(m=28, r=4, w="1/2", k=1, seed=0)
    assert cfg.w == Fraction(1, 2) and not cfg.smoke
    assert cfg.params_for(2**28).modulus == 128
    assert ExperimentConfig(m=16, r=4, w=1, k=1, seed=0).smoke


def test_smoke_run():
    stats = run_batch(ExperimentConfig(m=16, r=8, w="1/2", k=100, seed=3))
    assert stats.k + stats.failed == 100 and stats.failed == 0
    assert stats.mean_L > 0 and stats.stdev_L > 0 and stats.sigma > 0
    assert stats.ci99_7 == pytest.approx(3 * stats.stdev_L / 10)
    assert all(2**15 < rec.n <= 2**16 for rec in stats.runs)
    assert stats.to_dict()["smoke"] is True


def test_sigma_examples():
    p = geometric_probabilities(16, 1)
    n = 2**28
    exact = fake_stats(expected_L_pi(n, Fraction(1, 128), p), 28, 16, 1)
    assert sigma_ratio(exact, n=n) == pytest.approx(1.0)
    assert sigma_ratio(fake_stats(1.8357, 56, 16, 1), n=2**56) == pytest.approx(1.0027, abs=5e-4)
    assert sigma_ratio(fake_stats(2.8547, 28, 3, 1), n=2**28) == pytest.approx(1.315, abs=0.01)


def test_sigma_per_run_average():
    cfg = ExperimentConfig(m=20, r=4, w=1, k=2, seed=0)
    p = geometric_probabilities(4, 1)
    runs = [RunRecord(n, 2 * expected_L_pi(n, cfg.params_for(n).theta, p), 0, 1, 0, 0)
            for n in (2**19 + 1, 2**20)]
    stats = BatchStats(cfg, 2, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, runs)
    assert sigma_ratio(stats) == pytest.approx(2.0)


def test_export_one_batch():
    text = export_table([fake_stats(1.9, 28, 16, 1)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["w", "r", "m", "k", "mean_L", "stdev_L", "ci", "sigma", "duplicate"]
    assert len(rows) == 2 and rows[1][:3] == ["1", "16", "28"] and rows[1][-1] == "0"


def test_export_duplicates_flagged():
    a, b, c = fake_stats(1.9, 28, 16, 1), fake_stats(1.8, 28, 16, 1), fake_stats(2.4, 28, 6, "1/2")
    rows = list(csv.DictReader(io.StringIO(export_table([a, b, c]))))
    assert [r["duplicate"] for r in rows] == ["1", "1", "0"]
    with pytest.raises(ValueError):
        export_table([])


def test_export_full_grid_row_count():
    batches = [fake_stats(2.0, 28, r, w) for w in ("1", "1/2", "1/4") for r in range(3, 17)]
    assert len(list(csv.reader(io.StringIO(export_table(batches))))) == 43


def test_batch_reproducible_bytes():
    cfg = ExperimentConfig(m=18, r=5, w="1/4", k=40, seed=11)
    assert export_table([run_batch(cfg)]) == export_table([run_batch(cfg)])
    assert export_table([run_batch(cfg, threads=1)]) == export_table([run_batch(cfg)])


def test_ci_calibration():
    """The pooled mean falls inside at least 28 of 30 sub-batch 3-sigma intervals."""
    subs = [run_batch(ExperimentConfig(m=18, r=16, w=1, k=200, seed=1000 + i)) for i in range(30)]
    pooled = sum(s.mean_L * s.k for s in subs) / sum(s.k for s in subs)
    inside = sum(abs(s.mean_L - pooled) <= s.ci99_7 for s in subs)
    assert inside >= 28


@pytest.mark.slow
def test_ordering_in_w_at_m28():
    stats = [run_batch(ExperimentConfig(m=28, r=6, w=w, k=1500, seed=5)) for w in ("1", "1/2", "1/4")]
    for lo, hi in zip(stats, stats[1:]):
        assert hi.mean_L - lo.mean_L > 3 * math.hypot(lo.ci99_7 / 3, hi.ci99_7 / 3)


@pytest.mark.slow
def test_uniform_r16_converges_to_formula():
    stats = run_batch(ExperimentConfig(m=28, r=16, w=1, k=2000, seed=8))
    n = 2**28
    target = expected_L_pi(n, Fraction(1, 128), geometric_probabilities(16, 1))
    assert abs(stats.mean_L - target) <= 3 * stats.ci99_7


def test_classgroup_batch_reported():
    cl = run_batch(ExperimentConfig(m=18, r=6, w="1/2", k=30, seed=4, backend="classgroup"))
    ab = run_batch(ExperimentConfig(m=10, r=6, w="1/2", k=200, seed=4))
    assert cl.k + cl.failed == 30
    log.info("class-group mean L %.4f vs abstract %.4f (reported only)", cl.mean_L, ab.mean_L)
