import csv
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from conftest import DATA
from walkforge.group_core import AbelianGroupBackend, element, make_group
from walkforge.rng import SplitMix64
from walkforge.walk_engine import (Abandoned, DistinguishedTriple, Stepper, WalkParams, auto_modulus,
                                   build_partition_plan, distinguisher_modulus, fold64,
                                   geometric_probabilities, hash64to32, is_distinguished, node_hash,
                                   partition_index, walk)


def test_hash_golden_vectors():
    with open(DATA / "hash64to32_golden.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["input_hex"] == "0" * 16 and rows[1]["input_hex"] == "0" * 15 + "1"
    for row in rows:
        assert hash64to32(int(row["input_hex"], 16)) == int(row["output_hex"], 16)


def test_node_hash_golden_z6z2():
    b = AbelianGroupBackend(make_group([6, 2]))
    with open(DATA / "node_hash_z6z2_golden.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    for row in rows:
        z = element(b.spec, (int(row["a"]), int(row["b"])))
        assert node_hash(z, b) == int(row["output_hex"], 16)


def test_hash_avalanche():
    rng = random.Random(11)
    flips = np.zeros(32)
    trials = 100_000
    for _ in range(trials):
        k = rng.getrandbits(64)
        diff = hash64to32(k) ^ hash64to32(k ^ (1 << rng.randrange(64)))
        for j in range(32):
            flips[j] += (diff >> j) & 1
    freq = flips / trials
    assert freq.min() >= 0.35 and freq.max() <= 0.65


def test_fold64_multiblock():
    assert fold64(b"") == 0
    assert fold64(b"\x01" + b"\x00" * 8) != fold64(b"\x01")
    assert fold64(bytes(16)) == 0


def test_equal_elements_equal_hashes():
    b = AbelianGroupBackend(make_group([360, 12]))
    assert node_hash(element(b.spec, (5, 7)), b) == node_hash(element(b.spec, (365, 19)), b)


def test_node_hash_bit_bias_z2_20():
    b = AbelianGroupBackend(make_group([2**20]))
    n = 2**20
    ones = np.zeros(32)
    for x in range(n):
        h = node_hash(element(b.spec, (x,)), b)
        for j in range(32):
            ones[j] += (h >> j) & 1
    sd = math.sqrt(n) / 2
    assert np.all(np.abs(ones - n / 2) <= 4 * sd)


@pytest.mark.parametrize("r, w, probs", [
    (4, "1/2", [Fraction(8, 15), Fraction(4, 15), Fraction(2, 15), Fraction(1, 15)]),
    (3, 1, [Fraction(1, 3)] * 3),
])
def test_geometric_probabilities(r, w, probs):
    assert list(build_partition_plan(r, w).probabilities) == probs


def test_p1_r9_w_third():
    assert geometric_probabilities(9, "1/3")[0] == Fraction(6561, 9841)


@pytest.mark.parametrize("r, w", [(0, 1), (3, 0), (3, "3/2"), (3, "-1/2")])
def test_plan_errors(r, w):
    with pytest.raises(ValueError):
        build_partition_plan(r, w)


@given(st.integers(1, 16), st.sampled_from(["1", "3/4", "1/2", "1/3", "1/4", "2/5"]))
def test_plan_exactness(r, w):
    plan = build_partition_plan(r, w)
    w = Fraction(w)
    assert sum(plan.probabilities) == 1
    for p, q in zip(plan.probabilities, plan.probabilities[1:]):
        assert q / p == w
    assert plan.thresholds[-1] == 2**32
    assert all(a < b for a, b in zip(plan.thresholds, plan.thresholds[1:]))
    acc = Fraction(0)
    for p, t in zip(plan.probabilities[:-1], plan.thresholds):
        acc += p
        assert t == round(acc * 2**32)


def test_plan_rejects_empty_bucket():
    # 7^-15 of 2^32 rounds to nothing
    with pytest.raises(ValueError, match="empty"):
        build_partition_plan(16, "1/7")


def test_plan_r1_always_first():
    b = AbelianGroupBackend(make_group([1000]))
    plan = build_partition_plan(1, 1)
    assert {partition_index(element(b.spec, (x,)), plan, b) for x in range(1000)} == {1}


@pytest.fixture(scope="module")
def classified_sample():
    """(partition slot, distinguished) for 10^6 random elements of Z_{2^40}."""
    b = AbelianGroupBackend(make_group([2**40]))
    plan = build_partition_plan(4, "1/2")
    params = WalkParams.from_theta("2^-7")
    stepper = Stepper(plan, params, b)
    rng = SplitMix64(5)
    slots = np.zeros(4, dtype=np.int64)
    dist = 0
    for _ in range(10**6):
        s, d = stepper.classify(b.random_element(rng))
        slots[s] += 1
        dist += d
    return plan, slots, dist


def test_partition_frequencies(classified_sample):
    plan, slots, _ = classified_sample
    n = slots.sum()
    p = np.array(plan.as_floats())
    sd = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(slots - n * p) <= 4 * sd)
    assert chisquare(slots, n * p).pvalue > 1e-3


def test_distinguished_fraction(classified_sample):
    _, _, dist = classified_sample
    n, theta = 10**6, 2**-7
    assert abs(dist - n * theta) <= 4 * math.sqrt(n * theta * (1 - theta))


def test_stepper_agrees_with_public_functions():
    b = AbelianGroupBackend(make_group([997]))
    plan = build_partition_plan(5, "1/3")
    params = WalkParams.from_theta("1/5")
    stepper = Stepper(plan, params, b)
    for x in range(997):
        z = element(b.spec, (x,))
        assert stepper.classify(z) == (partition_index(z, plan, b) - 1, is_distinguished(z, params, b))


def test_distinguisher_theta_one_and_determinism():
    b = AbelianGroupBackend(make_group([50]))
    params = WalkParams.from_theta(1)
    assert params.modulus == 1
    assert all(is_distinguished(element(b.spec, (x,)), params, b) for x in range(50))
    p = WalkParams.from_theta("1/8")
    z = element(b.spec, (17,))
    assert is_distinguished(z, p, b) == is_distinguished(z, p, b)


def test_walk_params_defaults():
    p = WalkParams.from_theta("2^-20")
    assert p.c_max == 30 * 2**20 and p.modulus == 2**20
    assert distinguisher_modulus("2/3") == 2
    assert distinguisher_modulus("2/5") == 3
    assert auto_modulus(2**28) == 128
    assert auto_modulus(1) == 1
    assert WalkParams.from_theta("1/3", c_max_factor=10).c_max == 30


@given(st.integers(1, 10**12))
def test_auto_modulus_nearest(n):
    d = auto_modulus(n)
    assert abs(d - n ** 0.25) <= 0.5 + 1e-9


def _walk_setup(seed, order=10007, r=5, w="1/2", theta="1/16"):
    b = AbelianGroupBackend(make_group([order]))
    rng = SplitMix64(seed)
    H = [b.random_element(rng) for _ in range(r)]
    return b, build_partition_plan(r, w), WalkParams.from_theta(theta), H, rng


def test_walk_theta_one_returns_start():
    b, plan, _, H, rng = _walk_setup(1)
    start, a0 = b.random_element(rng), b.random_element(rng)
    res = walk(start, a0, 1, plan, WalkParams.from_theta(1), H, b)
    assert res == DistinguishedTriple(start, a0, 1, 0)


def test_walk_cmax_zero_abandons():
    b, plan, _, H, _ = _walk_setup(2)
    params = WalkParams.from_theta("1/64", c_max=0)
    start = next(element(b.spec, (x,)) for x in range(b.order)
                 if not is_distinguished(element(b.spec, (x,)), params, b))
    res = walk(start, b.identity(), 0, plan, params, H, b)
    assert isinstance(res, Abandoned) and not res


def test_walk_deterministic():
    b, plan, params, H, rng = _walk_setup(3)
    start = b.random_element(rng)
    assert walk(start, start, 0, plan, params, H, b) == walk(start, start, 0, plan, params, H, b)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 1))
def test_walk_accumulator_soundness(seed, side):
    b, plan, params, H, rng = _walk_setup(seed, theta="1/32")
    xs = b.random_element(rng)
    h = b.random_element(rng)
    res = walk(b.act(h, xs), h, side, plan, params, H, b)
    if res:
        assert b.act(res.a, xs) == res.z
        assert res.s == side and res.hops <= params.c_max
        assert is_distinguished(res.z, params, b)
    else:
        assert res.hops == params.c_max + 1


def test_walk_rejects_wrong_supporting_set_size():
    b, plan, params, H, rng = _walk_setup(4)
    with pytest.raises(ValueError):
        walk(b.identity(), b.identity(), 0, plan, params, H[:-1], b)
