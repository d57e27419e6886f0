import itertools

import numpy as np
import pytest

from nbmlc.codes import CodeCandidate, TannerGraph, sample_graph
from nbmlc.decoder import (DecoderConfig, DecoderError, decode, decode_batch, decode_hard_success,
                           permute, wht)
from nbmlc.galois import field

from oracles import binary_syndrome_spa, brute_force_posteriors, random_tree_graph


# ---------------------------------------------------------------- WHT

def test_wht_two_point():
    np.testing.assert_allclose(wht([0.3, 0.7]), [1.0, -0.4])


def test_wht_delta_is_all_ones():
    np.testing.assert_array_equal(wht([1, 0, 0, 0]), np.ones(4))


@pytest.mark.parametrize("a", range(1, 7))
def test_wht_involution(a):
    v = np.random.default_rng(a).normal(size=(50, 1 << a))
    np.testing.assert_allclose(wht(wht(v)), (1 << a) * v, atol=1e-12)


def test_wht_matches_hadamard_matrix():
    size = 16
    hmat = np.array([[(-1) ** bin(i & j).count("1") for j in range(size)] for i in range(size)])
    v = np.random.default_rng(0).random(size)
    np.testing.assert_allclose(wht(v), hmat @ v, atol=1e-12)


def test_wht_rejects_bad_length():
    with pytest.raises(DecoderError):
        wht(np.ones(6))


# ---------------------------------------------------------------- permutation

@pytest.mark.parametrize("a", range(1, 9))
def test_permutation_round_trip(a):
    gf = field(a)
    v = np.random.default_rng(a).random(gf.size)
    for w in range(1, gf.size):
        back = permute(permute(v, w, a), gf.inv(w), a)
        np.testing.assert_array_equal(back, v)
    w = 3 % gf.size or 1
    pv = permute(v, w, a)
    for x in range(gf.size):
        assert pv[gf.mul(w, x)] == v[x]


# ---------------------------------------------------------------- decoding

def test_noiseless_priors_exit_at_iteration_zero():
    g = sample_graph(CodeCandidate({3: 1.0}, 0.5), 3, 100, seed=1)
    x = np.random.default_rng(1).integers(0, 8, 100)
    priors = np.eye(8)[x]
    out = decode(g, g.syndrome(x), priors)
    assert out.iterations_used == 0 and out.syndrome_satisfied
    np.testing.assert_array_equal(out.estimate, x)
    assert decode_hard_success(out, x)


@pytest.mark.parametrize("a", range(1, 4))
def test_degree_two_check_closed_form(a):
    gf = field(a)
    q = gf.size
    rng = np.random.default_rng(a)
    cfg = DecoderConfig(max_iterations=1, early_exit_on_syndrome=False, eps_min=1e-15)
    for w0, w1 in itertools.product(range(1, q), repeat=2):
        g = TannerGraph(a, 2, 1, [0, 1], [0, 0], [w0, w1])
        p0 = rng.random(q) + 0.05
        p0 /= p0.sum()
        priors = np.vstack([p0, np.full(q, 1 / q)])
        for s in range(q):
            out = decode(g, [s], priors, cfg)
            expected = np.array([p0[gf.mul(gf.inv(w0), gf.add(s, gf.mul(w1, x)))] for x in range(q)])
            np.testing.assert_allclose(out.beliefs[1], expected / expected.sum(), atol=1e-12)


def test_tree_exactness():
    rng = np.random.default_rng(2024)
    a = 2
    for _ in range(20):
        n = int(rng.integers(3, 9))
        g = random_tree_graph(rng, n, a)
        priors = rng.dirichlet(np.ones(4), size=n)
        x = rng.integers(0, 4, n)
        s = g.syndrome(x)
        # the message floor leaks ~1e-12 x prior-ratio mass onto impossible symbols; lower it here
        cfg = DecoderConfig(max_iterations=2 * (n + g.m), early_exit_on_syndrome=False, eps_min=1e-16)
        out = decode(g, s, priors, cfg)
        exact = brute_force_posteriors(g, s, priors)
        np.testing.assert_allclose(out.beliefs, exact, atol=1e-9)


def test_binary_specialization_matches_oracle():
    rng = np.random.default_rng(77)
    for trial in range(100):
        n = int(rng.integers(8, 65))
        g = sample_graph(CodeCandidate({3: 1.0}, 0.5), 1, n, seed=trial)
        x = rng.integers(0, 2, n)
        p = rng.uniform(0.02, 0.12)
        flips = rng.random(n) < p
        y = x ^ flips
        p1 = np.where(y == 1, 1 - p, p)
        s = g.syndrome(x)
        ours = decode(g, s, np.stack([1 - p1, p1], axis=1), DecoderConfig(max_iterations=30))
        ref = binary_syndrome_spa(g.dense(), s, p1, 30)
        np.testing.assert_array_equal(ours.estimate, ref)


def test_zero_syndrome_fixed_point():
    g = sample_graph(CodeCandidate({2: 0.5, 3: 0.5}, 0.5), 4, 200, seed=3)
    priors = np.full((200, 16), 0.5 / 15)
    priors[:, 0] = 0.5
    out = decode(g, np.zeros(g.m, dtype=int), priors)
    assert not out.estimate.any() and out.syndrome_satisfied


def test_beliefs_are_distributions():
    g = sample_graph(CodeCandidate({3: 1.0}, 0.5), 3, 120, seed=5)
    rng = np.random.default_rng(5)
    priors = rng.dirichlet(np.ones(8), size=120)
    out = decode(g, rng.integers(0, 8, g.m), priors, DecoderConfig(max_iterations=5))
    np.testing.assert_allclose(out.beliefs.sum(axis=1), 1, atol=1e-9)
    assert np.all(out.beliefs >= 0)


def test_determinism_and_batch_independence():
    g = sample_graph(CodeCandidate({3: 1.0}, 0.6), 2, 300, seed=9)
    rng = np.random.default_rng(9)
    x = rng.integers(0, 4, (6, 300))
    noisy = np.where(rng.random((6, 300)) < 0.1, rng.integers(0, 4, (6, 300)), x)
    priors = np.full((6, 300, 4), 0.05)
    np.put_along_axis(priors, noisy[..., None], 0.85, axis=-1)
    s = g.syndrome(x)
    b1 = decode_batch(g, s, priors)
    b2 = decode_batch(g, s, priors)
    np.testing.assert_array_equal(b1.estimates, b2.estimates)
    np.testing.assert_array_equal(b1.iterations_used, b2.iterations_used)
    for f in range(6):
        single = decode(g, s[f], priors[f])
        np.testing.assert_array_equal(single.estimate, b1.estimates[f])
        assert single.iterations_used == b1.iterations_used[f]


def test_undetected_error_counts_as_failure():
    truth = np.array([1, 2, 3])
    assert decode_hard_success(np.array([1, 2, 3]), truth)
    assert not decode_hard_success(np.array([1, 2, 0]), truth)
    assert decode_hard_success(np.zeros(4, int), np.zeros(4, int))


def test_dimension_errors():
    g = sample_graph(CodeCandidate({3: 1.0}, 0.5), 2, 40, seed=1)
    with pytest.raises(DecoderError):
        decode(g, np.zeros(g.m + 1, int), np.full((40, 4), 0.25))
    with pytest.raises(DecoderError):
        decode(g, np.zeros(g.m, int), np.full((40, 8), 0.125))
    with pytest.raises(DecoderError):
        DecoderConfig(max_iterations=-1)


def test_thread_count_does_not_change_outcome():
    g = sample_graph(CodeCandidate({3: 1.0}, 0.6), 2, 300, seed=9)
    rng = np.random.default_rng(10)
    x = rng.integers(0, 4, (7, 300))
    noisy = np.where(rng.random((7, 300)) < 0.12, rng.integers(0, 4, (7, 300)), x)
    priors = np.full((7, 300, 4), 0.05)
    np.put_along_axis(priors, noisy[..., None], 0.85, axis=-1)
    s = g.syndrome(x)
    one = decode_batch(g, s, priors)
    three = decode_batch(g, s, priors, threads=3)
    np.testing.assert_array_equal(one.estimates, three.estimates)
    np.testing.assert_array_equal(one.iterations_used, three.iterations_used)
    assert np.all(three.elapsed_seconds > 0)
