import itertools

import numpy as np
import pytest

from nbmlc.channel import SurrogateParams, build_surrogate, noiseless, sample_pairs
from nbmlc.codes import CodeCandidate, sample_graph
from nbmlc.mlc import (AccountingError, LayerPlan, PlanError, key_rate, layer_prior, layer_priors, merge,
                       reconcile, split)


def test_plan_shapes():
    assert LayerPlan(6, 3).alphas == (3, 3)
    assert LayerPlan(5, 2).alphas == (2, 2, 1)
    assert LayerPlan(6, 6).alphas == (6,)
    assert LayerPlan(3, 1).alphas == (1, 1, 1)
    p = LayerPlan(7, 3)
    assert (p.b, p.rem, p.alphas) == (2, 1, (3, 3, 1))
    with pytest.raises(PlanError):
        LayerPlan(4, 5)
    with pytest.raises(PlanError):
        LayerPlan(4, 0)


def test_split_examples():
    assert [int(v) for v in split(LayerPlan(6, 3), 0b101110)] == [5, 6]
    assert [int(v) for v in split(LayerPlan(6, 6), 37)] == [37]
    assert [int(v) for v in split(LayerPlan(3, 1), 6)] == [1, 1, 0]


def test_merge_examples():
    assert int(merge(LayerPlan(6, 3), [5, 6])) == 46
    plan = LayerPlan(5, 2)
    x = np.arange(32)
    np.testing.assert_array_equal(merge(plan, split(plan, x)), x)
    np.testing.assert_array_equal(merge(LayerPlan(4, 4), [np.arange(16)]), np.arange(16))


def test_split_merge_exhaustive():
    for q in range(1, 11):
        x = np.arange(1 << q)
        for a in range(1, q + 1):
            plan = LayerPlan(q, a)
            layers = split(plan, x)
            assert sum(plan.alphas) == q
            for al, layer in zip(plan.alphas, layers):
                assert layer.max() < (1 << al)
            np.testing.assert_array_equal(merge(plan, layers), x)


def test_merge_width_mismatch():
    with pytest.raises(PlanError):
        merge(LayerPlan(6, 3), [1])
    with pytest.raises(PlanError):
        merge(LayerPlan(6, 3), [9, 1])


def bayes_table(model, plan, layer, y, prev):
    """Enumerate the joint law and condition by hand."""
    out = np.zeros(1 << plan.alphas[layer])
    for x in range(model.size):
        parts = [int(v) for v in split(plan, x)]
        if parts[:layer] == list(prev):
            out[parts[layer]] += model.input_prior[x] * model.transition[x, y]
    return out / out.sum() if out.sum() > 0 else np.full(out.size, 1 / out.size)


def test_prior_noiseless_is_unit_mass():
    plan = LayerPlan(6, 3)
    p = layer_prior(noiseless(6), plan, 1, 0b101110, [])
    np.testing.assert_array_equal(p, np.eye(8)[5])


def test_prior_pure_background_uniform():
    m = build_surrogate(SurrogateParams(q=4, uniform_weight=1.0))
    p = layer_prior(m, LayerPlan(4, 2), 2, 7, [1])
    np.testing.assert_allclose(p, 0.25, atol=1e-12)


def test_prior_matches_bayes_q2():
    m = build_surrogate(SurrogateParams(q=2, binwidth_ps=100, jitter_ps=50, uniform_weight=0.1))
    plan = LayerPlan(2, 1)
    for y, x1 in itertools.product(range(4), range(2)):
        np.testing.assert_allclose(layer_prior(m, plan, 2, y, [x1]), bayes_table(m, plan, 1, y, [x1]), atol=1e-14)


@pytest.mark.parametrize("q,a", [(3, 1), (4, 2), (4, 3), (4, 1), (5, 2)])
def test_prior_matches_bayes_all_conditionings(q, a):
    rng = np.random.default_rng(q * 10 + a)
    t = rng.dirichlet(np.ones(1 << q), size=1 << q)
    prior = rng.dirichlet(np.ones(1 << q))
    from nbmlc.channel import ChannelModel
    m = ChannelModel(q, t, prior)
    plan = LayerPlan(q, a)
    for layer in range(plan.num_layers):
        prev_space = itertools.product(*[range(1 << al) for al in plan.alphas[:layer]])
        for prev in prev_space:
            ys = np.arange(1 << q)
            batch = layer_priors(m, plan, layer, ys, [np.full(ys.size, v) for v in prev])
            for y in ys:
                expected = bayes_table(m, plan, layer, y, prev)
                np.testing.assert_allclose(batch[y], expected, atol=1e-12)
            np.testing.assert_allclose(batch.sum(axis=-1), 1, atol=1e-9)
            # weighting each conditional by the mass of its event reproduces the joint
            for y in ys:
                joint = np.zeros(1 << plan.alphas[layer])
                for x in range(1 << q):
                    parts = [int(v) for v in split(plan, x)]
                    if parts[:layer] == list(prev):
                        joint[parts[layer]] += m.joint[x, y]
                np.testing.assert_allclose(batch[y] * joint.sum(), joint, atol=1e-14)


def test_prior_zero_mass_falls_back_to_uniform():
    plan = LayerPlan(4, 2)
    p = layer_prior(noiseless(4), plan, 2, 0b0110, [3])   # y's first layer is 1, not 3
    np.testing.assert_allclose(p, 0.25)


def test_prior_argument_checks():
    with pytest.raises(PlanError):
        layer_prior(noiseless(4), LayerPlan(4, 2), 2, 0, [])
    with pytest.raises(PlanError):
        layer_prior(noiseless(4), LayerPlan(5, 2), 1, 0, [])


def _codes(plan, n, rate, seed=0):
    return [sample_graph(CodeCandidate({3: 1.0}, rate), al, n, seed + i) for i, al in enumerate(plan.alphas)]


def test_reconcile_noiseless():
    plan = LayerPlan(5, 2)
    m = noiseless(5)
    x, y = sample_pairs(m, 200, seed=1)
    out, reports = reconcile(m, plan, _codes(plan, 200, 0.8), x, y)
    np.testing.assert_array_equal(out, x)
    assert [r.fer_estimate for r in reports] == [0, 0, 0]
    assert [r.alpha_bits for r in reports] == [2, 2, 1]


def test_reconcile_error_propagation_hook():
    plan = LayerPlan(4, 2)
    m = build_surrogate(SurrogateParams(q=4, binwidth_ps=300, jitter_ps=60, uniform_weight=0.05))
    x, y = sample_pairs(m, 300, seed=4)
    codes = _codes(plan, 300, 0.5)
    _, clean = reconcile(m, plan, codes, x, y)
    assert clean[0].success.all()
    _, forced = reconcile(m, plan, codes, x, y, force_fail=(1,))
    assert not forced[0].success.any()
    # layer 2 is now decoded against a wrong prefix; only its report may differ
    assert forced[1].frames == 1


def test_reconcile_width_mismatch():
    plan = LayerPlan(4, 2)
    m = noiseless(4)
    x, y = sample_pairs(m, 50, seed=1)
    with pytest.raises(PlanError):
        reconcile(m, plan, _codes(LayerPlan(4, 1), 50, 0.5), x, y)
    bad = [sample_graph(CodeCandidate({3: 1.0}, 0.5), 3, 50, 1), sample_graph(CodeCandidate({3: 1.0}, 0.5), 2, 50, 2)]
    with pytest.raises(PlanError):
        reconcile(m, plan, bad, x, y)


def test_single_layer_equals_plain_scheme():
    from nbmlc.decoder import decode_batch
    q = 4
    m = build_surrogate(SurrogateParams(q=q, binwidth_ps=200, jitter_ps=60, uniform_weight=0.05))
    plan = LayerPlan(q, q)
    g = sample_graph(CodeCandidate({3: 1.0}, 0.6), q, 400, 3)
    xs, ys = zip(*(sample_pairs(m, 400, seed=s) for s in range(5)))
    x, y = np.array(xs), np.array(ys)
    out, reports = reconcile(m, plan, [g], x, y)
    post = m.joint[:, y].transpose(1, 2, 0)
    plain = decode_batch(g, g.syndrome(x), post / post.sum(-1, keepdims=True))
    np.testing.assert_array_equal(out, plain.estimates)


def test_key_rate_examples():
    assert key_rate([(3, 600, 1.0), (3, 800, 1.0)], 2000) == 0
    assert key_rate([(6, 1000, 0.0)], 2000) == 3.0
    assert key_rate([(3, 600, 0.05), (3, 800, 0.10)], 2000) == pytest.approx(3.615, abs=1e-12)
    with pytest.raises(AccountingError):
        key_rate([(3, 2100, 0.0)], 2000)


def test_key_rate_single_layer_reduces_to_plain_formula():
    for q, m, e in [(6, 700, 0.05), (4, 1234, 0.5), (10, 1, 0.0)]:
        assert key_rate([(q, m, e)], 2000) == pytest.approx(q * (1 - e) * (2000 - m) / 2000, abs=1e-15)
