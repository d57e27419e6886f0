import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from nbmlc.channel import (ChannelError, ChannelFormatError, ChannelModel, SurrogateParams,
                           build_surrogate, conditional_entropy, export, load_empirical,
                           noiseless, sample_frames, sample_pairs)


def test_zero_jitter_is_identity():
    m = build_surrogate(SurrogateParams(q=3, jitter_ps=0, uniform_weight=0))
    np.testing.assert_array_equal(m.transition, np.eye(8))


def test_pure_background_is_uniform():
    m = build_surrogate(SurrogateParams(q=4, uniform_weight=1.0))
    np.testing.assert_allclose(m.transition, 1 / 16, atol=1e-15)


def test_small_surrogate_against_direct_formula():
    # q=2, sigma_bins = 0.5, eps = 0.1, written out cell by cell
    m = build_surrogate(SurrogateParams(q=2, binwidth_ps=100, jitter_ps=50, uniform_weight=0.1))
    expected = np.zeros((4, 4))
    for x in range(4):
        g = np.array([norm.cdf((y - x + 0.5) / 0.5) - norm.cdf((y - x - 0.5) / 0.5) for y in range(4)])
        expected[x] = 0.9 * g / g.sum() + 0.1 / 4
    np.testing.assert_allclose(m.transition, expected, atol=1e-12)
    np.testing.assert_allclose(m.transition.sum(axis=1), 1, atol=1e-12)
    assert np.all(m.transition.argmax(axis=1) == np.arange(4))


def test_bad_params():
    with pytest.raises(ChannelError):
        SurrogateParams(q=3, uniform_weight=1.5)
    with pytest.raises(ChannelError):
        SurrogateParams(q=3, binwidth_ps=0)
    with pytest.raises(ChannelError):
        SurrogateParams(q=3, jitter_ps=-1)


@settings(max_examples=60, deadline=None)
@given(q=st.integers(1, 7), bw=st.floats(1, 2000), jit=st.floats(0, 500), eps=st.floats(0, 1))
def test_surrogate_rows_stochastic(q, bw, jit, eps):
    m = build_surrogate(SurrogateParams(q=q, binwidth_ps=bw, jitter_ps=jit, uniform_weight=eps))
    assert np.all(m.transition >= 0)
    np.testing.assert_allclose(m.transition.sum(axis=1), 1, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(q=st.integers(1, 6), jit=st.floats(1, 300), eps=st.floats(0, 0.5),
       bw1=st.floats(10, 1000), factor=st.floats(1, 5))
def test_diagonal_mass_grows_with_binwidth(q, jit, eps, bw1, factor):
    lo = build_surrogate(SurrogateParams(q=q, binwidth_ps=bw1, jitter_ps=jit, uniform_weight=eps))
    hi = build_surrogate(SurrogateParams(q=q, binwidth_ps=bw1 * factor, jitter_ps=jit, uniform_weight=eps))
    assert np.all(np.diag(hi.transition) >= np.diag(lo.transition) - 1e-12)


def test_model_validation():
    with pytest.raises(ChannelError):
        ChannelModel(2, np.eye(3))
    bad = np.eye(4)
    bad[0, 0] = 0.5
    with pytest.raises(ChannelError):
        ChannelModel(2, bad)
    with pytest.raises(ChannelError):
        ChannelModel(2, np.eye(4), input_prior=[0.5, 0.5, 0.5, 0.5])


def test_identity_file_loads(tmp_path):
    p = tmp_path / "id.csv"
    p.write_text("# qkd-channel q=2\n" + "\n".join(",".join(str(float(v)) for v in r) for r in np.eye(4)) + "\n")
    m = load_empirical(p)
    assert m == noiseless(2)


def test_half_row_rejected(tmp_path):
    rows = np.eye(4)
    rows[2, 2] = 0.5
    p = tmp_path / "bad.csv"
    p.write_text("# qkd-channel q=2\n" + "\n".join(",".join(map(str, r)) for r in rows))
    with pytest.raises(ChannelFormatError):
        load_empirical(p)


@pytest.mark.parametrize("body,header", [
    ("1,0\n0,1\n", "# qkd-channel q=2"),          # wrong dimensions
    ("1,0\n-0.5,1.5\n", "# qkd-channel q=1"),     # negative entry
    ("1,0\n0,1\n", "q=1"),                        # missing header
    ("1,x\n0,1\n", "# qkd-channel q=1"),
])
def test_format_errors(tmp_path, body, header):
    p = tmp_path / "c.csv"
    p.write_text(header + "\n" + body)
    with pytest.raises(ChannelFormatError):
        load_empirical(p)


def test_near_stochastic_rows_renormalized(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# qkd-channel q=1\n0.9000004,0.1\n0.2,0.8\n")
    m = load_empirical(p)
    np.testing.assert_allclose(m.transition.sum(axis=1), 1, atol=1e-15)


def test_export_round_trip(tmp_path):
    m = build_surrogate(SurrogateParams(q=5, binwidth_ps=250, jitter_ps=90, uniform_weight=0.07))
    export(m, tmp_path / "s.csv")
    back = load_empirical(tmp_path / "s.csv")
    assert back.allclose(m, atol=1e-12)


def test_sampling_noiseless_and_deterministic():
    x, y = sample_pairs(noiseless(4), 500, seed=3)
    np.testing.assert_array_equal(x, y)
    m = build_surrogate(SurrogateParams(q=4))
    a1, b1 = sample_pairs(m, 300, seed=11)
    a2, b2 = sample_pairs(m, 300, seed=11)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)
    with pytest.raises(ChannelError):
        sample_pairs(m, 0, seed=1)


def test_pure_background_output_uniform():
    m = build_surrogate(SurrogateParams(q=3, uniform_weight=1.0))
    n = 100_000
    _, y = sample_pairs(m, n, seed=5)
    counts = np.bincount(y, minlength=8)
    p = 1 / 8
    se = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * se)


def test_empirical_rows_converge():
    m = build_surrogate(SurrogateParams(q=3, binwidth_ps=100, jitter_ps=80, uniform_weight=0.1))
    n = 200_000
    x, y = sample_pairs(m, n, seed=9)
    for xv in range(8):
        sel = y[x == xv]
        freq = np.bincount(sel, minlength=8) / sel.size
        se = np.sqrt(m.transition[xv] * (1 - m.transition[xv]) / sel.size)
        assert np.all(np.abs(freq - m.transition[xv]) <= 4 * se + 1e-12)


def test_conditional_entropy():
    assert conditional_entropy(noiseless(5)) == pytest.approx(0, abs=1e-12)
    assert conditional_entropy(build_surrogate(SurrogateParams(q=4, uniform_weight=1))) == pytest.approx(4)
    p = 0.11
    bsc = ChannelModel(1, [[1 - p, p], [p, 1 - p]])
    h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    assert conditional_entropy(bsc) == pytest.approx(h, abs=1e-12)
    assert h == pytest.approx(0.4999, abs=1e-4)
    # zero-jitter surrogate with eps=0.22 puts 0.11 on the off-diagonal
    sur = build_surrogate(SurrogateParams(q=1, jitter_ps=0, uniform_weight=0.22))
    assert conditional_entropy(sur) == pytest.approx(h, abs=1e-12)


def test_sample_frames_prefix_stable():
    m = build_surrogate(SurrogateParams(q=3))
    x5, y5 = sample_frames(m, 40, 5, seed=7)
    x3, y3 = sample_frames(m, 40, 3, seed=7)
    np.testing.assert_array_equal(x5[:3], x3)
    np.testing.assert_array_equal(y5[:3], y3)
    seq = np.random.SeedSequence(7)
    a, _ = sample_frames(m, 40, 2, seq)
    b, _ = sample_frames(m, 40, 2, seq)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, x5[:2])
