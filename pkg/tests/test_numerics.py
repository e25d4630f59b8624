import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipactc.numerics import (
    Rng,
    affine_rows,
    derive_seed,
    log_softmax,
    log_sum_exp,
    matmul,
    sigmoid,
    softmax,
    tanh,
)


def test_log_sum_exp_basics():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-12)
    assert log_sum_exp([-math.inf, 3.5]) == pytest.approx(3.5, abs=0)
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2.0), rel=1e-15)
    assert log_sum_exp([-math.inf, -math.inf]) == -math.inf


def test_log_sum_exp_no_overflow_at_1e300():
    x = math.log(1e300)
    assert np.isfinite(log_sum_exp([x, x, x]))


def test_log_sum_exp_empty_rejected():
    with pytest.raises(ValueError):
        log_sum_exp([])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-100, 100))
def test_log_sum_exp_shift_invariance(values, shift):
    base = log_sum_exp(values)
    shifted = log_sum_exp([v + shift for v in values])
    assert shifted - shift == pytest.approx(base, abs=1e-12)


def test_softmax_basics():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(softmax([1000.0] * 3), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax([math.log(1), math.log(3)]), [0.25, 0.75], atol=1e-15)


def test_softmax_sums_to_one_on_random_logits():
    rng = Rng(1234)
    for _ in range(200):
        x = rng.uniform(8) * 100 - 50
        assert abs(softmax(x).sum() - 1.0) <= 1e-12


def test_softmax_rejects_non_finite():
    with pytest.raises(ValueError):
        softmax([0.0, math.nan])
    with pytest.raises(ValueError):
        softmax([0.0, math.inf])


def test_log_softmax_rows_normalize():
    rng = Rng(77)
    x = (rng.uniform(12) * 10 - 5).reshape(3, 4)
    lp = log_softmax(x)
    for row in lp:
        assert log_sum_exp(row) == pytest.approx(0.0, abs=1e-12)


def test_sigmoid_tanh_basics():
    assert sigmoid(0.0) == 0.5
    assert tanh(0.0) == 0.0
    assert sigmoid(math.log(3.0)) == pytest.approx(0.75, abs=1e-15)
    # saturation without overflow
    assert sigmoid(1e6) == 1.0
    assert sigmoid(-1e6) == 0.0
    assert tanh(1e6) == 1.0


def test_sigmoid_monotone():
    xs = np.linspace(-20, 20, 400)
    ys = sigmoid(xs)
    assert np.all(np.diff(ys) >= 0)
    assert np.all((ys > 0) & (ys < 1))


def test_matmul_against_triple_loop_oracle():
    rng = Rng(9)
    for _ in range(25):
        m, k, n = rng.int_range(1, 8), rng.int_range(1, 8), rng.int_range(1, 8)
        a = (rng.uniform(m * k) * 2 - 1).reshape(m, k)
        b = (rng.uniform(k * n) * 2 - 1).reshape(k, n)
        want = np.zeros((m, n))
        for i in range(m):
            for j in range(n):
                for l in range(k):
                    want[i, j] += a[i, l] * b[l, j]
        np.testing.assert_allclose(matmul(a, b), want, atol=1e-12)


def test_matmul_identity_and_shapes():
    rng = Rng(10)
    a = (rng.uniform(6) * 2 - 1).reshape(2, 3)
    np.testing.assert_array_equal(matmul(a, np.eye(3)), a)
    assert matmul(a, np.ones((3, 1))).shape == (2, 1)
    np.testing.assert_allclose(
        matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]])),
        [[3.0], [7.0]],
    )
    with pytest.raises(ValueError):
        matmul(a, np.ones((4, 2)))


def test_matmul_associativity():
    rng = Rng(11)
    a = (rng.uniform(12) * 2 - 1).reshape(3, 4)
    b = (rng.uniform(20) * 2 - 1).reshape(4, 5)
    c = (rng.uniform(10) * 2 - 1).reshape(5, 2)
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-12)


def test_affine_rows_stable_under_appended_rows():
    rng = Rng(12)
    h = (rng.uniform(40) * 2 - 1).reshape(5, 8)
    w = (rng.uniform(24) * 2 - 1).reshape(3, 8)
    b = rng.uniform(3)
    w2 = np.concatenate([w, (rng.uniform(16) * 2 - 1).reshape(2, 8)])
    b2 = np.concatenate([b, rng.uniform(2)])
    small = affine_rows(h, w, b)
    big = affine_rows(h, w2, b2)
    assert np.array_equal(small, big[:, :3])


def test_rng_determinism():
    a, b = Rng(42), Rng(42)
    assert [a._next() for _ in range(100)] == [b._next() for _ in range(100)]
    a, b = Rng(42), Rng(42)
    np.testing.assert_array_equal(a.uniform(50), b.uniform(50))
    np.testing.assert_array_equal(
        a.gaussian(0, 1, n=50), b.gaussian(0, 1, n=50)
    )


def test_rng_seed_sensitivity():
    assert Rng(1).uniform(10).tolist() != Rng(2).uniform(10).tolist()


def test_rng_split_is_deterministic_and_independent():
    a = Rng(7).split("lang", 3)
    b = Rng(7).split("lang", 3)
    c = Rng(7).split("lang", 4)
    np.testing.assert_array_equal(a.uniform(20), b.uniform(20))
    assert a.uniform(20).tolist() != c.uniform(20).tolist()


def test_derive_seed_stable():
    assert derive_seed(123, "x", 5) == derive_seed(123, "x", 5)
    assert derive_seed(123, "x", 5) != derive_seed(123, "x", 6)
    assert derive_seed(123, "x") != derive_seed(124, "x")


def test_uniform_in_range():
    rng = Rng(5)
    u = rng.uniform(10000)
    assert np.all((u >= 0.0) & (u < 1.0))
    assert 0.45 < u.mean() < 0.55


def test_gaussian_moments():
    rng = Rng(6)
    z = rng.gaussian(2.0, 3.0, n=20000)
    assert z.mean() == pytest.approx(2.0, abs=0.1)
    assert z.std() == pytest.approx(3.0, abs=0.1)


def test_bernoulli_mask_edges_and_rate():
    rng = Rng(8)
    assert rng.bernoulli_mask(32, 1.0).sum() == 32
    assert rng.bernoulli_mask(32, 0.0).sum() == 0
    m = rng.bernoulli_mask(20000, 0.7)
    assert set(np.unique(m)) <= {0.0, 1.0}
    assert m.mean() == pytest.approx(0.7, abs=0.02)
    with pytest.raises(ValueError):
        rng.bernoulli_mask(4, 1.5)
    with pytest.raises(ValueError):
        rng.bernoulli_mask(4, -0.1)


def test_permutation_is_a_permutation():
    rng = Rng(3)
    for n in (1, 2, 7, 40):
        perm = rng.permutation(n)
        assert sorted(perm.tolist()) == list(range(n))


def test_integers_bounds():
    rng = Rng(4)
    draws = [rng.integers(7) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 6
