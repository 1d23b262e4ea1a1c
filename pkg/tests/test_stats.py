import itertools

import numpy as np
import pytest
from scipy.stats import ortho_group

from graph2sample.graph import RngSeed
from graph2sample.simulate import null_interval
from graph2sample.stats import (DegenerateInputError, _binary_label_ranks, _neighbor_ranks, dcorr, double_center,
                                ksample_transform, mgc, pairwise_distances, permutation_pvalue, permutation_test,
                                pvalue, u_center)

from oracles import naive_center, naive_dcorr, naive_local_grid


def test_pairwise_distances_line():
    D = pairwise_distances(np.array([[0.0], [3.0], [4.0]]))
    np.testing.assert_array_equal(D, [[0, 3, 4], [3, 0, 1], [4, 1, 0]])
    np.testing.assert_array_equal(pairwise_distances(np.ones((4, 2))), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        pairwise_distances([[np.inf]])


def test_pairwise_distances_triangle_inequality():
    D = pairwise_distances(np.random.default_rng(0).normal(size=(10, 3)))
    for i, j, k in itertools.product(range(10), repeat=3):
        assert D[i, k] <= D[i, j] + D[j, k] + 1e-12


def test_double_center_line_example():
    D = pairwise_distances(np.array([[0.0], [3.0], [4.0]]))
    Dc = double_center(D)
    np.testing.assert_allclose(Dc, naive_center(D, False), atol=1e-14)
    # column 1 mean is 4/3, not 7/3
    assert Dc[0, 1] == pytest.approx(10 / 9, abs=1e-14)
    np.testing.assert_array_equal(double_center([[5.0]]), [[0.0]])


def test_double_center_sums_zero():
    D = 2.5 * (np.ones((6, 6)) - np.eye(6))
    np.testing.assert_allclose(double_center(D).sum(axis=1), 0, atol=1e-12)
    D = pairwise_distances(np.random.default_rng(1).normal(size=(30, 2)))
    Dc = double_center(D)
    bound = 1e-9 * 30 * D.max()
    assert np.abs(Dc.sum(0)).max() < bound and np.abs(Dc.sum(1)).max() < bound


def test_u_center_oracle_and_errors():
    np.testing.assert_array_equal(u_center(np.zeros((5, 5))), np.zeros((5, 5)))
    D = pairwise_distances(np.random.default_rng(2).normal(size=(4, 2)))
    np.testing.assert_allclose(u_center(D), naive_center(D, True), atol=1e-14, rtol=0)
    with pytest.raises(ValueError):
        u_center(np.zeros((3, 3)))


def test_u_center_expectation_zero():
    rng = np.random.default_rng(3)
    draws = np.array([u_center(pairwise_distances(rng.normal(size=(6, 2)))) for _ in range(500)])
    mean, se = draws.mean(0), draws.std(0, ddof=1) / np.sqrt(500)
    off = ~np.eye(6, dtype=bool)
    assert np.all(np.abs(mean[off]) < 3 * se[off] + 1e-15)


def test_ksample_transform():
    Z, E = ksample_transform(np.zeros((2, 3)), np.ones((3, 3)))
    assert Z.shape == (5, 3)
    np.testing.assert_array_equal(E.ravel(), [0, 0, 1, 1, 1])
    X = np.random.default_rng(0).normal(size=(4, 2))
    Z, _ = ksample_transform(X, X)
    np.testing.assert_array_equal(Z[:4], Z[4:])
    with pytest.raises(ValueError):
        ksample_transform(np.zeros((2, 2)), np.zeros((2, 3)))


def test_unbiased_dcorr_same_distribution_mean_zero():
    rng = np.random.default_rng(4)
    stats = np.array([dcorr(*ksample_transform(rng.uniform(size=(20, 1)), rng.uniform(size=(20, 1))))
                      for _ in range(500)])
    assert abs(stats.mean()) < 3 * stats.std(ddof=1) / np.sqrt(len(stats))


def test_unbiased_dcorr_identical_blocks_is_negative():
    # exact twins with opposite labels are anti-dependence, not independence
    X = np.random.default_rng(4).uniform(size=(6, 1))
    Z, E = ksample_transform(X, X)
    value = dcorr(Z, E)
    assert value == pytest.approx(naive_dcorr(Z, E, True), abs=1e-12)
    assert value < 0


@pytest.mark.parametrize("centering, unbiased", [("u-centered", True), ("double", False)])
def test_dcorr_matches_naive_oracle(centering, unbiased):
    rng = np.random.default_rng(5)
    Z = rng.normal(size=(8, 2))
    E = rng.normal(size=(8, 1))
    assert dcorr(Z, E, centering) == pytest.approx(naive_dcorr(Z, E, unbiased), abs=1e-12)


def test_dcorr_degenerate_and_small():
    with pytest.raises(DegenerateInputError):
        dcorr(np.random.default_rng(0).normal(size=(10, 2)), np.zeros(10))
    with pytest.raises(ValueError):
        dcorr(np.zeros((3, 1)), np.arange(3.0))


def test_dcorr_separated_clusters():
    rng = np.random.default_rng(6)
    Z, E = ksample_transform(rng.normal(0, 1, (10, 1)), rng.normal(100, 1, (10, 1)))
    res = permutation_pvalue("dcorr-u", Z, E, B=999, seed=RngSeed(1))
    assert res.statistic > np.quantile(res.null_values, 0.99)


def test_neighbor_ranks_ties_and_binary_path():
    D = pairwise_distances(np.array([[0.0], [1.0], [1.0], [2.0]]))
    R = _neighbor_ranks(D)
    np.testing.assert_array_equal(np.diag(R), 0)
    assert R[0, 1] == 1 and R[0, 2] == 2
    labels = np.random.default_rng(7).integers(0, 2, 25)
    np.testing.assert_array_equal(_binary_label_ranks(labels),
                                  _neighbor_ranks(pairwise_distances(labels.astype(float))))


@pytest.mark.parametrize("binary", [True, False])
def test_mgc_grid_matches_naive_oracle(binary):
    rng = np.random.default_rng(8)
    Z = rng.normal(size=(9, 2))
    E = rng.integers(0, 2, 9).astype(float) if binary else rng.normal(size=9)
    res = mgc(Z, E)
    np.testing.assert_allclose(res.local_correlations, naive_local_grid(Z, E), atol=1e-12)


def test_mgc_global_scale_is_dcorr():
    rng = np.random.default_rng(9)
    for _ in range(5):
        Z, E = ksample_transform(rng.normal(size=(15, 2)), rng.normal(0.5, 1, (12, 2)))
        res = mgc(Z, E)
        assert res.global_statistic == pytest.approx(dcorr(Z, E), abs=1e-10)
        assert res.local_correlations[-1, -1] == res.global_statistic
        assert np.all(np.abs(res.local_correlations) <= 1 + 1e-12)
        if res.optimal_scale != "global":
            assert res.statistic >= res.global_statistic


def test_mgc_nonlinear_finds_local_scale():
    rng = np.random.default_rng(10)
    x = rng.uniform(-1, 1, 100)
    res = mgc(x, x ** 2)
    assert res.optimal_scale != "global"
    assert res.statistic > res.global_statistic


def test_mgc_rank_on_centered_and_errors():
    rng = np.random.default_rng(11)
    Z, E = ksample_transform(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)))
    res = mgc(Z, E, rank_on="centered")
    assert res.global_statistic == pytest.approx(dcorr(Z, E), abs=1e-10)
    with pytest.raises(ValueError):
        mgc(Z, E, rank_on="nope")
    with pytest.raises(DegenerateInputError):
        mgc(Z, np.ones(20))


@pytest.mark.parametrize("stat", ["dcorr-u", "dcorr-biased", "mgc"])
def test_orthogonal_and_label_swap_invariance(stat):
    rng = np.random.default_rng(12)
    Z, E = ksample_transform(rng.normal(size=(20, 3)), rng.normal(0.3, 1, (20, 3)))
    Q = ortho_group.rvs(3, random_state=0)

    def value(Z, E):
        if stat == "mgc":
            return mgc(Z, E).statistic
        return dcorr(Z, E, "u-centered" if stat == "dcorr-u" else "double")

    base = value(Z, E)
    assert value(Z @ Q + 5.0, E) == pytest.approx(base, abs=1e-12)
    assert value(Z, 1 - E) == pytest.approx(base, abs=1e-12)


def test_pvalue_formula():
    assert pvalue(5.0, np.zeros(999)) == 0.001
    assert pvalue(0.0, np.zeros(9)) == 1.0
    assert pvalue(1.0, [0, 1, 2, 0.5]) == 3 / 5


def test_permutation_test_deterministic_and_consistent():
    rng = np.random.default_rng(13)
    Z, E = ksample_transform(rng.normal(size=(15, 2)), rng.normal(size=(15, 2)))
    a = permutation_test(Z, E, ("mgc", "dcorr-u", "dcorr-biased"), B=99, seed=RngSeed(5))
    b = permutation_test(Z, E, ("mgc", "dcorr-u", "dcorr-biased"), B=99, seed=RngSeed(5))
    for name in a:
        np.testing.assert_array_equal(a[name].null_values, b[name].null_values)
        assert a[name].p_value == pvalue(a[name].statistic, a[name].null_values)
        assert 0 < a[name].p_value <= 1
    alone = permutation_pvalue("dcorr-u", Z, E, B=99, seed=RngSeed(5))
    np.testing.assert_allclose(alone.null_values, a["dcorr-u"].null_values, atol=1e-12)
    assert a["mgc"].optimal_scale is not None
    assert '"schema_version": 1' in a["mgc"].to_json()


def test_permutation_test_errors():
    Z, E = ksample_transform(np.zeros((3, 1)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        permutation_test(Z, E, B=0)
    with pytest.raises(ValueError):
        permutation_test(Z, E, ("energy",))


def test_pvalues_super_uniform_under_null():
    rng = np.random.default_rng(14)
    ps = []
    for r in range(500):
        Z, E = ksample_transform(rng.normal(size=(15, 1)), rng.normal(size=(15, 1)))
        ps.append(permutation_pvalue("dcorr-u", Z, E, B=99, seed=RngSeed(14, r)).p_value)
    rate = np.mean(np.array(ps) <= 0.05)
    assert rate <= 0.05 + 3 * np.sqrt(0.05 * 0.95 / 500)


@pytest.mark.slow
def test_null_validity_uniform():
    rng = np.random.default_rng(15)
    rejections = {"mgc": 0, "dcorr-u": 0}
    for r in range(200):
        Z, E = ksample_transform(rng.uniform(0.2, 0.7, (30, 1)), rng.uniform(0.2, 0.7, (30, 1)))
        res = permutation_test(Z, E, ("mgc", "dcorr-u"), B=199, seed=RngSeed(15, r))
        for name in rejections:
            rejections[name] += res[name].p_value <= 0.05
    lo, hi = null_interval(0.05, 200)
    for name, count in rejections.items():
        assert lo <= count / 200 <= hi, (name, count)


def test_largest_component_matches_ndimage():
    from scipy import ndimage

    from graph2sample._kernels import largest_component_max

    rng = np.random.default_rng(16)
    for _ in range(2000):
        c = rng.integers(0, 4, (int(rng.integers(1, 14)), int(rng.integers(1, 14)))).astype(float)
        n = c.size
        got = largest_component_max(c, 1.0, np.empty(n, np.int32), np.empty(n, np.int32), np.empty(n),
                                    np.empty(n, np.int32))
        labels, count = ndimage.label(c > 1.0)
        if not count:
            assert got[0] == 0
            continue
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        idx = np.argmax(np.where(labels == sizes.argmax(), c, -np.inf))
        assert got == (sizes.max(), c.ravel()[idx], idx)
