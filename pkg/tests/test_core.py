"""Match-measure semantics: ideal scores, factor structure, gradients."""

import numpy as np
import pytest

from qatm.core import DEFAULT_ALPHA, likelihoods, qatm_grad_alpha, qatm_grad_rho, quality_maps


def bipartite_rho(m, n, t_shape=(4, 4), s_shape=(4, 8)):
    """m template cells and n search cells mutually matched at similarity 1.

    Everything else sits at 0, so with a sharp temperature a matched pair
    ranks 1/m one way and 1/n the other. Returns (rho, matched t cells,
    matched s cells) with cells as flat indices.
    """
    rho = np.zeros(t_shape + s_shape)
    t_cells = [np.unravel_index(i, t_shape) for i in range(m)]
    s_cells = [np.unravel_index(k, s_shape) for k in range(n)]
    for ti, tj in t_cells:
        for sk, sl in s_cells:
            rho[ti, tj, sk, sl] = 1.0
    return rho, t_cells, s_cells


class TestIdealScores:
    @pytest.mark.parametrize("m,n", [(1, 1), (1, 3), (3, 1), (2, 3)])
    def test_matched_cells_score_one_over_mn(self, m, n):
        rho, t_cells, s_cells = bipartite_rho(m, n)
        q = likelihoods(rho, alpha=50.0)
        for ti, tj in t_cells:
            for sk, sl in s_cells:
                assert q.qatm[ti, tj, sk, sl] == pytest.approx(1.0 / (m * n), abs=1e-3)

    def test_one_to_one_factors(self):
        rho, _, _ = bipartite_rho(1, 1)
        q = likelihoods(rho, alpha=50.0)
        assert q.l_t_given_s[0, 0, 0, 0] == pytest.approx(1.0, abs=1e-3)
        assert q.l_s_given_t[0, 0, 0, 0] == pytest.approx(1.0, abs=1e-3)

    def test_two_cell_example_sharp_match(self):
        # one matched pair at similarity 1 among 2x2 cells: both factors are
        # e^a/(e^a+1), so the product sits at 1 - 2/(e^28.4+1) ~ 1 - 9.2e-13
        rho = np.array([[1.0, 0.0], [0.0, 0.0]]).reshape(1, 2, 1, 2)
        q = likelihoods(rho, alpha=28.4)
        e = np.exp(28.4)
        want = (e / (e + 1.0)) ** 2
        assert q.qatm[0, 0, 0, 0] == pytest.approx(want, rel=1e-12)
        assert q.qatm[0, 0, 0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_two_cell_example_soft_match(self):
        # matched similarity 0.3 (a realistic deep-feature value): each
        # factor is e^8.52/(e^8.52+1) = 0.9998005, product 0.9996011
        rho = np.array([[0.3, 0.0], [0.0, 0.0]]).reshape(1, 2, 1, 2)
        q = likelihoods(rho, alpha=28.4)
        assert q.qatm[0, 0, 0, 0] == pytest.approx(0.99960, abs=1e-4)

    def test_one_to_n_limit(self):
        # one template cell with two equally matched search cells: 1/2 each
        rho = np.zeros((1, 1, 1, 4))
        rho[0, 0, 0, :2] = 1.0
        q = likelihoods(rho, alpha=50.0)
        assert q.qatm[0, 0, 0, 0] == pytest.approx(0.5, abs=1e-3)
        assert q.qatm[0, 0, 0, 1] == pytest.approx(0.5, abs=1e-3)

    def test_not_matching_uniform_is_exact(self):
        # power-of-two cell counts make the uniform softmax exact in floats
        rho = np.full((2, 2, 2, 2), 0.9)
        q = likelihoods(rho, alpha=13.3)
        np.testing.assert_array_equal(q.qatm, 1.0 / 16.0)

    def test_scale_sensitivity_only_through_alpha(self):
        rng = np.random.default_rng(21)
        rho = rng.uniform(-1, 1, (2, 3, 3, 2))
        c = 3.7
        a = likelihoods(rho, alpha=10.0)
        b = likelihoods(c * rho, alpha=10.0 / c)
        np.testing.assert_allclose(a.qatm, b.qatm, atol=1e-6)

    def test_monotone_in_pair_similarity(self):
        rng = np.random.default_rng(22)
        rho = rng.uniform(-1, 1, (3, 3, 4, 4))
        idx = (1, 2, 0, 3)
        base = likelihoods(rho, DEFAULT_ALPHA).qatm[idx]
        for bump in (0.05, 0.2, 0.5):
            raised = rho.copy()
            raised[idx] = min(1.0, raised[idx] + bump)
            assert likelihoods(raised, DEFAULT_ALPHA).qatm[idx] >= base - 1e-12


class TestFactorStructure:
    def test_normalization_and_product(self):
        rng = np.random.default_rng(23)
        rho = rng.uniform(-1, 1, (3, 4, 2, 5))
        q = likelihoods(rho, alpha=17.0)
        np.testing.assert_allclose(q.l_t_given_s.sum(axis=(0, 1)), 1.0, atol=1e-6)
        np.testing.assert_allclose(q.l_s_given_t.sum(axis=(2, 3)), 1.0, atol=1e-6)
        np.testing.assert_allclose(q.qatm, q.l_t_given_s * q.l_s_given_t, atol=1e-6)
        assert np.all(q.qatm > 0.0) and np.all(q.qatm <= 1.0)

    def test_alpha_validation_propagates(self):
        with pytest.raises(ValueError, match="alpha"):
            likelihoods(np.zeros((1, 1, 1, 1)), alpha=0.0)

    def test_non_finite_rejected(self):
        rho = np.zeros((1, 1, 1, 2))
        rho[0, 0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            likelihoods(rho, 1.0)


class TestQualityMaps:
    def test_sharp_match_maps(self):
        rho = np.array([[1.0, 0.0], [0.0, 0.0]]).reshape(1, 2, 1, 2)
        s_map, t_map = quality_maps(likelihoods(rho, alpha=28.4))
        assert s_map.shape == (1, 2) and t_map.shape == (1, 2)
        assert s_map[0, 0] == pytest.approx(1.0, abs=1e-9)
        # the unmatched cell pairs with the other unmatched cell at the
        # 2x2 floor value 1/(2*2)
        assert s_map[0, 1] == pytest.approx(0.25, abs=1e-9)
        assert t_map[0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_sharp_match_background_fades_on_larger_grids(self):
        rho = np.zeros((4, 4, 4, 4))
        rho[0, 0, 0, 0] = 1.0
        s_map, _ = quality_maps(likelihoods(rho, alpha=28.4))
        assert s_map[0, 0] == pytest.approx(1.0, abs=1e-3)
        assert s_map[1:, 1:].max() < 0.01  # background near 1/(16*16)

    def test_uniform_maps_constant(self):
        rho = np.full((2, 2, 2, 2), 0.4)
        s_map, t_map = quality_maps(likelihoods(rho, alpha=9.0))
        np.testing.assert_array_equal(s_map, 1.0 / 16.0)
        np.testing.assert_array_equal(t_map, 1.0 / 16.0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(24)
        rho = rng.uniform(-1, 1, (3, 3, 4, 4))
        q = likelihoods(rho, alpha=11.0)
        s_map, t_map = quality_maps(q)
        for k in range(4):
            for l in range(4):
                assert s_map[k, l] == q.qatm[:, :, k, l].max()
        for i in range(3):
            for j in range(3):
                assert t_map[i, j] == q.qatm[i, j].max()


def fd_alpha(rho, alpha, h=1e-4):
    return (likelihoods(rho, alpha + h).qatm - likelihoods(rho, alpha - h).qatm) / (2 * h)


def fd_rho_vjp(rho, alpha, upstream, h=1e-4):
    out = np.empty_like(rho)
    it = np.nditer(rho, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        hi, lo = rho.copy(), rho.copy()
        hi[idx] += h
        lo[idx] -= h
        out[idx] = (
            (likelihoods(hi, alpha).qatm * upstream).sum()
            - (likelihoods(lo, alpha).qatm * upstream).sum()
        ) / (2 * h)
    return out


class TestGradients:
    def test_uniform_rho_zero_alpha_gradient(self):
        np.testing.assert_array_equal(qatm_grad_alpha(np.zeros((2, 2, 3, 3)), 10.0), 0.0)
        assert np.abs(qatm_grad_alpha(np.full((2, 2, 3, 3), 0.7), 10.0)).max() < 1e-15

    def test_alpha_gradient_two_cell_case(self):
        rho = np.array([[1.0, 0.0], [0.0, 0.0]]).reshape(1, 2, 1, 2)
        grad = qatm_grad_alpha(rho, 10.0)
        want = fd_alpha(rho, 10.0)
        np.testing.assert_allclose(grad, want, rtol=1e-5, atol=1e-12)

    @pytest.mark.parametrize("alpha", [1.0, 28.4])
    def test_alpha_gradient_random(self, alpha):
        rng = np.random.default_rng(25)
        rho = rng.uniform(-1, 1, (3, 2, 2, 4))
        np.testing.assert_allclose(
            qatm_grad_alpha(rho, alpha), fd_alpha(rho, alpha), rtol=1e-4, atol=1e-10
        )

    def test_zero_upstream_zero_gradient(self):
        rng = np.random.default_rng(26)
        rho = rng.uniform(-1, 1, (2, 2, 2, 2))
        np.testing.assert_array_equal(qatm_grad_rho(rho, 5.0, np.zeros_like(rho)), 0.0)

    def test_rho_vjp_single_entry_upstream(self):
        rho = np.array([[1.0, 0.0], [0.0, 0.0]]).reshape(1, 2, 1, 2)
        upstream = np.zeros_like(rho)
        upstream[0, 0, 0, 0] = 1.0
        got = qatm_grad_rho(rho, 10.0, upstream)
        want = fd_rho_vjp(rho, 10.0, upstream)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)

    @pytest.mark.parametrize("alpha", [1.0, 28.4])
    def test_rho_vjp_dense_upstream(self, alpha):
        rng = np.random.default_rng(27)
        rho = rng.uniform(-1, 1, (3, 3, 3, 3))
        upstream = rng.standard_normal(rho.shape)
        got = qatm_grad_rho(rho, alpha, upstream)
        want = fd_rho_vjp(rho, alpha, upstream)
        np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-8)

    def test_upstream_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            qatm_grad_rho(np.zeros((1, 1, 1, 2)), 1.0, np.zeros((1, 1, 2, 1)))

    def test_default_upstream_is_ones(self):
        rng = np.random.default_rng(28)
        rho = rng.uniform(-1, 1, (2, 2, 2, 2))
        np.testing.assert_array_equal(
            qatm_grad_rho(rho, 3.0), qatm_grad_rho(rho, 3.0, np.ones_like(rho))
        )
