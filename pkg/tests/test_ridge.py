import numpy as np
import pytest
import scipy.sparse

from idfalign.ridge import LinearModel, RidgeConfig, fit_ridge, predict


def oracle_ridge(x, y, lam):
    """Independent dense oracle: pseudo-inverse of the regularized normal equations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    weights = np.linalg.pinv(gram) @ (xc.T @ yc)
    bias = y.mean(axis=0) - x.mean(axis=0) @ weights
    return weights, bias


def normal_equation_residual(x, y, lam, model):
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    lhs = (xc.T @ xc + lam * np.eye(x.shape[1])) @ model.weights
    rhs = xc.T @ yc
    return np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)


class TestFitRidge:
    def test_collinear_data_exact_fit(self):
        model = fit_ridge([[1.0], [2.0]], [[2.0], [4.0]], RidgeConfig(lam=0.0))
        assert model.weights[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert model.bias[0] == pytest.approx(0.0, abs=1e-12)

    def test_constant_targets_go_to_bias(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(15, 4))
        y = np.full((15, 2), 3.25)
        model = fit_ridge(x, y, RidgeConfig(lam=0.5))
        assert np.allclose(model.weights, 0.0, atol=1e-9)
        assert np.allclose(model.bias, 3.25, atol=1e-9)

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(20, 5))
        y = rng.normal(size=(20, 3))
        model = fit_ridge(x, y, RidgeConfig(lam=0.1))
        w_oracle, b_oracle = oracle_ridge(x, y, 0.1)
        assert np.allclose(model.weights, w_oracle, atol=1e-9)
        assert np.allclose(model.bias, b_oracle, atol=1e-9)
        assert normal_equation_residual(x, y, 0.1, model) < 1e-8

    def test_dual_path_satisfies_primal_normal_equations(self):
        # More features than samples forces the kernel-form solve.
        rng = np.random.default_rng(2)
        x = rng.normal(size=(12, 40))
        y = rng.normal(size=(12, 2))
        model = fit_ridge(x, y, RidgeConfig(lam=0.3))
        w_oracle, b_oracle = oracle_ridge(x, y, 0.3)
        assert normal_equation_residual(x, y, 0.3, model) < 1e-8
        assert np.allclose(model.weights, w_oracle, atol=1e-7)
        assert np.allclose(model.bias, b_oracle, atol=1e-7)

    def test_monotone_shrinkage(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 6))
        y = rng.normal(size=(30, 2))
        norms = [
            np.linalg.norm(fit_ridge(x, y, RidgeConfig(lam=lam)).weights)
            for lam in (0.01, 0.1, 1.0, 10.0, 100.0)
        ]
        assert all(a >= b for a, b in zip(norms, norms[1:]))

    def test_huge_lambda_collapses_to_column_means(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(25, 4))
        y = rng.normal(size=(25, 3)) + np.array([1.0, -2.0, 0.5])
        scale = np.trace(x.T @ x)
        model = fit_ridge(x, y, RidgeConfig(lam=1e12 * scale))
        assert np.linalg.norm(model.weights) < 1e-9
        assert np.allclose(predict(model, x), np.tile(y.mean(axis=0), (25, 1)), atol=1e-6)

    def test_sparse_input_matches_dense(self):
        rng = np.random.default_rng(5)
        dense = np.zeros((18, 24))
        for row in dense:
            row[rng.choice(24, size=3, replace=False)] = 1.0
        y = rng.normal(size=(18, 2))
        for lam in (0.5, 2.0):
            m_dense = fit_ridge(dense, y, RidgeConfig(lam=lam))
            m_sparse = fit_ridge(scipy.sparse.csr_matrix(dense), y, RidgeConfig(lam=lam))
            assert np.allclose(m_dense.weights, m_sparse.weights, atol=1e-10)
            assert np.allclose(m_dense.bias, m_sparse.bias, atol=1e-10)

    def test_sparse_dual_matches_dense(self):
        # One-hot rows with more columns than rows, the shape the wide
        # one-hot encoding produces at training time.
        rng = np.random.default_rng(8)
        dense = np.zeros((10, 60))
        for row in dense:
            row[rng.choice(60, size=4, replace=False)] = 1.0
        y = rng.normal(size=(10, 3))
        m_dense = fit_ridge(dense, y, RidgeConfig(lam=0.7))
        m_sparse = fit_ridge(scipy.sparse.csr_matrix(dense), y, RidgeConfig(lam=0.7))
        assert np.allclose(m_dense.weights, m_sparse.weights, atol=1e-10)
        assert np.allclose(m_dense.bias, m_sparse.bias, atol=1e-10)

    def test_rank_deficient_without_penalty_raises(self):
        x = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])  # rank 1
        with pytest.raises(ValueError, match="lam"):
            fit_ridge(x, [[1.0], [2.0], [3.0]], RidgeConfig(lam=0.0))

    def test_non_finite_inputs_rejected(self):
        with pytest.raises(ValueError):
            fit_ridge([[np.nan], [1.0]], [[0.0], [1.0]], RidgeConfig())
        with pytest.raises(ValueError):
            fit_ridge([[0.0], [1.0]], [[np.inf], [1.0]], RidgeConfig())

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            RidgeConfig(lam=-0.1)


class TestPredict:
    def test_zero_weights_return_bias(self):
        model = LinearModel(np.zeros((3, 2)), np.array([1.5, -2.0]))
        assert np.allclose(predict(model, [9.0, 9.0, 9.0]), [1.5, -2.0])

    def test_identity_passthrough(self):
        model = LinearModel(np.array([[1.0]]), np.array([0.0]))
        assert predict(model, [7.25])[0] == 7.25

    def test_matches_naive_dot_loop(self):
        rng = np.random.default_rng(6)
        weights = rng.normal(size=(5, 3))
        bias = rng.normal(size=3)
        x = rng.normal(size=5)
        model = LinearModel(weights, bias)
        expected = [sum(weights[i, j] * x[i] for i in range(5)) + bias[j] for j in range(3)]
        assert np.allclose(predict(model, x), expected, atol=1e-12)

    def test_batch_prediction(self):
        model = LinearModel(np.array([[2.0], [0.5]]), np.array([1.0]))
        out = predict(model, [[1.0, 2.0], [0.0, 4.0]])
        assert np.allclose(out, [[4.0], [3.0]])

    def test_length_mismatch_raises(self):
        model = LinearModel(np.zeros((3, 1)), np.zeros(1))
        with pytest.raises(ValueError):
            predict(model, [1.0, 2.0])
