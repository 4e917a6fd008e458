import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from factgp.bench import gen_toy
from factgp.dense import LOG_2PI, Dataset, exact_fit, exact_predict
from factgp.errors import CGBreakdownError, ExtrapolationError, InputShapeError, SingularFactorError
from factgp.kernel import kern_cross
from factgp.structured import (
    KronOp,
    RegularGrid,
    ToeplitzOp,
    cg_solve,
    grid_kernel,
    kron_inv_apply,
    kron_mvm,
    ski_apply,
    ski_fit,
    ski_logdet_approx,
    ski_nlml_approx,
    ski_predict,
    ski_weights,
    toeplitz_mvm,
)

from conftest import make_spec, rel_err


def spd(rng, k):
    A = rng.normal(size=(k, k))
    return A @ A.T + k * np.eye(k)


class TestRegularGrid:
    def test_rejects_uneven_axis(self):
        with pytest.raises(InputShapeError):
            RegularGrid((np.array([0.0, 1.0, 3.0]),))

    def test_rejects_single_point(self):
        with pytest.raises(InputShapeError):
            RegularGrid((np.array([0.0]),))

    def test_covering_pads_range(self):
        g = RegularGrid.covering(np.array([0.0, 10.0]), m=11)
        assert g.axes[0][0] == pytest.approx(-0.2) and g.axes[0][-1] == pytest.approx(10.2)
        assert g.size == 11 and g.spacing(0) == pytest.approx(1.04)

    def test_points_first_dimension_slowest(self):
        g = RegularGrid((np.array([0.0, 1.0]), np.array([5.0, 6.0, 7.0])))
        P = g.points()
        assert P.shape == (6, 2)
        np.testing.assert_array_equal(P[:3, 0], 0.0)
        np.testing.assert_array_equal(P[:3, 1], [5.0, 6.0, 7.0])


class TestToeplitz:
    def test_identity(self, rng):
        v = rng.normal(size=9)
        np.testing.assert_allclose(toeplitz_mvm(ToeplitzOp(np.eye(9)[0]), v), v, atol=1e-15)

    def test_constant_column(self, rng):
        v = rng.normal(size=6)
        np.testing.assert_allclose(toeplitz_mvm(ToeplitzOp(np.full(6, 2.5)), v), np.full(6, 2.5 * v.sum()))

    def test_odd_size_kernel_column(self, rng):
        axis = np.linspace(0, 20, 257)
        col = np.exp(-0.5 * (axis - axis[0]) ** 2 / 1.3**2)
        v = rng.normal(size=257)
        assert rel_err(toeplitz_mvm(ToeplitzOp(col), v), sla.toeplitz(col) @ v) <= 1e-10

    @given(m=st.integers(1, 512), seed=st.integers(0, 2**31))
    def test_matches_dense(self, m, seed):
        rng = np.random.default_rng(seed)
        col = rng.normal(size=m)
        v = rng.normal(size=m)
        assert rel_err(toeplitz_mvm(ToeplitzOp(col), v), sla.toeplitz(col) @ v) <= 1e-10

    def test_batched_columns(self, rng):
        col = rng.normal(size=10)
        V = rng.normal(size=(10, 3))
        np.testing.assert_allclose(toeplitz_mvm(ToeplitzOp(col), V), sla.toeplitz(col) @ V, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InputShapeError):
            toeplitz_mvm(ToeplitzOp(np.ones(4)), np.ones(5))


class TestKron:
    def test_identity_factors(self, rng):
        v = rng.normal(size=12)
        np.testing.assert_array_equal(kron_mvm(KronOp((np.eye(3), np.eye(4))), v), v)

    def test_two_by_two(self, rng):
        A, B = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        v = rng.normal(size=4)
        np.testing.assert_allclose(kron_mvm(KronOp((A, B)), v), np.kron(A, B) @ v, rtol=1e-12)

    def test_order_matters(self):
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        B = np.array([[3.0, 0.0], [1.0, 1.0]])
        v = np.arange(1.0, 5.0)
        assert not np.allclose(kron_mvm(KronOp((A, B)), v), kron_mvm(KronOp((B, A)), v))

    @given(dims=st.lists(st.integers(1, 8), min_size=1, max_size=3), seed=st.integers(0, 2**31))
    def test_matches_dense(self, dims, seed):
        rng = np.random.default_rng(seed)
        op = KronOp(tuple(rng.normal(size=(d, d)) for d in dims))
        v = rng.normal(size=op.size)
        assert rel_err(kron_mvm(op, v), op.dense() @ v) <= 1e-10

    def test_eigvals(self, rng):
        op = KronOp((spd(rng, 3), spd(rng, 4)))
        np.testing.assert_allclose(np.sort(op.eigvals()), np.linalg.eigvalsh(op.dense()), rtol=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(InputShapeError):
            kron_mvm(KronOp((np.eye(2), np.eye(2))), np.ones(5))


class TestKronInverse:
    def test_identity(self, rng):
        v = rng.normal(size=6)
        np.testing.assert_allclose(kron_inv_apply(KronOp((np.eye(2), np.eye(3))), v), v)

    def test_diagonal(self, rng):
        a, b = np.array([2.0, 4.0]), np.array([1.0, 3.0, 5.0])
        v = rng.normal(size=6)
        out = kron_inv_apply(KronOp((np.diag(a), np.diag(b))), v)
        np.testing.assert_allclose(out, v / np.kron(a, b))

    def test_against_dense_inverse(self, rng):
        op = KronOp((spd(rng, 3), spd(rng, 3)))
        v = rng.normal(size=9)
        x = kron_inv_apply(op, v)
        assert rel_err(x, np.linalg.inv(op.dense()) @ v) <= 1e-10
        assert rel_err(kron_mvm(op, x), v) <= 1e-8

    def test_singular_factor_named(self):
        op = KronOp((np.eye(2), np.ones((3, 3))))
        with pytest.raises(SingularFactorError) as exc:
            kron_inv_apply(op, np.ones(6))
        assert exc.value.dimension == 1


class TestSkiWeights:
    grid = RegularGrid((np.linspace(0.0, 4.0, 5),))

    def test_on_grid_point(self):
        W = ski_weights(np.array([2.0]), self.grid).toarray()
        np.testing.assert_allclose(W, [[0, 0, 1, 0, 0]], atol=1e-15)

    def test_midpoint(self):
        W = ski_weights(np.array([1.5]), self.grid).toarray()
        np.testing.assert_allclose(W, [[0, 0.5, 0.5, 0, 0]])

    def test_weight_on_lower_neighbour(self):
        # x = z_a + h/4: weight (z_b - x)/h = 0.75 on z_a
        W = ski_weights(np.array([1.25]), self.grid).toarray()
        np.testing.assert_allclose(W[0, 1:3], [0.75, 0.25])

    def test_extrapolation(self):
        with pytest.raises(ExtrapolationError):
            ski_weights(np.array([4.5]), self.grid)

    @given(seed=st.integers(0, 2**31), dim=st.integers(1, 3))
    def test_row_structure(self, seed, dim):
        rng = np.random.default_rng(seed)
        grid = RegularGrid(tuple(np.linspace(-1, 1, int(k)) for k in rng.integers(2, 7, dim)))
        X = rng.uniform(-1, 1, size=(20, dim))
        W = ski_weights(X, grid)
        assert W.shape == (20, grid.size)
        assert np.all(np.diff(W.indptr) == 2**dim)
        np.testing.assert_allclose(np.asarray(W.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        assert W.data.min() >= 0.0 and W.data.max() <= 1.0
        np.testing.assert_allclose(W @ grid.points(), X, atol=1e-12)
        if dim == 1:
            cols = W.indices.reshape(20, 2)
            assert np.all(cols[:, 1] - cols[:, 0] == 1)

    def test_interpolated_kernel(self, rng):
        spec = make_spec(1.0, 1.0)
        axis = np.linspace(-3, 3, 13)
        grid = RegularGrid((axis,))
        a = 5
        x = rng.uniform(axis[a], axis[a + 1])
        w = (axis[a + 1] - x) / grid.spacing(0)
        zj = axis[[0, 3, 6, 9, 12]]
        direct = w * kern_cross(spec, [[axis[a]]], zj[:, None]) + (1 - w) * kern_cross(spec, [[axis[a + 1]]], zj[:, None])
        Kzz = kern_cross(spec, axis[:, None], axis[:, None])
        via_W = ski_weights(np.array([x]), grid) @ Kzz[:, [0, 3, 6, 9, 12]]
        np.testing.assert_allclose(via_W, direct, rtol=1e-14)


class TestSkiApply:
    def make(self, rng, n=80, m=64, s2=0.1):
        spec = make_spec(0.8, 1.2, s2)
        X = rng.uniform(-4, 4, size=n)
        grid = RegularGrid.covering(X, m=m)
        return ski_weights(X, grid), grid_kernel(grid, spec), grid, spec

    def test_zero(self, rng):
        W, K, _, _ = self.make(rng)
        np.testing.assert_array_equal(ski_apply(W, K, 0.1, np.zeros(80)), 0.0)

    def test_against_dense(self, rng):
        W, K, grid, spec = self.make(rng)
        v = rng.normal(size=80)
        Kzz = kern_cross(spec, grid.points(), grid.points())
        dense = W.toarray() @ Kzz @ W.toarray().T + 0.1 * np.eye(80)
        assert rel_err(ski_apply(W, K, 0.1, v), dense @ v) <= 1e-10

    def test_data_on_grid(self, rng):
        grid = RegularGrid((np.linspace(0, 1, 16),))
        K = grid_kernel(grid, make_spec(0.3))
        W = ski_weights(grid.points(), grid)
        v = rng.normal(size=16)
        np.testing.assert_allclose(ski_apply(W, K, 0.2, v), K.matvec(v) + 0.2 * v, rtol=1e-12)

    @given(seed=st.integers(0, 2**31), dim=st.integers(1, 2))
    def test_symmetric(self, seed, dim):
        rng = np.random.default_rng(seed)
        spec = make_spec([0.9] * dim, 1.0, 0.05)
        X = rng.uniform(-2, 2, size=(40, dim))
        grid = RegularGrid.covering(X, m=9 if dim == 2 else 30)
        W, K = ski_weights(X, grid), grid_kernel(grid, spec)
        u, v = rng.normal(size=40), rng.normal(size=40)
        lhs, rhs = u @ ski_apply(W, K, 0.05, v), ski_apply(W, K, 0.05, u) @ v
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)

    def test_shape_mismatch(self, rng):
        W, K, _, _ = self.make(rng)
        with pytest.raises(InputShapeError):
            ski_apply(W, K, 0.1, np.ones(81))


class TestCg:
    def test_identity_one_iteration(self, rng):
        b = rng.normal(size=7)
        res = cg_solve(lambda v: v, b)
        np.testing.assert_allclose(res.x, b)
        assert res.iterations == 1

    def test_krylov_exactness(self, rng):
        d = np.arange(1.0, 9.0)
        b = rng.normal(size=8)
        res = cg_solve(lambda v: d * v, b, tol=1e-12)
        assert res.iterations <= 8 + 1
        np.testing.assert_allclose(res.x, b / d, rtol=1e-10)

    @pytest.mark.parametrize("tol", [1e-6, 1e-9])
    def test_ski_operator_against_cholesky(self, rng, tol):
        spec = make_spec(1.0, 1.0, 0.1)
        X = rng.uniform(-10, 10, size=200)
        grid = RegularGrid.covering(X, m=100)
        W, K = ski_weights(X, grid), grid_kernel(grid, spec)
        A = W.toarray() @ kern_cross(spec, grid.points(), grid.points()) @ W.toarray().T + 0.1 * np.eye(200)
        b = rng.normal(size=200)
        res = cg_solve(lambda v: ski_apply(W, K, 0.1, v), b, tol=tol)
        assert rel_err(res.x, sla.cho_solve(sla.cho_factor(A), b)) <= 10 * tol

    def test_batched_matches_columns(self, rng):
        A = spd(rng, 12)
        B = rng.normal(size=(12, 3))
        res = cg_solve(lambda M: A @ M, B, tol=1e-12)
        np.testing.assert_allclose(res.x, np.linalg.solve(A, B), rtol=1e-9)

    def test_maxit_reports_residual(self, rng):
        A = spd(rng, 30) + np.diag(np.logspace(0, 6, 30))
        res = cg_solve(lambda v: A @ v, rng.normal(size=30), tol=1e-14, maxit=3)
        assert res.iterations == 3
        assert res.residual > 1e-14

    def test_breakdown(self):
        with pytest.raises(CGBreakdownError):
            cg_solve(lambda v: -v, np.ones(3))


class TestSkiPredict:
    def test_data_on_grid_matches_exact(self, rng):
        spec = make_spec(1.0, 1.0, 0.1)
        axis = np.linspace(-5, 5, 60)
        data = Dataset(axis, np.sin(axis) + 0.2 * rng.normal(size=60))
        grid = RegularGrid((axis,))
        Xs = np.linspace(-5, 5, 37)
        pred = ski_predict(data, grid, spec, Xs)
        ref = exact_predict(exact_fit(data, spec), Xs, full_cov=False)
        assert np.sqrt(np.mean((pred.mean - ref.mean) ** 2)) <= 5e-3

    def test_prior_reversion(self, rng):
        spec = make_spec(0.5, 1.3, 0.1)
        X = rng.uniform(-2, 2, size=30)
        data = Dataset(X, np.cos(X))
        grid = RegularGrid.covering(X, np.array([40.0]), m=400)
        pred = ski_predict(data, grid, spec, [40.0])
        assert abs(pred.mean[0]) < 1e-10
        assert pred.var[0] == pytest.approx(1.3, rel=1e-10)

    def test_toy_band_coverage(self):
        data, x_test, _ = gen_toy(100, 0)
        spec = make_spec(1.0, 1.0, 0.2)
        grid = RegularGrid.covering(data.X, x_test, m=40)
        pred = ski_predict(data, grid, spec, x_test)
        ref = exact_predict(exact_fit(data, spec), x_test, full_cov=False)
        half = 1.96 * np.sqrt(ref.var)
        inside = np.abs(pred.mean - ref.mean) <= half
        assert inside.mean() >= 0.9
        assert np.all(pred.var >= 0)


class TestSkiNlml:
    def test_noise_dominated(self, rng):
        spec = make_spec(1.0, 1e-3, 10.0)
        X = rng.uniform(-3, 3, size=50)
        data = Dataset(X, rng.normal(size=50))
        grid = RegularGrid.covering(X, m=30)
        limit = 0.5 * data.y @ data.y / 10.0 + 25 * np.log(10.0) + 25 * LOG_2PI
        assert ski_nlml_approx(data, grid, spec) == pytest.approx(limit, rel=0.01)

    def test_logdet_exact_on_grid(self):
        spec = make_spec(0.4, 1.0, 0.1)
        grid = RegularGrid((np.linspace(-2, 2, 50),))
        K = grid_kernel(grid, spec)
        dense = kern_cross(spec, grid.points(), grid.points()) + 0.1 * np.eye(50)
        ref = np.linalg.slogdet(dense)[1]
        assert ski_logdet_approx(50, K, 0.1) == pytest.approx(ref, rel=1e-6)

    def test_logdet_gap_is_reported(self, rng, capsys):
        spec = make_spec(1.0, 1.0, 0.1)
        X = rng.uniform(-5, 5, size=100)
        data = Dataset(X, np.sin(X))
        grid = RegularGrid.covering(X, m=50)
        model = ski_fit(data, grid, spec)
        W = model.W.toarray()
        dense = W @ kern_cross(spec, grid.points(), grid.points()) @ W.T + 0.1 * np.eye(100)
        ref = np.linalg.slogdet(dense)[1]
        approx = ski_logdet_approx(100, model.Kgrid, 0.1)
        print(f"SKI log-det n=100 m=50: approx {approx:.4f} dense {ref:.4f} gap {approx - ref:+.4f}")
        assert np.isfinite(approx)

    def test_kronecker_grid(self, rng):
        spec = make_spec([0.8, 1.2], 1.0, 0.1)
        X = rng.uniform(-1, 1, size=(30, 2))
        data = Dataset(X, np.sin(X).sum(axis=1))
        grid = RegularGrid.covering(X, m=8)
        assert isinstance(grid_kernel(grid, spec), KronOp)
        pred = ski_predict(data, grid, spec, X[:5])
        ref = exact_predict(exact_fit(data, spec), X[:5], full_cov=False)
        np.testing.assert_allclose(pred.mean, ref.mean, atol=0.05)
        assert np.isfinite(ski_nlml_approx(data, grid, spec))
