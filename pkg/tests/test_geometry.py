import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhacs.geometry import (
    Grid,
    GridMismatchError,
    MetricField,
    TwoFormField,
    UnsupportedConfigurationError,
    bi_laplacian,
    covariant_derivative,
    d_central,
    from_frame,
    gradient_norm_sq,
    hessian_norm_sq,
    hodge_operators,
    inner,
    l2_norm,
    laplacian_symbol,
    norm_sq,
    pair,
    rough_laplacian,
    to_frame,
)


def plane_wave(grid, k):
    x = np.stack(np.meshgrid(*([grid.axis_coords()] * 4), indexing="ij"), axis=-1)
    return np.exp(2j * np.pi * (x @ np.asarray(k, dtype=float)))


def spd(seed, spread=0.5):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4))
    return np.eye(4) + spread * (A @ A.T) / 4


def symbols(k, h):
    """Forward, backward and centered difference symbols for wave numbers ``k``."""
    th = 2 * np.pi * np.asarray(k, dtype=float) * h
    Dp = (np.exp(1j * th) - 1) / h
    Dm = (1 - np.exp(-1j * th)) / h
    D0 = 1j * np.sin(th) / h
    return Dp, Dm, D0


class TestGrid:
    def test_properties(self):
        g = Grid(8)
        assert g.n == 8 and g.spacing == 0.125 and g.shape == (8,) * 4 and g.point_count == 8**4
        assert g.coords(2).shape == (1, 1, 8, 1)

    @pytest.mark.parametrize("n", [0, 4, 7, 8.5])
    def test_rejects_small_or_fractional(self, n):
        with pytest.raises(ValueError):
            Grid(n)

    def test_mismatch(self):
        with pytest.raises(GridMismatchError):
            Grid(8).check(np.zeros((8, 8, 8, 9)))
        with pytest.raises(GridMismatchError):
            Grid.of(np.zeros((8, 8, 8, 10)))


class TestMetric:
    def test_rejects_asymmetric(self):
        g = np.eye(4)
        g[0, 1] = 0.1
        with pytest.raises(ValueError, match="symmetric"):
            MetricField(g)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError, match="eigenvalue"):
            MetricField(np.diag([1, 1, 1, 0.01]))

    def test_uniform_pointwise_collapses(self):
        g = np.broadcast_to(spd(1), (8,) * 4 + (4, 4))
        m = MetricField(g)
        assert m.is_constant and m.g.shape == (4, 4)

    def test_frame(self):
        m = MetricField(spd(2))
        F = m.frame()
        assert np.allclose(F @ F.T, m.g_inv, atol=1e-13)


class TestDifferences:
    def test_central_symbol(self):
        grid = Grid(8)
        k = (1, 0, 2, 3)
        f = plane_wave(grid, k)
        _, _, D0 = symbols(k, grid.spacing)
        for p in range(4):
            got = d_central(f.real, p, grid.spacing) + 1j * d_central(f.imag, p, grid.spacing)
            assert np.allclose(got, D0[p] * f, atol=1e-12)

    @pytest.mark.parametrize("metric_seed", [None, 3])
    def test_laplacian_symbol(self, metric_seed):
        grid = Grid(8)
        metric = MetricField.flat() if metric_seed is None else MetricField(spd(metric_seed))
        gi = metric.g_inv
        k = (1, -2, 0, 3)
        Dp, Dm, _ = symbols(k, grid.spacing)
        expected = sum(gi[p, q] * (Dp[p] * Dm[q] + Dm[p] * Dp[q]) / 2 for p in range(4) for q in range(4))
        f = plane_wave(grid, k)
        got = rough_laplacian(f.real, metric) + 1j * rough_laplacian(f.imag, metric)
        assert np.allclose(got, expected * f, atol=1e-9 * abs(expected))

    def test_flat_symbol_closed_form(self):
        grid = Grid(8)
        sym = laplacian_symbol(None, grid)
        k = np.fft.fftfreq(8, 1 / 8)
        K = np.meshgrid(*([k] * 4), indexing="ij")
        expected = -sum((2 / grid.spacing) ** 2 * np.sin(np.pi * grid.spacing * kk) ** 2 for kk in K)
        assert np.allclose(sym, expected, atol=1e-9)

    def test_second_order_accuracy(self):
        errs = []
        for n in (8, 16, 32):
            grid = Grid(n)
            f = np.sin(2 * np.pi * grid.coords(0)) * np.cos(2 * np.pi * grid.coords(3)) * np.ones(grid.shape)
            lap = rough_laplacian(f)
            errs.append(np.abs(lap + 8 * np.pi**2 * f).max())
        assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5

    def test_bilaplacian_of_constant(self):
        J = np.broadcast_to(np.arange(16.0).reshape(4, 4), (8,) * 4 + (4, 4)).copy()
        assert np.abs(bi_laplacian(J)).max() == 0.0


class TestNorms:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_frame_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        m = MetricField(spd(seed))
        A = rng.standard_normal((5, 4, 4))
        assert np.allclose(from_frame(to_frame(A, m), m), A, atol=1e-12)
        # the metric pairing becomes the Frobenius pairing in the frame
        B = rng.standard_normal((5, 4, 4))
        frob = np.einsum("...ij,...ij->...", to_frame(A, m), to_frame(B, m))
        assert np.allclose(pair(A, B, m), frob, atol=1e-11)

    def test_pair_symmetric_and_positive(self):
        rng = np.random.default_rng(0)
        m = MetricField(spd(4))
        A, B = rng.standard_normal((2, 10, 4, 4))
        assert np.allclose(pair(A, B, m), pair(B, A, m))
        assert np.all(norm_sq(A, m) > 0)

    def test_integrals(self):
        grid = Grid(8)
        A = np.ones(grid.shape + (4, 4))
        assert inner(A, A) == pytest.approx(16.0)
        assert l2_norm(A) == pytest.approx(4.0)

    def test_gradient_and_hessian_norms(self):
        grid = Grid(8)
        h = grid.spacing
        rng = np.random.default_rng(1)
        J = rng.standard_normal(grid.shape + (4, 4))
        D = [(np.roll(J, -1, p) - np.roll(J, 1, p)) / (2 * h) for p in range(4)]
        g2 = sum((Dp**2).sum((-1, -2)) for Dp in D)
        assert np.allclose(gradient_norm_sq(J), g2)
        H = sum((((np.roll(D[b], -1, a) - np.roll(D[b], 1, a)) / (2 * h)) ** 2).sum((-1, -2))
                for a in range(4) for b in range(4))
        assert np.allclose(hessian_norm_sq(J), H)

    def test_curved_rejected_where_unsupported(self):
        grid = Grid(8)
        x = grid.coords(0)
        g = np.broadcast_to(np.eye(4), grid.shape + (4, 4)).copy()
        g[..., 0, 0] = 1.0 + 0.2 * np.sin(2 * np.pi * x)[..., 0, 0] * np.ones(grid.shape)
        m = MetricField(g)
        assert m.curvature_flag
        with pytest.raises(UnsupportedConfigurationError):
            laplacian_symbol(m, grid)
        ident = np.broadcast_to(np.eye(4), grid.shape + (4, 4)).copy()
        assert np.abs(covariant_derivative(ident, m)).max() < 1e-12
        assert np.abs(rough_laplacian(ident, m)).max() < 1e-9


class TestHodge:
    def test_two_form_round_trip(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 4, 4))
        m = m - np.swapaxes(m, -1, -2)
        assert np.allclose(TwoFormField.from_matrix(m).matrix(), m)

    def test_hodge_laplacian_is_minus_rough_laplacian(self):
        rng = np.random.default_rng(2)
        grid = Grid(8)
        m = rng.standard_normal(grid.shape + (4, 4))
        omega = TwoFormField.from_matrix(m)
        res = hodge_operators(omega)
        lap = rough_laplacian(omega.components)
        assert np.allclose(res.delta_d_omega.components, -lap, atol=1e-9 * np.abs(lap).max())

    def test_curved_rejected(self):
        with pytest.raises(UnsupportedConfigurationError):
            hodge_operators(TwoFormField(np.zeros((8,) * 4 + (6,))), MetricField(spd(1)))
