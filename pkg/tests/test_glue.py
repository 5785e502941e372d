import numpy as np
import pytest

from bhacs.acs import J0, constant_field
from bhacs.geometry import Grid
from bhacs.glue import (
    GlueError,
    GlueProfile,
    MollifierKernel,
    annulus_masks,
    cutoff_interpolate,
    glue,
    mollify_variable,
    periodic_distance,
    periodic_offsets,
    poincare_check,
    sample_multilinear,
    smoothstep,
)
from bhacs.topology import perturbation_seed


class TestProfile:
    def test_smoothstep(self):
        s = np.linspace(-1, 2, 301)
        v = smoothstep(s)
        assert v[s <= 0].max() == 0.0 and v[s >= 1].min() == 1.0
        assert np.all(np.diff(v) >= 0)
        assert smoothstep(np.array(0.5)) == pytest.approx(0.5)

    @pytest.mark.parametrize("j", [2, 3, 4])
    def test_admissible(self, j):
        prof = GlueProfile.build(j)
        assert prof.check_bounds() == []
        r = np.linspace(0, 1.5, 2001)
        assert np.all(prof.psi(r)[r <= prof.inner_radius] == 0.0)
        assert np.all(prof.psi(r)[r >= 1.0] == 1.0)
        lo = prof.inner_radius + prof.delta1 / j
        assert prof.rho(lo) == pytest.approx(prof.delta1 * prof.rho_bar)

    @pytest.mark.parametrize("j", [1, 5, 8])
    def test_inadmissible(self, j):
        with pytest.raises(ValueError, match="no admissible profile"):
            GlueProfile.build(j)

    def test_bad_j(self):
        with pytest.raises(ValueError):
            GlueProfile.build(2.5)

    def test_derivatives_match_differences(self):
        prof = GlueProfile.build(3)
        r = np.linspace(prof.inner_radius + 0.01, 0.99, 50)
        e = 1e-6
        assert np.allclose((prof.psi(r + e) - prof.psi(r - e)) / (2 * e), prof.psi_d1(r), atol=1e-5)
        assert np.allclose((prof.rho(r + e) - prof.rho(r - e)) / (2 * e), prof.rho_d1(r), atol=1e-6)


class TestKernel:
    def test_mass_and_symmetry(self):
        k = MollifierKernel()
        assert k.raw_mass == pytest.approx(1.0, abs=1e-3)
        assert k.weights.sum() == pytest.approx(1.0)
        # nodes come in +/- pairs with equal weights
        assert np.allclose(k.weights @ k.nodes, 0.0, atol=1e-15)

    def test_continuous_mass(self):
        # int_B phi = 2 pi^2 int_0^1 r^3 phi(r) dr = 1
        r = np.linspace(0, 1, 200001)
        f = 2 * np.pi**2 * r**3 * MollifierKernel.phi(r)
        assert np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(r)) == pytest.approx(1.0, rel=1e-8)


class TestHelpers:
    def test_periodic_distance(self):
        grid = Grid(8)
        d = periodic_distance(grid, (0, 0, 0, 0))
        assert d[0, 0, 0, 0] == 0.0 and d[7, 0, 0, 0] == pytest.approx(1 / 8)
        assert d.max() == pytest.approx(1.0)
        assert periodic_offsets(grid, (4, 4, 4, 4)).shape == grid.shape + (4,)

    def test_multilinear_exact_on_grid_and_linear(self):
        grid = Grid(8)
        rng = np.random.default_rng(0)
        F = rng.standard_normal(grid.shape + (2,))
        idx = rng.integers(0, 8, (20, 4))
        assert np.allclose(sample_multilinear(F, idx / 8), F[tuple(idx.T)])
        # an affine function of one coordinate away from the wrap point
        x = grid.coords(1) * np.ones(grid.shape)
        pts = rng.uniform(0.1, 0.8, (30, 4))
        assert np.allclose(sample_multilinear(x, pts), pts[:, 1])

    def test_scale_checked(self):
        J = constant_field(J0, 8)
        with pytest.raises(ValueError):
            cutoff_interpolate(J, J, GlueProfile.build(3), (4, 4, 4, 4), 0.6)

    def test_mollifier_preserves_affine(self):
        grid = Grid(16)
        prof = GlueProfile.build(3)
        center = (8, 8, 8, 8)
        # affine in x_2 near the center: radius at most 0.1, away from the wrap at 0
        f = (grid.coords(1) * np.ones(grid.shape))[..., None]
        out = mollify_variable(f, prof, MollifierKernel(), center, 0.4, grid,
                               radius=lambda d: np.where(d < 0.25, 0.15, 0.0))
        assert np.abs(out - f).max() < 1e-12

    def test_cutoff_copies(self):
        grid = Grid(16)
        prof = GlueProfile.build(3)
        a = perturbation_seed(grid, eps=0.1).values
        b = constant_field(J0, 16)
        M = cutoff_interpolate(a, b, prof, (8, 8, 8, 8), 0.4)
        inside, ring, outside, _ = annulus_masks(grid, prof, (8, 8, 8, 8), 0.4)
        assert np.array_equal(M[inside], b[inside]) and np.array_equal(M[outside], a[outside])


class TestGlue:
    def setup_method(self):
        self.grid = Grid(16)
        self.prof = GlueProfile.build(3)
        self.kernel = MollifierKernel()
        self.center = (8, 8, 8, 8)

    def test_identity(self):
        J = perturbation_seed(self.grid, eps=0.1).values
        res = glue(J, J, self.prof, self.kernel, self.center, 0.4)
        assert np.array_equal(res.J_glued.values, J)
        assert res.w14_distance == 0.0

    def test_incompatible_inputs(self):
        J = constant_field(J0, 16)
        with pytest.raises(GlueError) as err:
            glue(J, -J, self.prof, self.kernel, self.center, 0.4, closeness=10.0)
        assert err.value.worst_defect > 1.0

    def test_precondition(self):
        J = perturbation_seed(self.grid, eps=0.3).values
        with pytest.raises(GlueError, match="eps0"):
            glue(J, constant_field(J0, 16), self.prof, self.kernel, self.center, 0.4,
                 eps0=1e-6, closeness=1e-6)

    def test_poincare(self):
        J = perturbation_seed(self.grid, eps=0.3).values
        res = poincare_check(J, self.kernel, self.center, 0.3)
        assert 0 < res.ratio < 1.0
        const = poincare_check(constant_field(J0, 16), self.kernel, self.center, 0.3)
        assert const.lhs == pytest.approx(0.0, abs=1e-25)
