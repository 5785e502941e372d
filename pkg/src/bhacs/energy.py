"""Biharmonic energy, its constrained gradient and Euler-Lagrange residuals.

Norm convention: ``|A|^2 = g_ik g^jl A^i_j A^k_l`` for endomorphisms, with
derivative indices contracted by ``g^{pq}``.  Integrals are grid sums
weighted by ``sqrt(det g) h^4``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .acs import tangent_project
from .geometry import (
    DIM,
    SPATIAL,
    Grid,
    MetricField,
    TwoFormField,
    UnsupportedConfigurationError,
    _metric,
    _resolve_grid,
    bi_laplacian,
    d_central,
    gradient_norm_sq,
    hessian_norm_sq,
    hodge_operators,
    inner,
    l2_norm,
    norm_sq,
    rough_laplacian,
)


@dataclass
class EnergyReport:
    e1: float
    e2: float
    density_mu: np.ndarray | None
    density_xi: np.ndarray | None
    residual_commutator: float
    residual_strong: float = float("nan")
    residual_weak_max: float = float("nan")


def _prepare(J, metric, grid):
    J = np.asarray(J, dtype=float)
    metric = _metric(metric)
    grid = _resolve_grid(grid, J)
    return J, metric, grid


def _require_constant(metric: MetricField, what: str) -> None:
    if metric.curvature_flag:
        raise UnsupportedConfigurationError(f"{what} needs a constant metric")


def frame_derivatives(X: np.ndarray, metric: MetricField, grid: Grid) -> list:
    """Centered derivatives along a g-orthonormal frame; ``sum_a D_a X D_a Y = g^{pq} D_p X D_q Y``."""
    h = grid.spacing
    if metric.is_flat:
        return [d_central(X, p, h) for p in SPATIAL]
    F = metric.frame()
    D = [d_central(X, p, h) for p in SPATIAL]
    return [sum(F[p, a] * D[p] for p in SPATIAL) for a in SPATIAL]


def energy_e2_value(J, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """``sum |Delta J|^2 dv`` without the diagnostic densities."""
    J, metric, grid = _prepare(J, metric, grid)
    lap = rough_laplacian(J, metric, grid)
    return float(np.sum(norm_sq(lap, metric) * metric.volume_element(grid)))


def energy_e1(J, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    J, metric, grid = _prepare(J, metric, grid)
    return float(np.sum(gradient_norm_sq(J, metric, grid) * metric.volume_element(grid)))


def density_mu(J, metric: MetricField | None = None, grid: Grid | None = None) -> np.ndarray:
    """Pointwise ``|nabla^2 J|^2 + |nabla J|^4``."""
    J, metric, grid = _prepare(J, metric, grid)
    g2 = gradient_norm_sq(J, metric, grid)
    return hessian_norm_sq(J, metric, grid) + g2 * g2


def energy_e2(J, metric: MetricField | None = None, grid: Grid | None = None,
              residuals: bool = True, tests: Iterable | None = None,
              densities: bool = True) -> EnergyReport:
    """Evaluate ``E_2 = sum |Delta J|^2 dv`` with densities and residual diagnostics.

    ``tests`` is the battery for :func:`residual_weak`; the default battery is
    used when ``None``.  With ``residuals=False`` only the commutator residual
    is computed.
    """
    J, metric, grid = _prepare(J, metric, grid)
    dv = metric.volume_element(grid)
    lap = rough_laplacian(J, metric, grid)
    xi = norm_sq(lap, metric)
    e2 = float(np.sum(xi * dv))
    g2 = gradient_norm_sq(J, metric, grid)
    e1 = float(np.sum(g2 * dv))
    mu = hessian_norm_sq(J, metric, grid) + g2 * g2 if densities else None
    bil = rough_laplacian(lap, metric, grid)
    comm = l2_norm(bil + J @ bil @ J, metric, grid)
    report = EnergyReport(e1, e2, mu, xi if densities else None, comm)
    if residuals:
        report.residual_strong = residual_strong(J, metric, grid, lap, bil)
        report.residual_weak_max = float(weak_residuals(
            J, metric, tests if tests is not None else TestBattery(grid), grid, lap).max())
    return report


def gradient_e2(J, metric: MetricField | None = None, grid: Grid | None = None,
                bilap: np.ndarray | None = None) -> np.ndarray:
    """Riesz representative of ``dE_2`` on the tangent space, for the Cayley retraction.

    Along ``t -> retract_cayley(J, S, t)`` the velocity is ``2 J S``, so
    ``d/dt E_2 = 4 (Delta^2 J, J S) = (G, S)`` with
    ``G = P(-4 J Delta^2 J) = -2 J P(2 Delta^2 J)``, ``P`` the tangent projection.
    """
    J, metric, grid = _prepare(J, metric, grid)
    _require_constant(metric, "gradient_e2")
    if bilap is None:
        bilap = bi_laplacian(J, metric, grid)
    return tangent_project(J, -4.0 * (J @ bilap), metric)


def residual_commutator(J, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """L2 norm of ``Delta^2 J + J (Delta^2 J) J``."""
    J, metric, grid = _prepare(J, metric, grid)
    bil = bi_laplacian(J, metric, grid)
    return l2_norm(bil + J @ bil @ J, metric, grid)


def lower_order_q(J, metric: MetricField | None = None, grid: Grid | None = None,
                  lap: np.ndarray | None = None) -> np.ndarray:
    """``Q = J dJ dJ + J d_pJ d_p dJ + J d_p dJ d_pJ + J Delta(d_pJ d_pJ)`` (d = Delta)."""
    J, metric, grid = _prepare(J, metric, grid)
    _require_constant(metric, "residual_strong")
    if lap is None:
        lap = rough_laplacian(J, metric, grid)
    DJ = frame_derivatives(J, metric, grid)
    DL = frame_derivatives(lap, metric, grid)
    inner_sum = np.zeros_like(J)
    mixed = np.zeros_like(J)
    for a in range(DIM):
        inner_sum += DJ[a] @ DJ[a]
        mixed += DJ[a] @ DL[a] + DL[a] @ DJ[a]
    del DL
    inner_lap = rough_laplacian(inner_sum, metric, grid)
    return J @ (lap @ lap + mixed + inner_lap)


def strong_residual_field(J, metric: MetricField | None = None, grid: Grid | None = None,
                          lap: np.ndarray | None = None, bil: np.ndarray | None = None) -> np.ndarray:
    J, metric, grid = _prepare(J, metric, grid)
    if lap is None:
        lap = rough_laplacian(J, metric, grid)
    if bil is None:
        bil = rough_laplacian(lap, metric, grid)
    return bil - lower_order_q(J, metric, grid, lap=lap)


def residual_strong(J, metric: MetricField | None = None, grid: Grid | None = None,
                    lap: np.ndarray | None = None, bil: np.ndarray | None = None) -> float:
    """L2 norm of ``Delta^2 J - Q(J, dJ, d^2J, d^3J)``."""
    J, metric, grid = _prepare(J, metric, grid)
    return l2_norm(strong_residual_field(J, metric, grid, lap, bil), metric, grid)


def strong_commutator_gap(J, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """L2 norm of ``(Delta^2 J - Q) - (Delta^2 J + J Delta^2 J J) / 2``; zero in the continuum."""
    J, metric, grid = _prepare(J, metric, grid)
    bil = bi_laplacian(J, metric, grid)
    gap = 0.5 * (bil - J @ bil @ J) - lower_order_q(J, metric, grid)
    return l2_norm(gap, metric, grid)


# ---------------------------------------------------------------------------
# weak forms


class TestBattery:
    """Deterministic random smooth test fields.

    Each field is ``Re sum_k c_k exp(2 pi i k.x)`` over wave vectors with
    components in ``{-1, 0, 1}`` (the lowest three modes per axis).  Fields
    are generated on demand so large grids do not hold the whole battery.
    """

    __test__ = False  # not a pytest class

    def __init__(self, grid: Grid, count: int = 32, seed: int = 20190801, max_mode: int = 1):
        self.grid = grid
        self.count = count
        self.max_mode = max_mode
        rng = np.random.default_rng(seed)
        m = 2 * max_mode + 1
        shape = (count,) + (m,) * DIM + (DIM, DIM)
        self._coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        self._coef /= m**DIM

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> np.ndarray:
        if not 0 <= i < self.count:
            raise IndexError(i)
        ks = np.arange(-self.max_mode, self.max_mode + 1)
        x = self.grid.axis_coords()
        waves = np.exp(2j * np.pi * np.outer(ks, x))  # (m, n)
        c = self._coef[i]
        # contract one axis at a time: c[k1,k2,k3,k4,...] -> field[x1,x2,x3,x4,...]
        for _ in range(DIM):
            c = np.tensordot(waves, c, axes=([0], [DIM - 1]))
        # each pass consumes the last wave axis and prepends its x axis
        return c.real.copy()

    def __iter__(self):
        for i in range(self.count):
            yield self[i]

    def pairings(self, R: np.ndarray) -> np.ndarray:
        """Flat-metric ``(R, T_i)`` for every test field, from one FFT of ``R``."""
        n = self.grid.n
        F = np.fft.fftn(R, axes=tuple(range(DIM)))
        idx = np.arange(-self.max_mode, self.max_mode + 1)
        # sum_x R(x) exp(+2 pi i k.x) sits at FFT index -k
        sub = F[np.ix_(*([(-idx) % n] * DIM))]
        total = np.einsum("cabdeij,abdeij->c", self._coef, sub)
        return total.real * self.grid.spacing**DIM

    def w22_norm(self, i: int) -> float:
        """Exact ``W^{2,2}`` norm (flat unit torus) of test field ``i`` from its Fourier coefficients."""
        c = self._coef[i]
        flipped = np.conj(c[(slice(None, None, -1),) * DIM])
        a2 = np.sum(np.abs(0.5 * (c + flipped)) ** 2, axis=(-1, -2))
        ks = np.arange(-self.max_mode, self.max_mode + 1)
        k2 = sum(np.meshgrid(*([(2.0 * np.pi * ks) ** 2] * DIM), indexing="ij"))
        return float(np.sqrt(np.sum(a2 * (1.0 + k2 + k2 * k2))))


def sobolev_w22_norm(T: np.ndarray, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    T, metric, grid = _prepare(T, metric, grid)
    dens = norm_sq(T, metric) + gradient_norm_sq(T, metric, grid) + hessian_norm_sq(T, metric, grid)
    return float(np.sqrt(np.sum(dens * metric.volume_element(grid))))


def weak_form_103(J, T: np.ndarray, metric: MetricField | None = None, grid: Grid | None = None,
                  lap: np.ndarray | None = None, DJ: list | None = None) -> float:
    """``(dJ, dT J - J dT) + 2 (dJ, d_pT d_pJ - d_pJ d_pT)`` integrated (d = Delta)."""
    J, metric, grid = _prepare(J, metric, grid)
    _require_constant(metric, "residual_weak")
    if lap is None:
        lap = rough_laplacian(J, metric, grid)
    if DJ is None:
        DJ = frame_derivatives(J, metric, grid)
    LT = rough_laplacian(T, metric, grid)
    integrand = LT @ J - J @ LT
    for a, DT in enumerate(frame_derivatives(T, metric, grid)):
        integrand += 2.0 * (DT @ DJ[a] - DJ[a] @ DT)
    return inner(lap, integrand, metric, grid)


def first_variation(J, T: np.ndarray, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """Exact discrete pairing ``(Delta J, Delta(T J - J T))``."""
    J, metric, grid = _prepare(J, metric, grid)
    return inner(rough_laplacian(J, metric, grid), rough_laplacian(T @ J - J @ T, metric, grid), metric, grid)


def weak_dual_103(J, metric: MetricField | None = None, grid: Grid | None = None,
                  lap: np.ndarray | None = None) -> np.ndarray:
    """Field ``R`` with ``weak_form_103(J, T) = (R, T)`` for every ``T`` (flat metric).

    Uses that the discrete Laplacian is self-adjoint and centered differences are skew.
    """
    J, metric, grid = _prepare(J, metric, grid)
    if not metric.is_flat:
        raise UnsupportedConfigurationError("weak_dual_103 needs the flat metric")
    h = grid.spacing
    if lap is None:
        lap = rough_laplacian(J, metric, grid)
    Jt = np.swapaxes(J, -1, -2)
    R = rough_laplacian(lap @ Jt - Jt @ lap, metric, grid)
    for p in SPATIAL:
        Dt = np.swapaxes(d_central(J, p, h), -1, -2)
        R -= 2.0 * d_central(lap @ Dt - Dt @ lap, p, h)
    return R


def weak_residuals(J, metric: MetricField | None = None, tests: Iterable | None = None,
                   grid: Grid | None = None, lap: np.ndarray | None = None) -> np.ndarray:
    """Normalized weak defects ``|weak_form_103(J, T)| / |T|_{W^{2,2}}`` over the tests.

    A :class:`TestBattery` supplies the exact norm of its fields; other tests
    are normalized by the discrete norm.
    """
    J, metric, grid = _prepare(J, metric, grid)
    if tests is None:
        tests = TestBattery(grid)
    if lap is None:
        lap = rough_laplacian(J, metric, grid)
    if metric.is_flat:
        R = weak_dual_103(J, metric, grid, lap)
        DJ = None
    else:
        R = None
        DJ = frame_derivatives(J, metric, grid)
    exact = isinstance(tests, TestBattery) and metric.is_flat
    if exact:
        norms = np.array([tests.w22_norm(i) for i in range(len(tests))])
        if not len(norms):
            raise ValueError("residual_weak needs a nonempty test battery")
        return np.abs(tests.pairings(R)) / norms
    out = []
    for T in tests:
        T = np.asarray(T, dtype=float)
        if R is not None:
            w = inner(R, T, metric, grid)
        else:
            w = weak_form_103(J, T, metric, grid, lap=lap, DJ=DJ)
        out.append(abs(w) / sobolev_w22_norm(T, metric, grid))
    if not out:
        raise ValueError("residual_weak needs a nonempty test battery")
    return np.array(out)


def residual_weak(J, metric: MetricField | None = None, tests: Iterable | None = None,
                  grid: Grid | None = None) -> float:
    """Max over tests of the normalized weak Euler-Lagrange defect."""
    return float(weak_residuals(J, metric, tests, grid).max())


def weak_form_el1(J, T: np.ndarray, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """``(dJ - J d_pJ d_pJ, dT) + (A, T) + (B_p, d_pT)`` with

    ``A = J dJ dJ + d_pJ d_pJ dJ - dJ d_pJ d_pJ + d_pJ dJ d_pJ`` and
    ``B_p = d_pJ dJ J + J dJ d_pJ`` (d = Delta, d_p = nabla_p).
    In the continuum this equals ``(Delta J, Delta(T + J T J)) / 2``.
    """
    J, metric, grid = _prepare(J, metric, grid)
    _require_constant(metric, "weak_form_el1")
    lap = rough_laplacian(J, metric, grid)
    DJ = frame_derivatives(J, metric, grid)
    DT = frame_derivatives(T, metric, grid)
    sq = sum(D @ D for D in DJ)
    total = inner(lap - J @ sq, rough_laplacian(T, metric, grid), metric, grid)
    A = J @ lap @ lap + sq @ lap - lap @ sq + sum(D @ lap @ D for D in DJ)
    total += inner(A, T, metric, grid)
    for a in range(DIM):
        B = DJ[a] @ lap @ J + J @ lap @ DJ[a]
        total += inner(B, DT[a], metric, grid)
    return total


def weak_form_101(J, T: np.ndarray, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """Exact discrete pairing ``(Delta J, Delta(T + J T J)) / 2``."""
    J, metric, grid = _prepare(J, metric, grid)
    return 0.5 * inner(rough_laplacian(J, metric, grid), rough_laplacian(T + J @ T @ J, metric, grid),
                       metric, grid)


# ---------------------------------------------------------------------------
# almost symplectic energies (flat torus)


def lower_index(J, metric: MetricField | None = None) -> np.ndarray:
    """``omega_ab = g(J e_a, e_b) = (J^T g)_ab``."""
    metric = _metric(metric)
    return np.swapaxes(np.asarray(J), -1, -2) @ metric.g


def _two_form_of(J, metric: MetricField) -> TwoFormField:
    if not metric.is_flat:
        raise UnsupportedConfigurationError("almost symplectic energies need the flat metric")
    return TwoFormField.from_matrix(lower_index(J, metric))


def energy_symplectic(J, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """``sum |Delta_d omega|^2 dv`` with ``omega = g(J., .)`` (full tensor norm)."""
    J, metric, grid = _prepare(J, metric, grid)
    omega = _two_form_of(J, metric)
    lap = hodge_operators(omega, metric, grid).delta_d_omega.matrix()
    return float(np.sum(lap * lap) * metric.volume_element(grid))


def energy_symplectic_first(J, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """``sum (|d omega|^2 + |d* omega|^2) dv`` (full tensor norms)."""
    J, metric, grid = _prepare(J, metric, grid)
    res = hodge_operators(_two_form_of(J, metric), metric, grid)
    return float((np.sum(res.d_omega**2) + np.sum(res.dstar_omega**2)) * metric.volume_element(grid))
