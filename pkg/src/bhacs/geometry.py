"""Periodic 4-torus grid, metrics and finite-difference operators.

Fields live on an ``n x n x n x n`` grid covering the unit torus; the first
four array axes are spatial, trailing axes carry the tensor indices.  An
endomorphism field therefore has shape ``(n, n, n, n, 4, 4)`` with
``J[..., i, j] = J^i_j``.

Stencils (fixed once, used everywhere):

* first derivative ``D0 f = (f(x+h) - f(x-h)) / 2h`` (centered);
* pure second derivative ``D+D- f = (f(x+h) - 2 f(x) + f(x-h)) / h^2``, Fourier
  symbol ``-(2/h)^2 sin^2(pi h k)``;
* mixed second derivative ``(D+_p D-_q + D-_p D+_q) / 2``.

The rough Laplacian of a constant metric is ``g^{pq}`` contracted with these
second differences, so it is exactly self-adjoint on periodic fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import combinations

import numpy as np

DIM = 4
SPATIAL = (0, 1, 2, 3)
# Independent components of a 2-form, in storage order.
PAIRS = tuple(combinations(range(DIM), 2))


class GridMismatchError(ValueError):
    pass


class UnsupportedConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n_per_axis: int

    def __post_init__(self):
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < 8:
            raise ValueError(f"n_per_axis must be an integer >= 8, got {self.n_per_axis}")

    @property
    def n(self) -> int:
        return self.n_per_axis

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_per_axis

    @property
    def shape(self) -> tuple:
        return (self.n_per_axis,) * DIM

    @property
    def point_count(self) -> int:
        return self.n_per_axis**DIM

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.n_per_axis) / self.n_per_axis

    def coords(self, axis: int) -> np.ndarray:
        """Coordinate ``x_axis`` broadcastable against the grid shape."""
        shape = [1] * DIM
        shape[axis] = self.n_per_axis
        return self.axis_coords().reshape(shape)

    def check(self, arr: np.ndarray, name: str = "field") -> None:
        if tuple(arr.shape[:DIM]) != self.shape:
            raise GridMismatchError(
                f"{name} has spatial shape {tuple(arr.shape[:DIM])}, grid expects {self.shape}"
            )

    @classmethod
    def of(cls, arr: np.ndarray) -> "Grid":
        shape = arr.shape[:DIM]
        if len(set(shape)) != 1:
            raise GridMismatchError(f"non-cubic spatial shape {shape}")
        return cls(int(shape[0]))


def _resolve_grid(grid: Grid | None, *arrays: np.ndarray) -> Grid:
    if grid is None:
        grid = Grid.of(arrays[0])
    for a in arrays:
        grid.check(a)
    return grid


@dataclass
class MetricField:
    """Riemannian metric ``g_ij`` on the grid.

    ``g`` is either one 4x4 matrix (constant metric, the supported case for
    every curvature-sensitive operation) or an array ``(n, n, n, n, 4, 4)``.
    """

    g: np.ndarray
    g_inv: np.ndarray = dc_field(init=False)
    christoffel: np.ndarray | None = dc_field(init=False)
    curvature_flag: bool = dc_field(init=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.shape[-2:] != (DIM, DIM) or g.ndim not in (2, DIM + 2):
            raise ValueError(f"metric must have shape (4, 4) or (n, n, n, n, 4, 4), got {g.shape}")
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-14, rtol=0):
            raise ValueError("metric is not symmetric")
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        lam = np.linalg.eigvalsh(g).min()
        if lam < 0.1:
            raise ValueError(f"metric smallest eigenvalue {lam:.3g} below 0.1")
        if g.ndim == DIM + 2 and np.ptp(g.reshape(-1, DIM, DIM), axis=0).max() == 0.0:
            g = g[(0,) * DIM].copy()
        self.g = g
        self.g_inv = np.linalg.inv(g)
        self.curvature_flag = g.ndim != 2
        self.christoffel = None if not self.curvature_flag else _christoffel(g, self.g_inv)

    @classmethod
    def flat(cls) -> "MetricField":
        return cls(np.eye(DIM))

    @property
    def is_constant(self) -> bool:
        return not self.curvature_flag

    @property
    def is_flat(self) -> bool:
        return self.is_constant and np.array_equal(self.g, np.eye(DIM))

    def sqrt_det(self) -> np.ndarray | float:
        d = np.sqrt(np.linalg.det(self.g))
        return float(d) if self.is_constant else d

    def volume_element(self, grid: Grid) -> np.ndarray | float:
        """``sqrt(det g) h^4`` per grid point."""
        return self.sqrt_det() * grid.spacing**DIM

    def frame(self) -> np.ndarray:
        """Matrix ``F`` with ``g^{-1} = F F^T`` (columns are a g-orthonormal frame)."""
        if not self.is_constant:
            raise UnsupportedConfigurationError("orthonormal frame only for constant metrics")
        L = np.linalg.cholesky(self.g)
        return np.linalg.inv(L).T

    def spec(self) -> str:
        if self.is_flat:
            return "flat"
        if self.is_constant:
            return ",".join(repr(float(v)) for v in self.g.ravel())
        return "pointwise"


_FLAT: list = []


def _metric(metric: MetricField | None) -> MetricField:
    """``metric`` or a shared flat metric (treated as read-only)."""
    if metric is not None:
        return metric
    if not _FLAT:
        _FLAT.append(MetricField.flat())
    return _FLAT[0]


def _christoffel(g: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """``Gamma[..., k, i, j] = Gamma^k_{ij}`` by centered differences of g."""
    h = 1.0 / g.shape[0]
    dg = np.stack([d_central(g, p, h) for p in SPATIAL], axis=-3)  # [..., p, i, j] = d_p g_ij
    # T_{l i j} = d_i g_jl + d_j g_il - d_l g_ij
    t = (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - np.einsum("...lij->...lij", dg)
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", g_inv, t)


# ---------------------------------------------------------------------------
# difference stencils


def _sl(axis: int, s: slice) -> tuple:
    return (slice(None),) * axis + (s,)


def _add_shifted(out: np.ndarray, f: np.ndarray, axis: int, shift: int) -> None:
    """``out += f(x + shift e_axis)`` on the periodic grid, without temporaries."""
    if shift == 1:
        out[_sl(axis, slice(None, -1))] += f[_sl(axis, slice(1, None))]
        out[_sl(axis, slice(-1, None))] += f[_sl(axis, slice(None, 1))]
    else:
        out[_sl(axis, slice(1, None))] += f[_sl(axis, slice(None, -1))]
        out[_sl(axis, slice(None, 1))] += f[_sl(axis, slice(-1, None))]


def d_central(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    np.subtract(f[_sl(axis, slice(2, None))], f[_sl(axis, slice(None, -2))], out=out[_sl(axis, slice(1, -1))])
    np.subtract(f[_sl(axis, slice(1, 2))], f[_sl(axis, slice(-1, None))], out=out[_sl(axis, slice(None, 1))])
    np.subtract(f[_sl(axis, slice(None, 1))], f[_sl(axis, slice(-2, -1))], out=out[_sl(axis, slice(-1, None))])
    out *= 1.0 / (2.0 * h)
    return out


def d_forward(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis) - f) / h


def d_backward(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (f - np.roll(f, 1, axis)) / h


def d2_pure(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = -2.0 * f
    _add_shifted(out, f, axis, 1)
    _add_shifted(out, f, axis, -1)
    out *= 1.0 / (h * h)
    return out


def flat_laplacian(f: np.ndarray, h: float, weights=(1.0, 1.0, 1.0, 1.0)) -> np.ndarray:
    """``sum_p w_p D+_p D-_p f``; the unit-weight case is accumulated in place."""
    if all(w == 1.0 for w in weights):
        out = -2.0 * DIM * np.asarray(f, dtype=float)
        for p in SPATIAL:
            _add_shifted(out, f, p, 1)
            _add_shifted(out, f, p, -1)
        out *= 1.0 / (h * h)
        return out
    out = np.zeros_like(f, dtype=float)
    for p in SPATIAL:
        if weights[p] != 0.0:
            out += weights[p] * d2_pure(f, p, h)
    return out


def d2_mixed(f: np.ndarray, p: int, q: int, h: float) -> np.ndarray:
    """``(D+_p D-_q + D-_p D+_q) f / 2``."""
    fp = np.roll(f, -1, p)
    fm = np.roll(f, 1, p)
    # h^2 D+_p D-_q f
    out = fp - np.roll(fp, 1, q)
    out += np.roll(f, 1, q)
    out -= f
    # h^2 D-_p D+_q f
    out += np.roll(f, -1, q)
    out -= f
    out -= np.roll(fm, -1, q)
    out += fm
    out /= 2.0 * h * h
    return out


# ---------------------------------------------------------------------------
# tensor operators


def covariant_derivative(field: np.ndarray, metric: MetricField | None = None,
                         grid: Grid | None = None) -> np.ndarray:
    """Levi-Civita derivative of an endomorphism field.

    Returns ``D`` with ``D[p] = nabla_p J`` (shape ``(4, n, n, n, n, 4, 4)``).
    """
    field = np.asarray(field)
    metric = _metric(metric)
    grid = _resolve_grid(grid, field)
    if metric.curvature_flag:
        grid.check(metric.g, "metric")
    h = grid.spacing
    out = np.stack([d_central(field, p, h) for p in SPATIAL])
    if metric.curvature_flag:
        gam = metric.christoffel
        for p in SPATIAL:
            gp = gam[..., :, p, :]  # Gamma^i_{pk}
            out[p] += gp @ field - field @ gp
    return out


def _nabla_of_rank3(D: np.ndarray, metric: MetricField, h: float) -> np.ndarray:
    """``H[p, q] = nabla_p (nabla J)_q`` for the curved (pointwise metric) case."""
    gam = metric.christoffel
    H = np.empty((DIM,) + D.shape, dtype=D.dtype)
    for p in SPATIAL:
        gp = gam[..., :, p, :]
        for q in SPATIAL:
            v = d_central(D[q], p, h)
            v += gp @ D[q] - D[q] @ gp
            v -= np.einsum("...r,r...ij->...ij", gam[..., :, p, q], D)
            H[p, q] = v
    return H


def rough_laplacian(field: np.ndarray, metric: MetricField | None = None,
                    grid: Grid | None = None) -> np.ndarray:
    """``g^{pq} nabla_p nabla_q`` applied to a tensor field (any trailing shape)."""
    field = np.asarray(field)
    metric = _metric(metric)
    grid = _resolve_grid(grid, field)
    h = grid.spacing
    if metric.curvature_flag:
        grid.check(metric.g, "metric")
        if field.shape[DIM:] != (DIM, DIM):
            raise UnsupportedConfigurationError("curved Laplacian only for endomorphism fields")
        H = _nabla_of_rank3(covariant_derivative(field, metric, grid), metric, h)
        return np.einsum("...pq,pq...ij->...ij", metric.g_inv, H)
    gi = metric.g_inv
    out = flat_laplacian(field, h, tuple(gi[p, p] for p in SPATIAL))
    for p, q in PAIRS:
        c = gi[p, q] + gi[q, p]
        if c != 0.0:
            out += c * d2_mixed(field, p, q, h)
    return out


def bi_laplacian(field: np.ndarray, metric: MetricField | None = None,
                 grid: Grid | None = None) -> np.ndarray:
    return rough_laplacian(rough_laplacian(field, metric, grid), metric, grid)


def laplacian_symbol(metric: MetricField | None, grid: Grid) -> np.ndarray:
    """Fourier multiplier of :func:`rough_laplacian` for a constant metric.

    Indexed like ``np.fft.fftn`` output over the four spatial axes.
    """
    metric = _metric(metric)
    if metric.curvature_flag:
        raise UnsupportedConfigurationError("symbol only defined for constant metrics")
    impulse = np.zeros(grid.shape)
    impulse[(0,) * DIM] = 1.0
    return np.fft.fftn(rough_laplacian(impulse, metric, grid)).real


def hessian_norm_sq(field: np.ndarray, metric: MetricField | None = None,
                    grid: Grid | None = None) -> np.ndarray:
    """Pointwise ``|nabla^2 J|^2`` with nested centered differences."""
    field = np.asarray(field)
    metric = _metric(metric)
    grid = _resolve_grid(grid, field)
    h = grid.spacing
    if metric.curvature_flag:
        H = _nabla_of_rank3(covariant_derivative(field, metric, grid), metric, h)
        gi = metric.g_inv
        return np.einsum("...pa,...qb,pq...ij,ab...kl,...ik,...jl->...",
                         gi, gi, H, H, metric.g, gi, optimize=True)
    F = metric.frame()
    jf = to_frame(field, metric)
    dirs = [sum(F[p, a] * d_central(jf, p, h) for p in SPATIAL if F[p, a] != 0.0)
            for a in SPATIAL]
    out = np.zeros(grid.shape)
    # constant-coefficient differences commute, so the Hessian is symmetric in (a, b)
    for a in SPATIAL:
        for b in SPATIAL[a:]:
            v = sum(F[p, a] * d_central(dirs[b], p, h) for p in SPATIAL if F[p, a] != 0.0)
            out += (1.0 if a == b else 2.0) * np.einsum("...ij,...ij->...", v, v)
    return out


def gradient_norm_sq(field: np.ndarray, metric: MetricField | None = None,
                     grid: Grid | None = None, D: np.ndarray | None = None) -> np.ndarray:
    """Pointwise ``|nabla J|^2 = g^{pq} (nabla_p J, nabla_q J)``."""
    metric = _metric(metric)
    if D is None:
        D = covariant_derivative(field, metric, grid)
    if metric.is_flat:
        return np.einsum("p...ij,p...ij->...", D, D)
    gi = metric.g_inv
    out = 0.0
    for p in SPATIAL:
        for q in SPATIAL:
            c = gi[..., p, q]
            if np.ndim(c) == 0 and c == 0.0:
                continue
            out = out + c * pair(D[p], D[q], metric)
    return out


# ---------------------------------------------------------------------------
# pointwise algebra with the metric


def to_frame(A: np.ndarray, metric: MetricField) -> np.ndarray:
    """Express an endomorphism in a g-orthonormal frame, ``L^T A L^{-T}`` with ``g = L L^T``.

    The Frobenius norm in the frame equals ``|A|_g``.
    """
    if metric.is_flat:
        return A
    L = np.linalg.cholesky(metric.g)
    return L.T @ A @ np.linalg.inv(L).T


def from_frame(A: np.ndarray, metric: MetricField) -> np.ndarray:
    if metric.is_flat:
        return A
    L = np.linalg.cholesky(metric.g)
    return np.linalg.inv(L).T @ A @ L.T


def pair(A: np.ndarray, B: np.ndarray, metric: MetricField | None = None) -> np.ndarray:
    """Pointwise ``(A, B) = A^i_j B^k_l g_ik g^jl``."""
    metric = _metric(metric)
    if metric.is_flat:
        return np.einsum("...ij,...ij->...", A, B)
    return np.einsum("...ij,...ik,...kl,...jl->...", A, metric.g, B, metric.g_inv, optimize=True)


def norm_sq(A: np.ndarray, metric: MetricField | None = None) -> np.ndarray:
    return pair(A, A, metric)


def inner(A: np.ndarray, B: np.ndarray, metric: MetricField | None = None,
          grid: Grid | None = None) -> float:
    """Grid inner product ``sum (A, B) dv``."""
    metric = _metric(metric)
    grid = _resolve_grid(grid, A, B)
    return float(np.sum(pair(A, B, metric) * metric.volume_element(grid)))


def l2_norm(A: np.ndarray, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    return float(np.sqrt(max(inner(A, A, metric, grid), 0.0)))


# ---------------------------------------------------------------------------
# differential forms (flat metric)


@dataclass
class TwoFormField:
    """Antisymmetric 2-form stored as its 6 components ``omega_{ab}``, ``a < b``."""

    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape[-1] != len(PAIRS):
            raise ValueError("two-form needs 6 trailing components")

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "TwoFormField":
        return cls(np.stack([0.5 * (m[..., a, b] - m[..., b, a]) for a, b in PAIRS], axis=-1))

    def matrix(self) -> np.ndarray:
        c = self.components
        m = np.zeros(c.shape[:-1] + (DIM, DIM))
        for k, (a, b) in enumerate(PAIRS):
            m[..., a, b] = c[..., k]
            m[..., b, a] = -c[..., k]
        return m


@dataclass
class HodgeResult:
    d_omega: np.ndarray       # full antisymmetric 3-form, shape (..., 4, 4, 4)
    dstar_omega: np.ndarray   # 1-form, shape (..., 4)
    delta_d_omega: TwoFormField


def d_one_form(alpha: np.ndarray, h: float) -> np.ndarray:
    """``(d alpha)_{ab} = D+_a alpha_b - D+_b alpha_a`` as a full antisymmetric array."""
    D = np.stack([d_forward(alpha, p, h) for p in SPATIAL], axis=-2)  # [..., a, b] = D+_a alpha_b
    return D - np.swapaxes(D, -1, -2)


def d_two_form(w: np.ndarray, h: float) -> np.ndarray:
    """``(d w)_{abc} = D+_a w_bc + D+_b w_ca + D+_c w_ab``; ``w`` full antisymmetric."""
    D = np.stack([d_forward(w, p, h) for p in SPATIAL], axis=-3)  # [..., a, b, c] = D+_a w_bc
    return D + np.einsum("...bca->...abc", D) + np.einsum("...cab->...abc", D)


def codiff_two_form(w: np.ndarray, h: float) -> np.ndarray:
    """``(d* w)_b = -sum_a D-_a w_ab``."""
    return -sum(d_backward(w[..., a, :], a, h) for a in SPATIAL)


def codiff_three_form(t: np.ndarray, h: float) -> np.ndarray:
    """``(d* t)_{bc} = -sum_a D-_a t_abc``."""
    return -sum(d_backward(t[..., a, :, :], a, h) for a in SPATIAL)


def codiff_one_form(alpha: np.ndarray, h: float) -> np.ndarray:
    return -sum(d_backward(alpha[..., a], a, h) for a in SPATIAL)


def hodge_operators(omega: TwoFormField, metric: MetricField | None = None,
                    grid: Grid | None = None) -> HodgeResult:
    """``d``, ``d*`` and ``Delta_d = d d* + d* d`` of a 2-form on the flat torus.

    ``d`` uses forward differences and ``d*`` its exact adjoint (backward
    differences), so ``Delta_d`` equals minus the compact rough Laplacian
    componentwise.
    """
    metric = _metric(metric)
    if not metric.is_flat:
        raise UnsupportedConfigurationError("Hodge operators are implemented for the flat metric only")
    w = omega.matrix()
    grid = _resolve_grid(grid, w)
    h = grid.spacing
    dw = d_two_form(w, h)
    dsw = codiff_two_form(w, h)
    lap = codiff_three_form(dw, h) + d_one_form(dsw, h)
    return HodgeResult(dw, dsw, TwoFormField.from_matrix(lap))
