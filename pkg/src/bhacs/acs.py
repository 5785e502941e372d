"""Metric-compatible almost complex structures: validation, tangent space, retractions."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import DIM, MetricField, UnsupportedConfigurationError, _metric, from_frame, to_frame

logger = logging.getLogger(__name__)

EYE = np.eye(DIM)
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])
# Standard structure block-diag(rot90, rot90); equals left multiplication by i
# on R^4 = H with basis (1, i, j, k).
J0 = np.kron(np.eye(2), ROT90)


class ConstraintViolationError(ValueError):
    pass


class DegenerateProjectionError(ValueError):
    def __init__(self, message: str, worst_point: tuple, worst_value: float):
        super().__init__(message)
        self.worst_point = worst_point
        self.worst_value = worst_value


class StepTooLargeError(ValueError):
    pass


@dataclass
class CompatibleJField:
    """An endomorphism field that passed :func:`validate`."""

    values: np.ndarray
    square_violation: float
    skew_violation: float
    isometry_violation: float

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def max_violation(self) -> float:
        return max(self.square_violation, self.skew_violation, self.isometry_violation)


def g_adjoint(A: np.ndarray, metric: MetricField | None = None) -> np.ndarray:
    """Adjoint with respect to g: ``g^{-1} A^T g``."""
    At = np.swapaxes(A, -1, -2)
    metric = _metric(metric)
    if metric.is_flat:
        return At
    return metric.g_inv @ At @ metric.g


def constraint_residuals(J: np.ndarray, metric: MetricField | None = None):
    """Pointwise Frobenius norms of ``J^2 + id``, ``g J + J^T g`` and ``J^T g J - g``."""
    metric = _metric(metric)
    J = np.asarray(J)
    g = metric.g
    Jt = np.ascontiguousarray(np.swapaxes(J, -1, -2))  # matmul is much slower on strided views
    if metric.is_flat:
        sq = _frob(J @ J + EYE)
        skew = _frob(J + Jt)
        iso = _frob(Jt @ J - EYE)
    else:
        sq = _frob(J @ J + EYE)
        skew = _frob(g @ J + Jt @ g)
        iso = _frob(Jt @ g @ J - g)
    return sq, skew, iso


def _frob(X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...ij,...ij->...", X, X))


def _worst(arr: np.ndarray, k: int = 3):
    flat = np.argsort(arr, axis=None)[::-1][:k]
    return [(tuple(int(i) for i in np.unravel_index(f, arr.shape)), float(arr.flat[f])) for f in flat]


def validate(J, metric: MetricField | None = None, tol: float = 1e-9) -> CompatibleJField:
    J = np.asarray(J, dtype=float)
    if J.shape[-2:] != (DIM, DIM):
        raise ValueError(f"expected an endomorphism field (..., 4, 4), got {J.shape}")
    metric = _metric(metric)
    if metric.curvature_flag and metric.g.shape[:-2] != J.shape[:-2]:
        raise ValueError("metric and field live on different grids")
    sq, skew, iso = constraint_residuals(J, metric)
    worst = np.maximum(np.maximum(sq, skew), iso)
    if not np.all(np.isfinite(worst)) or worst.max(initial=0.0) > tol:
        offenders = _worst(np.nan_to_num(worst, nan=np.inf))
        raise ConstraintViolationError(
            f"compatibility violated above tol={tol:g}; worst points {offenders}"
        )
    return CompatibleJField(J, float(sq.max(initial=0.0)), float(skew.max(initial=0.0)),
                            float(iso.max(initial=0.0)))


def constant_field(J: np.ndarray, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(J, dtype=float), (n,) * DIM + (DIM, DIM)).copy()


# ---------------------------------------------------------------------------
# tangent space and retractions


def tangent_project(J, T: np.ndarray, metric: MetricField | None = None) -> np.ndarray:
    """Orthogonal projection onto ``{S : JS + SJ = 0, gS + S^T g = 0}``.

    ``S = (A - g^{-1} A^T g) / 4`` with ``A = T + J T J``.  Both steps are
    orthogonal projectors (up to the factor 2 each) for the pairing
    ``(A, B) = A^i_j B^k_l g_ik g^jl``, and they commute.
    """
    J = np.asarray(J)
    A = T + J @ T @ J
    return 0.25 * (A - g_adjoint(A, metric))


def tangent_residuals(J, S: np.ndarray, metric: MetricField | None = None):
    metric = _metric(metric)
    J = np.asarray(J)
    anti = np.linalg.norm(J @ S + S @ J, axis=(-1, -2))
    skew = np.linalg.norm(metric.g @ S + np.swapaxes(S, -1, -2) @ metric.g, axis=(-1, -2))
    return anti, skew


def retract_cayley(J, S: np.ndarray, t: float, metric: MetricField | None = None,
                   tol: float = 1e-9, validate_output: bool = True) -> CompatibleJField:
    """``(id - tS) J (id - tS)^{-1}`` (equal to ``J (id + tS)(id - tS)^{-1}`` for tangent S)."""
    metric = _metric(metric)
    J = np.asarray(J)
    tS = t * S
    size = np.linalg.norm(to_frame(tS, metric), axis=(-1, -2)).max(initial=0.0)
    if not size < 0.5:
        raise StepTooLargeError(f"|tS| = {size:.3g} exceeds 0.5")
    anti, skew = tangent_residuals(J, S, metric)
    scale = 1.0 + float(np.abs(S).max(initial=0.0))
    if max(anti.max(initial=0.0), skew.max(initial=0.0)) > tol * scale:
        raise ConstraintViolationError("direction is not tangent to the constraint manifold")
    if t == 0.0:
        out = J.copy()
    else:
        M = EYE - tS
        X = M @ J
        # X M^{-1} = (M^{-T} X^T)^T
        out = np.swapaxes(np.linalg.solve(np.swapaxes(M, -1, -2), np.swapaxes(X, -1, -2)), -1, -2)
    if validate_output:
        return validate(out, metric, tol)
    return CompatibleJField(out, np.nan, np.nan, np.nan)


# ---------------------------------------------------------------------------
# polar-type projection


def skew_part(M: np.ndarray, metric: MetricField | None = None) -> np.ndarray:
    """g-skew part ``(M - g^{-1} M^T g) / 2``."""
    return 0.5 * (M - g_adjoint(M, metric))


def jacobi_eigh(Y: np.ndarray, tol: float = 1e-15, max_sweeps: int = 16):
    """Cyclic Jacobi eigendecomposition of symmetric matrices, vectorized over the batch.

    Returns ascending eigenvalues ``w`` (..., n) and orthonormal eigenvectors ``V``
    (columns) with ``Y = V diag(w) V^T``.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[-1]
    # entries first so every rotation works on contiguous batch vectors
    A = np.moveaxis(Y, (-2, -1), (0, 1)).copy()
    V = np.zeros_like(A)
    for i in range(n):
        V[i, i] = 1.0
    scale = np.sum(A * A, axis=(0, 1))
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = 2.0 * np.sum(A[iu] ** 2, axis=0)
        if np.all(off <= tol * tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                nz = apq != 0.0
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    theta = (A[q, q] - A[p, p]) / (2.0 * np.where(nz, apq, 1.0))
                    t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(nz & np.isfinite(theta), t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for M, rows in ((A, False), (A, True), (V, False)):
                    if rows:
                        Mp, Mq = M[p].copy(), M[q].copy()
                        M[p] = c * Mp - s * Mq
                        M[q] = s * Mp + c * Mq
                    else:
                        Mp, Mq = M[:, p].copy(), M[:, q].copy()
                        M[:, p] = c * Mp - s * Mq
                        M[:, q] = s * Mp + c * Mq
    else:
        logger.warning("Jacobi eigensolver did not converge in %d sweeps", max_sweeps)
    w = np.diagonal(A, axis1=0, axis2=1).copy()
    V = np.moveaxis(V, (0, 1), (-2, -1))
    order = np.argsort(w, axis=-1)
    return np.take_along_axis(w, order, -1), np.take_along_axis(V, order[..., None, :], -1)


def sqrtm_eigh(Y: np.ndarray) -> np.ndarray:
    """Square root of symmetric positive semidefinite matrices (batched, LAPACK)."""
    w, V = np.linalg.eigh(Y)
    return (V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(V, -1, -2)


def inv4(X: np.ndarray):
    """Batched 4x4 inverse and determinant by 2x2 minors (adjugate formula)."""
    m = np.ascontiguousarray(np.moveaxis(np.asarray(X, dtype=float), (-2, -1), (0, 1)))
    s0 = m[0, 0] * m[1, 1] - m[1, 0] * m[0, 1]
    s1 = m[0, 0] * m[1, 2] - m[1, 0] * m[0, 2]
    s2 = m[0, 0] * m[1, 3] - m[1, 0] * m[0, 3]
    s3 = m[0, 1] * m[1, 2] - m[1, 1] * m[0, 2]
    s4 = m[0, 1] * m[1, 3] - m[1, 1] * m[0, 3]
    s5 = m[0, 2] * m[1, 3] - m[1, 2] * m[0, 3]
    c5 = m[2, 2] * m[3, 3] - m[3, 2] * m[2, 3]
    c4 = m[2, 1] * m[3, 3] - m[3, 1] * m[2, 3]
    c3 = m[2, 1] * m[3, 2] - m[3, 1] * m[2, 2]
    c2 = m[2, 0] * m[3, 3] - m[3, 0] * m[2, 3]
    c1 = m[2, 0] * m[3, 2] - m[3, 0] * m[2, 2]
    c0 = m[2, 0] * m[3, 1] - m[3, 0] * m[2, 1]
    det = s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
    inv = np.empty(m.shape[2:] + (4, 4))
    inv[..., 0, 0] = m[1, 1] * c5 - m[1, 2] * c4 + m[1, 3] * c3
    inv[..., 0, 1] = -m[0, 1] * c5 + m[0, 2] * c4 - m[0, 3] * c3
    inv[..., 0, 2] = m[3, 1] * s5 - m[3, 2] * s4 + m[3, 3] * s3
    inv[..., 0, 3] = -m[2, 1] * s5 + m[2, 2] * s4 - m[2, 3] * s3
    inv[..., 1, 0] = -m[1, 0] * c5 + m[1, 2] * c2 - m[1, 3] * c1
    inv[..., 1, 1] = m[0, 0] * c5 - m[0, 2] * c2 + m[0, 3] * c1
    inv[..., 1, 2] = -m[3, 0] * s5 + m[3, 2] * s2 - m[3, 3] * s1
    inv[..., 1, 3] = m[2, 0] * s5 - m[2, 2] * s2 + m[2, 3] * s1
    inv[..., 2, 0] = m[1, 0] * c4 - m[1, 1] * c2 + m[1, 3] * c0
    inv[..., 2, 1] = -m[0, 0] * c4 + m[0, 1] * c2 - m[0, 3] * c0
    inv[..., 2, 2] = m[3, 0] * s4 - m[3, 1] * s2 + m[3, 3] * s0
    inv[..., 2, 3] = -m[2, 0] * s4 + m[2, 1] * s2 - m[2, 3] * s0
    inv[..., 3, 0] = -m[1, 0] * c3 + m[1, 1] * c1 - m[1, 2] * c0
    inv[..., 3, 1] = m[0, 0] * c3 - m[0, 1] * c1 + m[0, 2] * c0
    inv[..., 3, 2] = -m[3, 0] * s3 + m[3, 1] * s1 - m[3, 2] * s0
    inv[..., 3, 3] = m[2, 0] * s3 - m[2, 1] * s1 + m[2, 2] * s0
    inv /= det[..., None, None]
    return inv, det


def sqrtm_denman_beavers(Y: np.ndarray, tol: float = 1e-14, max_iter: int = 60) -> np.ndarray:
    """Scaled Denman-Beavers iteration (product form) for the principal square root of
    4x4 matrices, batched. One inverse per step; determinant scaling in the first steps."""
    Y = np.array(Y, dtype=float)
    n = Y.shape[-1]
    if n != 4:
        raise ValueError("sqrtm_denman_beavers is specialized to 4x4 matrices")
    eye = np.eye(n)
    M = Y.copy()
    S = Y.copy()
    for it in range(max_iter):
        Mi, det = inv4(M)
        SMi = S @ Mi
        if it < 6:
            mu = (np.abs(det) ** (-0.5 / n))[..., None, None]
            S *= 0.5 * mu
            SMi *= 0.5 / mu
            M *= 0.25 * mu * mu
            Mi *= 0.25 / (mu * mu)
        else:
            S *= 0.5
            SMi *= 0.5
            M *= 0.25
            Mi *= 0.25
        S += SMi
        M += Mi
        M += 0.5 * eye
        if np.abs(M - eye).max(initial=0.0) <= tol:
            break
    else:
        logger.warning("Denman-Beavers did not converge in %d iterations", max_iter)
    return S


def sqrtm_binomial(Y: np.ndarray, terms: int = 400, tol: float = 1e-17) -> np.ndarray:
    """``sqrt(id - X) = sum_l binom(1/2, l) (-X)^l`` with ``X = id - Y``; needs ``|X| < 1``.

    Summation stops once the largest term falls below ``tol``.
    """
    n = Y.shape[-1]
    X = np.eye(n) - Y
    out = np.broadcast_to(np.eye(n), Y.shape).copy()
    power = out.copy()
    coeff = 1.0
    for l in range(1, terms):
        coeff *= (0.5 - (l - 1)) / l
        power = power @ (-X)
        term = coeff * power
        out += term
        if np.abs(term).max(initial=0.0) < tol:
            break
    return out


@dataclass
class PolarParts:
    A: np.ndarray          # g-skew part of the input
    Q: np.ndarray          # g-symmetric positive square root of -A^2
    J: np.ndarray          # Q^{-1} A
    min_eig: np.ndarray    # smallest eigenvalue of -A^2 per point


def polar_parts(M: np.ndarray, metric: MetricField | None = None, solver: str = "lapack") -> PolarParts:
    """Skew part, square root and projected structure at every point.

    ``solver`` picks the symmetric eigensolver: ``lapack`` (numpy) or ``jacobi``.
    """
    if solver not in ("lapack", "jacobi"):
        raise ValueError(f"unknown eigensolver {solver!r}")
    metric = _metric(metric)
    if metric.curvature_flag:
        raise UnsupportedConfigurationError("polar projection implemented for constant metrics")
    Af = skew_part(to_frame(np.asarray(M, dtype=float), metric))  # plain skew-symmetric
    Y = -Af @ Af
    Y = 0.5 * (Y + np.swapaxes(Y, -1, -2))
    w, V = np.linalg.eigh(Y) if solver == "lapack" else jacobi_eigh(Y)
    # contiguous operands and reused buffers keep the batched matmuls on the fast path
    V = np.ascontiguousarray(V)
    Vt = np.ascontiguousarray(np.swapaxes(V, -1, -2))
    root = np.sqrt(np.clip(w, 0.0, None))
    buf = np.multiply(V, root[..., None, :])
    Qf = np.matmul(buf, Vt)
    np.divide(V, np.clip(root, 1e-150, None)[..., None, :], out=buf)
    Jf = np.matmul(buf, np.matmul(Vt, Af, out=Y), out=V)
    return PolarParts(from_frame(Af, metric), from_frame(Qf, metric), from_frame(Jf, metric), w[..., 0])


def project_polar(M: np.ndarray, metric: MetricField | None = None, sigma_min: float = 0.01,
                  tol: float = 1e-9) -> CompatibleJField:
    """Nearest-structure projection ``Q^{-1} A`` with ``A`` the g-skew part and ``Q = sqrt(-A^2)``."""
    return project_polar_parts(M, metric, sigma_min, tol)[0]


def project_polar_parts(M: np.ndarray, metric: MetricField | None = None, sigma_min: float = 0.01,
                        tol: float = 1e-9):
    """Like :func:`project_polar` but also returns the :class:`PolarParts`."""
    parts = polar_parts(M, metric)
    bad = parts.min_eig < sigma_min
    if np.any(bad):
        worst = np.unravel_index(np.argmin(parts.min_eig), parts.min_eig.shape)
        value = float(parts.min_eig[worst])
        raise DegenerateProjectionError(
            f"-A^2 has eigenvalue {value:.3g} < sigma_min={sigma_min:g} at point {tuple(map(int, worst))} "
            f"({int(bad.sum())} degenerate points)",
            tuple(map(int, worst)), value,
        )
    return validate(parts.J, metric, tol), parts
