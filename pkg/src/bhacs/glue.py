"""Splicing two compatible structures across an annulus.

Pipeline: convex cutoff interpolation, variable-radius mollification, then
polar re-projection on the annulus ring.  Radii are measured in units of
``scale`` around a grid point ``center`` using the periodic distance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .acs import CompatibleJField, polar_parts, validate
from .energy import density_mu
from .geometry import (
    DIM,
    Grid,
    MetricField,
    _metric,
    _resolve_grid,
    d_central,
    norm_sq,
    rough_laplacian,
)

logger = logging.getLogger(__name__)

N_SAMPLES = 10_000


class GlueError(RuntimeError):
    def __init__(self, message: str, worst_defect: float = float("nan")):
        super().__init__(message)
        self.worst_defect = worst_defect


# ---------------------------------------------------------------------------
# profiles


def smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _bump(s: np.ndarray) -> np.ndarray:
    """C^1 piecewise quadratic on [0, 1]: curvature +1, -1, +1 on quarters (1/4, 1/2, 1/4)."""
    s = np.clip(s, 0.0, 1.0)
    t = np.minimum(s, 1.0 - s)  # symmetric about 1/2
    inner = 1.0 / 32 + (t - 0.25) / 4 - (t - 0.25) ** 2 / 2
    return np.where(t <= 0.25, t * t / 2, inner)


def _bump_d1(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    t = np.minimum(s, 1.0 - s)
    d = np.where(t <= 0.25, t, 0.25 - (t - 0.25))
    return np.where(s <= 0.5, d, -d)


def _bump_d2(s: np.ndarray) -> np.ndarray:
    t = np.minimum(s, 1.0 - s)
    return np.where((s < 0.0) | (s > 1.0), 0.0, np.where(t <= 0.25, 1.0, -1.0))


@dataclass(frozen=True)
class GlueProfile:
    """Cutoff ``psi`` and radius function ``rho`` for annulus sharpness ``j``.

    ``psi(r) = smoothstep(j (r - 1 + 1/j))`` and
    ``rho(r) = rho_bar * alpha * B(j (r - 1 + 1/j))`` with ``B`` the bump above
    and ``alpha`` chosen so that ``rho = delta1 rho_bar`` at the two marked radii.
    Use :meth:`build`; it verifies every bound by dense sampling.
    """

    j: int
    rho_bar: float
    delta1: float
    alpha: float

    @classmethod
    def build(cls, j: int) -> "GlueProfile":
        if int(j) != j or j < 1:
            raise ValueError(f"j must be a positive integer, got {j}")
        j = int(j)
        delta1 = 1.0 / j
        b = float(_bump(np.array(delta1)))
        if b <= 0.0:
            raise ValueError(f"no admissible profile for j={j}: empty annulus edge")
        prof = cls(j, 1.0 / (10.0 * j * j), delta1, delta1 / b)
        violations = prof.check_bounds()
        if violations:
            raise ValueError(f"no admissible profile for j={j}: " + "; ".join(violations))
        return prof

    @property
    def inner_radius(self) -> float:
        return 1.0 - 1.0 / self.j

    def _s(self, r):
        return (np.asarray(r, dtype=float) - self.inner_radius) * self.j

    def psi(self, r):
        return smoothstep(self._s(r))

    def psi_d1(self, r):
        s = self._s(r)
        inside = (s > 0) & (s < 1)
        return np.where(inside, 30.0 * s * s * (1 - s) ** 2 * self.j, 0.0)

    def psi_d2(self, r):
        s = self._s(r)
        inside = (s > 0) & (s < 1)
        return np.where(inside, 60.0 * s * (1 - s) * (1 - 2 * s) * self.j**2, 0.0)

    def rho(self, r):
        s = self._s(r)
        return np.where((s > 0) & (s < 1), self.rho_bar * self.alpha * _bump(s), 0.0)

    def rho_d1(self, r):
        s = self._s(r)
        return np.where((s > 0) & (s < 1), self.rho_bar * self.alpha * self.j * _bump_d1(s), 0.0)

    def rho_d2(self, r):
        s = self._s(r)
        return self.rho_bar * self.alpha * self.j**2 * _bump_d2(s)

    def check_bounds(self, samples: int = N_SAMPLES) -> list[str]:
        """Return descriptions of violated bounds (empty when admissible)."""
        j, out = self.j, []
        r = np.linspace(0.0, 2.0, samples)
        if np.abs(self.psi_d1(r)).max() > 3 * j:
            out.append("|psi'| > 3j")
        if np.abs(self.psi_d2(r)).max() > 10 * j * j:
            out.append("|psi''| > 10j^2")
        rho = self.rho(r)
        if np.any(rho[(r <= self.inner_radius) | (r >= 1.0)] != 0.0):
            out.append("rho not supported in the annulus")
        lo = self.inner_radius + self.delta1 / j
        hi = 1.0 - self.delta1 / j
        target = self.delta1 * self.rho_bar
        if not (np.isclose(self.rho(lo), target, rtol=1e-12) and np.isclose(self.rho(hi), target, rtol=1e-12)):
            out.append("rho != delta1 rho_bar at the marked radii")
        edge = ((r > self.inner_radius) & (r < lo)) | ((r > hi) & (r < 1.0))
        if np.any(rho[edge] >= target * (1 + 1e-12)):
            out.append("rho >= delta1 rho_bar on an edge subinterval")
        middle = (r >= lo) & (r <= hi)
        if hi < lo or np.any(rho[middle] < target * (1 - 1e-12)):
            out.append("rho < delta1 rho_bar on the middle subinterval")
        total = np.abs(self.rho_d1(r)) + np.abs(self.rho_d2(r))
        if total.max() > 10 * self.rho_bar * j * j * (1 + 1e-12):
            out.append("|rho'| + |rho''| > 10 rho_bar j^2")
        return out


@dataclass(frozen=True)
class MollifierKernel:
    """``phi(z) = (20 / pi^2) (1 - |z|^2)^3`` on the unit 4-ball (unit mass).

    The quadrature is the midpoint rule on an ``m^4`` tensor grid restricted
    to the ball, symmetric under ``z -> -z`` and renormalized to unit mass.
    """

    m: int = 8

    @staticmethod
    def phi(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < 1.0, (20.0 / np.pi**2) * np.clip(1.0 - r * r, 0.0, None) ** 3, 0.0)

    @cached_property
    def _rule(self):
        t = -1.0 + (2.0 * np.arange(self.m) + 1.0) / self.m
        Z = np.stack(np.meshgrid(*([t] * DIM), indexing="ij"), axis=-1).reshape(-1, DIM)
        w = self.phi(np.linalg.norm(Z, axis=1)) * (2.0 / self.m) ** DIM
        keep = w > 0
        return Z[keep], w[keep]

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def raw_mass(self) -> float:
        return float(self._rule[1].sum())

    @property
    def weights(self) -> np.ndarray:
        w = self._rule[1]
        return w / w.sum()


# ---------------------------------------------------------------------------
# geometry helpers


def periodic_offsets(grid: Grid, center) -> np.ndarray:
    """Displacements ``x - center`` wrapped to ``[-1/2, 1/2)`` per axis, shape (n,n,n,n,4)."""
    center = np.asarray(center, dtype=float)
    x = grid.axis_coords()
    parts = []
    for a in range(DIM):
        d = (x - center[a] / grid.n + 0.5) % 1.0 - 0.5
        shape = [1] * DIM
        shape[a] = grid.n
        parts.append(np.broadcast_to(d.reshape(shape), grid.shape))
    return np.stack(parts, axis=-1)


def periodic_distance(grid: Grid, center) -> np.ndarray:
    return np.linalg.norm(periodic_offsets(grid, center), axis=-1)


def _check_scale(scale: float) -> None:
    if not 0.0 < scale < 0.5:
        raise ValueError(f"scale must lie in (0, 0.5) so the annulus does not overlap itself, got {scale}")


def sample_multilinear(F: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Periodic multilinear interpolation of ``F`` (n,n,n,n,...) at points ``pts`` (..., 4) in [0,1)^4 units."""
    n = F.shape[0]
    u = pts * n
    i0 = np.floor(u).astype(np.int64)
    frac = u - i0
    out = 0.0
    for corner in range(1 << DIM):
        bits = [(corner >> a) & 1 for a in range(DIM)]
        w = np.ones(pts.shape[:-1])
        idx = []
        for a, b in enumerate(bits):
            w = w * (frac[..., a] if b else 1.0 - frac[..., a])
            idx.append((i0[..., a] + b) % n)
        val = F[tuple(idx)]
        out = out + w.reshape(w.shape + (1,) * (val.ndim - w.ndim)) * val
    return out


# ---------------------------------------------------------------------------
# operations


def cutoff_interpolate(J_out, J_in, profile: GlueProfile, center, scale: float,
                       grid: Grid | None = None) -> np.ndarray:
    """``J_out + (J_in - J_out)(1 - psi(|x - center| / scale))``, exact copies off the annulus."""
    J_out = np.asarray(J_out, dtype=float)
    J_in = np.asarray(J_in, dtype=float)
    grid = _resolve_grid(grid, J_out, J_in)
    _check_scale(scale)
    r = periodic_distance(grid, center) / scale
    psi = profile.psi(r)
    out = J_out.copy()
    inside = psi == 0.0
    out[inside] = J_in[inside]
    ring = (psi > 0.0) & (psi < 1.0)
    w = (1.0 - psi[ring])[:, None, None]
    out[ring] = J_out[ring] + (J_in[ring] - J_out[ring]) * w
    return out


def mollify_variable(M, profile: GlueProfile, kernel: MollifierKernel, center, scale: float,
                     grid: Grid | None = None,
                     radius: Callable[[np.ndarray], np.ndarray] | None = None,
                     chunk: int = 256) -> np.ndarray:
    """Average ``M`` over balls of radius ``rho(|x - center| / scale) * scale``.

    ``radius`` overrides the radius as a function of the absolute distance to
    ``center``.  Radii below two grid spacings are treated as zero (identity).
    """
    M = np.asarray(M, dtype=float)
    grid = _resolve_grid(grid, M)
    _check_scale(scale)
    dist = periodic_distance(grid, center)
    rad = radius(dist) if radius is not None else profile.rho(dist / scale) * scale
    rad = np.broadcast_to(np.asarray(rad, dtype=float), grid.shape)
    active = rad > 0.0
    resolved = rad >= 2.0 * grid.spacing
    skipped = int(np.count_nonzero(active & ~resolved))
    if skipped:
        logger.info("mollifier: %d points with 0 < rho < 2h treated as rho = 0", skipped)
    out = M.copy()
    idx = np.argwhere(resolved)
    if len(idx) == 0:
        return out
    Z, w = kernel.nodes, kernel.weights
    for start in range(0, len(idx), chunk):
        block = idx[start:start + chunk]
        x = block / grid.n
        r = rad[tuple(block.T)]
        pts = (x[:, None, :] + r[:, None, None] * Z[None, :, :]) % 1.0
        vals = sample_multilinear(M, pts)  # (chunk, K, ...)
        out[tuple(block.T)] = np.tensordot(w, vals, axes=([0], [1]))
    return out


@dataclass
class GlueResult:
    J_glued: CompatibleJField
    annulus_energy: float          # sum over the ring of |Delta J_glued|^2 dv
    mu_neighborhood: float         # sum of |nabla^2 J_out|^2 + |nabla J_out|^4 near the ring
    constant: float                # annulus_energy / mu_neighborhood (nan when mu is 0)
    w14_distance: float            # sum |nabla J_out - nabla J_glued|^4 dv
    ring_points: int
    mollified_points: int
    diagnostics: dict = field(default_factory=dict)


def annulus_masks(grid: Grid, profile: GlueProfile, center, scale: float):
    """Boolean masks ``(inside, ring, outside, neighborhood)``.

    The neighborhood is the set of points within ``max(rho_bar scale, 2h)`` of the
    closed ring; two spacings cover the reach of the Laplacian stencil.
    """
    d = periodic_distance(grid, center)
    r_in, r_out = profile.inner_radius * scale, scale
    inside = d <= r_in
    outside = d >= r_out
    ring = ~inside & ~outside
    pad = max(profile.rho_bar * scale, 2.0 * grid.spacing)
    nbhd = (d >= r_in - pad) & (d <= r_out + pad)
    return inside, ring, outside, nbhd


def glue(J_out, J_in, profile: GlueProfile, kernel: MollifierKernel, center, scale: float,
         metric: MetricField | None = None, grid: Grid | None = None,
         eps0: float = 1.0, closeness: float = 0.5, sigma_min: float = 0.01,
         tol: float = 1e-9) -> GlueResult:
    """Glue ``J_in`` (inside) to ``J_out`` (outside) across the annulus.

    Precondition: ``max |J_in - J_out|`` on the ring is at most ``closeness``,
    or the local energy ``mu`` of ``J_out`` near the ring is at most ``eps0``.
    """
    metric = _metric(metric)
    J_out = np.asarray(J_out, dtype=float)
    J_in = np.asarray(J_in, dtype=float)
    grid = _resolve_grid(grid, J_out, J_in)
    _check_scale(scale)
    validate(J_out, metric, tol)
    validate(J_in, metric, tol)
    h4 = metric.volume_element(grid)
    inside, ring, outside, nbhd = annulus_masks(grid, profile, center, scale)

    mu = density_mu(J_out, metric, grid)
    mu_nbhd = float(np.sum(mu[nbhd]) * h4)
    gap = float(np.linalg.norm(J_in[ring] - J_out[ring], axis=(-1, -2)).max(initial=0.0))
    if gap > closeness and mu_nbhd > eps0:
        raise GlueError(
            f"inputs differ by {gap:.3g} > {closeness:g} on the annulus and local energy "
            f"{mu_nbhd:.3g} exceeds eps0={eps0:g}")

    M = cutoff_interpolate(J_out, J_in, profile, center, scale, grid)
    M = mollify_variable(M, profile, kernel, center, scale, grid)
    mollified = int(np.count_nonzero(profile.rho(periodic_distance(grid, center) / scale) * scale
                                      >= 2 * grid.spacing))

    out = M.copy()
    out[outside] = J_out[outside]
    out[inside] = J_in[inside]
    # ring points the blend left equal to J_out are already compatible; keep them exact
    moved = ring & np.any(M != J_out, axis=(-1, -2))
    if np.any(moved):
        parts = polar_parts(M[moved], metric)
        defect = np.linalg.norm(parts.A @ parts.A + np.eye(DIM), axis=(-1, -2))
        if np.any(parts.min_eig < sigma_min):
            raise GlueError(
                f"polar projection degenerate on the annulus: worst |A^2 + id| = {defect.max():.3g}",
                float(defect.max()))
        out[moved] = parts.J
    J_glued = validate(out, metric, tol)

    lap = rough_laplacian(out, metric, grid)
    annulus_energy = float(np.sum(norm_sq(lap, metric)[ring]) * h4)
    h = grid.spacing
    w14 = 0.0
    for p in range(DIM):
        diff = d_central(J_out, p, h) - d_central(out, p, h)
        w14 += np.sum(norm_sq(diff, metric) ** 2)
    w14 *= h4
    const = annulus_energy / mu_nbhd if mu_nbhd > 0 else float("nan")
    return GlueResult(J_glued, annulus_energy, mu_nbhd, const, float(w14),
                      int(ring.sum()), mollified,
                      {"input_gap": gap, "psi_j": profile.j})


@dataclass
class PoincareResult:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("nan")


def poincare_check(M, kernel: MollifierKernel, center, radius: float,
                   grid: Grid | None = None) -> PoincareResult:
    """Both sides of ``R^-4 int_B |f - f_*|^2 <= C R^-2 int_B |Df|^2`` on the discrete ball.

    ``f_*`` is the kernel-weighted mean ``sum phi(|y - c| / R) f / sum phi``.
    """
    M = np.asarray(M, dtype=float)
    grid = _resolve_grid(grid, M)
    d = periodic_distance(grid, center)
    ball = d < radius
    h = grid.spacing
    w = kernel.phi(d[ball] / radius)
    f = M[ball]
    f_star = np.tensordot(w, f, axes=(0, 0)) / w.sum()
    dev = (f - f_star).reshape(len(f), -1)
    lhs = radius ** (-DIM) * float(np.sum(dev * dev)) * h**DIM
    grad = 0.0
    for p in range(DIM):
        D = d_central(M, p, h)[ball].reshape(len(f), -1)
        grad += float(np.sum(D * D))
    rhs = radius ** (2 - DIM) * grad * h**DIM
    return PoincareResult(lhs, rhs)
