"""First Chern form of a compatible structure, its periods, and topological seeds.

On the flat torus the Chern form is ``gamma = chi / 2 pi`` with
``chi(X, Y) = omega(nabla_X J, nabla_Y J) / 4`` and the pairing
``omega(A, B) = omega_kl A^k_i B^l_j g^ij = tr(A^T omega B g^-1)``.
With this pairing a field ``J = L_n`` built from a map ``n: T^2 -> S^2`` of
degree ``d`` has period ``2 d`` over that 2-torus (``c_1`` of the twistor
fiber's tangent bundle pulls back to twice the degree).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .acs import J0, validate, CompatibleJField
from .energy import lower_index
from .geometry import (
    DIM,
    PAIRS,
    Grid,
    MetricField,
    TwoFormField,
    UnsupportedConfigurationError,
    _metric,
    _resolve_grid,
    d_central,
    from_frame,
)

# Period of the (x_a, x_b) form per unit of map degree, fixed by calibration
# against the solid-angle degree (see tests/test_topology.py).
PERIOD_PER_DEGREE = 2.0


class UnrealizableSpecError(ValueError):
    pass


@dataclass
class ChernForm:
    gamma: TwoFormField
    periods: np.ndarray  # (6,) in PAIRS order

    def period(self, a: int, b: int) -> float:
        sign = 1.0
        if a > b:
            a, b, sign = b, a, -1.0
        return sign * float(self.periods[PAIRS.index((a, b))])


def chern_form(J, metric: MetricField | None = None, grid: Grid | None = None) -> ChernForm:
    J = np.asarray(J, dtype=float)
    metric = _metric(metric)
    grid = _resolve_grid(grid, J)
    if not metric.is_flat:
        raise UnsupportedConfigurationError("chern_form is implemented for the flat metric only")
    h = grid.spacing
    omega = lower_index(J, metric)
    D = [d_central(J, p, h) for p in range(DIM)]
    W = [omega @ Dp for Dp in D]
    comps = np.empty(grid.shape + (len(PAIRS),))
    for c, (a, b) in enumerate(PAIRS):
        comps[..., c] = np.einsum("...ij,...ij->...", D[a], W[b])
    comps /= 8.0 * np.pi
    periods = comps.reshape(-1, len(PAIRS)).sum(axis=0) * h**DIM
    return ChernForm(TwoFormField(comps), periods)


def periods(J, metric: MetricField | None = None, grid: Grid | None = None) -> np.ndarray:
    return chern_form(J, metric, grid).periods


@dataclass
class DriftReport:
    periods: np.ndarray   # (snapshots, 6)
    drift: float          # max |P_k - P_0| over snapshots and planes


def chern_trajectory(fields, metric: MetricField | None = None) -> DriftReport:
    """Period drift along a sequence of fields (snapshots or arrays)."""
    rows = [periods(np.asarray(J), metric) for J in fields]
    if not rows:
        raise ValueError("chern_trajectory needs at least one snapshot")
    P = np.array(rows)
    return DriftReport(P, float(np.abs(P - P[0]).max()))


# ---------------------------------------------------------------------------
# quaternionic twistor fiber


def quaternion_left(q: np.ndarray) -> np.ndarray:
    """Matrix of ``x -> q x`` on ``H = R^4`` with basis ``(1, i, j, k)``; ``q`` has shape (..., 4)."""
    a, b, c, d = (q[..., k] for k in range(4))
    rows = [
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def structure_from_sphere_map(nmap: np.ndarray) -> np.ndarray:
    """``J(x) = L_{n(x)}`` for a unit imaginary quaternion field ``n`` of shape (..., 3)."""
    q = np.concatenate([np.zeros(nmap.shape[:-1] + (1,)), nmap], axis=-1)
    return quaternion_left(q)


def base_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smooth degree-one map ``T^2 -> S^2`` of angles ``(a, b)``."""
    d = np.stack([np.sin(a), -np.sin(b), 1.0 + np.cos(a) + np.cos(b)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def _decompose(degrees: np.ndarray, search: int = 3):
    """Small integer ``u, v`` with ``u ^ v = degrees`` (PAIRS order), or ``None``."""
    if not np.any(degrees):
        return np.zeros(DIM, int), np.zeros(DIM, int)
    vecs = np.array(list(product(range(-search, search + 1), repeat=DIM)), dtype=np.int16)
    target = np.asarray(degrees, dtype=np.int16)
    match = np.ones((len(vecs), len(vecs)), dtype=bool)
    for c, (a, b) in enumerate(PAIRS):
        match &= vecs[:, None, a] * vecs[None, :, b] - vecs[:, None, b] * vecs[None, :, a] == target[c]
    iu, iv = np.nonzero(match)
    if len(iu) == 0:
        return None
    # prefer short vectors, then nonnegative entries
    cost = 2 * (np.abs(vecs[iu]).sum(1) + np.abs(vecs[iv]).sum(1)) + (vecs[iu] < 0).sum(1) + (vecs[iv] < 0).sum(1)
    k = int(np.argmin(cost))
    return vecs[iu[k]].astype(int), vecs[iv[k]].astype(int)


def plane_degrees(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.array([u[a] * v[b] - u[b] * v[a] for a, b in PAIRS])


def sphere_map(degrees, grid: Grid) -> np.ndarray:
    """Unit vector field ``n(x) = f(2 pi u.x, 2 pi v.x)`` realizing the requested plane degrees."""
    degrees = np.asarray(degrees, dtype=int).reshape(-1)
    if degrees.shape != (len(PAIRS),):
        raise UnrealizableSpecError("expected 6 plane degrees in the order 12,13,14,23,24,34")
    if not np.any(degrees):
        n = np.zeros(grid.shape + (3,))
        n[..., 0] = 1.0
        return n
    uv = _decompose(degrees)
    if uv is None:
        raise UnrealizableSpecError(
            f"degrees {degrees.tolist()} are not of the form u ^ v for small integer u, v")
    u, v = uv
    X = np.stack(np.meshgrid(*([grid.axis_coords()] * DIM), indexing="ij"), axis=-1)
    return base_map(2 * np.pi * (X @ u), 2 * np.pi * (X @ v))


def sphere_map_seed(degrees, grid: Grid, metric: MetricField | None = None,
                    tol: float = 1e-10) -> CompatibleJField:
    metric = _metric(metric)
    if not metric.is_flat:
        raise UnsupportedConfigurationError("sphere_map_seed needs the flat metric")
    nmap = sphere_map(degrees, grid)
    if not np.any(degrees):
        return validate(np.broadcast_to(J0, grid.shape + (DIM, DIM)).copy(), metric, tol)
    return validate(structure_from_sphere_map(nmap), metric, tol)


def solid_angle_degree(nmap2d: np.ndarray) -> float:
    """Degree of a lattice map ``T^2 -> S^2`` from signed spherical triangle areas."""
    n1 = nmap2d
    n2 = np.roll(n1, -1, 0)
    n3 = np.roll(n2, -1, 1)
    n4 = np.roll(n1, -1, 1)

    def omega(a, b, c):
        num = np.einsum("...i,...i", a, np.cross(b, c))
        den = 1.0 + np.einsum("...i,...i", a, b) + np.einsum("...i,...i", b, c) + np.einsum("...i,...i", c, a)
        return 2.0 * np.arctan2(num, den)

    return float((omega(n1, n2, n3) + omega(n1, n3, n4)).sum() / (4 * np.pi))


def map_plane_degree(nmap: np.ndarray, a: int, b: int, base=(0, 0, 0, 0)) -> float:
    """Solid-angle degree of ``nmap`` restricted to the (x_a, x_b) torus through ``base``."""
    idx = list(base)
    idx[a] = slice(None)
    idx[b] = slice(None)
    return solid_angle_degree(nmap[tuple(idx)])


# ---------------------------------------------------------------------------
# homotopically trivial seeds


def plane_rotation(theta: np.ndarray, a: int = 0, b: int = 2) -> np.ndarray:
    R = np.broadcast_to(np.eye(DIM), theta.shape + (DIM, DIM)).copy()
    c, s = np.cos(theta), np.sin(theta)
    R[..., a, a] = c
    R[..., b, b] = c
    R[..., a, b] = -s
    R[..., b, a] = s
    return R


def perturbation_seed(grid: Grid, eps: float = 0.1, mode: int = 1,
                      metric: MetricField | None = None) -> CompatibleJField:
    """``R J0 R^T`` with ``R`` a rotation by ``eps sin(2 pi mode x_1)`` in the (e1, e3) plane.

    The (e1, e3) plane is not J0-invariant, so the conjugation genuinely moves J0.
    For a constant metric the construction is carried out in a g-orthonormal frame.
    """
    metric = _metric(metric)
    x = grid.axis_coords()
    theta = np.broadcast_to((eps * np.sin(2 * np.pi * mode * x))[:, None, None, None], grid.shape)
    R = plane_rotation(theta)
    J = R @ J0 @ np.swapaxes(R, -1, -2)
    return validate(from_frame(J, metric), metric, 1e-10)
