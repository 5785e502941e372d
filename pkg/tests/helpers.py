"""Shared field generators for the test suite."""
import numpy as np

from bhacs.acs import J0, project_polar
from bhacs.energy import TestBattery
from bhacs.geometry import Grid


def skew_min_eig(M: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of ``-A^2`` for the skew part ``A`` of 4x4 ``M``.

    Closed form from the self-dual/anti-self-dual split: ``(|p| - |q|)^2 / 4``.
    """
    def a(i, j):
        return 0.5 * (M[..., i, j] - M[..., j, i])
    a01, a23, a02, a13, a03, a12 = a(0, 1), a(2, 3), a(0, 2), a(1, 3), a(0, 3), a(1, 2)
    p = np.sqrt((a01 + a23) ** 2 + (a02 - a13) ** 2 + (a03 + a12) ** 2)
    q = np.sqrt((a01 - a23) ** 2 + (a02 + a13) ** 2 + (a03 - a12) ** 2)
    return 0.25 * (p - q) ** 2


def gated_uniform(rng: np.random.Generator, n: int, sigma_min: float = 0.01) -> np.ndarray:
    """Endomorphism field with entries in [-1, 1], drawn pointwise until each passes the sigma_min gate."""
    total = n**4
    out = np.empty((total, 4, 4))
    filled = 0
    while filled < total:
        need = total - filled
        cand = rng.uniform(-1.0, 1.0, (need + need // 2 + 16, 4, 4))
        cand = cand[skew_min_eig(cand) >= sigma_min][:need]
        out[filled:filled + len(cand)] = cand
        filled += len(cand)
    return out.reshape((n,) * 4 + (4, 4))


def rough_compatible(rng: np.random.Generator, n: int) -> np.ndarray:
    return project_polar(gated_uniform(rng, n)).values


def smooth_compatible(rng: np.random.Generator, n: int, amplitude: float = 0.3) -> np.ndarray:
    """Projection of ``J0`` plus a bandlimited random perturbation."""
    T = TestBattery(Grid(n), count=1, seed=int(rng.integers(2**31)))[0]
    return project_polar(J0 + amplitude * T / np.abs(T).max()).values
