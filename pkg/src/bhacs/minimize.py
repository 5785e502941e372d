"""Projected-gradient minimization of E_2 and energy-concentration diagnostics."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acs import (
    CompatibleJField,
    DegenerateProjectionError,
    StepTooLargeError,
    project_polar,
    retract_cayley,
    tangent_project,
    validate,
)
from .energy import EnergyReport, density_mu, energy_e1, energy_e2_value, gradient_e2
from .geometry import (
    DIM,
    Grid,
    MetricField,
    _metric,
    _resolve_grid,
    bi_laplacian,
    covariant_derivative,
    gradient_norm_sq,
    inner,
    l2_norm,
    laplacian_symbol,
    norm_sq,
    to_frame,
)

logger = logging.getLogger(__name__)

MIN_STEP = 1e-14
PRECONDITIONERS = ("sobolev", "none")


@dataclass
class OptimizerConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-8
    initial_step: float | None = None  # None: 1 with the Sobolev preconditioner, h^4 without
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    checkpoint_every: int = 100
    seed: int = 0
    preconditioner: str = "sobolev"

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")

    def step0(self, grid: Grid) -> float:
        if self.initial_step is not None:
            return self.initial_step
        return 1.0 if self.preconditioner == "sobolev" else grid.spacing**DIM


@dataclass
class TraceRow:
    iteration: int
    e2: float
    e1: float
    grad_norm: float
    step: float
    residual_commutator: float


CSV_COLUMNS = ("iteration", "e2", "e1", "grad_norm", "step", "residual_commutator")


def write_trace_csv(rows: Sequence[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.iteration] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[1:]])


@dataclass
class MinimizeResult:
    J_final: CompatibleJField
    trace: list            # EnergyReport per accepted iterate (no densities)
    rows: list             # TraceRow per accepted iterate
    status: str            # "converged", "max_iters" or "stall"
    message: str = ""
    snapshots: list = field(default_factory=list)  # (iteration, field) pairs when requested

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return self.rows[-1].iteration if self.rows else 0


class SobolevPreconditioner:
    """``K^-1`` with ``K = 8 (Delta^2 + lambda_1^2)`` applied per component by FFT.

    ``lambda_1`` is the smallest nonzero eigenvalue of ``-Delta``; the shift keeps
    constant modes well conditioned.  ``K`` is symmetric positive definite and
    commutes with constant matrix multiplication, so ``-P(K^-1 G)`` is a
    descent direction for any tangent gradient ``G``.  The factor 8 makes the
    unit step a Newton step for high modes near a parallel structure: the
    retraction moves ``J`` with velocity ``2 J D`` and ``G ~ -4 J Delta^2 J``.
    """

    def __init__(self, metric: MetricField, grid: Grid):
        sym = laplacian_symbol(metric, grid)
        lam1 = np.sort(np.unique(np.round(-sym.ravel(), 9)))[1]
        self.inv = 1.0 / (8.0 * (sym * sym + lam1 * lam1))
        self.lam1 = float(lam1)

    def __call__(self, G: np.ndarray) -> np.ndarray:
        axes = tuple(range(DIM))
        Gh = np.fft.fftn(G, axes=axes)
        Gh *= self.inv.reshape(self.inv.shape + (1, 1))
        return np.fft.ifftn(Gh, axes=axes).real


def _tS_size(D: np.ndarray, t: float, metric: MetricField) -> float:
    return float(np.linalg.norm(to_frame(t * D, metric), axis=(-1, -2)).max(initial=0.0))


def minimize(J0, metric: MetricField | None = None, cfg: OptimizerConfig | None = None,
             grid: Grid | None = None,
             checkpoint: Callable[[int, np.ndarray], None] | None = None,
             keep_every: int = 0, tol: float = 1e-9) -> MinimizeResult:
    """Armijo-backtracking projected gradient descent with the Cayley retraction.

    ``checkpoint(iteration, J)`` is called every ``cfg.checkpoint_every`` accepted
    steps and at termination.  With ``keep_every > 0`` copies of the iterates are
    kept in ``result.snapshots`` (for period-drift studies).
    """
    metric = _metric(metric)
    cfg = cfg or OptimizerConfig()
    J = validate(J0, metric, tol).values.copy()
    grid = _resolve_grid(grid, J)
    precond = SobolevPreconditioner(metric, grid) if cfg.preconditioner == "sobolev" else None
    step = cfg.step0(grid)
    t_max = step

    def evaluate(J):
        bil = bi_laplacian(J, metric, grid)
        G = gradient_e2(J, metric, grid, bilap=bil)
        comm = l2_norm(bil + J @ bil @ J, metric, grid)
        return G, comm

    e2 = energy_e2_value(J, metric, grid)
    G, comm = evaluate(J)
    gnorm = l2_norm(G, metric, grid)
    trace = [EnergyReport(energy_e1(J, metric, grid), e2, None, None, comm)]
    rows = [TraceRow(0, e2, trace[0].e1, gnorm, 0.0, comm)]
    snapshots = [(0, J.copy())] if keep_every else []
    status, message = "max_iters", f"reached max_iters={cfg.max_iters}"

    it = 0
    grow = False
    while True:
        if gnorm < cfg.grad_tol:
            status, message = "converged", f"gradient norm {gnorm:.3g} < {cfg.grad_tol:g}"
            break
        if it >= cfg.max_iters:
            break
        D = -tangent_project(J, precond(G), metric) if precond is not None else -G
        slope = inner(G, D, metric, grid)
        if not slope < 0:
            status, message = "stall", f"search direction is not a descent direction (slope {slope:.3g})"
            break
        t = min(step / cfg.armijo_shrink, t_max) if grow else step
        first = True
        accepted = None
        while t >= MIN_STEP:
            try:
                if _tS_size(D, t, metric) >= 0.5:
                    raise StepTooLargeError("cayley bound")
                cand = retract_cayley(J, D, t, metric, tol=tol, validate_output=False).values
            except StepTooLargeError:
                # first-order fallback through the polar projection
                try:
                    cand = project_polar(J + 2.0 * t * (J @ D), metric, tol=tol).values
                except DegenerateProjectionError:
                    t *= cfg.armijo_shrink
                    continue
            e_new = energy_e2_value(cand, metric, grid)
            if e_new <= e2 + cfg.armijo_c * t * slope and e_new < e2:
                accepted = cand
                break
            t *= cfg.armijo_shrink
            first = False
        grow = first
        if accepted is None:
            status = "stall"
            message = f"line search failed: step below {MIN_STEP:g} at iteration {it + 1} (e2={e2:.6g}, |G|={gnorm:.3g})"
            break
        try:
            J = validate(accepted, metric, tol).values
        except ValueError as exc:  # constraint drift; surfaced as a stall
            status, message = "stall", f"iterate failed validation: {exc}"
            break
        it += 1
        step = t
        e2 = e_new
        G, comm = evaluate(J)
        gnorm = l2_norm(G, metric, grid)
        e1 = energy_e1(J, metric, grid)
        trace.append(EnergyReport(e1, e2, None, None, comm))
        rows.append(TraceRow(it, e2, e1, gnorm, t, comm))
        if keep_every and it % keep_every == 0:
            snapshots.append((it, J.copy()))
        if checkpoint is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            checkpoint(it, J)
        if it % 100 == 0:
            logger.info("iter %d e2=%.6g |G|=%.3g step=%.3g", it, e2, gnorm, t)
    if keep_every and snapshots[-1][0] != it:
        snapshots.append((it, J.copy()))
    if checkpoint is not None:
        checkpoint(it, J)
    final = validate(J, metric, tol)
    return MinimizeResult(final, trace, rows, status, message, snapshots)


# ---------------------------------------------------------------------------
# energy concentration


@dataclass
class ConcentrationReport:
    radii: list
    centers: list                 # grid index tuples
    f_values: np.ndarray          # (len(centers), len(radii))
    flagged: list                 # (radius, center) pairs with F >= eps0
    eps0: float


def concentration_scan(J, metric: MetricField | None = None, radii: Sequence[float] = (0.125, 0.25),
                       eps0: float = 1.0, grid: Grid | None = None, stride: int | None = None,
                       density: np.ndarray | None = None, chunk: int = 64) -> ConcentrationReport:
    """``F(r, p) = sum_{|x - p| <= r} (|nabla^2 J|^2 + |nabla J|^4) dv`` on a sublattice of centers."""
    metric = _metric(metric)
    J = np.asarray(J, dtype=float)
    grid = _resolve_grid(grid, J)
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("concentration_scan needs at least one radius")
    if min(radii) < 2 * grid.spacing:
        raise ValueError(f"radii must be at least 2h = {2 * grid.spacing:g}")
    if max(radii) >= 0.5:
        raise ValueError("radii must stay below 1/2 on the unit torus")
    n = grid.n
    stride = stride or max(1, n // 8)
    mu = density_mu(J, metric, grid) if density is None else np.asarray(density, dtype=float)
    dv = metric.volume_element(grid)

    # offsets inside the largest ball, sorted by distance, so every F(r, p) is a prefix sum
    reach = int(np.floor(max(radii) * n))
    rng = np.arange(-reach, reach + 1)
    off = np.stack(np.meshgrid(*([rng] * DIM), indexing="ij"), axis=-1).reshape(-1, DIM)
    dist = np.linalg.norm(off, axis=1) / n
    keep = dist <= max(radii) + 1e-12
    off, dist = off[keep], dist[keep]
    order = np.argsort(dist, kind="stable")
    off, dist = off[order], dist[order]
    cut = np.searchsorted(dist, np.array(radii) + 1e-12, side="right")

    axis = np.arange(0, n, stride)
    centers = np.stack(np.meshgrid(*([axis] * DIM), indexing="ij"), axis=-1).reshape(-1, DIM)
    F = np.empty((len(centers), len(radii)))
    for start in range(0, len(centers), chunk):
        block = centers[start:start + chunk]
        idx = (block[:, None, :] + off[None, :, :]) % n
        vals = mu[tuple(np.moveaxis(idx, -1, 0))]
        csum = np.cumsum(vals, axis=1) * dv
        F[start:start + chunk] = np.where(cut[None, :] > 0, csum[:, np.maximum(cut - 1, 0)], 0.0)
    flagged = [(radii[k], tuple(int(c) for c in centers[i]))
               for i, k in zip(*np.nonzero(F >= eps0))]
    return ConcentrationReport(radii, [tuple(int(c) for c in p) for p in centers], F, flagged, eps0)


# ---------------------------------------------------------------------------
# minimizing-sequence experiment


def w12_distance(A, B, metric: MetricField | None = None, grid: Grid | None = None) -> float:
    """``sqrt(sum (|A - B|^2 + |nabla (A - B)|^2) dv)``."""
    metric = _metric(metric)
    X = np.asarray(A, dtype=float) - np.asarray(B, dtype=float)
    grid = _resolve_grid(grid, X)
    dens = norm_sq(X, metric) + gradient_norm_sq(X, metric, grid, D=covariant_derivative(X, metric, grid))
    return float(np.sqrt(np.sum(dens * metric.volume_element(grid))))


@dataclass
class SeedOutcome:
    status: str
    iterations: int
    e2_initial: float
    e2_final: float
    periods_initial: np.ndarray
    periods_final: np.ndarray
    period_drift: float
    result: MinimizeResult


@dataclass
class SequenceReport:
    outcomes: list
    distances: np.ndarray     # pairwise W^{1,2} distances of final fields
    empirical_inf: float


def sequence_experiment(seeds: Sequence, metric: MetricField | None = None,
                        cfg: OptimizerConfig | None = None, keep_every: int = 0) -> SequenceReport:
    """Minimize from each seed and compare energies, Chern periods and final fields."""
    from .topology import chern_trajectory, periods

    if len(seeds) == 0:
        raise ValueError("sequence_experiment needs at least one seed")
    metric = _metric(metric)
    outcomes = []
    for seed in seeds:
        J = np.asarray(seed, dtype=float)
        res = minimize(J, metric, cfg, keep_every=keep_every)
        if metric.is_flat:
            p0, p1 = periods(J), periods(res.J_final.values)
            path = [J] + [s for _, s in res.snapshots] + [res.J_final.values]
            drift = chern_trajectory(path, metric).drift
        else:
            p0 = p1 = np.full(6, np.nan)
            drift = float("nan")
        outcomes.append(SeedOutcome(res.status, res.iterations, res.rows[0].e2, res.rows[-1].e2,
                                    p0, p1, drift, res))
    k = len(outcomes)
    dist = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            dist[a, b] = dist[b, a] = w12_distance(outcomes[a].result.J_final.values,
                                                   outcomes[b].result.J_final.values, metric)
    return SequenceReport(outcomes, dist, min(o.e2_final for o in outcomes))
