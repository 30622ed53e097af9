"""Candidate optimal maps and their empirical verification.

The map is ``phi(x) = pi(phi_1(df_x))``.  Three independent checks are offered:
a brute-force double c-transform on a grid, an exact assignment problem on
random samples, and the Hamilton-Jacobi evolution of ``f`` along
characteristics.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .certifier import Certificate
from .fields import ScalarField, covariant_hessian
from .geometry import ManifoldModel, Points
from .mechanics import DEFAULT_STEP, MechanicalSystem, cost_matrix, hamiltonian_batch, integrate

MAX_ASSIGNMENT = 512
MIN_GRID = 16
FAILURE_FRACTION = 0.01
MAX_SHOOTING_PAIRS = 1 << 14
SHOOTING_STEP = 1e-2


class OracleUnreliableError(RuntimeError):
    """Too many cost evaluations failed for a brute-force answer to mean anything."""


class NonDiffeomorphismError(RuntimeError):
    """Characteristics cross: ``phi_t`` is not injective on the samples."""


class TransportError(RuntimeError):
    """Per-point failures (chart escapes) while building images."""


# -- small chart helpers -------------------------------------------------------

def _displacement(model: ManifoldModel, base, cbase, other, cother):
    """``other - base`` in the charts of ``base``."""
    return -model.chart_difference(other, cother, base, cbase)


def _covector_into(model: ManifoldModel, p, coords, charts, target):
    """Re-express covectors at ``coords`` in chart ``target``."""
    _, jac = model.to_chart(coords, charts, target)
    return np.linalg.solve(np.swapaxes(jac, -1, -2), p[..., None])[..., 0]


def _points_json(pts: Points):
    return [{"chart": int(c), "coords": [float(v) for v in x]}
            for x, c in zip(pts.coords, pts.charts)]


# -- the map ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MapImages:
    """Images ``phi(x_i)``; failed rows hold NaN and an entry in ``errors``."""

    points: Points
    covectors: np.ndarray
    errors: dict

    @property
    def ok(self) -> np.ndarray:
        mask = np.ones(len(self.points), dtype=bool)
        mask[list(self.errors)] = False
        return mask


def build_map(system: MechanicalSystem, f: ScalarField, points: Points,
              step: float = DEFAULT_STEP, t: float = 1.0) -> MapImages:
    _, df, _ = f.at(points)
    res = integrate(system, points.coords, points.charts, df, t, step=step)
    coords = res.coords.copy()
    errors = {}
    for i in np.flatnonzero(res.escaped):
        errors[int(i)] = f"left the chart domain at t = {res.escape_time[i]:.6g}"
        coords[i] = np.nan
    return MapImages(Points(coords, res.charts), res.p, errors)


# -- brute-force c-transform -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CTransformResult:
    grid: dict
    points: Points
    f: np.ndarray
    f_c: np.ndarray
    f_cc: np.ndarray
    max_defect: float
    tol_grid: float
    worst_index: int
    failed_pairs: int

    @property
    def is_c_convex(self) -> bool:
        return self.max_defect <= self.tol_grid

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "max_defect": self.max_defect,
            "tol_grid": self.tol_grid,
            "is_c_convex": self.is_c_convex,
            "worst_point": _points_json(Points(self.points.coords[[self.worst_index]],
                                               self.points.charts[[self.worst_index]]))[0],
            "failed_pairs": self.failed_pairs,
            "f": self.f.tolist(),
            "f_c": self.f_c.tolist(),
            "f_cc": self.f_cc.tolist(),
        }


def hessian_norm_bound(model: ManifoldModel, f: ScalarField, pts: Points) -> float:
    """Largest metric operator norm of ``Hess f`` over ``pts``."""
    _, df, ddf = f.at(pts)
    H = covariant_hessian(model, df, ddf, pts.coords)
    L = np.linalg.cholesky(model.inverse_metric(pts.coords))
    M = np.swapaxes(L, -1, -2) @ H @ L
    return float(np.abs(np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))).max())


def _free_cost_rows(model, X, Y, rows):
    Xr = X.coords[rows]
    n_r, n_y = len(rows), len(Y)
    d = model.distance_batch(np.repeat(Xr, n_y, axis=0), np.repeat(X.charts[rows], n_y),
                             np.tile(Y.coords, (n_r, 1)), np.tile(Y.charts, n_r))
    return 0.5 * d.reshape(n_r, n_y) ** 2


def _blocks(n, width):
    for s in range(0, n, width):
        yield np.arange(s, min(s + width, n))


def c_transform(system: MechanicalSystem, f: ScalarField, resolution: int = 64,
                step: float = SHOOTING_STEP, block_pairs: int = 1 << 21) -> CTransformResult:
    """``f^c(y) = min_x [c(x, y) + f(x)]`` and ``f^cc(x) = max_y [f^c(y) - c(x, y)]`` on a grid.

    Declared c-convex when ``max |f - f^cc| <= 10 (|Hess f|_max + 1) h^2``.  With a
    potential every pair is a shooting problem (``step`` is the shooting step),
    so the grid is capped at ``MAX_SHOOTING_PAIRS`` pairs.
    """
    if resolution < MIN_GRID:
        raise ValueError(f"grid resolution must be at least {MIN_GRID} per dimension")
    model = system.model
    pts = model.grid(resolution)
    N = len(pts)
    fv = f.at(pts)[0]
    failed = 0
    if system.is_free:
        width = max(1, block_pairs // N)
        f_c = np.empty(N)
        # f^c(y) needs a column reduction; C is symmetric for the free cost
        for rows in _blocks(N, width):
            C = _free_cost_rows(model, pts, pts, rows)
            f_c[rows] = np.min(C + fv[None, :], axis=1)
        f_cc = np.empty(N)
        for rows in _blocks(N, width):
            C = _free_cost_rows(model, pts, pts, rows)
            f_cc[rows] = np.max(f_c[None, :] - C, axis=1)
    else:
        if N * N > MAX_SHOOTING_PAIRS:
            raise ValueError(f"{N * N} shooting problems requested; with a potential the grid "
                             f"may hold at most {MAX_SHOOTING_PAIRS} pairs")
        C, ok = cost_matrix(system, pts, pts, step=step)
        failed = int((~ok).sum())
        if failed > FAILURE_FRACTION * C.size:
            raise OracleUnreliableError(
                f"cost shooting failed on {failed} of {C.size} pairs")
        C = np.where(ok, C, np.inf)
        f_c = np.min(C + fv[:, None], axis=0)
        f_cc = np.max(f_c[None, :] - C, axis=1)
    defect = np.abs(fv - f_cc)
    h = float(model.grid_spacing(resolution))
    tol = 10.0 * (hessian_norm_bound(model, f, pts) + 1.0) * h * h
    grid = {"kind": model.kind, "resolution": resolution, "n_points": N, "spacing": h}
    i = int(np.argmax(defect))
    return CTransformResult(grid, pts, fv, f_c, f_cc, float(defect[i]), tol, i, failed)


# -- exact assignment -----------------------------------------------------------------

def assignment_oracle(cost) -> tuple:
    """Exact minimum-cost perfect matching; returns ``(perm, value)`` with ``i -> perm[i]``."""
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("cost matrix must be square")
    if C.shape[0] > MAX_ASSIGNMENT:
        raise ValueError(f"at most {MAX_ASSIGNMENT} points are supported, got {C.shape[0]}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(C.shape[0], dtype=int)
    perm[rows] = cols
    return perm, float(C[rows, cols].sum())


def brute_force_assignment(cost) -> tuple:
    """Exhaustive search over permutations (small ``N`` only)."""
    C = np.asarray(cost, dtype=float)
    n = C.shape[0]
    best, best_perm = math.inf, None
    idx = np.arange(n)
    for perm in itertools.permutations(range(n)):
        v = C[idx, perm].sum()
        if v < best:
            best, best_perm = v, perm
    return np.array(best_perm), float(best)


# -- Hamilton-Jacobi evolution ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HJEvolution:
    """``f_t`` sampled at ``images = phi_t(base)``, with the covectors ``(df_t)`` there."""

    t: float
    base: Points
    images: Points
    covectors: np.ndarray
    f0: np.ndarray
    values: np.ndarray
    jacobian_det: Optional[np.ndarray]


def _hj_action_rhs(system):
    def rhs(t, coords, charts, p, v, pdot, U, aux):
        H = 0.5 * np.einsum("...i,...i->...", p, v) + U
        return {"value": np.einsum("...i,...i->...", p, v) - H}
    return rhs


def _characteristics(system, f, coords, charts, t, step):
    val, df, _ = f.derivatives(coords, charts)
    res = integrate(system, coords, charts, df, t, step=step, aux={"value": val},
                    aux_rhs=_hj_action_rhs(system))
    if np.any(res.escaped):
        bad = np.flatnonzero(res.escaped)
        raise TransportError(f"{bad.size} characteristics left the chart domain (first: {bad[0]})")
    return res, val


def _perturbed(coords, charts, h):
    """Rows ``x + h e_k`` then ``x - h e_k`` for every point, shape (2n, N, n)."""
    n = coords.shape[1]
    eye = np.eye(n)
    shifted = np.concatenate([coords[None] + h * eye[:, None, :], coords[None] - h * eye[:, None, :]])
    return shifted, np.broadcast_to(charts, shifted.shape[:2])


def _image_differences(system, f, base: Points, images: Points, t, step, h):
    """Central differences of images and values across neighbouring characteristics.

    Returns ``(dY, dF)`` with ``dY[:, :, k] = (y(x + h e_k) - y(x - h e_k)) / 2h`` in the
    image charts and ``dF[:, k]`` the matching difference of ``f_t`` values.
    """
    model = system.model
    N, n = base.coords.shape
    shifted, sc = _perturbed(base.coords, base.charts, h)
    res, _ = _characteristics(system, f, shifted.reshape(-1, n), sc.reshape(-1), t, step)
    yc = res.coords.reshape(2 * n, N, n)
    ych = res.charts.reshape(2 * n, N)
    vals = res.aux["value"].reshape(2 * n, N)
    disp = np.stack([_displacement(model, images.coords, images.charts, yc[j], ych[j])
                     for j in range(2 * n)])
    dY = np.moveaxis((disp[:n] - disp[n:]) / (2 * h), 0, -1)
    dF = np.moveaxis((vals[:n] - vals[n:]) / (2 * h), 0, -1)
    return dY, dF


def evolve_potential(system: MechanicalSystem, f: ScalarField, t: float, base: Points,
                     step: float = DEFAULT_STEP, check_injective: bool = True,
                     fd_step: float = 1e-6, position_tol: float = 1e-9,
                     value_tol: float = 1e-6) -> HJEvolution:
    """``f_t(phi_t(x)) = f(x) + int_0^t (p . dx/ds - H) ds`` along each characteristic.

    With ``check_injective`` the map ``x -> phi_t(x)`` must keep a positive
    Jacobian determinant at every sample (no fold), and no two samples may land
    within ``position_tol`` of each other with values differing by more than
    ``value_tol``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    model = system.model
    res, f0 = _characteristics(system, f, base.coords, base.charts, t, step)
    images = Points(res.coords, res.charts)
    values = res.aux["value"]
    det = None
    if check_injective:
        dY, _ = _image_differences(system, f, base, images, t, step, fd_step)
        det = np.linalg.det(dY) * model.orientation(images.charts) * model.orientation(base.charts)
        if np.any(det <= 0.0):
            i = int(np.argmin(det))
            raise NonDiffeomorphismError(
                f"characteristics cross: Jacobian determinant {det[i]:.3g} at sample {i}")
        _check_collisions(model, images, values, position_tol, value_tol)
    return HJEvolution(float(t), base, images, res.p, f0, values, det)


def _check_collisions(model, images: Points, values, position_tol, value_tol, block=512):
    N = len(images)
    for rows in _blocks(N, block):
        m = len(rows)
        d = model.distance_batch(np.repeat(images.coords[rows], N, axis=0),
                                 np.repeat(images.charts[rows], N),
                                 np.tile(images.coords, (m, 1)), np.tile(images.charts, m))
        d = d.reshape(m, N)
        close = (d <= position_tol) & (np.abs(values[rows][:, None] - values[None, :]) > value_tol)
        if np.any(close):
            i, j = np.argwhere(close)[0]
            raise NonDiffeomorphismError(
                f"samples {rows[i]} and {j} meet with inconsistent values "
                f"{values[rows[i]]:.9g} and {values[j]:.9g}")


@dataclass(frozen=True)
class HJValidation:
    covector_error: float
    hj_residual: float
    n_characteristics: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.covector_error <= tol and self.hj_residual <= tol


def validate_hj(system: MechanicalSystem, f: ScalarField, t: float, base: Points,
                step: float = DEFAULT_STEP, h: float = 1e-5, dt: float = 1e-3) -> HJValidation:
    """Finite-difference consistency of the evolved potential.

    (i) Differences of ``f_t`` across neighbouring characteristics, solved for a
    covector, must reproduce the flowed covector.  (ii) A central difference in
    time at a fixed point, corrected to first order for the moving foot point,
    must satisfy ``d_t f_t + H(x, df_t) = 0``.
    """
    model = system.model
    ev = evolve_potential(system, f, t, base, step, check_injective=False)
    dY, dF = _image_differences(system, f, base, ev.images, t, step, h)
    p_est = np.linalg.solve(np.swapaxes(dY, -1, -2), dF[..., None])[..., 0]
    cov_err = float(np.abs(p_est - ev.covectors).max())

    y, cy = ev.images.coords, ev.images.charts
    rates = []
    for s in (t + dt, t - dt):
        if s < 0:
            raise ValueError("t must be at least dt for the temporal check")
        other, _ = _characteristics(system, f, base.coords, base.charts, s, step)
        delta = _displacement(model, other.coords, other.charts, y, cy)
        # f_s(y) ~ f_s(y_s) + <df_s, y - y_s>, all in the chart of y_s
        rates.append(other.aux["value"] + np.einsum("bi,bi->b", other.p, delta))
    dfdt = (rates[0] - rates[1]) / (2 * dt)
    residual = dfdt + hamiltonian_batch(system, y, cy, ev.covectors)
    return HJValidation(cov_err, float(np.abs(residual).max()), len(base))


# -- empirical optimality ----------------------------------------------------------------------

@dataclass(eq=False)
class TransportReport:
    sample_points: Points
    images: Points
    monge_cost: float
    assignment_cost: float
    assignment_is_identity: bool
    duality_gap: float
    permutation: np.ndarray
    seed: int
    max_dual_violation: float
    certified: Optional[bool] = None
    caveats: list = field(default_factory=list)

    @property
    def identity_optimal(self) -> bool:
        """The identity matching attains the optimum (ties allowed)."""
        return self.monge_cost - self.assignment_cost <= 1e-9

    @property
    def optimality_gap(self) -> float:
        return self.monge_cost - self.assignment_cost

    def to_dict(self) -> dict:
        return {
            "N": len(self.sample_points),
            "seed": self.seed,
            "monge_cost": self.monge_cost,
            "assignment_cost": self.assignment_cost,
            "optimality_gap": self.optimality_gap,
            "assignment_is_identity": self.assignment_is_identity,
            "identity_optimal": self.identity_optimal,
            "duality_gap": self.duality_gap,
            "max_dual_violation": self.max_dual_violation,
            "certified": self.certified,
            "caveats": list(self.caveats),
            "permutation": self.permutation.tolist(),
            "sample_points": _points_json(self.sample_points),
            "images": _points_json(self.images),
        }


def verify_optimality(system: MechanicalSystem, f: ScalarField, N: int = 100, seed: int = 0,
                      step: float = DEFAULT_STEP,
                      certificate: Optional[Certificate] = None) -> TransportReport:
    """Compare the map against the exact optimum of the sampled assignment problem."""
    if N < 1 or N > MAX_ASSIGNMENT:
        raise ValueError(f"N must lie in [1, {MAX_ASSIGNMENT}]")
    model = system.model
    X = model.sample_uniform(N, np.random.default_rng(seed))
    ev = evolve_potential(system, f, 1.0, X, step, check_injective=False)
    Y = ev.images
    C, ok = cost_matrix(system, X, Y, step=step)
    if not np.all(ok):
        raise OracleUnreliableError(f"cost evaluation failed on {int((~ok).sum())} pairs")
    perm, value = assignment_oracle(C)
    monge = float(np.mean(np.diag(C)))
    duality = abs(monge - (float(np.mean(ev.values)) - float(np.mean(ev.f0))))
    # f_1(y_j) - f_0(x_i) <= c(x_i, y_j)
    violation = float(np.max(ev.values[None, :] - ev.f0[:, None] - C))
    caveats = []
    if not model.compact:
        caveats.append("non-compact model: samples come from a bounded region")
    return TransportReport(X, Y, monge, value / N, bool(np.all(perm == np.arange(N))), duality,
                           perm, int(seed), violation,
                           None if certificate is None else bool(certificate.verdict), caveats)


def write_pairs_csv(path, report: TransportReport) -> None:
    """One row per sample: index, base chart and coordinates, image chart and coordinates."""
    n = report.sample_points.coords.shape[1]
    header = (["i", "x_chart"] + [f"x{k}" for k in range(n)]
              + ["y_chart"] + [f"y{k}" for k in range(n)] + ["matched"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        X, Y = report.sample_points, report.images
        for i in range(len(X)):
            w.writerow([i, int(X.charts[i])] + [repr(float(v)) for v in X.coords[i]]
                       + [int(Y.charts[i])] + [repr(float(v)) for v in Y.coords[i]]
                       + [int(report.permutation[i])])
