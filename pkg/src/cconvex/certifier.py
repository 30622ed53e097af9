"""Sampled certificates of c-convexity from curvature-type sufficient conditions.

Each certifier evaluates the Hessian of ``f`` in orthonormal frames at every
point of a grid and checks a strict matrix inequality with margin ``delta``.
A certificate is a statement about the sampled points only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .curvature import _curvature_operator_batch
from .fields import ScalarField, covariant_hessian
from .geometry import ChartPoint, ManifoldModel, Points, orthonormal_frames
from .mechanics import MechanicalSystem

DEFAULT_DELTA = 1e-9
DEFAULT_RESOLUTION = 64
CRITICAL_GRADIENT = 1e-8


class PreconditionError(ValueError):
    """The chosen certifier does not apply to this system."""


class Theorem(str, enum.Enum):
    GENERAL = "general"
    NATURAL = "natural"
    RIEMANNIAN = "riemannian"
    TWO_DIM = "two_dim"


@dataclass(frozen=True, eq=False)
class Grid:
    points: Points
    resolution: int
    spacing: float
    kind: str

    def describe(self) -> dict:
        return {"kind": self.kind, "resolution": self.resolution, "n_points": len(self.points),
                "spacing": self.spacing}


def make_grid(model: ManifoldModel, resolution: int = DEFAULT_RESOLUTION) -> Grid:
    return Grid(model.grid(resolution), resolution, float(model.grid_spacing(resolution)),
                model.kind)


@dataclass(eq=False)
class Certificate:
    theorem: Theorem
    k: float
    grid: dict
    verdict: bool
    worst_margin: Optional[float]
    worst_point: Optional[ChartPoint]
    caveats: list = field(default_factory=list)
    delta: float = DEFAULT_DELTA

    def to_dict(self) -> dict:
        wm = self.worst_margin
        return {
            "theorem": self.theorem.value,
            "k": self.k,
            "grid": self.grid,
            "verdict": "pass" if self.verdict else "fail",
            "worst_margin": wm if wm is not None and math.isfinite(wm) else None,
            "worst_point": None if self.worst_point is None else {
                "chart": self.worst_point.chart, "coords": self.worst_point.coords.tolist()},
            "caveats": list(self.caveats),
            "delta": self.delta,
        }


def threshold_xi(lam: float, sign_k: int) -> float:
    """``lam coth lam`` (k < 0), ``1`` (k = 0) or ``lam cot lam`` (k > 0), continuous at 0."""
    lam = abs(float(lam))
    if sign_k == 0:
        return 1.0
    if sign_k > 0 and lam >= np.pi:
        raise ValueError(f"lambda = {lam} outside (0, pi): cot threshold undefined")
    if lam < 1e-3:
        l2 = lam * lam
        return 1.0 + l2 / 3.0 - l2 * l2 / 45.0 if sign_k < 0 else 1.0 - l2 / 3.0 - l2 * l2 / 45.0
    return lam / np.tanh(lam) if sign_k < 0 else lam / np.tan(lam)


def _xi_array(lam, sign_k):
    """Vectorised :func:`threshold_xi`; NaN where the cot branch is undefined."""
    lam = np.abs(np.asarray(lam, dtype=float))
    if sign_k == 0:
        return np.ones_like(lam)
    out = np.full(lam.shape, np.nan)
    small = lam < 1e-3
    l2 = lam[small] ** 2
    if sign_k < 0:
        out[small] = 1.0 + l2 / 3.0 - l2 * l2 / 45.0
        out[~small] = lam[~small] / np.tanh(lam[~small])
    else:
        out[small] = 1.0 - l2 / 3.0 - l2 * l2 / 45.0
        ok = ~small & (lam < np.pi)
        out[ok] = lam[ok] / np.tan(lam[ok])
    return out


def _sign(k: float) -> int:
    return 0 if k == 0 else (1 if k > 0 else -1)


def scalar_threshold(k: float) -> float:
    """``theta(k)`` with the condition ``S > -theta(k) I``; NaN if ``k >= pi^2``."""
    return float(_xi_array(np.sqrt(abs(k)), _sign(k)))


def hessian_in_frame(system: MechanicalSystem, f: ScalarField, x: ChartPoint, frame) -> np.ndarray:
    """``S_ij = <Hess f(v_i), v_j>`` for the frame rows ``v_i``."""
    frame = np.asarray(frame, dtype=float)
    _, df, ddf = f.derivatives(x.coords[None], np.array([x.chart]))
    H = covariant_hessian(system.model, df, ddf, x.coords[None])[0]
    S = frame @ H @ frame.T
    return 0.5 * (S + S.T)


def _grid_hessians(system, f, pts):
    model = system.model
    _, df, ddf = f.at(pts)
    H = covariant_hessian(model, df, ddf, pts.coords)
    return df, H


def _frame_hessians(H, frames):
    S = np.einsum("bmi,bij,bkj->bmk", frames, H, frames)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def _caveats(system, grid):
    out = [f"sampled condition: checked on {len(grid.points)} grid points only"]
    if not system.model.compact:
        out.append("non-compact model: the transport conclusions assume a compact manifold")
    return out


def _finish(theorem, k, grid, margins, pts, caveats, delta):
    if margins.size == 0 or not np.any(np.isfinite(margins) | np.isnan(margins)):
        return Certificate(theorem, k, grid.describe(), True, None, None, caveats, delta)
    m = np.where(np.isnan(margins), -np.inf, margins)
    i = int(np.argmin(m))
    worst = float(m[i])
    return Certificate(theorem, float(k), grid.describe(), bool(worst >= delta), worst, pts[i],
                       caveats, delta)


def _apply_rotation(frames, rotation):
    if rotation is None:
        return frames
    Q = np.asarray(rotation, dtype=float)
    return np.einsum("mk,bkj->bmj", Q, frames)


def _threshold_margins(system, f, grid, k, rotation):
    pts = grid.points
    _, H = _grid_hessians(system, f, pts)
    frames = _apply_rotation(orthonormal_frames(system.model, pts.coords), rotation)
    S = _frame_hessians(H, frames)
    theta = scalar_threshold(k)
    return np.linalg.eigvalsh(S)[:, 0] + theta, theta


def certify_natural(system: MechanicalSystem, f: ScalarField, grid: Optional[Grid] = None,
                    delta: float = DEFAULT_DELTA, rotation=None) -> Certificate:
    """Natural mechanical case on a non-positively curved model, ``k = hess_U_bound``."""
    model = system.model
    if model.curvature_bound_k > 0:
        raise PreconditionError(
            "certify_natural needs non-positive sectional curvature; "
            "use certify_riemannian or certify_2d on positively curved models")
    grid = grid or make_grid(model)
    k = float(system.hess_U_bound)
    caveats = _caveats(system, grid)
    margins, theta = _threshold_margins(system, f, grid, k, rotation)
    if not np.isfinite(theta):
        caveats.append(f"k = {k} >= pi^2: the cot threshold is undefined, no f qualifies")
    return _finish(Theorem.NATURAL, k, grid, margins, grid.points, caveats, delta)


def curvature_bound_violation(system: MechanicalSystem, f: ScalarField, pts: Points, k: float):
    """Largest eigenvalue of ``Rbar`` at the states ``df_x`` minus ``k``, per point."""
    model = system.model
    _, df, _ = f.at(pts)
    frames = orthonormal_frames(model, pts.coords)
    RV = _curvature_operator_batch(system, pts.coords, pts.charts, df, frames)
    g = model.metric(pts.coords)
    M = np.einsum("bmi,bij,bkj->bmk", RV, g, frames)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    return np.linalg.eigvalsh(M)[:, -1] - k


def certify_general(system: MechanicalSystem, f: ScalarField, grid: Optional[Grid] = None,
                    k: float = 0.0, delta: float = DEFAULT_DELTA, rotation=None) -> Certificate:
    """Threshold test with a user-supplied curvature bound ``k``.

    The bound ``Rbar <= k I`` is itself checked at the sampled states ``df_x``;
    a violation is reported as a caveat, not as a failed verdict.
    """
    grid = grid or make_grid(system.model)
    caveats = _caveats(system, grid)
    excess = curvature_bound_violation(system, f, grid.points, k)
    bad = excess > delta
    if np.any(bad):
        caveats.append(
            f"curvature bound violated: Rbar <= {k} I fails at {int(bad.sum())} sampled states "
            f"(largest excess {float(excess.max()):.6g})")
    margins, theta = _threshold_margins(system, f, grid, k, rotation)
    if not np.isfinite(theta):
        caveats.append(f"k = {k} >= pi^2: the cot threshold is undefined, no f qualifies")
    return _finish(Theorem.GENERAL, k, grid, margins, grid.points, caveats, delta)


def _gradient_frames(model, pts, df):
    """Orthonormal frames with ``v_1 = grad f / |grad f|`` where the gradient is non-zero."""
    ginv = model.inverse_metric(pts.coords)
    grad = np.einsum("bij,bj->bi", ginv, df)
    norm = np.sqrt(np.einsum("bi,bi->b", grad, df))
    frames = np.empty((len(pts), model.dim, model.dim))
    crit = norm <= CRITICAL_GRADIENT
    if np.any(~crit):
        frames[~crit] = orthonormal_frames(model, pts.coords[~crit], grad[~crit])
    if np.any(crit):
        frames[crit] = orthonormal_frames(model, pts.coords[crit])
    return grad, norm, frames, crit


def certify_riemannian(system: MechanicalSystem, f: ScalarField, grid: Optional[Grid] = None,
                       k: Optional[float] = None, delta: float = DEFAULT_DELTA) -> Certificate:
    """Free (``U = 0``) case with the block bound ``S > diag(-1, -xi(lambda) I)``.

    ``k`` defaults to the model's sectional curvature bound.  At critical points
    of ``f`` the bound degenerates to ``-I``.  For ``k > 0`` every point needs
    ``lambda < pi``.
    """
    if not system.is_free:
        raise PreconditionError("certify_riemannian needs U = 0")
    model = system.model
    grid = grid or make_grid(model)
    k = model.curvature_bound_k if k is None else float(k)
    pts = grid.points
    df, H = _grid_hessians(system, f, pts)
    _, norm, frames, crit = _gradient_frames(model, pts, df)
    S = _frame_hessians(H, frames)
    lam = np.sqrt(abs(k)) * norm
    xi = _xi_array(lam, _sign(k))
    xi[crit] = 1.0
    bound = np.zeros_like(S)
    bound[:, 0, 0] = -1.0
    for j in range(1, model.dim):
        bound[:, j, j] = -xi
    margins = np.linalg.eigvalsh(np.where(np.isnan(bound), 0.0, S - bound))[:, 0]
    margins[np.isnan(xi)] = -np.inf
    caveats = _caveats(system, grid)
    if np.any(np.isnan(xi)):
        caveats.append(f"lambda >= pi at {int(np.isnan(xi).sum())} points: cot threshold undefined")
    if np.any(crit):
        caveats.append(f"{int(crit.sum())} critical points of f checked against -I")
    return _finish(Theorem.RIEMANNIAN, k, grid, margins, pts, caveats, delta)


def two_dim_margins(system: MechanicalSystem, f: ScalarField, pts: Points, k: float):
    """Margins of the two surface inequalities at every point, plus the critical-point mask.

    With ``h1 = <Hess f(grad f), grad f>``, ``h2 = <Hess f(J grad f), J grad f>`` and
    ``xi = xi(sqrt|k| |grad f|)``:
    ``m1 = det Hess f + (xi h1 + h2) / |grad f|^2 + xi`` and
    ``m2 = (h1 + h2) / |grad f|^2 + xi + 1``.
    """
    model = system.model
    df, H = _grid_hessians(system, f, pts)
    grad, norm, frames, crit = _gradient_frames(model, pts, df)
    ginv = model.inverse_metric(pts.coords)
    # J grad f: the unit normal of grad f scaled by |grad f|
    Jgrad = frames[:, 1] * norm[:, None]
    h1 = np.einsum("bi,bij,bj->b", grad, H, grad)
    h2 = np.einsum("bi,bij,bj->b", Jgrad, H, Jgrad)
    det = np.linalg.det(ginv @ H)
    n2 = np.where(crit, 1.0, norm**2)
    xi = _xi_array(np.sqrt(abs(k)) * norm, _sign(k))
    m1 = det + (xi * h1 + h2) / n2 + xi
    m2 = (h1 + h2) / n2 + xi + 1.0
    return m1, m2, crit, xi


def certify_2d(system: MechanicalSystem, f: ScalarField, grid: Optional[Grid] = None,
               k: Optional[float] = None, delta: float = DEFAULT_DELTA) -> Certificate:
    """Surface case: two scalar inequalities at every non-critical sample point."""
    model = system.model
    if model.dim != 2:
        raise PreconditionError("certify_2d needs a two-dimensional model")
    if not system.is_free:
        raise PreconditionError("certify_2d needs U = 0")
    grid = grid or make_grid(model)
    k = model.curvature_bound_k if k is None else float(k)
    m1, m2, crit, xi = two_dim_margins(system, f, grid.points, k)
    margins = np.minimum(m1, m2)
    margins[np.isnan(xi)] = -np.inf
    caveats = _caveats(system, grid)
    if np.any(crit):
        caveats.append(f"{int(crit.sum())} critical points of f skipped (grad f = 0)")
    if np.any(np.isnan(xi)):
        caveats.append(f"lambda >= pi at {int(np.isnan(xi).sum())} points: cot threshold undefined")
    keep = ~crit
    pts = Points(grid.points.coords[keep], grid.points.charts[keep])
    if not np.any(keep):
        caveats.append("no non-critical points: the conditions hold vacuously")
    return _finish(Theorem.TWO_DIM, k, grid, margins[keep], pts, caveats, delta)


def certify(system: MechanicalSystem, f: ScalarField, theorem: str = "auto",
            grid: Optional[Grid] = None, k: Optional[float] = None,
            delta: float = DEFAULT_DELTA) -> Certificate:
    """Dispatch to a certifier; ``auto`` picks natural on non-positive curvature, else riemannian."""
    if theorem == "auto":
        theorem = "natural" if system.model.curvature_bound_k <= 0 else "riemannian"
    if theorem == "natural":
        return certify_natural(system, f, grid, delta)
    if theorem == "riemannian":
        return certify_riemannian(system, f, grid, k, delta)
    if theorem == "two_dim":
        return certify_2d(system, f, grid, k, delta)
    if theorem == "general":
        if k is None:
            raise PreconditionError("certify_general needs an explicit k")
        return certify_general(system, f, grid, k, delta)
    raise ValueError(f"unknown theorem {theorem!r}")
