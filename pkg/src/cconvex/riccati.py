"""Matrix Riccati equations ``S' + S^2 + R(t) = 0``.

Numerical solutions integrate the linear system ``a' = b``, ``b' = -a R`` with
``a_0 = I``, ``b_0 = S_0`` and recover ``S = a^{-1} b``.  The linear system never
blows up, so loss of invertibility of ``a`` (a conjugate point) shows up as a
determinant reaching zero instead of an integrator failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

COND_LIMIT = 1e12
DET_TOL = 1e-9


class ConjugatePointError(ArithmeticError):
    """``Gamma_2(t)`` is singular: the explicit solution does not exist at ``t``."""


@dataclass(frozen=True, eq=False)
class RiccatiTrajectory:
    """Samples of ``S_t``; rows after ``blow_up`` are NaN.

    ``det_a`` holds ``det a_t`` (the numerical ``det Gamma_2``) for every sample,
    including those past the blow-up.
    """

    times: np.ndarray
    S: np.ndarray
    det_a: np.ndarray
    blow_up: Optional[float]
    min_gamma2_det: float

    def bounded(self) -> bool:
        return self.blow_up is None


def _check_symmetric(S0, name="S0"):
    S0 = np.atleast_2d(np.asarray(S0, dtype=float))
    if S0.shape[0] != S0.shape[1]:
        raise ValueError(f"{name} must be square")
    if S0.size and np.abs(S0 - S0.T).max() > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    return S0


def riccati_integrate(R_source: Callable[[float], np.ndarray], S0, t_end: float,
                      step: float = 1e-3, cond_limit: float = COND_LIMIT,
                      det_tol: float = DET_TOL) -> RiccatiTrajectory:
    """RK4 on the linearised system; ``R_source(t)`` returns the coefficient matrix.

    Blow-up is reported at the first time ``a_t`` becomes numerically singular:
    ``cond(a_t) > cond_limit``, ``|det a_t| <= det_tol``, or a sign change of
    ``det a_t`` between samples (located by linear interpolation).
    """
    S0 = _check_symmetric(S0)
    if step <= 0:
        raise ValueError("step must be positive")
    n = S0.shape[0]
    steps = max(1, int(round(t_end / step))) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0
    times = np.linspace(0.0, t_end, steps + 1)
    # Z = [a | b] solves Z' = Z K(t) with K = [[0, -R], [I, 0]]
    Z = np.empty((steps + 1, n, 2 * n))
    Z[0, :, :n] = np.eye(n)
    Z[0, :, n:] = S0
    K0, Km, K1 = (np.zeros((2 * n, 2 * n)) for _ in range(3))
    for K in (K0, Km, K1):
        K[n:, :n] = np.eye(n)
    z = Z[0]
    for i in range(steps):
        t = times[i]
        K0[:n, n:] = -R_source(t)
        Km[:n, n:] = -R_source(t + h / 2)
        K1[:n, n:] = -R_source(t + h)
        k1 = z @ K0
        k2 = (z + h / 2 * k1) @ Km
        k3 = (z + h / 2 * k2) @ Km
        k4 = (z + h * k3) @ K1
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        Z[i + 1] = z
    A, B = Z[:, :, :n], Z[:, :, n:]
    dets = np.linalg.det(A)
    dets[0] = 1.0

    # first sample where a_t is singular, by a sign change of det a_t or by conditioning;
    # cond(a) > limit forces |det a| < |a|_F^n / limit, so the SVD is only needed then
    crossing = np.zeros(steps + 1, dtype=bool)
    crossing[1:] = (np.sign(dets[1:]) != np.sign(dets[:-1])) & (dets[1:] != 0.0)
    singular = np.abs(dets) <= det_tol
    suspicious = np.flatnonzero(~singular & (np.abs(dets) <= np.linalg.norm(A, axis=(1, 2)) ** n
                                             / cond_limit))
    if suspicious.size:
        singular[suspicious] = np.linalg.cond(A[suspicious]) > cond_limit
    singular[0] = False
    events = np.flatnonzero(crossing | singular)
    end = steps + 1
    blow_up = None
    if events.size:
        end = int(events[0])
        if crossing[end]:
            d0, d1 = dets[end - 1], dets[end]
            blow_up = float(times[end - 1] - d0 * h / (d1 - d0))
        else:
            blow_up = float(times[end])
    S = np.full((steps + 1, n, n), np.nan)
    S[0] = S0
    if end > 1:
        Si = np.linalg.solve(A[1:end], B[1:end])
        S[1:end] = 0.5 * (Si + np.swapaxes(Si, -1, -2))
    valid = dets if blow_up is None else dets[times < blow_up]
    return RiccatiTrajectory(times, S, dets, blow_up, float(np.min(valid)) if valid.size else 0.0)


def constant_source(R) -> Callable[[float], np.ndarray]:
    """``R_source`` for a constant coefficient (must return an (n, n) array)."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return lambda t: R


def _gammas(k: float, S0, t: float):
    """Three-branch ``Gamma_1``, ``Gamma_2`` for ``S' + S^2 + k I = 0``."""
    I = np.eye(S0.shape[0])
    if k < 0:
        s = np.sqrt(-k)
        g1 = np.cosh(s * t) * S0 + s * np.sinh(s * t) * I
        g2 = np.sinh(s * t) / s * S0 + np.cosh(s * t) * I
    elif k == 0:
        g1 = S0.copy()
        g2 = t * S0 + I
    else:
        s = np.sqrt(k)
        g1 = np.cos(s * t) * S0 - s * np.sin(s * t) * I
        g2 = np.sin(s * t) / s * S0 + np.cos(s * t) * I
    return g1, g2


def riccati_explicit_constant(k: float, S0, t: float) -> np.ndarray:
    """Closed-form ``Gamma_1(t) Gamma_2(t)^{-1}`` for constant curvature ``k``."""
    S0 = _check_symmetric(S0)
    g1, g2 = _gammas(float(k), S0, float(t))
    if np.linalg.det(g2) < 1e-12:
        raise ConjugatePointError(f"Gamma_2 singular at t = {t} for k = {k}")
    return np.linalg.solve(g2.T, g1.T).T


def riccati_explicit_block(k: float, grad_norm: float, S0, t: float) -> np.ndarray:
    """Closed form for ``R = diag(0, k |grad f|^2 I)`` with the free direction first.

    ``lambda = sqrt|k| |grad f|``; the first coordinate evolves as in the flat
    case and the complement with the trigonometric or hyperbolic branch.
    """
    S0 = _check_symmetric(S0)
    n = S0.shape[0]
    lam = np.sqrt(abs(k)) * grad_norm
    t = float(t)
    if k == 0 or lam == 0.0:
        g1 = S0.copy()
        g2 = t * S0 + np.eye(n)
    else:
        if k < 0:
            c, sl = np.cosh(lam * t), lam * np.sinh(lam * t)
            sdiv = np.sinh(lam * t) / lam
            sign = 1.0
        else:
            c, sl = np.cos(lam * t), lam * np.sin(lam * t)
            sdiv = np.sin(lam * t) / lam
            sign = -1.0
        D1 = np.diag([1.0] + [c] * (n - 1))
        D2 = np.diag([0.0] + [sl] * (n - 1))
        D3 = np.diag([t] + [sdiv] * (n - 1))
        D4 = np.diag([1.0] + [c] * (n - 1))
        g1 = D1 @ S0 + sign * D2
        g2 = D3 @ S0 + D4
    if np.linalg.det(g2) < 1e-12:
        raise ConjugatePointError(f"Gamma_2 singular at t = {t}")
    return g1 @ np.linalg.inv(g2)


def blow_up_threshold(k: float) -> float:
    """Largest scalar ``s`` for which ``S0 = s`` blows up by ``t = 1`` under constant ``k``.

    ``-sqrt|k| coth sqrt|k|``, ``-1`` or ``-sqrt k cot sqrt k``; ``inf`` for
    ``k >= pi^2`` (every initial value blows up).
    """
    if k < 0:
        s = np.sqrt(-k)
        return -s / np.tanh(s)
    if k == 0:
        return -1.0
    s = np.sqrt(k)
    if s >= np.pi:
        return np.inf
    return -s / np.tan(s)


@dataclass(frozen=True)
class ComparisonReport:
    holds: bool
    min_gap: float
    worst_time: float
    samples_checked: int
    slack: float


def comparison_check(traj1: RiccatiTrajectory, traj2: RiccatiTrajectory,
                     slack: float = 1e-9) -> ComparisonReport:
    """Check ``S1_t <= S2_t`` (up to ``slack``) on every common sample before a blow-up."""
    if traj1.times.shape != traj2.times.shape or not np.allclose(traj1.times, traj2.times):
        raise ValueError("trajectories must share a time grid")
    gap0 = np.linalg.eigvalsh(traj2.S[0] - traj1.S[0]).min()
    if not gap0 > 0:
        raise ValueError("initial matrices must satisfy S1_0 < S2_0")
    ends = [tr.blow_up for tr in (traj1, traj2) if tr.blow_up is not None]
    stop = min(ends) if ends else np.inf
    min_gap = np.inf
    worst = 0.0
    count = 0
    for t, a, b in zip(traj1.times, traj1.S, traj2.S):
        if t >= stop or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            break
        gap = np.linalg.eigvalsh(b - a).min()
        count += 1
        if gap < min_gap:
            min_gap, worst = float(gap), float(t)
    return ComparisonReport(bool(min_gap > -slack), float(min_gap), worst, count, slack)
