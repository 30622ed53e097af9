"""Natural mechanical systems ``H(x, p) = |p|^2 / 2 + U(x)``: flows, actions and costs.

The flow is classical fixed-step RK4 in chart coordinates.  After each full
step points are re-normalised into their preferred chart and covectors are
transported with the inverse-transpose chart Jacobian.  All heavy lifting is
batched over many initial states at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .fields import ConstantField, ScalarField, covariant_hessian
from .geometry import ChartPoint, ManifoldModel, Points

log = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3


class ChartEscapeError(RuntimeError):
    """A trajectory left the (truncated) atlas."""

    def __init__(self, exit_time: float, message: str = ""):
        self.exit_time = float(exit_time)
        super().__init__(message or f"trajectory left the chart atlas at t = {exit_time:.6g}")


class NoConvergenceError(RuntimeError):
    """Newton shooting did not reach the requested endpoint residual."""


def metric_eigenvalues(H, g) -> np.ndarray:
    """Eigenvalues of the symmetric form ``H`` relative to the metric ``g`` (batched)."""
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    M = Linv @ H @ np.swapaxes(Linv, -1, -2)
    return np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))


def estimate_hessian_bound(model: ManifoldModel, U: ScalarField, resolution: int = 64) -> float:
    """Largest eigenvalue of ``Hess U`` over a sample grid."""
    if U.is_zero:
        return 0.0
    pts = model.grid(resolution)
    _, dU, ddU = U.at(pts)
    H = covariant_hessian(model, dU, ddU, pts.coords)
    return float(metric_eigenvalues(H, model.metric(pts.coords)).max())


@dataclass(frozen=True)
class MechanicalSystem:
    """``L = |v|^2 / 2 - U``; ``hess_U_bound`` is the least ``k`` with ``Hess U <= k I``."""

    model: ManifoldModel
    potential: Optional[ScalarField] = None
    hess_U_bound: Optional[float] = None

    def __post_init__(self):
        if self.potential is None:
            object.__setattr__(self, "potential", ConstantField(self.model, 0.0))
        if self.potential.model is not self.model and self.potential.model != self.model:
            raise ValueError("potential is defined on a different model")
        if self.hess_U_bound is None:
            object.__setattr__(self, "hess_U_bound",
                               estimate_hessian_bound(self.model, self.potential))

    @classmethod
    def free(cls, model: ManifoldModel) -> "MechanicalSystem":
        return cls(model)

    @property
    def is_free(self) -> bool:
        return self.potential.is_zero

    @property
    def dim(self) -> int:
        return self.model.dim

    def describe(self) -> dict:
        return {"potential": self.potential.describe(), "hess_U_bound": self.hess_U_bound}


@dataclass(frozen=True, eq=False)
class CotangentState:
    x: ChartPoint
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class FlowResult:
    times: np.ndarray
    states: list
    energy_drift: float
    step: float

    @property
    def final(self) -> CotangentState:
        return self.states[-1]


# -- batched core ----------------------------------------------------------------

def _rhs(system: MechanicalSystem, coords, charts, p):
    model = system.model
    ginv = model.inverse_metric(coords)
    v = np.einsum("...ij,...j->...i", ginv, p)
    G = model.christoffel(coords)
    Uval, dU, _ = system.potential.derivatives(coords, charts)
    # p_k' = Gamma^l_ka v^a p_l - d_k U
    pdot = np.einsum("...lka,...a,...l->...k", G, v, p) - dU
    return v, pdot, Uval


def hamiltonian_batch(system: MechanicalSystem, coords, charts, p) -> np.ndarray:
    ginv = system.model.inverse_metric(coords)
    U = system.potential.derivatives(coords, charts)[0]
    return 0.5 * np.einsum("...i,...ij,...j->...", p, ginv, p) + U


def phase_velocity_batch(system: MechanicalSystem, coords, charts, p):
    v, pdot, _ = _rhs(system, coords, charts, p)
    return v, pdot


AuxRhs = Callable[..., dict]


@dataclass
class BatchFlow:
    """Final (or recorded) output of :func:`integrate`."""

    coords: np.ndarray
    charts: np.ndarray
    p: np.ndarray
    aux: dict
    escape_time: np.ndarray
    energy_drift: np.ndarray
    step: float
    record: Optional[list] = None

    @property
    def escaped(self) -> np.ndarray:
        return np.isfinite(self.escape_time)


def integrate(system: MechanicalSystem, coords, charts, p, t_end: float,
              step: float = DEFAULT_STEP, aux: Optional[dict] = None,
              aux_rhs: Optional[AuxRhs] = None,
              aux_chart: Optional[Callable[[dict, np.ndarray, np.ndarray], dict]] = None,
              record: bool = False) -> BatchFlow:
    """RK4 for the Hamiltonian flow of many states, with optional auxiliary ODEs.

    ``aux_rhs(t, coords, charts, p, v, pdot, U, aux)`` returns derivatives of the
    auxiliary arrays; ``aux_chart(aux, jac, moved)`` re-expresses them after a
    chart switch.  Escaped trajectories are frozen at their last valid state.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    model = system.model
    x = np.array(np.atleast_2d(coords), dtype=float)
    c = np.array(charts, dtype=int).reshape(-1)
    if c.size == 1 and x.shape[0] > 1:
        c = np.full(x.shape[0], c[0])
    q = np.array(np.atleast_2d(p), dtype=float)
    aux = {k: np.array(a, dtype=float) for k, a in (aux or {}).items()}
    N = x.shape[0]
    n_steps = int(round(t_end / step)) if t_end > 0 else 0
    if t_end > 0:
        n_steps = max(n_steps, 1)
    h = t_end / n_steps if n_steps else 0.0

    escape = np.full(N, np.inf)
    escape[~model.in_domain(x, c)] = 0.0
    H0 = hamiltonian_batch(system, x, c, q)
    drift = np.zeros(N)
    rec = [] if record else None
    if record:
        rec.append((0.0, x.copy(), c.copy(), q.copy(), {k: a.copy() for k, a in aux.items()}))

    def deriv(t, xs, ps, auxs):
        v, pdot, U = _rhs(system, xs, c, ps)
        da = aux_rhs(t, xs, c, ps, v, pdot, U, auxs) if aux_rhs is not None else {}
        return v, pdot, da

    def shift(xs, ps, auxs, k, a):
        return (xs + a * k[0], ps + a * k[1], {key: auxs[key] + a * k[2][key] for key in auxs})

    for i in range(n_steps):
        t = i * h
        k1 = deriv(t, x, q, aux)
        k2 = deriv(t + h / 2, *shift(x, q, aux, k1, h / 2))
        k3 = deriv(t + h / 2, *shift(x, q, aux, k2, h / 2))
        k4 = deriv(t + h, *shift(x, q, aux, k3, h))
        xn = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        qn = q + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        auxn = {key: aux[key] + h / 6 * (k1[2][key] + 2 * k2[2][key] + 2 * k3[2][key] + k4[2][key])
                for key in aux}
        xn, cn, jac = model.normalize(xn, c)
        moved = cn != c
        if np.any(moved):
            qn[moved] = np.linalg.solve(np.swapaxes(jac[moved], -1, -2), qn[moved][..., None])[..., 0]
            if aux_chart is not None:
                auxn = aux_chart(auxn, jac, moved)
        alive = ~np.isfinite(escape)
        out = alive & ~model.in_domain(xn, cn)
        escape[out] = t + h
        keep = alive & ~out
        x = np.where(keep[:, None], xn, x)
        c = np.where(keep, cn, c)
        q = np.where(keep[:, None], qn, q)
        aux = {key: np.where(keep.reshape((-1,) + (1,) * (aux[key].ndim - 1)), auxn[key], aux[key])
               for key in aux}
        Hn = hamiltonian_batch(system, x, c, q)
        drift = np.where(keep, np.maximum(drift, np.abs(Hn - H0)), drift)
        if record:
            rec.append((t + h, x.copy(), c.copy(), q.copy(), {k: a.copy() for k, a in aux.items()}))

    return BatchFlow(x, c, q, aux, escape, drift, h, rec)


# -- single-state operations --------------------------------------------------

def hamiltonian(system: MechanicalSystem, state: CotangentState) -> float:
    """``p^T g^{-1} p / 2 + U(x)``."""
    return float(hamiltonian_batch(system, state.x.coords[None], np.array([state.x.chart]),
                                   state.p[None])[0])


def hamiltonian_vector_field(system: MechanicalSystem, state: CotangentState) -> np.ndarray:
    """Phase velocity ``(dH/dp, -dH/dx)`` as a 2n vector."""
    v, pdot = phase_velocity_batch(system, state.x.coords[None], np.array([state.x.chart]),
                                   state.p[None])
    return np.concatenate([v[0], pdot[0]])


def flow(system: MechanicalSystem, state0: CotangentState, t_end: float,
         step: float = DEFAULT_STEP) -> FlowResult:
    """Sample the Hamiltonian flow of ``state0`` on ``[0, t_end]``."""
    if not 0.0 <= t_end <= 10.0:
        raise ValueError("t_end must lie in [0, 10]")
    res = integrate(system, state0.x.coords[None], np.array([state0.x.chart]), state0.p[None],
                    t_end, step, record=True)
    if res.escaped[0]:
        raise ChartEscapeError(res.escape_time[0])
    times = np.array([r[0] for r in res.record])
    states = [CotangentState(ChartPoint(int(r[2][0]), r[1][0]), r[3][0]) for r in res.record]
    return FlowResult(times, states, float(res.energy_drift[0]), res.step)


def richardson_error(system: MechanicalSystem, state0: CotangentState, t_end: float,
                     step: float = DEFAULT_STEP) -> float:
    """Estimated RK4 endpoint error from a step-halving comparison."""
    args = (state0.x.coords[None], np.array([state0.x.chart]), state0.p[None], t_end)
    a = integrate(system, *args, step=step)
    b = integrate(system, *args, step=step / 2)
    dx = system.model.chart_difference(a.coords, a.charts, b.coords, b.charts)
    _, jac = system.model.to_chart(a.coords, a.charts, b.charts)
    pa = np.linalg.solve(np.swapaxes(jac, -1, -2), a.p[..., None])[..., 0]
    return float(np.sqrt(np.sum(dx**2) + np.sum((b.p - pa) ** 2)) / 15.0)


@dataclass(frozen=True, eq=False)
class Curve:
    """A time-sampled curve: ``times`` on [0, 1], chart ``points`` and coordinate ``velocities``."""

    times: np.ndarray
    points: Points
    velocities: np.ndarray


def action(system: MechanicalSystem, curve: Curve) -> float:
    """Composite Simpson quadrature of ``|v|^2 / 2 - U`` along ``curve``."""
    pts = curve.points
    g = system.model.metric(pts.coords)
    v = np.atleast_2d(curve.velocities)
    U = system.potential.derivatives(pts.coords, pts.charts)[0]
    lag = 0.5 * np.einsum("bi,bij,bj->b", v, g, v) - U
    return float(simpson(lag, x=np.asarray(curve.times, dtype=float)))


def curve_from_flow(system: MechanicalSystem, result: FlowResult) -> Curve:
    pts = Points.of([s.x for s in result.states])
    ginv = system.model.inverse_metric(pts.coords)
    p = np.array([s.p for s in result.states])
    return Curve(result.times, pts, np.einsum("bij,bj->bi", ginv, p))


def _action_rhs(t, coords, charts, p, v, pdot, U, aux):
    return {"action": 0.5 * np.einsum("...i,...i->...", p, v) - U}


@dataclass
class ShootingResult:
    p0: np.ndarray
    cost: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    iterations: int


def shoot(system: MechanicalSystem, X: Points, Y: Points, step: float = DEFAULT_STEP,
          tol: float = 1e-8, max_iter: int = 50, fd_step: float = 1e-6) -> ShootingResult:
    """Newton shooting on the initial covector for the extremals ``X[i] -> Y[i]`` in unit time.

    The initial guess is the metric dual of the geodesic log map, so the
    extremal found is the one reached from the geodesic.  It is the minimiser
    whenever the action is strictly convex along unit-time curves, which holds
    for free systems below the cut locus and for ``|Hess U| < pi^2`` on flat
    models.  For stronger potentials several extremals can join the same pair
    and the returned cost is only an upper bound for ``c``.
    """
    model = system.model
    N, n = X.coords.shape
    g = model.metric(X.coords)
    p = np.einsum("bij,bj->bi", g, model.log_batch(X.coords, X.charts, Y.coords, Y.charts))
    converged = np.zeros(N, dtype=bool)
    residual = np.full(N, np.inf)
    cost = np.full(N, np.nan)
    it = 0
    for it in range(max_iter + 1):
        pending = ~converged
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        m = idx.size
        eps = fd_step * np.maximum(1.0, np.linalg.norm(p[idx], axis=1))
        trial = [p[idx]]
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            trial.append(p[idx] + eps[:, None] * e)
            trial.append(p[idx] - eps[:, None] * e)
        P = np.concatenate(trial)
        Xc = np.tile(X.coords[idx], (2 * n + 1, 1))
        Xch = np.tile(X.charts[idx], 2 * n + 1)
        res = integrate(system, Xc, Xch, P, 1.0, step,
                        aux={"action": np.zeros(len(P))}, aux_rhs=_action_rhs)
        Yc = np.tile(Y.coords[idx], (2 * n + 1, 1))
        Ych = np.tile(Y.charts[idx], 2 * n + 1)
        r = -model.chart_difference(res.coords, res.charts, Yc, Ych)
        r[res.escaped] = np.nan
        r = r.reshape(2 * n + 1, m, n)
        r0 = r[0]
        rn = np.linalg.norm(r0, axis=1)
        residual[idx] = rn
        cost[idx] = res.aux["action"][:m]
        ok = rn <= tol
        converged[idx[ok]] = True
        if it == max_iter:
            break
        J = np.stack([(r[1 + 2 * j] - r[2 + 2 * j]) / (2 * eps[:, None]) for j in range(n)], axis=-1)
        act = ~ok & np.all(np.isfinite(J), axis=(1, 2)) & np.isfinite(rn)
        if np.any(act):
            delta = np.einsum("bij,bj->bi", np.linalg.pinv(J[act]), r0[act])
            p[idx[act]] -= _damped(system, X, Y, idx[act], p[idx[act]], delta, rn[act], step)
    return ShootingResult(p, cost, residual, converged, it)


def _endpoint_residual(system, X, Y, idx, p, step):
    res = integrate(system, X.coords[idx], X.charts[idx], p, 1.0, step)
    r = -system.model.chart_difference(res.coords, res.charts, Y.coords[idx], Y.charts[idx])
    rn = np.linalg.norm(r, axis=1)
    rn[res.escaped] = np.inf
    return rn


def _damped(system, X, Y, idx, p, delta, rn, step, halvings: int = 8):
    """Backtrack the Newton step until the endpoint residual decreases."""
    lam = np.ones(len(idx))
    pending = np.ones(len(idx), dtype=bool)
    for _ in range(halvings):
        sel = np.flatnonzero(pending)
        trial = _endpoint_residual(system, X, Y, idx[sel], p[sel] - lam[sel, None] * delta[sel],
                                   step)
        better = trial < rn[sel]
        pending[sel[better]] = False
        lam[sel[~better]] *= 0.5
        if not pending.any():
            break
    return lam[:, None] * delta


def cost_batch(system: MechanicalSystem, X: Points, Y: Points, step: float = DEFAULT_STEP,
               tol: float = 1e-8) -> tuple:
    """Pairwise ``c(X[i], Y[i])``; returns ``(costs, converged mask)``."""
    if system.is_free:
        d = system.model.distance_batch(X.coords, X.charts, Y.coords, Y.charts)
        return 0.5 * d**2, np.ones(len(X), dtype=bool)
    res = shoot(system, X, Y, step=step, tol=tol)
    return res.cost, res.converged


def cost(system: MechanicalSystem, x: ChartPoint, y: ChartPoint,
         step: float = DEFAULT_STEP) -> float:
    """Least action ``c(x, y)`` over unit-time curves from ``x`` to ``y``."""
    X = Points(x.coords[None], [x.chart])
    Y = Points(y.coords[None], [y.chart])
    c, ok = cost_batch(system, X, Y, step=step)
    if not ok[0]:
        raise NoConvergenceError(f"shooting from {x!r} to {y!r} did not converge")
    return float(c[0])


def cost_matrix(system: MechanicalSystem, X: Points, Y: Points,
                step: float = DEFAULT_STEP) -> tuple:
    """``C[i, j] = c(X[i], Y[j])`` and the mask of pairs whose shooting converged."""
    N, M = len(X), len(Y)
    Xr = Points(np.repeat(X.coords, M, axis=0), np.repeat(X.charts, M))
    Yr = Points(np.tile(Y.coords, (N, 1)), np.tile(Y.charts, N))
    c, ok = cost_batch(system, Xr, Yr, step=step)
    return c.reshape(N, M), ok.reshape(N, M)
