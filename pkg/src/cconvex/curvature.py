"""Curvature of natural mechanical Hamiltonians.

Phase vectors at a point of the cotangent bundle are 2n arrays ``(dx, dp)`` in
the induced chart coordinates.  The symplectic form is ``omega = sum dp_i ^ dx_i``,
so ``omega(X, Y) = <X_p, Y_x> - <X_x, Y_p>``.

Canonical frames are represented by their expansion at the initial point:
``E[i]`` and ``F[i]`` are the phase vectors ``e^i(t)``, ``f^i(t)`` in the tangent
space at ``alpha``.  They solve ``e' = -f``, ``f' = Rbar(t) e`` where ``Rbar(t)``
is the curvature operator at ``phi_t(alpha)`` written in a parallel frame
along the extremal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import covariant_hessian
from .geometry import ChartPoint, jacobi_operator, orthonormal_frames
from .mechanics import (
    DEFAULT_STEP,
    CotangentState,
    MechanicalSystem,
    hamiltonian_batch,
    integrate,
    phase_velocity_batch,
)

BLOW_UP_NORM = 1e12


@dataclass(frozen=True, eq=False)
class SplittingData:
    base: CotangentState
    c_matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class CurvatureMatrix:
    t: float
    entries: np.ndarray


@dataclass(frozen=True, eq=False)
class FramePropagation:
    times: np.ndarray
    E: np.ndarray          # (m, n, 2n)
    F: np.ndarray          # (m, n, 2n)
    frames: np.ndarray     # parallel frames along the extremal, (m, n, n)
    points: list           # base points along the extremal
    covectors: np.ndarray  # (m, n)
    curvature: np.ndarray  # Rbar at each sample, (m, n, n)
    blow_up: Optional[float] = None


def symplectic_form(X, Y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = X.shape[-1] // 2
    return np.sum(X[..., n:] * Y[..., :n], axis=-1) - np.sum(X[..., :n] * Y[..., n:], axis=-1)


def _single(state: CotangentState):
    return state.x.coords[None], np.array([state.x.chart]), state.p[None]


# -- structure constants ---------------------------------------------------------

def structure_constants(system: MechanicalSystem, state: CotangentState) -> SplittingData:
    """``c_ij = sum_k Gamma^k_ij p_k``."""
    G = system.model.christoffel(state.x.coords)
    return SplittingData(state, np.einsum("kij,k->ij", G, state.p))


def structure_constants_general(system: MechanicalSystem, state: CotangentState,
                                dx: float = 1e-3, dp: float = 1.0) -> np.ndarray:
    """Structure constants from the general identity in derivatives of ``H``.

    Solves ``2 H_pp c H_pp = sum_k (H_pk H_ppxk - H_xk H_pppk - H_pxk H_pkp - H_ppk H_xkp)``
    with every derivative of ``H`` taken by finite differences: five-point
    stencils (step ``dx``) in the base and central stencils (step ``dp``) in the
    fibre.  The fibre stencils are exact for Hamiltonians quadratic in ``p``.
    """
    model = system.model
    n = model.dim
    x0 = state.x.coords
    ch = np.array([state.x.chart])
    p0 = state.p
    eye = np.eye(n)

    def H(x, p):
        return float(hamiltonian_batch(system, x[None], ch, p[None])[0])

    def Hp(x, p):
        return np.array([(H(x, p + dp * eye[i]) - H(x, p - dp * eye[i])) / (2 * dp)
                         for i in range(n)])

    def Hpp(x, p):
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                a, b = dp * eye[i], dp * eye[j]
                out[i, j] = (H(x, p + a + b) - H(x, p + a - b) - H(x, p - a + b)
                             + H(x, p - a - b)) / (4 * dp * dp)
        return out

    def Hppp(x, p):
        return np.stack([(Hpp(x, p + dp * eye[k]) - Hpp(x, p - dp * eye[k])) / (2 * dp)
                         for k in range(n)], axis=-1)

    def d_x(fun, k):
        e = dx * eye[k]
        return (-fun(x0 + 2 * e, p0) + 8 * fun(x0 + e, p0) - 8 * fun(x0 - e, p0)
                + fun(x0 - 2 * e, p0)) / (12 * dx)

    G = Hpp(x0, p0)
    Hp0 = Hp(x0, p0)
    Hx = np.array([d_x(H, k) for k in range(n)])
    Hpx = np.stack([d_x(Hp, k) for k in range(n)], axis=-1)        # [i, k] = H_{p_i x_k}
    Hppx = np.stack([d_x(Hpp, k) for k in range(n)], axis=-1)      # [i, j, k]
    Hppp0 = Hppp(x0, p0)                                           # [i, j, k]
    rhs = (np.einsum("k,ijk->ij", Hp0, Hppx)
           - np.einsum("k,ijk->ij", Hx, Hppp0)
           - np.einsum("ik,kj->ij", Hpx, G)
           - np.einsum("ik,jk->ij", G, Hpx))
    Ginv = np.linalg.inv(G)
    return 0.5 * Ginv @ rhs @ Ginv


# -- lifts and the curvature operator ---------------------------------------------

def horizontal_lift(system: MechanicalSystem, state: CotangentState, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    c = structure_constants(system, state).c_matrix
    return np.concatenate([v, c.T @ v])


def vertical_lift(covector) -> np.ndarray:
    a = np.asarray(covector, dtype=float)
    return np.concatenate([np.zeros_like(a), a])


def _curvature_operator_batch(system: MechanicalSystem, coords, charts, p, V):
    """``R(u, v) u + Hess U (v)`` for ``u = g^{-1} p`` and every row ``v`` of ``V``.

    ``V`` has shape (N, m, n); returns the same shape.
    """
    model = system.model
    ginv = model.inverse_metric(coords)
    u = np.einsum("bij,bj->bi", ginv, p)
    R = model.curvature_tensor(coords)
    U = np.broadcast_to(u[:, None, :], V.shape)
    out = jacobi_operator(R[:, None], U, V, U)
    if not system.potential.is_zero:
        _, dU, ddU = system.potential.derivatives(coords, charts)
        HU = covariant_hessian(model, dU, ddU, coords)
        out = out + np.einsum("bij,bjk,bmk->bmi", ginv, HU, V)
    return out


def curvature_operator(system: MechanicalSystem, state: CotangentState, v) -> np.ndarray:
    """The vector ``R(u, v) u + Hess U(v)`` whose metric dual's vertical lift is ``R^H((Iv)^ver)``."""
    x, c, p = _single(state)
    V = np.asarray(v, dtype=float)[None, None]
    return _curvature_operator_batch(system, x, c, p, V)[0, 0]


def curvature_operator_bracket(system: MechanicalSystem, state: CotangentState, v,
                               h: float = 1e-4) -> np.ndarray:
    """``-[H, [H, V]_hor]_ver`` for the constant vertical field ``V = (Iv)^ver``.

    Finite-difference evaluation of the bracket characterisation, returned as
    the fibre (covector) part.  Independent of :func:`curvature_operator`.
    """
    model = system.model
    n = model.dim
    ch = np.array([state.x.chart])
    alpha0 = np.concatenate([state.x.coords, state.p])
    eta = model.metric(state.x.coords) @ np.asarray(v, dtype=float)
    Vfield = np.concatenate([np.zeros(n), eta])

    def Hvec(alpha):
        a, b = phase_velocity_batch(system, alpha[None, :n], ch, alpha[None, n:])
        return np.concatenate([a[0], b[0]])

    def jac(fun, alpha, step):
        cols = []
        for k in range(2 * n):
            e = np.zeros(2 * n)
            e[k] = step
            cols.append((fun(alpha + e) - fun(alpha - e)) / (2 * step))
        return np.stack(cols, axis=-1)

    def cmat(alpha):
        G = model.christoffel(alpha[:n])
        return np.einsum("kij,k->ij", G, alpha[n:])

    def split(alpha, W):
        c = cmat(alpha)
        hor = np.concatenate([W[:n], c.T @ W[:n]])
        return hor, W - hor

    def Y(alpha):
        # [H, V] for constant V is -DH . V
        W = -jac(Hvec, alpha, h) @ Vfield
        return split(alpha, W)[0]

    bracket = jac(Y, alpha0, h) @ Hvec(alpha0) - jac(Hvec, alpha0, h) @ Y(alpha0)
    ver = split(alpha0, bracket)[1]
    return -ver[n:]


# -- frames along extremals ---------------------------------------------------------

def adapted_frame(system: MechanicalSystem, state: CotangentState) -> np.ndarray:
    """Orthonormal frame at ``x`` whose first vector is ``I^{-1} p / |p|`` (any frame if p = 0)."""
    u = system.model.inverse_metric(state.x.coords) @ state.p
    first = u[None] if np.linalg.norm(u) > 0 else None
    return orthonormal_frames(system.model, state.x.coords[None], first)[0]


def _frame_chart(aux, jac, moved):
    out = dict(aux)
    if "V" in aux:
        V = aux["V"].copy()
        V[moved] = np.einsum("bij,bmj->bmi", jac[moved], V[moved])
        out["V"] = V
    return out


def _transport_rhs(t, coords, charts, p, v, pdot, U, aux, model):
    G = model.christoffel(coords)
    # D V / dt = 0:  V^k' = -Gamma^k_ij xdot^i V^j
    return {"V": -np.einsum("bkij,bi,bmj->bmk", G, v, aux["V"])}


def _rbar(system, coords, charts, p, V):
    g = system.model.metric(coords)
    RV = _curvature_operator_batch(system, coords, charts, p, V)
    M = np.einsum("bmi,bij,bkj->bmk", RV, g, V)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def curvature_matrix_along_extremal(system: MechanicalSystem, state0: CotangentState,
                                    frame0, t: float, step: float = DEFAULT_STEP
                                    ) -> CurvatureMatrix:
    """``Rbar_t[i, j] = <R(u, v_i) u + Hess U v_i, v_j>`` at ``phi_t(state0)``.

    ``frame0`` (rows) is parallel transported along the extremal.
    """
    model = system.model
    x, c, p = _single(state0)
    V0 = np.asarray(frame0, dtype=float)[None]
    res = integrate(system, x, c, p, t, step, aux={"V": V0},
                    aux_rhs=lambda *a: _transport_rhs(*a, model=model), aux_chart=_frame_chart)
    M = _rbar(system, res.coords, res.charts, res.p, res.aux["V"])[0]
    return CurvatureMatrix(float(t), M)


def initial_canonical_frame(system: MechanicalSystem, state: CotangentState, frame0):
    """``e^i(0) = (I v_i)^ver`` and ``f^i(0) = v_i^hor`` as (n, 2n) arrays."""
    V = np.asarray(frame0, dtype=float)
    g = system.model.metric(state.x.coords)
    c = structure_constants(system, state).c_matrix
    E = np.concatenate([np.zeros_like(V), V @ g], axis=1)
    F = np.concatenate([V, V @ c], axis=1)
    return E, F


def propagate_canonical_frame(system: MechanicalSystem, state0: CotangentState, frame0,
                              t_end: float, step: float = DEFAULT_STEP) -> FramePropagation:
    """Integrate ``e' = -f``, ``f' = Rbar(t) e`` jointly with the extremal and a parallel frame."""
    model = system.model
    V0 = np.asarray(frame0, dtype=float)
    g = model.metric(state0.x.coords)
    gram = V0 @ g @ V0.T
    if not np.allclose(gram, np.eye(len(V0)), atol=1e-10):
        raise ValueError("frame0 must be orthonormal")
    E0, F0 = initial_canonical_frame(system, state0, V0)
    x, c, p = _single(state0)

    def rhs(t, coords, charts, pp, v, pdot, U, aux):
        out = _transport_rhs(t, coords, charts, pp, v, pdot, U, aux, model)
        Rb = _rbar(system, coords, charts, pp, aux["V"])
        out["E"] = -aux["F"]
        out["F"] = np.einsum("bij,bjk->bik", Rb, aux["E"])
        return out

    res = integrate(system, x, c, p, t_end, step,
                    aux={"V": V0[None], "E": E0[None], "F": F0[None]}, aux_rhs=rhs,
                    aux_chart=_frame_chart, record=True)
    times = np.array([r[0] for r in res.record])
    E = np.array([r[4]["E"][0] for r in res.record])
    F = np.array([r[4]["F"][0] for r in res.record])
    Vs = np.array([r[4]["V"][0] for r in res.record])
    pts = [ChartPoint(int(r[2][0]), r[1][0]) for r in res.record]
    ps = np.array([r[3][0] for r in res.record])
    Rb = np.array([_rbar(system, r[1], r[2], r[3], r[4]["V"])[0] for r in res.record])
    size = np.maximum(np.abs(E).max(axis=(1, 2)), np.abs(F).max(axis=(1, 2)))
    bad = np.flatnonzero(~np.isfinite(size) | (size > BLOW_UP_NORM))
    blow_up = float(times[bad[0]]) if bad.size else None
    return FramePropagation(times, E, F, Vs, pts, ps, Rb, blow_up)


def darboux_defect(E, F) -> float:
    """Largest violation of ``omega(e^i, f^j) = delta_ij``, ``omega(e, e) = omega(f, f) = 0``."""
    E = np.asarray(E)
    F = np.asarray(F)
    if E.ndim == 2:
        E, F = E[None], F[None]
    n = E.shape[1]
    w = lambda A, B: symplectic_form(A[:, :, None, :], B[:, None, :, :])  # noqa: E731
    return float(max(np.abs(w(E, F) - np.eye(n)).max(), np.abs(w(E, E)).max(),
                     np.abs(w(F, F)).max()))


def first_conjugate_time(prop: FramePropagation, index: int) -> Optional[float]:
    """First ``t > 0`` at which ``omega(e^i(0), e^i(t))`` changes sign.

    That coefficient is the component of ``e^i(t)`` along ``f^i(0)``; its zero
    marks ``J(t)`` meeting the vertical space, i.e. a conjugate point.
    """
    beta = symplectic_form(prop.E[0, index], prop.E[:, index])
    t = prop.times
    scale = np.abs(beta).max()
    start = 1
    while start < len(t) and abs(beta[start]) <= 1e-14 * max(scale, 1.0):
        start += 1
    for k in range(start, len(t) - 1):
        if beta[k] == 0.0:
            return float(t[k])
        if np.sign(beta[k]) != np.sign(beta[k + 1]):
            return float(t[k] - beta[k] * (t[k + 1] - t[k]) / (beta[k + 1] - beta[k]))
    return None


def reeb_span_defect(system: MechanicalSystem, state0: CotangentState,
                     prop: FramePropagation) -> float:
    """Largest distance of ``z(t) = (r(alpha) - t Hvec(alpha)) / |p|`` from ``span E_t``."""
    x, c, p = _single(state0)
    v, pdot = phase_velocity_batch(system, x, c, p)
    r = np.concatenate([np.zeros_like(state0.p), state0.p])
    Hv = np.concatenate([v[0], pdot[0]])
    speed = np.sqrt(state0.p @ v[0])
    worst = 0.0
    for t, E in zip(prop.times, prop.E):
        z = (r - t * Hv) / speed
        coef, *_ = np.linalg.lstsq(E.T, z, rcond=None)
        worst = max(worst, float(np.linalg.norm(E.T @ coef - z)))
    return worst


def flow_differential(system: MechanicalSystem, state0: CotangentState, t: float, vectors,
                      step: float = DEFAULT_STEP, eps: float = 1e-6) -> np.ndarray:
    """``d phi_t`` applied to phase vectors at ``state0`` by central differences of the flow.

    Results are expressed in the chart of the unperturbed endpoint.
    """
    model = system.model
    W = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = model.dim
    base = np.concatenate([state0.x.coords, state0.p])
    starts = np.concatenate([base + eps * W, base - eps * W, base[None]])
    ch = np.full(len(starts), state0.x.chart)
    res = integrate(system, starts[:, :n], ch, starts[:, n:], t, step)
    ref_chart = res.charts[-1]
    xs, jac = model.to_chart(res.coords, res.charts, np.full(len(starts), ref_chart))
    ps = np.linalg.solve(np.swapaxes(jac, -1, -2), res.p[..., None])[..., 0]
    m = len(W)
    dx = model.chart_difference(xs[m:2 * m], np.full(m, ref_chart), xs[:m], np.full(m, ref_chart))
    dp = ps[:m] - ps[m:2 * m]
    return np.concatenate([dx, dp], axis=1) / (2 * eps)
