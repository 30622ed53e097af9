"""Model manifolds: charts, metrics, Christoffel symbols, curvature, frames, distances.

All three supported geometries are conformally flat in the charts used here,
``g = exp(2 sigma) * I``, so the connection and curvature are computed from the
first and second derivatives of the conformal exponent ``sigma``.  Curvature is
nevertheless evaluated with the general Christoffel formula, which keeps the
constant-curvature identities a genuine check rather than a tautology.

Batch primitives (methods on the model classes) act on coordinate arrays of
shape ``(..., n)``.  The module-level functions take a single ``ChartPoint``.

Curvature sign convention: ``riemann_curvature(u, v, w)`` is normalised so
that ``<R(u, v) u, v> = K (|u|^2 |v|^2 - <u, v>^2)``, i.e. the operator
``v -> R(u, v) u`` is the Jacobi operator appearing in ``J'' + R(u, J) u = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np


class DomainError(ValueError):
    """A point lies outside the domain of its chart (or of the truncated atlas)."""


@dataclass(frozen=True, eq=False)
class ChartPoint:
    chart: int
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float).reshape(-1))

    def __repr__(self):
        return f"ChartPoint(chart={self.chart}, coords={self.coords.tolist()})"

    def same_as(self, other: "ChartPoint") -> bool:
        return self.chart == other.chart and np.array_equal(self.coords, other.coords)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "components", np.asarray(self.components, dtype=float).reshape(-1)
        )


@dataclass(frozen=True, eq=False)
class CovectorComponents:
    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "components", np.asarray(self.components, dtype=float).reshape(-1)
        )


@dataclass(frozen=True, eq=False)
class Points:
    """A batch of chart points: ``coords`` of shape (N, n) and ``charts`` of shape (N,)."""

    coords: np.ndarray
    charts: np.ndarray

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        charts = np.asarray(self.charts, dtype=int).reshape(-1)
        if charts.size == 1 and coords.shape[0] > 1:
            charts = np.full(coords.shape[0], int(charts[0]))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "charts", charts)

    def __len__(self):
        return self.coords.shape[0]

    def __getitem__(self, i) -> ChartPoint:
        return ChartPoint(int(self.charts[i]), self.coords[i].copy())

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def of(cls, points: Sequence[ChartPoint]) -> "Points":
        return cls(np.array([p.coords for p in points]), np.array([p.chart for p in points]))


class ManifoldModel:
    """Base class.  Subclasses define the conformal exponent and chart logic."""

    kind: str = ""
    dim: int = 0
    compact: bool = True
    n_charts: int = 1

    @property
    def curvature_bound_k(self) -> float:
        raise NotImplementedError

    # -- conformal structure -------------------------------------------------
    def _sigma(self, u):
        """Return sigma, d sigma (..., n) and dd sigma (..., n, n)."""
        raise NotImplementedError

    def conformal_factor(self, u) -> np.ndarray:
        s, _, _ = self._sigma(np.asarray(u, dtype=float))
        return np.exp(2.0 * s)

    def metric(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.conformal_factor(u)[..., None, None] * np.eye(self.dim)

    def inverse_metric(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return (1.0 / self.conformal_factor(u))[..., None, None] * np.eye(self.dim)

    def christoffel(self, u) -> np.ndarray:
        """``G[..., k, i, j] = Gamma^k_ij``."""
        u = np.asarray(u, dtype=float)
        _, ds, _ = self._sigma(u)
        eye = np.eye(self.dim)
        # Gamma^k_ij = d_ik s_j + d_jk s_i - d_ij s_k
        return (
            np.einsum("ki,...j->...kij", eye, ds)
            + np.einsum("kj,...i->...kij", eye, ds)
            - np.einsum("ij,...k->...kij", eye, ds)
        )

    def christoffel_derivative(self, u) -> np.ndarray:
        """``D[..., m, k, i, j] = d_m Gamma^k_ij``."""
        u = np.asarray(u, dtype=float)
        _, _, dds = self._sigma(u)
        eye = np.eye(self.dim)
        return (
            np.einsum("ki,...jm->...mkij", eye, dds)
            + np.einsum("kj,...im->...mkij", eye, dds)
            - np.einsum("ij,...km->...mkij", eye, dds)
        )

    def curvature_tensor(self, u) -> np.ndarray:
        """``R[..., l, i, j, k]`` with ``R(d_i, d_j) d_k = R^l_ijk d_l`` (standard sign)."""
        G = self.christoffel(u)
        dG = self.christoffel_derivative(u)
        # R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
        term = np.einsum("...iljk->...lijk", dG)
        term = term - np.einsum("...jlik->...lijk", dG)
        term = term + np.einsum("...lim,...mjk->...lijk", G, G)
        term = term - np.einsum("...ljm,...mik->...lijk", G, G)
        return term

    # -- charts ----------------------------------------------------------------
    def in_domain(self, u, charts=None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.all(np.isfinite(u), axis=-1)

    def normalize(self, u, charts):
        """Put points into their preferred chart.

        Returns ``(u, charts, jac)`` where ``jac[..., a, b] = d u_new_a / d u_old_b``;
        vectors transform by ``jac`` and covectors by its inverse transpose.
        """
        u = np.array(u, dtype=float)
        charts = np.array(charts, dtype=int)
        jac = np.broadcast_to(np.eye(self.dim), u.shape + (self.dim,)).copy()
        return u, charts, jac

    def to_chart(self, u, charts, target):
        """Express points in chart ``target``; returns ``(u, jac)``."""
        u = np.array(u, dtype=float)
        jac = np.broadcast_to(np.eye(self.dim), u.shape + (self.dim,)).copy()
        return u, jac

    def orientation(self, charts) -> np.ndarray:
        """``+1`` or ``-1`` per chart, relative to chart 0."""
        return np.ones(np.shape(charts))

    def chart_difference(self, u, charts, v, vcharts) -> np.ndarray:
        """``v - u`` expressed in the charts of ``v`` (wrapped where periodic)."""
        uu, _ = self.to_chart(u, charts, vcharts)
        return np.asarray(v, dtype=float) - uu

    def point(self, coords, chart: int = 0) -> ChartPoint:
        """Validated, normalised chart point."""
        u = np.asarray(coords, dtype=float).reshape(1, -1)
        if u.shape[1] != self.dim:
            raise DomainError(f"expected {self.dim} coordinates, got {u.shape[1]}")
        if chart not in range(self.n_charts):
            raise DomainError(f"unknown chart {chart}")
        if not self.in_domain(u, np.array([chart]))[0]:
            raise DomainError(f"point {u[0].tolist()} outside the domain of chart {chart}")
        u, c, _ = self.normalize(u, np.array([chart]))
        return ChartPoint(int(c[0]), u[0])

    # -- distances -------------------------------------------------------------
    def distance_batch(self, u, cu, v, cv) -> np.ndarray:
        raise NotImplementedError

    def log_batch(self, u, cu, v, cv) -> np.ndarray:
        """Coordinate velocity at ``u`` of the minimising geodesic reaching ``v`` at t=1."""
        raise NotImplementedError

    # -- sampling --------------------------------------------------------------
    def grid(self, resolution: int) -> "Points":
        raise NotImplementedError

    def sample_uniform(self, n: int, rng: np.random.Generator) -> "Points":
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FlatTorus(ManifoldModel):
    """Flat torus ``R^n / (P_1 Z x ... x P_n Z)`` with a single wrapped chart."""

    periods: tuple = (1.0,)
    kind = "flat_torus"

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        if any(p <= 0 for p in self.periods):
            raise ValueError("periods must be positive")
        if not 1 <= len(self.periods) <= 3:
            raise ValueError("only dimensions 1 to 3 are supported")

    @property
    def dim(self):
        return len(self.periods)

    @property
    def curvature_bound_k(self):
        return 0.0

    def _sigma(self, u):
        shape = u.shape[:-1]
        n = self.dim
        return np.zeros(shape), np.zeros(shape + (n,)), np.zeros(shape + (n, n))

    def curvature_tensor(self, u):
        u = np.asarray(u, dtype=float)
        n = self.dim
        return np.zeros(u.shape[:-1] + (n, n, n, n))

    def _wrap(self, d):
        P = np.asarray(self.periods)
        return d - P * np.round(d / P)

    def normalize(self, u, charts):
        u = np.mod(np.array(u, dtype=float), np.asarray(self.periods))
        charts = np.zeros_like(np.asarray(charts, dtype=int))
        jac = np.broadcast_to(np.eye(self.dim), u.shape + (self.dim,)).copy()
        return u, charts, jac

    def chart_difference(self, u, charts, v, vcharts):
        return self._wrap(np.asarray(v, dtype=float) - np.asarray(u, dtype=float))

    def distance_batch(self, u, cu, v, cv):
        return np.linalg.norm(self._wrap(np.asarray(v) - np.asarray(u)), axis=-1)

    def log_batch(self, u, cu, v, cv):
        return self._wrap(np.asarray(v, dtype=float) - np.asarray(u, dtype=float))

    def grid(self, resolution):
        axes = [np.arange(resolution) * (P / resolution) for P in self.periods]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        return Points(coords, np.zeros(len(coords), dtype=int))

    def grid_spacing(self, resolution):
        return max(self.periods) / resolution

    def sample_uniform(self, n, rng):
        coords = rng.uniform(0.0, 1.0, size=(n, self.dim)) * np.asarray(self.periods)
        return Points(coords, np.zeros(n, dtype=int))

    def describe(self):
        return {"kind": self.kind, "periods": list(self.periods)}


@dataclass(frozen=True)
class Sphere2(ManifoldModel):
    """Round sphere of radius ``r`` with two stereographic charts.

    Chart 0 projects from the north pole, chart 1 from the south pole; the
    transition map is the inversion ``u -> u / |u|^2``.  Points are moved to the
    other chart once ``|u| > switch_radius``.
    """

    radius: float = 1.0
    switch_radius: float = 1.5
    kind = "sphere2"
    dim = 2
    n_charts = 2

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def curvature_bound_k(self):
        return 1.0 / self.radius**2

    def _sigma(self, u):
        s = np.sum(u * u, axis=-1)
        q = 1.0 / (1.0 + s)
        sigma = np.log(2.0 * self.radius * q)
        ds = -2.0 * u * q[..., None]
        dds = -2.0 * q[..., None, None] * np.eye(2) + 4.0 * (q**2)[..., None, None] * np.einsum(
            "...i,...j->...ij", u, u
        )
        return sigma, ds, dds

    @staticmethod
    def _invert(u):
        s = np.sum(u * u, axis=-1)
        v = u / s[..., None]
        eye = np.eye(2)
        jac = eye / s[..., None, None] - 2.0 * np.einsum("...i,...j->...ij", u, u) / (s**2)[
            ..., None, None
        ]
        return v, jac

    def in_domain(self, u, charts=None):
        u = np.asarray(u, dtype=float)
        return np.all(np.isfinite(u), axis=-1)

    def orientation(self, charts):
        # the transition u / |u|^2 reverses orientation
        return np.where(np.asarray(charts) == 0, 1.0, -1.0)

    def normalize(self, u, charts):
        u = np.array(u, dtype=float)
        charts = np.array(charts, dtype=int).copy()
        jac = np.broadcast_to(np.eye(2), u.shape + (2,)).copy()
        far = np.linalg.norm(u, axis=-1) > self.switch_radius
        if np.any(far):
            v, j = self._invert(u[far])
            u[far] = v
            jac[far] = j
            charts[far] = 1 - charts[far]
        return u, charts, jac

    def to_chart(self, u, charts, target):
        u = np.array(u, dtype=float)
        charts = np.broadcast_to(np.asarray(charts, dtype=int), u.shape[:-1])
        target = np.broadcast_to(np.asarray(target, dtype=int), u.shape[:-1])
        jac = np.broadcast_to(np.eye(2), u.shape + (2,)).copy()
        flip = charts != target
        if np.any(flip):
            v, j = self._invert(u[flip])
            u[flip] = v
            jac[flip] = j
        return u, jac

    def embed(self, u, charts):
        """Embedding into R^3 with first and second coordinate derivatives.

        Returns ``X (..., 3)``, ``dX (..., 3, 2)`` and ``ddX (..., 3, 2, 2)``.
        """
        u = np.asarray(u, dtype=float)
        charts = np.broadcast_to(np.asarray(charts, dtype=int), u.shape[:-1])
        r = self.radius
        s = np.sum(u * u, axis=-1)
        q = 1.0 / (1.0 + s)
        eye = np.eye(2)
        dq = -2.0 * u * (q**2)[..., None]
        ddq = -2.0 * (q**2)[..., None, None] * eye + 8.0 * (q**3)[..., None, None] * np.einsum(
            "...i,...j->...ij", u, u
        )
        sign = np.where(charts == 0, 1.0, -1.0)
        X = np.empty(u.shape[:-1] + (3,))
        dX = np.empty(u.shape[:-1] + (3, 2))
        ddX = np.empty(u.shape[:-1] + (3, 2, 2))
        for a in range(2):
            X[..., a] = 2.0 * r * u[..., a] * q
            dX[..., a, :] = 2.0 * r * (eye[a] * q[..., None] + u[..., a, None] * dq)
            ddX[..., a, :, :] = 2.0 * r * (
                np.einsum("i,...j->...ij", eye[a], dq)
                + np.einsum("...i,j->...ij", dq, eye[a])
                + u[..., a, None, None] * ddq
            )
        # third coordinate: chart 0 -> r (s - 1) q = r (1 - 2q); chart 1 -> -(that)
        X[..., 2] = sign * r * (1.0 - 2.0 * q)
        dX[..., 2, :] = -2.0 * r * sign[..., None] * dq
        ddX[..., 2, :, :] = -2.0 * r * sign[..., None, None] * ddq
        return X, dX, ddX

    def from_embedding(self, X):
        """Chart coordinates of points on the sphere (chart chosen away from its pole)."""
        X = np.atleast_2d(np.asarray(X, dtype=float)) / self.radius
        charts = np.where(X[:, 2] <= 0.0, 0, 1)
        denom = np.where(charts == 0, 1.0 - X[:, 2], 1.0 + X[:, 2])
        coords = X[:, :2] / denom[:, None]
        return Points(coords, charts)

    def distance_batch(self, u, cu, v, cv):
        X, _, _ = self.embed(u, cu)
        Y, _, _ = self.embed(v, cv)
        cross = np.linalg.norm(np.cross(X, Y), axis=-1)
        dot = np.sum(X * Y, axis=-1)
        return self.radius * np.arctan2(cross, dot)

    def log_batch(self, u, cu, v, cv):
        X, dX, _ = self.embed(u, cu)
        Y, _, _ = self.embed(v, cv)
        r = self.radius
        x = X / r
        y = Y / r
        dot = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
        w = y - dot[..., None] * x
        wn = np.linalg.norm(w, axis=-1)
        theta = np.arctan2(wn, dot)
        # antipodal: any direction works; take the first coordinate direction
        fallback = dX[..., :, 0] / np.linalg.norm(dX[..., :, 0], axis=-1, keepdims=True)
        safe = wn > 1e-14
        what = np.where(safe[..., None], w / np.where(safe, wn, 1.0)[..., None], fallback)
        V = r * theta[..., None] * what
        phi2 = self.conformal_factor(u)
        return np.einsum("...ai,...a->...i", dX, V) / phi2[..., None]

    def grid(self, resolution):
        theta = (np.arange(resolution) + 0.5) * np.pi / resolution
        phi = np.arange(resolution) * 2.0 * np.pi / resolution
        T, P = np.meshgrid(theta, phi, indexing="ij")
        X = self.radius * np.stack(
            [np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1
        ).reshape(-1, 3)
        return self.from_embedding(X)

    def grid_spacing(self, resolution):
        return np.pi * self.radius / resolution

    def sample_uniform(self, n, rng):
        X = rng.normal(size=(n, 3))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        return self.from_embedding(self.radius * X)

    def describe(self):
        return {"kind": self.kind, "radius": self.radius}


@dataclass(frozen=True)
class Hyperbolic2(ManifoldModel):
    """Poincare disk ``g = 4 a^2 / (1 - |u|^2)^2 I`` of curvature ``-1/a^2``.

    Non-compact; the atlas is truncated at ``|u| < max_radius``.
    """

    scale: float = 1.0
    max_radius: float = 0.9
    kind = "hyperbolic2"
    dim = 2
    compact = False

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0 < self.max_radius < 1:
            raise ValueError("max_radius must lie in (0, 1)")

    @property
    def curvature_bound_k(self):
        return -1.0 / self.scale**2

    def _sigma(self, u):
        s = np.sum(u * u, axis=-1)
        q = 1.0 / (1.0 - s)
        sigma = np.log(2.0 * self.scale * q)
        ds = 2.0 * u * q[..., None]
        dds = 2.0 * q[..., None, None] * np.eye(2) + 4.0 * (q**2)[..., None, None] * np.einsum(
            "...i,...j->...ij", u, u
        )
        return sigma, ds, dds

    def in_domain(self, u, charts=None):
        u = np.asarray(u, dtype=float)
        return np.all(np.isfinite(u), axis=-1) & (np.linalg.norm(u, axis=-1) < self.max_radius)

    def normalize(self, u, charts):
        u = np.array(u, dtype=float)
        return u, np.zeros_like(np.asarray(charts, dtype=int)), np.broadcast_to(
            np.eye(2), u.shape + (2,)
        ).copy()

    def distance_batch(self, u, cu, v, cv):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        num = np.sum((u - v) ** 2, axis=-1)
        den = (1.0 - np.sum(u * u, axis=-1)) * (1.0 - np.sum(v * v, axis=-1))
        # arccosh(1 + 2 s^2) = 2 asinh(s), without the cancellation near s = 0
        return 2.0 * self.scale * np.arcsinh(np.sqrt(num / den))

    def log_batch(self, u, cu, v, cv):
        z = np.asarray(u, dtype=float) @ np.array([1.0, 1j])
        y = np.asarray(v, dtype=float) @ np.array([1.0, 1j])
        w = (y - z) / (1.0 - np.conj(z) * y)
        aw = np.abs(w)
        unit = np.where(aw > 0, w / np.where(aw > 0, aw, 1.0), 0.0)
        vel = (1.0 - np.abs(z) ** 2) * np.arctanh(aw) * unit
        return np.stack([vel.real, vel.imag], axis=-1)

    def grid(self, resolution):
        axis = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
        axis = axis * self.max_radius
        U, V = np.meshgrid(axis, axis, indexing="ij")
        coords = np.stack([U.reshape(-1), V.reshape(-1)], axis=-1)
        coords = coords[np.linalg.norm(coords, axis=-1) < 0.98 * self.max_radius]
        return Points(coords, np.zeros(len(coords), dtype=int))

    def grid_spacing(self, resolution):
        # coordinate spacing times the largest conformal scale on the grid
        r = 0.98 * self.max_radius
        return 2.0 * self.max_radius / resolution * 2.0 * self.scale / (1.0 - r * r)

    def sample_uniform(self, n, rng):
        # uniform in coordinate area on a disk well inside the truncated atlas
        rad = 0.5 * self.max_radius * np.sqrt(rng.uniform(size=n))
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
        coords = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        return Points(coords, np.zeros(n, dtype=int))

    def describe(self):
        return {"kind": self.kind, "scale": self.scale, "max_radius": self.max_radius}


def make_model(kind: str, radius: float = 1.0, periods: Optional[Sequence[float]] = None,
               scale: float = 1.0) -> ManifoldModel:
    if kind == "flat_torus":
        return FlatTorus(tuple(periods) if periods is not None else (1.0, 1.0))
    if kind == "sphere2":
        return Sphere2(radius)
    if kind == "hyperbolic2":
        return Hyperbolic2(scale)
    raise ValueError(f"unknown manifold kind {kind!r}")


# -- single-point operations ---------------------------------------------------

def _check(model: ManifoldModel, x: ChartPoint) -> np.ndarray:
    u = x.coords
    if u.shape != (model.dim,):
        raise DomainError(f"expected {model.dim} coordinates")
    if x.chart not in range(model.n_charts) or not model.in_domain(u[None], np.array([x.chart]))[0]:
        raise DomainError(f"{x!r} outside chart domain")
    return u


def metric_at(model: ManifoldModel, x: ChartPoint):
    """Metric matrix and its inverse at ``x``."""
    u = _check(model, x)
    return model.metric(u), model.inverse_metric(u)


def christoffel(model: ManifoldModel, x: ChartPoint) -> np.ndarray:
    """``G[k, i, j] = Gamma^k_ij`` at ``x``."""
    return model.christoffel(_check(model, x))


VectorLike = Union[TangentVector, np.ndarray, Sequence[float]]


def _components(x: ChartPoint, vec: VectorLike) -> np.ndarray:
    if isinstance(vec, TangentVector):
        if not vec.base.same_as(x):
            raise ValueError("tangent vectors must be based at the evaluation point")
        return vec.components
    return np.asarray(vec, dtype=float)


def riemann_curvature(model: ManifoldModel, x: ChartPoint, u: VectorLike, v: VectorLike,
                      w: VectorLike) -> TangentVector:
    """``R(u, v) w`` in the convention ``<R(u, v) u, v> = sectional curvature``."""
    uu, vv, ww = (_components(x, a) for a in (u, v, w))
    R = model.curvature_tensor(_check(model, x))
    return TangentVector(x, jacobi_operator(R, uu, vv, ww))


def jacobi_operator(R: np.ndarray, u, v, w) -> np.ndarray:
    """Contract a standard-sign tensor ``R^l_ijk`` into ``R(u, v) w`` (paper sign); batched."""
    return np.einsum("...lijk,...i,...j,...k->...l", R, v, u, w)


def inner(model: ManifoldModel, x: ChartPoint, u, v) -> float:
    g = model.metric(_check(model, x))
    return float(np.asarray(u) @ g @ np.asarray(v))


def orthonormal_frame(model: ManifoldModel, x: ChartPoint,
                      first: Optional[VectorLike] = None) -> np.ndarray:
    """Orthonormal frame at ``x`` as an (n, n) array whose rows are the frame vectors.

    Gram-Schmidt against the coordinate basis, always taking next the candidate
    with the largest residual (ties go to the lower coordinate index).
    """
    u = _check(model, x)
    first_arr = None if first is None else _components(x, first)[None]
    return orthonormal_frames(model, u[None], first_arr)[0]


def orthonormal_frames(model: ManifoldModel, coords, first=None) -> np.ndarray:
    """Batched version of :func:`orthonormal_frame`; returns (N, n, n)."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    N, n = coords.shape
    g = model.metric(coords)

    frame = np.zeros((N, n, n))
    start = 0
    if first is not None:
        first = np.atleast_2d(np.asarray(first, dtype=float))
        nf = np.sqrt(np.einsum("bi,bij,bj->b", first, g, first))
        if np.any(nf == 0) or not np.all(np.isfinite(nf)):
            raise ValueError("first frame vector must be nonzero")
        frame[:, 0] = first / nf[:, None]
        start = 1
    used = np.zeros((N, n), dtype=bool)
    rows = np.arange(N)
    for k in range(start, n):
        resid = np.zeros((N, n, n))
        for c in range(n):
            r = np.zeros((N, n))
            r[:, c] = 1.0
            for _ in range(2):
                for m in range(k):
                    proj = np.einsum("bi,bij,bj->b", r, g, frame[:, m])
                    r = r - proj[:, None] * frame[:, m]
            resid[:, c] = r
        norms = np.sqrt(np.einsum("bci,bij,bcj->bc", resid, g, resid))
        norms = np.where(used, -np.inf, norms)
        chosen = np.argmax(norms, axis=1)
        used[rows, chosen] = True
        frame[:, k] = resid[rows, chosen] / norms[rows, chosen][:, None]
    return frame


def distance(model: ManifoldModel, x: ChartPoint, y: ChartPoint) -> float:
    """Closed-form geodesic distance."""
    _check(model, x)
    _check(model, y)
    return float(model.distance_batch(x.coords[None], np.array([x.chart]),
                                      y.coords[None], np.array([y.chart]))[0])
