"""Scalar fields (potentials ``f`` and ``U``) with analytic chart derivatives.

Every field evaluates ``(value, gradient, hessian)`` of its chart representation
in one batched call; gradients are the covector components ``d_i f`` and
Hessians the plain second partials ``d_i d_j f``.  The covariant Hessian is
formed by :func:`covariant_hessian`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChartPoint, FlatTorus, ManifoldModel, Points, Sphere2

TWO_PI = 2.0 * np.pi


class ScalarField:
    model: ManifoldModel
    expression: str = "custom"

    def derivatives(self, coords, charts):
        """Batched ``(value (N,), grad (N, n), hess (N, n, n))``."""
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def value(self, x: ChartPoint) -> float:
        return float(self.derivatives(x.coords[None], np.array([x.chart]))[0][0])

    def gradient(self, x: ChartPoint) -> np.ndarray:
        return self.derivatives(x.coords[None], np.array([x.chart]))[1][0]

    def hessian(self, x: ChartPoint) -> np.ndarray:
        return self.derivatives(x.coords[None], np.array([x.chart]))[2][0]

    def at(self, pts: Points):
        return self.derivatives(pts.coords, pts.charts)

    def describe(self) -> dict:
        return {"expression": self.expression}


@dataclass(frozen=True)
class ConstantField(ScalarField):
    model: ManifoldModel
    constant: float = 0.0

    @property
    def expression(self):
        return "zero" if self.constant == 0.0 else "constant"

    @property
    def is_zero(self):
        return self.constant == 0.0

    def derivatives(self, coords, charts):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        N, n = coords.shape
        return np.full(N, self.constant), np.zeros((N, n)), np.zeros((N, n, n))

    def describe(self):
        return {"expression": self.expression, "constant": self.constant}


@dataclass(frozen=True)
class TrigField(ScalarField):
    """``sum_m a_m cos(2 pi <k_m, x / P> + phase_m)`` on a flat torus."""

    model: FlatTorus
    amplitudes: tuple
    wavevectors: tuple
    phases: tuple = ()
    expression: str = "trig"

    def __post_init__(self):
        if not isinstance(self.model, FlatTorus):
            raise ValueError("trigonometric fields live on a flat torus")
        amps = tuple(float(a) for a in self.amplitudes)
        waves = tuple(tuple(int(k) for k in w) for w in self.wavevectors)
        phases = tuple(float(p) for p in self.phases) or (0.0,) * len(amps)
        if not (len(amps) == len(waves) == len(phases)):
            raise ValueError("amplitudes, wavevectors and phases must have equal length")
        if any(len(w) != self.model.dim for w in waves):
            raise ValueError("wavevector length must equal the torus dimension")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "wavevectors", waves)
        object.__setattr__(self, "phases", phases)

    @property
    def is_zero(self):
        return all(a == 0.0 for a in self.amplitudes)

    def derivatives(self, coords, charts):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        N, n = coords.shape
        P = np.asarray(self.model.periods)
        val = np.zeros(N)
        grad = np.zeros((N, n))
        hess = np.zeros((N, n, n))
        for a, k, ph in zip(self.amplitudes, self.wavevectors, self.phases):
            w = TWO_PI * np.asarray(k, dtype=float) / P
            arg = coords @ w + ph
            c, s = np.cos(arg), np.sin(arg)
            val += a * c
            grad -= a * s[:, None] * w
            hess -= a * c[:, None, None] * np.outer(w, w)
        return val, grad, hess

    def describe(self):
        return {
            "expression": self.expression,
            "amplitudes": list(self.amplitudes),
            "wavevectors": [list(w) for w in self.wavevectors],
            "phases": list(self.phases),
        }


@dataclass(frozen=True)
class HeightField(ScalarField):
    """``a <d, X> / r`` for the embedding ``X`` of a round sphere."""

    model: Sphere2
    amplitude: float
    direction: tuple = (0.0, 0.0, 1.0)
    expression: str = "height"

    def __post_init__(self):
        if not isinstance(self.model, Sphere2):
            raise ValueError("height fields live on the sphere")
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple((d / np.linalg.norm(d)).tolist()))

    @property
    def is_zero(self):
        return self.amplitude == 0.0

    def derivatives(self, coords, charts):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        X, dX, ddX = self.model.embed(coords, charts)
        c = self.amplitude / self.model.radius * np.asarray(self.direction)
        return X @ c, np.einsum("a,...ai->...i", c, dX), np.einsum("a,...aij->...ij", c, ddX)

    def describe(self):
        return {"expression": self.expression, "amplitude": self.amplitude,
                "direction": list(self.direction)}


@dataclass(frozen=True)
class ChartPolynomial(ScalarField):
    """``c + <b, u> + u^T A u / 2`` in the coordinates of a single-chart model."""

    model: ManifoldModel
    constant: float = 0.0
    linear: tuple = ()
    quadratic: tuple = ()
    expression: str = "polynomial"

    def __post_init__(self):
        if self.model.n_charts != 1:
            raise ValueError("chart polynomials need a single-chart model")
        n = self.model.dim
        b = np.zeros(n) if len(self.linear) == 0 else np.asarray(self.linear, dtype=float)
        A = np.zeros((n, n)) if len(self.quadratic) == 0 else np.asarray(self.quadratic, dtype=float)
        if b.shape != (n,) or A.shape != (n, n):
            raise ValueError("coefficient shapes do not match the model dimension")
        A = 0.5 * (A + A.T)
        object.__setattr__(self, "linear", tuple(b.tolist()))
        object.__setattr__(self, "quadratic", tuple(map(tuple, A.tolist())))

    @property
    def is_zero(self):
        return (self.constant == 0.0 and not any(self.linear)
                and not any(any(r) for r in self.quadratic))

    def derivatives(self, coords, charts):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        b = np.asarray(self.linear)
        A = np.asarray(self.quadratic)
        val = self.constant + coords @ b + 0.5 * np.einsum("bi,ij,bj->b", coords, A, coords)
        grad = b + coords @ A
        hess = np.broadcast_to(A, (coords.shape[0],) + A.shape).copy()
        return val, grad, hess

    def describe(self):
        return {"expression": self.expression, "constant": self.constant,
                "linear": list(self.linear), "quadratic": [list(r) for r in self.quadratic]}


EXPRESSIONS = ("zero", "cos", "cos_sum", "height", "linear", "radial")


def make_field(model: ManifoldModel, expression: str, amplitude: float = 1.0,
               **params) -> ScalarField:
    """Build a library field by id.

    ``zero``      the zero function (any model)
    ``cos``       ``a cos(2 pi x_1 / P_1)`` on a torus
    ``cos_sum``   ``a sum_i cos(2 pi x_i / P_i)`` on a torus
    ``height``    ``a z / r`` on the sphere (``direction`` optional)
    ``linear``    ``a u_1`` in a single chart
    ``radial``    ``a |u|^2 / 2`` in a single chart
    """
    if expression not in EXPRESSIONS:
        raise ValueError(f"unknown expression {expression!r}; known: {', '.join(EXPRESSIONS)}")
    n = model.dim
    if expression == "zero" or amplitude == 0.0 and expression != "height":
        return ConstantField(model, 0.0)
    if expression == "cos":
        k = [0] * n
        k[0] = 1
        return TrigField(model, (amplitude,), (tuple(k),), expression="cos")
    if expression == "cos_sum":
        waves = tuple(tuple(int(i == j) for j in range(n)) for i in range(n))
        return TrigField(model, (amplitude,) * n, waves, expression="cos_sum")
    if expression == "height":
        return HeightField(model, amplitude, tuple(params.get("direction", (0.0, 0.0, 1.0))))
    if expression == "linear":
        b = np.zeros(n)
        b[0] = amplitude
        return ChartPolynomial(model, linear=tuple(b), expression="linear")
    if expression == "radial":
        return ChartPolynomial(model, quadratic=tuple(map(tuple, amplitude * np.eye(n))),
                               expression="radial")
    raise AssertionError(expression)


def covariant_hessian(model: ManifoldModel, grad, hess, coords) -> np.ndarray:
    """``Hess f_ij = d_i d_j f - Gamma^k_ij d_k f`` (batched, lower indices)."""
    G = model.christoffel(coords)
    return hess - np.einsum("...kij,...k->...ij", G, grad)


def finite_difference_derivatives(f: ScalarField, coords, charts, h: float = 1e-5,
                                  h2: float = 1e-4):
    """Central-difference gradient (step ``h``) and Hessian (step ``h2``) of the chart values."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    N, n = coords.shape
    grad = np.zeros((N, n))
    hess = np.zeros((N, n, n))
    val0 = f.derivatives(coords, charts)[0]
    eye = np.eye(n)
    for i in range(n):
        vp = f.derivatives(coords + h * eye[i], charts)[0]
        vm = f.derivatives(coords - h * eye[i], charts)[0]
        grad[:, i] = (vp - vm) / (2 * h)
        vp = f.derivatives(coords + h2 * eye[i], charts)[0]
        vm = f.derivatives(coords - h2 * eye[i], charts)[0]
        hess[:, i, i] = (vp - 2 * val0 + vm) / h2**2
        for j in range(i + 1, n):
            pp = f.derivatives(coords + h2 * (eye[i] + eye[j]), charts)[0]
            pm = f.derivatives(coords + h2 * (eye[i] - eye[j]), charts)[0]
            mp = f.derivatives(coords + h2 * (-eye[i] + eye[j]), charts)[0]
            mm = f.derivatives(coords - h2 * (eye[i] + eye[j]), charts)[0]
            hess[:, i, j] = hess[:, j, i] = (pp - pm - mp + mm) / (4 * h2 * h2)
    return grad, hess
