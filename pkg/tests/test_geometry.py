import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cconvex.geometry import (
    ChartPoint,
    DomainError,
    FlatTorus,
    Hyperbolic2,
    Points,
    Sphere2,
    TangentVector,
    christoffel,
    distance,
    inner,
    make_model,
    metric_at,
    orthonormal_frame,
    orthonormal_frames,
    riemann_curvature,
)

coord = st.floats(-1.2, 1.2, allow_nan=False)
disk_coord = st.floats(-0.6, 0.6, allow_nan=False)


def fd_christoffel(model, u, h=1e-5):
    """Koszul formula with central differences of the metric."""
    n = model.dim
    dg = np.zeros((n, n, n))
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        dg[m] = (model.metric(u + e) - model.metric(u - e)) / (2 * h)
    ginv = model.inverse_metric(u)
    G = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                G[k, i, j] = 0.5 * sum(ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
                                       for l in range(n))
    return G


def sectional(model, x, u, v):
    Ruv = riemann_curvature(model, x, u, v, u).components
    num = inner(model, x, Ruv, v)
    den = inner(model, x, u, u) * inner(model, x, v, v) - inner(model, x, u, v) ** 2
    return num / den


class TestMetric:
    def test_sphere_metric_is_pullback_of_embedding(self, sphere, rng):
        u = rng.uniform(-1.4, 1.4, size=(20, 2))
        for chart in (0, 1):
            _, dX, _ = sphere.embed(u, np.full(20, chart))
            pull = np.einsum("bai,baj->bij", dX, dX)
            np.testing.assert_allclose(sphere.metric(u), pull, atol=1e-12)

    def test_sphere_metric_at_chart_origin(self):
        g, ginv = metric_at(Sphere2(2.0), ChartPoint(0, np.zeros(2)))
        np.testing.assert_allclose(g, 16.0 * np.eye(2))
        np.testing.assert_allclose(ginv, np.eye(2) / 16.0)

    def test_poincare_metric(self, disk):
        u = np.array([0.3, -0.4])
        np.testing.assert_allclose(disk.metric(u), 4.0 / (1 - 0.25) ** 2 * np.eye(2))

    def test_torus_metric_is_identity(self, torus2):
        g, _ = metric_at(torus2, ChartPoint(0, np.array([0.3, 0.9])))
        np.testing.assert_array_equal(g, np.eye(2))

    @pytest.mark.parametrize("model", [Sphere2(1.3), Hyperbolic2(0.7)])
    def test_christoffel_matches_koszul(self, model, rng):
        for _ in range(5):
            u = rng.uniform(-0.6, 0.6, size=2)
            np.testing.assert_allclose(christoffel(model, ChartPoint(0, u)), fd_christoffel(model, u),
                                       atol=1e-7)


class TestCurvature:
    @given(coord, coord, st.floats(0.2, 3.0))
    def test_sphere_sectional_curvature(self, a, b, r):
        model = Sphere2(r)
        x = ChartPoint(0, np.array([a, b]))
        assert sectional(model, x, [1.0, 0.3], [-0.2, 0.7]) == pytest.approx(1 / r**2, rel=1e-9)

    @given(disk_coord, disk_coord, st.floats(0.3, 3.0))
    def test_hyperbolic_sectional_curvature(self, a, b, scale):
        model = Hyperbolic2(scale)
        x = ChartPoint(0, np.array([a, b]))
        assert sectional(model, x, [0.4, 1.0], [1.0, 0.1]) == pytest.approx(-1 / scale**2, rel=1e-9)

    def test_torus_is_flat(self, torus2):
        x = ChartPoint(0, np.array([0.2, 0.4]))
        out = riemann_curvature(torus2, x, [1, 0], [0, 1], [1, 1])
        np.testing.assert_array_equal(out.components, 0.0)

    def test_sign_convention(self, sphere):
        # <R(u, v) u, v> = K |u|^2 |v|^2 for orthogonal u, v
        x = ChartPoint(0, np.zeros(2))
        u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        val = inner(sphere, x, riemann_curvature(sphere, x, u, v, u).components, v)
        assert val > 0
        assert val == pytest.approx(inner(sphere, x, u, u) * inner(sphere, x, v, v))

    def test_tangent_vector_base_must_match(self, sphere):
        x = ChartPoint(0, np.zeros(2))
        y = ChartPoint(0, np.array([0.1, 0.0]))
        with pytest.raises(ValueError):
            riemann_curvature(sphere, x, TangentVector(y, np.ones(2)), [1, 0], [0, 1])


class TestCharts:
    @given(coord, coord)
    def test_sphere_chart_transition_preserves_point(self, a, b):
        model = Sphere2(1.0)
        u = np.array([[a, b]])
        if np.linalg.norm(u) < 1e-3:
            return
        v, _ = model.to_chart(u, [0], [1])
        X0 = model.embed(u, [0])[0]
        X1 = model.embed(v, [1])[0]
        np.testing.assert_allclose(X0, X1, atol=1e-12)

    def test_sphere_normalize_switches_far_points(self, sphere):
        u, c, jac = sphere.normalize(np.array([[3.0, 0.0], [0.2, 0.1]]), np.array([0, 0]))
        assert c.tolist() == [1, 0]
        np.testing.assert_allclose(u[0], [1 / 3, 0.0])
        assert np.linalg.det(jac[0]) < 0

    def test_embedding_round_trip(self, sphere, rng):
        pts = sphere.sample_uniform(50, rng)
        X = sphere.embed(pts.coords, pts.charts)[0]
        back = sphere.from_embedding(X)
        np.testing.assert_allclose(sphere.embed(back.coords, back.charts)[0], X, atol=1e-12)

    def test_torus_normalize_wraps(self):
        model = FlatTorus((1.0, 2.0))
        u, c, _ = model.normalize(np.array([[1.25, -0.5]]), np.array([0]))
        np.testing.assert_allclose(u, [[0.25, 1.5]])

    def test_hyperbolic_domain(self, disk):
        with pytest.raises(DomainError):
            disk.point([0.95, 0.0])
        assert disk.point([0.5, 0.0]).chart == 0

    def test_point_validation(self, torus2):
        with pytest.raises(DomainError):
            metric_at(torus2, ChartPoint(0, np.zeros(3)))
        with pytest.raises(DomainError):
            metric_at(torus2, ChartPoint(1, np.zeros(2)))


class TestDistance:
    def test_sphere_antipodal(self):
        model = Sphere2(2.0)
        d = distance(model, ChartPoint(0, np.zeros(2)), ChartPoint(1, np.zeros(2)))
        assert d == pytest.approx(2.0 * np.pi)

    def test_sphere_quarter_circle(self, sphere):
        # chart 0 origin is the south pole; the unit circle is the equator
        assert distance(sphere, ChartPoint(0, np.zeros(2)),
                        ChartPoint(0, np.array([1.0, 0.0]))) == pytest.approx(np.pi / 2)

    def test_torus_wraps(self, torus2):
        d = distance(torus2, ChartPoint(0, np.array([0.05, 0.5])), ChartPoint(0, np.array([0.95, 0.5])))
        assert d == pytest.approx(0.1)

    @given(st.floats(0.0, 0.85), st.floats(0.2, 3.0))
    def test_hyperbolic_from_origin(self, r, scale):
        model = Hyperbolic2(scale)
        d = distance(model, ChartPoint(0, np.zeros(2)), ChartPoint(0, np.array([0.0, r])))
        assert d == pytest.approx(2 * scale * np.arctanh(r), abs=1e-12)

    @pytest.mark.parametrize("model", [Sphere2(1.0), Hyperbolic2(), FlatTorus((1.0, 1.0))])
    def test_log_has_distance_length(self, model, rng):
        X = model.sample_uniform(30, rng)
        Y = model.sample_uniform(30, rng)
        V = model.log_batch(X.coords, X.charts, Y.coords, Y.charts)
        lengths = np.sqrt(np.einsum("bi,bij,bj->b", V, model.metric(X.coords), V))
        d = model.distance_batch(X.coords, X.charts, Y.coords, Y.charts)
        np.testing.assert_allclose(lengths, d, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("model", [Sphere2(1.0), Hyperbolic2()])
    def test_triangle_inequality(self, model, rng):
        P = [model.sample_uniform(40, rng) for _ in range(3)]
        d = lambda A, B: model.distance_batch(A.coords, A.charts, B.coords, B.charts)  # noqa: E731
        assert np.all(d(P[0], P[2]) <= d(P[0], P[1]) + d(P[1], P[2]) + 1e-12)


class TestFrames:
    @pytest.mark.parametrize("model", [Sphere2(1.7), Hyperbolic2(), FlatTorus((1.0, 3.0))])
    def test_gram_is_identity(self, model, rng):
        pts = model.sample_uniform(25, rng)
        F = orthonormal_frames(model, pts.coords)
        gram = np.einsum("bmi,bij,bkj->bmk", F, model.metric(pts.coords), F)
        np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-12)

    def test_first_vector_respected(self, sphere):
        x = ChartPoint(0, np.array([0.3, 0.1]))
        F = orthonormal_frame(sphere, x, [1.0, 1.0])
        assert F[0, 0] == pytest.approx(F[0, 1])
        assert inner(sphere, x, F[0], F[0]) == pytest.approx(1.0)

    def test_zero_first_vector_rejected(self, sphere):
        with pytest.raises(ValueError):
            orthonormal_frame(sphere, ChartPoint(0, np.zeros(2)), [0.0, 0.0])


def test_make_model():
    assert make_model("flat_torus", periods=[2.0]).periods == (2.0,)
    assert make_model("sphere2", radius=2.0).curvature_bound_k == 0.25
    assert make_model("hyperbolic2", scale=2.0).curvature_bound_k == -0.25
    with pytest.raises(ValueError):
        make_model("klein_bottle")


def test_points_container():
    pts = Points.of([ChartPoint(0, np.array([0.1, 0.2])), ChartPoint(1, np.array([0.3, 0.4]))])
    assert len(pts) == 2
    assert pts[1].chart == 1
    assert [p.chart for p in pts] == [0, 1]
