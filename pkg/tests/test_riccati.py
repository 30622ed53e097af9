import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cconvex.riccati import (
    ConjugatePointError,
    blow_up_threshold,
    comparison_check,
    constant_source,
    riccati_explicit_block,
    riccati_explicit_constant,
    riccati_integrate,
)


def scalar(k, s0, t_end=1.0, step=1e-3):
    return riccati_integrate(constant_source([[k]]), [[s0]], t_end, step)


class TestIntegrate:
    def test_zero(self):
        traj = riccati_integrate(constant_source(np.zeros((3, 3))), np.zeros((3, 3)), 1.0)
        assert traj.bounded()
        np.testing.assert_array_equal(traj.S, 0.0)

    def test_positive_curvature_gives_minus_tan(self):
        traj = scalar(1.0, 0.0)
        assert traj.S[-1, 0, 0] == pytest.approx(-np.tan(1.0), abs=1e-10)
        assert traj.S[-1, 0, 0] == pytest.approx(-1.557408, abs=1e-6)

    def test_blow_up_at_threshold(self):
        traj = scalar(-1.0, -1.0 / np.tanh(1.0), t_end=1.2)
        assert traj.blow_up == pytest.approx(1.0, abs=1e-3)
        assert np.isnan(traj.S[-1]).all()

    def test_bounded_just_above_threshold(self):
        assert scalar(-1.0, -1.0 / np.tanh(1.0) + 0.01).bounded()

    def test_blow_up_below_threshold(self):
        traj = scalar(-1.0, -1.0 / np.tanh(1.0) - 1e-3)
        assert traj.blow_up is not None and traj.blow_up < 1.0

    def test_samples_symmetric(self, rng):
        A = rng.normal(size=(3, 3))
        R = A + A.T
        B = rng.normal(size=(3, 3))
        traj = riccati_integrate(constant_source(R), 0.1 * (B + B.T), 0.5)
        finite = np.isfinite(traj.S).all(axis=(1, 2))
        S = traj.S[finite]
        np.testing.assert_allclose(S, np.swapaxes(S, 1, 2), atol=1e-9)

    def test_time_dependent_source(self):
        # S = 2/(1+t) solves S' + S^2 + R = 0 for R = -2/(1+t)^2
        traj = riccati_integrate(lambda t: np.array([[-2.0 / (1 + t) ** 2]]), [[2.0]], 1.0)
        np.testing.assert_allclose(traj.S[:, 0, 0], 2 / (1 + traj.times), atol=1e-10)

    def test_rejects_non_symmetric(self):
        with pytest.raises(ValueError):
            riccati_integrate(constant_source(np.zeros((2, 2))), [[0.0, 1.0], [0.0, 0.0]], 1.0)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            riccati_integrate(constant_source([[0.0]]), [[0.0]], 1.0, step=0.0)


class TestExplicit:
    def test_zero_curvature_zero_start(self):
        np.testing.assert_array_equal(riccati_explicit_constant(0.0, np.zeros((2, 2)), 0.7), 0.0)

    @pytest.mark.parametrize("s", [-0.4, 0.0, 0.3, 2.0])
    def test_flat_scalar(self, s):
        out = riccati_explicit_constant(0.0, s * np.eye(2), 1.0)
        np.testing.assert_allclose(out, s / (1 + s) * np.eye(2), atol=1e-15)

    def test_negative_curvature(self):
        out = riccati_explicit_constant(-1.0, np.zeros((2, 2)), 1.0)
        np.testing.assert_allclose(out, np.tanh(1.0) * np.eye(2), atol=1e-15)
        assert out[0, 0] == pytest.approx(0.761594, abs=1e-6)

    def test_conjugate_point(self):
        with pytest.raises(ConjugatePointError):
            riccati_explicit_constant(1.0, np.zeros((1, 1)), np.pi / 2)
        with pytest.raises(ConjugatePointError):
            riccati_explicit_constant(0.0, -np.eye(1), 1.0)

    @pytest.mark.parametrize("eps", [1e-4, 1e-5, 1e-6])
    def test_branch_continuity(self, eps, rng):
        A = rng.uniform(-0.4, 0.4, size=(3, 3))
        S0 = 0.5 * (A + A.T)
        base = riccati_explicit_constant(0.0, S0, 1.0)
        for k in (eps, -eps):
            assert np.abs(riccati_explicit_constant(k, S0, 1.0) - base).max() <= 2.0 * eps

    def test_block_reduces_to_flat(self, rng):
        A = rng.uniform(-0.4, 0.4, size=(3, 3))
        S0 = 0.5 * (A + A.T)
        np.testing.assert_allclose(riccati_explicit_block(-2.0, 0.0, S0, 0.8),
                                   riccati_explicit_constant(0.0, S0, 0.8), atol=1e-14)

    def test_block_positive(self):
        out = riccati_explicit_block(1.0, 1.0, np.zeros((3, 3)), 1.0)
        np.testing.assert_allclose(out, np.diag([0.0, -np.tan(1.0), -np.tan(1.0)]), atol=1e-14)

    def test_block_negative(self):
        out = riccati_explicit_block(-1.0, 2.0, np.zeros((2, 2)), 0.5)
        np.testing.assert_allclose(out, np.diag([0.0, 2 * np.tanh(1.0)]), atol=1e-14)

    def test_block_matches_integration(self, rng):
        A = rng.uniform(-0.3, 0.3, size=(3, 3))
        S0 = 0.5 * (A + A.T)
        R = np.diag([0.0, -1.5 * 0.8**2, -1.5 * 0.8**2])
        traj = riccati_integrate(constant_source(R), S0, 1.0)
        np.testing.assert_allclose(traj.S[-1], riccati_explicit_block(-1.5, 0.8, S0, 1.0), atol=1e-10)

    def test_block_conjugate_point(self):
        with pytest.raises(ConjugatePointError):
            riccati_explicit_block(1.0, 1.0, np.zeros((2, 2)), np.pi / 2)


class TestThreshold:
    def test_values(self):
        assert blow_up_threshold(-1.0) == pytest.approx(-1.0 / np.tanh(1.0))
        assert blow_up_threshold(0.0) == -1.0
        assert blow_up_threshold(1.0) == pytest.approx(-1.0 / np.tan(1.0))
        assert blow_up_threshold(np.pi**2) == np.inf

    @pytest.mark.parametrize("k", [-4.0, -1.0, -0.1, 0.0, 0.5, 2.0])
    def test_sharp(self, k):
        s = blow_up_threshold(k)
        assert scalar(k, s + 0.01).bounded()
        assert not scalar(k, s - 0.01).bounded()

    def test_everything_blows_up_past_pi_squared(self):
        assert not scalar(np.pi**2 + 0.5, 100.0).bounded()


class TestComparison:
    def test_shifted_start(self):
        R = constant_source(np.diag([0.3, -0.2]))
        S2 = np.diag([0.1, 0.2])
        t1 = riccati_integrate(R, S2 - 0.01 * np.eye(2), 1.0)
        t2 = riccati_integrate(R, S2, 1.0)
        rep = comparison_check(t1, t2)
        assert rep.holds and rep.samples_checked == len(t1.times)

    def test_larger_curvature_stays_below(self):
        t1 = riccati_integrate(constant_source(np.eye(2)), -0.01 * np.eye(2), 1.0)
        t2 = riccati_integrate(constant_source(-np.eye(2)), np.zeros((2, 2)), 1.0)
        assert comparison_check(t1, t2).holds

    def test_stops_at_blow_up(self):
        t1 = scalar(-1.0, -2.0)
        t2 = scalar(-1.0, -1.0)
        rep = comparison_check(t1, t2)
        assert rep.holds and rep.samples_checked < len(t1.times)

    def test_reversed_order_detected(self):
        R = constant_source(np.zeros((1, 1)))
        t1 = riccati_integrate(R, [[0.0]], 1.0)
        t2 = riccati_integrate(constant_source([[3.0]]), [[0.01]], 1.0)
        assert not comparison_check(t1, t2).holds

    def test_preconditions(self):
        a = scalar(0.0, 0.0)
        with pytest.raises(ValueError):
            comparison_check(a, a)
        with pytest.raises(ValueError):
            comparison_check(scalar(0.0, 0.0, t_end=0.5), scalar(0.0, 1.0))


@given(st.floats(-2.0, 2.0), st.floats(-0.5, 0.5))
def test_scalar_integration_matches_closed_form(k, s0):
    traj = scalar(k, s0, step=1e-2)
    margin = s0 - blow_up_threshold(k)
    if margin > 0.05:
        exact = riccati_explicit_constant(k, [[s0]], 1.0)
        assert traj.S[-1, 0, 0] == pytest.approx(exact[0, 0], abs=1e-7)
    elif margin < -0.05:
        assert not traj.bounded()
