"""Unit-volatility transform: bijection, transformed drift, bridge centering."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from choldiff.cholesky import CholeskyFactor
from choldiff.models import build_mv_cir, quadratic_variation, PathLattice
from choldiff.simulate import simulate_euler
from choldiff.transform import (
    BridgeFrame,
    TransformContext,
    TransformRangeError,
    center_bridge,
    drift_U,
    inverse_H,
    jacobian_logdet,
    transform_H,
    uncenter_bridge,
)


@pytest.fixture
def ctx(cir_spec, cir_theta, cir_C):
    return TransformContext(cir_spec, cir_C, cir_theta)


class TestBijection:
    def test_roundtrip_single_point(self, ctx):
        x = np.array([0.7, 2.4, 1.1])
        np.testing.assert_allclose(inverse_H(ctx, transform_H(ctx, x)), x,
                                   atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.05, 20.0), min_size=3, max_size=3))
    def test_roundtrip_property(self, cir_spec, cir_theta, cir_C, xs):
        ctx = TransformContext(cir_spec, cir_C, cir_theta)
        x = np.array(xs)
        np.testing.assert_allclose(inverse_H(ctx, transform_H(ctx, x)), x,
                                   rtol=1e-9)

    def test_out_of_range_raises(self, ctx):
        u = transform_H(ctx, np.array([0.5, 0.5, 0.5]))
        # push the first transformed coordinate far negative: [C u]_1 < 0
        u_bad = u.copy()
        u_bad[0] = -100.0
        with pytest.raises(TransformRangeError):
            inverse_H(ctx, u_bad)

    def test_batched_shapes(self, ctx):
        x = np.abs(np.random.default_rng(0).standard_normal((7, 5, 3))) + 0.1
        u = transform_H(ctx, x)
        assert u.shape == x.shape
        np.testing.assert_allclose(inverse_H(ctx, u), x, rtol=1e-9)


class TestDriftU:
    def test_matches_numerical_ito_formula(self, ctx, cir_spec, cir_theta, cir_C):
        """Oracle: second-order Taylor/Ito drift from numerical derivatives of H.

        mu_U,r = sum_i dH_r/dx_i mu_i + 0.5 sum_i d2H_r/dx_i2 A_ii with all
        derivatives taken by central differences, independent of the
        closed form used in the implementation.
        """
        x = np.array([1.3, 2.8, 0.9])
        u = transform_H(ctx, x)
        mu_x = cir_spec.drift(x, cir_theta)
        V = cir_C.product()
        A_diag = x * np.diag(V)
        h = 1e-5
        expected = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            Hp = transform_H(ctx, x + e)
            Hm = transform_H(ctx, x - e)
            H0 = transform_H(ctx, x)
            d1 = (Hp - Hm) / (2 * h)
            d2 = (Hp - 2 * H0 + Hm) / h**2
            expected += d1 * mu_x[i] + 0.5 * d2 * A_diag[i]
        np.testing.assert_allclose(drift_U(ctx, u), expected, rtol=1e-5)

    def test_quadratic_variation_is_identity(self, ctx, cir_spec, cir_theta,
                                             cir_C):
        """Transformed path has unit instantaneous covariance (QV ≈ t I)."""
        t_end, delta = 40.0, 1e-3
        path = simulate_euler(cir_spec, cir_C, cir_theta, [2.5, 3.0, 2.0],
                              t_end, delta, seed=77)
        u = transform_H(ctx, path.states)
        qv = quadratic_variation(PathLattice(path.times, u, path.obs_index))
        np.testing.assert_allclose(qv, t_end * np.eye(3), atol=0.06 * t_end)


class TestJacobian:
    def test_closed_form(self, ctx, cir_C):
        y = np.array([1.5, 2.0, 0.5])
        expected = -cir_C.log_det() - 0.5 * np.sum(np.log(y))
        assert jacobian_logdet(ctx, y) == pytest.approx(expected)

    def test_batched(self, ctx):
        y = np.array([[1.5, 2.0, 0.5], [1.0, 1.0, 1.0]])
        out = jacobian_logdet(ctx, y)
        assert out.shape == (2,)


class TestBridgeCentering:
    def test_roundtrip_and_exact_zeros(self):
        rng = np.random.default_rng(2)
        u0, u1 = rng.standard_normal(3), rng.standard_normal(3)
        frame = BridgeFrame(0, 1.0, 2.0, u0, u1)
        times = frame.lattice_times(12)
        path = frame.interpolant(times) + 0.3 * rng.standard_normal((12, 3))
        path[0], path[-1] = u0, u1
        z = center_bridge(frame, path, times)
        assert np.all(z[0] == 0.0) and np.all(z[-1] == 0.0)
        np.testing.assert_allclose(uncenter_bridge(frame, z, times), path,
                                   atol=1e-12)

    def test_endpoint_mismatch_rejected(self):
        frame = BridgeFrame(0, 0.0, 1.0, np.zeros(2), np.ones(2))
        path = np.zeros((5, 2))
        with pytest.raises(ValueError):
            center_bridge(frame, path)
