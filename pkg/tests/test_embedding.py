import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phobs.embedding import (
    OperatingDomain,
    compute_parameter_bounds,
    mean_value_residual,
    reconstruct,
    scheduling_parameters,
    weights,
)
from phobs.model import (
    StateVec,
    drift_matrix,
    input_gain,
    input_gain_jacobian,
    nonlinear_term_jacobian,
)

UBAR = 5140.0 ** 2


def sv(q, p):
    return StateVec(np.array([q]), np.array([p]))


# strategies drawing from the frozen operating box
q_in_box = st.floats(min_value=-8.1257e-6, max_value=4.6754583e-4)
p_in_box = st.floats(min_value=-6.3029012e-3, max_value=2.2288566e-3)
u_in_box = st.floats(min_value=0.0, max_value=UBAR)


class TestParameterBounds:
    def test_reference_values_six_figures(self, bounds):
        got = {name: (lo, hi) for name, lo, hi
               in zip(bounds.names, bounds.lo, bounds.hi)}
        assert f"{got['gain_slope'][0]:.6g}" == "1.65281e-05"
        assert f"{got['gain_slope'][1]:.6g}" == "3.6182e-05"
        assert f"{got['out_jac_q'][0]:.7g}" == "-2.280516e-07"
        assert f"{got['out_jac_q'][1]:.7g}" == "8.06445e-08"
        assert f"{got['gain'][0]:.6g}" == "5.46459e-09"
        assert f"{got['gain'][1]:.6g}" == "1.76996e-08"
        assert got["input"] == (0.0, UBAR)

    def test_beta_min_is_corner_product(self, dea, bounds, frozen_domain):
        a_hi = input_gain_jacobian(dea, frozen_domain.q_max)[0][0, 0]
        want = a_hi * float(frozen_domain.p_min[0])
        assert bounds.lo[2] == pytest.approx(want, rel=1e-14)

    def test_degenerate_box_collapses(self, dea):
        dom = OperatingDomain(q_min=[1e-4], q_max=[1e-4], p_min=[2e-3],
                              p_max=[2e-3], u_min=[0.0], u_max=[0.0])
        b = compute_parameter_bounds(dea, dom)
        a = input_gain_jacobian(dea, [1e-4])[0][0, 0]
        g = input_gain(dea, [1e-4])[0, 0]
        np.testing.assert_allclose(b.lo, [a, 0.0, a * 2e-3, g], rtol=1e-14)
        np.testing.assert_allclose(b.hi, b.lo, rtol=1e-14)

    def test_rejects_box_crossing_gap_sign_change(self, dea):
        dom = OperatingDomain(q_min=[-2e-3], q_max=[1e-4], p_min=[0.0],
                              p_max=[0.0], u_min=[0.0], u_max=[1.0])
        with pytest.raises(ValueError, match="q \\+ q0"):
            compute_parameter_bounds(dea, dom)


class TestVertexEnumeration:
    def test_sixteen_vertices(self, vertices):
        assert vertices.n_vertices == 16
        assert vertices.A.shape == (16, 2, 2)
        assert vertices.C.shape == (16, 1, 2)

    def test_all_low_corner(self, dea, vertices, bounds):
        A0 = drift_matrix(dea)
        want_A = A0 + np.array([[0.0, 0.0], [bounds.lo[0] * bounds.lo[1], 0.0]])
        np.testing.assert_allclose(vertices.A[0], want_A, rtol=1e-14)
        np.testing.assert_allclose(vertices.C[0],
                                   [[bounds.lo[2], bounds.lo[3] / 1.0]], rtol=1e-14)

    def test_corner_assignment_is_bijection(self, vertices):
        seen = {tuple(row) for row in vertices.corner_bits}
        assert len(seen) == 16
        assert seen == {tuple((i >> j) & 1 for j in range(4)) for i in range(16)}

    def test_bit_zero_is_first_parameter(self, vertices, bounds):
        # vertex 1 flips only the gain-slope parameter relative to vertex 0
        dA = vertices.A[1] - vertices.A[0]
        assert dA[1, 0] == pytest.approx(
            (bounds.hi[0] - bounds.lo[0]) * bounds.lo[1], rel=1e-12)

    def test_single_parameter_would_give_two_vertices(self, bounds):
        assert 2 ** 1 == 2  # N_v = 2^{n_k}; full set checked above
        assert bounds.n_vertices == 16


class TestWeights:
    def test_all_low_gives_first_basis_vector(self, dea, bounds, frozen_domain):
        # estimate at the lower q edge with p at the beta-max... pick exact lows:
        # theta lows: slope/gain at q_min, u = 0, beta low at (a_hi corner) -
        # use a state whose every parameter clamps to its minimum
        xh = sv(float(frozen_domain.q_min[0]), 0.0)
        h = weights(dea, bounds, xh, 0.0)
        # slope, input, gain hit their lows; beta = 0 sits strictly inside
        theta = scheduling_parameters(dea, xh, 0.0)
        mu_beta = (theta[2] - bounds.lo[2]) / (bounds.hi[2] - bounds.lo[2])
        want = np.zeros(16)
        want[0] = 1.0 - mu_beta
        want[4] = mu_beta  # bit 2 set = beta high
        np.testing.assert_allclose(h.h, want, atol=1e-15)

    def test_midpoint_is_uniform(self, dea, bounds, rng, monkeypatch):
        import phobs.embedding as emb
        mid = 0.5 * (bounds.lo + bounds.hi)
        monkeypatch.setattr(emb, "scheduling_parameters", lambda s, x, u: mid)
        h = emb.weights(dea, bounds, sv(0.0, 0.0), 0.0)
        np.testing.assert_allclose(h.h, np.full(16, 1.0 / 16.0), rtol=1e-12)

    def test_all_parameters_low_gives_first_vertex(self, dea, bounds, monkeypatch):
        import phobs.embedding as emb
        monkeypatch.setattr(emb, "scheduling_parameters",
                            lambda s, x, u: bounds.lo.copy())
        h = emb.weights(dea, bounds, sv(0.0, 0.0), 0.0)
        want = np.zeros(16)
        want[0] = 1.0
        np.testing.assert_array_equal(h.h, want)

    @given(q=q_in_box, p=p_in_box, u=u_in_box)
    def test_partition_of_unity(self, dea, bounds, q, p, u):
        h = weights(dea, bounds, sv(q, p), u)
        assert abs(h.h.sum() - 1.0) < 1e-12
        assert h.h.min() >= -1e-15

    @given(q=q_in_box, p=p_in_box, u=u_in_box)
    def test_parameters_stay_in_hull(self, dea, bounds, q, p, u):
        theta = scheduling_parameters(dea, sv(q, p), u)
        assert np.all(theta >= bounds.lo - 1e-12 * np.abs(bounds.lo))
        assert np.all(theta <= bounds.hi + 1e-12 * np.abs(bounds.hi))

    def test_degenerate_parameter_pins_low_weight(self, dea):
        dom = OperatingDomain(q_min=[0.0], q_max=[1e-4], p_min=[-1e-3],
                              p_max=[1e-3], u_min=[0.0], u_max=[0.0])
        b = compute_parameter_bounds(dea, dom)
        h = weights(dea, b, sv(5e-5, 0.0), 0.0)
        # input interval is a point: every weight with the input bit high is 0
        high_input = [(i >> 1) & 1 == 1 for i in range(16)]
        assert np.all(h.h[high_input] == 0.0)

    def test_out_of_domain_estimate_is_clamped(self, dea, bounds):
        h = weights(dea, bounds, sv(5e-3, 5e-2), 1e9)
        assert abs(h.h.sum() - 1.0) < 1e-12
        assert h.h.min() >= 0.0


class TestReconstruction:
    def test_basis_weight_returns_vertex(self, dea, vertices, rng):
        from phobs.embedding import WeightVector
        L = rng.uniform(-1e6, 1e6, size=(2, 1))
        for k in (0, 7, 15):
            e = np.zeros(16)
            e[k] = 1.0
            got = reconstruct(WeightVector(e), vertices, L)
            want = vertices.A[k] - L @ vertices.C[k]
            np.testing.assert_allclose(got, want, rtol=1e-14)

    def test_zero_gain_averages_vertex_drifts(self, dea, bounds, vertices):
        h = weights(dea, bounds, sv(1e-4, -1e-3), 0.3 * UBAR)
        got = reconstruct(h, vertices, np.zeros((2, 1)))
        want = np.einsum("i,ijk->jk", h.h, vertices.A)
        np.testing.assert_allclose(got, want, rtol=1e-14)

    @given(q=q_in_box, p=p_in_box, u=u_in_box,
           l1=st.floats(-1e7, 1e7), l2=st.floats(-1e7, 1e7))
    def test_affine_exactness(self, dea, bounds, vertices, q, p, u, l1, l2):
        # convex reconstruction equals drift + pointwise Jacobian at the estimate
        xh = sv(q, p)
        L = np.array([[l1], [l2]])
        h = weights(dea, bounds, xh, u)
        lhs = reconstruct(h, vertices, L)
        rhs = drift_matrix(dea) + nonlinear_term_jacobian(dea, xh, u, L)
        scale = np.abs(rhs).max() + 1e-30
        assert np.abs(lhs - rhs).max() < 1e-10 * scale


class TestMeanValueResidual:
    def test_zero_when_states_coincide(self, dea):
        x = sv(2e-4, -1e-3)
        assert mean_value_residual(dea, x, x, UBAR, np.array([[1.0], [2.0]])) == 0.0

    def test_random_states_are_exact(self, dea, rng):
        worst = 0.0
        for _ in range(200):
            x = sv(rng.uniform(-8.1257e-6, 4.6754583e-4),
                   rng.uniform(-6.3029012e-3, 2.2288566e-3))
            xh = sv(rng.uniform(-8.1257e-6, 4.6754583e-4),
                    rng.uniform(-6.3029012e-3, 2.2288566e-3))
            u = rng.uniform(0.0, UBAR)
            L = rng.uniform(-1e7, 1e7, size=(2, 1))
            from phobs.model import nonlinear_term
            scale = (np.linalg.norm(nonlinear_term(dea, x, u, L))
                     + np.linalg.norm(nonlinear_term(dea, xh, u, L)) + 1e-30)
            worst = max(worst, mean_value_residual(dea, x, xh, u, L) / scale)
        assert worst < 1e-12

    def test_detects_perturbed_jacobian(self, dea, monkeypatch):
        # scaling the input-gain slope by 1% must break the factorization
        import phobs.embedding as emb
        true_jac = emb.nonlinear_term_jacobian

        def crooked(sys_, x, u, L):
            jac = true_jac(sys_, x, u, L).copy()
            jac[1, 0] *= 1.01
            return jac

        monkeypatch.setattr(emb, "nonlinear_term_jacobian", crooked)
        x, xh = sv(4e-4, 1e-3), sv(1e-5, -2e-3)
        res = emb.mean_value_residual(dea, x, xh, UBAR, np.zeros((2, 1)))
        assert res > 1e-6
