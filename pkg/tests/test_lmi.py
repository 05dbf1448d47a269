import numpy as np
import pytest

from phobs import lmi
from phobs.embedding import ParameterBounds, VertexSet


def toy_vertex_set(A_list, C_list):
    nv = len(A_list)
    nk = max(1, int(np.log2(nv))) if nv > 1 else 1
    bits = np.zeros((nv, nk), dtype=np.int64)
    b = ParameterBounds(("p",) * nk, np.zeros(nk), np.ones(nk))
    return VertexSet(A=np.stack(A_list), C=np.stack(C_list),
                     corner_bits=bits, bounds=b)


@pytest.fixture(scope="module")
def stable_toy():
    # single decoupled vertex xdot = -x with no usable output
    return toy_vertex_set([-np.eye(2)], [np.zeros((1, 2))])


class TestProblemConstruction:
    def test_constant_counts(self, vertices):
        prob = lmi.build_constant_problem(vertices, 0.1)
        assert prob.n_vertices == 16
        assert prob.n_gains == 1
        assert np.all(prob.gain_index == 0)
        # decision dimension: sym 2x2 (3) + one 2x1 gain (2)
        assert 3 + 2 * prob.n_gains == 5

    def test_scheduled_counts(self, vertices):
        prob = lmi.build_scheduled_problem(vertices, 0.1)
        assert prob.n_gains == 16
        assert list(prob.gain_index) == list(range(16))
        assert 3 + 2 * prob.n_gains == 35

    def test_margin_scales_with_data(self, vertices):
        prob = lmi.build_constant_problem(vertices, 0.0)
        a_norm = max(np.linalg.norm(vertices.A[i]) for i in range(16))
        assert prob.delta == pytest.approx(1e-6 * (1.0 + a_norm))

    def test_rejects_negative_rate(self, vertices):
        with pytest.raises(ValueError):
            lmi.build_constant_problem(vertices, -0.5)

    def test_rejects_nonfinite_vertices(self, vertices):
        bad = VertexSet(A=vertices.A.copy(), C=vertices.C.copy(),
                        corner_bits=vertices.corner_bits, bounds=vertices.bounds)
        bad.A[3, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            lmi.build_constant_problem(bad, 0.0)


class TestVerifySolution:
    def test_trivial_pass(self, stable_toy):
        prob = lmi.build_constant_problem(stable_toy, 0.0)
        rep = lmi.verify_solution(prob, np.eye(2), [np.zeros((2, 1))])
        assert rep.passed
        np.testing.assert_allclose(rep.residual_eigs, [-2.0])
        assert rep.lambda_min_P == pytest.approx(1.0)

    def test_semidefinite_P_fails(self, stable_toy):
        prob = lmi.build_constant_problem(stable_toy, 0.0)
        rep = lmi.verify_solution(prob, np.diag([1.0, 0.0]), [np.zeros((2, 1))])
        assert not rep.passed
        assert rep.lambda_min_P == 0.0

    def test_unstable_vertex_fails(self):
        V = toy_vertex_set([np.eye(2)], [np.zeros((1, 2))])
        prob = lmi.build_constant_problem(V, 0.0)
        rep = lmi.verify_solution(prob, np.eye(2), [np.zeros((2, 1))])
        assert not rep.passed
        assert rep.residual_eigs.max() > 0


class TestSolveFeasibility:
    def test_lyapunov_toy_feasible(self, stable_toy):
        res = lmi.solve_feasibility(lmi.build_constant_problem(stable_toy, 0.0))
        assert res.status == lmi.FEASIBLE
        assert res.verification.passed
        assert res.worst_residual_eig < 0

    def test_contradictory_constraint_infeasible(self):
        # vertex +I with no output: S = P A + A P + 2 lam P = 2(1+lam) P > 0
        V = toy_vertex_set([np.eye(2)], [np.zeros((1, 2))])
        res = lmi.solve_feasibility(lmi.build_constant_problem(V, 0.0))
        assert res.status == lmi.INFEASIBLE
        assert res.phase1_t > 0
        assert res.duality_gap < 1e-8

    def test_dea_low_rate_feasible(self, vertices):
        res = lmi.solve_feasibility(lmi.build_constant_problem(vertices, 0.0897))
        assert res.status == lmi.FEASIBLE
        assert res.verification.margin >= 0.5 * lmi.build_constant_problem(vertices, 0.0897).delta

    def test_dea_constant_infeasible_at_scheduled_max(self, vertices):
        res = lmi.solve_feasibility(lmi.build_constant_problem(vertices, 4.554))
        assert res.status == lmi.INFEASIBLE

    def test_unknown_backend_raises(self, vertices):
        with pytest.raises(KeyError):
            lmi.solve_feasibility(lmi.build_constant_problem(vertices, 0.0),
                                  backend="nope")

    def test_backend_registry_roundtrip(self, vertices, stable_toy):
        calls = []

        def fake(prob):
            calls.append(prob)
            return lmi._BACKENDS["clarabel"](prob)

        lmi.register_backend("fake", fake)
        try:
            res = lmi.solve_feasibility(lmi.build_constant_problem(stable_toy, 0.0),
                                        backend="fake")
            assert res.status == lmi.FEASIBLE
            assert len(calls) == 1
        finally:
            lmi._BACKENDS.pop("fake")


class TestCertificateProperties:
    def test_homogeneous_rescale_still_verifies(self, vertices):
        prob = lmi.build_constant_problem(vertices, 0.0897)
        res = lmi.solve_feasibility(prob)
        assert res.status == lmi.FEASIBLE
        scale = prob.trace_cap / np.trace(res.P)
        rep = lmi.verify_solution(prob, scale * res.P,
                                  [scale * K for K in res.gains_K])
        assert rep.passed

    def test_rate_monotonicity_of_certificates(self, vertices):
        hi = lmi.solve_feasibility(lmi.build_constant_problem(vertices, 0.5))
        assert hi.status == lmi.FEASIBLE
        lo_prob = lmi.build_constant_problem(vertices, 0.1)
        rep = lmi.verify_solution(lo_prob, hi.P, hi.gains_K)
        assert rep.passed
