import numpy as np
import pytest

from phobs import lmi
from phobs.embedding import ParameterBounds, VertexSet, WeightVector
from phobs.synthesis import (
    CONSTANT,
    SCHEDULED,
    max_decay_rate,
    scheduled_gain,
    synthesize,
)


def toy_vertex_set(A_list, C_list):
    nv = len(A_list)
    b = ParameterBounds(("p",), np.zeros(1), np.ones(1))
    return VertexSet(A=np.stack(A_list), C=np.stack(C_list),
                     corner_bits=np.zeros((nv, 1), dtype=np.int64), bounds=b)


@pytest.fixture(scope="module")
def decoupled_toy():
    return toy_vertex_set([-np.eye(2)], [np.zeros((1, 2))])


@pytest.fixture(scope="module")
def const_design(vertices):
    res = synthesize(vertices, 0.0897, CONSTANT)
    assert not isinstance(res, lmi.FeasibilityResult)
    return res


@pytest.fixture(scope="module")
def sched_design(vertices):
    res = synthesize(vertices, 0.0897, SCHEDULED)
    assert not isinstance(res, lmi.FeasibilityResult)
    return res


class TestSynthesize:
    def test_gain_recovery_identity(self, const_design, vertices):
        # P L = K must hold to near round-off
        prob = lmi.build_constant_problem(vertices, const_design.lam)
        K = const_design.P @ const_design.L
        rep = lmi.verify_solution(prob, const_design.P, [K])
        assert rep.passed
        L_back = np.linalg.solve(const_design.P, K)
        assert np.abs(L_back - const_design.L).max() <= \
            1e-10 * (np.abs(const_design.L).max() + 1.0)

    def test_certificate_stored(self, const_design):
        assert const_design.residual_eigs.max() < 0
        assert const_design.lambda_min_P > 0
        assert const_design.kappa >= 1.0

    def test_scheduled_carries_sixteen_gains(self, sched_design):
        assert len(sched_design.gains) == 16
        assert all(g.shape == (2, 1) for g in sched_design.gains)

    def test_infeasible_rate_propagates(self, vertices):
        res = synthesize(vertices, 4.554, CONSTANT)
        assert isinstance(res, lmi.FeasibilityResult)
        assert res.status == lmi.INFEASIBLE

    def test_bad_mode_rejected(self, vertices):
        with pytest.raises(ValueError):
            synthesize(vertices, 0.1, "adaptive")


class TestMaxDecayRate:
    def test_decoupled_toy_rate_is_one(self, decoupled_toy):
        # xdot = -x certifies any rate below 1 and nothing above
        search = max_decay_rate(decoupled_toy, CONSTANT, tol_lam=1e-3)
        assert search.feasible_at_zero
        assert search.lam_max == pytest.approx(1.0, abs=2e-3)
        assert search.result is not None

    def test_reported_rate_carries_certificate(self, decoupled_toy):
        search = max_decay_rate(decoupled_toy, CONSTANT, tol_lam=1e-3)
        prob = lmi.build_constant_problem(decoupled_toy, search.lam_max)
        K = [search.result.P @ L for L in search.result.gains]
        assert lmi.verify_solution(prob, search.result.P, K).passed

    def test_unstable_toy_returns_zero_with_flag(self):
        V = toy_vertex_set([np.eye(2)], [np.zeros((1, 2))])
        search = max_decay_rate(V, CONSTANT)
        assert search.lam_max == 0.0
        assert not search.feasible_at_zero
        assert search.result is None

    def test_bracket_certified_low_infeasible_high(self, decoupled_toy):
        search = max_decay_rate(decoupled_toy, CONSTANT, tol_lam=1e-3)
        probes = dict(search.probes)
        assert probes.get(search.lam_max) == "feasible"
        above = [l for l, s in search.probes
                 if l > search.lam_max and s != "feasible"]
        assert above and min(above) - search.lam_max <= 1e-3 + 1e-12


class TestScheduledGain:
    def test_basis_weight_selects_vertex_gain(self, sched_design):
        e = np.zeros(16)
        e[5] = 1.0
        got = scheduled_gain(sched_design, WeightVector(e))
        np.testing.assert_array_equal(got, sched_design.gains[5])

    def test_uniform_weights_average(self, sched_design):
        h = WeightVector(np.full(16, 1.0 / 16.0))
        want = np.mean(np.stack(sched_design.gains), axis=0)
        np.testing.assert_allclose(scheduled_gain(sched_design, h), want, rtol=1e-12)

    def test_interpolant_stays_in_componentwise_hull(self, sched_design, rng):
        stack = np.stack(sched_design.gains)
        lo, hi = stack.min(axis=0), stack.max(axis=0)
        for _ in range(50):
            w = rng.random(16)
            w /= w.sum()
            L = scheduled_gain(sched_design, WeightVector(w))
            assert np.all(L >= lo - 1e-9 * np.abs(lo)) and np.all(L <= hi + 1e-9 * np.abs(hi))

    def test_requires_scheduled_result(self, const_design):
        with pytest.raises(ValueError):
            scheduled_gain(const_design, WeightVector(np.full(16, 1.0 / 16.0)))


class TestStructuralProperties:
    def test_kappa_one_for_isotropic_P(self, decoupled_toy):
        res = synthesize(decoupled_toy, 0.2, CONSTANT, polish=False)
        # construct the scaled-identity certificate by hand and check kappa
        from phobs.synthesis import _kappa
        assert _kappa(np.eye(2) * 0.7) == pytest.approx(1.0)
        assert _kappa(np.diag([2.0, 0.5])) == pytest.approx(2.0)
        assert res.kappa >= 1.0

    def test_scheduled_max_at_least_constant_max(self, vertices):
        # constant-gain solutions embed into the scheduled problem
        c = max_decay_rate(vertices, CONSTANT, tol_lam=5e-3)
        s = max_decay_rate(vertices, SCHEDULED, tol_lam=5e-3)
        assert s.lam_max >= c.lam_max - 5e-3

    def test_constant_solution_feasible_for_scheduled_problem(self, vertices, const_design):
        prob = lmi.build_scheduled_problem(vertices, const_design.lam)
        K = const_design.P @ const_design.L
        rep = lmi.verify_solution(prob, const_design.P, [K] * 16)
        assert rep.passed
