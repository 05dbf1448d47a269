"""Observer gain synthesis on top of the LMI feasibility layer.

``synthesize`` turns a feasible certificate into gains L_k = P^-1 K_k.  The
feasibility DECISION always comes from the phase-I solve plus independent
verification; the RETURNED design point is then refined ("polished") inside
the verified-feasible set, because the feasible set is typically fat and
the phase-I optimizer sits at an extreme, maximally aggressive corner:

* constant mode: analytic-center refinement (log-det barrier over all
  constraints) - a generic interior solution;
* scheduled mode: minimum gain spread around a free common gain, with a
  small pull toward zero common gain - the least-scheduling-effort
  solution, which also keeps the online interpolated gain close to the
  vertex gains the certificate actually covers.

Every polished candidate is re-verified; on any failure the phase-I
solution is kept.  ``max_decay_rate`` bisects the largest certifiable decay
rate; each probe is decided by verification only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import VertexSet, WeightVector
from .linalg import symmetric_eigvals
from . import lmi

__all__ = [
    "CONSTANT",
    "SCHEDULED",
    "DecayRateSearch",
    "SynthesisResult",
    "max_decay_rate",
    "scheduled_gain",
    "synthesize",
]

CONSTANT = "const"
SCHEDULED = "sched"


@dataclass(frozen=True)
class SynthesisResult:
    mode: str
    P: np.ndarray
    gains: list[np.ndarray]        # 1 (const) or N_v (sched) entries, each (2n, m)
    lam: float
    kappa: float
    residual_eigs: np.ndarray
    lambda_min_P: float
    solution_kind: str             # "polished" or "phase1"
    solver_iterations: int = -1

    @property
    def L(self) -> np.ndarray:
        """The constant gain (first entry); scheduled results have gains[i]."""
        return self.gains[0]


@dataclass(frozen=True)
class DecayRateSearch:
    lam_max: float
    feasible_at_zero: bool
    probes: list[tuple[float, str]]
    inconclusive_probes: int
    result: SynthesisResult | None


def _kappa(P: np.ndarray) -> float:
    ev = symmetric_eigvals(P)
    return float(np.sqrt(ev[-1] / ev[0]))


def _gains_from_K(P: np.ndarray, gains_K: list[np.ndarray]) -> list[np.ndarray]:
    # factorization solve; never form P^-1 explicitly
    return [np.linalg.solve(P, K) for K in gains_K]


def _polish_constant(prob: lmi.LMIProblem, backend: str):
    """Analytic center of the margin-delta set."""
    import cvxpy as cp

    dim, m = prob.dim, prob.n_outputs
    P = cp.Variable((dim, dim), symmetric=True)
    K = cp.Variable((dim, m))
    eye = np.eye(dim)
    barrier = cp.log_det(P - prob.eps_P * eye) + cp.log(prob.trace_cap - cp.trace(P))
    for i in range(prob.n_vertices):
        Cs = prob.C[i] * prob.c_scale
        S = prob.A[i].T @ P + P @ prob.A[i] - Cs.T @ K.T - K @ Cs \
            + 2.0 * prob.lam * P
        barrier = barrier + cp.log_det(-S - prob.delta * eye)
    problem = cp.Problem(cp.Maximize(barrier), [])
    try:
        problem.solve(solver=backend.upper())
    except cp.SolverError:
        return None
    if P.value is None:
        return None
    return 0.5 * (P.value + P.value.T), [K.value * prob.c_scale]


def _polish_scheduled(prob: lmi.LMIProblem, backend: str, margin: float,
                      rho: float = 1e-6):
    """Minimum gain spread around a free common gain at the given margin."""
    import cvxpy as cp

    dim, m = prob.dim, prob.n_outputs
    P = cp.Variable((dim, dim), symmetric=True)
    Ks = [cp.Variable((dim, m)) for _ in range(prob.n_gains)]
    Kbar = cp.Variable((dim, m))
    eye = np.eye(dim)
    cons = [P >> prob.eps_P * eye, cp.trace(P) <= prob.trace_cap]
    for i in range(prob.n_vertices):
        K = Ks[prob.gain_index[i]]
        Cs = prob.C[i] * prob.c_scale
        S = prob.A[i].T @ P + P @ prob.A[i] - Cs.T @ K.T - K @ Cs \
            + 2.0 * prob.lam * P
        cons.append(S << -margin * eye)
    obj = sum(cp.sum_squares(K - Kbar) for K in Ks) + rho * cp.sum_squares(Kbar)
    problem = cp.Problem(cp.Minimize(obj), cons)
    try:
        problem.solve(solver=backend.upper())
    except cp.SolverError:
        return None
    if P.value is None:
        return None
    return 0.5 * (P.value + P.value.T), [K.value * prob.c_scale for K in Ks]


def synthesize(V: VertexSet, lam: float, mode: str,
               backend: str = lmi.DEFAULT_BACKEND,
               polish: bool = True) -> SynthesisResult | lmi.FeasibilityResult:
    """Synthesize gains at decay rate lam; returns the FeasibilityResult on
    infeasible/inconclusive problems."""
    if mode not in (CONSTANT, SCHEDULED):
        raise ValueError(f"mode must be '{CONSTANT}' or '{SCHEDULED}'")
    build = lmi.build_constant_problem if mode == CONSTANT else lmi.build_scheduled_problem
    prob = build(V, lam)
    feas = lmi.solve_feasibility(prob, backend=backend)
    if feas.status != lmi.FEASIBLE:
        return feas

    P, gains_K, kind = feas.P, feas.gains_K, "phase1"
    if polish:
        if mode == CONSTANT:
            cand = _polish_constant(prob, backend)
        else:
            cand = _polish_scheduled(prob, backend, margin=prob.delta)
            if cand is None:
                cand = _polish_scheduled(prob, backend, margin=0.5 * prob.delta)
        if cand is not None:
            rep = lmi.verify_solution(prob, cand[0], cand[1])
            if rep.passed and rep.margin >= 0.5 * prob.delta:
                P, gains_K, kind = cand[0], cand[1], "polished"

    report = lmi.verify_solution(prob, P, gains_K)
    return SynthesisResult(
        mode=mode,
        P=P,
        gains=_gains_from_K(P, gains_K),
        lam=float(lam),
        kappa=_kappa(P),
        residual_eigs=report.residual_eigs,
        lambda_min_P=report.lambda_min_P,
        solution_kind=kind,
        solver_iterations=feas.iterations,
    )


def max_decay_rate(V: VertexSet, mode: str, tol_lam: float = 1e-3,
                   backend: str = lmi.DEFAULT_BACKEND) -> DecayRateSearch:
    """Largest certifiable decay rate by bisection.

    The upper bracket is found by doubling from 1 (capped at 2**10); the
    reported value is the last probe that carried a verified certificate,
    never a midpoint.  Inconclusive probes count as infeasible.
    """
    inconclusive = 0
    probes: list[tuple[float, str]] = []
    best: SynthesisResult | None = None

    def probe(lam: float) -> SynthesisResult | None:
        nonlocal inconclusive
        res = synthesize(V, lam, mode, backend=backend, polish=False)
        status = res.status if isinstance(res, lmi.FeasibilityResult) else "feasible"
        probes.append((lam, status))
        if isinstance(res, lmi.FeasibilityResult):
            if res.status == lmi.INCONCLUSIVE:
                inconclusive += 1
            return None
        return res

    base = probe(0.0)
    if base is None:
        return DecayRateSearch(0.0, False, probes, inconclusive, None)
    best, lo = base, 0.0

    hi = 1.0
    bracketed = False
    while hi <= 2.0 ** 10:
        res = probe(hi)
        if res is None:
            bracketed = True
            break
        best, lo = res, hi
        hi *= 2.0
    if not bracketed:
        # doubling cap reached with every probe certified
        return DecayRateSearch(lo, True, probes, inconclusive, best)

    while hi - lo > tol_lam:
        mid = 0.5 * (lo + hi)
        res = probe(mid)
        if res is None:
            hi = mid
        else:
            best, lo = res, mid

    return DecayRateSearch(lo, True, probes, inconclusive, best)


def scheduled_gain(result: SynthesisResult, h: WeightVector) -> np.ndarray:
    """Online gain sum_i h_i L_i."""
    if result.mode != SCHEDULED:
        raise ValueError("scheduled_gain requires a scheduled synthesis result")
    if h.h.shape[0] != len(result.gains):
        raise ValueError("weight vector length must match the gain count")
    return np.einsum("i,ijk->jk", h.h, np.stack(result.gains))
