"""Strict LMI feasibility for vertex-wise observer certificates.

For a vertex set {(A_bar_i, C_bar_i)} and decay rate lam >= 0 the decision
variables are a shared symmetric P and one or N_v gain surrogates K_k, with
constraints

    A_bar_i^T P + P A_bar_i - C_bar_i^T K^T - K C_bar_i + 2 lam P <= -delta I
    P >= eps_P I,   trace(P) <= tau.

Strictness is realized by the data-scaled margin delta; the conditioning
floor and trace cap pin the homogeneous ray.  Solving goes through a
pluggable conic backend (an interior-point solver via cvxpy by default),
but feasibility claims never rest on solver status: every candidate is
re-checked by :func:`verify_solution`, which uses only the cyclic-Jacobi
symmetric eigenvalue routine on the original (unscaled) data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .embedding import VertexSet
from .linalg import symmetric_eigvals

__all__ = [
    "FEASIBLE",
    "INCONCLUSIVE",
    "INFEASIBLE",
    "FeasibilityResult",
    "LMIProblem",
    "VerificationReport",
    "build_constant_problem",
    "build_scheduled_problem",
    "register_backend",
    "residual_matrices",
    "solve_feasibility",
    "verify_solution",
]

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class LMIProblem:
    """Vertex data plus margins; affine in (P, K_1..K_{n_gains})."""

    A: np.ndarray            # (N_v, 2n, 2n)
    C: np.ndarray            # (N_v, m, 2n)
    lam: float
    gain_index: np.ndarray   # (N_v,) which K each constraint uses
    n_gains: int
    delta: float             # strictness margin
    eps_P: float             # conditioning floor on P
    trace_cap: float
    c_scale: float           # internal output scaling for the solver

    @property
    def n_vertices(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[1]


@dataclass(frozen=True)
class VerificationReport:
    residual_eigs: np.ndarray   # per-vertex max eigenvalue of S_i
    lambda_min_P: float
    passed: bool                # max residual < 0 and P positive definite
    margin: float               # -max residual eigenvalue


@dataclass(frozen=True)
class FeasibilityResult:
    status: str
    P: np.ndarray | None
    gains_K: list[np.ndarray]
    worst_residual_eig: float
    iterations: int
    phase1_t: float
    duality_gap: float
    verification: VerificationReport | None = None


def _make_problem(V: VertexSet, lam: float, gain_index: np.ndarray,
                  n_gains: int) -> LMIProblem:
    if lam < 0.0:
        raise ValueError("decay rate must be nonnegative")
    if not (np.all(np.isfinite(V.A)) and np.all(np.isfinite(V.C))):
        raise ValueError("vertex data must be finite")
    dim = V.A.shape[1]
    a_norm = max(float(np.linalg.norm(V.A[i])) for i in range(V.n_vertices))
    c_norm = float(np.mean([np.linalg.norm(V.C[i]) for i in range(V.n_vertices)]))
    tau = float(dim)
    return LMIProblem(
        A=V.A.copy(), C=V.C.copy(), lam=float(lam),
        gain_index=gain_index, n_gains=n_gains,
        delta=1e-6 * (1.0 + a_norm),
        eps_P=1e-8 * tau / dim,
        trace_cap=tau,
        c_scale=1.0 / c_norm if c_norm > 0 else 1.0,
    )


def build_constant_problem(V: VertexSet, lam: float) -> LMIProblem:
    """One shared gain surrogate across every vertex constraint."""
    return _make_problem(V, lam, np.zeros(V.n_vertices, dtype=np.int64), 1)


def build_scheduled_problem(V: VertexSet, lam: float) -> LMIProblem:
    """One gain surrogate per vertex, shared P."""
    return _make_problem(V, lam, np.arange(V.n_vertices, dtype=np.int64),
                         V.n_vertices)


def residual_matrices(prob: LMIProblem, P: np.ndarray,
                      gains_K: list[np.ndarray]) -> list[np.ndarray]:
    """Symmetrized S_i on the original data."""
    out = []
    for i in range(prob.n_vertices):
        K = np.asarray(gains_K[prob.gain_index[i]], dtype=float)
        Ai, Ci = prob.A[i], prob.C[i]
        S = Ai.T @ P + P @ Ai - Ci.T @ K.T - K @ Ci + 2.0 * prob.lam * P
        out.append(0.5 * (S + S.T))
    return out


def verify_solution(prob: LMIProblem, P: np.ndarray,
                    gains_K: list[np.ndarray]) -> VerificationReport:
    """Solver-independent certificate check.

    Passes iff every residual S_i has strictly negative maximum eigenvalue
    and P is positive definite; eigenvalues come from the cyclic Jacobi
    routine only.
    """
    P = np.asarray(P, dtype=float)
    eigs = np.array([symmetric_eigvals(S)[-1] for S in residual_matrices(prob, P, gains_K)])
    lam_min_p = float(symmetric_eigvals(0.5 * (P + P.T))[0])
    worst = float(eigs.max())
    return VerificationReport(
        residual_eigs=eigs,
        lambda_min_P=lam_min_p,
        passed=bool(worst < 0.0 and lam_min_p > 0.0),
        margin=-worst,
    )


# ---------------------------------------------------------------------------
# conic backends
# ---------------------------------------------------------------------------

def cvx_constraints(prob: LMIProblem, P, Ks, slack=None):
    """cvxpy constraint list for the margin-delta problem (scaled outputs).

    With ``slack`` (a scalar variable) the vertex blocks become
    S_i <= (slack - delta) I, which is the phase-I relaxation.
    """
    import cvxpy as cp

    dim = prob.dim
    cons = [P >> prob.eps_P * np.eye(dim), cp.trace(P) <= prob.trace_cap]
    rhs = (slack - prob.delta) if slack is not None else -prob.delta
    for i in range(prob.n_vertices):
        K = Ks[prob.gain_index[i]]
        Cs = prob.C[i] * prob.c_scale
        S = prob.A[i].T @ P + P @ prob.A[i] - Cs.T @ K.T - K @ Cs \
            + 2.0 * prob.lam * P
        cons.append(S << rhs * np.eye(dim))
    return cons


def _solve_phase1_cvxpy(prob: LMIProblem, solver: str):
    import cvxpy as cp

    dim, m = prob.dim, prob.n_outputs
    P = cp.Variable((dim, dim), symmetric=True)
    Ks = [cp.Variable((dim, m)) for _ in range(prob.n_gains)]
    t = cp.Variable()
    cons = cvx_constraints(prob, P, Ks, slack=t)
    problem = cp.Problem(cp.Minimize(t), cons)
    try:
        problem.solve(solver=solver)
    except cp.SolverError:
        return None
    if P.value is None or t.value is None:
        return None
    stats = problem.solver_stats
    gap = np.nan
    if stats is not None and stats.extra_stats is not None:
        info = stats.extra_stats
        if isinstance(info, dict):
            gap = float(info.get("gap", info.get("duality_gap", np.nan)))
        else:
            for attr in ("gap", "duality_gap"):
                if hasattr(info, attr):
                    gap = float(getattr(info, attr))
                    break
    if not np.isfinite(gap) and problem.status == cp.OPTIMAL:
        gap = 0.0  # termination at optimality implies the solver's gap tolerance
    iters = int(stats.num_iters) if stats is not None and stats.num_iters else -1
    Pv = 0.5 * (P.value + P.value.T)
    gains = [K.value * prob.c_scale for K in Ks]
    return Pv, gains, float(t.value), gap, iters


Backend = Callable[[LMIProblem], "tuple | None"]
_BACKENDS: dict[str, Backend] = {
    "clarabel": lambda prob: _solve_phase1_cvxpy(prob, "CLARABEL"),
    "cvxopt": lambda prob: _solve_phase1_cvxpy(prob, "CVXOPT"),
    "scs": lambda prob: _solve_phase1_cvxpy(prob, "SCS"),
}
DEFAULT_BACKEND = "clarabel"


def register_backend(name: str, solve_phase1: Backend):
    """Expose a different conic solver; it must return (P, K list, t*, gap, iters)."""
    _BACKENDS[name] = solve_phase1


def solve_feasibility(prob: LMIProblem, backend: str = DEFAULT_BACKEND) -> FeasibilityResult:
    """Phase-I solve plus independent verification.

    Feasible only when the candidate passes :func:`verify_solution` with
    margin >= delta/2.  Infeasible only when the phase-I objective converges
    to t* > 0 with a closed duality gap.  Everything else is Inconclusive.
    """
    if backend not in _BACKENDS:
        raise KeyError(f"unknown backend '{backend}'; have {sorted(_BACKENDS)}")
    sol = _BACKENDS[backend](prob)
    if sol is None:
        return FeasibilityResult(INCONCLUSIVE, None, [], np.inf, -1, np.nan, np.nan)
    P, gains, t_star, gap, iters = sol
    report = verify_solution(prob, P, gains)
    if report.passed and report.margin >= 0.5 * prob.delta \
            and report.lambda_min_P >= 0.5 * prob.eps_P:
        return FeasibilityResult(FEASIBLE, P, gains, float(report.residual_eigs.max()),
                                 iters, t_star, gap, report)
    if t_star > 0.0 and np.isfinite(gap) and gap < 1e-8:
        return FeasibilityResult(INFEASIBLE, None, [], float(report.residual_eigs.max()),
                                 iters, t_star, gap, report)
    return FeasibilityResult(INCONCLUSIVE, None, [], float(report.residual_eigs.max()),
                             iters, t_star, gap, report)
