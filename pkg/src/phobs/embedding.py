"""Polytopic embedding of the observer error dynamics over an operating box.

The error dynamics are linear in a small set of bounded scheduling
parameters; over the operating domain each parameter lives in an interval,
so the error Jacobian lies in the convex hull of 2**n_k corner ("vertex")
realizations.  This module computes the parameter intervals, enumerates the
vertex matrix pairs (A_bar_i, C_bar_i), evaluates the convex weights at an
operating point, and provides the line-integral residual used to validate
the exact mean-value factorization of the nonlinear term.

Scheduling parameters for the scalar actuator instance (frozen order):

    gain_slope  a     = dg2/dq(qhat)
    input       u     = instantaneous squared voltage
    out_jac_q   beta  = a(qhat) phat / m     (treated as independent)
    gain        g     = g2(qhat)

Corner ordering is binary counting over that order, parameter 0 is the
least significant bit, bit 0 = interval minimum, bit 1 = maximum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (
    PHSystem,
    StateVec,
    drift_matrix,
    input_gain,
    input_gain_jacobian,
    nonlinear_term,
    nonlinear_term_jacobian,
)

__all__ = [
    "OperatingDomain",
    "ParameterBounds",
    "VertexSet",
    "WeightVector",
    "compute_parameter_bounds",
    "enumerate_vertices",
    "mean_value_residual",
    "reconstruct",
    "scheduling_parameters",
    "weights",
]

PARAM_NAMES = ("gain_slope", "input", "out_jac_q", "gain")


@dataclass(frozen=True)
class OperatingDomain:
    """Componentwise box for (q, p) plus the admissible input interval."""

    q_min: np.ndarray
    q_max: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        for name in ("q_min", "q_max", "p_min", "p_max", "u_min", "u_max"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (np.all(self.q_min <= self.q_max)
                and np.all(self.p_min <= self.p_max)
                and np.all(self.u_min <= self.u_max)):
            raise ValueError("domain must satisfy min <= max componentwise")

    def contains(self, x: StateVec) -> bool:
        return bool(np.all(self.q_min <= x.q) and np.all(x.q <= self.q_max)
                    and np.all(self.p_min <= x.p) and np.all(x.p <= self.p_max))


@dataclass(frozen=True)
class ParameterBounds:
    """Ordered scalar scheduling-parameter intervals."""

    names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or len(self.names) != lo.shape[0]:
            raise ValueError("names/lo/hi must agree in length")
        if np.any(lo > hi):
            raise ValueError("parameter bounds must satisfy lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_params(self) -> int:
        return self.lo.shape[0]

    @property
    def n_vertices(self) -> int:
        return 2 ** self.n_params


@dataclass(frozen=True)
class VertexSet:
    """Corner realizations (A_bar_i, C_bar_i) of the embedded error dynamics."""

    A: np.ndarray            # (N_v, 2n, 2n)
    C: np.ndarray            # (N_v, m, 2n)
    corner_bits: np.ndarray  # (N_v, n_k) 0 = lo, 1 = hi
    bounds: ParameterBounds

    @property
    def n_vertices(self) -> int:
        return self.A.shape[0]

    def pairs(self):
        return [(self.A[i], self.C[i]) for i in range(self.n_vertices)]


@dataclass(frozen=True)
class WeightVector:
    """Convex weights over the vertex set (nonnegative, sum to one)."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if np.any(h < -1e-15):
            raise ValueError("weights must be nonnegative")
        if abs(h.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "h", h)


def _require_scalar(sys: PHSystem):
    if sys.n != 1 or sys.m != 1:
        raise NotImplementedError(
            "polytopic embedding is implemented for the scalar instance (n = m = 1)")


def scheduling_parameters(sys: PHSystem, xhat: StateVec, u: float) -> np.ndarray:
    """(a, u, beta, g) evaluated at the estimate; see module docstring."""
    _require_scalar(sys)
    a = input_gain_jacobian(sys, xhat.q)[0][0, 0]
    g = input_gain(sys, xhat.q)[0, 0]
    beta = a * float(sys.M_inv[0, 0]) * xhat.p[0]
    return np.array([a, float(u), beta, g])


def compute_parameter_bounds(sys: PHSystem, dom: OperatingDomain) -> ParameterBounds:
    """Interval bounds of the scheduling parameters over the operating box.

    g2 and dg2/dq are monotone in q wherever q + q0 > 0, so their extremes
    sit at the box endpoints.  The beta interval is the extreme of the
    products {a_lo, a_hi} x {v_lo, v_hi} with v = p/m (all four corners are
    enumerated, so negative slopes would be handled too).
    """
    _require_scalar(sys)
    if sys.scalar_params is not None:
        q0 = sys.scalar_params.q0_m
        if dom.q_min[0] + q0 <= 0.0 or dom.q_max[0] + q0 <= 0.0:
            raise ValueError("operating box crosses q + q0 = 0; "
                             "input-map monotonicity is lost")

    a_ends = [input_gain_jacobian(sys, dom.q_min)[0][0, 0],
              input_gain_jacobian(sys, dom.q_max)[0][0, 0]]
    g_ends = [input_gain(sys, dom.q_min)[0, 0], input_gain(sys, dom.q_max)[0, 0]]
    m_inv = float(sys.M_inv[0, 0])
    v_ends = [m_inv * dom.p_min[0], m_inv * dom.p_max[0]]
    beta_corners = [a * v for a in a_ends for v in v_ends]

    u_lo = min(0.0, float(dom.u_min[0]))
    lo = np.array([min(a_ends), u_lo, min(beta_corners), min(g_ends)])
    hi = np.array([max(a_ends), float(dom.u_max[0]), max(beta_corners), max(g_ends)])
    return ParameterBounds(PARAM_NAMES, lo, hi)


def enumerate_vertices(sys: PHSystem, bounds: ParameterBounds) -> VertexSet:
    """All 2**n_k corner pairs (A_bar_i, C_bar_i), frozen binary ordering."""
    _require_scalar(sys)
    A0 = drift_matrix(sys)
    m_inv = float(sys.M_inv[0, 0])
    nv = bounds.n_vertices
    nk = bounds.n_params
    A = np.empty((nv, 2, 2))
    C = np.empty((nv, 1, 2))
    bits = np.empty((nv, nk), dtype=np.int64)
    for i in range(nv):
        b = [(i >> j) & 1 for j in range(nk)]
        bits[i] = b
        theta = np.where(b, bounds.hi, bounds.lo)
        a_i, u_i, beta_i, g_i = theta
        Ai = A0.copy()
        Ai[1, 0] += a_i * u_i
        A[i] = Ai
        C[i, 0] = (beta_i, g_i * m_inv)
    return VertexSet(A=A, C=C, corner_bits=bits, bounds=bounds)


def weights(sys: PHSystem, bounds: ParameterBounds, xhat: StateVec,
            u: float) -> WeightVector:
    """Convex vertex weights at the estimate (sector variables clamped to [0, 1]).

    A degenerate interval (hi == lo) contributes the fixed factor
    (low weight 1, high weight 0).
    """
    theta = scheduling_parameters(sys, xhat, u)
    span = bounds.hi - bounds.lo
    mu = np.where(span > 0.0,
                  np.clip((theta - bounds.lo) / np.where(span > 0.0, span, 1.0), 0.0, 1.0),
                  0.0)
    nv = bounds.n_vertices
    h = np.ones(nv)
    for j in range(bounds.n_params):
        picks_hi = (np.arange(nv) >> j) & 1
        h = h * np.where(picks_hi, mu[j], 1.0 - mu[j])
    return WeightVector(h)


def reconstruct(h: WeightVector, V: VertexSet, L: np.ndarray) -> np.ndarray:
    """Convex combination sum_i h_i (A_bar_i - L C_bar_i)."""
    L = np.asarray(L, dtype=float).reshape(V.A.shape[1], V.C.shape[1])
    M = np.einsum("i,ijk->jk", h.h, V.A)
    return M - L @ np.einsum("i,ijk->jk", h.h, V.C)


# ---------------------------------------------------------------------------
# mean-value factorization oracle
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _gauss_legendre_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, wts = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * wts


def _averaged_jacobian(sys, xhat_v, dx_v, u, L, a, b, order, tol, depth):
    """Adaptive Gauss-Legendre average of the error-term Jacobian on [a, b]."""
    nodes, wts = _gauss_legendre_01(order)

    def panel(lo, hi):
        acc = np.zeros((2 * sys.n, 2 * sys.n))
        for s, w in zip(lo + (hi - lo) * nodes, wts):
            acc += w * nonlinear_term_jacobian(sys, xhat_v + s * dx_v, u, L)
        return (hi - lo) * acc

    coarse = panel(a, b)
    mid = 0.5 * (a + b)
    fine = panel(a, mid) + panel(mid, b)
    if depth <= 0 or np.abs(coarse - fine).max() <= tol * (1.0 + np.abs(fine).max()):
        return fine
    return (_averaged_jacobian(sys, xhat_v, dx_v, u, L, a, mid, order, tol, depth - 1)
            + _averaged_jacobian(sys, xhat_v, dx_v, u, L, mid, b, order, tol, depth - 1))


def mean_value_residual(sys: PHSystem, x: StateVec, xhat: StateVec, u: float,
                        L: np.ndarray, order: int = 20) -> float:
    """Residual of the exact line-integral factorization of the nonlinear term.

    Computes || gamma(x) - gamma(xhat) - (int_0^1 dgamma/dx(xhat + s dx) ds) dx ||
    with adaptive Gauss-Legendre quadrature (``order`` nodes per panel).
    Zero, up to rounding, whenever the analytic Jacobian is consistent with
    the evaluated term.
    """
    u = float(np.atleast_1d(u)[0])
    dx = (x - xhat).as_vector()
    avg = _averaged_jacobian(sys, xhat.as_vector(), dx, u, L,
                             0.0, 1.0, order, tol=1e-14, depth=12)
    diff = nonlinear_term(sys, x, u, L) - nonlinear_term(sys, xhat, u, L)
    return float(np.linalg.norm(diff - avg @ dx))
