"""Port-Hamiltonian plant model with a displacement-dependent input map.

The plant class handled here is

    xdot = (J - R) Q x + g(x) u,      y = g(x)^T Q x,

with state x = [q^T, p^T]^T (displacement / momentum), constant
interconnection J = [[0, I], [-I, 0]], constant dissipation
R = blockdiag(0, eta), quadratic stored energy H(x) = 1/2 x^T Q x with
Q = blockdiag(K, M^-1), and an input matrix whose only nonzero block is
the lower one, g(x) = [0; g2(q)].

The shipped instance is a dielectric elastomer actuator (DEA) under a
quasi-static electrical assumption: scalar displacement, input u = U^2
(applied voltage squared, stored in V^2) and

    g2(q) = 2 eps (q + q0)^3,     dg2/dq = 6 eps (q + q0)^2.

All quantities are SI.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DEAParams",
    "InputMap",
    "PHSystem",
    "StateVec",
    "dea_system",
    "drift_matrix",
    "grad_h",
    "hamiltonian",
    "hessian_bounds",
    "input_gain",
    "input_gain_jacobian",
    "nonlinear_term",
    "nonlinear_term_jacobian",
    "output",
    "output_jac_momentum",
    "output_jac_position",
    "plant_rhs",
]


@dataclass(frozen=True)
class DEAParams:
    """Scalar DEA parameters (n = m = 1), defaults from the studied actuator."""

    mass_kg: float = 1.0
    stiffness_N_per_m: float = 1000.0
    damping_Ns_per_m: float = 50.0
    q0_m: float = 1.0e-3          # reference displacement; q + q0 must stay > 0
    eps_F_per_m: float = 2.8      # electrostatic constant

    def __post_init__(self):
        for name in ("mass_kg", "stiffness_N_per_m", "damping_Ns_per_m",
                     "q0_m", "eps_F_per_m"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"DEAParams.{name} must be positive")


@dataclass(frozen=True)
class StateVec:
    """Plant state (q, p). Differences of states are again StateVecs."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @staticmethod
    def from_vector(x: np.ndarray) -> "StateVec":
        x = np.asarray(x, dtype=float)
        n = x.shape[0] // 2
        return StateVec(x[:n], x[n:])

    def __sub__(self, other: "StateVec") -> "StateVec":
        return StateVec(self.q - other.q, self.p - other.p)


@dataclass(frozen=True)
class InputMap:
    """Closed-form pair (g2, dg2/dq) for the displacement-dependent input block.

    ``gain(q)`` returns g2(q) with shape (n, m); ``gain_jacobian(q)`` returns
    one (n, n) Jacobian per input column j, d g2[:, j] / d q.
    """

    gain: Callable[[np.ndarray], np.ndarray]
    gain_jacobian: Callable[[np.ndarray], Sequence[np.ndarray]]


@dataclass(frozen=True)
class PHSystem:
    """Immutable plant description; all evaluation routines below are pure."""

    n: int
    m: int
    K: np.ndarray
    M: np.ndarray
    eta: np.ndarray
    input_map: InputMap
    # set for the scalar DEA instance; enables the compiled simulation kernels
    scalar_params: DEAParams | None = None
    _check_q: float = field(default=0.0, repr=False)

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        M = np.asarray(self.M, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        n = self.n
        for name, mat in (("K", K), ("M", M), ("eta", eta)):
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * (1 + np.abs(mat).max())):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(K).min() <= 0.0:
            raise ValueError("K must be positive definite")
        if np.linalg.eigvalsh(M).min() <= 0.0:
            raise ValueError("M must be positive definite")
        if np.linalg.eigvalsh(eta).min() < 0.0:
            raise ValueError("eta must be positive semidefinite")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "_m_inv", np.linalg.inv(M))
        q_full = np.zeros((2 * n, 2 * n))
        q_full[:n, :n] = K
        q_full[n:, n:] = self._m_inv
        object.__setattr__(self, "_q_full", q_full)
        self._validate_input_map()

    def _validate_input_map(self):
        """Finite-difference consistency check of (g2, dg2/dq) at construction."""
        n, m = self.n, self.m
        q = np.full(n, self._check_q)
        g0 = np.asarray(self.input_map.gain(q), dtype=float)
        if g0.shape != (n, m):
            raise ValueError(f"input gain must return shape ({n}, {m})")
        jacs = self.input_map.gain_jacobian(q)
        if len(jacs) != m:
            raise ValueError(f"gain_jacobian must return {m} matrices")
        step = 1e-6 * (1.0 + np.abs(q).max())
        for j in range(m):
            jac = np.asarray(jacs[j], dtype=float)
            if jac.shape != (n, n):
                raise ValueError("gain_jacobian entries must be n x n")
            fd = np.zeros((n, n))
            for i in range(n):
                dq = np.zeros(n)
                dq[i] = step
                fd[:, i] = (np.asarray(self.input_map.gain(q + dq))[:, j]
                            - np.asarray(self.input_map.gain(q - dq))[:, j]) / (2 * step)
            scale = np.abs(jac).max() + np.abs(fd).max() + 1e-30
            if np.abs(jac - fd).max() > 1e-5 * scale:
                raise ValueError("input map gain/jacobian pair is inconsistent "
                                 f"(column {j}, rel err > 1e-5)")

    @property
    def M_inv(self) -> np.ndarray:
        return self._m_inv

    @property
    def Q(self) -> np.ndarray:
        """Hessian of the stored energy, blockdiag(K, M^-1)."""
        return self._q_full

    @property
    def J(self) -> np.ndarray:
        n = self.n
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = -np.eye(n)
        return J

    @property
    def R(self) -> np.ndarray:
        n = self.n
        R = np.zeros((2 * n, 2 * n))
        R[n:, n:] = self.eta
        return R


def dea_system(params: DEAParams | None = None) -> PHSystem:
    """Build the scalar DEA instance."""
    p = params or DEAParams()
    two_eps = 2.0 * p.eps_F_per_m
    six_eps = 6.0 * p.eps_F_per_m
    q0 = p.q0_m

    def gain(q):
        return np.array([[two_eps * (q[0] + q0) ** 3]])

    def gain_jacobian(q):
        return [np.array([[six_eps * (q[0] + q0) ** 2]])]

    return PHSystem(
        n=1,
        m=1,
        K=np.array([[p.stiffness_N_per_m]]),
        M=np.array([[p.mass_kg]]),
        eta=np.array([[p.damping_Ns_per_m]]),
        input_map=InputMap(gain, gain_jacobian),
        scalar_params=p,
    )


# ---------------------------------------------------------------------------
# pointwise evaluations
# ---------------------------------------------------------------------------

def hamiltonian(sys: PHSystem, x: StateVec) -> float:
    """Stored energy 1/2 q^T K q + 1/2 p^T M^-1 p, in joules."""
    return float(0.5 * x.q @ sys.K @ x.q + 0.5 * x.p @ sys.M_inv @ x.p)


def grad_h(sys: PHSystem, x: StateVec) -> np.ndarray:
    """Energy gradient Q x."""
    return np.concatenate([sys.K @ x.q, sys.M_inv @ x.p])


def hessian_bounds(sys: PHSystem) -> tuple[float, float]:
    """Extreme eigenvalues (h1, h2) of the energy Hessian Q; h1 > 0."""
    ev = np.linalg.eigvalsh(sys.Q)
    return float(ev[0]), float(ev[-1])


def drift_matrix(sys: PHSystem) -> np.ndarray:
    """Constant linear drift (J - R) Q of the error dynamics."""
    return (sys.J - sys.R) @ sys.Q


def input_gain(sys: PHSystem, q: np.ndarray) -> np.ndarray:
    """g2(q), shape (n, m)."""
    return np.asarray(sys.input_map.gain(np.atleast_1d(np.asarray(q, float))), dtype=float)


def input_gain_jacobian(sys: PHSystem, q: np.ndarray) -> list[np.ndarray]:
    """Per-column Jacobians d g2[:, j] / d q, each (n, n)."""
    jacs = sys.input_map.gain_jacobian(np.atleast_1d(np.asarray(q, float)))
    return [np.asarray(j, dtype=float) for j in jacs]


def output_jac_position(sys: PHSystem, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """d y / d q of the output map: row j is (d g2[:,j]/dq)^T M^-1 p.  (m, n)."""
    p = np.atleast_1d(np.asarray(p, float))
    vel = sys.M_inv @ p
    jacs = input_gain_jacobian(sys, q)
    return np.vstack([(jac.T @ vel)[None, :] for jac in jacs])


def output_jac_momentum(sys: PHSystem, q: np.ndarray) -> np.ndarray:
    """d y / d p of the output map: g2(q)^T M^-1.  (m, n)."""
    return input_gain(sys, q).T @ sys.M_inv


def _g_full(sys: PHSystem, q: np.ndarray) -> np.ndarray:
    """Full input matrix [0; g2(q)], shape (2n, m)."""
    g = np.zeros((2 * sys.n, sys.m))
    g[sys.n:, :] = input_gain(sys, q)
    return g


def output(sys: PHSystem, x: StateVec) -> np.ndarray:
    """Collocated output y = g(x)^T Q x = g2(q)^T M^-1 p."""
    return output_jac_momentum(sys, x.q) @ x.p


def plant_rhs(sys: PHSystem, x: StateVec, u: np.ndarray) -> StateVec:
    """Plant vector field (J - R) Q x + g(x) u."""
    u = np.atleast_1d(np.asarray(u, float))
    xdot = drift_matrix(sys) @ x.as_vector() + _g_full(sys, x.q) @ u
    return StateVec.from_vector(xdot)


def nonlinear_term(sys: PHSystem, x: StateVec, u: np.ndarray, L: np.ndarray) -> np.ndarray:
    """State-dependent part of the error dynamics, g(x) u - L g(x)^T Q x."""
    u = np.atleast_1d(np.asarray(u, float))
    L = np.asarray(L, dtype=float).reshape(2 * sys.n, sys.m)
    g = _g_full(sys, x.q)
    return g @ u - L @ (g.T @ grad_h(sys, x))


def nonlinear_term_jacobian(sys: PHSystem, x: "StateVec | np.ndarray",
                            u: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Jacobian in x of ``nonlinear_term``:

        [[0, 0], [sum_j aj(q) u_j, 0]] - L [dy/dq(q, p), dy/dp(q)].

    ``x`` may be a StateVec or a raw length-2n vector (the hot quadrature
    path avoids the StateVec wrapper).
    """
    n, m = sys.n, sys.m
    if isinstance(x, StateVec):
        q, p = x.q, x.p
    else:
        q, p = x[:n], x[n:]
    u = np.atleast_1d(np.asarray(u, float))
    L = np.asarray(L, dtype=float).reshape(2 * n, m)
    jacs = [np.asarray(j, dtype=float) for j in sys.input_map.gain_jacobian(q)]
    lower = u[0] * jacs[0]
    for j in range(1, m):
        lower = lower + u[j] * jacs[j]
    vel = sys.M_inv @ p
    beta = np.vstack([(jacs[j].T @ vel)[None, :] for j in range(m)])
    gamma = np.asarray(sys.input_map.gain(q), dtype=float).T @ sys.M_inv
    out = np.zeros((2 * n, 2 * n))
    out[n:, :n] = lower
    out -= L @ np.hstack([beta, gamma])
    return out
