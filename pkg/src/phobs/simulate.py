"""Fixed-step simulation of plant + observer and domain determination.

Integration is classic 4th-order Runge-Kutta with a fixed step.  Inputs are
piecewise constant; each step uses the input value at the step midpoint, so
switching instants that sit on the time grid are handled exactly and the
integrator keeps its full order.  For scheduled runs the interpolated gain
is re-evaluated at every stage point from the stage estimate (optionally
frozen once per step).

The scalar actuator instance runs through numba-compiled kernels; a pure
numpy path with identical stage arithmetic covers generic systems and
environments without numba.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is installed in CI
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return deco

from .embedding import OperatingDomain, ParameterBounds, weights
from .model import PHSystem, StateVec, drift_matrix, input_gain, nonlinear_term
from .synthesis import SCHEDULED, SynthesisResult

__all__ = [
    "BoundCheckReport",
    "InputSignal",
    "Scenario",
    "Trajectory",
    "bound_check",
    "error_trajectory",
    "integrate",
    "open_loop_domain",
    "scenario_warnings",
    "sweep_max_amplitude",
]


@dataclass(frozen=True)
class InputSignal:
    """Piecewise-constant input: value[j] applies on [time[j], time[j+1])."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("breakpoints must start at 0 and increase")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @staticmethod
    def zero() -> "InputSignal":
        return InputSignal(np.array([0.0]), np.array([0.0]))

    @staticmethod
    def step(t_step_s: float, amplitude: float) -> "InputSignal":
        if t_step_s <= 0.0:
            return InputSignal(np.array([0.0]), np.array([amplitude]))
        return InputSignal(np.array([0.0, t_step_s]), np.array([0.0, amplitude]))

    def at(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.maximum(idx, 0)]


@dataclass(frozen=True)
class Scenario:
    name: str
    x0: StateVec
    xhat0: StateVec
    input: InputSignal
    horizon_s: float
    dt_s: float
    schedule_per_step: bool = False

    def __post_init__(self):
        if self.dt_s <= 0.0:
            raise ValueError("dt must be positive")
        if self.horizon_s < self.dt_s:
            raise ValueError("horizon must be at least one step")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_s / self.dt_s))


def scenario_warnings(scenario: Scenario, domain: OperatingDomain | None) -> list[str]:
    """Non-fatal consistency notes (amplitude range, grid alignment)."""
    notes = []
    off_grid = [t for t in scenario.input.times
                if abs(t / scenario.dt_s - round(t / scenario.dt_s)) > 1e-9]
    if off_grid:
        notes.append(f"input switching times {off_grid} are not on the time grid; "
                     "integration order degrades at those steps")
    if domain is not None:
        lo, hi = float(domain.u_min[0]), float(domain.u_max[0])
        vals = scenario.input.values
        if vals.min() < lo - 1e-12 or vals.max() > hi + 1e-12:
            notes.append(f"input values range [{vals.min():g}, {vals.max():g}] leaves "
                         f"the declared domain [{lo:g}, {hi:g}]")
    return notes


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled run; the stored error is asserted against x - xhat."""

    t: np.ndarray
    x: np.ndarray                    # (N+1, 2n)
    u: np.ndarray                    # (N+1,)
    y: np.ndarray                    # (N+1, m)
    xhat: np.ndarray | None = None   # observer runs only
    xerr: np.ndarray | None = None
    yhat: np.ndarray | None = None
    L: np.ndarray | None = None      # (N+1, 2n, m) applied gain at the sample
    h: np.ndarray | None = None      # (N+1, N_v) scheduled runs only
    in_domain: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.xhat is not None:
            if self.xerr is None:
                raise ValueError("observer trajectories must carry the error")
            if np.abs(self.xerr - (self.x - self.xhat)).max() != 0.0:
                raise ValueError("stored error disagrees with x - xhat")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def err_norm(self) -> np.ndarray:
        return np.linalg.norm(self.xerr, axis=1)


# ---------------------------------------------------------------------------
# compiled scalar kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _weights16_nb(qh, ph, u, minv, q0, eps, lo, hi, h):
    a = 6.0 * eps * (qh + q0) ** 2
    g = 2.0 * eps * (qh + q0) ** 3
    th0 = a
    th1 = u
    th2 = a * minv * ph
    th3 = g
    mu = np.empty(4)
    th = (th0, th1, th2, th3)
    for j in range(4):
        span = hi[j] - lo[j]
        if span > 0.0:
            m = (th[j] - lo[j]) / span
            if m < 0.0:
                m = 0.0
            elif m > 1.0:
                m = 1.0
            mu[j] = m
        else:
            mu[j] = 0.0
    for i in range(16):
        w = 1.0
        for j in range(4):
            if (i >> j) & 1:
                w *= mu[j]
            else:
                w *= 1.0 - mu[j]
        h[i] = w


@njit(cache=True)
def _gain_at_nb(qh, ph, u, minv, q0, eps, lo, hi, Lv, scheduled, h):
    if scheduled:
        _weights16_nb(qh, ph, u, minv, q0, eps, lo, hi, h)
        L1 = 0.0
        L2 = 0.0
        for i in range(Lv.shape[0]):
            L1 += h[i] * Lv[i, 0]
            L2 += h[i] * Lv[i, 1]
        return L1, L2
    return Lv[0, 0], Lv[0, 1]


@njit(cache=True)
def _rk4_coupled_nb(q, p, qh, ph, u_steps, dt, k, minv, eta, q0, eps,
                    Lv, lo, hi, scheduled, freeze, X, Xh, Lrec, Hrec):
    n = u_steps.shape[0]
    h = np.empty(16)
    hfz = np.empty(16)
    X[0, 0] = q
    X[0, 1] = p
    Xh[0, 0] = qh
    Xh[0, 1] = ph
    u0 = u_steps[0]
    L1, L2 = _gain_at_nb(qh, ph, u0, minv, q0, eps, lo, hi, Lv, scheduled, h)
    Lrec[0, 0] = L1
    Lrec[0, 1] = L2
    if scheduled:
        Hrec[0, :] = h
    for i in range(n):
        u = u_steps[i]
        Lf1 = 0.0
        Lf2 = 0.0
        if freeze:
            Lf1, Lf2 = _gain_at_nb(qh, ph, u, minv, q0, eps, lo, hi, Lv, scheduled, hfz)
        aq = q
        ap = p
        aqh = qh
        aph = ph
        # stage accumulation
        sq = 0.0
        sp = 0.0
        sqh = 0.0
        sph = 0.0
        dq = 0.0
        dp = 0.0
        dqh = 0.0
        dph = 0.0
        for stage in range(4):
            if stage == 0:
                cq, cp, cqh, cph = aq, ap, aqh, aph
                w = 1.0
            elif stage == 1:
                cq = aq + 0.5 * dt * dq
                cp = ap + 0.5 * dt * dp
                cqh = aqh + 0.5 * dt * dqh
                cph = aph + 0.5 * dt * dph
                w = 2.0
            elif stage == 2:
                cq = aq + 0.5 * dt * dq
                cp = ap + 0.5 * dt * dp
                cqh = aqh + 0.5 * dt * dqh
                cph = aph + 0.5 * dt * dph
                w = 2.0
            else:
                cq = aq + dt * dq
                cp = ap + dt * dp
                cqh = aqh + dt * dqh
                cph = aph + dt * dph
                w = 1.0
            if freeze:
                L1, L2 = Lf1, Lf2
            else:
                L1, L2 = _gain_at_nb(cqh, cph, u, minv, q0, eps, lo, hi, Lv,
                                     scheduled, h)
            g = 2.0 * eps * (cq + q0) ** 3
            gh = 2.0 * eps * (cqh + q0) ** 3
            e = g * minv * cp - gh * minv * cph
            dq = minv * cp
            dp = -k * cq - eta * minv * cp + g * u
            dqh = minv * cph + L1 * e
            dph = -k * cqh - eta * minv * cph + gh * u + L2 * e
            sq += w * dq
            sp += w * dp
            sqh += w * dqh
            sph += w * dph
        q = q + dt / 6.0 * sq
        p = p + dt / 6.0 * sp
        qh = qh + dt / 6.0 * sqh
        ph = ph + dt / 6.0 * sph
        if not (np.isfinite(q) and np.isfinite(p) and np.isfinite(qh)
                and np.isfinite(ph)):
            return i + 1
        X[i + 1, 0] = q
        X[i + 1, 1] = p
        Xh[i + 1, 0] = qh
        Xh[i + 1, 1] = ph
        un = u_steps[i + 1] if i + 1 < n else u_steps[n - 1]
        L1, L2 = _gain_at_nb(qh, ph, un, minv, q0, eps, lo, hi, Lv, scheduled, h)
        Lrec[i + 1, 0] = L1
        Lrec[i + 1, 1] = L2
        if scheduled:
            Hrec[i + 1, :] = h
    return -1


@njit(cache=True)
def _rk4_plant_nb(q, p, u_steps, dt, k, minv, eta, q0, eps, X):
    n = u_steps.shape[0]
    X[0, 0] = q
    X[0, 1] = p
    for i in range(n):
        u = u_steps[i]
        sq = 0.0
        sp = 0.0
        dq = 0.0
        dp = 0.0
        for stage in range(4):
            if stage == 0:
                cq, cp = q, p
                w = 1.0
            elif stage == 1:
                cq = q + 0.5 * dt * dq
                cp = p + 0.5 * dt * dp
                w = 2.0
            elif stage == 2:
                cq = q + 0.5 * dt * dq
                cp = p + 0.5 * dt * dp
                w = 2.0
            else:
                cq = q + dt * dq
                cp = p + dt * dp
                w = 1.0
            dq = minv * cp
            dp = -k * cq - eta * minv * cp + 2.0 * eps * (cq + q0) ** 3 * u
            sq += w * dq
            sp += w * dp
        q = q + dt / 6.0 * sq
        p = p + dt / 6.0 * sp
        if not (np.isfinite(q) and np.isfinite(p)):
            return i + 1
        X[i + 1, 0] = q
        X[i + 1, 1] = p
    return -1


@njit(cache=True)
def _rk4_error_nb(q, p, zq, zp, u_steps, dt, k, minv, eta, q0, eps, L1, L2, Z):
    """Plant co-integrated with the error equation (constant gain).

    The error field is A0 z + gamma(x) - gamma(x - z) with
    gamma(x) = (-L1 y, g2(q) u - L2 y), y = g2(q) p / m.
    """
    n = u_steps.shape[0]
    Z[0, 0] = zq
    Z[0, 1] = zp
    for i in range(n):
        u = u_steps[i]
        sq = 0.0
        sp = 0.0
        szq = 0.0
        szp = 0.0
        dq = 0.0
        dp = 0.0
        dzq = 0.0
        dzp = 0.0
        for stage in range(4):
            if stage == 0:
                cq, cp, czq, czp = q, p, zq, zp
                w = 1.0
            elif stage == 1:
                cq = q + 0.5 * dt * dq
                cp = p + 0.5 * dt * dp
                czq = zq + 0.5 * dt * dzq
                czp = zp + 0.5 * dt * dzp
                w = 2.0
            elif stage == 2:
                cq = q + 0.5 * dt * dq
                cp = p + 0.5 * dt * dp
                czq = zq + 0.5 * dt * dzq
                czp = zp + 0.5 * dt * dzp
                w = 2.0
            else:
                cq = q + dt * dq
                cp = p + dt * dp
                czq = zq + dt * dzq
                czp = zp + dt * dzp
                w = 1.0
            g = 2.0 * eps * (cq + q0) ** 3
            y = g * minv * cp
            dq = minv * cp
            dp = -k * cq - eta * minv * cp + g * u
            hq = cq - czq
            hp = cp - czp
            gh = 2.0 * eps * (hq + q0) ** 3
            yh = gh * minv * hp
            gam1 = -L1 * y + L1 * yh
            gam2 = (g - gh) * u - L2 * y + L2 * yh
            dzq = minv * czp + gam1
            dzp = -k * czq - eta * minv * czp + gam2
            sq += w * dq
            sp += w * dp
            szq += w * dzq
            szp += w * dzp
        q = q + dt / 6.0 * sq
        p = p + dt / 6.0 * sp
        zq = zq + dt / 6.0 * szq
        zp = zp + dt / 6.0 * szp
        if not (np.isfinite(zq) and np.isfinite(zp)):
            return i + 1
        Z[i + 1, 0] = zq
        Z[i + 1, 1] = zp
    return -1


# ---------------------------------------------------------------------------
# generic (pure numpy) path, identical stage arithmetic
# ---------------------------------------------------------------------------

def _gain_at_py(sys, bounds, Lstack, scheduled, xhat_v, u):
    if not scheduled:
        return Lstack[0], None
    h = weights(sys, bounds, StateVec.from_vector(xhat_v), u)
    return np.einsum("i,ijk->jk", h.h, Lstack), h.h


def _rk4_coupled_py(sys, x0, xh0, u_steps, dt, Lstack, bounds, scheduled, freeze):
    n = u_steps.shape[0]
    dim = x0.shape[0]
    nv = Lstack.shape[0]
    A0 = drift_matrix(sys)
    X = np.empty((n + 1, dim))
    Xh = np.empty((n + 1, dim))
    Lrec = np.empty((n + 1, dim, sys.m))
    Hrec = np.empty((n + 1, nv)) if scheduled else None
    x, xh = x0.copy(), xh0.copy()

    def record(i, u):
        X[i] = x
        Xh[i] = xh
        L, h = _gain_at_py(sys, bounds, Lstack, scheduled, xh, u)
        Lrec[i] = L
        if scheduled:
            Hrec[i] = h

    def fields(cx, cxh, u, Lfrozen):
        nq = sys.n
        g = input_gain(sys, cx[:nq])
        gh = input_gain(sys, cxh[:nq])
        y = g.T @ (sys.M_inv @ cx[nq:])
        yh = gh.T @ (sys.M_inv @ cxh[nq:])
        if Lfrozen is None:
            L, _ = _gain_at_py(sys, bounds, Lstack, scheduled, cxh, u)
        else:
            L = Lfrozen
        gu = np.zeros(dim)
        gu[nq:] = (g * u).ravel() if sys.m == 1 else g @ np.full(sys.m, u)
        ghu = np.zeros(dim)
        ghu[nq:] = (gh * u).ravel() if sys.m == 1 else gh @ np.full(sys.m, u)
        dx = A0 @ cx + gu
        dxh = A0 @ cxh + ghu + (L @ (y - yh)).ravel()
        return dx, dxh

    record(0, u_steps[0])
    for i in range(n):
        u = float(u_steps[i])
        Lf = _gain_at_py(sys, bounds, Lstack, scheduled, xh, u)[0] if freeze else None
        k1 = fields(x, xh, u, Lf)
        k2 = fields(x + 0.5 * dt * k1[0], xh + 0.5 * dt * k1[1], u, Lf)
        k3 = fields(x + 0.5 * dt * k2[0], xh + 0.5 * dt * k2[1], u, Lf)
        k4 = fields(x + dt * k3[0], xh + dt * k3[1], u, Lf)
        x = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        xh = xh + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xh))):
            raise FloatingPointError(
                f"state became non-finite at t = {(i + 1) * dt:.9g} s")
        record(i + 1, float(u_steps[min(i + 1, n - 1)]))
    return X, Xh, Lrec, Hrec


def _rk4_plant_py(sys, x0, u_steps, dt):
    n = u_steps.shape[0]
    A0 = drift_matrix(sys)
    X = np.empty((n + 1, x0.shape[0]))
    x = x0.copy()
    X[0] = x

    def f(cx, u):
        gu = np.zeros_like(cx)
        gu[sys.n:] = (input_gain(sys, cx[:sys.n]) * u).ravel()
        return A0 @ cx + gu

    for i in range(n):
        u = float(u_steps[i])
        k1 = f(x, u)
        k2 = f(x + 0.5 * dt * k1, u)
        k3 = f(x + 0.5 * dt * k2, u)
        k4 = f(x + dt * k3, u)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(
                f"state became non-finite at t = {(i + 1) * dt:.9g} s")
        X[i + 1] = x
    return X


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def _u_steps(scenario: Scenario) -> np.ndarray:
    mids = (np.arange(scenario.n_steps) + 0.5) * scenario.dt_s
    return scenario.input.at(mids)


def scenario_fingerprint(scenario: Scenario) -> str:
    import hashlib

    parts = [scenario.name, repr(scenario.x0.as_vector().tolist()),
             repr(scenario.xhat0.as_vector().tolist()),
             repr(scenario.input.times.tolist()),
             repr(scenario.input.values.tolist()),
             repr(scenario.horizon_s), repr(scenario.dt_s),
             repr(scenario.schedule_per_step)]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def _scalar_args(sys: PHSystem):
    p = sys.scalar_params
    return (p.stiffness_N_per_m, 1.0 / p.mass_kg, p.damping_Ns_per_m,
            p.q0_m, p.eps_F_per_m)


def _use_kernel(sys: PHSystem) -> bool:
    return HAVE_NUMBA and sys.scalar_params is not None


def integrate(sys: PHSystem, result: SynthesisResult | None, scenario: Scenario,
              bounds: ParameterBounds | None = None,
              domain: OperatingDomain | None = None) -> Trajectory:
    """Integrate the plant (result None) or the coupled plant/observer pair."""
    dt = scenario.dt_s
    n = scenario.n_steps
    u_steps = _u_steps(scenario)
    t = np.arange(n + 1) * dt
    u_samp = scenario.input.at(t)
    x0 = scenario.x0.as_vector()

    meta = {"scenario": scenario.name, "scenario_hash": scenario_fingerprint(scenario),
            "dt_s": dt, "horizon_s": scenario.horizon_s}

    if result is None:
        if _use_kernel(sys):
            X = np.empty((n + 1, 2))
            bad = _rk4_plant_nb(x0[0], x0[1], u_steps, dt, *_scalar_args(sys), X)
            if bad >= 0:
                raise FloatingPointError(
                    f"state became non-finite at t = {bad * dt:.9g} s")
        else:
            X = _rk4_plant_py(sys, x0, u_steps, dt)
        y = _outputs(sys, X)
        meta["gain_source"] = "open-loop"
        return Trajectory(t=t, x=X, u=u_samp, y=y, meta=meta,
                          in_domain=_domain_flags(domain, X, None))

    scheduled = result.mode == SCHEDULED
    if scheduled and bounds is None:
        raise ValueError("scheduled runs need the scheduling parameter bounds")
    Lstack = np.stack([np.asarray(L, dtype=float) for L in result.gains])
    xh0 = scenario.xhat0.as_vector()

    if _use_kernel(sys):
        X = np.empty((n + 1, 2))
        Xh = np.empty((n + 1, 2))
        Lrec = np.empty((n + 1, 2))
        Hrec = np.empty((n + 1, 16)) if scheduled else np.empty((1, 16))
        lo = bounds.lo if scheduled else np.zeros(4)
        hi = bounds.hi if scheduled else np.zeros(4)
        bad = _rk4_coupled_nb(x0[0], x0[1], xh0[0], xh0[1], u_steps, dt,
                              *_scalar_args(sys), Lstack[:, :, 0], lo, hi,
                              scheduled, scenario.schedule_per_step,
                              X, Xh, Lrec, Hrec)
        if bad >= 0:
            raise FloatingPointError(
                f"state became non-finite at t = {bad * dt:.9g} s")
        Lrec = Lrec[:, :, None]
        H = Hrec if scheduled else None
    else:
        X, Xh, Lrec, H = _rk4_coupled_py(sys, x0, xh0, u_steps, dt, Lstack,
                                         bounds, scheduled,
                                         scenario.schedule_per_step)

    meta["gain_source"] = {"mode": result.mode, "lambda": result.lam,
                           "kind": result.solution_kind}
    return Trajectory(
        t=t, x=X, u=u_samp, y=_outputs(sys, X),
        xhat=Xh, xerr=X - Xh, yhat=_outputs(sys, Xh),
        L=Lrec, h=H, meta=meta,
        in_domain=_domain_flags(domain, X, Xh),
    )


def error_trajectory(sys: PHSystem, result: SynthesisResult, scenario: Scenario) -> np.ndarray:
    """Estimation error integrated through the error equation directly.

    The plant is co-integrated and its stage values are injected into the
    error field; constant-gain results only.  Returns the (N+1, 2n) error.
    """
    if result.mode == SCHEDULED:
        raise ValueError("error-equation route is defined for constant gains")
    dt = scenario.dt_s
    u_steps = _u_steps(scenario)
    x0 = scenario.x0.as_vector()
    z0 = x0 - scenario.xhat0.as_vector()
    L = np.asarray(result.L, dtype=float).ravel()

    if _use_kernel(sys):
        Z = np.empty((scenario.n_steps + 1, 2))
        bad = _rk4_error_nb(x0[0], x0[1], z0[0], z0[1], u_steps, dt,
                            *_scalar_args(sys), L[0], L[1], Z)
        if bad >= 0:
            raise FloatingPointError(
                f"error state became non-finite at t = {bad * dt:.9g} s")
        return Z

    # generic route via model evaluations
    A0 = drift_matrix(sys)
    n = scenario.n_steps
    Z = np.empty((n + 1, x0.shape[0]))
    x, z = x0.copy(), z0.copy()
    Z[0] = z
    Lm = L.reshape(2 * sys.n, sys.m)

    def f(cx, cz, u):
        gu = np.zeros_like(cx)
        gu[sys.n:] = (input_gain(sys, cx[:sys.n]) * u).ravel()
        dx = A0 @ cx + gu
        gam = nonlinear_term(sys, StateVec.from_vector(cx), u, Lm) \
            - nonlinear_term(sys, StateVec.from_vector(cx - cz), u, Lm)
        dz = A0 @ cz + gam
        return dx, dz

    for i in range(n):
        u = float(u_steps[i])
        k1 = f(x, z, u)
        k2 = f(x + 0.5 * dt * k1[0], z + 0.5 * dt * k1[1], u)
        k3 = f(x + 0.5 * dt * k2[0], z + 0.5 * dt * k2[1], u)
        k4 = f(x + dt * k3[0], z + dt * k3[1], u)
        x = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        z = z + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        Z[i + 1] = z
    return Z


def _outputs(sys: PHSystem, X: np.ndarray) -> np.ndarray:
    if sys.scalar_params is not None:
        p = sys.scalar_params
        g = 2.0 * p.eps_F_per_m * (X[:, 0] + p.q0_m) ** 3
        return (g * X[:, 1] / p.mass_kg)[:, None]
    return np.stack([input_gain(sys, row[:sys.n]).T @ (sys.M_inv @ row[sys.n:])
                     for row in X])


def _domain_flags(domain, X, Xh):
    if domain is None:
        return None
    nq = X.shape[1] // 2
    ok = (np.all(X[:, :nq] >= domain.q_min, axis=1)
          & np.all(X[:, :nq] <= domain.q_max, axis=1)
          & np.all(X[:, nq:] >= domain.p_min, axis=1)
          & np.all(X[:, nq:] <= domain.p_max, axis=1))
    if Xh is not None:
        ok &= (np.all(Xh[:, :nq] >= domain.q_min, axis=1)
               & np.all(Xh[:, :nq] <= domain.q_max, axis=1)
               & np.all(Xh[:, nq:] >= domain.p_min, axis=1)
               & np.all(Xh[:, nq:] <= domain.p_max, axis=1))
    return ok


# ---------------------------------------------------------------------------
# operating-domain determination
# ---------------------------------------------------------------------------

def open_loop_domain(sys: PHSystem, scenario: Scenario, margin: float = 0.0,
                     result: "SynthesisResult | list[SynthesisResult] | None" = None,
                     bounds: ParameterBounds | None = None) -> OperatingDomain:
    """Componentwise (q, p) extremes over the plant run (plus the coupled
    observer runs when gains are supplied), inflated by ``margin`` times the
    width, with u in [0, max input value]."""
    runs = [integrate(sys, None, scenario).x]
    results = result if isinstance(result, list) else ([result] if result else [])
    for res in results:
        traj = integrate(sys, res, scenario, bounds=bounds)
        runs.append(traj.x)
        runs.append(traj.xhat)
    allx = np.vstack(runs)
    nq = sys.n
    q_lo, q_hi = allx[:, :nq].min(axis=0), allx[:, :nq].max(axis=0)
    p_lo, p_hi = allx[:, nq:].min(axis=0), allx[:, nq:].max(axis=0)
    qw, pw = q_hi - q_lo, p_hi - p_lo
    return OperatingDomain(
        q_min=q_lo - margin * qw, q_max=q_hi + margin * qw,
        p_min=p_lo - margin * pw, p_max=p_hi + margin * pw,
        u_min=np.zeros(sys.m),
        u_max=np.full(sys.m, float(scenario.input.values.max())),
    )


def _plant_run_stable(sys: PHSystem, scenario: Scenario, amplitude: float,
                      blowup_factor: float = 1e3) -> bool:
    """Bounded-response check: unstable when the state norm exceeds
    ``blowup_factor`` times the running median, or turns non-finite."""
    sig = scenario.input
    scaled = InputSignal(sig.times, np.where(sig.values != 0.0, amplitude, 0.0))
    trial = Scenario(name=scenario.name, x0=scenario.x0, xhat0=scenario.xhat0,
                     input=scaled, horizon_s=scenario.horizon_s, dt_s=scenario.dt_s)
    try:
        traj = integrate(sys, None, trial)
    except FloatingPointError:
        return False
    norms = np.linalg.norm(traj.x, axis=1)[::64]
    for i in range(16, norms.shape[0], 8):
        med = float(np.median(norms[:i]))
        if med > 0.0 and norms[i] > blowup_factor * med:
            return False
    return True


def sweep_max_amplitude(sys: PHSystem, scenario: Scenario,
                        u_tol_rel: float = 1e-3) -> float:
    """Largest step amplitude (input units) with a bounded response.

    Doubles an upper bracket from the scenario amplitude, then bisects on the
    square root of the amplitude (the physical voltage) to relative
    tolerance ``u_tol_rel``.
    """
    v0 = float(np.sqrt(scenario.input.values.max()))
    if v0 <= 0.0:
        raise ValueError("sweep needs a nonzero scenario amplitude")
    lo = 0.0
    hi = v0
    while _plant_run_stable(sys, scenario, hi * hi):
        lo = hi
        hi *= 2.0
        if hi > 1024.0 * v0:
            raise RuntimeError("no unstable amplitude found while doubling")
    while (hi - lo) > u_tol_rel * max(lo, v0):
        mid = 0.5 * (lo + hi)
        if _plant_run_stable(sys, scenario, mid * mid):
            lo = mid
        else:
            hi = mid
    return lo * lo


# ---------------------------------------------------------------------------
# certified-bound check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheckReport:
    max_ratio: float
    passed: bool
    prefix_end_s: float     # last time instant covered by the check
    exited_domain: bool


def bound_check(traj: Trajectory, lam: float, kappa: float) -> BoundCheckReport:
    """Worst ratio of the error norm to the certified envelope
    kappa * exp(-lam t) * ||err(0)||, over the in-domain prefix."""
    if traj.xerr is None:
        raise ValueError("bound check needs an observer trajectory")
    en = traj.err_norm()
    if en[0] == 0.0:
        return BoundCheckReport(0.0, True, float(traj.t[-1]), False)
    if traj.in_domain is None:
        n_prefix = en.shape[0]
        exited = False
    else:
        bad = np.flatnonzero(~traj.in_domain)
        n_prefix = int(bad[0]) if bad.size else en.shape[0]
        exited = bool(bad.size)
    if n_prefix == 0:
        return BoundCheckReport(np.nan, False, 0.0, True)
    envelope = kappa * np.exp(-lam * traj.t[:n_prefix]) * en[0]
    ratio = float((en[:n_prefix] / envelope).max())
    return BoundCheckReport(ratio, ratio <= 1.0 + 1e-6,
                            float(traj.t[n_prefix - 1]), exited)
