"""Estimation-performance indicators computed from simulated trajectories.

Conventions (chosen to make the reported rows directly comparable with
standard actuator-observer benchmarks):

* the error norm is the plain Euclidean norm on (q_err, p_err) in SI units,
  which is momentum-dominated for this actuator scale;
* momentum quantities are reported in g*m/s (SI value times 1e3) and the
  position peak in micrometers;
* settling time is the earliest instant after which the error norm stays
  within 2 percent of its initial value, to the end of the horizon;
* overshoot is the excess of the peak momentum-error magnitude over its
  initial magnitude, floored at zero;
* the RMS is taken over the full stored horizon, so the horizon is part of
  the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simulate import Trajectory

__all__ = ["MetricsReport", "compare", "compute_metrics"]

UNDEFINED = "undefined"
NOT_SETTLED = "not settled"


@dataclass(frozen=True)
class MetricsReport:
    label: str
    peak_qerr_um: float
    peak_perr_gms: float
    peak_errnorm_gms: float
    rms_errnorm_gms: float
    settling_time_2pct_s: float | str
    overshoot_perr_pct: float | str
    horizon_s: float
    bound_margin: float | None = None   # max ratio from the certified-bound check

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "peak_qerr_um": self.peak_qerr_um,
            "peak_perr_gms": self.peak_perr_gms,
            "peak_errnorm_gms": self.peak_errnorm_gms,
            "rms_errnorm_gms": self.rms_errnorm_gms,
            "settling_time_2pct_s": self.settling_time_2pct_s,
            "overshoot_perr_pct": self.overshoot_perr_pct,
            "horizon_s": self.horizon_s,
            "bound_margin": self.bound_margin,
        }


def compute_metrics(traj: Trajectory, label: str = "",
                    bound_margin: float | None = None) -> MetricsReport:
    if traj.xerr is None:
        raise ValueError("metrics need an observer trajectory")
    n = traj.x.shape[1] // 2
    qe = traj.xerr[:, :n]
    pe = traj.xerr[:, n:]
    en = traj.err_norm()

    peak_q = float(np.abs(qe).max())
    peak_p = float(np.abs(pe).max())
    peak_n = float(en.max())
    rms = float(np.sqrt(np.mean(en ** 2)))

    if en[0] == 0.0:
        settle: float | str = UNDEFINED
        overshoot: float | str = UNDEFINED
    else:
        thr = 0.02 * en[0]
        above = np.flatnonzero(en > thr)
        if above.size == 0:
            settle = 0.0
        elif above[-1] + 1 >= en.shape[0]:
            settle = NOT_SETTLED
        else:
            settle = float(traj.t[above[-1] + 1])
        p0 = float(np.linalg.norm(pe[0]))
        if p0 == 0.0:
            overshoot = UNDEFINED
        else:
            overshoot = max(0.0, 100.0 * (peak_p - p0) / p0)

    return MetricsReport(
        label=label,
        peak_qerr_um=peak_q * 1e6,
        peak_perr_gms=peak_p * 1e3,
        peak_errnorm_gms=peak_n * 1e3,
        rms_errnorm_gms=rms * 1e3,
        settling_time_2pct_s=settle,
        overshoot_perr_pct=overshoot,
        horizon_s=float(traj.t[-1]),
        bound_margin=bound_margin,
    )


def _improvement(base: float, other: float) -> float | str:
    if not (isinstance(base, (int, float)) and isinstance(other, (int, float))):
        return "n/a"
    if not (math.isfinite(base) and math.isfinite(other)) or base == 0.0:
        return "n/a"
    return 100.0 * (base - other) / base


def compare(reports: list[MetricsReport], baseline: int = 0) -> dict:
    """Percentage improvement of every metric relative to the baseline report
    (positive = better, i.e. smaller)."""
    if not reports:
        raise ValueError("need at least one report")
    base = reports[baseline]
    rows = {}
    for rep in reports:
        rows[rep.label] = {
            "peak_qerr_pct": _improvement(base.peak_qerr_um, rep.peak_qerr_um),
            "peak_perr_pct": _improvement(base.peak_perr_gms, rep.peak_perr_gms),
            "peak_errnorm_pct": _improvement(base.peak_errnorm_gms, rep.peak_errnorm_gms),
            "rms_errnorm_pct": _improvement(base.rms_errnorm_gms, rep.rms_errnorm_gms),
            "settling_pct": _improvement(
                base.settling_time_2pct_s
                if isinstance(base.settling_time_2pct_s, float) else float("nan"),
                rep.settling_time_2pct_s
                if isinstance(rep.settling_time_2pct_s, float) else float("nan")),
        }
    return {"baseline": base.label, "improvements": rows}
