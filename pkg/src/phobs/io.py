"""Result-file serialization: trajectory CSV/NPZ, synthesis and report JSON.

All writers are deterministic (sorted keys, fixed float formatting, no
timestamps) so that identical configurations reproduce byte-identical
output trees.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .embedding import ParameterBounds
from .simulate import Trajectory
from .synthesis import SynthesisResult

__all__ = [
    "decimate",
    "fmt17",
    "load_synthesis",
    "load_trajectory_npz",
    "read_json",
    "save_synthesis",
    "save_trajectory_npz",
    "write_json",
    "write_trajectory_csv",
]

TRAJ_FORMAT_VERSION = 1


def fmt17(x: float) -> str:
    return f"{x:.17g}"


def write_json(path: str | Path, payload: dict):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def decimate(traj: Trajectory, stride: int) -> Trajectory:
    """Every stride-th sample (first and every k-th thereafter)."""
    if stride <= 1:
        return traj
    sl = slice(None, None, stride)
    meta = dict(traj.meta)
    meta["decimated_stride"] = stride
    meta["full_dt_s"] = traj.dt
    pick = lambda a: None if a is None else a[sl]
    return Trajectory(
        t=traj.t[sl], x=traj.x[sl], u=traj.u[sl], y=traj.y[sl],
        xhat=pick(traj.xhat), xerr=pick(traj.xerr), yhat=pick(traj.yhat),
        L=pick(traj.L), h=pick(traj.h), in_domain=pick(traj.in_domain),
        meta=meta,
    )


def write_trajectory_csv(path: str | Path, traj: Trajectory,
                         provenance: dict | None = None):
    """Observer runs: t,q,p,qhat,phat,qerr,perr,y,yhat,u,L1,L2[,h1..hN].
    Plant-only runs: t,q,p,y,u.  17 significant digits; provenance rides in
    leading comment lines."""
    n = traj.x.shape[1] // 2
    m = traj.y.shape[1]
    cols: list[tuple[str, np.ndarray]] = [("t", traj.t)]

    def add_state(prefix_q, prefix_p, arr):
        for i in range(n):
            sfx = "" if n == 1 else str(i + 1)
            cols.append((prefix_q + sfx, arr[:, i]))
        for i in range(n):
            sfx = "" if n == 1 else str(i + 1)
            cols.append((prefix_p + sfx, arr[:, n + i]))

    add_state("q", "p", traj.x)
    if traj.xhat is not None:
        add_state("qhat", "phat", traj.xhat)
        add_state("qerr", "perr", traj.xerr)
    for j in range(m):
        sfx = "" if m == 1 else str(j + 1)
        cols.append(("y" + sfx, traj.y[:, j]))
    if traj.yhat is not None:
        for j in range(m):
            sfx = "" if m == 1 else str(j + 1)
            cols.append(("yhat" + sfx, traj.yhat[:, j]))
    cols.append(("u", traj.u))
    if traj.L is not None:
        for j in range(m):
            for i in range(2 * n):
                name = f"L{i + 1}" if m == 1 else f"L{i + 1}_{j + 1}"
                cols.append((name, traj.L[:, i, j]))
    if traj.h is not None:
        for i in range(traj.h.shape[1]):
            cols.append((f"h{i + 1}", traj.h[:, i]))

    lines = [f"# {k}={v}" for k, v in (provenance or {}).items()]
    lines.append(",".join(name for name, _ in cols))
    mat = np.column_stack([arr for _, arr in cols])
    for row in mat:
        lines.append(",".join(fmt17(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def save_trajectory_npz(path: str | Path, traj: Trajectory):
    arrays = {"t": traj.t, "x": traj.x, "u": traj.u, "y": traj.y}
    for name in ("xhat", "xerr", "yhat", "L", "h", "in_domain"):
        val = getattr(traj, name)
        if val is not None:
            arrays[name] = val
    arrays["format_version"] = np.array(TRAJ_FORMAT_VERSION)
    arrays["meta_json"] = np.array(json.dumps(traj.meta, sort_keys=True))
    np.savez_compressed(path, **arrays)


def load_trajectory_npz(path: str | Path) -> Trajectory:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != TRAJ_FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory file version {version}")
        get = lambda k: data[k] if k in data.files else None
        return Trajectory(
            t=data["t"], x=data["x"], u=data["u"], y=data["y"],
            xhat=get("xhat"), xerr=get("xerr"), yhat=get("yhat"),
            L=get("L"), h=get("h"), in_domain=get("in_domain"),
            meta=json.loads(str(data["meta_json"])),
        )


def save_synthesis(path: str | Path, result: SynthesisResult,
                   bounds: ParameterBounds, extra: dict | None = None):
    payload = {
        "status": "feasible",
        "mode": result.mode,
        "lambda_per_s": result.lam,
        "kappa": result.kappa,
        "P": result.P.tolist(),
        "gains": [g.tolist() for g in result.gains],
        "residual_eigs": result.residual_eigs.tolist(),
        "lambda_min_P": result.lambda_min_P,
        "solution_kind": result.solution_kind,
        "solver_iterations": result.solver_iterations,
        "bounds": {"names": list(bounds.names),
                   "lo": bounds.lo.tolist(), "hi": bounds.hi.tolist()},
    }
    payload.update(extra or {})
    write_json(path, payload)


def load_synthesis(path: str | Path) -> tuple[SynthesisResult | None, dict]:
    raw = read_json(path)
    if raw.get("status") != "feasible":
        return None, raw
    result = SynthesisResult(
        mode=raw["mode"],
        P=np.array(raw["P"]),
        gains=[np.array(g) for g in raw["gains"]],
        lam=float(raw["lambda_per_s"]),
        kappa=float(raw["kappa"]),
        residual_eigs=np.array(raw["residual_eigs"]),
        lambda_min_P=float(raw["lambda_min_P"]),
        solution_kind=raw.get("solution_kind", "unknown"),
        solver_iterations=int(raw.get("solver_iterations", -1)),
    )
    return result, raw
