"""Command-line front end.

    phobs domain|synthesize|simulate|verify|report --config <file>
          [--out <dir>] [--lambda <v>] [--mode const|sched]

Exit codes: 0 success, 2 infeasible synthesis, 3 verification failure,
4 bad configuration.  ``PHOBS_THREADS`` caps scenario-level parallelism.
Every output file embeds the tool version and the hash of the effective
configuration; no output carries a timestamp, so identical configurations
reproduce byte-identical output trees.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io, lmi
from .config import Config, ConfigError, DesignCfg, config_hash, load_config
from .embedding import (
    OperatingDomain,
    compute_parameter_bounds,
    enumerate_vertices,
    mean_value_residual,
    reconstruct,
    scheduling_parameters,
    weights,
)
from .metrics import MetricsReport, compare, compute_metrics
from .model import StateVec, drift_matrix, nonlinear_term, nonlinear_term_jacobian
from .simulate import (
    Scenario,
    bound_check,
    integrate,
    open_loop_domain,
    scenario_warnings,
    sweep_max_amplitude,
)
from .synthesis import CONSTANT, SCHEDULED, max_decay_rate, synthesize

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VERIFY_FAILED = 3
EXIT_BAD_CONFIG = 4


def _stamp(cfg: Config) -> dict:
    return {"tool": f"phobs {__version__}", "config_hash": config_hash(cfg)}


def _max_workers() -> int:
    raw = os.environ.get("PHOBS_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _resolve_domain(cfg: Config, outdir: Path, system) -> OperatingDomain:
    """Frozen box, previously derived box, or a fresh plant-only derivation."""
    if cfg.domain_mode == "frozen":
        return cfg.frozen_domain
    path = outdir / "domain.json"
    if path.exists():
        raw = io.read_json(path)
        box = raw["box"]
        return OperatingDomain(
            q_min=np.array([box["q_min_m"]]), q_max=np.array([box["q_max_m"]]),
            p_min=np.array([box["p_min_kgms"]]), p_max=np.array([box["p_max_kgms"]]),
            u_min=np.array([box["u_min_V2"]]), u_max=np.array([box["u_max_V2"]]),
        )
    return open_loop_domain(system, _domain_scenario(cfg), cfg.derive_margin_frac)


def _domain_scenario(cfg: Config) -> Scenario:
    if not cfg.scenarios:
        raise ConfigError("domain derivation needs at least one scenario")
    base = cfg.scenarios[0].scenario
    return Scenario(name="domain", x0=base.x0, xhat0=base.xhat0, input=base.input,
                    horizon_s=cfg.derive_horizon_s, dt_s=base.dt_s)


def _domain_dict(dom: OperatingDomain) -> dict:
    return {
        "q_min_m": float(dom.q_min[0]), "q_max_m": float(dom.q_max[0]),
        "p_min_kgms": float(dom.p_min[0]), "p_max_kgms": float(dom.p_max[0]),
        "u_min_V2": float(dom.u_min[0]), "u_max_V2": float(dom.u_max[0]),
    }


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

def cmd_domain(cfg: Config, outdir: Path) -> int:
    system = cfg.system()
    payload = _stamp(cfg)

    if cfg.domain_mode == "frozen":
        dom = cfg.frozen_domain
        payload["source"] = "frozen"
    else:
        scenario = _domain_scenario(cfg)
        runs = {}
        observers = []
        bounds = None
        for name in cfg.derive_use_designs:
            path = outdir / f"synthesis_{name}.json"
            if not path.exists():
                runs[name] = "not available (synthesize first)"
                continue
            observer, raw = io.load_synthesis(path)
            if observer is None:
                runs[name] = f"unusable ({raw.get('status')})"
                continue
            runs[name] = "included"
            observers.append(observer)
            if observer.mode == SCHEDULED and bounds is None:
                frozen = cfg.frozen_domain
                box = frozen if frozen is not None else open_loop_domain(
                    system, scenario, cfg.derive_margin_frac)
                bounds = compute_parameter_bounds(system, box)
        dom = open_loop_domain(system, scenario, cfg.derive_margin_frac,
                               result=observers, bounds=bounds)
        payload["source"] = "derived"
        payload["margin_frac"] = cfg.derive_margin_frac
        payload["observer_runs"] = runs

    payload["box"] = _domain_dict(dom)

    if cfg.sweep_amplitude:
        scenario = _domain_scenario(cfg)
        u_max = sweep_max_amplitude(system, scenario)
        payload["sweep"] = {"u_max_V2": u_max, "U_max_V": float(np.sqrt(u_max))}

    bounds = compute_parameter_bounds(system, dom)
    payload["parameter_bounds"] = {
        name: [float(lo), float(hi)]
        for name, lo, hi in zip(bounds.names, bounds.lo, bounds.hi)
    }

    outdir.mkdir(parents=True, exist_ok=True)
    io.write_json(outdir / "domain.json", payload)
    print(f"wrote {outdir / 'domain.json'}")
    for name, (lo, hi) in payload["parameter_bounds"].items():
        print(f"  {name:<10s} in [{lo:.6g}, {hi:.6g}]")
    if "sweep" in payload:
        print(f"  U_max = {payload['sweep']['U_max_V']:.6g} V")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------

def _resolve_rates(cfg: Config, designs: tuple[DesignCfg, ...], V):
    """Map design names to numeric decay rates, running the bisection for
    'max' / 'const-max' entries (each search result is reused)."""
    searches: dict[str, object] = {}

    def search(mode):
        if mode not in searches:
            searches[mode] = max_decay_rate(V, mode, cfg.bisection_tol_per_s,
                                            backend=cfg.backend)
        return searches[mode]

    rates = {}
    for d in designs:
        if d.decay_rate == "max":
            rates[d.name] = search(d.mode).lam_max
        elif d.decay_rate == "const-max":
            rates[d.name] = search(CONSTANT).lam_max
        else:
            rates[d.name] = float(d.decay_rate)
    return rates, searches


def cmd_synthesize(cfg: Config, outdir: Path,
                   cli_lambda: float | None, cli_mode: str | None) -> int:
    system = cfg.system()
    dom = _resolve_domain(cfg, outdir, system)
    bounds = compute_parameter_bounds(system, dom)
    V = enumerate_vertices(system, bounds)
    outdir.mkdir(parents=True, exist_ok=True)

    designs = cfg.designs
    if cli_lambda is not None:
        mode = cli_mode or CONSTANT
        designs = (DesignCfg(name=f"cli_{mode}", mode=mode, decay_rate=cli_lambda),)
    elif cli_mode is not None:
        designs = tuple(d for d in cfg.designs if d.mode == cli_mode)

    rates, searches = _resolve_rates(cfg, designs, V)

    status = EXIT_OK
    lines = [f"phobs {__version__}  config {config_hash(cfg)}", ""]
    if searches:
        lines.append("maximum certifiable decay rates [1/s]:")
        for mode in (CONSTANT, SCHEDULED):
            if mode in searches:
                s = searches[mode]
                lines.append(f"  {mode:<6s} {s.lam_max:.3f}   "
                             f"(probes: {len(s.probes)}, "
                             f"inconclusive: {s.inconclusive_probes})")
        if CONSTANT in searches and SCHEDULED in searches:
            lc, ls = searches[CONSTANT].lam_max, searches[SCHEDULED].lam_max
            if lc > 0:
                lines.append(f"  ratio  {ls / lc:.2f}x")
        lines.append("")

    for d in designs:
        lam = rates[d.name]
        res = synthesize(V, lam, d.mode, backend=cfg.backend)
        path = outdir / f"synthesis_{d.name}.json"
        if isinstance(res, lmi.FeasibilityResult):
            io.write_json(path, {
                **_stamp(cfg), "design": d.name, "mode": d.mode,
                "lambda_per_s": lam, "status": res.status,
                "phase1_t": res.phase1_t, "duality_gap": res.duality_gap,
                "worst_residual_eig": res.worst_residual_eig,
            })
            lines.append(f"{d.name}: {res.status} at lambda={lam:.6g} "
                         f"(phase-I t*={res.phase1_t:.3g}, gap={res.duality_gap:.3g})")
            status = EXIT_INFEASIBLE
            continue
        io.save_synthesis(path, res, bounds, extra={
            **_stamp(cfg), "design": d.name,
            "requested_rate": (d.decay_rate if isinstance(d.decay_rate, str)
                               else float(d.decay_rate)),
        })
        lines.append(f"{d.name}: feasible at lambda={lam:.6g}  kappa={res.kappa:.4g}  "
                     f"margin={-res.residual_eigs.max():.3g}  ({res.solution_kind})")

    (outdir / "table1.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return status


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _load_or_synthesize(cfg: Config, outdir: Path, name: str, V, bounds):
    path = outdir / f"synthesis_{name}.json"
    if path.exists():
        result, raw = io.load_synthesis(path)
        if result is not None:
            if raw.get("config_hash") != config_hash(cfg):
                print(f"note: {path.name} was produced under a different config",
                      file=sys.stderr)
            return result
    d = cfg.design(name)
    rates, _ = _resolve_rates(cfg, (d,), V)
    res = synthesize(V, rates[name], d.mode, backend=cfg.backend)
    if isinstance(res, lmi.FeasibilityResult):
        raise RuntimeError(f"design '{name}' is {res.status} "
                           f"at lambda={rates[name]:.6g}")
    io.save_synthesis(path, res, bounds, extra={**_stamp(cfg), "design": name})
    return res


def cmd_simulate(cfg: Config, outdir: Path) -> int:
    system = cfg.system()
    dom = _resolve_domain(cfg, outdir, system)
    bounds = compute_parameter_bounds(system, dom)
    V = enumerate_vertices(system, bounds)
    outdir.mkdir(parents=True, exist_ok=True)

    jobs = []
    try:
        for sc in cfg.scenarios:
            for note in scenario_warnings(sc.scenario, dom):
                print(f"warning [{sc.scenario.name}]: {note}", file=sys.stderr)
            if not sc.design_names:
                jobs.append((sc.scenario, None, None))
            for name in sc.design_names:
                jobs.append((sc.scenario, name,
                             _load_or_synthesize(cfg, outdir, name, V, bounds)))
    except RuntimeError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    def run(job):
        scenario, name, result = job
        traj = integrate(system, result, scenario, bounds=bounds, domain=dom)
        return scenario, name, result, traj

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            finished = list(pool.map(run, jobs))
    else:
        finished = [run(j) for j in jobs]

    stamp = _stamp(cfg)
    per_scenario: dict[str, list[MetricsReport]] = {}
    for scenario, name, result, traj in finished:
        tag = f"{scenario.name}_{name or 'plant'}"
        out_traj = io.decimate(traj, cfg.csv_stride)
        out_traj.meta.update(stamp)
        io.write_trajectory_csv(outdir / f"traj_{tag}.csv", out_traj,
                                provenance=stamp)
        if cfg.save_npz:
            io.save_trajectory_npz(outdir / f"traj_{tag}.npz", out_traj)
        if result is None:
            continue
        check = bound_check(traj, result.lam, result.kappa)
        rep = compute_metrics(traj, label=f"{name} (lambda={result.lam:.4g})",
                              bound_margin=check.max_ratio)
        per_scenario.setdefault(scenario.name, []).append(rep)

    for sc_name, reports in per_scenario.items():
        payload = {**_stamp(cfg), "scenario": sc_name,
                   "metrics": [r.as_dict() for r in reports]}
        if len(reports) > 1:
            payload["comparison"] = compare(reports)
        io.write_json(outdir / f"metrics_{sc_name}.json", payload)
        table = _metrics_table(sc_name, reports)
        (outdir / f"table_{sc_name}.txt").write_text(table)
        print(table)
    return EXIT_OK


def _fmt_cell(v, nd=3):
    if isinstance(v, str):
        return v
    return f"{v:.{nd}f}"


def _metrics_table(title: str, reports: list[MetricsReport]) -> str:
    rows = [
        ("peak |q err| [um]", [_fmt_cell(r.peak_qerr_um, 1) for r in reports]),
        ("peak |p err| [g m/s]", [_fmt_cell(r.peak_perr_gms, 2) for r in reports]),
        ("peak ||x err|| [g m/s]", [_fmt_cell(r.peak_errnorm_gms, 2) for r in reports]),
        ("RMS ||x err|| [g m/s]", [_fmt_cell(r.rms_errnorm_gms, 3) for r in reports]),
        ("settling 2% [s]", [_fmt_cell(r.settling_time_2pct_s) for r in reports]),
        ("overshoot |p err| [%]", [_fmt_cell(r.overshoot_perr_pct, 1) for r in reports]),
        ("bound margin", [_fmt_cell(r.bound_margin) for r in reports]),
    ]
    width = max(len(r.label) for r in reports) + 2
    head = " " * 24 + "".join(f"{r.label:>{width}s}" for r in reports)
    body = [f"{name:<24s}" + "".join(f"{c:>{width}s}" for c in cells)
            for name, cells in rows]
    return "\n".join([f"-- {title} --", head, *body]) + "\n"


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(cfg: Config, outdir: Path) -> int:
    system = cfg.system()
    dom = _resolve_domain(cfg, outdir, system)
    bounds = compute_parameter_bounds(system, dom)
    V = enumerate_vertices(system, bounds)
    rng = np.random.default_rng(cfg.verify_seed)
    n = cfg.verify_samples
    checks: list[dict] = []

    def record(name, passed, detail):
        clean = {k: float(v) if isinstance(v, (float, np.floating)) else v
                 for k, v in detail.items()}
        checks.append({"check": name, "passed": bool(passed), "detail": clean})

    def sample_state():
        q = rng.uniform(dom.q_min, dom.q_max)
        p = rng.uniform(dom.p_min, dom.p_max)
        return StateVec(q, p)

    def sample_u():
        return float(rng.uniform(float(dom.u_min[0]), float(dom.u_max[0])))

    # exact factorization of the nonlinear term (quadrature oracle)
    worst = 0.0
    for _ in range(n):
        x, xh = sample_state(), sample_state()
        u = sample_u()
        L = rng.uniform(-1e7, 1e7, size=(2 * system.n, system.m))
        scale = (np.linalg.norm(nonlinear_term(system, x, u, L))
                 + np.linalg.norm(nonlinear_term(system, xh, u, L)) + 1e-30)
        worst = max(worst, mean_value_residual(system, x, xh, u, L) / scale)
    record("mean_value_factorization", worst < 1e-12,
           {"max_rel_residual": worst, "samples": n})

    # convex weights: partition of unity, hull membership, reconstruction
    worst_sum, worst_neg, worst_rec, out_of_hull = 0.0, 0.0, 0.0, 0
    A0 = drift_matrix(system)
    for _ in range(n):
        xh = sample_state()
        u = sample_u()
        h = weights(system, bounds, xh, u)
        worst_sum = max(worst_sum, abs(h.h.sum() - 1.0))
        worst_neg = max(worst_neg, float(-h.h.min()))
        theta = scheduling_parameters(system, xh, u)
        if np.any(theta < bounds.lo - 1e-12) or np.any(theta > bounds.hi + 1e-12):
            out_of_hull += 1
        L = rng.uniform(-1e7, 1e7, size=(2 * system.n, system.m))
        lhs = reconstruct(h, V, L)
        rhs = A0 + nonlinear_term_jacobian(system, xh, u, L)
        scale = np.abs(rhs).max() + 1e-30
        worst_rec = max(worst_rec, float(np.abs(lhs - rhs).max()) / scale)
    record("partition_of_unity", worst_sum < 1e-12 and worst_neg <= 1e-15,
           {"max_sum_err": worst_sum, "max_negative": worst_neg})
    record("vertex_hull_membership", out_of_hull == 0,
           {"samples_outside": out_of_hull})
    record("reconstruction_exactness", worst_rec < 1e-10,
           {"max_rel_err": worst_rec})

    # stored certificates
    exit_code = EXIT_OK
    for path in sorted(outdir.glob("synthesis_*.json")):
        result, raw = io.load_synthesis(path)
        if result is None:
            record(f"certificate:{path.name}", True,
                   {"status": raw.get("status"), "note": "no certificate to check"})
            continue
        build = (lmi.build_constant_problem if result.mode == CONSTANT
                 else lmi.build_scheduled_problem)
        prob = build(V, result.lam)
        rep = lmi.verify_solution(prob, result.P, [result.P @ L for L in result.gains])
        detail = {"max_residual_eig": float(rep.residual_eigs.max()),
                  "lambda_min_P": rep.lambda_min_P}
        if result.mode == CONSTANT:
            closed = [V.A[i] - result.L @ V.C[i] for i in range(V.n_vertices)]
            reals = max(float(np.max(np.linalg.eigvals(Acl).real)) for Acl in closed)
            detail["max_closed_loop_real_part"] = reals
            ok = rep.passed and reals <= -result.lam + 1e-6
        else:
            ok = rep.passed
        record(f"certificate:{path.name}", ok, detail)

    # scenario-level exponential bound (restricted to in-domain prefixes)
    for sc in cfg.scenarios:
        for name in sc.design_names:
            path = outdir / f"synthesis_{name}.json"
            if not path.exists():
                record(f"bound:{sc.scenario.name}:{name}", True,
                       {"note": "not run (no synthesis result)"})
                continue
            result, _ = io.load_synthesis(path)
            if result is None:
                continue
            traj = integrate(system, result, sc.scenario, bounds=bounds, domain=dom)
            chk = bound_check(traj, result.lam, result.kappa)
            clamped = 0
            if result.mode == SCHEDULED:
                for i in range(0, traj.t.shape[0], max(1, traj.t.shape[0] // 512)):
                    th = scheduling_parameters(
                        system, StateVec.from_vector(traj.xhat[i]), float(traj.u[i]))
                    if np.any(th < bounds.lo) or np.any(th > bounds.hi):
                        clamped += 1
            record(f"bound:{sc.scenario.name}:{name}", chk.passed,
                   {"max_ratio": chk.max_ratio, "prefix_end_s": chk.prefix_end_s,
                    "exited_domain": chk.exited_domain,
                    "weight_clamp_samples": clamped})

    passed = all(c["passed"] for c in checks)
    payload = {**_stamp(cfg), "passed": passed, "seed": cfg.verify_seed,
               "n_samples": n, "checks": checks}
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_json(outdir / "verify.json", payload)

    lines = [f"verification: {'PASS' if passed else 'FAIL'}"]
    for c in checks:
        lines.append(f"  [{'ok' if c['passed'] else 'FAIL'}] {c['check']}: {c['detail']}")
    (outdir / "verify.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(cfg: Config, outdir: Path) -> int:
    """Consolidate previously produced result files; missing parts are
    reported as 'not run'."""
    lines = [f"phobs {__version__} consolidated report",
             f"config hash: {config_hash(cfg)}", ""]

    dom_path = outdir / "domain.json"
    lines.append("== operating domain ==")
    if dom_path.exists():
        raw = io.read_json(dom_path)
        for key, val in raw["box"].items():
            lines.append(f"  {key:<12s} {val:.6g}")
        if "sweep" in raw:
            lines.append(f"  U_max_V      {raw['sweep']['U_max_V']:.6g}")
        for name, (lo, hi) in raw.get("parameter_bounds", {}).items():
            lines.append(f"  bound {name:<10s} [{lo:.6g}, {hi:.6g}]")
    else:
        lines.append("  not run")
    lines.append("")

    lines.append("== synthesis ==")
    t1 = outdir / "table1.txt"
    if t1.exists():
        lines.extend("  " + ln for ln in t1.read_text().splitlines()[1:] if ln)
    syn_files = sorted(outdir.glob("synthesis_*.json"))
    if not syn_files and not t1.exists():
        lines.append("  not run")
    if syn_files:
        lines.append("")
        lines.append("== certificates ==")
    for path in syn_files:
        raw = io.read_json(path)
        if raw.get("status") == "feasible":
            lines.append(f"  {path.stem.removeprefix('synthesis_')}: "
                         f"lambda={raw['lambda_per_s']:.6g} kappa={raw['kappa']:.4g} "
                         f"margin={-max(raw['residual_eigs']):.3g} "
                         f"lambda_min_P={raw['lambda_min_P']:.3g} "
                         f"iters={raw.get('solver_iterations', -1)}")
        else:
            lines.append(f"  {path.stem.removeprefix('synthesis_')}: "
                         f"{raw.get('status')} at lambda={raw.get('lambda_per_s')}")
    lines.append("")

    lines.append("== scenarios ==")
    any_table = False
    for path in sorted(outdir.glob("table_*.txt")):
        any_table = True
        lines.extend("  " + ln for ln in path.read_text().splitlines())
        mpath = outdir / f"metrics_{path.stem.removeprefix('table_')}.json"
        if mpath.exists():
            raw = io.read_json(mpath)
            comp = raw.get("comparison")
            if comp:
                lines.append(f"  improvements vs {comp['baseline']}:")
                for label, row in comp["improvements"].items():
                    if label == comp["baseline"]:
                        continue
                    pk = row["peak_errnorm_pct"]
                    rm = row["rms_errnorm_pct"]
                    pk = f"{pk + 0.0:+.1f}%" if isinstance(pk, float) else pk
                    rm = f"{rm + 0.0:+.1f}%" if isinstance(rm, float) else rm
                    lines.append(f"    {label}: peak {pk}, rms {rm}")
        lines.append("")
    if not any_table:
        lines.append("  not run")
        lines.append("")

    lines.append("== verification ==")
    vpath = outdir / "verify.txt"
    if vpath.exists():
        lines.extend("  " + ln for ln in vpath.read_text().splitlines())
    else:
        lines.append("  not run")
    lines.append("")

    outdir.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines)
    (outdir / "report.txt").write_text(text)
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="phobs",
        description="observer synthesis and validation for port-Hamiltonian "
                    "systems with state-dependent input maps")
    parser.add_argument("command",
                        choices=["domain", "synthesize", "simulate", "verify", "report"])
    parser.add_argument("--config", required=True, help="configuration file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="synthesize at this decay rate instead of the "
                             "configured designs")
    parser.add_argument("--mode", choices=[CONSTANT, SCHEDULED], default=None,
                        help="restrict synthesis to one observer structure")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    outdir = Path(args.out)
    try:
        if args.command == "domain":
            return cmd_domain(cfg, outdir)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, outdir, args.lam, args.mode)
        if args.command == "simulate":
            return cmd_simulate(cfg, outdir)
        if args.command == "verify":
            return cmd_verify(cfg, outdir)
        return cmd_report(cfg, outdir)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
