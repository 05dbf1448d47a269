"""Strict, schema-versioned run configuration.

One YAML-syntax text file drives every CLI command.  Unknown keys are
rejected, physical values carry their unit in the key name, and the hash of
the effective (validated, defaulted, overridden) configuration is embedded
in every output file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .embedding import OperatingDomain
from .model import DEAParams, PHSystem, StateVec, dea_system
from .simulate import InputSignal, Scenario

__all__ = [
    "Config",
    "ConfigError",
    "DesignCfg",
    "config_hash",
    "load_config",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised for malformed configuration files (CLI exit code 4)."""


def _expect_mapping(node, path):
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return node


def _take(node: dict, path: str, key: str, kind, required=True, default=None):
    if key not in node:
        if required:
            raise ConfigError(f"{path}: missing required key '{key}'")
        return default
    val = node.pop(key)
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}.{key}: expected a number")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}.{key}: expected an integer")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean")
        return val
    if kind is str:
        if not isinstance(val, str):
            raise ConfigError(f"{path}.{key}: expected a string")
        return val
    if kind is list:
        if not isinstance(val, list):
            raise ConfigError(f"{path}.{key}: expected a list")
        return val
    if kind is dict:
        return _expect_mapping(val, f"{path}.{key}")
    raise AssertionError(kind)


def _reject_unknown(node: dict, path: str):
    if node:
        raise ConfigError(f"{path}: unknown key(s) {sorted(node)}")


@dataclass(frozen=True)
class DesignCfg:
    name: str
    mode: str                 # const | sched
    decay_rate: float | str   # value in 1/s, or "max" / "const-max"


@dataclass(frozen=True)
class ScenarioCfg:
    scenario: Scenario
    design_names: tuple[str, ...]


@dataclass(frozen=True)
class Config:
    dea: DEAParams
    domain_mode: str                       # frozen | derive
    frozen_domain: OperatingDomain | None
    derive_margin_frac: float
    derive_horizon_s: float
    derive_use_designs: tuple[str, ...]
    sweep_amplitude: bool
    bisection_tol_per_s: float
    backend: str
    designs: tuple[DesignCfg, ...]
    scenarios: tuple[ScenarioCfg, ...]
    verify_seed: int
    verify_samples: int
    csv_stride: int
    save_npz: bool
    effective: dict = field(repr=False, default_factory=dict)

    def system(self) -> PHSystem:
        return dea_system(self.dea)

    def design(self, name: str) -> DesignCfg:
        for d in self.designs:
            if d.name == name:
                return d
        raise ConfigError(f"unknown design '{name}'")


def _parse_state(node, path) -> StateVec:
    node = dict(_expect_mapping(node, path))
    q = _take(node, path, "q_m", float)
    p = _take(node, path, "p_kgms", float)
    _reject_unknown(node, path)
    return StateVec(np.array([q]), np.array([p]))


def _parse_input(node, path) -> InputSignal:
    node = dict(_expect_mapping(node, path))
    kind = _take(node, path, "kind", str)
    if kind == "zero":
        sig = InputSignal.zero()
    elif kind == "step":
        t0 = _take(node, path, "t_step_s", float)
        amp = _take(node, path, "amplitude_V2", float)
        sig = InputSignal.step(t0, amp)
    elif kind == "piecewise":
        pieces = _take(node, path, "pieces", list)
        try:
            times = [float(p[0]) for p in pieces]
            vals = [float(p[1]) for p in pieces]
        except (TypeError, IndexError):
            raise ConfigError(f"{path}.pieces: expected [t_s, value_V2] pairs")
        sig = InputSignal(np.array(times), np.array(vals))
    else:
        raise ConfigError(f"{path}.kind: unknown input kind '{kind}'")
    _reject_unknown(node, path)
    return sig


def _parse_design(node, path) -> DesignCfg:
    node = dict(_expect_mapping(node, path))
    name = _take(node, path, "name", str)
    mode = _take(node, path, "mode", str)
    if mode not in ("const", "sched"):
        raise ConfigError(f"{path}.mode: must be 'const' or 'sched'")
    raw = node.pop("decay_rate_per_s", None)
    if raw is None:
        raise ConfigError(f"{path}: missing required key 'decay_rate_per_s'")
    if isinstance(raw, str):
        if raw not in ("max", "const-max"):
            raise ConfigError(f"{path}.decay_rate_per_s: string form must be "
                              "'max' or 'const-max'")
        rate: float | str = raw
    elif isinstance(raw, (int, float)) and not isinstance(raw, bool):
        rate = float(raw)
        if rate < 0:
            raise ConfigError(f"{path}.decay_rate_per_s: must be >= 0")
    else:
        raise ConfigError(f"{path}.decay_rate_per_s: expected number or string")
    _reject_unknown(node, path)
    return DesignCfg(name=name, mode=mode, decay_rate=rate)


def parse_config(raw: dict) -> Config:
    root = dict(_expect_mapping(raw, "config"))
    version = _take(root, "config", "schema_version", int)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version} "
                          f"(this build reads {SCHEMA_VERSION})")

    sysnode = dict(_take(root, "config", "system", dict))
    kind = _take(sysnode, "system", "kind", str)
    if kind != "dea":
        raise ConfigError("system.kind: only 'dea' is supported")
    dea = DEAParams(
        mass_kg=_take(sysnode, "system", "mass_kg", float, required=False, default=1.0),
        stiffness_N_per_m=_take(sysnode, "system", "stiffness_N_per_m", float,
                                required=False, default=1000.0),
        damping_Ns_per_m=_take(sysnode, "system", "damping_Ns_per_m", float,
                               required=False, default=50.0),
        q0_m=_take(sysnode, "system", "q0_m", float, required=False, default=1.0e-3),
        eps_F_per_m=_take(sysnode, "system", "eps_F_per_m", float,
                          required=False, default=2.8),
    )
    _reject_unknown(sysnode, "system")

    domnode = dict(_take(root, "config", "domain", dict))
    domain_mode = _take(domnode, "domain", "mode", str)
    if domain_mode not in ("frozen", "derive"):
        raise ConfigError("domain.mode: must be 'frozen' or 'derive'")
    frozen = None
    if "frozen" in domnode:
        fz = dict(_take(domnode, "domain", "frozen", dict))
        frozen = OperatingDomain(
            q_min=np.array([_take(fz, "domain.frozen", "q_min_m", float)]),
            q_max=np.array([_take(fz, "domain.frozen", "q_max_m", float)]),
            p_min=np.array([_take(fz, "domain.frozen", "p_min_kgms", float)]),
            p_max=np.array([_take(fz, "domain.frozen", "p_max_kgms", float)]),
            u_min=np.array([_take(fz, "domain.frozen", "u_min_V2", float)]),
            u_max=np.array([_take(fz, "domain.frozen", "u_max_V2", float)]),
        )
        _reject_unknown(fz, "domain.frozen")
    if domain_mode == "frozen" and frozen is None:
        raise ConfigError("domain.mode is 'frozen' but no frozen box given")
    derive = dict(_take(domnode, "domain", "derive", dict, required=False, default={}))
    margin = _take(derive, "domain.derive", "margin_frac", float,
                   required=False, default=0.05)
    dhorizon = _take(derive, "domain.derive", "horizon_s", float,
                     required=False, default=8.0)
    use_designs = tuple(_take(derive, "domain.derive", "use_designs", list,
                              required=False, default=[]))
    _reject_unknown(derive, "domain.derive")
    sweep = _take(domnode, "domain", "sweep_amplitude", bool,
                  required=False, default=False)
    _reject_unknown(domnode, "domain")

    syn = dict(_take(root, "config", "synthesis", dict))
    tol = _take(syn, "synthesis", "bisection_tol_per_s", float,
                required=False, default=1.0e-3)
    backend = _take(syn, "synthesis", "backend", str,
                    required=False, default="clarabel")
    designs = tuple(_parse_design(d, f"synthesis.designs[{i}]")
                    for i, d in enumerate(_take(syn, "synthesis", "designs", list)))
    if len({d.name for d in designs}) != len(designs):
        raise ConfigError("synthesis.designs: duplicate names")
    _reject_unknown(syn, "synthesis")

    scen_list = []
    for i, sc in enumerate(_take(root, "config", "scenarios", list,
                                 required=False, default=[])):
        path = f"scenarios[{i}]"
        sc = dict(_expect_mapping(sc, path))
        name = _take(sc, path, "name", str)
        design_names = tuple(_take(sc, path, "designs", list))
        scenario = Scenario(
            name=name,
            x0=_parse_state(_take(sc, path, "x0", dict), f"{path}.x0"),
            xhat0=_parse_state(_take(sc, path, "xhat0", dict), f"{path}.xhat0"),
            input=_parse_input(_take(sc, path, "input", dict), f"{path}.input"),
            horizon_s=_take(sc, path, "horizon_s", float),
            dt_s=_take(sc, path, "dt_s", float),
            schedule_per_step=_take(sc, path, "schedule_per_step", bool,
                                    required=False, default=False),
        )
        _reject_unknown(sc, path)
        scen_list.append(ScenarioCfg(scenario=scenario, design_names=design_names))

    ver = dict(_take(root, "config", "verification", dict, required=False, default={}))
    seed = _take(ver, "verification", "seed", int, required=False, default=20260809)
    nsamp = _take(ver, "verification", "n_samples", int, required=False, default=1000)
    _reject_unknown(ver, "verification")

    out = dict(_take(root, "config", "output", dict, required=False, default={}))
    stride = _take(out, "output", "csv_stride", int, required=False, default=100)
    save_npz = _take(out, "output", "save_npz", bool, required=False, default=True)
    if stride < 1:
        raise ConfigError("output.csv_stride: must be >= 1")
    _reject_unknown(out, "output")

    _reject_unknown(root, "config")

    cfg = Config(
        dea=dea, domain_mode=domain_mode, frozen_domain=frozen,
        derive_margin_frac=margin, derive_horizon_s=dhorizon,
        derive_use_designs=use_designs, sweep_amplitude=sweep,
        bisection_tol_per_s=tol, backend=backend,
        designs=designs, scenarios=tuple(scen_list),
        verify_seed=seed, verify_samples=nsamp,
        csv_stride=stride, save_npz=save_npz,
        effective=raw,
    )
    # design references must resolve
    for sc in cfg.scenarios:
        for dn in sc.design_names:
            cfg.design(dn)
    for dn in cfg.derive_use_designs:
        cfg.design(dn)
    return cfg


def load_config(path: str | Path) -> Config:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return parse_config(raw)


def config_hash(cfg: Config) -> str:
    """Hash of the effective configuration (stable across key order)."""
    canon = json.dumps(cfg.effective, sort_keys=True, separators=(",", ":"),
                       default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
