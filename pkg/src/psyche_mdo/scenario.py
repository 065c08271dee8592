"""Mission configuration, experiment presets and the end-to-end pipeline.

Configuration files are YAML trees whose sections mirror the dataclasses
below (``body``, ``orbits``, ``power``, ``mass``, ``propulsion``, ``grid``,
``solver``, ``bounds``, ``guess``, ``verify``) plus the scalar keys
``preset``, ``mode``, ``scaling`` and ``compat_baseline_mass``. SI units throughout.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import fourier_guess as fg
from . import power as pw
from . import propulsion as prop
from . import sizing
from .dynamics import BodyParameters, ScaleSet
from .nlp import SolveResult, SolverOptions, solve
from .propagate import MassAudit, PropagationResult, mass_audit, propagate
from .transcription import Bounds, GridSpec, NodeGuess, Solution, TranscribedProblem, build

log = logging.getLogger(__name__)

MODES = ("baseline", "coupled")
COMPAT_BASELINE_MASS = 418.00


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


@dataclass(frozen=True)
class OrbitConfig:
    r0: float = 750e3
    rf: float = 200e3

    def __post_init__(self):
        if not (self.r0 > 0 and self.rf > 0):
            raise ValueError("orbits.r0 and orbits.rf must be positive")
        if self.r0 == self.rf:
            raise ValueError("orbits.rf must differ from orbits.r0")


@dataclass(frozen=True)
class PropulsionConfig:
    bandwidth: float = 100.0
    kernel: str = "gaussian"
    table_csv: str | None = None

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("propulsion.bandwidth must be positive")
        if self.kernel not in prop.KERNELS:
            raise ValueError(f"propulsion.kernel must be one of {prop.KERNELS}")
        if self.table_csv is not None and not Path(self.table_csv).is_file():
            raise ValueError(f"propulsion.table_csv: no such file {self.table_csv!r}")


@dataclass(frozen=True)
class GuessConfig:
    """``area_init`` is ``"auto"`` (best initial thrust acceleration) or an area in m^2."""

    n_terms: int = 10
    t_f: float | None = None
    revs: float | None = None
    area_init: str | float = "auto"
    n_dense: int = 401

    def __post_init__(self):
        if self.n_terms < 3:
            raise ValueError("guess.n_terms must be >= 3")
        if self.t_f is not None and not self.t_f > 0:
            raise ValueError("guess.t_f must be positive")
        if self.revs is not None and not self.revs > 0:
            raise ValueError("guess.revs must be positive")
        if self.area_init != "auto" and not (isinstance(self.area_init, (int, float))
                                             and self.area_init > 0):
            raise ValueError("guess.area_init must be 'auto' or a positive area")
        if self.n_dense < 10:
            raise ValueError("guess.n_dense must be >= 10")


@dataclass(frozen=True)
class VerifyConfig:
    rtol: float = 1e-10
    atol: float = 1e-10

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("verify.rtol and verify.atol must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "baseline"
    scaling: bool = True
    compat_baseline_mass: bool = False
    body: BodyParameters = field(default_factory=BodyParameters)
    orbits: OrbitConfig = field(default_factory=OrbitConfig)
    power: pw.PowerConfig = field(default_factory=pw.PowerConfig)
    mass: sizing.MassConfig = field(default_factory=sizing.MassConfig)
    propulsion: PropulsionConfig = field(default_factory=PropulsionConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    solver: SolverOptions = field(default_factory=SolverOptions)
    bounds: Bounds = field(default_factory=Bounds)
    guess: GuessConfig = field(default_factory=GuessConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def cluster(self) -> prop.EngineCluster:
        p = self.propulsion
        if p.table_csv:
            table = prop.ThrottleTable.from_csv(p.table_csv, p.bandwidth, p.kernel)
        else:
            table = prop.ThrottleTable.spt140(p.bandwidth, p.kernel)
        return prop.EngineCluster(self.mass.n_eng, table)

    def baseline_initial_mass(self) -> float:
        if self.compat_baseline_mass:
            return COMPAT_BASELINE_MASS
        return float(sizing.initial_mass(self.mass, self.power.A_SA))

    def scale_set(self) -> ScaleSet:
        if not self.scaling:
            return ScaleSet()
        return ScaleSet.canonical(self.orbits.r0, self.body.mu, self.baseline_initial_mass())

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, overrides: dict[str, Any] | list[str]) -> "ScenarioConfig":
        """Apply dotted-path overrides (``{"grid.n_segments": 20}`` or ``["grid.n_segments=20"]``)."""
        tree = to_dict(self)
        for key, value in _parse_overrides(overrides).items():
            node = tree
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"override {key!r} does not address a config key")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"override {key!r} does not address a config key")
            node[parts[-1]] = value
        return from_dict(tree)


PRESETS: dict[str, dict[str, Any]] = {
    "full": {},
    "desk": {"orbits": {"r0": 300e3, "rf": 250e3}, "grid": {"n_segments": 16}},
}

_SECTIONS = {
    "body": BodyParameters, "orbits": OrbitConfig, "power": pw.PowerConfig,
    "mass": sizing.MassConfig, "propulsion": PropulsionConfig, "grid": GridSpec,
    "solver": SolverOptions, "bounds": Bounds, "guess": GuessConfig, "verify": VerifyConfig,
}
_SCALARS = {"mode": "str", "scaling": "bool", "compat_baseline_mass": "bool"}


def _parse_overrides(overrides) -> dict[str, Any]:
    if isinstance(overrides, dict):
        return dict(overrides)
    out = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw) if raw.strip() else None
    return out


def _coerce(value, annotation: str, path: str):
    if value is None:
        if "None" in annotation:
            return None
        raise ConfigError(f"{path}: value required")
    try:
        if annotation.startswith("tuple"):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return tuple(float(v) for v in value)
        if annotation == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if annotation.startswith("int"):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if annotation.startswith("str | float"):
            return value if value == "auto" else float(value)
        if annotation.startswith("float"):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if annotation.startswith("str"):
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: cannot interpret {value!r} as {annotation}") from None
    return value


def _build_section(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key '{prefix}.{key}'")
        kwargs[key] = _coerce(value, str(known[key].type), f"{prefix}.{key}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        if not msg.startswith(prefix):
            msg = f"{prefix}: {msg}"
        raise ConfigError(msg) from None


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def from_dict(data: dict | None) -> ScenarioConfig:
    data = dict(data or {})
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        data = _merge(PRESETS[preset], data)
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value or {}, key)
        elif key in _SCALARS:
            kwargs[key] = _coerce(value, _SCALARS[key], key)
        else:
            raise ConfigError(f"unknown key '{key}'")
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def to_dict(cfg: ScenarioConfig) -> dict:
    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, tuple):
            return [plain(i) for i in v]
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        return v
    return plain(cfg)


def dump_config(cfg: ScenarioConfig, path=None) -> str:
    text = yaml.safe_dump(to_dict(cfg), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_config(path=None, preset: str | None = None, overrides=None) -> ScenarioConfig:
    """Read and validate a scenario file; ``None`` or an empty file gives the defaults."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigError(f"{path}: parse error{where}: {getattr(exc, 'problem', exc)}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data = loaded or {}
    if preset is not None:
        data = {**data, "preset": preset}
    cfg = from_dict(data)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


# ---------------------------------------------------------------- pipeline

def choose_initial_area(cfg: ScenarioConfig, n: int = 801) -> float:
    """Array area with the largest initial thrust-to-mass ratio inside the area bounds."""
    b = cfg.bounds
    areas = np.linspace(b.area_min, b.area_max, n)
    cluster = cfg.cluster
    p_lo, p_hi = cluster.table.power_bounds
    p_lo = p_lo if b.P_E_min is None else b.P_E_min
    p_hi = p_hi if b.P_E_max is None else b.P_E_max
    cap = pw.available_power(cfg.power, pw.solar_array_power(cfg.power, 0.0, areas))
    thrust, _ = prop.thrust_and_mdot(cluster, np.clip(cap, p_lo, p_hi))
    accel = np.where(cap >= p_lo, thrust / sizing.initial_mass(cfg.mass, areas), -np.inf)
    if not np.any(np.isfinite(accel)):
        return cfg.power.A_SA
    return float(areas[int(np.argmax(accel))])


def start_area(cfg: ScenarioConfig) -> float:
    if cfg.mode == "baseline":
        return cfg.power.A_SA
    if cfg.guess.area_init == "auto":
        return choose_initial_area(cfg)
    return float(cfg.guess.area_init)


@dataclass
class GuessBundle:
    shape: fg.FourierShape
    dense: fg.DenseGuess
    nodes: NodeGuess
    thrust_ref: float
    mdot_ref: float


def make_guess(cfg: ScenarioConfig, grid: GridSpec | None = None, area: float | None = None) -> GuessBundle:
    """Shape-based guess sampled onto ``grid`` (defaults to ``cfg.grid``)."""
    grid = grid or cfg.grid
    area = start_area(cfg) if area is None else area
    coupled = cfg.mode == "coupled"
    m0 = float(sizing.initial_mass(cfg.mass, area)) if coupled else cfg.baseline_initial_mass()
    cluster = cfg.cluster
    p_lo, p_hi = cluster.table.power_bounds
    p_lo = p_lo if cfg.bounds.P_E_min is None else cfg.bounds.P_E_min
    p_hi = p_hi if cfg.bounds.P_E_max is None else cfg.bounds.P_E_max
    cap = float(pw.available_power(cfg.power, pw.solar_array_power(cfg.power, 0.0, area)))
    p_ref = float(np.clip(cap, p_lo, p_hi))
    t_ref, q_ref = (float(v) for v in prop.thrust_and_mdot(cluster, p_ref))
    r0, rf, mu = cfg.orbits.r0, cfg.orbits.rf, cfg.body.mu
    tf = cfg.guess.t_f or fg.edelbaum_time(mu, r0, rf, m0, t_ref)
    shape = fg.fit_shape(r0, rf, cfg.guess.revs, tf, cfg.guess.n_terms, mu)
    dense = fg.inverse_controls(shape, (m0, q_ref), cfg.guess.n_dense)
    nodes = fg.resample_to_grid(dense, grid.node_tau(), cluster, cfg.power, area, (p_lo, p_hi))
    return GuessBundle(shape, dense, nodes, t_ref, q_ref)


@dataclass
class RunResult:
    config: ScenarioConfig
    guess: GuessBundle
    problem: TranscribedProblem
    solve: SolveResult
    solution: Solution
    propagation: PropagationResult | None
    audit: MassAudit | None

    @property
    def converged(self) -> bool:
        return self.solve.converged

    def summary(self) -> dict[str, Any]:
        s = self.solution
        out = {
            "status": self.solve.status,
            "mode": s.mode,
            "n_segments": s.grid.n_segments,
            "order": s.grid.order,
            "n_nodes": s.n_nodes,
            "t_f": s.t_f,
            "A_SA": s.area,
            "initial_mass": s.m_initial,
            "final_mass": s.final_mass,
            "dry_mass": s.m_dry,
            "propellant_consumed": s.propellant_used,
            "max_violation": self.solve.max_violation,
            "max_defect": s.defects.max_defect if s.defects else None,
            "rms_defect": s.defects.rms_defect if s.defects else None,
            "iterations": self.solve.iterations,
            "wall_time": self.solve.wall_time,
            "r0": s.r0,
            "rf": s.rf,
            "mu": s.body.mu,
        }
        if self.propagation is not None:
            out["max_radius_divergence"] = self.propagation.max_radius_divergence
            out["max_radius_divergence_rel_rf"] = self.propagation.max_radius_divergence / s.rf
        if self.audit is not None:
            out["propagated_propellant"] = self.audit.consumed
            out["propellant_quadrature"] = self.audit.quadrature
            out["mass_audit_residual"] = self.audit.residual
        return out


def run_scenario(cfg: ScenarioConfig, x0: np.ndarray | None = None,
                 verify: bool = True) -> RunResult:
    """Guess, transcribe, solve and (optionally) re-propagate one scenario.

    Solver failures come back as a non-converged status, never as an exception.
    """
    guess = make_guess(cfg)
    problem = build(cfg.grid, cfg, guess.nodes)
    start = problem.x0 if x0 is None else x0
    log.info("solving %s mode on %d segments (%d variables, %d constraints)",
             cfg.mode, cfg.grid.n_segments, problem.n_x, problem.n_con)
    result = solve(problem, start, cfg.solver)
    sol = Solution.from_problem(problem, result.x, result.status)
    prop_res = audit = None
    if verify:
        try:
            prop_res = propagate(sol, cfg.verify.rtol, cfg.verify.atol, cfg.scale_set())
            audit = mass_audit(prop_res, sol)
        except Exception as exc:  # verification must not mask the solve outcome
            log.warning("re-propagation failed: %s", exc)
    return RunResult(cfg, guess, problem, result, sol, prop_res, audit)


# ------------------------------------------------------------- comparison

@dataclass
class ComparisonRow:
    name: str
    baseline: float | None
    coupled: float | None
    delta_pct: float | None


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]

    def row(self, name: str) -> ComparisonRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_table(self) -> str:
        lines = [f"{'Variable':<28}{'Baseline':>16}{'Coupled':>16}{'Difference':>12}"]
        for r in self.rows:
            b = "N/A (Fixed)" if r.baseline is None else f"{r.baseline:,.6g}"
            c = "--" if r.coupled is None else f"{r.coupled:,.6g}"
            d = "--" if r.delta_pct is None else f"{r.delta_pct:+.2f}%"
            lines.append(f"{r.name:<28}{b:>16}{c:>16}{d:>12}")
        return "\n".join(lines)

    def to_records(self) -> list[dict]:
        return [dataclasses.asdict(r) for r in self.rows]


def percent_change(baseline: float, coupled: float) -> float:
    return 100.0 * (coupled - baseline) / baseline


def compare_values(baseline: dict[str, float], coupled: dict[str, float]) -> ComparisonReport:
    """Baseline-versus-coupled comparison of two summaries (keys as in :meth:`RunResult.summary`)."""
    for key in ("r0", "rf", "mu"):
        if key in baseline and key in coupled and not np.isclose(baseline[key], coupled[key],
                                                                 rtol=1e-12, atol=0.0):
            raise ValueError(f"cannot compare runs with different {key}: "
                             f"{baseline[key]} vs {coupled[key]}")
    spec = [
        ("Final Time of Flight (s)", "t_f", True),
        ("Optimized Solar Area (m^2)", "A_SA", False),
        ("Initial Wet Mass (kg)", "initial_mass", True),
        ("Final Mass (kg)", "final_mass", True),
        ("Propellant Consumed (kg)", "propellant_consumed", True),
        ("Max Defect (scaled)", "max_defect", True),
    ]
    rows = []
    for label, key, with_delta in spec:
        b, c = baseline.get(key), coupled.get(key)
        if key == "A_SA" and baseline.get("mode", "baseline") == "baseline":
            b = None
        delta = percent_change(b, c) if (with_delta and b not in (None, 0) and c is not None) else None
        rows.append(ComparisonRow(label, b, c, delta))
    return ComparisonReport(rows)


def compare(baseline: RunResult | Solution, coupled: RunResult | Solution) -> ComparisonReport:
    def summ(run):
        if isinstance(run, RunResult):
            return run.summary()
        s = run
        return {"mode": s.mode, "t_f": s.t_f, "A_SA": s.area, "initial_mass": s.m_initial,
                "final_mass": s.final_mass, "propellant_consumed": s.propellant_used,
                "max_defect": s.defects.max_defect if s.defects else None,
                "r0": s.r0, "rf": s.rf, "mu": s.body.mu}
    return compare_values(summ(baseline), summ(coupled))
