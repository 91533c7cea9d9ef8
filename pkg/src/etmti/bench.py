"""Scenario runner: presets, seeded Monte Carlo trials, aggregation and result files.

A scenario sweeps one parameter over a list of values while the rest stay
fixed.  Every trial gets its own child seed, derived from
``(master_seed, scenario index, sweep index, trial index)``, so results do not
depend on how trials are spread across worker processes.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import analysis
from .baseline import run_aloha_baseline
from .ebud import run_phase1
from .model import ScenarioParams, generate_population
from .tsmti import run_phase2

log = logging.getLogger(__name__)

SWEEP_VARS = ("K", "r_m", "r_u", "alpha", "beta", "B", "gamma")
PROTOCOLS = ("etmti", "baseline", "analysis")
METRICS = ("t1_ms", "t2_ms", "total_ms", "r_fn", "remaining_unknown", "F_d", "F_m")
COLUMNS = ("scenario", "protocol", "sweep_var", "sweep_value", "trials") + tuple(
    f"{m}_{s}" for m in METRICS for s in ("mean", "std"))

K_RANGE = [1000, 2000, 3000, 4000, 5000]
RATIO_RANGE = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioSpec:
    name: str
    sweep_var: str
    sweep_values: list
    fixed: ScenarioParams
    protocols: tuple[str, ...] = ("etmti",)

    def __post_init__(self):
        if self.sweep_var not in SWEEP_VARS:
            raise ConfigError(f"{self.name}: sweep variable must be one of {SWEEP_VARS}, got {self.sweep_var!r}")
        if not self.sweep_values:
            raise ConfigError(f"{self.name}: sweep values must be non-empty")
        bad = [p for p in self.protocols if p not in PROTOCOLS]
        if bad or not self.protocols:
            raise ConfigError(f"{self.name}: unknown protocols {bad}; choose from {PROTOCOLS}")
        self.protocols = tuple(self.protocols)

    @property
    def trials(self) -> int:
        return self.fixed.trials

    def params_at(self, value) -> ScenarioParams:
        if self.sweep_var in ("K", "B"):
            value = int(value)
        return dataclasses.replace(self.fixed, **{self.sweep_var: value})


def _preset(name, var, values, protocols=("etmti",), **fixed) -> ScenarioSpec:
    return ScenarioSpec(name, var, list(values), ScenarioParams(K=fixed.pop("K", 3000), **fixed), protocols)


def presets() -> dict[str, ScenarioSpec]:
    """The evaluation scenarios; overall-process ones default to alpha=0.95."""
    both = ("etmti", "baseline", "analysis")
    specs = [
        _preset("S11", "K", K_RANGE, alpha=0.95, r_u=0.1),
        _preset("S12", "K", K_RANGE, alpha=0.99, r_u=0.1),
        _preset("S13", "r_u", RATIO_RANGE, alpha=0.95),
        _preset("S14", "r_u", RATIO_RANGE, alpha=0.99),
        _preset("S21", "K", K_RANGE, both, r_m=0.3),
        _preset("S22", "r_m", RATIO_RANGE, both),
        _preset("S31", "K", K_RANGE, both, r_m=0.3, r_u=0.1),
        _preset("S32", "r_m", RATIO_RANGE, both, r_u=0.1),
        _preset("S33", "r_u", RATIO_RANGE, both, r_m=0.3),
    ]
    return {s.name: s for s in specs}


@dataclass
class TrialOutcome:
    t1_ms: float
    t2_ms: float
    r_fn: float
    remaining_unknown: float
    F_d: float
    F_m: float
    u_est: float = 0.0
    saturated: bool = False

    @property
    def total_ms(self) -> float:
        return self.t1_ms + self.t2_ms


def trial_seed(master_seed: int, scenario: int, sweep: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(scenario, sweep, trial))


def run_trial(params: ScenarioParams, protocol: str, seed: np.random.SeedSequence) -> TrialOutcome:
    """One round of ``protocol`` on a fresh population; both protocols see the same tags for a given seed."""
    pop_seed, proto_seed = seed.spawn(2)
    pop = generate_population(params, pop_seed)
    rng = np.random.default_rng(proto_seed)
    if protocol == "etmti":
        p1 = run_phase1(pop, params, rng)
        rep = run_phase2(pop, params.beta, params.B, rng)
        return TrialOutcome(p1.ledger.phase1_total, rep.ledger.phase2_total, rep.r_fn, p1.remaining_unknown,
                            p1.f_d, rep.frames_used, p1.u_est, p1.saturated)
    if protocol == "baseline":
        rep = run_aloha_baseline(pop, 1.0, rng)
        return TrialOutcome(0.0, rep.ledger.phase2_total, rep.r_fn, pop.U, 0, rep.frames_used)
    raise ValueError(f"no trial runner for protocol {protocol!r}")


def _run_trial_args(args):
    return run_trial(*args)


@dataclass
class ResultRow:
    scenario: str
    protocol: str
    sweep_var: str
    sweep_value: float
    trials: int
    stats: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"scenario": self.scenario, "protocol": self.protocol, "sweep_var": self.sweep_var,
             "sweep_value": self.sweep_value, "trials": self.trials}
        d.update({c: self.stats.get(c, 0.0) for c in COLUMNS[5:]})
        return d


def aggregate(outcomes: list[TrialOutcome]) -> dict[str, float]:
    stats = {}
    for m in METRICS:
        x = np.array([getattr(o, m) for o in outcomes], dtype=float)
        stats[f"{m}_mean"] = float(x.mean())
        stats[f"{m}_std"] = float(x.std())
    return stats


def analysis_row(spec: ScenarioSpec, value, params: ScenarioParams) -> ResultRow:
    """Closed-form prediction, planned with the true unknown count as the estimate."""
    K = params.K
    res = analysis.plan(K, params.alpha, params.U, gamma=params.gamma, beta=params.beta, B=params.B,
                        M_ratio=params.r_m)
    point = {"t1_ms": res.T1_pred, "t2_ms": res.T2_pred, "total_ms": res.T1_pred + res.T2_pred,
             "r_fn": res.r_fn_bound, "remaining_unknown": res.u_d_pred, "F_d": res.F_d_pred,
             "F_m": res.F_m_pred}
    stats = {}
    for m in METRICS:
        stats[f"{m}_mean"] = float(point[m])
        stats[f"{m}_std"] = 0.0
    return ResultRow(spec.name, "analysis", spec.sweep_var, value, 1, stats)


def run_trials(spec: ScenarioSpec, sweep_index: int, protocol: str, *, master_seed: int | None = None,
               scenario_index: int = 0, threads: int = 1) -> list[TrialOutcome]:
    params = spec.params_at(spec.sweep_values[sweep_index])
    seed = spec.fixed.master_seed if master_seed is None else master_seed
    jobs = [(params, protocol, trial_seed(seed, scenario_index, sweep_index, t)) for t in range(params.trials)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_trial_args, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    return [run_trial(*job) for job in jobs]


def run_scenario(spec: ScenarioSpec, *, scenario_index: int = 0, threads: int = 1) -> list[ResultRow]:
    """Aggregate rows for every sweep value and protocol of ``spec``, in a fixed order."""
    rows: list[ResultRow] = []
    for j, value in enumerate(spec.sweep_values):
        params = spec.params_at(value)
        for protocol in spec.protocols:
            if protocol == "analysis":
                rows.append(analysis_row(spec, value, params))
                continue
            log.info("%s %s=%s %s: %d trials", spec.name, spec.sweep_var, value, protocol, params.trials)
            outcomes = run_trials(spec, j, protocol, scenario_index=scenario_index, threads=threads)
            rows.append(ResultRow(spec.name, protocol, spec.sweep_var, value, len(outcomes), aggregate(outcomes)))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _round6(v):
    return float(f"{v:.6g}") if isinstance(v, float) else v


def emit_results(rows: list[ResultRow], path, fmt: str = "csv") -> Path:
    """Write rows with a stable column order and 6 significant digits."""
    path = Path(path)
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"format must be csv or jsonl, got {fmt!r}")
    try:
        with path.open("w", newline="") as fh:
            if fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(COLUMNS)
                for r in rows:
                    d = r.as_dict()
                    w.writerow([_fmt(d[c]) for c in COLUMNS])
            else:
                for r in rows:
                    d = r.as_dict()
                    fh.write(json.dumps({c: _round6(d[c]) for c in COLUMNS}) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_results(path) -> list[ResultRow]:
    """Inverse of :func:`emit_results` for either format (chosen by file suffix)."""
    path = Path(path)
    with path.open() as fh:
        if path.suffix == ".jsonl":
            records = [json.loads(line) for line in fh if line.strip()]
        else:
            records = list(csv.DictReader(fh))
    rows = []
    for d in records:
        rows.append(ResultRow(str(d["scenario"]), str(d["protocol"]), str(d["sweep_var"]),
                              float(d["sweep_value"]), int(d["trials"]),
                              {c: float(d[c]) for c in COLUMNS[5:]}))
    return rows


# -- config files ------------------------------------------------------------

_PARAM_FIELDS = {f.name for f in dataclasses.fields(ScenarioParams)}


def _node_line(node, path: list) -> int | None:
    """Line number (1-based) of the YAML node at ``path``, or of its nearest ancestor."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            match = [v for k, v in node.value if k.value == key]
            if not match:
                break
            node = match[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def load_config(path) -> tuple[list[ScenarioSpec], dict]:
    """Parse a YAML scenario file into specs plus top-level run options.

    Each scenario may name a ``preset`` to start from and override its
    ``sweep``, ``fixed`` parameters, ``protocols`` and ``trials``.
    """
    path = Path(path)
    text = path.read_text()
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict) or "scenarios" not in data:
        raise ConfigError(f"{path}: top level must be a mapping with a 'scenarios' list")

    def fail(where: list, msg: str):
        raise ConfigError(f"{path}:{_node_line(root, where)}: {'.'.join(map(str, where))}: {msg}")

    options = {k: data[k] for k in ("master_seed", "trials") if k in data}
    for k, v in options.items():
        if not isinstance(v, int) or isinstance(v, bool):
            fail([k], "must be an integer")
    if not isinstance(data["scenarios"], list) or not data["scenarios"]:
        fail(["scenarios"], "must be a non-empty list")

    known = presets()
    specs, names = [], set()
    for i, block in enumerate(data["scenarios"]):
        where = ["scenarios", i]
        if not isinstance(block, dict):
            fail(where, "each scenario must be a mapping")
        base = None
        if "preset" in block:
            base = known.get(block["preset"])
            if base is None:
                fail(where + ["preset"], f"unknown preset {block['preset']!r}")
        name = block.get("name", base.name if base else None)
        if not name:
            fail(where, "missing 'name'")
        if name in names:
            fail(where + ["name"], f"duplicate scenario name {name!r}")
        names.add(name)

        fixed = dataclasses.asdict(base.fixed) if base else {}
        overrides = block.get("fixed", {}) or {}
        if not isinstance(overrides, dict):
            fail(where + ["fixed"], "must be a mapping")
        for k in overrides:
            if k not in _PARAM_FIELDS:
                fail(where + ["fixed", k], f"unknown parameter; expected one of {sorted(_PARAM_FIELDS)}")
        fixed.update(overrides)
        for k in ("trials", "master_seed"):
            if k in block:
                fixed[k] = block[k]
            elif k in options and k not in overrides:
                fixed[k] = options[k]
        if "K" not in fixed:
            fixed["K"] = 3000

        sweep = block.get("sweep")
        if sweep is None and base is None:
            fail(where, "missing 'sweep'")
        sweep = sweep or {"var": base.sweep_var, "values": base.sweep_values}
        if not isinstance(sweep, dict) or "var" not in sweep or "values" not in sweep:
            fail(where + ["sweep"], "needs 'var' and 'values'")
        protocols = block.get("protocols", list(base.protocols) if base else ["etmti"])
        try:
            params = ScenarioParams(**fixed)
            specs.append(ScenarioSpec(name, sweep["var"], list(sweep["values"]), params, tuple(protocols)))
        except (ConfigError, ValueError, TypeError) as exc:
            fail(where, str(exc))
    return specs, options


def resolve_scenario(name_or_path: str) -> list[ScenarioSpec]:
    """A preset name or the path of a YAML scenario file."""
    known = presets()
    if name_or_path in known:
        return [known[name_or_path]]
    if Path(name_or_path).is_file():
        return load_config(name_or_path)[0]
    raise ConfigError(f"{name_or_path!r} is neither a preset ({', '.join(known)}) nor a readable file")


def with_overrides(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return spec
    return dataclasses.replace(spec, fixed=dataclasses.replace(spec.fixed, **changes))
