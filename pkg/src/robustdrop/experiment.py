"""Multi-trial experiments, parameter sweeps and CSV output."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import pet as pet_mod
from .dropping import POLICY_KINDS, DropPolicyConfig
from .mapping import MAPPING_VARIANTS
from .pet import PetMatrix
from .sim import MachineSpec, TrialResult, WorkloadSpec, generate_workload, run_trial

__all__ = [
    "AggregateRow",
    "ConfigError",
    "ExperimentConfig",
    "OutputError",
    "SCHEMA",
    "SWEEP_AXES",
    "aggregate",
    "build_pet",
    "compare_policies",
    "load_config",
    "run_experiment",
    "run_point",
    "sweep_beta",
    "sweep_eta",
    "write_csv",
]

SCHEMA = "robustdrop.experiment/1"
SWEEP_AXES = ("pet_mode", "arrival_rate", "n_tasks", "mapping", "policy", "eta", "beta")
METRICS = ("robustness", "reactive_fraction", "total_cost", "normalized_cost")
OPTIMAL_MAX_CAPACITY = 6


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class OutputError(OSError):
    pass


@dataclass(frozen=True)
class AggregateRow:
    coords: tuple[tuple[str, object], ...]
    metric: str
    mean: float
    ci95: float
    n: int

    @property
    def single_sample(self) -> bool:
        return self.n == 1


@dataclass(frozen=True)
class ExperimentConfig:
    pet: dict
    machines: tuple[MachineSpec, ...]
    n_tasks: int = 2000
    arrival_rate: float = 0.15
    gamma: float = 2.0
    workload_seed: int = 1000
    seed: int = 2000
    mapping: str = "PAM"
    dropping: DropPolicyConfig = field(default_factory=DropPolicyConfig)
    trials: int = 10
    warmup: int = 100
    cooldown: int = 100
    sweep: dict = field(default_factory=dict)
    sample_from_gamma: bool = False
    output_dir: str = "out"
    name: str = "run"

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
        return _parse(doc, base_dir or Path("."))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "pet": self.pet,
            "machines": [m.__dict__ for m in self.machines],
            "workload": {
                "n_tasks": self.n_tasks, "arrival_rate": self.arrival_rate,
                "gamma": self.gamma, "seed": self.workload_seed,
            },
            "seed": self.seed,
            "mapping": self.mapping,
            "dropping": self.dropping.__dict__,
            "trials": self.trials,
            "warmup": self.warmup,
            "cooldown": self.cooldown,
            "sweep": self.sweep,
            "sample_from_gamma": self.sample_from_gamma,
            "output_dir": self.output_dir,
        }


def _req(cond, path, msg):
    if not cond:
        raise ConfigError(path, msg)


def _num(doc, key, path, kind=float, default=None, check=None, msg=""):
    if key not in doc:
        _req(default is not None, f"{path}.{key}", "required field missing")
        return default
    v = doc[key]
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind is int:
        ok = isinstance(v, int) and not isinstance(v, bool)
    _req(ok, f"{path}.{key}", f"expected {kind.__name__}, got {v!r}")
    if check is not None:
        _req(check(v), f"{path}.{key}", msg or f"invalid value {v!r}")
    return kind(v)


def _parse(doc, base_dir: Path) -> ExperimentConfig:
    _req(isinstance(doc, dict), "$", "config must be a JSON object")
    _req(doc.get("schema") == SCHEMA, "$.schema", f"expected {SCHEMA!r}, got {doc.get('schema')!r}")

    pet_doc = doc.get("pet")
    _req(isinstance(pet_doc, dict), "$.pet", "required object missing")
    pet_doc = dict(pet_doc)
    if "path" in pet_doc:
        p = Path(pet_doc["path"])
        pet_doc["path"] = str(p if p.is_absolute() else base_dir / p)
    else:
        has_means = "means" in pet_doc
        scen = pet_doc.get("scenario")
        _req(has_means or scen in pet_mod.SCENARIOS, "$.pet.scenario",
             f"expected one of {pet_mod.SCENARIOS} (or give 'means' or 'path')")
        if has_means:
            m = pet_doc["means"]
            _req(isinstance(m, list) and m and all(isinstance(r, list) and r for r in m),
                 "$.pet.means", "expected a non-empty grid")
            _req(all(isinstance(x, (int, float)) and x > 0 for r in m for x in r),
                 "$.pet.means", "all means must be positive numbers")
        sr = pet_doc.get("scale_range", [1.0, 20.0])
        _req(isinstance(sr, list) and len(sr) == 2 and 0 < sr[0] <= sr[1],
             "$.pet.scale_range", "expected [low, high] with 0 < low <= high")
        _num(pet_doc, "samples_per_cell", "$.pet", int, 500, lambda v: v >= 1, "must be >= 1")
        _num(pet_doc, "bin_width", "$.pet", int, 10, lambda v: v >= 1, "must be >= 1")
        _num(pet_doc, "seed", "$.pet", int, 0)
    mode = pet_doc.get("mode", "heterogeneous")
    _req(mode in ("heterogeneous", "homogeneous"), "$.pet.mode",
         "expected 'heterogeneous' or 'homogeneous'")

    machines = doc.get("machines")
    if machines is None:
        _req("scenario" in pet_doc, "$.machines", "required unless pet.scenario is given")
        machines = default_machines(pet_doc["scenario"])
    else:
        _req(isinstance(machines, list) and machines, "$.machines", "expected a non-empty list")
        parsed = []
        for k, mdoc in enumerate(machines):
            path = f"$.machines[{k}]"
            _req(isinstance(mdoc, dict), path, "expected an object")
            parsed.append(MachineSpec(
                _num(mdoc, "machine_type", path, int, None, lambda v: v >= 0, "must be >= 0"),
                _num(mdoc, "count", path, int, 1, lambda v: v >= 1, "must be >= 1"),
                _num(mdoc, "price_per_hour", path, float, 0.0, lambda v: v >= 0, "must be >= 0"),
                _num(mdoc, "queue_capacity", path, int, 6, lambda v: v >= 1, "must be >= 1"),
            ))
        machines = tuple(parsed)

    wl = doc.get("workload", {})
    _req(isinstance(wl, dict), "$.workload", "expected an object")
    n_tasks = _num(wl, "n_tasks", "$.workload", int, 2000, lambda v: v >= 1, "must be >= 1")
    rate = _num(wl, "arrival_rate", "$.workload", float, 0.15, lambda v: v > 0, "must be > 0")
    gamma = _num(wl, "gamma", "$.workload", float, 1.0, lambda v: v >= 0, "must be >= 0")
    wseed = _num(wl, "seed", "$.workload", int, 1000)

    mapping = doc.get("mapping", "PAM")
    _req(mapping in MAPPING_VARIANTS, "$.mapping", f"expected one of {MAPPING_VARIANTS}")
    ddoc = doc.get("dropping", {})
    _req(isinstance(ddoc, dict), "$.dropping", "expected an object")
    try:
        dropping = DropPolicyConfig(
            kind=ddoc.get("kind", "heuristic"),
            beta=_num(ddoc, "beta", "$.dropping", float, 1.0),
            eta=_num(ddoc, "eta", "$.dropping", int, 2),
            threshold=_num(ddoc, "threshold", "$.dropping", float, 0.5),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("$.dropping", str(exc)) from None

    trials = _num(doc, "trials", "$", int, 10, lambda v: v >= 1, "must be >= 1")
    warmup = _num(doc, "warmup", "$", int, 100, lambda v: v >= 0, "must be >= 0")
    cooldown = _num(doc, "cooldown", "$", int, 100, lambda v: v >= 0, "must be >= 0")
    seed = _num(doc, "seed", "$", int, 2000)

    sweep = doc.get("sweep", {})
    _req(isinstance(sweep, dict), "$.sweep", "expected an object")
    for axis, values in sweep.items():
        path = f"$.sweep.{axis}"
        _req(axis in SWEEP_AXES, path, f"unknown sweep axis; choose from {SWEEP_AXES}")
        _req(isinstance(values, list) and values, path, "expected a non-empty list")
        for v in values:
            _check_axis_value(axis, v, path)

    return ExperimentConfig(
        pet=pet_doc, machines=tuple(machines), n_tasks=n_tasks, arrival_rate=rate,
        gamma=gamma, workload_seed=wseed, seed=seed, mapping=mapping, dropping=dropping,
        trials=trials, warmup=warmup, cooldown=cooldown,
        sweep={k: list(v) for k, v in sweep.items()},
        sample_from_gamma=bool(doc.get("sample_from_gamma", False)),
        output_dir=str(doc.get("output_dir", "out")),
        name=str(doc.get("name", "run")),
    )


def _check_axis_value(axis, v, path):
    if axis == "mapping":
        _req(v in MAPPING_VARIANTS, path, f"{v!r} is not one of {MAPPING_VARIANTS}")
    elif axis == "policy":
        _req(v in POLICY_KINDS, path, f"{v!r} is not one of {POLICY_KINDS}")
    elif axis == "pet_mode":
        _req(v in ("heterogeneous", "homogeneous"), path, f"{v!r} is not a PET mode")
    elif axis in ("eta", "n_tasks"):
        _req(isinstance(v, int) and not isinstance(v, bool) and v >= 1, path, "expected integers >= 1")
    elif axis == "beta":
        _req(isinstance(v, (int, float)) and v >= 1, path, "expected numbers >= 1")
    else:
        _req(isinstance(v, (int, float)) and v > 0, path, "expected positive numbers")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"malformed JSON ({exc})") from None
    return ExperimentConfig.from_dict(doc, path.parent)


def default_machines(scenario: str) -> tuple[MachineSpec, ...]:
    sc = pet_mod.load_scenario(scenario)
    per_type = sc.get("machines_per_type", 1)
    return tuple(
        MachineSpec(j, per_type, price, 6) for j, price in enumerate(sc["price_per_hour"])
    )


def build_pet(pet_doc: dict, mode: str | None = None) -> PetMatrix:
    """PET matrix described by the ``pet`` section of a config."""
    if "path" in pet_doc:
        try:
            pet = pet_mod.load(pet_doc["path"])
        except OSError as exc:
            raise ConfigError("$.pet.path", f"cannot read PET file ({exc.strerror})") from None
        except pet_mod.PetError as exc:
            raise ConfigError("$.pet.path", str(exc)) from None
    else:
        names = {}
        if "means" in pet_doc:
            means = pet_doc["means"]
        else:
            sc = pet_mod.load_scenario(pet_doc["scenario"])
            means = sc["means"]
            names = {"task_types": sc["task_types"], "machine_types": sc["machine_types"]}
        try:
            pet = pet_mod.generate_synthetic(
                means,
                scale_range=tuple(pet_doc.get("scale_range", (1.0, 20.0))),
                samples_per_cell=pet_doc.get("samples_per_cell", 500),
                bin_width=pet_doc.get("bin_width", 10),
                seed=pet_doc.get("seed", 0),
                **names,
            )
        except pet_mod.PetError as exc:
            raise ConfigError("$.pet", str(exc)) from None
    mode = mode or pet_doc.get("mode", "heterogeneous")
    if mode == "homogeneous":
        pet = pet_mod.homogeneous(pet, pet_doc.get("homogeneous_column", 0))
    return pet


# --- trial execution -----------------------------------------------------

def _trial_job(args):
    pet, machines, point, i, keep_trace = args
    wl = generate_workload(WorkloadSpec(
        point["n_tasks"], point["arrival_rate"], point["gamma"], pet, point["workload_seed"] + i,
    ))
    res = run_trial(
        wl, pet, machines, point["mapping"], point["dropping"], point["seed"] + i,
        warmup=point["warmup"], cooldown=point["cooldown"],
        sample_from_gamma=point["sample_from_gamma"], trace=keep_trace,
    )
    return res


def _point(cfg: ExperimentConfig, coords: dict) -> dict:
    d = cfg.dropping
    if "policy" in coords:
        d = replace(d, kind=coords["policy"])
    if "eta" in coords:
        d = replace(d, eta=coords["eta"])
    if "beta" in coords:
        d = replace(d, beta=float(coords["beta"]))
    return {
        "n_tasks": coords.get("n_tasks", cfg.n_tasks),
        "arrival_rate": float(coords.get("arrival_rate", cfg.arrival_rate)),
        "gamma": cfg.gamma,
        "workload_seed": cfg.workload_seed,
        "seed": cfg.seed,
        "mapping": coords.get("mapping", cfg.mapping),
        "dropping": d,
        "warmup": cfg.warmup,
        "cooldown": cfg.cooldown,
        "sample_from_gamma": cfg.sample_from_gamma,
    }


def run_point(cfg: ExperimentConfig, coords: dict | None = None, *, pet=None,
              jobs: int = 1, trace: bool = False, executor=None) -> list[TrialResult]:
    """All trials of one sweep point; trial ``i`` uses seeds ``base + i``."""
    coords = coords or {}
    point = _point(cfg, coords)
    if point["dropping"].kind == "optimal":
        cap = max(m.queue_capacity for m in cfg.machines)
        if cap > OPTIMAL_MAX_CAPACITY:
            raise ConfigError("$.machines", f"optimal dropping needs queue_capacity <= {OPTIMAL_MAX_CAPACITY}")
    if pet is None:
        pet = build_pet(cfg.pet, coords.get("pet_mode"))
    args = [(pet, cfg.machines, point, i, trace) for i in range(cfg.trials)]
    if executor is not None:
        return list(executor.map(_trial_job, args))
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_trial_job, args))
    return [_trial_job(a) for a in args]


def aggregate(values) -> tuple[float, float, int]:
    """Mean and Student-t 95% confidence half-width."""
    v = np.asarray(list(values), dtype=float)
    n = v.size
    if n == 0:
        raise ValueError("no values to aggregate")
    mean = float(v.mean())
    if n == 1 or not np.all(np.isfinite(v)):
        return mean, 0.0 if n == 1 else math.nan, n
    sd = float(v.std(ddof=1))
    return mean, float(stats.t.ppf(0.975, n - 1) * sd / math.sqrt(n)), n


def _grid(cfg: ExperimentConfig, axes):
    names = [a for a in SWEEP_AXES if a in axes]
    for combo in itertools.product(*(axes[a] for a in names)):
        yield dict(zip(names, combo))


def run_experiment(cfg: ExperimentConfig, out_dir=None, *, jobs: int = 1, trace: bool = False,
                   axes: dict | None = None, stem: str | None = None) -> list[AggregateRow]:
    """Run every point of the sweep grid and write ``<stem>.csv``."""
    axes = cfg.sweep if axes is None else axes
    for a, values in axes.items():
        if not values:
            raise ConfigError(f"$.sweep.{a}", "expected a non-empty list")
    out_dir = Path(out_dir) if out_dir is not None else None
    pets: dict = {}
    rows: list[AggregateRow] = []
    traces = []
    executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for coords in _grid(cfg, axes):
            mode = coords.get("pet_mode", cfg.pet.get("mode", "heterogeneous"))
            if mode not in pets:
                pets[mode] = build_pet(cfg.pet, mode)
            results = run_point(cfg, coords, pet=pets[mode], trace=trace, executor=executor)
            key = tuple(coords.items())
            for metric in METRICS:
                mean, ci, n = aggregate(r.metrics()[metric] for r in results)
                rows.append(AggregateRow(key, metric, mean, ci, n))
            if trace:
                traces.append((coords, results))
    finally:
        if executor is not None:
            executor.shutdown()
    if out_dir is not None:
        stem = stem or cfg.name
        write_csv(rows, out_dir / f"{stem}.csv")
        if trace:
            _write_traces(traces, out_dir / f"{stem}_traces")
    return rows


def sweep_eta(cfg: ExperimentConfig, out_dir=None, **kw) -> list[AggregateRow]:
    """Effective-depth sweep with PAM and heuristic dropping."""
    cfg = replace(cfg, mapping="PAM", dropping=replace(cfg.dropping, kind="heuristic"))
    axes = {"arrival_rate": cfg.sweep.get("arrival_rate", [cfg.arrival_rate]),
            "eta": cfg.sweep.get("eta", [1, 2, 3, 4, 5])}
    return run_experiment(cfg, out_dir, axes=axes, stem="sweep_eta", **kw)


def sweep_beta(cfg: ExperimentConfig, out_dir=None, **kw) -> list[AggregateRow]:
    """Robustness-improvement-factor sweep with PAM and heuristic dropping."""
    cfg = replace(cfg, mapping="PAM", dropping=replace(cfg.dropping, kind="heuristic"))
    axes = {"arrival_rate": cfg.sweep.get("arrival_rate", [cfg.arrival_rate]),
            "beta": cfg.sweep.get("beta", [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])}
    return run_experiment(cfg, out_dir, axes=axes, stem="sweep_beta", **kw)


def compare_policies(cfg: ExperimentConfig, out_dir=None, **kw) -> list[AggregateRow]:
    """Cross product of mapping heuristics, dropping policies and load levels."""
    axes = {
        "pet_mode": cfg.sweep.get("pet_mode", [cfg.pet.get("mode", "heterogeneous")]),
        "arrival_rate": cfg.sweep.get("arrival_rate", [cfg.arrival_rate]),
        "mapping": cfg.sweep.get("mapping", [cfg.mapping]),
        "policy": cfg.sweep.get("policy", list(POLICY_KINDS)),
    }
    return run_experiment(cfg, out_dir, axes=axes, stem="compare", **kw)


# --- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(rows: list[AggregateRow]) -> str:
    if not rows:
        raise ValueError("no rows to write")
    axes = [name for name, _ in rows[0].coords]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"sweep_{a}" for a in axes] + ["metric", "mean", "ci95", "n"])
    for r in rows:
        w.writerow([_fmt(v) for _, v in r.coords] + [r.metric, _fmt(r.mean), _fmt(r.ci95), r.n])
    return buf.getvalue()


def write_csv(rows: list[AggregateRow], path) -> Path:
    path = Path(path)
    text = render_csv(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(exc.errno, f"cannot write {path}: {exc.strerror}") from None
    return path


def _write_traces(traces, folder: Path) -> None:
    try:
        folder.mkdir(parents=True, exist_ok=True)
        for coords, results in traces:
            tag = "_".join(f"{k}-{v}" for k, v in coords.items()) or "base"
            for i, r in enumerate(results):
                with open(folder / f"{tag}_trial{i}.csv", "w", encoding="utf-8", newline="") as fh:
                    fh.write("tick,event_kind,task_id,machine,detail\n")
                    fh.writelines(line + "\n" for line in (r.trace or []))
    except OSError as exc:
        raise OutputError(exc.errno, f"cannot write traces under {folder}: {exc.strerror}") from None


def resolve_output_dir(cli_value, cfg: ExperimentConfig) -> Path:
    """``-o`` wins, then ``ROBUSTDROP_OUT``, then the config's ``output_dir``."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get("ROBUSTDROP_OUT")
    return Path(env) if env else Path(cfg.output_dir)
