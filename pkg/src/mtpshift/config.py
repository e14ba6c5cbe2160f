"""Run configuration: a versioned YAML file validated in full before any work.

Relative paths inside the file resolve against the file's own directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import ShiftPolicy
from .learners import BINARY, REGRESSION, LearnerSpec, default_library, library_from_config
from .panel import CONFOUNDER_MODES, LAG_MODES, Schema
from .sim import DR_CELLS, DgpSpec, dgp_from_dict

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "seed", "V", "jobs", "input", "study_window", "lead_weeks", "lag_mode",
    "confounder_mode", "population_threshold", "min_slice_n", "truncation", "libraries",
    "policies", "shift_candidates", "ratio_threshold", "output", "simulate",
}
_SIM_KEYS = {"dgp", "policy", "n", "R", "cells", "sizes", "truth_draws"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def policy_from_dict(d: dict) -> ShiftPolicy:
    d = dict(d)
    unknown = set(d) - {"kind", "value", "clamp_lo", "clamp_hi"}
    if unknown:
        raise ValueError(f"unknown policy keys {sorted(unknown)}")
    return ShiftPolicy(d["kind"], float(d["value"]), d.get("clamp_lo"), d.get("clamp_hi"))


def policy_to_dict(p: ShiftPolicy) -> dict:
    out = {"kind": p.kind, "value": p.value}
    if p.clamp_lo is not None:
        out["clamp_lo"] = p.clamp_lo
    if p.clamp_hi is not None:
        out["clamp_hi"] = p.clamp_hi
    return out


@dataclass
class SimulateConfig:
    dgp: DgpSpec = field(default_factory=DgpSpec)
    policy: ShiftPolicy = field(default_factory=lambda: ShiftPolicy.additive(1.0))
    n: int = 1000
    R: int = 500
    cells: tuple = ("both-correct",)
    sizes: tuple = ()
    truth_draws: int = 1_000_000


@dataclass
class RunConfig:
    seed: int
    path: Optional[Path] = None
    V: int = 5
    jobs: Optional[int] = None
    input_path: Optional[Path] = None
    schema: Optional[Schema] = None
    study_window: tuple = (date(2020, 6, 1), date(2020, 11, 14))
    lead_weeks: int = 2
    lag_mode: str = "previous-week"
    confounder_mode: str = "pooled-top8"
    population_threshold: float = 40_000
    min_slice_n: int = 50
    truncation: Optional[float] = None
    outcome_library: list = field(default_factory=lambda: default_library(REGRESSION))
    ratio_library: list = field(default_factory=lambda: default_library(BINARY))
    policies: dict = field(default_factory=dict)
    shift_candidates: dict = field(default_factory=dict)
    ratio_threshold: float = 10.0
    output_dir: Path = Path("results")
    simulate: Optional[SimulateConfig] = None


def _date(v):
    if isinstance(v, date):
        return v
    return date.fromisoformat(str(v))


def load_config(path, check_files: bool = True) -> RunConfig:
    """Parse and validate ``path``; every problem found is reported at once."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except yaml.YAMLError as exc:
        raise ConfigError([f"config is not valid YAML: {exc}"])
    return parse_config(raw or {}, base=path.parent, check_files=check_files, path=path)


def parse_config(raw: dict, base: Path = Path("."), check_files: bool = True, path=None) -> RunConfig:
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a mapping"])

    def attempt(what, fn, default=None):
        try:
            return fn()
        except ConfigError as exc:
            problems.extend(exc.problems)
        except (ValueError, TypeError, KeyError) as exc:
            problems.append(f"{what}: {exc}")
        return default

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown config keys: {sorted(unknown)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version must be {SCHEMA_VERSION}")
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append("seed is mandatory and must be an integer")
        seed = 0
    cfg = RunConfig(seed=seed, path=path)

    V = raw.get("V", 5)
    if not isinstance(V, int) or V < 2:
        problems.append("V must be an integer >= 2")
    else:
        cfg.V = V
    jobs = raw.get("jobs")
    if jobs is not None and (not isinstance(jobs, int) or jobs < 1):
        problems.append("jobs must be a positive integer")
    else:
        cfg.jobs = jobs

    inp = raw.get("input")
    if inp is not None:
        if not isinstance(inp, dict) or "path" not in inp:
            problems.append("input must be a mapping with 'path' and 'schema'")
        else:
            extra = set(inp) - {"path", "schema"}
            if extra:
                problems.append(f"unknown input keys: {sorted(extra)}")
            p = Path(inp["path"])
            cfg.input_path = p if p.is_absolute() else base / p
            if check_files and not cfg.input_path.exists():
                problems.append(f"input file does not exist: {cfg.input_path}")
            cfg.schema = attempt("input.schema", lambda: Schema.from_dict(inp.get("schema", {})))

    if "study_window" in raw:
        win = attempt("study_window", lambda: tuple(_date(v) for v in raw["study_window"]))
        if win is not None:
            if len(win) != 2 or not win[0] <= win[1]:
                problems.append("study_window must be [start, end] with start <= end")
            else:
                cfg.study_window = win
    lead = raw.get("lead_weeks", 2)
    if not isinstance(lead, int) or lead < 1:
        problems.append("lead_weeks must be an integer >= 1")
    else:
        cfg.lead_weeks = lead
    lag = raw.get("lag_mode", "previous-week")
    if lag not in LAG_MODES:
        problems.append(f"lag_mode must be one of {LAG_MODES}")
    else:
        cfg.lag_mode = lag
    mode = raw.get("confounder_mode", "pooled-top8")
    if mode not in CONFOUNDER_MODES:
        problems.append(f"confounder_mode must be one of {CONFOUNDER_MODES}")
    else:
        cfg.confounder_mode = mode
    thr = raw.get("population_threshold", 40_000)
    if not isinstance(thr, (int, float)) or thr < 0:
        problems.append("population_threshold must be a nonnegative number")
    else:
        cfg.population_threshold = thr
    mn = raw.get("min_slice_n", 50)
    if not isinstance(mn, int) or mn < 2:
        problems.append("min_slice_n must be an integer >= 2")
    else:
        cfg.min_slice_n = mn
    tr = raw.get("truncation")
    if tr is not None and (not isinstance(tr, (int, float)) or tr <= 0):
        problems.append("truncation must be a positive number or null")
    else:
        cfg.truncation = tr
    rt = raw.get("ratio_threshold", 10.0)
    if not isinstance(rt, (int, float)) or rt <= 0:
        problems.append("ratio_threshold must be positive")
    else:
        cfg.ratio_threshold = float(rt)

    libs = raw.get("libraries")
    if libs is not None:
        if not isinstance(libs, dict):
            problems.append("libraries must be a mapping")
        else:
            extra = set(libs) - {"outcome", "ratio", "exclude_trees"}
            if extra:
                problems.append(f"unknown libraries keys: {sorted(extra)}")
            no_trees = bool(libs.get("exclude_trees", False))
            for key, task, attr in (("outcome", REGRESSION, "outcome_library"), ("ratio", BINARY, "ratio_library")):
                if key in libs:
                    lib = attempt(f"libraries.{key}", lambda: library_from_config(libs[key], task))
                else:
                    lib = default_library(task)
                if lib is not None:
                    if no_trees:
                        lib = [s for s in lib if s.family not in ("tree", "boosting", "forest")]
                        if not lib:
                            problems.append(f"libraries.{key} is empty after excluding tree learners")
                    setattr(cfg, attr, lib)

    pols = raw.get("policies", {})
    if not isinstance(pols, dict):
        problems.append("policies must map index name to a policy")
    else:
        for idx, d in pols.items():
            pol = attempt(f"policies.{idx}", lambda: policy_from_dict(d))
            if pol is not None:
                cfg.policies[idx] = pol
    cands = raw.get("shift_candidates", {})
    if not isinstance(cands, dict):
        problems.append("shift_candidates must map index name to a list of policies")
    else:
        for idx, lst in cands.items():
            got = attempt(f"shift_candidates.{idx}", lambda: [policy_from_dict(d) for d in lst])
            if got is not None:
                cfg.shift_candidates[idx] = got
    if cfg.schema is not None:
        for section in ("policies", "shift_candidates"):
            for idx in getattr(cfg, section):
                if idx not in cfg.schema.indices:
                    problems.append(f"{section}.{idx}: index not declared in input.schema.indices")

    out = raw.get("output", {})
    if not isinstance(out, dict) or set(out) - {"dir"}:
        problems.append("output must be a mapping with optional 'dir'")
    elif "dir" in out:
        d = Path(out["dir"])
        cfg.output_dir = d if d.is_absolute() else base / d
    else:
        cfg.output_dir = base / "results"

    sim = raw.get("simulate")
    if sim is not None:
        cfg.simulate = attempt("simulate", lambda: _parse_simulate(sim))

    if problems:
        raise ConfigError(problems)
    return cfg


def _parse_simulate(sim: Any) -> SimulateConfig:
    problems = []
    if not isinstance(sim, dict):
        raise ConfigError(["simulate must be a mapping"])
    extra = set(sim) - _SIM_KEYS
    if extra:
        problems.append(f"unknown simulate keys: {sorted(extra)}")
    sc = SimulateConfig()
    try:
        if "dgp" in sim:
            sc.dgp = dgp_from_dict(sim["dgp"])
    except (TypeError, ValueError) as exc:
        problems.append(f"simulate.dgp: {exc}")
    try:
        if "policy" in sim:
            sc.policy = policy_from_dict(sim["policy"])
    except (TypeError, ValueError, KeyError) as exc:
        problems.append(f"simulate.policy: {exc}")
    for key in ("n", "R", "truth_draws"):
        if key in sim:
            v = sim[key]
            if not isinstance(v, int) or v < 2:
                problems.append(f"simulate.{key} must be an integer >= 2")
            else:
                setattr(sc, key, v)
    if "cells" in sim:
        bad = [c for c in sim["cells"] if c not in DR_CELLS]
        if bad:
            problems.append(f"simulate.cells: unknown cells {bad}; choose from {list(DR_CELLS)}")
        else:
            sc.cells = tuple(sim["cells"])
    if "sizes" in sim:
        if not all(isinstance(v, int) and v >= 2 for v in sim["sizes"]):
            problems.append("simulate.sizes must be integers >= 2")
        else:
            sc.sizes = tuple(sim["sizes"])
    if problems:
        raise ConfigError(problems)
    return sc
