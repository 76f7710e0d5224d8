"""Experiment configuration: strict schema, defaults, provenance hashing.

A config file is a YAML mapping with three top-level blocks (scenario,
numeric, run). Every key has a default, so the empty mapping is a valid
config; every key NOT in the schema is an error, so a misspelled tolerance
cannot silently fall back to its default. The fully merged tree (defaults
plus user values plus command-line overrides) is the effective config; its
canonical JSON is hashed into the provenance stamp that all outputs carry.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
import yaml

from .choice import Scenario
from .identify import EdgeShrunkOptions, KinkOptions, OptsLike, interior_grid
from .population import (
    BadParameter,
    ConsiderationMeasure,
    Copula,
    MarginalDist,
    MixtureSpec,
    validate_consideration,
)
from .preferences import ContextMenu, PricePair, ThresholdSystem


class ConfigError(Exception):
    """Base for everything load_config can raise."""


class ParseError(ConfigError):
    """The file is not well-formed YAML; message carries line/column."""


class UnknownKey(ConfigError):
    """A key not in the schema; strictness guards against silent typos."""


class ValidationError(ConfigError):
    """Schema-shaped but semantically invalid; message carries the field path."""


_MENU_I = {"mu": 0.2, "d1": 8.0, "d2": 4.0, "r1": 1.0, "r2": 2.0, "w": 20.0}
_MENU_II = {"mu": 0.2, "d1": 0.08, "d2": 0.04, "r1": 0.005, "r2": 0.015, "w": 20.0}

# One default per key. Mappings nest; lists and scalars are leaves.
DEFAULTS: dict = {
    "scenario": {
        "menu_i": dict(_MENU_I),
        "menu_ii": dict(_MENU_II),
        "nu_bar": 1.0,
        "omega_bar": 1.0,
        "x_min": 0.5,
        "x_max": 4.5,
        "mixture": {
            "alpha": 0.3,
            "beta": 0.5,
            "f": {"family": "beta", "a": 2.0, "b": 2.0},
            "g": {"family": "uniform", "a": 1.0, "b": 1.0},
            "copula": {"family": "independence", "theta": 0.0},
        },
        "consideration": {
            "both_both": 1.0,
            "one_both": 0.0,
            "two_both": 0.0,
            "both_one": 0.0,
            "both_two": 0.0,
            "one_one": 0.0,
            "one_two": 0.0,
            "two_one": 0.0,
            "two_two": 0.0,
        },
        "prices": {"x_i": 2.0, "x_ii": 0.81},
    },
    "numeric": {
        "eps_frac": 1.0e-4,
        "fd_step_frac": 5.0e-7,
        "fd_step_cut_frac": None,
        "slack_min": 1.0e-5,
        "invert_tol": 1.0e-10,
        "shrink_eps_at_edges": True,
    },
    "run": {
        "seed": 20260816,
        "workers": 1,
        "out_dir": "out",
        "simulate": {
            "n_agents": 100000,
            "truth_columns": False,
            "price_mode": "rectangle",
            "price_file": None,
            "x_i_range": [0.5, 4.5],
            "x_ii_range": [0.5, 4.5],
        },
        "identify": {
            "grid_size": 201,
            "grid_margin_frac": 2.5e-5,
            "min_coverage": 0.5,
            "copula_grid_size": 9,
            "share_floor": 0.01,
            "stages": ["cara_side", "dual_side", "copula"],
        },
        "region": {"grid_size": 101},
        "sweep": {"parameter": "", "values": []},
    },
}

_STAGES = ("cara_side", "dual_side", "copula")
_PRICE_MODES = ("fixed", "rectangle", "file")


def _merge(defaults: dict, user, path: str) -> dict:
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ValidationError(f"{path or '<root>'}: expected a mapping, got {type(user).__name__}")
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        prefix = f"{path}." if path else ""
        raise UnknownKey(f"unknown key '{prefix}{unknown[0]}'")
    out = {}
    for key, dval in defaults.items():
        child = f"{path}.{key}" if path else key
        if isinstance(dval, dict):
            out[key] = _merge(dval, user.get(key, {}), child)
        elif key in user:
            out[key] = copy.deepcopy(user[key])
        else:
            out[key] = copy.deepcopy(dval)
    return out


def _num(tree: dict, path: str, lo=None, hi=None, open_lo=False, open_hi=False) -> float:
    v = _get(tree, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        hint = " (write floats with a dot, e.g. 1.0e-4, not 1e-4)" if isinstance(v, str) else ""
        raise ValidationError(f"{path}: expected a number, got {v!r}{hint}")
    v = float(v)
    if not np.isfinite(v):
        raise ValidationError(f"{path}: must be finite, got {v}")
    if lo is not None and (v <= lo if open_lo else v < lo):
        raise ValidationError(f"{path}: must be {'>' if open_lo else '>='} {lo}, got {v}")
    if hi is not None and (v >= hi if open_hi else v > hi):
        raise ValidationError(f"{path}: must be {'<' if open_hi else '<='} {hi}, got {v}")
    return v


def _int(tree: dict, path: str, lo=None, hi=None) -> int:
    v = _get(tree, path)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{path}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ValidationError(f"{path}: must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ValidationError(f"{path}: must be <= {hi}, got {v}")
    return int(v)


def _bool(tree: dict, path: str) -> bool:
    v = _get(tree, path)
    if not isinstance(v, bool):
        raise ValidationError(f"{path}: expected true/false, got {v!r}")
    return v


def _str(tree: dict, path: str, choices=None) -> str:
    v = _get(tree, path)
    if not isinstance(v, str):
        raise ValidationError(f"{path}: expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ValidationError(f"{path}: must be one of {list(choices)}, got {v!r}")
    return v


def _get(tree: dict, path: str):
    node = tree
    for part in path.split("."):
        node = node[part]
    return node


def set_by_path(tree: dict, path: str, value) -> None:
    """Assign into a nested mapping by dotted path; the path must exist."""
    parts = path.split(".")
    node = tree
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ValidationError(f"override path '{path}' does not resolve in the schema")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ValidationError(f"override path '{path}' does not resolve in the schema")
    node[parts[-1]] = value


@dataclass(frozen=True)
class NumericOptions:
    eps_frac: float
    fd_step_frac: float
    fd_step_cut_frac: float | None
    slack_min: float
    invert_tol: float
    shrink_eps_at_edges: bool


@dataclass(frozen=True)
class SimulateOptions:
    n_agents: int
    truth_columns: bool
    price_mode: str
    price_file: str | None
    x_i_range: tuple[float, float]
    x_ii_range: tuple[float, float]


@dataclass(frozen=True)
class IdentifyOptions:
    grid_size: int
    grid_margin_frac: float
    min_coverage: float
    copula_grid_size: int
    share_floor: float
    stages: tuple[str, ...]


@dataclass(frozen=True)
class RegionOptions:
    grid_size: int


@dataclass(frozen=True)
class SweepOptions:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class RunOptions:
    seed: int
    workers: int
    out_dir: str
    simulate: SimulateOptions
    identify: IdentifyOptions
    region: RegionOptions
    sweep: SweepOptions


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus its provenance identity."""

    scenario: Scenario
    numeric: NumericOptions
    run: RunOptions
    effective: dict
    config_hash: str

    def kink_options(self, family: str) -> OptsLike:
        """Derivative-gap knobs in absolute units for one preference family."""
        ts = self.scenario.ts
        bound = ts.nu_bar if family == "eu" else ts.omega_bar
        scale = ts.x_max - ts.x_min
        n = self.numeric
        base = KinkOptions(
            eps=n.eps_frac * bound,
            fd_step=n.fd_step_frac * scale,
            fd_step_cut=None if n.fd_step_cut_frac is None else n.fd_step_cut_frac * bound,
            slack_min=n.slack_min,
            slack_min_other=n.slack_min,
            invert_tol=n.invert_tol,
        )
        if n.shrink_eps_at_edges:
            return EdgeShrunkOptions(base, bound)
        return base

    def identify_grid(self, family: str) -> np.ndarray:
        ts = self.scenario.ts
        bound = ts.nu_bar if family == "eu" else ts.omega_bar
        ident = self.run.identify
        return interior_grid(bound, ident.grid_size, ident.grid_margin_frac)


def _build(effective: dict) -> ExperimentConfig:
    """Turn a fully merged tree into validated domain objects."""
    problems: list[str] = []

    menus = {}
    for which in ("menu_i", "menu_ii"):
        menus[which] = ContextMenu(
            mu=_num(effective, f"scenario.{which}.mu"),
            d1=_num(effective, f"scenario.{which}.d1"),
            d2=_num(effective, f"scenario.{which}.d2"),
            r1=_num(effective, f"scenario.{which}.r1"),
            r2=_num(effective, f"scenario.{which}.r2"),
            w=_num(effective, f"scenario.{which}.w"),
        )
    nu_bar = _num(effective, "scenario.nu_bar", lo=0.0, open_lo=True)
    omega_bar = _num(effective, "scenario.omega_bar", lo=0.0, open_lo=True)
    x_min = _num(effective, "scenario.x_min")
    x_max = _num(effective, "scenario.x_max")
    if not x_min < x_max:
        problems.append(f"scenario: need x_min < x_max, got [{x_min}, {x_max}]")
    for which, menu in menus.items():
        for msg in menu.validate(x_max=x_max):
            problems.append(f"scenario.{which}: {msg}")

    alpha = _num(effective, "scenario.mixture.alpha", lo=0.0, hi=1.0)
    beta = _num(effective, "scenario.mixture.beta", lo=0.0, hi=1.0)
    if alpha + beta > 1.0 + 1e-12:
        problems.append(f"scenario.mixture: alpha + beta = {alpha + beta} exceeds 1")

    def marginal(block: str, bound: float) -> MarginalDist | None:
        fam = _str(effective, f"scenario.mixture.{block}.family", choices=("uniform", "beta"))
        a = _num(effective, f"scenario.mixture.{block}.a", lo=0.0, open_lo=True)
        b = _num(effective, f"scenario.mixture.{block}.b", lo=0.0, open_lo=True)
        try:
            return MarginalDist(fam, bound, a, b)
        except BadParameter as exc:
            problems.append(f"scenario.mixture.{block}: {exc}")
            return None

    f_dist = marginal("f", nu_bar)
    g_dist = marginal("g", omega_bar)

    cop_family = _str(
        effective,
        "scenario.mixture.copula.family",
        choices=("independence", "fgm", "clayton", "gaussian"),
    )
    cop_theta = _num(effective, "scenario.mixture.copula.theta")
    copula = None
    try:
        copula = Copula(cop_family, cop_theta)
    except BadParameter as exc:
        problems.append(f"scenario.mixture.copula: {exc}")

    atoms = {k: _num(effective, f"scenario.consideration.{k}", lo=0.0) for k in DEFAULTS["scenario"]["consideration"]}
    consideration = ConsiderationMeasure(**atoms)
    for msg in validate_consideration(consideration):
        problems.append(f"scenario.consideration: {msg}")

    prices = PricePair(
        _num(effective, "scenario.prices.x_i"), _num(effective, "scenario.prices.x_ii")
    )

    numeric = NumericOptions(
        eps_frac=_num(effective, "numeric.eps_frac", lo=0.0, open_lo=True),
        fd_step_frac=_num(effective, "numeric.fd_step_frac", lo=0.0, open_lo=True),
        fd_step_cut_frac=(
            None
            if _get(effective, "numeric.fd_step_cut_frac") is None
            else _num(effective, "numeric.fd_step_cut_frac", lo=0.0, open_lo=True)
        ),
        slack_min=_num(effective, "numeric.slack_min", lo=0.0),
        invert_tol=_num(effective, "numeric.invert_tol", lo=0.0, open_lo=True),
        shrink_eps_at_edges=_bool(effective, "numeric.shrink_eps_at_edges"),
    )

    def price_range(path: str) -> tuple[float, float]:
        v = _get(effective, path)
        if (
            not isinstance(v, (list, tuple))
            or len(v) != 2
            or any(isinstance(e, bool) or not isinstance(e, (int, float)) for e in v)
        ):
            raise ValidationError(f"{path}: expected [low, high], got {v!r}")
        lo, hi = float(v[0]), float(v[1])
        if not lo < hi:
            problems.append(f"{path}: need low < high, got [{lo}, {hi}]")
        if lo < x_min or hi > x_max:
            problems.append(f"{path}: [{lo}, {hi}] leaves the admissible box [{x_min}, {x_max}]")
        return lo, hi

    simulate = SimulateOptions(
        n_agents=_int(effective, "run.simulate.n_agents", lo=1),
        truth_columns=_bool(effective, "run.simulate.truth_columns"),
        price_mode=_str(effective, "run.simulate.price_mode", choices=_PRICE_MODES),
        price_file=(
            None
            if _get(effective, "run.simulate.price_file") is None
            else _str(effective, "run.simulate.price_file")
        ),
        x_i_range=price_range("run.simulate.x_i_range"),
        x_ii_range=price_range("run.simulate.x_ii_range"),
    )
    if simulate.price_mode == "file" and not simulate.price_file:
        problems.append("run.simulate.price_file: required when price_mode is 'file'")

    stages_raw = _get(effective, "run.identify.stages")
    if not isinstance(stages_raw, (list, tuple)) or not stages_raw:
        problems.append(f"run.identify.stages: expected a non-empty list, got {stages_raw!r}")
        stages: tuple[str, ...] = ()
    else:
        bad = [s for s in stages_raw if s not in _STAGES]
        if bad:
            problems.append(f"run.identify.stages: unknown stage {bad[0]!r} (know {list(_STAGES)})")
        if len(set(stages_raw)) != len(stages_raw):
            problems.append("run.identify.stages: duplicate entries")
        stages = tuple(s for s in _STAGES if s in stages_raw)

    identify = IdentifyOptions(
        grid_size=_int(effective, "run.identify.grid_size", lo=2),
        grid_margin_frac=_num(
            effective, "run.identify.grid_margin_frac", lo=0.0, hi=0.5, open_lo=True, open_hi=True
        ),
        min_coverage=_num(effective, "run.identify.min_coverage", lo=0.0, hi=1.0, open_lo=True),
        copula_grid_size=_int(effective, "run.identify.copula_grid_size", lo=1),
        share_floor=_num(effective, "run.identify.share_floor", lo=0.0, hi=1.0, open_hi=True),
        stages=stages,
    )

    region = RegionOptions(grid_size=_int(effective, "run.region.grid_size", lo=1))

    sweep_values = _get(effective, "run.sweep.values")
    if not isinstance(sweep_values, (list, tuple)):
        problems.append(f"run.sweep.values: expected a list, got {sweep_values!r}")
        sweep_values = []
    sweep = SweepOptions(
        parameter=_str(effective, "run.sweep.parameter"), values=tuple(sweep_values)
    )

    run = RunOptions(
        seed=_int(effective, "run.seed", lo=0, hi=2**64 - 1),
        workers=_int(effective, "run.workers", lo=1),
        out_dir=_str(effective, "run.out_dir"),
        simulate=simulate,
        identify=identify,
        region=region,
        sweep=sweep,
    )

    if problems:
        raise ValidationError("; ".join(problems))

    ts = ThresholdSystem(
        menu_i=menus["menu_i"],
        menu_ii=menus["menu_ii"],
        nu_bar=nu_bar,
        omega_bar=omega_bar,
        x_min=x_min,
        x_max=x_max,
    )
    scenario = Scenario(ts=ts, mix=MixtureSpec(alpha, beta, f_dist, g_dist, copula),
                        consideration=consideration, prices=prices)
    errors = scenario.validate()
    if errors:
        raise ValidationError("; ".join(f"scenario: {e}" for e in errors))

    return ExperimentConfig(
        scenario=scenario,
        numeric=numeric,
        run=run,
        effective=effective,
        config_hash=config_hash(effective),
    )


# Execution context, not experiment identity: these cannot change any result,
# so runs differing only here must hash (and therefore compare) equal.
_UNHASHED = (("run", "workers"), ("run", "out_dir"))


def config_hash(effective: dict) -> str:
    """Stable identity of an effective config: sha256 of its canonical JSON."""
    tree = copy.deepcopy(effective)
    for *parents, leaf in _UNHASHED:
        node = tree
        for key in parents:
            node = node[key]
        node.pop(leaf, None)
    blob = json.dumps(tree, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    """Read, merge, override, and validate an experiment config.

    ``overrides`` maps dotted paths to values (command-line flags land
    here); they are applied after the defaults merge so they are part of
    the effective config and therefore of the provenance hash.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"malformed config{where}: {problem}") from exc
    if raw is None:
        raw = {}
    effective = _merge(DEFAULTS, raw, "")
    for dotted, value in (overrides or {}).items():
        set_by_path(effective, dotted, value)
    return _build(effective)


def from_effective(effective: dict) -> ExperimentConfig:
    """Re-validate an already merged tree (sweeps mutate and rebuild)."""
    return _build(copy.deepcopy(effective))
