"""Command-line front end: simulate, identify, region, sweep.

Each subcommand reads one YAML experiment config (defaults apply when the
flag is omitted), writes its outputs under the run's output directory, and
stamps every file with the config hash, package version, and seed so a
result can always be traced back to the exact inputs that produced it.

Exit codes: 0 success, 2 validation problem (config, flags, or dataset
contents), 3 the recovery had too little feasible coverage to report an
estimate, 4 filesystem trouble.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .choice import ChoiceDraws, draw_choices
from .config import (
    DEFAULTS,
    ConfigError,
    ExperimentConfig,
    from_effective,
    load_config,
    set_by_path,
)
from .identify import EmpiricalEvaluator, evaluation_design, run_identification
from .numeric import SeededStream

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_COVERAGE = 3
EXIT_IO = 4

DATASET_COLUMNS = ("agent_id", "x_I", "x_II", "choice_I", "choice_II")
TRUTH_COLUMNS = ("type", "nu", "omega", "consider_I", "consider_II")

# Stream ids per purpose, so adding a consumer never shifts existing draws.
_STREAM_PRICES = 1
_STREAM_AGENTS = 2


# ---------------------------------------------------------------------------
# provenance-stamped output


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.run.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stamp(cfg: ExperimentConfig) -> str:
    return f"# config_hash={cfg.config_hash} version={__version__} seed={cfg.run.seed}"


def _write_frame(path: Path, frame: pd.DataFrame, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_stamp(cfg) + "\n")
        frame.to_csv(fh, index=False, lineterminator="\n")
    print(f"wrote {path} ({len(frame)} rows)")


def _json_safe(obj):
    """NaN/inf have no JSON spelling; map them to null, element-wise."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, payload: dict, cfg: ExperimentConfig) -> None:
    body = {
        "config_hash": cfg.config_hash,
        "version": __version__,
        "seed": cfg.run.seed,
        **payload,
    }
    path.write_text(json.dumps(_json_safe(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def _write_effective(out: Path, cfg: ExperimentConfig) -> None:
    _write_json(out / "effective_config.json", {"effective": cfg.effective}, cfg)


def _read_csv(path: str) -> pd.DataFrame:
    """Read a stamped CSV; parse failures count as validation, not I/O.

    Prices written by one stage are looked up, bit for bit, by the next, so
    parsing must invert repr exactly; the default converter can be 1 ulp off.
    """
    try:
        return pd.read_csv(path, comment="#", float_precision="round_trip")
    except pd.errors.ParserError as exc:
        raise ConfigError(f"{path}: not a readable CSV ({exc})") from exc
    except (pd.errors.EmptyDataError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _require_columns(frame: pd.DataFrame, needed, label: str) -> None:
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise ConfigError(f"{label} is missing columns {missing}; has {list(frame.columns)}")


@contextmanager
def _pool_mapper(workers: int):
    """Order-preserving map over a process pool; None means plain map."""
    if workers <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield ex.map


# ---------------------------------------------------------------------------
# simulate


def _draws_frame(draws: ChoiceDraws, truth: bool) -> pd.DataFrame:
    n = len(draws.choice_i)
    cols = {
        "agent_id": np.arange(n, dtype=np.int64),
        "x_I": draws.x_i,
        "x_II": draws.x_ii,
        "choice_I": draws.choice_i.astype(np.int64),
        "choice_II": draws.choice_ii.astype(np.int64),
    }
    if truth:
        cols["type"] = draws.type_code
        cols["nu"] = draws.nu
        cols["omega"] = draws.omega
        cols["consider_I"] = draws.consider_i
        cols["consider_II"] = draws.consider_ii
    return pd.DataFrame(cols)


def _concat_draws(parts: list[ChoiceDraws]) -> ChoiceDraws:
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
    return ChoiceDraws(
        type_code=cat("type_code"),
        nu=cat("nu"),
        omega=cat("omega"),
        consider_i=cat("consider_i"),
        consider_ii=cat("consider_ii"),
        choice_i=cat("choice_i"),
        choice_ii=cat("choice_ii"),
        x_i=cat("x_i"),
        x_ii=cat("x_ii"),
    )


def cmd_simulate(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    sc = cfg.scenario
    sim = cfg.run.simulate
    seed = cfg.run.seed
    n = sim.n_agents

    if sim.price_mode == "fixed":
        draws = draw_choices(
            sc.ts, sc.mix, sc.consideration,
            sc.prices.x_i, sc.prices.x_ii, n, SeededStream(seed, _STREAM_AGENTS),
        )
    elif sim.price_mode == "rectangle":
        price_stream = SeededStream(seed, _STREAM_PRICES)
        lo, hi = sim.x_i_range
        x_i = lo + (hi - lo) * price_stream.uniform(size=n)
        lo, hi = sim.x_ii_range
        x_ii = lo + (hi - lo) * price_stream.uniform(size=n)
        draws = draw_choices(
            sc.ts, sc.mix, sc.consideration, x_i, x_ii, n, SeededStream(seed, _STREAM_AGENTS)
        )
    else:  # "file": replicate agents at each distinct design price pair
        design = _read_csv(sim.price_file)
        _require_columns(design, ("x_I", "x_II"), sim.price_file)
        pairs = np.unique(design[["x_I", "x_II"]].to_numpy(dtype=float), axis=0)
        if len(pairs) == 0:
            raise ConfigError(f"{sim.price_file}: no price pairs")
        root = SeededStream(seed, _STREAM_AGENTS)
        base, rem = divmod(n, len(pairs))
        parts = []
        for k, (x_i, x_ii) in enumerate(pairs):
            n_k = base + (1 if k < rem else 0)
            if n_k == 0:
                continue
            parts.append(
                draw_choices(
                    sc.ts, sc.mix, sc.consideration,
                    float(x_i), float(x_ii), n_k, root.substream(k),
                )
            )
        draws = _concat_draws(parts)

    out = _out_dir(cfg)
    _write_frame(out / "dataset.csv", _draws_frame(draws, sim.truth_columns), cfg)
    _write_effective(out, cfg)
    share_11 = float(np.mean((draws.choice_i == 1) & (draws.choice_ii == 1)))
    print(f"simulate: {n} agents, mode={sim.price_mode}, share(1,1)={share_11:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# identify


def _design_frame(cfg: ExperimentConfig, stages) -> pd.DataFrame:
    rows = []
    for stage, family in (("cara_side", "eu"), ("dual_side", "dual")):
        if stage not in stages:
            continue
        points = evaluation_design(
            cfg.scenario.ts, cfg.identify_grid(family), family, cfg.kink_options(family)
        )
        rows.extend(
            {
                "stage": p.stage,
                "level": p.level,
                "side": p.side,
                "arm": p.arm,
                "x_I": p.x_i,
                "x_II": p.x_ii,
            }
            for p in points
        )
    return pd.DataFrame(rows, columns=["stage", "level", "side", "arm", "x_I", "x_II"])


def _side_frames(side) -> tuple[pd.DataFrame, pd.DataFrame]:
    gap = pd.DataFrame(
        {
            "v": side.grid,
            "gap": side.gap,
            "feasible": side.feasible.astype(np.int64),
            "slack": side.slack,
        }
    )
    cdf_name = "F_hat" if side.family == "eu" else "G_hat"
    cdf = pd.DataFrame({"v": side.grid, cdf_name: side.cdf_hat})
    return gap, cdf


def cmd_identify(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    sc = cfg.scenario
    ident = cfg.run.identify
    requested = list(ident.stages)
    stages = list(requested)
    out = _out_dir(cfg)

    # The probe list is a pure function of the config, so it can be published
    # before any probability is evaluated (and drives dataset collection).
    _write_frame(out / "design.csv", _design_frame(cfg, stages), cfg)

    prob_fn = None
    if args.dataset is not None:
        data = _read_csv(args.dataset)
        _require_columns(data, DATASET_COLUMNS, args.dataset)
        prob_fn = EmpiricalEvaluator(
            data["x_I"], data["x_II"], data["choice_I"], data["choice_II"]
        )
        # A fixed dataset can only answer queries at its own price pairs; the
        # dependence stage needs pairs located at estimated quantiles.
        stages = [s for s in stages if s != "copula"]
        print(f"identify: dataset mode, {len(data)} agents at {len(prob_fn)} price pairs")

    with _pool_mapper(cfg.run.workers) as mapper:
        res = run_identification(
            sc,
            prob_fn=prob_fn,
            cara_grid=cfg.identify_grid("eu"),
            dual_grid=cfg.identify_grid("dual"),
            opts_eu=cfg.kink_options("eu"),
            opts_dual=cfg.kink_options("dual"),
            min_coverage=ident.min_coverage,
            copula_grid_size=ident.copula_grid_size,
            share_floor=ident.share_floor,
            stages=tuple(stages),
            mapper=mapper,
        )
    if args.dataset is not None and "copula" in requested:
        res.stage_errors["copula"] = (
            "skipped: a fixed dataset cannot answer quantile-located price queries"
        )

    if res.cara_side is not None:
        gap, cdf = _side_frames(res.cara_side)
        _write_frame(out / "gap_cara.csv", gap, cfg)
        _write_frame(out / "F_hat.csv", cdf, cfg)
    if res.dual_side is not None:
        gap, cdf = _side_frames(res.dual_side)
        _write_frame(out / "gap_dual.csv", gap, cfg)
        _write_frame(out / "G_hat.csv", cdf, cfg)
    if res.copula_cells:
        _write_frame(
            out / "copula.csv",
            pd.DataFrame(
                {
                    "u": [c.u for c in res.copula_cells],
                    "v": [c.v for c in res.copula_cells],
                    "C_hat": [c.c_hat for c in res.copula_cells],
                    "C_true": [c.c_true for c in res.copula_cells],
                }
            ),
            cfg,
        )

    _write_json(
        out / "summary.json",
        {
            "alpha_hat": res.alpha_hat,
            "alpha_times_O_hat": res.alpha_times_O_hat,
            "beta_hat": res.beta_hat,
            "beta_times_O_hat": res.beta_times_O_hat,
            "coverage_F": res.coverage_f,
            "coverage_G": res.coverage_g,
            "full_attention": res.full_attention,
            "stage_errors": res.stage_errors,
        },
        cfg,
    )
    _write_effective(out, cfg)

    for stage in requested:
        if stage in res.stage_errors:
            print(f"identify: {stage}: {res.stage_errors[stage]}", file=sys.stderr)
    if res.alpha_times_O_hat is not None:
        print(f"identify: cara weight x attention = {res.alpha_times_O_hat:.6f} "
              f"(coverage {res.coverage_f:.3f})")
    if res.beta_times_O_hat is not None:
        print(f"identify: dual weight x attention = {res.beta_times_O_hat:.6f} "
              f"(coverage {res.coverage_g:.3f})")
    if res.copula_cells:
        err = max(
            abs(c.c_hat - c.c_true) for c in res.copula_cells if c.feasible
        )
        print(f"identify: dependence recovered on {len(res.copula_cells)} cells, "
              f"max |error| = {err:.2e}")

    side_failed = any(
        s in res.stage_errors for s in ("cara_side", "dual_side") if s in requested
    )
    return EXIT_COVERAGE if side_failed else EXIT_OK


# ---------------------------------------------------------------------------
# region


def cmd_region(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    sc = cfg.scenario
    n = cfg.run.region.grid_size
    cut_eu_i, cut_eu_ii, cut_dual_i, cut_dual_ii = sc.ts.all_cuts(sc.prices)

    nu = np.linspace(0.0, sc.ts.nu_bar, n)
    omega = np.linspace(0.0, sc.ts.omega_bar, n)
    nu_grid, om_grid = np.meshgrid(nu, omega, indexing="ij")

    frames = []
    for code in ("eu", "dual", "switch"):
        # Same tie rule as the scalar classifier: indifference picks option 1.
        if code == "eu":
            first, second = nu_grid <= cut_eu_i, nu_grid <= cut_eu_ii
        elif code == "dual":
            first, second = om_grid <= cut_dual_i, om_grid <= cut_dual_ii
        else:
            first, second = nu_grid <= cut_eu_i, om_grid <= cut_dual_ii
        bundle = np.char.add(np.where(first, "1", "2"), np.where(second, "1", "2"))
        frames.append(
            pd.DataFrame(
                {
                    "nu": nu_grid.ravel(),
                    "omega": om_grid.ravel(),
                    "type": code,
                    "bundle": bundle.ravel(),
                }
            )
        )

    out = _out_dir(cfg)
    _write_frame(out / "regions.csv", pd.concat(frames, ignore_index=True), cfg)
    _write_effective(out, cfg)
    print(f"region: {n}x{n} lattice at prices "
          f"({sc.prices.x_i:.6g}, {sc.prices.x_ii:.6g}) for 3 types")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


_SWEEP_COLUMNS = [
    "parameter", "value", "config_hash",
    "alpha_hat", "alpha_times_O_hat", "beta_hat", "beta_times_O_hat",
    "coverage_F", "coverage_G", "error",
]


def cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    sw = cfg.run.sweep
    out = _out_dir(cfg)
    if not sw.parameter or not sw.values:
        print("sweep: run.sweep.parameter / run.sweep.values are empty; nothing to do",
              file=sys.stderr)
        _write_frame(out / "sweep.csv", pd.DataFrame(columns=_SWEEP_COLUMNS), cfg)
        return EXIT_OK

    rows = []
    with _pool_mapper(cfg.run.workers) as mapper:
        for value in sw.values:
            row = {"parameter": sw.parameter, "value": value, "error": ""}
            try:
                effective = copy.deepcopy(cfg.effective)
                set_by_path(effective, sw.parameter, value)
                sub = from_effective(effective)
                res = run_identification(
                    sub.scenario,
                    cara_grid=sub.identify_grid("eu"),
                    dual_grid=sub.identify_grid("dual"),
                    opts_eu=sub.kink_options("eu"),
                    opts_dual=sub.kink_options("dual"),
                    min_coverage=sub.run.identify.min_coverage,
                    copula_grid_size=sub.run.identify.copula_grid_size,
                    share_floor=sub.run.identify.share_floor,
                    stages=tuple(sub.run.identify.stages),
                    mapper=mapper,
                )
                row.update(
                    config_hash=sub.config_hash,
                    alpha_hat=res.alpha_hat,
                    alpha_times_O_hat=res.alpha_times_O_hat,
                    beta_hat=res.beta_hat,
                    beta_times_O_hat=res.beta_times_O_hat,
                    coverage_F=res.coverage_f,
                    coverage_G=res.coverage_g,
                    error="; ".join(f"{k}: {v}" for k, v in res.stage_errors.items()),
                )
            except ConfigError as exc:
                row["error"] = str(exc)
            rows.append(row)
            label = row["error"] or f"alpha_x_O={row.get('alpha_times_O_hat')}"
            print(f"sweep: {sw.parameter}={value}: {label}")

    frame = pd.DataFrame(rows, columns=_SWEEP_COLUMNS)
    _write_frame(out / "sweep.csv", frame, cfg)
    _write_effective(out, cfg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.workers is not None:
        overrides["run.workers"] = args.workers
    if args.out is not None:
        overrides["run.out_dir"] = args.out
    if getattr(args, "truth_columns", None):
        overrides["run.simulate.truth_columns"] = True
    return overrides


def _load(args: argparse.Namespace) -> ExperimentConfig:
    overrides = _collect_overrides(args)
    if args.config is not None:
        return load_config(args.config, overrides)
    effective = copy.deepcopy(DEFAULTS)
    for dotted, value in overrides.items():
        set_by_path(effective, dotted, value)
    return from_effective(effective)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxrisk",
        description="Simulate and identify context-dependent risk preference mixtures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="PATH", default=None,
                       help="YAML experiment config (package defaults when omitted)")
        p.add_argument("--seed", type=int, default=None, metavar="U64",
                       help="override run.seed")
        p.add_argument("--workers", type=int, default=None, metavar="N",
                       help="override run.workers (process count)")
        p.add_argument("--out", metavar="DIR", default=None,
                       help="override run.out_dir")

    p = sub.add_parser("simulate", help="draw an agent-level choice dataset")
    common(p)
    p.add_argument("--truth-columns", action="store_true", default=None,
                   help="append latent type / index / attention columns")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("identify", help="recover weights, cdfs, and dependence")
    common(p)
    p.add_argument("--dataset", metavar="PATH", default=None,
                   help="estimate from a simulated dataset instead of exact probabilities")
    p.set_defaults(handler=cmd_identify)

    p = sub.add_parser("region", help="tabulate chosen bundles over the index lattice")
    common(p)
    p.set_defaults(handler=cmd_region)

    p = sub.add_parser("sweep", help="repeat identification along one config axis")
    common(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.handler(cfg, args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyError as exc:
        # The empirical evaluator refuses price pairs absent from the data.
        print(f"dataset mismatch: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
