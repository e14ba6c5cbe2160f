"""Command-line entry point: ``mtpshift {analyze,simulate,diagnose-shift,screen}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from pathlib import Path

import pandas as pd

from . import panel, sim
from .config import ConfigError, RunConfig, SimulateConfig, load_config
from .density_ratio import PositivityError
from .tmle import TargetingError

log = logging.getLogger("mtpshift")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _jobs(args, cfg: RunConfig) -> int:
    if args.jobs is not None:
        return args.jobs
    if cfg.jobs is not None:
        return cfg.jobs
    return os.cpu_count() or 1


def _require_input(cfg: RunConfig):
    if cfg.input_path is None or cfg.schema is None:
        raise CommandError(EXIT_CONFIG, "this command needs an 'input' section with path and schema")


def _check_header(cfg: RunConfig):
    with open(cfg.input_path, newline="") as fh:
        header = next(csv.reader(fh, delimiter=cfg.schema.delimiter), [])
    missing = [c for c in dict.fromkeys(cfg.schema.required) if c not in header]
    if missing:
        raise CommandError(EXIT_DATA, f"missing required columns: {', '.join(missing)}")


def _load_panel(cfg: RunConfig):
    daily = panel.ingest(cfg.input_path, cfg.schema)
    rep = daily.report
    if rep.rejected:
        log.warning("%d of %d rows rejected", len(rep.rejected), rep.n_read)
    if rep.negative_revisions:
        log.warning("%d negative cumulative-count revisions floored at 0", rep.negative_revisions)
    weekly, summary = panel.prepare_weekly(daily, cfg.lead_weeks, cfg.lag_mode, cfg.population_threshold)
    log.info("population filter >= %g: kept %d counties, excluded %d (%.1f%% of population kept)",
             summary.threshold, summary.kept, summary.excluded, 100 * summary.population_share)
    return weekly


def cmd_analyze(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    _require_input(cfg)
    if not cfg.policies:
        raise CommandError(EXIT_CONFIG, "analyze needs at least one entry under 'policies'")
    weekly = _load_panel(cfg)
    weeks = panel.analysis_weeks(weekly, cfg.study_window)
    slices = [
        panel.SliceSpec(w, idx, pol, cfg.lead_weeks, cfg.confounder_mode, cfg.lag_mode)
        for idx, pol in cfg.policies.items()
        for w in weeks
    ]
    log.info("%d slices (%d weeks x %d indices)", len(slices), len(weeks), len(cfg.policies))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        result = panel.run_grid(weekly, slices, cfg.outcome_library, cfg.ratio_library, cfg.V, cfg.seed,
                                cfg.min_slice_n, cfg.truncation, cfg.study_window, jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel.write_results(result, out_dir / "results.csv", out_dir / "results.json")
    if result.skipped:
        with open(out_dir / "skipped.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["slice", "reason"])
            wr.writerows(result.skipped)
    df = result.to_frame()
    print(f"{len(df)} result rows ({len(result.skipped)} slices skipped) -> {out_dir / 'results.csv'}")
    if len(df):
        summ = df.pivot_table(index=["index", "week_start"], columns="estimator", values="psi_delta")
        print(summ.round(3).to_string())
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    sc = cfg.simulate or SimulateConfig()
    truth = sim.true_value(sc.dgp, sc.policy, sc.truth_draws, seed=cfg.seed)
    log.info("truth psi_delta = %.6g (mc se %.2g)", truth.psi_delta, truth.mc_se_delta)
    reports = []
    sizes = sc.sizes or (sc.n,)
    for c_i, cell in enumerate(sc.cells):
        q_lib, r_lib = sim.DR_CELLS[cell]
        est_cfg = sim.libraries(q_lib, r_lib, cfg.V)
        for s_i, n in enumerate(sizes):
            log.info("cell %s, n=%d, R=%d", cell, n, sc.R)
            rep = sim.replicate(sc.dgp, sc.policy, est_cfg, sc.R, n, seed=cfg.seed + 1000 * c_i + s_i,
                                truth=truth.psi_delta, cell=cell, jobs=jobs)
            reports.append(rep)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim.write_reports(reports, out_dir / "simulation.csv", out_dir / "simulation.json")
    print(pd.DataFrame([r.row() for r in reports]).to_string(index=False))
    failed = [r for r in reports if not r.ok]
    if failed:
        raise CommandError(EXIT_ESTIMATION, f"{len(failed)} report(s) exceeded the 5% replication-failure limit")
    return EXIT_OK


def cmd_diagnose_shift(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    _require_input(cfg)
    if not cfg.shift_candidates:
        raise CommandError(EXIT_CONFIG, "diagnose-shift needs 'shift_candidates'")
    weekly = _load_panel(cfg)
    weeks = panel.analysis_weeks(weekly, cfg.study_window)
    rows, picks = [], []
    for idx, cands in cfg.shift_candidates.items():
        worst = [0.0] * len(cands)
        for w in weeks:
            spec = panel.SliceSpec(w, idx, cands[0], cfg.lead_weeks, cfg.confounder_mode, cfg.lag_mode)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                if cfg.confounder_mode == "pooled-top8":
                    covs = panel.screen_covariates(weekly, idx, "pooled-top8", window=cfg.study_window)
                else:
                    covs = panel.screen_covariates(weekly, idx, cfg.confounder_mode, week=w)
                sd = panel.slice_frame(weekly, spec, covs)
                if sd is None or sd.frame.n < max(cfg.min_slice_n, cfg.V):
                    continue
                diag = panel.diagnose_shift(sd.frame, cands, cfg.ratio_library, cfg.V,
                                            panel._cell_seed(cfg.seed, spec.key, "diagnose"), cfg.ratio_threshold)
            for i, (pol, m) in enumerate(zip(cands, diag.max_ratio)):
                worst[i] = max(worst[i], m)
                rows.append({"index": idx, "week_start": str(w), "policy_kind": pol.kind,
                             "policy_value": pol.value, "max_density_ratio": m})
        ok = [i for i, m in enumerate(worst) if m < cfg.ratio_threshold]
        sel = cands[ok[-1]] if ok else cands[0]
        if not ok:
            log.warning("%s: no candidate keeps max density ratio below %g", idx, cfg.ratio_threshold)
        picks.append({"index": idx, "policy_kind": sel.kind, "policy_value": sel.value,
                      "worst_max_density_ratio": worst[cands.index(sel)], "qualified": bool(ok)})
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(out_dir / "shift_diagnostics.csv", index=False, lineterminator="\n")
    sel_df = pd.DataFrame(picks)
    sel_df.to_csv(out_dir / "shift_selection.csv", index=False, lineterminator="\n")
    print(sel_df.to_string(index=False))
    return EXIT_OK


def cmd_screen(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    _require_input(cfg)
    weekly = _load_panel(cfg)
    rows = []
    indices = list(cfg.policies) or list(cfg.schema.indices)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for idx in indices:
            if cfg.confounder_mode == "pooled-top8":
                groups = [("pooled", panel.screen_covariates(weekly, idx, "pooled-top8", window=cfg.study_window))]
            else:
                groups = [(str(w), panel.screen_covariates(weekly, idx, cfg.confounder_mode, week=w))
                          for w in panel.analysis_weeks(weekly, cfg.study_window)]
            for week, covs in groups:
                for rank, c in enumerate(covs, 1):
                    rows.append({"index": idx, "mode": cfg.confounder_mode, "week": week, "rank": rank,
                                 "covariate": c})
    out_dir.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows, columns=["index", "mode", "week", "rank", "covariate"])
    df.to_csv(out_dir / "screened_covariates.csv", index=False, lineterminator="\n")
    print(df.to_string(index=False))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "diagnose-shift": cmd_diagnose_shift,
    "screen": cmd_screen,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtpshift", description="Shift-policy TMLE analyses of county panels.")
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--jobs", type=int, help="concurrent workers (default: available CPUs)")
    ap.add_argument("--validate-only", action="store_true", help="check config and inputs, compute nothing")
    ap.add_argument("--output-dir", type=Path, help="override the config output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError(["--jobs must be a positive integer"])
        if args.command in ("analyze", "diagnose-shift", "screen"):
            _require_input(cfg)
            _check_header(cfg)
        if args.validate_only:
            print(f"{args.config}: configuration valid for {args.command}")
            return EXIT_OK
        out_dir = args.output_dir or cfg.output_dir
        return COMMANDS[args.command](cfg, out_dir, _jobs(args, cfg))
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except panel.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PositivityError, TargetingError, RuntimeError, ArithmeticError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
