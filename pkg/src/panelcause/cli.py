"""Command-line front end.

Commands mirror the analysis pipeline: ``ingest`` validates match logs,
``panel`` and ``classify`` build derived datasets, ``sc`` runs the
synthetic-control estimator and its robustness checks, ``did att`` runs
the player-level event study, ``decompose`` separates the simultaneous
treatments, and ``simulate`` draws ground-truth panels. Every command
writes JSON results, tidy plot-data CSVs, rendered figures, and a run
manifest into ``--out``; a config file can preset options, with flags
taking precedence.

Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, report
from .dataio import (
    REQUIRED_COLUMNS,
    build_character_panel,
    build_player_ledger,
    classify_players,
    group_counts,
    group_daily_means,
    load_matches,
    read_ledger,
    write_ledger,
)
from .decomp import decompose
from .did import att_series, build_did_panel
from .errors import NumericalError, ValidationError
from .manifest import RunManifest
from .panel import read_panel, write_panel
from .robustness import backdate, leave_one_out, placebo_in_space
from .scm import fit
from .simgen import SimConfig, generate
from .smooth import SmoothConfig

JSON_SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _sanitize(obj):
    """Make a payload JSON-safe: numpy -> python, non-finite -> None."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, dt.date):
        return obj.isoformat()
    return obj


def _write_json(path: Path, payload: dict) -> Path:
    payload = {"schema_version": JSON_SCHEMA_VERSION, **payload}
    path.write_text(
        json.dumps(_sanitize(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in rows:
            writer.writerow(["" if v is None else v for v in r])
    return path


def _fmt(value) -> str | float:
    """Float cell formatting for plot CSVs: full round-trip precision."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return repr(v) if math.isfinite(v) else ""
    return value


def _parse_window(text: str) -> tuple[dt.date, dt.date]:
    try:
        lo, hi = text.split(":")
        return dt.date.fromisoformat(lo), dt.date.fromisoformat(hi)
    except ValueError:
        raise ValidationError(f"window must be YYYY-MM-DD:YYYY-MM-DD, got {text!r}") from None


def _parse_schema(text: str | None) -> dict[str, str] | None:
    if not text:
        return None
    mapping = {}
    for pair in text.split(","):
        if "=" not in pair:
            raise ValidationError(f"schema entries must be canonical=file, got {pair!r}")
        key, value = pair.split("=", 1)
        if key not in REQUIRED_COLUMNS:
            raise ValidationError(f"unknown schema column {key!r}")
        mapping[key] = value
    return mapping


def _split_list(text: str | None) -> list[str]:
    return [item.strip() for item in (text or "").split(",") if item.strip()]


class _Config:
    """Layered option lookup: CLI flag, then config file, then default."""

    def __init__(self, path: str | None):
        self.parser = configparser.ConfigParser()
        if path:
            if not Path(path).exists():
                raise ValidationError(f"config file not found: {path}")
            self.parser.read(path)

    def get(self, flag_value, section: str, key: str, default, cast=str):
        if flag_value is not None:
            return flag_value
        if self.parser.has_option(section, key):
            raw = self.parser.get(section, key)
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return default


def _smoothing_config(args, config: _Config) -> SmoothConfig | None:
    enabled = config.get(
        True if args.smooth else None, "smoothing", "enabled", False, bool
    )
    has_flag_overrides = any(
        getattr(args, name) is not None
        for name in ("smooth_bandwidth", "smooth_kernel", "smooth_boundary")
    )
    if not enabled and not has_flag_overrides:
        return None
    return SmoothConfig(
        bandwidth=config.get(args.smooth_bandwidth, "smoothing", "bandwidth", 7.0, float),
        kernel=config.get(args.smooth_kernel, "smoothing", "kernel", "gaussian"),
        boundary_mode=config.get(
            args.smooth_boundary, "smoothing", "boundary_mode", "split_at_t_pre"
        ),
    )


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, params: dict, inputs, outputs, seed=None) -> None:
    out = Path(args.out)
    manifest = RunManifest.create(
        command=[args.command_path] + list(args.raw_argv),
        params=params,
        inputs=[p for p in inputs if p is not None],
        seed=seed,
        tool_version=__version__,
        outputs=sorted(str(p) for p in outputs),
    )
    manifest.write(out / "manifest.json")


def _fit_series_rows(times, observed, synthetic):
    return [
        [day.isoformat(), _fmt(obs), _fmt(syn)]
        for day, obs, syn in zip(times, observed, synthetic)
    ]


def _fit_payload(f) -> dict:
    return {
        "treated_unit": f.treated_unit,
        "t_pre": f.t_pre,
        "zeta": f.weights.zeta,
        "weights": {
            label: float(w) for label, w in zip(f.weights.donor_labels, f.weights.omega)
        },
        "objective_value": f.weights.objective_value,
        "effects": list(f.effects),
        "avg_effect": f.avg_effect,
        "variance": f.variance,
        "ci_95": list(f.ci_95) if f.ci_95 is not None else None,
        "pre_rmse": f.pre_rmse,
        "post_rmse": f.post_rmse,
        "pre_treatment_mean": f.pre_treatment_mean,
        "pct_change": f.pct_change,
        "skipped_placebos": list(f.skipped_placebos),
    }


# ---------------------------------------------------------------------------
# command handlers


def cmd_ingest(args, config: _Config) -> None:
    out = _outdir(args)
    window = _parse_window(args.window) if args.window else None
    schema = _parse_schema(args.schema)
    loaded = load_matches(args.matches, schema=schema, window=window)
    records = loaded.records

    clean = out / "matches_clean.csv"
    with open(clean, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS)
        for r in records:
            writer.writerow(
                [r.match_id, r.date.isoformat(), r.region, r.player_id, r.character,
                 r.role, int(r.win), r.kills, r.deaths, r.assists, _fmt(r.gold)]
            )
    regions: dict[str, int] = {}
    for r in records:
        regions[r.region] = regions.get(r.region, 0) + 1
    summary = _write_json(out / "ingest.json", {
        "n_rows": len(records),
        "dropped_out_of_window": loaded.dropped_out_of_window,
        "n_matches": len({r.match_id for r in records}),
        "n_players": len({r.player_id for r in records}),
        "n_characters": len({r.character for r in records}),
        "first_day": min((r.date for r in records), default=None),
        "last_day": max((r.date for r in records), default=None),
        "rows_by_region": regions,
    })
    params = {"matches": str(args.matches), "window": args.window, "schema": args.schema}
    _finish(args, params, [args.matches], [clean, summary])


def cmd_panel(args, config: _Config) -> None:
    out = _outdir(args)
    window = _parse_window(args.window) if args.window else None
    loaded = load_matches(args.matches, schema=_parse_schema(args.schema), window=window)
    region_filter = set(_split_list(args.region)) or None
    panel = build_character_panel(
        loaded.records,
        metric=args.metric,
        region_filter=region_filter,
        t_pre_date=dt.date.fromisoformat(args.t_pre_date),
        exclude_units=set(_split_list(args.exclude)),
        treated_unit=args.treated,
        lgb_units=set(_split_list(args.lgb)),
        win_rate_fill=args.win_rate_fill,
    )
    csv_path, sidecar = write_panel(panel, out / "panel.csv")
    outputs = [csv_path, sidecar]
    if not args.no_figures:
        donor_idx = [panel.unit_index(u) for u in panel.donor_labels()]
        outputs.append(report.save_fit_figure(
            out / "panel.png", panel.times, panel.series(panel.treated_unit),
            panel.outcomes[donor_idx].mean(axis=0), panel.t_pre,
            title=f"{panel.treated_unit} vs donor-pool mean ({args.metric})",
        ))
    params = {k: getattr(args, k) for k in
              ("matches", "metric", "region", "t_pre_date", "exclude", "treated", "lgb",
               "win_rate_fill", "window")}
    _finish(args, params, [args.matches], outputs)


def cmd_classify(args, config: _Config) -> None:
    out = _outdir(args)
    window = _parse_window(args.window) if args.window else None
    loaded = load_matches(args.matches, schema=_parse_schema(args.schema), window=window)
    ledger = build_player_ledger(
        loaded.records, focal=args.focal, t_pre_date=dt.date.fromisoformat(args.t_pre_date)
    )
    classes = classify_players(
        ledger,
        focal_threshold_pct=args.threshold,
        min_pre_matches=args.min_pre_matches,
        moderate_cut_pct=args.moderate_cut,
    )
    ledger_csv, ledger_json = write_ledger(ledger, out / "ledger.csv")
    class_csv = _write_csv(
        out / "classifications.csv",
        ["player_id", "prior_user", "pre_focal_pickrate", "post_focal_pickrate",
         "reduction_pct", "group"],
        [[c.player_id, int(c.prior_user), _fmt(c.pre_focal_pickrate),
          _fmt(c.post_focal_pickrate), _fmt(c.reduction_pct), c.group] for c in classes],
    )
    means = {}
    outputs = [ledger_csv, ledger_json, class_csv]
    for outcome in ("pick_rate", "matches", "win_rate"):
        gm = group_daily_means(ledger, classes, outcome=outcome)
        means[outcome] = {"means": gm.means, "omitted_groups": list(gm.omitted_groups)}
        if not args.no_figures and gm.means:
            outputs.append(report.save_group_means_figure(
                out / f"group_means_{outcome}.png", gm
            ))
    summary = _write_json(out / "classify.json", {
        "focal": args.focal,
        "t_pre_date": args.t_pre_date,
        "group_counts": group_counts(classes),
        "n_prior_users": sum(1 for c in classes if c.prior_user),
        "group_daily_means": means,
    })
    outputs.append(summary)
    params = {k: getattr(args, k) for k in
              ("matches", "focal", "t_pre_date", "threshold", "min_pre_matches",
               "moderate_cut", "window")}
    _finish(args, params, [args.matches], outputs)


def _sc_common(args, config: _Config):
    panel = read_panel(args.panel)
    smoothing = _smoothing_config(args, config)
    zeta = config.get(args.zeta, "sc", "zeta", "zero")
    threads = config.get(args.threads, "sc", "threads", 1, int)
    return panel, smoothing, zeta, threads


def cmd_sc_fit(args, config: _Config) -> None:
    out = _outdir(args)
    panel, smoothing, zeta, threads = _sc_common(args, config)
    f = fit(panel, zeta=zeta, smoothing=smoothing, threads=threads)
    result = _write_json(out / "fit.json", _fit_payload(f))
    series_csv = _write_csv(
        out / "fit_series.csv", ["day", "actual", "synthetic"],
        _fit_series_rows(panel.times, f.observed, f.counterfactual),
    )
    outputs = [result, series_csv]
    if not args.no_figures:
        outputs.append(report.save_fit_figure(
            out / "fit_series.png", panel.times, f.observed, f.counterfactual, f.t_pre,
            title=f"Synthetic control: {f.treated_unit}",
        ))
        nonzero = f.weights.nonzero()
        if nonzero:
            outputs.append(report.save_weights_figure(out / "weights.png", nonzero))
    params = {"panel": str(args.panel), "zeta": str(zeta),
              "smoothing": smoothing.__dict__ if smoothing else None, "threads": threads}
    _finish(args, params, [args.panel], outputs)


def cmd_sc_placebo(args, config: _Config) -> None:
    out = _outdir(args)
    panel, smoothing, zeta, threads = _sc_common(args, config)
    min_pre_rmse = config.get(args.min_pre_rmse, "sc", "min_pre_rmse", 1.0, float)
    rep = placebo_in_space(
        panel, fit_config={"zeta": zeta}, min_pre_rmse=min_pre_rmse,
        smoothing=smoothing, threads=threads,
    )
    result = _write_json(out / "placebo.json", {
        "treated_unit": rep.treated_unit,
        "treated_rank": rep.treated_rank,
        "n_considered": rep.n_considered,
        "min_pre_rmse": rep.min_pre_rmse,
        "units": [
            {"unit": u.unit, "pre_rmse": u.pre_rmse, "post_rmse": u.post_rmse,
             "ratio": u.ratio, "passed_filter": u.passed_filter}
            for u in rep.units
        ],
        "skipped": list(rep.skipped),
    })
    ratio_csv = _write_csv(
        out / "rmse_ratios.csv", ["unit", "pre_rmse", "post_rmse", "ratio", "passed_filter"],
        [[u.unit, _fmt(u.pre_rmse), _fmt(u.post_rmse), _fmt(u.ratio), int(u.passed_filter)]
         for u in rep.units],
    )
    gap_rows = []
    for unit in sorted(rep.gap_series):
        for day, gap in zip(panel.times, rep.gap_series[unit]):
            gap_rows.append([day.isoformat(), unit, _fmt(gap)])
    gaps_csv = _write_csv(out / "placebo_gaps.csv", ["day", "unit", "gap"], gap_rows)
    outputs = [result, ratio_csv, gaps_csv]
    if not args.no_figures:
        outputs.append(report.save_rmse_ratio_figure(
            out / "rmse_ratios.png", rep.units, rep.treated_unit
        ))
        outputs.append(report.save_gaps_figure(
            out / "placebo_gaps.png", panel.times, rep.gap_series, rep.treated_unit, panel.t_pre
        ))
    params = {"panel": str(args.panel), "zeta": str(zeta), "min_pre_rmse": min_pre_rmse,
              "smoothing": smoothing.__dict__ if smoothing else None}
    _finish(args, params, [args.panel], outputs)


def cmd_sc_backdate(args, config: _Config) -> None:
    out = _outdir(args)
    panel, smoothing, zeta, _ = _sc_common(args, config)
    shift = config.get(args.shift, "sc", "shift", 10, int)
    bd = backdate(panel, shift_days=shift, fit_config={"zeta": zeta}, smoothing=smoothing)
    result = _write_json(out / "backdate.json", {
        "shift_days": bd.shift_days,
        "holdout_rmse": bd.holdout_rmse,
        "holdout_mean_effect": bd.holdout_mean_effect,
        "post_mean_effect": bd.post_mean_effect,
        "fit": _fit_payload(bd.fit),
    })
    t_pre_shifted = panel.t_pre - shift
    window_labels = (
        ["pre"] * t_pre_shifted
        + ["holdout"] * shift
        + ["post"] * (panel.n_times - panel.t_pre)
    )
    series_csv = _write_csv(
        out / "backdate_series.csv", ["day", "actual", "synthetic", "window"],
        [r + [w] for r, w in zip(
            _fit_series_rows(panel.times, bd.fit.observed, bd.fit.counterfactual),
            window_labels,
        )],
    )
    outputs = [result, series_csv]
    if not args.no_figures:
        outputs.append(report.save_fit_figure(
            out / "backdate_series.png", panel.times, bd.fit.observed, bd.fit.counterfactual,
            t_pre_shifted, title=f"Backdated fit (shift {shift}d): {bd.fit.treated_unit}",
        ))
    params = {"panel": str(args.panel), "zeta": str(zeta), "shift": shift,
              "smoothing": smoothing.__dict__ if smoothing else None}
    _finish(args, params, [args.panel], outputs)


def cmd_sc_loo(args, config: _Config) -> None:
    out = _outdir(args)
    panel, smoothing, zeta, _ = _sc_common(args, config)
    baseline = fit(panel, zeta=zeta, smoothing=smoothing, with_variance=False)
    results = leave_one_out(panel, fit_config={"zeta": zeta}, smoothing=smoothing)
    result = _write_json(out / "loo.json", {
        "baseline": _fit_payload(baseline),
        "drops": {label: _fit_payload(f) for label, f in sorted(results.items())},
    })
    rows = []
    for day, obs, syn in zip(panel.times, baseline.observed, baseline.counterfactual):
        rows.append([day.isoformat(), "actual", _fmt(obs)])
        rows.append([day.isoformat(), "synthetic", _fmt(syn)])
    for label in sorted(results):
        for day, value in zip(panel.times, results[label].counterfactual):
            rows.append([day.isoformat(), f"drop:{label}", _fmt(value)])
    series_csv = _write_csv(out / "loo_series.csv", ["day", "series", "value"], rows)
    outputs = [result, series_csv]
    if not args.no_figures:
        outputs.append(report.save_loo_figure(
            out / "loo_series.png", panel.times, baseline.observed, baseline.counterfactual,
            {k: f.counterfactual for k, f in results.items()}, panel.t_pre,
        ))
    params = {"panel": str(args.panel), "zeta": str(zeta),
              "smoothing": smoothing.__dict__ if smoothing else None}
    _finish(args, params, [args.panel], outputs)


def cmd_did_att(args, config: _Config) -> None:
    out = _outdir(args)
    ledger = read_ledger(args.panel)
    classes = classify_players(
        ledger,
        focal_threshold_pct=config.get(args.threshold, "did", "threshold", 5.0, float),
        min_pre_matches=config.get(args.min_pre_matches, "did", "min_pre_matches", 50, int),
        moderate_cut_pct=config.get(args.moderate_cut, "did", "moderate_cut", 75.0, float),
    )
    design = config.get(args.design, "did", "design", "moderate")
    estimator = {"unc": "unconditional", "unconditional": "unconditional", "dr": "dr"}.get(
        config.get(args.estimator, "did", "estimator", "unc")
    )
    if estimator is None:
        raise ValidationError("estimator must be 'unc' or 'dr'")
    draws = config.get(args.draws, "did", "draws", 999, int)
    seed = config.get(args.seed, "did", "seed", 0, int)
    weight_law = config.get(args.weight_law, "did", "weight_law", "mammen")
    level = config.get(args.level, "did", "level", 0.95, float)
    pre_window = config.get(args.pre_window, "did", "pre_window", None, int)

    panel = build_did_panel(ledger, classes, design=design)
    series = att_series(
        panel, estimator=estimator, pre_window=pre_window,
        n_draws=draws, weight_law=weight_law, seed=seed, level=level,
    )
    result = _write_json(out / "att.json", {
        "design": design,
        "estimator": estimator,
        "days": [d.isoformat() for d in series.days],
        "att": list(series.att),
        "se": list(series.se),
        "pointwise_lo": list(series.point_lo),
        "pointwise_hi": list(series.point_hi),
        "band_lo": list(series.band_lo),
        "band_hi": list(series.band_hi),
        "is_pre": list(series.is_pre),
        "estimable": list(series.estimable),
        "degenerate": list(series.degenerate),
        "avg_att": series.avg_att,
        "avg_se": series.avg_se,
        "avg_ci": list(series.avg_ci),
        "n_treated": series.n_treated,
        "n_control": series.n_control,
        "dropped_players": panel.dropped_players,
        "n_trimmed_total": series.n_trimmed_total,
        "sup_t_crit": series.sup_t_crit,
        "level": series.level,
        "bootstrap": {"n_draws": series.n_draws, "weight_law": series.weight_law,
                      "seed": series.seed},
        "all_degenerate": series.all_degenerate,
    })
    series_csv = _write_csv(
        out / "att_series.csv", ["day", "att", "lo", "hi", "is_pre"],
        [[d.isoformat(), _fmt(a), _fmt(lo), _fmt(hi), int(pre)]
         for d, a, lo, hi, pre in zip(series.days, series.att, series.band_lo,
                                      series.band_hi, series.is_pre)],
    )
    outputs = [result, series_csv]
    if not args.no_figures:
        outputs.append(report.save_att_figure(
            out / "att_series.png", series,
            title=f"ATT by day ({design} design, {estimator})",
        ))
    params = {"panel": str(args.panel), "design": design, "estimator": estimator,
              "draws": draws, "seed": seed, "weight_law": weight_law, "level": level,
              "pre_window": pre_window}
    _finish(args, params, [args.panel], outputs, seed=seed)


def cmd_decompose(args, config: _Config) -> None:
    out = _outdir(args)
    panel, smoothing, zeta, threads = _sc_common(args, config)
    members = _split_list(args.members)
    result_obj = decompose(panel, members, zeta=zeta, smoothing=smoothing, threads=threads)
    post_times = panel.times[panel.t_pre :]
    result = _write_json(out / "decompose.json", {
        "members": list(result_obj.members),
        "tau_avg": result_obj.tau_avg,
        "gamma_avg": result_obj.gamma_avg,
        "tau_c_avg": result_obj.tau_c_avg,
        "tau_variance": result_obj.treated_fit.variance,
        "tau_ci_95": list(result_obj.treated_fit.ci_95),
        "gamma_variance": result_obj.gamma_variance,
        "gamma_ci_95": list(result_obj.gamma_ci_95),
        "days": [d.isoformat() for d in post_times],
        "tau_series": list(result_obj.tau_series),
        "gamma_series": list(result_obj.gamma_series),
        "tau_c_series": list(result_obj.tau_c_series),
        "assumptions_note": list(result_obj.assumptions_note),
    })
    series_csv = _write_csv(
        out / "decompose_series.csv", ["day", "tau", "gamma", "tau_c"],
        [[d.isoformat(), _fmt(a), _fmt(b), _fmt(c)]
         for d, a, b, c in zip(post_times, result_obj.tau_series,
                               result_obj.gamma_series, result_obj.tau_c_series)],
    )
    outputs = [result, series_csv]
    if not args.no_figures:
        outputs.append(report.save_decomp_figure(
            out / "decompose_series.png", post_times, result_obj.tau_series,
            result_obj.gamma_series, result_obj.tau_c_series,
        ))
    params = {"panel": str(args.panel), "members": members, "zeta": str(zeta),
              "smoothing": smoothing.__dict__ if smoothing else None}
    _finish(args, params, [args.panel], outputs)


def cmd_simulate(args, config: _Config) -> None:
    out = _outdir(args)

    def opt(name, default, cast):
        return config.get(getattr(args, name, None), "simulate", name, default, cast)

    sim = SimConfig(
        n_units=opt("n_units", 40, int),
        n_periods=opt("n_periods", 120, int),
        t_pre=opt("t_pre", 90, int),
        factor_rank=opt("factor_rank", 2, int),
        noise_sd=opt("noise_sd", 1.0, float),
        effect_kind=opt("effect_kind", "none", str),
        effect_delta=opt("effect_delta", 0.0, float),
        treated_index=opt("treated_index", 0, int),
        seed=opt("seed", 0, int),
        mu=opt("mu", 20.0, float),
        n_lgb=opt("n_lgb", 0, int),
    )
    panel, truth = generate(sim)
    csv_path, sidecar = write_panel(panel, out / "panel.csv")
    truth_json = _write_json(out / "truth.json", {
        "config": {k: getattr(sim, k) for k in sim.__dataclass_fields__},
        "effect": list(truth.effect),
        "treated_unit": panel.treated_unit,
    })
    outputs = [csv_path, sidecar, truth_json]
    if not args.no_figures:
        donor_idx = [panel.unit_index(u) for u in panel.donor_labels()]
        outputs.append(report.save_fit_figure(
            out / "panel.png", panel.times, panel.series(panel.treated_unit),
            panel.outcomes[donor_idx].mean(axis=0), panel.t_pre,
            title="Simulated panel: treated unit vs donor-pool mean",
        ))
    params = {k: getattr(sim, k) for k in sim.__dataclass_fields__}
    inputs = [args.config] if args.config else []
    _finish(args, params, inputs, outputs, seed=sim.seed)


# ---------------------------------------------------------------------------
# parser wiring


def _add_common(parser, with_smoothing=False):
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", help="INI config file presetting options")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    parser.add_argument("--threads", type=int, help="worker-thread cap for placebo fits")
    if with_smoothing:
        parser.add_argument("--smooth", action="store_true",
                            help="smooth all series before estimation")
        parser.add_argument("--smooth-bandwidth", type=float, dest="smooth_bandwidth")
        parser.add_argument("--smooth-kernel", choices=("gaussian", "epanechnikov"),
                            dest="smooth_kernel")
        parser.add_argument("--smooth-boundary", choices=("whole_series", "split_at_t_pre"),
                            dest="smooth_boundary")


def build_parser() -> _Parser:
    parser = _Parser(prog="panelcause", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"panelcause {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="validate and normalize a match-log CSV")
    p.add_argument("--matches", required=True)
    p.add_argument("--window", help="study window YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--schema", help="column remapping canonical=file,...")
    _add_common(p)
    p.set_defaults(handler=cmd_ingest, command_path="ingest")

    p = sub.add_parser("panel", help="build a character-level daily panel")
    p.add_argument("--matches", required=True)
    p.add_argument("--metric", choices=("pick_rate", "win_rate"), default="pick_rate")
    p.add_argument("--treated", required=True, help="treated character label")
    p.add_argument("--t-pre-date", required=True, dest="t_pre_date",
                   help="last pre-treatment day (ISO)")
    p.add_argument("--region", help="comma-separated region buckets to keep")
    p.add_argument("--exclude", help="characters to drop entirely")
    p.add_argument("--lgb", help="characters flagged as sharing the group trait")
    p.add_argument("--window", help="study window YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--schema")
    p.add_argument("--win-rate-fill", choices=("neutral", "carry_forward"),
                   default="neutral", dest="win_rate_fill")
    _add_common(p)
    p.set_defaults(handler=cmd_panel, command_path="panel")

    p = sub.add_parser("classify", help="build the player ledger and classify players")
    p.add_argument("--matches", required=True)
    p.add_argument("--focal", required=True, help="focal character")
    p.add_argument("--t-pre-date", required=True, dest="t_pre_date")
    p.add_argument("--window")
    p.add_argument("--schema")
    p.add_argument("--threshold", type=float, default=5.0,
                   help="prior-user pick-rate threshold (percent)")
    p.add_argument("--min-pre-matches", type=int, default=50, dest="min_pre_matches")
    p.add_argument("--moderate-cut", type=float, default=75.0, dest="moderate_cut")
    _add_common(p)
    p.set_defaults(handler=cmd_classify, command_path="classify")

    sc = sub.add_parser("sc", help="synthetic-control estimation and robustness")
    sc_sub = sc.add_subparsers(dest="sc_command")

    p = sc_sub.add_parser("fit", help="fit the synthetic control")
    p.add_argument("--panel", required=True)
    p.add_argument("--zeta", help="ridge strength: zero, rule, or a number")
    _add_common(p, with_smoothing=True)
    p.set_defaults(handler=cmd_sc_fit, command_path="sc fit")

    p = sc_sub.add_parser("placebo", help="placebo-in-space RMSE-ratio test")
    p.add_argument("--panel", required=True)
    p.add_argument("--zeta")
    p.add_argument("--min-pre-rmse", type=float, dest="min_pre_rmse")
    _add_common(p, with_smoothing=True)
    p.set_defaults(handler=cmd_sc_placebo, command_path="sc placebo")

    p = sc_sub.add_parser("backdate", help="shift the treatment date earlier")
    p.add_argument("--panel", required=True)
    p.add_argument("--zeta")
    p.add_argument("--shift", type=int, help="days to backdate (default 10)")
    _add_common(p, with_smoothing=True)
    p.set_defaults(handler=cmd_sc_backdate, command_path="sc backdate")

    p = sc_sub.add_parser("loo", help="leave-one-out donor robustness")
    p.add_argument("--panel", required=True)
    p.add_argument("--zeta")
    _add_common(p, with_smoothing=True)
    p.set_defaults(handler=cmd_sc_loo, command_path="sc loo")

    did = sub.add_parser("did", help="difference-in-differences event study")
    did_sub = did.add_subparsers(dest="did_command")

    p = did_sub.add_parser("att", help="per-day ATT with multiplier-bootstrap bands")
    p.add_argument("--panel", required=True, help="player ledger CSV (from classify)")
    p.add_argument("--design", choices=("moderate", "substantial"))
    p.add_argument("--estimator", choices=("unc", "dr"))
    p.add_argument("--draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--weight-law", choices=("mammen", "rademacher"), dest="weight_law")
    p.add_argument("--level", type=float)
    p.add_argument("--pre-window", type=int, dest="pre_window")
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-pre-matches", type=int, dest="min_pre_matches")
    p.add_argument("--moderate-cut", type=float, dest="moderate_cut")
    _add_common(p)
    p.set_defaults(handler=cmd_did_att, command_path="did att")

    p = sub.add_parser("decompose", help="separate disclosure and calendar-event effects")
    p.add_argument("--panel", required=True)
    p.add_argument("--members", required=True, help="comma-separated flagged units")
    p.add_argument("--zeta")
    _add_common(p, with_smoothing=True)
    p.set_defaults(handler=cmd_decompose, command_path="decompose")

    p = sub.add_parser("simulate", help="draw a ground-truth factor-model panel")
    for name, caster in (
        ("n_units", int), ("n_periods", int), ("t_pre", int), ("factor_rank", int),
        ("noise_sd", float), ("effect_delta", float), ("treated_index", int),
        ("seed", int), ("mu", float), ("n_lgb", int),
    ):
        p.add_argument(f"--{name.replace('_', '-')}", type=caster, dest=name)
    p.add_argument("--effect-kind", choices=("none", "constant", "ramp"), dest="effect_kind")
    _add_common(p)
    p.set_defaults(handler=cmd_simulate, command_path="simulate")

    return parser


def dispatch(argv) -> int:
    """Parse argv, run the mapped command, and map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "handler"):
        parser.print_usage(sys.stderr)
        return 1
    args.raw_argv = list(argv)
    config = None
    try:
        config = _Config(getattr(args, "config", None))
        args.handler(args, config)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))
