"""Robustness batteries for synthetic-control fits.

Three designs: reassigning treatment to every control and ranking the
post/pre RMSE ratios, backdating the treatment to open a hold-out
window, and re-fitting with each influential donor left out.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .panel import PanelDataset
from .scm import SCFit, SmoothConfig, _apply_smoothing, _fit_core

NONZERO_WEIGHT = 1e-6


@dataclass(frozen=True)
class UnitRmse:
    """Pre/post fit quality for one (pseudo-)treated unit."""

    unit: str
    pre_rmse: float
    post_rmse: float
    ratio: float
    passed_filter: bool


@dataclass(frozen=True, eq=False)
class RmseRatioReport:
    """Placebo-in-space summary: where does the treated unit rank?"""

    units: tuple[UnitRmse, ...]
    treated_unit: str
    treated_rank: int
    n_considered: int
    min_pre_rmse: float
    skipped: tuple[str, ...]
    gap_series: dict[str, np.ndarray]

    def considered(self) -> list[UnitRmse]:
        return [u for u in self.units if u.passed_filter]


@dataclass(frozen=True, eq=False)
class BackdateResult:
    """Fit with an artificially earlier treatment date.

    The hold-out window covers the true pre-treatment days that the
    shifted fit no longer trains on; effects there should be noise if
    the estimator extrapolates well.
    """

    fit: SCFit
    shift_days: int
    holdout_rmse: float | None
    holdout_mean_effect: float | None
    post_mean_effect: float


def _fit_kwargs(fit_config: dict | None) -> dict:
    config = dict(fit_config or {})
    config.setdefault("zeta", "zero")
    config.setdefault("zeta_ddof", 0)
    config.setdefault("solver_tol", 1e-8)
    config.setdefault("solver_max_iter", 10**5)
    return config


def placebo_in_space(
    panel: PanelDataset,
    fit_config: dict | None = None,
    min_pre_rmse: float = 1.0,
    smoothing: SmoothConfig | None = None,
    threads: int = 1,
) -> RmseRatioReport:
    """Reassign treatment to every control and compare RMSE ratios.

    Each control becomes pseudo-treated with a pool of the remaining
    controls (the true treated unit never enters a pool). Units whose
    pre-treatment RMSE falls below ``min_pre_rmse`` are dropped from the
    ranking as overfit, except the treated unit, which is always ranked.
    Rank 1 means the largest post/pre RMSE ratio.
    """
    config = _fit_kwargs(fit_config)
    work = _apply_smoothing(panel, smoothing)
    donors = work.donor_labels()
    if len(donors) < 2:
        raise ValidationError("placebo-in-space needs at least 2 donors")

    def run(unit: str):
        if unit == work.treated_unit:
            pseudo = work
        else:
            pseudo = work.with_treated(unit, extra_excluded={work.treated_unit})
        try:
            f = _fit_core(pseudo, config["zeta"], config["zeta_ddof"],
                          config["solver_tol"], config["solver_max_iter"])
        except NumericalError:
            return unit, None, None
        gap = f.observed - f.counterfactual
        return unit, f, gap

    labels = [work.treated_unit] + list(donors)
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, labels))
    else:
        results = [run(u) for u in labels]

    units: list[UnitRmse] = []
    skipped: list[str] = []
    gaps: dict[str, np.ndarray] = {}
    for unit, f, gap in results:
        if f is None:
            skipped.append(unit)
            continue
        passed = f.pre_rmse >= min_pre_rmse or unit == work.treated_unit
        ratio = f.post_rmse / f.pre_rmse if f.pre_rmse > 0 else float("inf")
        units.append(UnitRmse(unit, f.pre_rmse, f.post_rmse, ratio, passed))
        gaps[unit] = gap
    by_unit = {u.unit: u for u in units}
    if work.treated_unit not in by_unit:
        raise NumericalError("the treated unit's own fit failed; no ranking possible")
    treated_ratio = by_unit[work.treated_unit].ratio
    considered = [u for u in units if u.passed_filter]
    rank = 1 + sum(1 for u in considered if u.unit != work.treated_unit and u.ratio > treated_ratio)
    return RmseRatioReport(
        units=tuple(sorted(units, key=lambda u: -u.ratio)),
        treated_unit=work.treated_unit,
        treated_rank=rank,
        n_considered=len(considered),
        min_pre_rmse=min_pre_rmse,
        skipped=tuple(skipped),
        gap_series=gaps,
    )


def backdate(
    panel: PanelDataset,
    shift_days: int = 10,
    fit_config: dict | None = None,
    smoothing: SmoothConfig | None = None,
) -> BackdateResult:
    """Refit with the treatment date moved ``shift_days`` earlier.

    The data-driven ridge rule, when requested, is recomputed on the
    shortened pre-period. Smoothing still splits at the panel's true
    treatment date so the backdated run sees the same smoothed series as
    the original fit.
    """
    if shift_days < 0:
        raise ValidationError("shift_days must be non-negative")
    if shift_days >= panel.t_pre:
        raise ValidationError(
            f"shift_days={shift_days} must be smaller than t_pre={panel.t_pre}"
        )
    config = _fit_kwargs(fit_config)
    work = _apply_smoothing(panel, smoothing)
    shifted = work.with_t_pre(panel.t_pre - shift_days)
    f = _fit_core(shifted, config["zeta"], config["zeta_ddof"],
                  config["solver_tol"], config["solver_max_iter"])
    # effects since the shifted date; the first shift_days are hold-out
    holdout = f.effects[:shift_days]
    post = f.effects[shift_days:]
    return BackdateResult(
        fit=f,
        shift_days=shift_days,
        holdout_rmse=float(np.sqrt(np.mean(holdout**2))) if shift_days else None,
        holdout_mean_effect=float(holdout.mean()) if shift_days else None,
        post_mean_effect=float(post.mean()),
    )


def leave_one_out(
    panel: PanelDataset,
    fit_config: dict | None = None,
    smoothing: SmoothConfig | None = None,
    weight_threshold: float = NONZERO_WEIGHT,
) -> dict[str, SCFit]:
    """Refit once per influential donor, dropping that donor.

    Influential means baseline weight above ``weight_threshold``.
    Raises when the baseline leans on a single donor: dropping it would
    leave nothing comparable.
    """
    config = _fit_kwargs(fit_config)
    work = _apply_smoothing(panel, smoothing)
    baseline = _fit_core(work, config["zeta"], config["zeta_ddof"],
                         config["solver_tol"], config["solver_max_iter"])
    influential = [
        label
        for label, w in zip(baseline.weights.donor_labels, baseline.weights.omega)
        if w > weight_threshold
    ]
    if len(influential) < 2:
        raise ValidationError(
            f"baseline fit has {len(influential)} donor(s) with weight > "
            f"{weight_threshold}; leave-one-out needs at least 2"
        )
    results: dict[str, SCFit] = {}
    for label in influential:
        reduced = work.with_treated(work.treated_unit, extra_excluded={label})
        results[label] = _fit_core(reduced, config["zeta"], config["zeta_ddof"],
                                   config["solver_tol"], config["solver_max_iter"])
    return results
