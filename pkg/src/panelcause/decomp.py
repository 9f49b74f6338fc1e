"""Separating two treatments that start on the same day.

The treated unit receives both a disclosure shock and a calendar event
(the event also touches a known set of flagged units). Averaging the
flagged units into a composite pseudo-unit and fitting a synthetic
control to it estimates the calendar-event effect alone; subtracting
that path from the treated unit's total effect isolates the disclosure
effect, under no-interference and an effect-homogeneity assumption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .panel import PanelDataset
from .scm import SCFit, SmoothConfig, fit

COMPOSITE_LABEL = "composite"

ASSUMPTIONS_NOTE = (
    "no-interference (SUTVA): each unit's outcome depends only on its own "
    "treatment exposure",
    "effect homogeneity: the calendar event shifts the treated unit exactly "
    "as it shifts the composite of previously flagged units",
)


@dataclass(frozen=True, eq=False)
class DecompResult:
    """Total, calendar-event, and disclosure-only effect paths.

    ``tau_c_series + gamma_series == tau_series`` holds exactly, element
    by element, because the disclosure path is defined by subtraction.
    Only marginal confidence intervals are reported: the two fits share
    donors, and a joint interval for their difference would need a
    dependence model this estimator does not have.
    """

    treated_fit: SCFit
    composite_fit: SCFit
    members: tuple[str, ...]
    tau_series: np.ndarray
    gamma_series: np.ndarray
    tau_c_series: np.ndarray
    tau_avg: float
    gamma_avg: float
    tau_c_avg: float
    gamma_variance: float | None
    gamma_ci_95: tuple[float, float] | None
    assumptions_note: tuple[str, ...] = ASSUMPTIONS_NOTE


def composite_unit(panel: PanelDataset, members) -> PanelDataset:
    """Append the unweighted mean of ``members`` as a new treated unit.

    Members must be flagged units (they already sit outside donor
    pools); the previously treated unit is excluded from the composite's
    donor pool as well.
    """
    members = tuple(dict.fromkeys(members))
    if not members:
        raise ValidationError("composite needs at least one member unit")
    missing = [m for m in members if m not in panel.units]
    if missing:
        raise ValidationError(f"composite members not in panel: {missing}")
    not_flagged = [m for m in members if m not in panel.lgb_units]
    if not_flagged:
        raise ValidationError(f"composite members must be flagged units: {not_flagged}")
    if COMPOSITE_LABEL in panel.units:
        raise ValidationError(f"panel already contains a unit named {COMPOSITE_LABEL!r}")
    rows = np.array([panel.series(m) for m in members])
    composite = rows.mean(axis=0)
    return PanelDataset(
        units=panel.units + (COMPOSITE_LABEL,),
        times=panel.times,
        outcomes=np.vstack([panel.outcomes, composite[None, :]]),
        treated_unit=COMPOSITE_LABEL,
        t_pre=panel.t_pre,
        lgb_units=panel.lgb_units,
        excluded_units=frozenset(panel.excluded_units | {panel.treated_unit}),
    )


def decompose(
    panel: PanelDataset,
    members,
    zeta="zero",
    smoothing: SmoothConfig | None = None,
    with_variance: bool = True,
    **fit_kwargs,
) -> DecompResult:
    """Split the treated unit's effect into calendar and disclosure parts.

    Runs two synthetic-control fits with a shared configuration: one on
    the treated unit, one on the composite of ``members``. Donor pools
    exclude the treated unit and every flagged unit in both runs.
    """
    treated_fit = fit(panel, zeta=zeta, smoothing=smoothing,
                      with_variance=with_variance, **fit_kwargs)
    comp_panel = composite_unit(panel, members)
    composite_fit = fit(comp_panel, zeta=zeta, smoothing=smoothing,
                        with_variance=with_variance, **fit_kwargs)

    tau = treated_fit.effects
    gamma = composite_fit.effects
    tau_c = tau - gamma
    return DecompResult(
        treated_fit=treated_fit,
        composite_fit=composite_fit,
        members=tuple(dict.fromkeys(members)),
        tau_series=tau,
        gamma_series=gamma,
        tau_c_series=tau_c,
        tau_avg=treated_fit.avg_effect,
        gamma_avg=composite_fit.avg_effect,
        tau_c_avg=float(tau_c.mean()),
        gamma_variance=composite_fit.variance,
        gamma_ci_95=composite_fit.ci_95,
    )
