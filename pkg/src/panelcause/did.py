"""Single-group difference-in-differences on player-level daily panels.

Per-day ATT(t) contrasts outcome changes from a fixed base period (the
latest pre-treatment day) between treated and control players, either
unconditionally or with a doubly-robust correction (outcome regression
on controls plus a logistic propensity model). Inference clusters at
the player level through a multiplier bootstrap: every draw rescales a
player's whole influence vector by one mean-zero unit-variance weight.
"""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np
import statsmodels.api as sm
from scipy.stats import norm

from .errors import NumericalError, ValidationError

WEIGHT_LAWS = ("mammen", "rademacher")
ESTIMATORS = ("unconditional", "dr")

_IQR_Z = float(norm.ppf(0.75) - norm.ppf(0.25))


@dataclass(frozen=True, eq=False)
class DidPanel:
    """Player-by-day outcome panel with treatment flags and covariates.

    ``outcomes[i, t]`` is player ``i``'s outcome (daily win rate, in
    percent) on ``days[t]``; NaN marks days the player did not play.
    ``base_index`` points at the latest pre-treatment day; every player
    has an observation there (the builder drops and counts the rest).
    """

    players: tuple[str, ...]
    days: tuple[dt.date, ...]
    outcomes: np.ndarray
    treated: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    base_index: int
    dropped_players: int = 0

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        object.__setattr__(self, "days", tuple(self.days))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        outcomes = np.asarray(self.outcomes, dtype=float)
        treated = np.asarray(self.treated, dtype=bool)
        covariates = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "treated", treated)
        object.__setattr__(self, "covariates", covariates)
        n, t = len(self.players), len(self.days)
        if outcomes.shape != (n, t):
            raise ValidationError(f"outcomes shape {outcomes.shape} != ({n}, {t})")
        if treated.shape != (n,):
            raise ValidationError("treated flag must have one entry per player")
        if covariates.shape[0] != n:
            raise ValidationError("covariates must have one row per player")
        if len(self.covariate_names) != covariates.shape[1]:
            raise ValidationError("covariate_names length does not match covariate columns")
        if not np.all(np.isfinite(covariates)):
            raise ValidationError("covariates must be finite")
        if not 0 <= self.base_index < t:
            raise ValidationError(f"base_index {self.base_index} out of range")
        if np.isnan(outcomes[:, self.base_index]).any():
            missing = [p for p, bad in zip(self.players, np.isnan(outcomes[:, self.base_index])) if bad]
            raise ValidationError(
                f"players missing the base-period observation: {missing[:5]} "
                "(drop them before constructing the panel)"
            )
        if not treated.any() or treated.all():
            raise ValidationError("panel needs at least one treated and one control player")

    @property
    def n_players(self) -> int:
        return len(self.players)


COVARIATE_NAMES = ("kills", "deaths", "assists", "gold", "daily_matches")


def build_did_panel(ledger, classifications, design: str = "moderate") -> DidPanel:
    """Assemble a DiD panel from a player ledger and classifications.

    Treated players come from the chosen reduction design (``moderate``
    or ``substantial``); controls are the prior users who did not reduce
    usage. The outcome is the daily win rate in percent; days a player
    did not play are missing. Covariates are that player's pre-treatment
    per-match averages (kills, deaths, assists, gold) plus mean matches
    per played pre-treatment day. Players without an observation on the
    base period (the last pre-treatment day anyone played) are dropped
    and counted.
    """
    if design not in ("moderate", "substantial"):
        raise ValidationError(f"design must be moderate or substantial, got {design!r}")
    wanted = {design: True, "control": False}
    chosen = [c for c in classifications if c.group in wanted]
    if not chosen:
        raise ValidationError(f"no players in design {design!r} or control group")

    all_days = ledger.all_dates()
    pre_days = [d for d in all_days if d <= ledger.t_pre_date]
    if not pre_days or pre_days[-1] == all_days[-1]:
        raise ValidationError("ledger must cover both pre- and post-treatment days")
    base_day = pre_days[-1]
    day_index = {d: j for j, d in enumerate(all_days)}

    players, treated, rows, covs = [], [], [], []
    dropped = 0
    for c in chosen:
        per_day = ledger.days[c.player_id]
        if base_day not in per_day:
            dropped += 1
            continue
        outcome = np.full(len(all_days), np.nan)
        for day, d in per_day.items():
            outcome[day_index[day]] = 100.0 * d.wins / d.matches
        pre = [(d.matches, d.kills, d.deaths, d.assists, d.gold)
               for day, d in per_day.items() if day <= ledger.t_pre_date]
        matches = np.array([p[0] for p in pre], dtype=float)
        total = matches.sum()
        # per-match averages over the pre-period, then matches per played day
        cov = [
            float(np.dot(matches, [p[k] for p in pre]) / total) for k in range(1, 5)
        ] + [float(matches.mean())]
        players.append(c.player_id)
        treated.append(c.group == design)
        rows.append(outcome)
        covs.append(cov)

    if not players:
        raise ValidationError("all players dropped: none observed at the base period")
    return DidPanel(
        players=tuple(players),
        days=all_days,
        outcomes=np.array(rows),
        treated=np.array(treated, dtype=bool),
        covariates=np.array(covs),
        covariate_names=COVARIATE_NAMES,
        base_index=day_index[base_day],
        dropped_players=dropped,
    )


@dataclass(frozen=True, eq=False)
class AttEstimate:
    """One day's ATT with per-player influence contributions.

    ``contributions`` are scaled so that a multiplier-bootstrap draw
    ``sum_i V_i * contributions[i]`` mimics the estimator's sampling
    deviation; they sum to zero and are zero for players excluded from
    the day's contrast.
    """

    att: float
    contributions: np.ndarray
    n_treated: int
    n_control: int
    n_excluded: int
    estimable: bool
    n_trimmed: int = 0


def _day_deltas(panel: DidPanel, t: int) -> np.ndarray:
    if not 0 <= t < len(panel.days):
        raise ValidationError(f"day index {t} out of range")
    return panel.outcomes[:, t] - panel.outcomes[:, panel.base_index]


def att_unconditional(panel: DidPanel, t: int) -> AttEstimate:
    """Unconditional ATT at day index ``t``.

    Mean outcome change from the base period among treated players minus
    the same mean among controls. Players missing either day are
    excluded from the contrast and counted. A day with no treated or no
    control participants is flagged not estimable rather than raising.
    """
    delta = _day_deltas(panel, t)
    observed = np.isfinite(delta)
    t_mask = panel.treated & observed
    c_mask = ~panel.treated & observed
    n1, n0 = int(t_mask.sum()), int(c_mask.sum())
    n_excluded = panel.n_players - n1 - n0
    contributions = np.zeros(panel.n_players)
    if n1 == 0 or n0 == 0:
        return AttEstimate(float("nan"), contributions, n1, n0, n_excluded, False)
    mu1 = float(delta[t_mask].mean())
    mu0 = float(delta[c_mask].mean())
    contributions[t_mask] = (delta[t_mask] - mu1) / n1
    contributions[c_mask] = -(delta[c_mask] - mu0) / n0
    return AttEstimate(mu1 - mu0, contributions, n1, n0, n_excluded, True)


def _standardize(x: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Center/scale columns; (numerically) constant columns are dropped."""
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    # a column of identical values can carry sd ~ 1e-16 from rounding
    floor = 1e-12 * np.maximum(1.0, np.abs(mean))
    keep = [j for j in range(x.shape[1]) if sd[j] > floor[j]]
    if not keep:
        return np.empty((x.shape[0], 0)), []
    return (x[:, keep] - mean[keep]) / sd[keep], keep


def _collinear_columns(design: np.ndarray, names: list[str]) -> list[str]:
    """Names of columns beyond the numerical rank (QR with pivoting)."""
    from scipy.linalg import qr

    rank = np.linalg.matrix_rank(design)
    if rank >= design.shape[1]:
        return []
    _, _, pivots = qr(design, mode="economic", pivoting=True)
    return sorted(names[j] for j in pivots[rank:])


def att_doubly_robust(panel: DidPanel, t: int, trim: float = 0.995) -> AttEstimate:
    """Doubly-robust ATT at day index ``t``.

    Fits an outcome-change regression on controls and a logistic
    propensity model on the day's estimation sample (covariates
    standardized internally), then averages the reweighted residual
    scores. Control players with propensity above ``trim`` are trimmed
    from the comparison and counted. Reduces exactly to the
    unconditional estimator when all covariates are constant.
    """
    delta = _day_deltas(panel, t)
    observed = np.isfinite(delta)
    t_mask = panel.treated & observed
    c_mask = ~panel.treated & observed
    n1, n0 = int(t_mask.sum()), int(c_mask.sum())
    n_excluded = panel.n_players - n1 - n0
    if n1 == 0 or n0 == 0:
        return AttEstimate(float("nan"), np.zeros(panel.n_players), n1, n0, n_excluded, False)

    sample = observed
    d = panel.treated[sample].astype(float)
    dy = delta[sample]
    x, kept = _standardize(panel.covariates[sample])
    kept_names = [panel.covariate_names[j] for j in kept]
    n = len(dy)
    n_trimmed = 0

    if x.shape[1] == 0:
        # degenerate covariates: both nuisances are constants
        p_hat = np.full(n, d.mean())
        m_hat = np.full(n, dy[d == 0].mean())
    else:
        design = np.column_stack([np.ones(n), x])
        controls = d == 0
        if n0 < x.shape[1] + 1:
            raise ValidationError(
                f"need at least rank(X)+1 = {x.shape[1] + 1} control players, have {n0}"
            )
        bad = _collinear_columns(design[controls], ["intercept"] + kept_names)
        if bad:
            raise ValidationError(f"singular design matrix; collinear columns: {bad}")
        beta = np.linalg.lstsq(design[controls], dy[controls], rcond=None)[0]
        m_hat = design @ beta
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                logit = sm.Logit(d, design).fit(disp=0, maxiter=200)
        except Exception as exc:  # statsmodels raises on perfect separation
            raise NumericalError(f"propensity model failed to fit: {exc}") from exc
        p_hat = np.clip(np.asarray(logit.predict(design)), 1e-12, 1.0 - 1e-12)
        over = (d == 0) & (p_hat > trim)
        n_trimmed = int(over.sum())

    w1 = d / d.mean()
    odds = p_hat * (1.0 - d) / (1.0 - p_hat)
    if n_trimmed:
        odds[over] = 0.0
    odds_mean = odds.mean()
    if odds_mean <= 0:
        raise NumericalError("all control players trimmed; no overlap left")
    w0 = odds / odds_mean
    scores = (w1 - w0) * (dy - m_hat)
    att = float(scores.mean())
    contributions = np.zeros(panel.n_players)
    contributions[sample] = (scores - att) / n
    return AttEstimate(att, contributions, n1, n0, n_excluded, True, n_trimmed)


@dataclass(frozen=True, eq=False)
class MultiplierBootstrap:
    """Cluster multiplier-bootstrap scales for a family of estimates."""

    se: np.ndarray
    crit: float
    level: float
    aggregate_se: float
    degenerate: np.ndarray
    all_degenerate: bool
    n_draws: int
    weight_law: str
    seed: int


def _draw_weights(rng: np.random.Generator, size: tuple[int, int], law: str) -> np.ndarray:
    if law == "rademacher":
        return rng.integers(0, 2, size=size) * 2.0 - 1.0
    if law == "mammen":
        # two-point law with mean 0, variance 1
        sqrt5 = np.sqrt(5.0)
        lo, hi = -(sqrt5 - 1.0) / 2.0, (sqrt5 + 1.0) / 2.0
        p_lo = (sqrt5 + 1.0) / (2.0 * sqrt5)
        return np.where(rng.random(size=size) < p_lo, lo, hi)
    raise ValidationError(f"weight_law must be one of {WEIGHT_LAWS}, got {law!r}")


def multiplier_bootstrap(
    contributions: np.ndarray,
    n_draws: int = 999,
    weight_law: str = "mammen",
    seed: int = 0,
    aggregate: np.ndarray | None = None,
    level: float = 0.95,
) -> MultiplierBootstrap:
    """Cluster-level multiplier bootstrap over influence contributions.

    Args:
        contributions: (n_players, n_days) influence matrix; each draw
            multiplies a player's whole row by one random weight.
        aggregate: optional (n_players,) contribution vector for a
            scalar summary (e.g. the post-period average), bootstrapped
            with the same draws.
        level: simultaneous confidence level for the sup-t critical
            value.

    Per-day standard errors use the robust interquartile scale of the
    bootstrap draws. The sup-t critical value is the ``level`` quantile
    of the max-t statistic over non-degenerate days, floored at the
    pointwise normal quantile so simultaneous bands always contain the
    pointwise intervals. Days with zero bootstrap variance are flagged
    degenerate; their bands collapse to the point estimate.
    """
    contributions = np.asarray(contributions, dtype=float)
    if contributions.ndim == 1:
        # a single family member: players stay on the first axis
        contributions = contributions[:, None]
    if contributions.ndim != 2:
        raise ValidationError("contributions must be a (players, days) matrix")
    if n_draws < 1:
        raise ValidationError("n_draws must be positive")
    if n_draws < 100:
        warnings.warn(f"n_draws={n_draws} is small; inference will be unstable", stacklevel=2)
    if not 0 < level < 1:
        raise ValidationError(f"level must be in (0, 1), got {level}")
    n_players, n_days = contributions.shape
    rng = np.random.default_rng(seed)
    v = _draw_weights(rng, (n_draws, n_players), weight_law)
    draws = v @ contributions
    q25, q75 = np.quantile(draws, [0.25, 0.75], axis=0)
    se = (q75 - q25) / _IQR_Z
    degenerate = se <= 0
    z_point = float(norm.ppf(0.5 + level / 2.0))
    if degenerate.all():
        crit = float("nan")
        all_degenerate = True
    else:
        tstats = np.max(np.abs(draws[:, ~degenerate]) / se[~degenerate], axis=1)
        crit = max(float(np.quantile(tstats, level)), z_point)
        all_degenerate = False
    if aggregate is not None:
        agg_draws = v @ np.asarray(aggregate, dtype=float)
        a25, a75 = np.quantile(agg_draws, [0.25, 0.75])
        aggregate_se = float((a75 - a25) / _IQR_Z)
    else:
        aggregate_se = float("nan")
    return MultiplierBootstrap(
        se=se,
        crit=crit,
        level=level,
        aggregate_se=aggregate_se,
        degenerate=degenerate,
        all_degenerate=all_degenerate,
        n_draws=n_draws,
        weight_law=weight_law,
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class AttSeries:
    """Per-day ATT estimates with pointwise and simultaneous intervals."""

    days: tuple[dt.date, ...]
    att: np.ndarray
    se: np.ndarray
    point_lo: np.ndarray
    point_hi: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    is_pre: np.ndarray
    estimable: np.ndarray
    degenerate: np.ndarray
    n_treated_day: np.ndarray
    n_control_day: np.ndarray
    avg_att: float
    avg_se: float
    avg_ci: tuple[float, float]
    n_treated: int
    n_control: int
    estimator: str
    sup_t_crit: float
    level: float
    n_draws: int
    weight_law: str
    seed: int
    all_degenerate: bool
    n_trimmed_total: int = 0


def att_series(
    panel: DidPanel,
    estimator: str = "unconditional",
    pre_window: int | None = None,
    n_draws: int = 999,
    weight_law: str = "mammen",
    seed: int = 0,
    level: float = 0.95,
    trim: float = 0.995,
) -> AttSeries:
    """Estimate ATT(t) for every post day plus pre-period placebos.

    All contrasts use the same fixed base period (the panel's latest
    pre-treatment day). ``pre_window`` limits how many pre-treatment
    days (counting back from the base) receive placebo estimates; the
    default covers the full pre-period. The post-period average and all
    intervals come from one multiplier bootstrap, so results are
    reproducible given the seed.
    """
    if estimator not in ESTIMATORS:
        raise ValidationError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    base = panel.base_index
    n_days_total = len(panel.days)
    first_pre = 0 if pre_window is None else max(0, base + 1 - pre_window)
    day_idx = list(range(first_pre, n_days_total))
    is_pre = np.array([t <= base for t in day_idx])

    estimates = []
    for t in day_idx:
        try:
            if estimator == "dr":
                estimates.append(att_doubly_robust(panel, t, trim=trim))
            else:
                estimates.append(att_unconditional(panel, t))
        except (ValidationError, NumericalError):
            # a day the estimator cannot handle is flagged, not fatal
            estimates.append(
                AttEstimate(float("nan"), np.zeros(panel.n_players), 0, 0,
                            panel.n_players, False)
            )

    att = np.array([e.att for e in estimates])
    estimable = np.array([e.estimable for e in estimates])
    contributions = np.column_stack([e.contributions for e in estimates])
    contributions[:, ~estimable] = 0.0

    post_est = ~is_pre & estimable
    if not post_est.any():
        raise ValidationError("no estimable post-treatment day")
    avg_att = float(att[post_est].mean())
    aggregate = contributions[:, post_est].mean(axis=1)

    boot = multiplier_bootstrap(
        contributions[:, estimable],
        n_draws=n_draws,
        weight_law=weight_law,
        seed=seed,
        aggregate=aggregate,
        level=level,
    )
    se = np.full(len(day_idx), np.nan)
    se[estimable] = boot.se
    degenerate = np.zeros(len(day_idx), dtype=bool)
    degenerate[estimable] = boot.degenerate

    z_point = float(norm.ppf(0.5 + level / 2.0))
    crit = boot.crit if np.isfinite(boot.crit) else 0.0
    point_half = np.where(np.isfinite(se), z_point * se, np.nan)
    band_half = np.where(np.isfinite(se), crit * se, np.nan)
    avg_half = z_point * boot.aggregate_se if np.isfinite(boot.aggregate_se) else float("nan")

    return AttSeries(
        days=tuple(panel.days[t] for t in day_idx),
        att=att,
        se=se,
        point_lo=att - point_half,
        point_hi=att + point_half,
        band_lo=att - band_half,
        band_hi=att + band_half,
        is_pre=is_pre,
        estimable=estimable,
        degenerate=degenerate,
        n_treated_day=np.array([e.n_treated for e in estimates]),
        n_control_day=np.array([e.n_control for e in estimates]),
        avg_att=avg_att,
        avg_se=float(boot.aggregate_se),
        avg_ci=(avg_att - avg_half, avg_att + avg_half),
        n_treated=int(panel.treated.sum()),
        n_control=int((~panel.treated).sum()),
        estimator=estimator,
        sup_t_crit=boot.crit,
        level=level,
        n_draws=n_draws,
        weight_law=weight_law,
        seed=seed,
        all_degenerate=boot.all_degenerate,
        n_trimmed_total=sum(e.n_trimmed for e in estimates),
    )
