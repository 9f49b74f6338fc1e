"""Seeded synthetic panels with known ground truth.

Two generators back the verification suites: a unit-by-day factor-model
panel for the synthetic-control stack, and a player-level outcome panel
for the difference-in-differences stack. Both are deterministic given
their seed.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .did import DidPanel
from .errors import ValidationError
from .panel import PanelDataset

EFFECT_KINDS = ("none", "constant", "ramp")

_START_DAY = dt.date(2022, 1, 1)


@dataclass(frozen=True)
class SimConfig:
    """Factor-model panel generator settings.

    Outcomes are ``mu + loadings_i . factors_t + noise``; the treated
    unit additionally receives the effect path after ``t_pre``. ``mu``
    keeps series near a realistic daily-usage scale.
    """

    n_units: int = 40
    n_periods: int = 120
    t_pre: int = 90
    factor_rank: int = 2
    noise_sd: float = 1.0
    effect_kind: str = "none"
    effect_delta: float = 0.0
    treated_index: int = 0
    seed: int = 0
    mu: float = 20.0
    n_lgb: int = 0

    def __post_init__(self):
        if self.n_units < 2:
            raise ValidationError("need at least 2 units")
        if not 1 <= self.t_pre < self.n_periods:
            raise ValidationError("t_pre must satisfy 1 <= t_pre < n_periods")
        if self.factor_rank > min(self.n_units, self.t_pre):
            raise ValidationError("factor_rank must be <= min(n_units, t_pre)")
        if self.factor_rank < 0 or self.noise_sd < 0:
            raise ValidationError("factor_rank and noise_sd must be non-negative")
        if self.effect_kind not in EFFECT_KINDS:
            raise ValidationError(f"effect_kind must be one of {EFFECT_KINDS}")
        if not 0 <= self.treated_index < self.n_units:
            raise ValidationError("treated_index out of range")
        if self.n_lgb >= self.n_units - 1:
            raise ValidationError("n_lgb leaves no donor units")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """The effect series actually injected into the treated unit."""

    effect: np.ndarray  # length n_periods, exactly zero through t_pre
    config: SimConfig


def effect_path(config: SimConfig) -> np.ndarray:
    """Injected effect by period: zero pre-treatment, then the chosen path."""
    path = np.zeros(config.n_periods)
    n_post = config.n_periods - config.t_pre
    if config.effect_kind == "constant":
        path[config.t_pre :] = config.effect_delta
    elif config.effect_kind == "ramp":
        path[config.t_pre :] = config.effect_delta * np.arange(1, n_post + 1) / n_post
    return path


def generate(config: SimConfig) -> tuple[PanelDataset, GroundTruth]:
    """Draw one panel from the factor model.

    Loadings and factors are standard normal; noise is iid normal with
    ``noise_sd``. Unit labels are ``unit_00`` style; days start at a
    fixed calendar origin so panels serialize like real ones.
    """
    rng = np.random.default_rng(config.seed)
    n, t = config.n_units, config.n_periods
    loadings = rng.standard_normal((n, config.factor_rank))
    factors = rng.standard_normal((config.factor_rank, t))
    noise = rng.standard_normal((n, t)) * config.noise_sd
    outcomes = config.mu + loadings @ factors + noise
    truth = effect_path(config)
    outcomes[config.treated_index] += truth

    width = max(2, len(str(n - 1)))
    units = tuple(f"unit_{i:0{width}d}" for i in range(n))
    times = tuple(_START_DAY + dt.timedelta(days=i) for i in range(t))
    lgb = frozenset(
        units[i]
        for i in _lgb_indices(config)
    )
    panel = PanelDataset(
        units=units,
        times=times,
        outcomes=outcomes,
        treated_unit=units[config.treated_index],
        t_pre=config.t_pre,
        lgb_units=lgb,
        excluded_units=frozenset(),
    )
    return panel, GroundTruth(effect=truth, config=config)


def _lgb_indices(config: SimConfig) -> list[int]:
    """First n_lgb unit indices other than the treated one."""
    out = []
    for i in range(config.n_units):
        if len(out) == config.n_lgb:
            break
        if i != config.treated_index:
            out.append(i)
    return out


@dataclass(frozen=True)
class PlayerSimConfig:
    """Player-panel generator for the DiD suites.

    Outcomes are daily win rates around 50. ``effect`` shifts treated
    players after ``t_pre``. ``selection_strength`` ties treatment
    assignment to the first covariate; ``trend_strength`` adds a
    centered exponential covariate-driven post-period drift, nonlinear
    and asymmetric so a linear outcome model cannot capture it while a
    logistic propensity model remains correctly specified.
    ``missing_rate`` knocks out random player-days (never the base
    period).
    """

    n_players: int = 200
    treated_share: float = 0.5
    n_days: int = 20
    t_pre: int = 10
    noise_sd: float = 5.0
    effect: float = 0.0
    n_covariates: int = 5
    selection_strength: float = 0.0
    trend_strength: float = 0.0
    missing_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_players < 4:
            raise ValidationError("need at least 4 players")
        if not 1 <= self.t_pre < self.n_days:
            raise ValidationError("t_pre must satisfy 1 <= t_pre < n_days")
        if not 0 < self.treated_share < 1:
            raise ValidationError("treated_share must be in (0, 1)")
        if not 0 <= self.missing_rate < 1:
            raise ValidationError("missing_rate must be in [0, 1)")
        if self.n_covariates < 1:
            raise ValidationError("need at least one covariate")


def generate_players(config: PlayerSimConfig) -> tuple[DidPanel, np.ndarray]:
    """Draw one player panel; returns it with the injected ATT path.

    The returned path has one entry per day: zero through the base
    period, ``effect`` afterwards.
    """
    rng = np.random.default_rng(config.seed)
    n, t = config.n_players, config.n_days
    x = rng.standard_normal((n, config.n_covariates))

    if config.selection_strength != 0.0:
        logits = config.selection_strength * x[:, 0]
        treated = rng.random(n) < 1.0 / (1.0 + np.exp(-logits))
    else:
        treated = rng.random(n) < config.treated_share
    # guarantee both groups exist
    if not treated.any():
        treated[0] = True
    if treated.all():
        treated[0] = False

    player_fx = rng.standard_normal(n) * 3.0
    day_fx = rng.standard_normal(t) * 1.0
    noise = rng.standard_normal((n, t)) * config.noise_sd
    outcomes = 50.0 + player_fx[:, None] + day_fx[None, :] + noise

    post = np.zeros(t)
    post[config.t_pre :] = 1.0
    truth = config.effect * post
    outcomes += treated[:, None] * truth[None, :]
    if config.trend_strength != 0.0:
        # exp(x) centered at its N(0,1) mean exp(1/2)
        drift = config.trend_strength * (np.exp(x[:, 0]) - np.exp(0.5))
        outcomes += drift[:, None] * post[None, :]

    if config.missing_rate > 0:
        holes = rng.random((n, t)) < config.missing_rate
        holes[:, config.t_pre - 1] = False  # keep the base period observed
        outcomes = np.where(holes, np.nan, outcomes)

    width = max(3, len(str(n - 1)))
    players = tuple(f"p{i:0{width}d}" for i in range(n))
    days = tuple(_START_DAY + dt.timedelta(days=i) for i in range(t))
    panel = DidPanel(
        players=players,
        days=days,
        outcomes=outcomes,
        treated=treated,
        covariates=x,
        covariate_names=tuple(f"x{j}" for j in range(config.n_covariates)),
        base_index=config.t_pre - 1,
        dropped_players=0,
    )
    return panel, truth
