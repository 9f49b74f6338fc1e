import datetime as dt

import numpy as np
import pytest

from panelcause.dataio import PlayerDay, PlayerLedger, classify_players
from panelcause.did import (
    AttSeries,
    DidPanel,
    att_doubly_robust,
    att_series,
    att_unconditional,
    build_did_panel,
    multiplier_bootstrap,
)
from panelcause.errors import NumericalError, ValidationError
from panelcause.simgen import PlayerSimConfig, generate_players


def make_did_panel(outcomes, treated, covariates=None, base_index=0):
    outcomes = np.asarray(outcomes, dtype=float)
    n = outcomes.shape[0]
    if covariates is None:
        covariates = np.zeros((n, 1))
    days = [dt.date(2022, 5, 30) + dt.timedelta(days=i) for i in range(outcomes.shape[1])]
    return DidPanel(
        players=tuple(f"p{i}" for i in range(n)),
        days=tuple(days),
        outcomes=outcomes,
        treated=np.asarray(treated, dtype=bool),
        covariates=np.asarray(covariates, dtype=float),
        covariate_names=tuple(f"x{j}" for j in range(np.atleast_2d(covariates).shape[1])),
        base_index=base_index,
    )


class TestAttUnconditional:
    def test_parallel_change_is_zero(self):
        panel = make_did_panel([[10, 13], [20, 23], [30, 33], [40, 43]], [1, 1, 0, 0])
        assert att_unconditional(panel, 1).att == pytest.approx(0.0, abs=1e-12)

    def test_hand_arithmetic(self):
        # treated deltas +2,+4; control deltas +1,+1 -> 3 - 1 = 2
        panel = make_did_panel([[0, 2], [0, 4], [0, 1], [5, 6]], [1, 1, 0, 0])
        assert att_unconditional(panel, 1).att == pytest.approx(2.0, abs=1e-12)

    def test_base_period_att_is_zero(self):
        panel = make_did_panel(np.random.default_rng(1).normal(size=(6, 4)), [1, 1, 1, 0, 0, 0], base_index=1)
        est = att_unconditional(panel, 1)
        assert est.att == 0.0
        np.testing.assert_array_equal(est.contributions, 0.0)

    def test_player_fixed_effects_cancel(self, rng):
        outcomes = rng.normal(size=(8, 5))
        treated = [1, 1, 1, 1, 0, 0, 0, 0]
        base = att_unconditional(make_did_panel(outcomes, treated), 3).att
        shifted = outcomes + rng.normal(size=(8, 1)) * 10  # per-player constants
        again = att_unconditional(make_did_panel(shifted, treated), 3).att
        assert again == pytest.approx(base, abs=1e-9)

    def test_missing_days_excluded_and_counted(self):
        outcomes = np.array([[0.0, 2.0], [0.0, np.nan], [0.0, 1.0], [0.0, 1.0]])
        panel = make_did_panel(outcomes, [1, 1, 0, 0])
        est = att_unconditional(panel, 1)
        assert est.att == pytest.approx(2.0 - 1.0, abs=1e-12)
        assert est.n_treated == 1
        assert est.n_excluded == 1

    def test_day_without_controls_not_estimable(self):
        outcomes = np.array([[0.0, 2.0], [0.0, 1.0], [0.0, np.nan]])
        panel = make_did_panel(outcomes, [1, 1, 0])
        est = att_unconditional(panel, 1)
        assert not est.estimable
        assert np.isnan(est.att)

    def test_contributions_sum_to_zero(self, rng):
        panel, _ = generate_players(PlayerSimConfig(n_players=50, seed=5, missing_rate=0.2))
        est = att_unconditional(panel, 15)
        assert est.contributions.sum() == pytest.approx(0.0, abs=1e-12)


class TestAttDoublyRobust:
    def test_constant_covariates_reduce_to_unconditional(self, rng):
        for seed in range(5):
            panel, _ = generate_players(PlayerSimConfig(n_players=60, seed=seed, effect=3.0))
            flat = make_did_panel(
                panel.outcomes, panel.treated, covariates=np.ones((panel.n_players, 3)),
                base_index=panel.base_index,
            )
            for t in (2, 12, 19):
                unc = att_unconditional(flat, t)
                dr = att_doubly_robust(flat, t)
                assert dr.att == pytest.approx(unc.att, abs=1e-10)

    def test_independent_covariates_agree_with_unconditional(self):
        diffs = []
        for rep in range(40):
            panel, _ = generate_players(
                PlayerSimConfig(n_players=300, seed=7000 + rep, effect=2.0, noise_sd=4.0)
            )
            t = panel.base_index + 5
            diffs.append(att_doubly_robust(panel, t).att - att_unconditional(panel, t).att)
        diffs = np.array(diffs)
        mc_se = diffs.std(ddof=1) / np.sqrt(len(diffs))
        assert abs(diffs.mean()) <= 2.0 * mc_se + 1e-9

    def test_corrects_confounding_with_misspecified_outcome_model(self):
        unc_bias, dr_bias = [], []
        for rep in range(40):
            panel, _ = generate_players(
                PlayerSimConfig(
                    n_players=600,
                    seed=9000 + rep,
                    effect=0.0,
                    noise_sd=3.0,
                    selection_strength=1.0,
                    trend_strength=4.0,
                )
            )
            t = panel.base_index + 4
            unc_bias.append(att_unconditional(panel, t).att)
            dr_bias.append(att_doubly_robust(panel, t).att)
        gap = abs(float(np.mean(unc_bias)))
        dr = abs(float(np.mean(dr_bias)))
        assert gap > 1.0  # the design does produce a confounding gap
        assert dr < 0.2 * gap

    def test_trimming_reports_counts(self):
        rng = np.random.default_rng(3)
        n = 150
        x = np.concatenate([rng.normal(1.2, 1, n // 2), rng.normal(-1.2, 1, n // 2)])
        treated = np.arange(n) < n // 2
        outcomes = np.column_stack([np.zeros(n), rng.normal(size=n)])
        panel = make_did_panel(outcomes, treated, covariates=x[:, None])
        est = att_doubly_robust(panel, 1, trim=0.6)
        assert est.estimable
        assert est.n_trimmed > 0

    def test_all_controls_trimmed_errors(self):
        rng = np.random.default_rng(4)
        outcomes = np.column_stack([np.zeros(40), rng.normal(size=40)])
        treated = np.arange(40) < 20
        x = rng.normal(size=(40, 1))
        panel = make_did_panel(outcomes, treated, covariates=x)
        with pytest.raises(NumericalError):
            att_doubly_robust(panel, 1, trim=0.0)

    def test_collinear_columns_named(self, rng):
        n = 30
        x1 = rng.normal(size=n)
        covs = np.column_stack([x1, 2.0 * x1, rng.normal(size=n)])
        outcomes = np.column_stack([np.zeros(n), rng.normal(size=n)])
        panel = make_did_panel(outcomes, np.arange(n) < 10, covariates=covs)
        with pytest.raises(ValidationError, match="collinear"):
            att_doubly_robust(panel, 1)

    def test_needs_enough_controls(self, rng):
        outcomes = np.column_stack([np.zeros(6), rng.normal(size=6)])
        covs = rng.normal(size=(6, 4))
        panel = make_did_panel(outcomes, [1, 1, 1, 1, 0, 0], covariates=covs)
        with pytest.raises(ValidationError, match="control players"):
            att_doubly_robust(panel, 1)


class TestMultiplierBootstrap:
    def test_zero_contributions_flagged_degenerate(self):
        boot = multiplier_bootstrap(np.zeros((50, 3)), n_draws=200, seed=1)
        np.testing.assert_array_equal(boot.se, 0.0)
        assert boot.all_degenerate
        assert np.isnan(boot.crit)

    def test_se_close_to_analytic(self):
        rng = np.random.default_rng(3)
        n, sigma = 400, 3.0
        x = rng.normal(0, sigma, size=n)
        contributions = ((x - x.mean()) / n)[:, None]
        boot = multiplier_bootstrap(contributions, n_draws=999, seed=3)
        analytic = sigma / np.sqrt(n)
        assert abs(boot.se[0] - analytic) / analytic < 0.15

    def test_deterministic_given_seed(self, rng):
        contributions = rng.normal(size=(80, 4)) / 80
        a = multiplier_bootstrap(contributions, n_draws=300, seed=11)
        b = multiplier_bootstrap(contributions, n_draws=300, seed=11)
        np.testing.assert_array_equal(a.se, b.se)
        assert a.crit == b.crit
        c = multiplier_bootstrap(contributions, n_draws=300, seed=12)
        assert not np.array_equal(a.se, c.se)

    def test_weight_laws_have_unit_moments(self):
        from panelcause.did import _draw_weights

        rng = np.random.default_rng(0)
        for law in ("mammen", "rademacher"):
            draws = _draw_weights(rng, (200000, 1), law).ravel()
            assert abs(draws.mean()) < 0.01
            assert abs(draws.var() - 1.0) < 0.01

    def test_crit_floor_at_pointwise_quantile(self, rng):
        contributions = rng.normal(size=(60, 1)) / 60
        boot = multiplier_bootstrap(contributions, n_draws=200, seed=2)
        assert boot.crit >= 1.959963
        boot99 = multiplier_bootstrap(contributions, n_draws=200, seed=2, level=0.99)
        assert boot99.crit >= boot.crit

    def test_small_draws_warn(self, rng):
        with pytest.warns(UserWarning):
            multiplier_bootstrap(rng.normal(size=(20, 2)), n_draws=50, seed=0)

    def test_vector_input_keeps_player_axis(self, rng):
        contributions = rng.normal(size=120) / 120
        a = multiplier_bootstrap(contributions, n_draws=300, seed=4)
        b = multiplier_bootstrap(contributions[:, None], n_draws=300, seed=4)
        np.testing.assert_array_equal(a.se, b.se)
        assert a.crit == b.crit


class TestAttSeries:
    def test_identical_groups_give_exact_zero(self, rng):
        block = rng.normal(size=(5, 12)) + 50
        outcomes = np.vstack([block, block])
        treated = np.array([True] * 5 + [False] * 5)
        panel = make_did_panel(outcomes, treated, base_index=5)
        series = att_series(panel, n_draws=200, seed=0)
        np.testing.assert_array_equal(series.att[series.estimable], 0.0)

    def test_avg_att_is_mean_of_post_days(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=120, seed=21, effect=4.0))
        series = att_series(panel, n_draws=300, seed=4)
        post = ~series.is_pre & series.estimable
        assert series.avg_att == pytest.approx(float(series.att[post].mean()), abs=1e-12)

    def test_band_contains_pointwise(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=150, seed=23, effect=1.0))
        series = att_series(panel, n_draws=400, seed=9)
        ok = series.estimable & ~series.degenerate
        assert np.all(series.band_lo[ok] <= series.point_lo[ok] + 1e-12)
        assert np.all(series.band_hi[ok] >= series.point_hi[ok] - 1e-12)

    def test_bands_monotone_in_level(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=150, seed=29, effect=1.0))
        s95 = att_series(panel, n_draws=400, seed=9, level=0.95)
        s99 = att_series(panel, n_draws=400, seed=9, level=0.99)
        ok = s95.estimable & ~s95.degenerate
        assert np.all(s99.band_lo[ok] <= s95.band_lo[ok] + 1e-12)
        assert np.all(s99.band_hi[ok] >= s95.band_hi[ok] - 1e-12)

    def test_pre_window_limits_placebos(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=60, seed=31, n_days=30, t_pre=20))
        series = att_series(panel, pre_window=5, n_draws=200, seed=1)
        assert int(series.is_pre.sum()) == 5
        assert len(series.days) == 5 + 10

    def test_reproducible_given_seed(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=80, seed=37, effect=2.0))
        a = att_series(panel, n_draws=300, seed=7)
        b = att_series(panel, n_draws=300, seed=7)
        for name in ("att", "se", "band_lo", "band_hi", "point_lo", "point_hi"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert a.avg_ci == b.avg_ci

    def test_base_day_is_degenerate_point(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=60, seed=41))
        series = att_series(panel, n_draws=200, seed=3)
        base_pos = list(series.days).index(panel.days[panel.base_index])
        assert series.att[base_pos] == 0.0
        assert series.degenerate[base_pos]
        assert series.band_lo[base_pos] == series.band_hi[base_pos] == 0.0

    def test_day_level_dr_failure_is_flagged_not_fatal(self, rng):
        panel, _ = generate_players(PlayerSimConfig(n_players=40, n_days=8, t_pre=4, seed=51))
        outcomes = panel.outcomes.copy()
        controls = ~panel.treated
        keep_two = np.flatnonzero(controls)[:2]
        bad_day = 6
        wipe = controls.copy()
        wipe[keep_two] = False
        outcomes[wipe, bad_day] = np.nan  # 2 controls < rank(X)+1 on that day
        crippled = make_did_panel(outcomes, panel.treated, covariates=panel.covariates,
                                  base_index=panel.base_index)
        series = att_series(crippled, estimator="dr", n_draws=200, seed=1)
        pos = bad_day - (len(panel.days) - len(series.days))
        assert not series.estimable[pos]
        assert series.estimable[pos - 1]

    def test_unknown_estimator_rejected(self):
        panel, _ = generate_players(PlayerSimConfig(n_players=20, seed=2))
        with pytest.raises(ValidationError):
            att_series(panel, estimator="matching")


class TestBuildDidPanel:
    @staticmethod
    def ledger_fixture():
        day = lambda i: dt.date(2022, 5, 28) + dt.timedelta(days=i)
        # three classified prior users + one excluded
        def mk(matches, wins, focal):
            return PlayerDay(matches, wins, focal, kills=2.0, deaths=1.0, assists=3.0, gold=100.0)

        days = {
            # substantial reducer: 18% pre -> 0% post
            "alice": {day(0): mk(60, 30, 10), day(1): mk(40, 24, 8), day(5): mk(50, 20, 0)},
            # control: 12% pre -> 13.3% post (no reduction)
            "bob": {day(0): mk(80, 40, 10), day(1): mk(20, 10, 2), day(5): mk(60, 36, 8)},
            # substantial reducer who never plays the base day
            "carol": {day(0): mk(70, 35, 9), day(5): mk(30, 12, 0)},
            # too few pre matches: excluded
            "dave": {day(0): mk(10, 5, 0), day(5): mk(10, 9, 0)},
        }
        return PlayerLedger(focal="graves", t_pre_date=day(1), days=days)

    def test_builds_groups_and_drops_missing_base(self):
        ledger = self.ledger_fixture()
        classes = classify_players(ledger, min_pre_matches=50)
        groups = {c.player_id: c.group for c in classes}
        assert groups["dave"] == "excluded"
        panel = build_did_panel(ledger, classes, design="substantial")
        assert "dave" not in panel.players
        assert panel.dropped_players == 1  # carol
        assert panel.days[panel.base_index] == dt.date(2022, 5, 29)

    def test_outcome_and_covariates(self):
        ledger = self.ledger_fixture()
        classes = classify_players(ledger, min_pre_matches=50)
        panel = build_did_panel(ledger, classes, design="substantial")
        i = panel.players.index("alice")
        base_j = panel.base_index
        assert panel.outcomes[i, base_j] == pytest.approx(100.0 * 24 / 40)
        k = panel.covariate_names.index("daily_matches")
        assert panel.covariates[i, k] == pytest.approx((60 + 40) / 2)
        assert panel.covariates[i, panel.covariate_names.index("kills")] == pytest.approx(2.0)
