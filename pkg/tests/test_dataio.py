import datetime as dt

import numpy as np
import pytest

from conftest import make_panel
from panelcause.dataio import (
    build_character_panel,
    build_player_ledger,
    classify_players,
    group_counts,
    group_daily_means,
    load_matches,
    normalize_region,
    read_ledger,
    write_ledger,
)
from panelcause.errors import ValidationError
from panelcause.panel import read_panel, write_panel

HEADER = "match_id,date,region,player_id,character,role,win,kills,deaths,assists,gold"


def write_csv(tmp_path, rows, name="matches.csv", header=HEADER):
    path = tmp_path / name
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


def row(match="m1", date="2022-05-01", region="euw", player="p1", character="graves",
        role="jungle", win=1, kills=3, deaths=1, assists=5, gold=12000):
    return f"{match},{date},{region},{player},{character},{role},{win},{kills},{deaths},{assists},{gold}"


WINDOW = (dt.date(2022, 1, 1), dt.date(2022, 7, 31))


class TestLoadMatches:
    def test_valid_rows_pass_through(self, tmp_path):
        path = write_csv(tmp_path, [
            row(match="m1", player="p1", character="graves"),
            row(match="m1", player="p2", character="ahri"),
            row(match="m2", player="p1", character="ahri"),
        ])
        loaded = load_matches(path, window=WINDOW)
        assert len(loaded.records) == 3
        assert loaded.dropped_out_of_window == 0
        first = loaded.records[0]
        assert first.match_id == "m1" and first.character == "graves"
        assert first.win is True and first.region == "europe"

    def test_duplicate_key_rejected(self, tmp_path):
        path = write_csv(tmp_path, [
            row(match="m1", player="p1", character="graves"),
            row(match="m1", player="p1", character="ahri"),
        ])
        with pytest.raises(ValidationError, match=r"\('m1', 'p1'\)"):
            load_matches(path, window=WINDOW)

    def test_out_of_window_rows_dropped_and_counted(self, tmp_path):
        path = write_csv(tmp_path, [
            row(match="m1", date="2022-05-01"),
            row(match="m2", date="2021-12-31", player="p2"),
            row(match="m3", date="2022-05-02", player="p3"),
        ])
        loaded = load_matches(path, window=WINDOW)
        assert len(loaded.records) == 2
        assert loaded.dropped_out_of_window == 1

    def test_malformed_row_names_row_and_column(self, tmp_path):
        path = write_csv(tmp_path, [row(), row(match="m2", player="p2", kills="three")])
        with pytest.raises(ValidationError, match="row 3.*'kills'"):
            load_matches(path, window=WINDOW)

    def test_bad_date_and_bad_win(self, tmp_path):
        with pytest.raises(ValidationError, match="row 2.*'date'"):
            load_matches(write_csv(tmp_path, [row(date="05/01/2022")]), window=WINDOW)
        with pytest.raises(ValidationError, match="win"):
            load_matches(write_csv(tmp_path, [row(win="yes")], name="m2.csv"), window=WINDOW)

    def test_character_unique_per_match(self, tmp_path):
        path = write_csv(tmp_path, [
            row(match="m1", player="p1", character="graves"),
            row(match="m1", player="p2", character="graves"),
        ])
        with pytest.raises(ValidationError, match="appears twice"):
            load_matches(path, window=WINDOW)

    def test_match_row_cap(self, tmp_path):
        rows = [row(match="m1", player=f"p{i}", character=f"c{i}") for i in range(11)]
        with pytest.raises(ValidationError, match="more than 10"):
            load_matches(write_csv(tmp_path, rows), window=WINDOW)

    def test_missing_file_and_missing_columns(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_matches(tmp_path / "nope.csv")
        bad = tmp_path / "bad.csv"
        bad.write_text("match_id,date\nm1,2022-05-01\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="missing required columns"):
            load_matches(bad)

    def test_schema_remapping(self, tmp_path):
        header = "game,day,server,summoner,champ,pos,result,k,d,a,g"
        path = write_csv(tmp_path, ["g1,2022-05-01,kr,p1,graves,jungle,0,1,2,3,9000"], header=header)
        schema = dict(zip(
            ("match_id", "date", "region", "player_id", "character", "role", "win",
             "kills", "deaths", "assists", "gold"),
            header.split(","),
        ))
        loaded = load_matches(path, schema=schema, window=WINDOW)
        assert loaded.records[0].region == "korea"
        assert loaded.records[0].win is False

    def test_region_normalization(self):
        assert normalize_region("EUNE") == "europe"
        assert normalize_region("euw") == "europe"
        assert normalize_region("BR") == "latin_america"
        assert normalize_region("las") == "latin_america"
        assert normalize_region("KR") == "korea"
        assert normalize_region("na") == "north_america"
        assert normalize_region("oce") == "other"


def day_rows(date, n_matches, picks, wins=None):
    """n_matches matches on a date; character appears in the first len(picks)."""
    rows = []
    for m in range(n_matches):
        match = f"{date}-m{m}"
        if m < len(picks):
            rows.append(row(match=match, date=date, player=f"pa{m}", character=picks[m],
                            win=(wins or [1] * len(picks))[m]))
        rows.append(row(match=match, date=date, player=f"pb{m}", character=f"filler{m}", win=0))
    return rows


class TestBuildCharacterPanel:
    def test_pick_rate_formula(self, tmp_path):
        rows = day_rows("2022-05-01", 4, ["graves"]) + day_rows("2022-05-02", 2, ["graves", "graves2"])
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        panel = build_character_panel(
            loaded.records, metric="pick_rate", t_pre_date=dt.date(2022, 5, 1),
            treated_unit="graves",
        )
        i = panel.unit_index("graves")
        assert panel.outcomes[i, 0] == pytest.approx(25.0)
        assert panel.outcomes[i, 1] == pytest.approx(50.0)
        assert panel.t_pre == 1

    def test_win_rate_formula_and_fill(self, tmp_path):
        rows = (
            day_rows("2022-05-01", 2, ["graves", "graves"], wins=[1, 1])
            + day_rows("2022-05-02", 2, ["other", "other"], wins=[1, 0])
        )
        # graves appears twice on day 1 (wins both), never on day 2
        rows = [r for r in rows if "graves,jungle" not in r or True]
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        panel = build_character_panel(
            loaded.records, metric="win_rate", t_pre_date=dt.date(2022, 5, 1),
            treated_unit="graves",
        )
        i = panel.unit_index("graves")
        assert panel.outcomes[i, 0] == pytest.approx(100.0)
        assert panel.outcomes[i, 1] == pytest.approx(50.0)  # neutral fill
        carried = build_character_panel(
            loaded.records, metric="win_rate", t_pre_date=dt.date(2022, 5, 1),
            treated_unit="graves", win_rate_fill="carry_forward",
        )
        assert carried.outcomes[carried.unit_index("graves"), 1] == pytest.approx(100.0)

    def test_two_day_two_character_matrix(self, tmp_path):
        # hand-counted 2x2 block: day1 graves 1/2 matches, ahri 2/2;
        # day2 graves 1/3, ahri 1/3
        rows = [
            row(match="d1m1", date="2022-05-01", player="p1", character="graves"),
            row(match="d1m1", date="2022-05-01", player="p2", character="ahri"),
            row(match="d1m2", date="2022-05-01", player="p3", character="ahri"),
            row(match="d2m1", date="2022-05-02", player="p1", character="graves"),
            row(match="d2m2", date="2022-05-02", player="p2", character="ahri"),
            row(match="d2m3", date="2022-05-02", player="p3", character="filler"),
        ]
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        panel = build_character_panel(
            loaded.records, t_pre_date=dt.date(2022, 5, 1), treated_unit="graves",
        )
        g, a = panel.unit_index("graves"), panel.unit_index("ahri")
        np.testing.assert_allclose(panel.outcomes[g], [50.0, 100.0 / 3.0])
        np.testing.assert_allclose(panel.outcomes[a], [100.0, 100.0 / 3.0])

    def test_empty_day_errors(self, tmp_path):
        rows = [
            row(match="m1", date="2022-05-01"),
            row(match="m2", date="2022-05-03", player="p2"),
        ]
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        with pytest.raises(ValidationError, match="2022-05-02"):
            build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 1),
                                  treated_unit="graves")

    def test_pick_rate_sum_bounded(self, tmp_path, rng):
        rows = []
        for d, date in enumerate(["2022-05-01", "2022-05-02"]):
            for m in range(3):
                match = f"{date}m{m}"
                for slot in range(int(rng.integers(2, 11))):
                    rows.append(row(match=match, date=date, player=f"p{m}-{slot}",
                                    character=f"c{slot}", win=slot % 2))
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        panel = build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 1),
                                      treated_unit="c0")
        sums = panel.outcomes.sum(axis=0)
        assert np.all(sums <= 1000.0 + 1e-9)

    def test_full_matches_sum_to_1000(self, tmp_path):
        rows = []
        for m in range(2):
            for slot in range(10):
                rows.append(row(match=f"m{m}", date="2022-05-01", player=f"p{m}{slot}",
                                character=f"c{slot}"))
            for slot in range(10):
                rows.append(row(match=f"n{m}", date="2022-05-02", player=f"q{m}{slot}",
                                character=f"c{slot}"))
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        panel = build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 1),
                                      treated_unit="c0")
        np.testing.assert_allclose(panel.outcomes.sum(axis=0), [1000.0, 1000.0])

    def test_region_counts_aggregate(self, tmp_path):
        rows = [
            row(match="m1", date="2022-05-01", region="euw", character="graves"),
            row(match="m2", date="2022-05-01", region="kr", player="p2", character="graves"),
            row(match="m3", date="2022-05-01", region="kr", player="p3", character="ahri"),
            row(match="m4", date="2022-05-02", region="euw", character="graves"),
            row(match="m5", date="2022-05-02", region="kr", player="p2", character="ahri"),
        ]
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)

        def appearances(panel, unit):
            # recover counts: rate * matches / 100
            return panel.outcomes[panel.unit_index(unit)]

        pooled = build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 1),
                                       treated_unit="graves")
        eu = build_character_panel(loaded.records, region_filter={"europe"},
                                   t_pre_date=dt.date(2022, 5, 1), treated_unit="graves")
        kr = build_character_panel(loaded.records, region_filter={"korea"},
                                   t_pre_date=dt.date(2022, 5, 1), treated_unit="graves")
        # day 1: pooled 2/3, europe 1/1, korea 1/2 -> counts 2 = 1 + 1
        assert pooled.outcomes[pooled.unit_index("graves"), 0] * 3 == pytest.approx(
            eu.outcomes[eu.unit_index("graves"), 0] * 1
            + kr.outcomes[kr.unit_index("graves"), 0] * 2
        )

    def test_exclusions_and_bad_treated(self, tmp_path):
        rows = [
            row(match="m1", date="2022-05-01", character="graves"),
            row(match="m1", date="2022-05-01", player="p2", character="belveth"),
            row(match="m2", date="2022-05-02", player="p3", character="graves"),
        ]
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        panel = build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 1),
                                      treated_unit="graves", exclude_units={"belveth"})
        assert "belveth" not in panel.units
        with pytest.raises(ValidationError, match="no appearances"):
            build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 1),
                                  treated_unit="belveth", exclude_units={"belveth"})

    def test_t_pre_date_must_be_inside_window(self, tmp_path):
        rows = [row(match="m1", date="2022-05-01"), row(match="m2", date="2022-05-02", player="p2")]
        loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
        with pytest.raises(ValidationError, match="strictly inside"):
            build_character_panel(loaded.records, t_pre_date=dt.date(2022, 5, 2),
                                  treated_unit="graves")


def ledger_from_rows(tmp_path, rows, focal="graves", t_pre="2022-05-02"):
    loaded = load_matches(write_csv(tmp_path, rows), window=WINDOW)
    return build_player_ledger(loaded.records, focal=focal, t_pre_date=dt.date.fromisoformat(t_pre))


class TestClassification:
    def make_player_rows(self, player, pre_matches, pre_picks, post_matches, post_picks):
        rows = []
        for i in range(pre_matches):
            rows.append(row(match=f"{player}pre{i}", date="2022-05-01", player=player,
                            character="graves" if i < pre_picks else f"x{i}", win=i % 2))
        for i in range(post_matches):
            rows.append(row(match=f"{player}post{i}", date="2022-05-03", player=player,
                            character="graves" if i < post_picks else f"x{i}", win=i % 2))
        return rows

    def test_threshold_and_groups(self, tmp_path):
        rows = (
            self.make_player_rows("below", 200, 9, 50, 5)      # 4.5% pre -> excluded
            + self.make_player_rows("steady", 60, 6, 40, 4)    # 10% -> 10%: control
            + self.make_player_rows("half", 60, 12, 40, 4)     # 20% -> 10%: moderate (50%)
            + self.make_player_rows("boundary", 100, 20, 100, 5)  # 20% -> 5%: exactly 75%
            + self.make_player_rows("quitter", 60, 12, 40, 0)  # 20% -> 0%: substantial
            + self.make_player_rows("fewgames", 30, 15, 10, 0)  # < 50 pre matches
        )
        ledger = ledger_from_rows(tmp_path, rows)
        classes = {c.player_id: c for c in classify_players(ledger)}
        assert classes["below"].group == "excluded"
        assert not classes["below"].prior_user
        assert classes["steady"].group == "control"
        assert classes["steady"].reduction_pct == pytest.approx(0.0)
        assert classes["half"].group == "moderate"
        assert classes["boundary"].group == "moderate"  # at most 75% stays moderate
        assert classes["boundary"].reduction_pct == pytest.approx(75.0)
        assert classes["quitter"].group == "substantial"
        assert classes["fewgames"].group == "excluded"

    def test_ledger_must_span_treatment(self, tmp_path):
        rows = [row(match=f"m{i}", date="2022-05-01", player="p", character="graves")
                for i in range(3)]
        path = write_csv(tmp_path, [row(match=f"m{i}", date="2022-05-01", player=f"q{i}")
                                    for i in range(3)])
        loaded = load_matches(path, window=WINDOW)
        ledger = build_player_ledger(loaded.records, focal="graves",
                                     t_pre_date=dt.date(2022, 5, 2))
        with pytest.raises(ValidationError, match="pre- and post-treatment"):
            classify_players(ledger)

    def test_increase_pools_into_control(self, tmp_path):
        rows = self.make_player_rows("fan", 60, 6, 40, 8)  # 10% -> 20%
        classes = classify_players(ledger_from_rows(tmp_path, rows))
        assert classes[0].group == "control"
        assert classes[0].reduction_pct < 0

    def test_partition_of_prior_users(self, tmp_path):
        rows = []
        rng = np.random.default_rng(5)
        for k in range(12):
            pre_picks = int(rng.integers(3, 30))
            post_picks = int(rng.integers(0, 20))
            rows += self.make_player_rows(f"pl{k}", 60, pre_picks, 40, post_picks)
        classes = classify_players(ledger_from_rows(tmp_path, rows))
        counts = group_counts(classes)
        prior = sum(1 for c in classes if c.prior_user)
        assert counts["control"] + counts["moderate"] + counts["substantial"] == prior
        assert counts["excluded"] == len(classes) - prior
        groups = [c.group for c in classes]
        assert all(g in ("control", "moderate", "substantial", "excluded") for g in groups)
        for c in classes:
            assert (c.group != "excluded") == c.prior_user


class TestGroupDailyMeans:
    def test_constant_win_rate(self, tmp_path):
        rows = TestClassification().make_player_rows("steady", 60, 6, 40, 4)
        ledger = ledger_from_rows(tmp_path, rows)
        classes = classify_players(ledger)
        means = group_daily_means(ledger, classes, outcome="win_rate")
        assert means.means["control"]["pre"] == pytest.approx(50.0)
        assert means.means["control"]["post"] == pytest.approx(50.0)

    def test_two_player_symmetry(self):
        day = dt.date(2022, 5, 1)
        post = dt.date(2022, 5, 3)
        from panelcause.dataio import PlayerDay, PlayerLedger

        def pd_(matches, wins):
            return PlayerDay(matches, wins, focal_picks=matches, kills=0, deaths=0, assists=0, gold=0)

        ledger = PlayerLedger(
            focal="graves", t_pre_date=dt.date(2022, 5, 2),
            days={
                "a": {day: pd_(10, 4), post: pd_(10, 4)},   # 40%
                "b": {day: pd_(10, 6), post: pd_(10, 6)},   # 60%
            },
        )
        classes = classify_players(ledger, min_pre_matches=5)
        means = group_daily_means(ledger, classes, outcome="win_rate")
        assert means.means["control"]["pre"] == pytest.approx(50.0)

    def test_player_then_group_order(self):
        # documented order: average within player across days, then across players
        day1, day2, post = dt.date(2022, 5, 1), dt.date(2022, 5, 2), dt.date(2022, 5, 3)
        from panelcause.dataio import PlayerDay, PlayerLedger

        def pd_(matches, wins):
            return PlayerDay(matches, wins, focal_picks=matches, kills=0, deaths=0, assists=0, gold=0)

        ledger = PlayerLedger(
            focal="graves", t_pre_date=dt.date(2022, 5, 2),
            days={
                # heavy player: daily win rates 100 and 0 -> player mean 50
                "heavy": {day1: pd_(90, 90), day2: pd_(10, 0), post: pd_(10, 5)},
                # light player: win rate 0 on the single pre day
                "light": {day1: pd_(60, 0), post: pd_(10, 5)},
                "third": {day1: pd_(60, 30), post: pd_(10, 5)},
            },
        )
        classes = classify_players(ledger, min_pre_matches=5)
        means = group_daily_means(ledger, classes, outcome="win_rate")
        # (50 + 0 + 50) / 3, not match-weighted
        assert means.means["control"]["pre"] == pytest.approx((50.0 + 0.0 + 50.0) / 3)

    def test_empty_group_omitted(self, tmp_path):
        rows = TestClassification().make_player_rows("steady", 60, 6, 40, 4)
        ledger = ledger_from_rows(tmp_path, rows)
        classes = classify_players(ledger)
        means = group_daily_means(ledger, classes, outcome="matches")
        assert "moderate" in means.omitted_groups
        assert "substantial" in means.omitted_groups
        assert "control" in means.means


class TestRoundTrips:
    def test_panel_roundtrip(self, tmp_path, rng):
        panel = make_panel(rng.normal(size=(3, 5)) + 10, t_pre=3, lgb=("d1",), excluded=("d2",))
        write_panel(panel, tmp_path / "panel.csv")
        back = read_panel(tmp_path / "panel.csv")
        assert back.units == panel.units
        assert back.times == panel.times
        np.testing.assert_array_equal(back.outcomes, panel.outcomes)
        assert back.treated_unit == panel.treated_unit
        assert back.t_pre == panel.t_pre
        assert back.lgb_units == panel.lgb_units
        assert back.excluded_units == panel.excluded_units

    def test_ledger_roundtrip(self, tmp_path):
        rows = TestClassification().make_player_rows("steady", 60, 6, 40, 4)
        ledger = ledger_from_rows(tmp_path, rows)
        write_ledger(ledger, tmp_path / "ledger.csv")
        back = read_ledger(tmp_path / "ledger.csv")
        assert back.focal == ledger.focal
        assert back.t_pre_date == ledger.t_pre_date
        assert back.days == ledger.days
