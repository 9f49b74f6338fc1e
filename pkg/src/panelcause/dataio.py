"""Match-log ingestion and panel construction.

Input is a long-format CSV of per-player match rows (one row per player
per match). From those rows the module builds: balanced character-level
daily panels of pick or win rates, a per-player per-day ledger, and
player classifications by how strongly usage of a focal character
dropped after the treatment date.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .panel import PanelDataset

REQUIRED_COLUMNS = (
    "match_id",
    "date",
    "region",
    "player_id",
    "character",
    "role",
    "win",
    "kills",
    "deaths",
    "assists",
    "gold",
)

REGIONS = ("europe", "korea", "latin_america", "north_america", "other")

# server tag -> region bucket used for regional splits
SERVER_REGIONS = {
    "eune": "europe",
    "euw": "europe",
    "europe": "europe",
    "kr": "korea",
    "korea": "korea",
    "br": "latin_america",
    "lan": "latin_america",
    "las": "latin_america",
    "latin_america": "latin_america",
    "na": "north_america",
    "north_america": "north_america",
}

MAX_PLAYERS_PER_MATCH = 10

GROUPS = ("control", "moderate", "substantial", "excluded")


@dataclass(frozen=True)
class MatchRecord:
    """One player's row of one match."""

    match_id: str
    date: dt.date
    region: str
    player_id: str
    character: str
    role: str
    win: bool
    kills: int
    deaths: int
    assists: int
    gold: float


@dataclass(frozen=True)
class LoadedMatches:
    """Validated records plus ingestion accounting."""

    records: tuple[MatchRecord, ...]
    dropped_out_of_window: int


def normalize_region(tag: str) -> str:
    """Map a server tag to one of the four regional buckets (or other)."""
    return SERVER_REGIONS.get(tag.strip().lower(), "other")


def _parse_row(row: dict, lineno: int, schema: dict[str, str]) -> MatchRecord:
    def cell(name: str) -> str:
        value = row.get(schema[name])
        if value is None or value == "":
            raise ValidationError(f"row {lineno}: missing value in column {schema[name]!r}")
        return value.strip()

    def parse(name: str, caster, extra_check=None):
        raw = cell(name)
        try:
            value = caster(raw)
        except ValueError:
            raise ValidationError(
                f"row {lineno}: malformed value {raw!r} in column {schema[name]!r}"
            ) from None
        if extra_check is not None and not extra_check(value):
            raise ValidationError(
                f"row {lineno}: invalid value {raw!r} in column {schema[name]!r}"
            )
        return value

    win_raw = cell("win")
    if win_raw not in ("0", "1"):
        raise ValidationError(
            f"row {lineno}: win must be 0 or 1, got {win_raw!r} in column {schema['win']!r}"
        )
    return MatchRecord(
        match_id=cell("match_id"),
        date=parse("date", dt.date.fromisoformat),
        region=normalize_region(cell("region")),
        player_id=cell("player_id"),
        character=cell("character"),
        role=cell("role"),
        win=win_raw == "1",
        kills=parse("kills", int, lambda v: v >= 0),
        deaths=parse("deaths", int, lambda v: v >= 0),
        assists=parse("assists", int, lambda v: v >= 0),
        gold=parse("gold", float, lambda v: v >= 0),
    )


def load_matches(
    path: str | Path,
    schema: dict[str, str] | None = None,
    window: tuple[dt.date, dt.date] | None = None,
) -> LoadedMatches:
    """Load and validate a match-log CSV.

    Args:
        path: CSV file with a header row.
        schema: optional mapping from canonical column names to the
            file's column names; defaults to the identity mapping.
        window: inclusive (first_day, last_day) study window; rows
            outside it are dropped and counted, not errors.

    Enforces one row per (match_id, player_id), at most ten rows per
    match, and at most one occurrence of a character per match.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"match file not found: {path}")
    schema = {name: (schema or {}).get(name, name) for name in REQUIRED_COLUMNS}

    records: list[MatchRecord] = []
    dropped = 0
    seen_keys: set[tuple[str, str]] = set()
    match_rows: dict[str, int] = defaultdict(int)
    match_characters: dict[str, set[str]] = defaultdict(set)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty file, expected a header row")
        missing = [schema[c] for c in REQUIRED_COLUMNS if schema[c] not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing required columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            record = _parse_row(row, lineno, schema)
            key = (record.match_id, record.player_id)
            if key in seen_keys:
                raise ValidationError(
                    f"row {lineno}: duplicate (match_id, player_id) = {key}"
                )
            seen_keys.add(key)
            if window is not None and not (window[0] <= record.date <= window[1]):
                dropped += 1
                continue
            match_rows[record.match_id] += 1
            if match_rows[record.match_id] > MAX_PLAYERS_PER_MATCH:
                raise ValidationError(
                    f"row {lineno}: match {record.match_id!r} has more than "
                    f"{MAX_PLAYERS_PER_MATCH} player rows"
                )
            if record.character in match_characters[record.match_id]:
                raise ValidationError(
                    f"row {lineno}: character {record.character!r} appears twice "
                    f"in match {record.match_id!r}"
                )
            match_characters[record.match_id].add(record.character)
            records.append(record)

    return LoadedMatches(records=tuple(records), dropped_out_of_window=dropped)


def build_character_panel(
    records,
    metric: str = "pick_rate",
    region_filter: set[str] | None = None,
    t_pre_date: dt.date | None = None,
    exclude_units: set[str] = frozenset(),
    treated_unit: str | None = None,
    lgb_units: set[str] = frozenset(),
    win_rate_fill: str = "neutral",
) -> PanelDataset:
    """Build a balanced character-by-day panel of pick or win rates.

    Pick rate on day t is 100 times the share of day-t matches in which
    the character appears. Win rate is 100 times the share of the
    character's day-t appearances that were wins; days with zero
    appearances are filled with the neutral value 50 (or the previous
    day's value with ``win_rate_fill="carry_forward"``, seeded at 50).
    Characters listed in ``exclude_units`` (e.g. released after the
    treatment date) are dropped from the panel entirely.

    Args:
        records: iterable of :class:`MatchRecord`.
        metric: ``pick_rate`` or ``win_rate``.
        region_filter: optional set of region buckets to keep.
        t_pre_date: last pre-treatment day; must be strictly inside the
            observed day range.
        treated_unit: the character under study; required.
        lgb_units: characters flagged as sharing the treated unit's
            group trait (kept in the panel, excluded from donor pools).
    """
    if metric not in ("pick_rate", "win_rate"):
        raise ValidationError(f"metric must be pick_rate or win_rate, got {metric!r}")
    if win_rate_fill not in ("neutral", "carry_forward"):
        raise ValidationError(f"unknown win_rate_fill {win_rate_fill!r}")
    rows = [r for r in records if region_filter is None or r.region in region_filter]
    if not rows:
        raise ValidationError("no match records left after region filtering")
    if treated_unit is None:
        raise ValidationError("treated_unit is required to build a panel")
    if t_pre_date is None:
        raise ValidationError("t_pre_date is required to build a panel")

    first = min(r.date for r in rows)
    last = max(r.date for r in rows)
    if not first <= t_pre_date < last:
        raise ValidationError(
            f"t_pre_date {t_pre_date} must lie strictly inside the window [{first}, {last}]"
        )
    n_days = (last - first).days + 1
    times = tuple(first + dt.timedelta(days=i) for i in range(n_days))
    day_index = {day: i for i, day in enumerate(times)}

    exclude_units = set(exclude_units)
    matches_per_day = np.zeros(n_days)
    seen_matches: set[tuple[str, int]] = set()
    appearances: dict[str, np.ndarray] = {}
    wins: dict[str, np.ndarray] = {}
    units_in_order: list[str] = []

    for r in rows:
        t = day_index[r.date]
        match_key = (r.match_id, t)
        if match_key not in seen_matches:
            seen_matches.add(match_key)
            matches_per_day[t] += 1
        if r.character in exclude_units:
            continue
        if r.character not in appearances:
            appearances[r.character] = np.zeros(n_days)
            wins[r.character] = np.zeros(n_days)
            units_in_order.append(r.character)
        appearances[r.character][t] += 1
        if r.win:
            wins[r.character][t] += 1

    empty_days = [times[i].isoformat() for i in range(n_days) if matches_per_day[i] == 0]
    if empty_days:
        raise ValidationError(
            f"cannot balance the panel: no matches on {empty_days[:5]}"
            + ("..." if len(empty_days) > 5 else "")
        )

    units = tuple(sorted(units_in_order))
    if treated_unit not in units:
        raise ValidationError(f"treated unit {treated_unit!r} has no appearances in the data")
    outcomes = np.zeros((len(units), n_days))
    for i, unit in enumerate(units):
        if metric == "pick_rate":
            outcomes[i] = 100.0 * appearances[unit] / matches_per_day
        else:
            app = appearances[unit]
            with np.errstate(invalid="ignore", divide="ignore"):
                rate = 100.0 * wins[unit] / app
            if win_rate_fill == "neutral":
                outcomes[i] = np.where(app > 0, rate, 50.0)
            else:
                value = 50.0
                for t in range(n_days):
                    if app[t] > 0:
                        value = rate[t]
                    outcomes[i, t] = value

    t_pre = sum(1 for day in times if day <= t_pre_date)
    return PanelDataset(
        units=units,
        times=times,
        outcomes=outcomes,
        treated_unit=treated_unit,
        t_pre=t_pre,
        lgb_units=frozenset(lgb_units) & set(units),
        excluded_units=frozenset(),
    )


@dataclass(frozen=True)
class PlayerDay:
    """One player's aggregates for one day."""

    matches: int
    wins: int
    focal_picks: int
    kills: float
    deaths: float
    assists: float
    gold: float


@dataclass(frozen=True, eq=False)
class PlayerLedger:
    """Per-player per-day match aggregates around a focal character.

    ``days[player][date]`` holds that player-day's aggregates; the
    k/d/a/gold figures are per-match averages within the day.
    """

    focal: str
    t_pre_date: dt.date
    days: dict[str, dict[dt.date, PlayerDay]]

    @property
    def players(self) -> tuple[str, ...]:
        return tuple(sorted(self.days))

    def all_dates(self) -> tuple[dt.date, ...]:
        dates: set[dt.date] = set()
        for per_day in self.days.values():
            dates.update(per_day)
        return tuple(sorted(dates))

    def pre_matches(self, player: str) -> int:
        return sum(
            d.matches for day, d in self.days[player].items() if day <= self.t_pre_date
        )

    def _focal_pickrate(self, player: str, pre: bool) -> float:
        picks = matches = 0
        for day, d in self.days[player].items():
            if (day <= self.t_pre_date) == pre:
                picks += d.focal_picks
                matches += d.matches
        return 100.0 * picks / matches if matches else 0.0

    def pre_focal_pickrate(self, player: str) -> float:
        return self._focal_pickrate(player, pre=True)

    def post_focal_pickrate(self, player: str) -> float:
        return self._focal_pickrate(player, pre=False)


def build_player_ledger(records, focal: str, t_pre_date: dt.date) -> PlayerLedger:
    """Aggregate match rows into the per-player per-day ledger."""
    acc: dict[str, dict[dt.date, dict]] = defaultdict(dict)
    for r in records:
        slot = acc[r.player_id].setdefault(
            r.date,
            {"matches": 0, "wins": 0, "focal": 0, "kills": 0, "deaths": 0, "assists": 0, "gold": 0.0},
        )
        slot["matches"] += 1
        slot["wins"] += int(r.win)
        slot["focal"] += int(r.character == focal)
        slot["kills"] += r.kills
        slot["deaths"] += r.deaths
        slot["assists"] += r.assists
        slot["gold"] += r.gold
    days = {
        player: {
            day: PlayerDay(
                matches=s["matches"],
                wins=s["wins"],
                focal_picks=s["focal"],
                kills=s["kills"] / s["matches"],
                deaths=s["deaths"] / s["matches"],
                assists=s["assists"] / s["matches"],
                gold=s["gold"] / s["matches"],
            )
            for day, s in per_day.items()
        }
        for player, per_day in acc.items()
    }
    return PlayerLedger(focal=focal, t_pre_date=t_pre_date, days=days)


def write_ledger(ledger: PlayerLedger, csv_path: str | Path) -> tuple[Path, Path]:
    """Write a ledger as CSV plus a JSON sidecar with focal/date metadata."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["player_id", "date", "matches", "wins", "focal_picks", "kills", "deaths", "assists", "gold"]
        )
        for player in ledger.players:
            for day in sorted(ledger.days[player]):
                d = ledger.days[player][day]
                writer.writerow(
                    [player, day.isoformat(), d.matches, d.wins, d.focal_picks,
                     repr(d.kills), repr(d.deaths), repr(d.assists), repr(d.gold)]
                )
    sidecar = csv_path.with_suffix(".json")
    meta = {"focal": ledger.focal, "t_pre_date": ledger.t_pre_date.isoformat()}
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, sidecar


def read_ledger(csv_path: str | Path) -> PlayerLedger:
    """Read a ledger CSV (with its JSON sidecar) back."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise ValidationError(f"ledger file not found: {csv_path}")
    sidecar = csv_path.with_suffix(".json")
    if not sidecar.exists():
        raise ValidationError(f"ledger sidecar not found: {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    days: dict[str, dict[dt.date, PlayerDay]] = defaultdict(dict)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                days[row["player_id"]][dt.date.fromisoformat(row["date"])] = PlayerDay(
                    matches=int(row["matches"]),
                    wins=int(row["wins"]),
                    focal_picks=int(row["focal_picks"]),
                    kills=float(row["kills"]),
                    deaths=float(row["deaths"]),
                    assists=float(row["assists"]),
                    gold=float(row["gold"]),
                )
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"{csv_path}:{lineno}: {exc}") from None
    return PlayerLedger(
        focal=meta["focal"],
        t_pre_date=dt.date.fromisoformat(meta["t_pre_date"]),
        days=dict(days),
    )


@dataclass(frozen=True)
class PlayerClassification:
    """A player's treatment-group assignment."""

    player_id: str
    prior_user: bool
    pre_focal_pickrate: float
    post_focal_pickrate: float
    reduction_pct: float
    group: str


def classify_players(
    ledger: PlayerLedger,
    focal_threshold_pct: float = 5.0,
    min_pre_matches: int = 50,
    moderate_cut_pct: float = 75.0,
) -> list[PlayerClassification]:
    """Classify players by their post-treatment drop in focal usage.

    Prior users picked the focal character in at least
    ``focal_threshold_pct`` percent of their pre-treatment matches and
    played at least ``min_pre_matches`` of them; everyone else is
    excluded. Among prior users, no reduction (including an increase)
    means control, a reduction of at most ``moderate_cut_pct`` percent
    is moderate, and anything beyond is substantial.
    """
    dates = ledger.all_dates()
    if not dates or dates[0] > ledger.t_pre_date or dates[-1] <= ledger.t_pre_date:
        raise ValidationError("ledger must cover both pre- and post-treatment days")
    out: list[PlayerClassification] = []
    for player in ledger.players:
        pre_rate = ledger.pre_focal_pickrate(player)
        post_rate = ledger.post_focal_pickrate(player)
        pre_matches = ledger.pre_matches(player)
        prior = pre_rate >= focal_threshold_pct and pre_matches >= min_pre_matches
        if not prior:
            out.append(
                PlayerClassification(player, False, pre_rate, post_rate, float("nan"), "excluded")
            )
            continue
        if pre_rate <= 0:
            raise ValidationError(
                f"internal invariant violated: prior user {player!r} with zero pre pick rate"
            )
        reduction = 100.0 * (pre_rate - post_rate) / pre_rate
        if reduction <= 0:
            group = "control"
        elif reduction <= moderate_cut_pct:
            group = "moderate"
        else:
            group = "substantial"
        out.append(PlayerClassification(player, True, pre_rate, post_rate, reduction, group))
    return out


def group_counts(classifications) -> dict[str, int]:
    counts = {g: 0 for g in GROUPS}
    for c in classifications:
        counts[c.group] += 1
    return counts


@dataclass(frozen=True)
class GroupMeans:
    """Per-group pre/post means of a daily player outcome."""

    outcome: str
    means: dict[str, dict[str, float]]  # group -> {"pre": x, "post": y}
    omitted_groups: tuple[str, ...]


def group_daily_means(
    ledger: PlayerLedger,
    classifications,
    outcome: str = "pick_rate",
) -> GroupMeans:
    """Average a daily player outcome by group and pre/post period.

    Averaging order: each player's daily values are averaged over their
    observed days first, then players are averaged within the group, so
    heavy players do not dominate the group mean.
    """
    if outcome not in ("pick_rate", "matches", "win_rate"):
        raise ValidationError(f"unknown outcome {outcome!r}")
    if not classifications:
        raise ValidationError("classification is empty")

    def daily_value(d: PlayerDay) -> float:
        if outcome == "pick_rate":
            return 100.0 * d.focal_picks / d.matches
        if outcome == "matches":
            return float(d.matches)
        return 100.0 * d.wins / d.matches

    per_group: dict[str, dict[str, list[float]]] = {
        g: {"pre": [], "post": []} for g in GROUPS
    }
    for c in classifications:
        per_day = ledger.days.get(c.player_id, {})
        pre_values = [daily_value(d) for day, d in per_day.items() if day <= ledger.t_pre_date]
        post_values = [daily_value(d) for day, d in per_day.items() if day > ledger.t_pre_date]
        if pre_values:
            per_group[c.group]["pre"].append(float(np.mean(pre_values)))
        if post_values:
            per_group[c.group]["post"].append(float(np.mean(post_values)))

    means: dict[str, dict[str, float]] = {}
    omitted: list[str] = []
    for group in GROUPS:
        pre, post = per_group[group]["pre"], per_group[group]["post"]
        if not pre and not post:
            omitted.append(group)
            continue
        means[group] = {
            "pre": float(np.mean(pre)) if pre else float("nan"),
            "post": float(np.mean(post)) if post else float("nan"),
        }
    return GroupMeans(outcome=outcome, means=means, omitted_groups=tuple(omitted))
