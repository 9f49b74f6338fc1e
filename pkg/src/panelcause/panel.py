"""Balanced unit-by-day outcome panels and their on-disk format.

A panel is stored as a long-format CSV (``unit,date,value``) plus a JSON
sidecar carrying the treatment metadata (``treated_unit``, ``t_pre``,
``lgb_units``, ``excluded_units``). The sidecar lives next to the CSV
with the same stem and a ``.json`` suffix.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced unit x day outcome matrix with treatment metadata.

    ``outcomes[i, t]`` is the outcome of ``units[i]`` on ``times[t]``.
    The first ``t_pre`` columns are pre-treatment periods. ``lgb_units``
    are units that share the treated unit's disclosed group trait and are
    kept out of every donor pool to avoid spillover; ``excluded_units``
    are removed from donor pools for other reasons (e.g. late release).
    """

    units: tuple[str, ...]
    times: tuple[dt.date, ...]
    outcomes: np.ndarray
    treated_unit: str
    t_pre: int
    lgb_units: frozenset[str] = field(default_factory=frozenset)
    excluded_units: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "times", tuple(self.times))
        object.__setattr__(self, "lgb_units", frozenset(self.lgb_units))
        object.__setattr__(self, "excluded_units", frozenset(self.excluded_units))
        outcomes = np.asarray(self.outcomes, dtype=float)
        object.__setattr__(self, "outcomes", outcomes)
        n, t = len(self.units), len(self.times)
        if outcomes.shape != (n, t):
            raise ValidationError(
                f"outcomes shape {outcomes.shape} does not match {n} units x {t} times"
            )
        if len(set(self.units)) != n:
            raise ValidationError("duplicate unit labels in panel")
        if not np.all(np.isfinite(outcomes)):
            raise ValidationError("panel outcomes contain missing or non-finite cells")
        if not 1 <= self.t_pre < t:
            raise ValidationError(f"t_pre={self.t_pre} must satisfy 1 <= t_pre < T={t}")
        if self.treated_unit not in self.units:
            raise ValidationError(f"treated unit {self.treated_unit!r} not in panel units")
        if not self.lgb_units <= set(self.units):
            raise ValidationError("lgb_units must be a subset of panel units")

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_times(self) -> int:
        return len(self.times)

    def unit_index(self, unit: str) -> int:
        try:
            return self.units.index(unit)
        except ValueError:
            raise ValidationError(f"unit {unit!r} not in panel") from None

    def series(self, unit: str) -> np.ndarray:
        return self.outcomes[self.unit_index(unit)]

    def donor_labels(self) -> tuple[str, ...]:
        """Units eligible to receive synthetic-control weight."""
        blocked = {self.treated_unit} | self.lgb_units | self.excluded_units
        return tuple(u for u in self.units if u not in blocked)

    def with_treated(self, unit: str, extra_excluded: set[str] = frozenset()) -> "PanelDataset":
        """Reassign the (pseudo-)treated unit, optionally excluding more units."""
        return replace(
            self,
            treated_unit=unit,
            excluded_units=frozenset((self.excluded_units | set(extra_excluded)) - {unit}),
        )

    def with_t_pre(self, t_pre: int) -> "PanelDataset":
        return replace(self, t_pre=t_pre)

    def with_outcomes(self, outcomes: np.ndarray) -> "PanelDataset":
        return replace(self, outcomes=outcomes)


def write_panel(panel: PanelDataset, csv_path: str | Path) -> tuple[Path, Path]:
    """Write a panel as CSV plus JSON sidecar; returns both paths."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "date", "value"])
        for i, unit in enumerate(panel.units):
            for j, day in enumerate(panel.times):
                writer.writerow([unit, day.isoformat(), repr(float(panel.outcomes[i, j]))])
    sidecar = csv_path.with_suffix(".json")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "treated_unit": panel.treated_unit,
        "t_pre": panel.t_pre,
        "lgb_units": sorted(panel.lgb_units),
        "excluded_units": sorted(panel.excluded_units),
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, sidecar


def read_panel(csv_path: str | Path, sidecar_path: str | Path | None = None) -> PanelDataset:
    """Read a panel CSV and its JSON sidecar back into a :class:`PanelDataset`."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise ValidationError(f"panel file not found: {csv_path}")
    sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    if not sidecar.exists():
        raise ValidationError(f"panel sidecar not found: {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))

    values: dict[str, dict[dt.date, float]] = {}
    units: list[str] = []
    dates: set[dt.date] = set()
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"unit", "date", "value"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValidationError(f"panel CSV must have columns unit,date,value: {csv_path}")
        for lineno, row in enumerate(reader, start=2):
            unit = row["unit"]
            try:
                day = dt.date.fromisoformat(row["date"])
                value = float(row["value"])
            except ValueError as exc:
                raise ValidationError(f"{csv_path}:{lineno}: {exc}") from None
            if unit not in values:
                values[unit] = {}
                units.append(unit)
            if day in values[unit]:
                raise ValidationError(f"{csv_path}:{lineno}: duplicate cell ({unit}, {day})")
            values[unit][day] = value
            dates.add(day)

    times = tuple(sorted(dates))
    outcomes = np.empty((len(units), len(times)))
    for i, unit in enumerate(units):
        per_unit = values[unit]
        if len(per_unit) != len(times):
            missing = sorted(set(times) - set(per_unit))[:3]
            raise ValidationError(f"panel is unbalanced: unit {unit!r} missing days {missing}")
        for j, day in enumerate(times):
            outcomes[i, j] = per_unit[day]

    return PanelDataset(
        units=tuple(units),
        times=times,
        outcomes=outcomes,
        treated_unit=meta["treated_unit"],
        t_pre=int(meta["t_pre"]),
        lgb_units=frozenset(meta.get("lgb_units", [])),
        excluded_units=frozenset(meta.get("excluded_units", [])),
    )
