import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from panelcause.panel import PanelDataset


def make_panel(outcomes, treated_unit="treated", t_pre=None, lgb=(), excluded=(), units=None):
    """Small panel helper: rows are units, first row is the treated unit."""
    outcomes = np.asarray(outcomes, dtype=float)
    n, t = outcomes.shape
    if units is None:
        units = [treated_unit] + [f"d{i}" for i in range(1, n)]
    if t_pre is None:
        t_pre = t // 2
    times = [dt.date(2022, 1, 1) + dt.timedelta(days=i) for i in range(t)]
    return PanelDataset(
        units=tuple(units),
        times=tuple(times),
        outcomes=outcomes,
        treated_unit=units[0],
        t_pre=t_pre,
        lgb_units=frozenset(lgb),
        excluded_units=frozenset(excluded),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
