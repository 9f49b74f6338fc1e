"""Panel-data causal inference: synthetic controls, placebo inference,
difference-in-differences with doubly-robust estimation, and
simultaneous-treatment decomposition."""

__version__ = "0.1.0"

from .dataio import (
    MatchRecord,
    PlayerClassification,
    PlayerLedger,
    build_character_panel,
    build_player_ledger,
    classify_players,
    group_counts,
    group_daily_means,
    load_matches,
)
from .decomp import DecompResult, composite_unit, decompose
from .did import (
    AttSeries,
    DidPanel,
    att_doubly_robust,
    att_series,
    att_unconditional,
    build_did_panel,
    multiplier_bootstrap,
)
from .errors import ConvergenceError, NumericalError, PanelCauseError, ValidationError
from .panel import PanelDataset, read_panel, write_panel
from .robustness import backdate, leave_one_out, placebo_in_space
from .scm import SCFit, SCWeights, fit, pct_change, placebo_variance, solve_weights, zeta_rule
from .simgen import PlayerSimConfig, SimConfig, generate, generate_players
from .smooth import SmoothConfig, nw_smooth

__all__ = [
    "__version__",
    "PanelCauseError",
    "ValidationError",
    "NumericalError",
    "ConvergenceError",
    "PanelDataset",
    "read_panel",
    "write_panel",
    "MatchRecord",
    "PlayerLedger",
    "PlayerClassification",
    "load_matches",
    "build_character_panel",
    "build_player_ledger",
    "classify_players",
    "group_counts",
    "group_daily_means",
    "SmoothConfig",
    "nw_smooth",
    "SCWeights",
    "SCFit",
    "solve_weights",
    "zeta_rule",
    "fit",
    "placebo_variance",
    "pct_change",
    "placebo_in_space",
    "backdate",
    "leave_one_out",
    "DidPanel",
    "AttSeries",
    "build_did_panel",
    "att_unconditional",
    "att_doubly_robust",
    "multiplier_bootstrap",
    "att_series",
    "DecompResult",
    "composite_unit",
    "decompose",
    "SimConfig",
    "PlayerSimConfig",
    "generate",
    "generate_players",
]
