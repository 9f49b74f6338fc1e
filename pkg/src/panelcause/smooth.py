"""Nadaraya-Watson kernel smoothing for daily unit series.

Series are smoothed before synthetic-control estimation. The smoother
can run over the whole series or separately over the pre- and
post-treatment segments so the treatment-day jump is not blurred into
the pre-period fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

KERNELS = ("gaussian", "epanechnikov")
BOUNDARY_MODES = ("whole_series", "split_at_t_pre")


@dataclass(frozen=True)
class SmoothConfig:
    """Kernel smoother settings.

    bandwidth is in days. With ``split_at_t_pre`` the smoother never
    mixes pre- and post-treatment observations.
    """

    bandwidth: float = 7.0
    kernel: str = "gaussian"
    boundary_mode: str = "split_at_t_pre"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.kernel not in KERNELS:
            raise ValidationError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValidationError(
                f"boundary_mode must be one of {BOUNDARY_MODES}, got {self.boundary_mode!r}"
            )


def _kernel_weights(u: np.ndarray, kernel: str) -> np.ndarray:
    if kernel == "gaussian":
        return np.exp(-0.5 * u * u)
    # Epanechnikov; the 3/4 constant cancels in the weighted average.
    return np.maximum(0.0, 1.0 - u * u)


def _smooth_segment(values: np.ndarray, config: SmoothConfig) -> np.ndarray:
    t = np.arange(len(values), dtype=float)
    # (target, source) distance matrix on the integer day grid
    u = (t[:, None] - t[None, :]) / config.bandwidth
    w = _kernel_weights(u, config.kernel)
    return (w @ values) / w.sum(axis=1)


def nw_smooth(series, config: SmoothConfig, t_pre: int | None = None) -> np.ndarray:
    """Smooth one daily series with a Nadaraya-Watson kernel regression.

    Output has the same length as the input; every smoothed value is a
    convex combination of observed values, so it stays inside
    ``[min(series), max(series)]``.

    Args:
        series: observed values on a regular daily grid, no gaps.
        config: kernel, bandwidth and boundary handling.
        t_pre: number of pre-treatment periods; required when
            ``config.boundary_mode == "split_at_t_pre"``.
    """
    values = np.asarray(series, dtype=float)
    if values.ndim != 1:
        raise ValidationError("nw_smooth expects a one-dimensional series")
    if len(values) < 2:
        raise ValidationError("series must have length >= 2")
    if not np.all(np.isfinite(values)):
        raise ValidationError("series contains missing values")

    if config.boundary_mode == "whole_series":
        return _smooth_segment(values, config)

    if t_pre is None:
        raise ValidationError("t_pre is required for split_at_t_pre smoothing")
    if not 1 <= t_pre < len(values):
        raise ValidationError(f"t_pre={t_pre} out of range for series of length {len(values)}")
    out = np.empty_like(values)
    pre, post = values[:t_pre], values[t_pre:]
    out[:t_pre] = pre if len(pre) < 2 else _smooth_segment(pre, config)
    out[t_pre:] = post if len(post) < 2 else _smooth_segment(post, config)
    return out


def smooth_panel_outcomes(outcomes: np.ndarray, config: SmoothConfig, t_pre: int) -> np.ndarray:
    """Smooth every unit row of a panel outcome matrix identically."""
    out = np.empty_like(np.asarray(outcomes, dtype=float))
    for i in range(out.shape[0]):
        out[i] = nw_smooth(outcomes[i], config, t_pre=t_pre)
    return out
