"""Synthetic-control estimation on balanced daily panels.

Donor weights solve a simplex-constrained least-squares problem with an
optional ridge penalty:

    minimize  sum_{t <= t_pre} (sum_i w_i Y[i,t] - Y[treated,t])^2
              + zeta^2 * t_pre * ||w||^2
    over      w_i >= 0,  sum_i w_i = 1

The solver is an accelerated projected-gradient method on the simplex
with periodic active-set polishing, stopped by a first-order (KKT)
criterion. The average post-treatment effect gets a variance estimate
from re-running the fit on every donor as a pseudo-treated unit.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, NumericalError, ValidationError
from .panel import PanelDataset
from .smooth import SmoothConfig, smooth_panel_outcomes

Z_95 = 1.959964

__all__ = [
    "SCWeights",
    "SCFit",
    "PlaceboVariance",
    "solve_weights",
    "simplex_projection",
    "kkt_residual",
    "zeta_rule",
    "fit",
    "placebo_variance",
    "placebo_dispersion",
    "pct_change",
]


@dataclass(frozen=True, eq=False)
class SCWeights:
    """Donor weights on the unit simplex plus solver diagnostics."""

    donor_labels: tuple[str, ...]
    omega: np.ndarray
    zeta: float
    objective_value: float
    kkt: float = 0.0
    iterations: int = 0

    def nonzero(self, threshold: float = 1e-6) -> dict[str, float]:
        """Donor labels carrying more than ``threshold`` weight."""
        return {
            label: float(w)
            for label, w in zip(self.donor_labels, self.omega)
            if w > threshold
        }


@dataclass(frozen=True, eq=False)
class SCFit:
    """A fitted synthetic control: counterfactual, effects and inference."""

    weights: SCWeights
    observed: np.ndarray
    counterfactual: np.ndarray
    effects: np.ndarray
    avg_effect: float
    pre_rmse: float
    pre_treatment_mean: float
    pct_change: float
    treated_unit: str
    t_pre: int
    variance: float | None = None
    ci_95: tuple[float, float] | None = None
    skipped_placebos: tuple[str, ...] = ()

    @property
    def post_rmse(self) -> float:
        return float(np.sqrt(np.mean(self.effects**2)))


@dataclass(frozen=True)
class PlaceboVariance:
    """Placebo-based variance of the average effect."""

    variance: float
    placebo_effects: dict[str, float]
    skipped: tuple[str, ...] = ()


def pct_change(avg_effect: float, pre_treatment_mean: float) -> float:
    """Average effect as a percentage of the pre-treatment mean."""
    if pre_treatment_mean == 0:
        return float("nan")
    return 100.0 * avg_effect / pre_treatment_mean


def simplex_projection(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sorting algorithm).

    Returns exact zeros for clipped coordinates, which the KKT check
    relies on to identify the support.
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def kkt_residual(omega: np.ndarray, grad: np.ndarray) -> float:
    """First-order stationarity residual on the simplex.

    Zero iff the gradient is constant on the support and no smaller on
    the zero coordinates (taking the smallest support gradient as the
    common value).
    """
    support = omega > 0
    gs = grad[support]
    lo = float(gs.min())
    residual = float(gs.max()) - lo
    if not support.all():
        residual = max(residual, float(np.max(lo - grad[~support])))
    return max(residual, 0.0)


def _support_qp(gram2, ones_rhs, support_idx):
    """Solve the equality-constrained QP restricted to a support set.

    Minimizes the quadratic over weights summing to one on the given
    support, via the bordered KKT linear system; falls back to a
    least-squares solve when the restricted Gram matrix is singular
    (possible with duplicate donors at zeta = 0). One step of iterative
    refinement keeps the multiplier usable at tight tolerances.
    """
    k = len(support_idx)
    m = np.empty((k + 1, k + 1))
    m[:k, :k] = gram2[np.ix_(support_idx, support_idx)]
    m[:k, k] = 1.0
    m[k, :k] = 1.0
    m[k, k] = 0.0
    rhs = np.empty(k + 1)
    rhs[:k] = ones_rhs[support_idx]
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(m, rhs)
        sol += np.linalg.solve(m, rhs - m @ sol)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(m, rhs, rcond=None)[0]
    return sol[:k], sol[k]


def _active_set_polish(a2, b2, omega, tol_abs, max_pivots):
    """Refine a feasible iterate to an exact KKT point by active-set pivots.

    ``a2``/``b2`` are twice the Gram matrix and twice the linear term, so
    gradients are ``a2 @ w - b2``. Returns the refined weights, which are
    only an improvement candidate: the caller re-checks the residual.
    """
    n = len(b2)
    support = omega > 0
    for _ in range(max_pivots):
        idx = np.flatnonzero(support)
        w_s, lam = _support_qp(a2, b2, idx)
        if w_s.min() >= -1e-14:
            candidate = np.zeros(n)
            candidate[idx] = np.maximum(w_s, 0.0)
            total = candidate.sum()
            if not np.isfinite(total) or total <= 0:
                return omega
            candidate /= total
            grad = a2 @ candidate - b2
            omega = candidate
            support = candidate > 0
            if support.all():
                return omega
            off = np.flatnonzero(~support)
            # lam is the negative of the common support gradient
            viol = -lam - grad[off]
            worst = int(np.argmax(viol))
            if viol[worst] <= tol_abs:
                return omega
            support[off[worst]] = True
        else:
            # step toward the unconstrained-support solution until a
            # weight hits zero, then drop it from the working set
            full = np.zeros(n)
            full[idx] = w_s
            direction = full - omega
            shrinking = direction < -1e-16
            if not shrinking.any():
                return omega
            steps = -omega[shrinking] / direction[shrinking]
            alpha = min(1.0, float(steps.min()))
            omega = np.maximum(omega + alpha * direction, 0.0)
            total = omega.sum()
            if total <= 0:
                return omega
            omega /= total
            support = omega > 0
            if not support.any():
                return omega
    return omega


def solve_weights(
    donor_pre,
    treated_pre,
    zeta: float,
    tol: float = 1e-8,
    max_iter: int = 10**5,
    donor_labels: tuple[str, ...] | None = None,
) -> SCWeights:
    """Solve for donor weights over the pre-treatment window.

    Args:
        donor_pre: matrix of donor outcomes, shape (n_donors, t_pre).
        treated_pre: treated unit's outcomes, shape (t_pre,).
        zeta: ridge strength; 0 disables the penalty.
        tol: KKT tolerance, interpreted relative to the quadratic scale
            of the data (``max(1, |Gram|, |linear term|)``) so the
            stopping rule stays attainable in floating point for
            arbitrarily scaled outcomes.
        max_iter: projected-gradient iteration cap.
        donor_labels: labels aligned with the rows of ``donor_pre``.

    Raises:
        ConvergenceError: residual above tolerance after ``max_iter``
            iterations; carries the best iterate and its residual.
    """
    d = np.atleast_2d(np.asarray(donor_pre, dtype=float))
    y = np.asarray(treated_pre, dtype=float)
    n_donors, t_pre = d.shape
    if n_donors < 1:
        raise ValidationError("need at least one donor")
    if t_pre < 2:
        raise ValidationError(f"need at least 2 pre-treatment periods, got {t_pre}")
    if y.shape != (t_pre,):
        raise ValidationError(f"treated_pre has length {y.shape}, expected {t_pre}")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(y))):
        raise ValidationError("missing values in pre-treatment data")
    if zeta < 0:
        raise ValidationError(f"zeta must be non-negative, got {zeta}")
    if donor_labels is None:
        donor_labels = tuple(f"donor_{i}" for i in range(n_donors))
    donor_labels = tuple(donor_labels)
    if len(donor_labels) != n_donors:
        raise ValidationError("donor_labels length does not match donor_pre rows")

    ridge = zeta * zeta * t_pre
    gram = d @ d.T
    gram[np.diag_indices_from(gram)] += ridge
    lin = d @ y
    const = float(y @ y)

    def objective(w):
        return float(w @ (gram @ w) - 2.0 * (lin @ w) + const)

    if n_donors == 1:
        omega = np.array([1.0])
        return SCWeights(donor_labels, omega, float(zeta), objective(omega), 0.0, 0)

    scale = max(1.0, float(np.abs(gram).max()), float(np.abs(lin).max()))
    tol_abs = tol * scale
    a2 = 2.0 * gram
    b2 = 2.0 * lin

    lipschitz = float(np.linalg.eigvalsh(a2)[-1])
    if lipschitz <= 0:
        # all-zero data: objective is constant, any feasible point is optimal
        omega = np.full(n_donors, 1.0 / n_donors)
        return SCWeights(donor_labels, omega, float(zeta), objective(omega), 0.0, 0)
    step = 1.0 / lipschitz

    x = np.full(n_donors, 1.0 / n_donors)
    momentum = x.copy()
    t_acc = 1.0
    best_omega, best_kkt = x.copy(), np.inf
    iterations = 0

    def check(candidate):
        nonlocal best_omega, best_kkt
        grad = a2 @ candidate - b2
        res = kkt_residual(candidate, grad)
        if res < best_kkt:
            best_kkt, best_omega = res, candidate.copy()
        return res

    if check(x) <= tol_abs:
        return SCWeights(donor_labels, x, float(zeta), objective(x), best_kkt, 0)

    for iteration in range(1, max_iter + 1):
        iterations = iteration
        grad_m = a2 @ momentum - b2
        x_new = simplex_projection(momentum - step * grad_m)
        # gradient-scheme restart keeps acceleration monotone enough
        if (momentum - x_new) @ (x_new - x) > 0:
            t_acc = 1.0
            momentum = x_new.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
            momentum = x_new + ((t_acc - 1.0) / t_next) * (x_new - x)
            t_acc = t_next
        x = x_new

        if iteration % 5 == 0 or iteration == max_iter:
            if check(x) <= tol_abs:
                break
            polished = _active_set_polish(a2, b2, x.copy(), tol_abs, max_pivots=4 * n_donors)
            if check(polished) <= tol_abs:
                break
    else:  # pragma: no cover - loop always breaks or raises below
        pass

    if best_kkt > tol_abs:
        raise ConvergenceError(
            f"weight solver did not reach tolerance {tol_abs:.3e} within "
            f"{max_iter} iterations (best residual {best_kkt:.3e})",
            best_weights=SCWeights(
                donor_labels, best_omega, float(zeta), objective(best_omega), best_kkt, iterations
            ),
            kkt_residual=best_kkt,
        )
    return SCWeights(
        donor_labels, best_omega, float(zeta), objective(best_omega), best_kkt, iterations
    )


def zeta_rule(panel: PanelDataset, ddof: int = 0) -> float:
    """Data-driven ridge strength.

    ``(T - t_pre)^(1/4)`` times the standard deviation of pre-treatment
    first differences pooled over all donor-pool units. ``ddof=0`` uses
    the population standard deviation.
    """
    donors = panel.donor_labels()
    if not donors:
        raise ValidationError("zeta rule needs at least one control unit")
    if panel.t_pre < 2:
        raise ValidationError("zeta rule needs at least 2 pre-treatment periods")
    idx = [panel.unit_index(u) for u in donors]
    pre = panel.outcomes[idx, : panel.t_pre]
    diffs = np.diff(pre, axis=1).ravel()
    sigma = float(np.std(diffs, ddof=ddof))
    return float((panel.n_times - panel.t_pre) ** 0.25 * sigma)


def _resolve_zeta(panel: PanelDataset, zeta, zeta_ddof: int) -> float:
    if isinstance(zeta, str):
        if zeta in ("zero", "0"):
            return 0.0
        if zeta == "rule":
            return zeta_rule(panel, ddof=zeta_ddof)
        try:
            value = float(zeta)
        except ValueError:
            raise ValidationError(f"zeta must be 'zero', 'rule' or a number, got {zeta!r}") from None
        return value
    return float(zeta)


def _apply_smoothing(panel: PanelDataset, smoothing: SmoothConfig | None) -> PanelDataset:
    if smoothing is None:
        return panel
    return panel.with_outcomes(
        smooth_panel_outcomes(panel.outcomes, smoothing, t_pre=panel.t_pre)
    )


def _fit_core(
    panel: PanelDataset,
    zeta,
    zeta_ddof: int,
    solver_tol: float,
    solver_max_iter: int,
) -> SCFit:
    donors = panel.donor_labels()
    if not donors:
        raise ValidationError("empty donor pool after exclusions")
    zeta_value = _resolve_zeta(panel, zeta, zeta_ddof)
    idx = np.array([panel.unit_index(u) for u in donors])
    t_pre = panel.t_pre
    donor_rows = panel.outcomes[idx]
    observed = panel.series(panel.treated_unit)

    weights = solve_weights(
        donor_rows[:, :t_pre],
        observed[:t_pre],
        zeta_value,
        tol=solver_tol,
        max_iter=solver_max_iter,
        donor_labels=donors,
    )
    counterfactual = weights.omega @ donor_rows
    effects = observed[t_pre:] - counterfactual[t_pre:]
    pre_gap = observed[:t_pre] - counterfactual[:t_pre]
    avg_effect = float(np.mean(effects))
    pre_mean = float(np.mean(observed[:t_pre]))
    return SCFit(
        weights=weights,
        observed=observed.copy(),
        counterfactual=counterfactual,
        effects=effects,
        avg_effect=avg_effect,
        pre_rmse=float(np.sqrt(np.mean(pre_gap**2))),
        pre_treatment_mean=pre_mean,
        pct_change=pct_change(avg_effect, pre_mean),
        treated_unit=panel.treated_unit,
        t_pre=t_pre,
    )


def placebo_dispersion(effects) -> float:
    """Population variance of placebo average effects around their mean."""
    arr = np.asarray(list(effects), dtype=float)
    return float(np.mean((arr - arr.mean()) ** 2))


def _placebo_variance_core(
    panel: PanelDataset,
    zeta,
    zeta_ddof: int,
    solver_tol: float,
    solver_max_iter: int,
    threads: int = 1,
) -> PlaceboVariance:
    donors = panel.donor_labels()
    if len(donors) < 2:
        raise ValidationError("placebo variance needs at least 2 donor units")

    def run(donor: str):
        pseudo = panel.with_treated(donor, extra_excluded={panel.treated_unit})
        try:
            return donor, _fit_core(pseudo, zeta, zeta_ddof, solver_tol, solver_max_iter).avg_effect
        except NumericalError:
            return donor, None

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, donors))
    else:
        results = [run(d) for d in donors]

    effects = {donor: eff for donor, eff in results if eff is not None}
    skipped = tuple(donor for donor, eff in results if eff is None)
    if len(effects) < 2:
        raise NumericalError(
            f"placebo variance failed: only {len(effects)} placebo fits succeeded"
        )
    return PlaceboVariance(
        variance=placebo_dispersion(effects.values()),
        placebo_effects=effects,
        skipped=skipped,
    )


def placebo_variance(
    panel: PanelDataset,
    zeta="zero",
    smoothing: SmoothConfig | None = None,
    zeta_ddof: int = 0,
    solver_tol: float = 1e-8,
    solver_max_iter: int = 10**5,
    threads: int = 1,
) -> PlaceboVariance:
    """Variance of the average effect from donor-as-pseudo-treated fits.

    Each donor in turn plays the treated unit, with the true treated
    unit excluded from every placebo pool. Failing placebo fits are
    skipped and recorded; fewer than two successes is an error.
    """
    work = _apply_smoothing(panel, smoothing)
    return _placebo_variance_core(work, zeta, zeta_ddof, solver_tol, solver_max_iter, threads)


def fit(
    panel: PanelDataset,
    zeta="zero",
    smoothing: SmoothConfig | None = None,
    with_variance: bool = True,
    zeta_ddof: int = 0,
    solver_tol: float = 1e-8,
    solver_max_iter: int = 10**5,
    threads: int = 1,
) -> SCFit:
    """Fit a synthetic control for the panel's treated unit.

    ``zeta`` is ``"zero"``, ``"rule"`` (data-driven ridge strength,
    recomputed on whatever data the solver sees) or an explicit value.
    With smoothing configured, the treated unit and all donors are
    smoothed identically before estimation. Unless ``with_variance`` is
    disabled, the average effect's variance and its 95% confidence
    interval come from placebo re-fits over the donor pool.
    """
    work = _apply_smoothing(panel, smoothing)
    result = _fit_core(work, zeta, zeta_ddof, solver_tol, solver_max_iter)
    if with_variance:
        pv = _placebo_variance_core(work, zeta, zeta_ddof, solver_tol, solver_max_iter, threads)
        half = Z_95 * float(np.sqrt(pv.variance))
        result = replace(
            result,
            variance=pv.variance,
            ci_95=(result.avg_effect - half, result.avg_effect + half),
            skipped_placebos=pv.skipped,
        )
    return result
