"""Independent brute-force oracles used to verify the estimators.

These deliberately avoid the library's own numerical code paths: the
weight oracle enumerates the simplex on a fixed grid, and the smoother
oracle is a direct double loop over the kernel formula.
"""

import math

import numpy as np


def simplex_grid(n: int, step: float) -> np.ndarray:
    """All weight vectors on the n-simplex with coordinates on a grid."""
    m = round(1.0 / step)
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        w1 = np.arange(m + 1) / m
        return np.stack([w1, 1.0 - w1], axis=1)
    if n == 3:
        chunks = []
        for i in range(m + 1):
            j = np.arange(m + 1 - i)
            k = m - i - j
            chunks.append(np.stack([np.full(len(j), i), j, k], axis=1))
        return np.concatenate(chunks) / m
    raise NotImplementedError("grid oracle supports up to 3 donors")


def grid_solve(donor_pre: np.ndarray, treated_pre: np.ndarray, zeta: float, step: float = 1e-3):
    """Exhaustive search for the ridge-penalized simplex weights."""
    d = np.atleast_2d(np.asarray(donor_pre, dtype=float))
    y = np.asarray(treated_pre, dtype=float)
    n, t_pre = d.shape
    grid = simplex_grid(n, step)
    resid = grid @ d - y
    objective = (resid**2).sum(axis=1) + zeta * zeta * t_pre * (grid**2).sum(axis=1)
    best = int(np.argmin(objective))
    return grid[best], float(objective[best])


def nw_reference(series, bandwidth: float, kernel: str = "gaussian"):
    """Direct O(n^2) Nadaraya-Watson evaluation over one segment."""
    y = [float(v) for v in series]
    n = len(y)
    out = []
    for i in range(n):
        num = den = 0.0
        for j in range(n):
            u = (i - j) / bandwidth
            if kernel == "gaussian":
                w = math.exp(-0.5 * u * u)
            else:
                w = max(0.0, 1.0 - u * u)
            num += w * y[j]
            den += w
        out.append(num / den)
    return np.array(out)
