"""Pure-Python weighted PAVA kernel (fallback when the C extension is absent)."""

from __future__ import annotations

import numpy as np


def pava(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted least-squares projection onto the non-decreasing cone.

    Parameters
    ----------
    values, weights : 1-d float64 arrays of equal length, weights > 0.

    Returns
    -------
    fitted : float64 array, non-decreasing.
    bounds : intp array of block boundaries; block b spans
        ``bounds[b]:bounds[b+1]`` and is constant in ``fitted``.
    """
    n = values.shape[0]
    mean = np.empty(n, dtype=np.float64)
    wsum = np.empty(n, dtype=np.float64)
    start = np.empty(n + 1, dtype=np.intp)
    m = 0
    for i in range(n):
        mean[m] = values[i]
        wsum[m] = weights[i]
        start[m] = i
        m += 1
        # pool while the last two blocks violate monotonicity
        while m > 1 and mean[m - 2] > mean[m - 1]:
            tot = wsum[m - 2] + wsum[m - 1]
            mean[m - 2] = (wsum[m - 2] * mean[m - 2] + wsum[m - 1] * mean[m - 1]) / tot
            wsum[m - 2] = tot
            m -= 1
    # coalesce equal-valued neighbours so blocks are maximal level sets
    out_m = 0
    for b in range(m):
        if out_m > 0 and mean[out_m - 1] == mean[b]:
            continue
        mean[out_m] = mean[b]
        start[out_m] = start[b]
        out_m += 1
    start[out_m] = n
    fitted = np.empty(n, dtype=np.float64)
    for b in range(out_m):
        fitted[start[b]:start[b + 1]] = mean[b]
    return fitted, start[:out_m + 1].copy()
