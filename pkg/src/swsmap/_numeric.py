"""Small numeric helpers shared by the estimators."""

import numpy as np

# Candidates within this fraction of the curve's dynamic range of the best value
# are treated as ties.  Differences that small come from rounding, not data, and
# letting them decide the winner would break scale and shift invariance.
TIE_RTOL = 1e-10


def argbest(values, maximize=False, axis=-1, rtol=TIE_RTOL):
    """Index of the best value along ``axis``; near-ties go to the smallest index.

    Non-finite entries never win unless every entry is non-finite, in which
    case index 0 is returned.
    """
    v = np.asarray(values, dtype=np.float64)
    if maximize:
        v = -v
    finite = np.isfinite(v)
    filled = np.where(finite, v, np.inf)
    best = filled.min(axis=axis, keepdims=True)
    scale = np.where(finite, np.abs(v), 0.0).max(axis=axis, keepdims=True)
    cand = finite & (filled <= best + rtol * scale)
    return np.argmax(cand, axis=axis)
