"""Region statistics, contrast-to-noise ratio, PSNR and median post-filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, UsageError
from .volume_io import RegionMask, SwsMap


@dataclass(frozen=True)
class RegionStats:
    mean: float
    std: float
    count: int


def region_stats(sws: SwsMap, mask: RegionMask) -> RegionStats:
    """Mean and population standard deviation over valid pixels in ``mask``."""
    m = mask.mask if isinstance(mask, RegionMask) else np.asarray(mask, dtype=bool)
    if m.shape != sws.shape:
        raise DataError(f"mask shape {m.shape} does not match map shape {sws.shape}")
    vals = sws.data[m & sws.valid]
    if vals.size == 0:
        raise UsageError("region selects no valid pixel")
    return RegionStats(float(vals.mean()), float(vals.std()), int(vals.size))


def cnr_from_stats(inc: RegionStats, bg: RegionStats) -> float:
    """``20 log10(|mu_I - mu_B| / sqrt(sd_I^2 + sd_B^2))`` in dB.

    Equal means give ``-inf``; a zero spread with distinct means gives ``+inf``.
    """
    num = abs(inc.mean - bg.mean)
    den = np.sqrt(inc.std ** 2 + bg.std ** 2)
    if num == 0:
        return float("-inf")
    if den == 0:
        return float("inf")
    return float(20.0 * np.log10(num / den))


def cnr(sws: SwsMap, inc: RegionMask, bg: RegionMask) -> float:
    return cnr_from_stats(region_stats(sws, inc), region_stats(sws, bg))


def psnr(sws: SwsMap, label) -> float:
    """PSNR in dB of the map against a reference speed map.

    Map and label are each divided by their own maximum over the map's
    valid pixels; the MSE is averaged over those pixels.  A perfect match
    gives ``+inf``.
    """
    ref = np.asarray(getattr(label, "c", label), dtype=np.float64)
    if ref.shape != sws.shape:
        raise DataError(f"label shape {ref.shape} does not match map shape {sws.shape}")
    v = sws.valid
    if not v.any():
        raise UsageError("map has no valid pixel")
    a = sws.data[v]
    b = ref[v]
    mse = np.mean((a / a.max() - b / b.max()) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def median_filter(sws: SwsMap, w: int = 5) -> SwsMap:
    """``w x w`` median over valid neighbours; edges use the available window.

    Invalid pixels are filled with their neighbourhood median when at
    least three valid neighbours exist.  With an even count the middle
    value closer to the pixel's own value is taken (the lower one for
    invalid pixels or exact ties), so the output is always an input value
    and a step edge does not creep.
    """
    if int(w) != w or w < 1 or w % 2 == 0:
        raise ParameterError(f"median window must be a positive odd integer, got {w}")
    h = w // 2
    X, Z = sws.shape
    src = np.pad(np.where(sws.valid, sws.data, np.nan), h, constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(src, (w, w)).reshape(X, Z, w * w)
    count = np.sum(np.isfinite(win), axis=-1)
    ranked = np.sort(win, axis=-1)  # NaNs sort last
    lo_i = np.maximum(count - 1, 0)[..., None] // 2
    lower = np.take_along_axis(ranked, lo_i, axis=-1)[..., 0]
    upper = np.take_along_axis(ranked, np.minimum(count // 2, w * w - 1)[..., None], axis=-1)[..., 0]
    own = np.where(sws.valid, sws.data, np.nan)
    with np.errstate(invalid="ignore"):
        take_upper = (count % 2 == 0) & (np.abs(upper - own) < np.abs(lower - own))
    med = np.where(take_upper, upper, lower)
    valid = np.where(sws.valid, count >= 1, count >= 3)
    return SwsMap(np.where(valid, med, np.nan), valid)
