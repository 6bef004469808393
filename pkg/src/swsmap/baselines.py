"""Reference speed estimators: TTP regression, TTP slope averaging,
pairwise cross-correlation and Fourier-domain shift matching (FDSM).

All four work on the volume's own lateral grid.  Peak times and
correlation lags are located at the ``L``-times upsampled rate and kept as
integers, which makes every map invariant to amplitude scaling and to a
common integer delay of all signals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.stats import trim_mean

from ._numeric import argbest
from .errors import ParameterError
from .preprocess import temporal_upsample
from .volume_io import DisplacementVolume, SwsMap

MIN_SLOPE = 1e-6  # ms/mm
FLAT_RATIO = 1.05


@dataclass(frozen=True)
class BaselineParams:
    """Settings shared by the reference estimators.

    ``fit_halfwidth_px`` is the half-width of the TTP regression window,
    ``dx_px`` the neighbour offset of the cross-correlation pair, ``L`` the
    upsampling factor used to locate peaks and lags, ``theta_grid`` the
    FDSM speed grid ``(lo, hi, step)`` in m/s, ``f_sig_hz`` the FDSM
    temporal band limit and ``window_mm`` the FDSM strip width.
    """

    fit_halfwidth_px: int = 3
    theta_grid: tuple = (0.5, 6.0, 0.01)
    f_sig_hz: float = 1000.0
    dx_px: int = 1
    L: int = 10
    window_mm: float = 8.0
    trim: float = 0.2

    def __post_init__(self):
        errors = []
        if int(self.fit_halfwidth_px) != self.fit_halfwidth_px or self.fit_halfwidth_px < 1:
            errors.append(f"fit_halfwidth_px must be an integer >= 1 (got {self.fit_halfwidth_px})")
        lo, hi, step = self.theta_grid
        if not (lo > 0 and step > 0 and hi >= lo):
            errors.append(f"theta grid needs lo > 0, step > 0, hi >= lo (got {self.theta_grid})")
        if not self.f_sig_hz > 0:
            errors.append("f_sig_hz must be > 0")
        if int(self.dx_px) != self.dx_px or self.dx_px < 1:
            errors.append(f"dx_px must be an integer >= 1 (got {self.dx_px})")
        if int(self.L) != self.L or self.L < 1:
            errors.append(f"L must be an integer >= 1 (got {self.L})")
        if not self.window_mm > 0:
            errors.append("window_mm must be > 0")
        if not 0 <= self.trim < 0.5:
            errors.append("trim must lie in [0, 0.5)")
        if errors:
            raise ParameterError("; ".join(errors))

    def thetas(self):
        lo, hi, step = self.theta_grid
        return lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)


# ---------------------------------------------------------------- TTP

def peak_indices(vol: DisplacementVolume, L: int) -> np.ndarray:
    """Integer time-to-peak of every signal at the ``L``-times upsampled rate."""
    X, Z, _ = vol.data.shape
    out = np.empty((X, Z), dtype=int)
    for z in range(Z):
        out[:, z] = argbest(temporal_upsample(vol.data[:, z, :], L), maximize=True)
    return out


def _ttp_windows(vol, bp):
    """Relative peak times (ms) and lateral offsets (mm) of each fit window."""
    X, Z, _ = vol.data.shape
    h = int(bp.fit_halfwidth_px)
    if 2 * h + 1 > X:
        raise ParameterError(f"fit window of {2 * h + 1} columns exceeds volume width {X}")
    p = peak_indices(vol, bp.L)
    offs = np.arange(-h, h + 1)
    centers = np.arange(h, X - h)
    # integer differences first, so a common delay cancels exactly
    rel = p[centers[:, None] + offs[None, :]] - p[centers][:, None, :]
    t_ms = rel * (1000.0 / (bp.L * vol.fs_hz))
    x_mm = offs / vol.fsp_px_per_mm
    return centers, t_ms, x_mm


def _to_map(X, Z, centers, slope):
    """Speed map from window slopes (ms/mm); flat or negative slopes are invalid."""
    data = np.full((X, Z), np.nan)
    ok = np.isfinite(slope) & (slope >= MIN_SLOPE)
    vals = np.full(slope.shape, np.nan)
    vals[ok] = 1.0 / slope[ok]
    data[centers] = vals
    return SwsMap(data, np.isfinite(data))


def estimate_ttp(vol: DisplacementVolume, bp: BaselineParams = BaselineParams()) -> SwsMap:
    """Speed from the LS slope of peak time against lateral position.

    Pixels closer than ``fit_halfwidth_px`` to the lateral edge are invalid.
    """
    X, Z, _ = vol.data.shape
    centers, t_ms, x_mm = _ttp_windows(vol, bp)
    xc = x_mm - x_mm.mean()
    slope = np.einsum("k,ckz->cz", xc, t_ms) / np.dot(xc, xc)
    return _to_map(X, Z, centers, slope)


def estimate_ttp_avg(vol: DisplacementVolume, bp: BaselineParams = BaselineParams()) -> SwsMap:
    """Speed from the trimmed mean of consecutive peak-time slopes in the window."""
    X, Z, _ = vol.data.shape
    centers, t_ms, x_mm = _ttp_windows(vol, bp)
    slopes = np.diff(t_ms, axis=1) / np.diff(x_mm)[None, :, None]
    slope = trim_mean(slopes, bp.trim, axis=1)
    return _to_map(X, Z, centers, slope)


# ---------------------------------------------------------------- cross-correlation

def xcorr_lags(a, b, L: int = 1):
    """Lag maximising the plain correlation ``sum a(n) b(n + lag)``, row-wise.

    The correlation is computed at the input rate over all lags and then
    interpolated ``L`` times (band-limited), so the returned lag is in
    samples at the upsampled rate.  Rows where either signal is
    identically zero get ``0``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    n = a.shape[-1]
    nfft = next_fast_len(2 * n - 1, real=True)
    r = irfft(np.conj(rfft(a, nfft, axis=-1)) * rfft(b, nfft, axis=-1), nfft, axis=-1)
    full = np.concatenate([r[..., nfft - n + 1:], r[..., :n]], axis=-1)  # lags -(n-1) .. n-1
    up = temporal_upsample(full, L)
    lags = argbest(up, maximize=True) - L * (n - 1)
    dead = ~np.any(a != 0, axis=-1) | ~np.any(b != 0, axis=-1)
    return np.where(dead, 0, lags)


def estimate_xcorr(vol: DisplacementVolume, bp: BaselineParams = BaselineParams()) -> SwsMap:
    """Speed from the correlation lag between the columns ``dx_px`` either side.

    Zero signals and non-positive lags give invalid pixels.
    """
    X, Z, _ = vol.data.shape
    d = int(bp.dx_px)
    if 2 * d >= X:
        raise ParameterError(f"dx_px={d} leaves no pixel with both neighbours in {X} columns")
    data = np.full((X, Z), np.nan)
    for z in range(Z):
        sig = vol.data[:, z, :]
        lag = xcorr_lags(sig[:X - 2 * d], sig[2 * d:], bp.L)
        ok = lag >= 1
        c = np.full(lag.shape, np.nan)
        c[ok] = 2 * d / lag[ok] * (bp.L * vol.fs_hz) / vol.fsp_px_per_mm * 1e-3
        data[d:X - d, z] = c
    return SwsMap(data, np.isfinite(data))


# ---------------------------------------------------------------- FDSM

@dataclass
class FdsmResult:
    """FDSM map plus per-pixel flags.

    ``flat`` marks pixels whose strip objective had no clear peak (these
    are invalid in ``sws``); ``at_edge`` marks estimates that sit on an end
    of the speed grid and are therefore low-confidence.
    """

    sws: SwsMap
    flat: np.ndarray
    at_edge: np.ndarray

    @property
    def flat_fraction(self) -> float:
        return float(self.flat.mean())


def _strips(X, width_px):
    n = max(1, X // max(width_px, 1))
    return [s for s in np.array_split(np.arange(X), n) if s.size]


def _fdsm_basis(P, N, fs_hz, fsp_px_per_mm, thetas, f_sig_hz):
    """Spatial bins (1 .. p) and the phasors ``exp(j 2 pi k_m theta t_n)``."""
    k = np.arange(1, P // 2 + 1) * fsp_px_per_mm / P  # cycles/mm
    k = k[k <= f_sig_hz / (1000.0 * thetas[0])]
    if k.size == 0:
        raise ParameterError("FDSM strip is too narrow to hold any spatial frequency")
    t_ms = np.arange(N) * (1000.0 / fs_hz)
    phase = np.exp(2j * np.pi * k[None, :, None] * thetas[:, None, None] * t_ms[None, None, :])
    return k.size, phase


def fdsm_objective(tl_plane, fs_hz, fsp_px_per_mm, thetas, f_sig_hz):
    """Shift-matching objective over ``thetas`` for one ``(x, n)`` strip.

    ``sum_m |sum_n exp(j 2 pi k_m theta t_n) U(k_m, n)|`` with ``k_m`` in
    cycles/mm, ``t_n`` in ms and ``U`` the spatial DFT of each frame.
    Accepts a stack of strips ``(..., P, N)``.
    """
    tl_plane = np.asarray(tl_plane, dtype=np.float64)
    P, N = tl_plane.shape[-2:]
    p, phase = _fdsm_basis(P, N, fs_hz, fsp_px_per_mm, thetas, f_sig_hz)
    U = np.fft.fft(tl_plane, axis=-2)[..., 1:p + 1, :]
    return np.abs(np.einsum("tmn,...mn->...tm", phase, U)).sum(axis=-1)


def estimate_fdsm_detailed(vol: DisplacementVolume, bp: BaselineParams = BaselineParams()) -> FdsmResult:
    """FDSM speed per lateral strip of ``window_mm`` at every depth."""
    X, Z, N = vol.data.shape
    thetas = bp.thetas()
    width = int(round(bp.window_mm * vol.fsp_px_per_mm))
    data = np.full((X, Z), np.nan)
    flat = np.zeros((X, Z), dtype=bool)
    edge = np.zeros((X, Z), dtype=bool)
    for cols in _strips(X, width):
        strip = np.moveaxis(vol.data[cols], 1, 0)  # (Z, P, N)
        obj = fdsm_objective(strip, vol.fs_hz, vol.fsp_px_per_mm, thetas, bp.f_sig_hz)
        mean = obj.mean(axis=-1)
        peaked = (mean > 0) & (obj.max(axis=-1) >= FLAT_RATIO * mean)
        i = argbest(obj, maximize=True)
        flat[cols] = ~peaked
        data[cols] = np.where(peaked, thetas[i], np.nan)
        edge[cols] = peaked & ((i == 0) | (i == thetas.size - 1))
    return FdsmResult(SwsMap(data, np.isfinite(data)), flat, edge)


def estimate_fdsm(vol: DisplacementVolume, bp: BaselineParams = BaselineParams()) -> SwsMap:
    return estimate_fdsm_detailed(vol, bp).sws


ESTIMATORS = {
    "ttp": estimate_ttp,
    "ttp-avg": estimate_ttp_avg,
    "xcorr": estimate_xcorr,
    "fdsm": estimate_fdsm,
}
