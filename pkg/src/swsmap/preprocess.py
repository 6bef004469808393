"""Band-limited interpolation and time-lateral (TL) plane cleaning.

Cleaning works one axial depth at a time on the plane ``D(x, n)``:

1. crop to the lateral region of interest and scale every lateral row to
   unit peak,
2. find the time-to-peak (TTP) of each row and drop rows whose TTP lies
   far from a straight line fitted to the whole profile,
3. fit ``r`` lines to the high-amplitude support over contiguous lateral
   ranges (exact dynamic program over the breakpoints),
4. multiply the plane by a Gaussian ridge mask that follows those lines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample

from .errors import CleaningError, ParameterError
from .volume_io import DisplacementVolume

log = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny


# ---------------------------------------------------------------- interpolation

def fourier_upsample(a, factor: int, axis: int = -1):
    """Band-limited (periodic) interpolation by ``factor`` along ``axis``.

    Thin wrapper over :func:`scipy.signal.resample`: the output has
    ``factor * n`` samples and reproduces the input at every
    ``factor``-th sample (the Nyquist bin of an even-length input is split
    between the two image frequencies).
    """
    a = np.asarray(a, dtype=np.float64)
    if factor < 1:
        raise ParameterError(f"interpolation factor must be >= 1, got {factor}")
    if factor == 1:
        return a.copy()
    return resample(a, factor * a.shape[axis], axis=axis)


def temporal_upsample(sig, L: int):
    """Upsample along the last (time) axis by ``L``; works on stacks of signals."""
    return fourier_upsample(sig, L, axis=-1)


def lateral_interpolate(vol: DisplacementVolume, M: int) -> DisplacementVolume:
    """Interpolate ``M - 1`` particles between lateral neighbours.

    Output width is ``M*X - (M - 1)`` so that it ends on the last original
    column; the lateral sampling frequency is multiplied by ``M``.
    """
    if M < 1:
        raise ParameterError(f"lateral interpolation order must be >= 1, got {M}")
    if M == 1:
        return vol
    X = vol.data.shape[0]
    up = fourier_upsample(vol.data, M, axis=0)[: M * X - (M - 1)]
    return vol.with_data(up, fsp_px_per_mm=vol.fsp_px_per_mm * M, x_offset_px=vol.x_offset_px * M)


# ---------------------------------------------------------------- cleaning types

@dataclass(frozen=True)
class CleaningParams:
    """Parameters of TL-plane cleaning.

    ``t_sh`` is in squared samples, ``rho`` in samples, ``roi_x`` a
    half-open ``(lo, hi)`` column range on the grid of the volume being
    cleaned (``None`` keeps every column).  ``min_seg_px`` bounds the width
    of each fitted line's lateral range; ``None`` picks
    ``max(2, width // (2 * r))``.
    """

    t_sh: float = 250.0
    q: float = 0.9
    rho: float = 1.0
    r: int = 3
    roi_x: tuple | None = None
    min_seg_px: int | None = None

    def __post_init__(self):
        errors = []
        if not self.t_sh > 0:
            errors.append(f"t_sh must be > 0 (got {self.t_sh})")
        if not 0 < self.q < 1:
            errors.append(f"q must lie in (0, 1) (got {self.q})")
        if not self.rho > 0:
            errors.append(f"rho must be > 0 (got {self.rho})")
        if int(self.r) != self.r or self.r < 1:
            errors.append(f"r must be an integer >= 1 (got {self.r})")
        if self.roi_x is not None:
            lo, hi = self.roi_x
            if hi - lo < 2 * self.r:
                errors.append(f"roi_x {self.roi_x} is narrower than 2*r = {2 * self.r} columns")
        if errors:
            raise ParameterError("; ".join(errors))

    def roi_for(self, width: int):
        lo, hi = (0, width) if self.roi_x is None else (int(self.roi_x[0]), int(self.roi_x[1]))
        lo, hi = max(lo, 0), min(hi, width)
        if hi - lo < 1:
            raise ParameterError(f"empty lateral ROI {self.roi_x} for a {width}-column volume")
        return lo, hi


@dataclass
class TlPlane:
    d: np.ndarray  # (columns, N)
    z_index: int
    x_lo: int = 0


@dataclass(frozen=True)
class Line:
    """``n = slope * x + offset + n_ref`` over columns ``[x_lo, x_hi)``.

    The integer ``n_ref`` keeps the fit in coordinates relative to the
    plane's earliest supported sample, so delaying a plane by whole samples
    changes ``n_ref`` only.
    """

    slope: float  # samples per column
    offset: float  # samples, relative to n_ref
    x_lo: int
    x_hi: int
    n_ref: int = 0

    @property
    def intercept(self):
        return self.offset + self.n_ref


@dataclass
class PiecewiseLines:
    lines: list

    def __iter__(self):
        return iter(self.lines)

    def __len__(self):
        return len(self.lines)


# ---------------------------------------------------------------- cleaning steps

def extract_condition_plane(vol: DisplacementVolume, z_index: int, params: CleaningParams) -> TlPlane:
    """Crop the TL slice at ``z_index`` to the ROI and scale rows to unit peak.

    Rows whose peak is below ``1e-12`` of the plane's largest peak are set to
    zero instead of being scaled.
    """
    X, Z, _ = vol.data.shape
    if not 0 <= z_index < Z:
        raise ParameterError(f"z_index {z_index} outside [0, {Z})")
    lo, hi = params.roi_for(X)
    d = vol.data[lo:hi, z_index, :]
    return TlPlane(normalize_rows(d), z_index, lo)


def normalize_rows(d):
    peaks = d.max(axis=-1)
    top = peaks.max() if peaks.size else 0.0
    live = (peaks > 0) & (peaks >= 1e-12 * top)
    out = np.zeros_like(d, dtype=np.float64)
    out[live] = d[live] / peaks[live, None]
    return out


def ttp_profile(plane) -> np.ndarray:
    """Index of the peak sample in every lateral row (first one on ties)."""
    d = plane.d if isinstance(plane, TlPlane) else np.asarray(plane)
    return np.argmax(d, axis=-1)


def prune_outlier_peaks(profile, t_sh: float) -> np.ndarray:
    """Keep-mask of TTP points whose squared residual to a global LS line is <= ``t_sh``."""
    profile = np.asarray(profile, dtype=np.float64)
    if profile.size < 2:
        raise ParameterError("outlier pruning needs at least 2 lateral points")
    if np.isinf(t_sh):
        return np.ones(profile.size, dtype=bool)
    x = np.arange(profile.size, dtype=np.float64)
    rel = profile - profile.min()
    slope, intercept = np.polyfit(x, rel, 1)
    resid = rel - (slope * x + intercept)
    return resid ** 2 <= t_sh


def _segment_costs(cnt, sx, sn, sxx, sxn, snn, ncols, min_width):
    """SSE of the LS line for every column range ``[a, b)``; ``inf`` if infeasible."""
    P = [np.concatenate(([0.0], np.cumsum(v))) for v in (cnt, sx, sn, sxx, sxn, snn, ncols)]
    S0, Sx, Sn, Sxx, Sxn, Snn, C = (p[None, :] - p[:, None] for p in P)  # [a, b]
    W = cnt.size
    a_idx, b_idx = np.meshgrid(np.arange(W + 1), np.arange(W + 1), indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        var_x = Sxx - Sx * Sx / S0
        cov = Sxn - Sx * Sn / S0
        var_n = Snn - Sn * Sn / S0
        sse = var_n - cov * cov / var_x
    ok = (b_idx - a_idx >= min_width) & (C >= 2) & (var_x > 0)
    return np.where(ok, np.maximum(sse, 0.0), np.inf)


def _line_fit(cols, ns):
    x = np.asarray(cols, dtype=np.float64)
    y = np.asarray(ns, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    slope = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
    return slope, ym - slope * xm


def piecewise_fit(plane, kept, q: float, r: int, min_width: int | None = None) -> PiecewiseLines:
    """Fit ``r`` lines ``n = m*x + lambda`` over contiguous lateral ranges.

    The support is every ``(x, n)`` with ``D(x, n) >= q`` on a kept row.
    Breakpoints minimise the total squared residual of the ``r``
    independent least-squares lines exactly.  Ranges partition the plane's
    columns.  Raises :class:`CleaningError` when no partition gives every
    range at least two supported columns.
    """
    d = plane.d if isinstance(plane, TlPlane) else np.asarray(plane)
    W = d.shape[0]
    if min_width is None:
        min_width = max(2, W // (2 * r))
    min_width = max(2, int(min_width))
    support = (d >= q) & np.asarray(kept, dtype=bool)[:, None]
    cols, ns = np.nonzero(support)
    n_ref = int(ns.min()) if ns.size else 0
    ns = ns - n_ref
    if W < r * min_width:
        raise CleaningError(f"{W} columns cannot hold {r} ranges of width >= {min_width}")

    ns_f = ns.astype(np.float64)
    cnt = np.bincount(cols, minlength=W).astype(np.float64)
    sn = np.bincount(cols, weights=ns_f, minlength=W)
    snn = np.bincount(cols, weights=ns_f * ns_f, minlength=W)
    xcol = np.arange(W, dtype=np.float64)
    cost = _segment_costs(cnt, cnt * xcol, sn, cnt * xcol ** 2, sn * xcol, snn,
                          (cnt > 0).astype(np.float64), min_width)

    best = np.full((r + 1, W + 1), np.inf)
    arg = np.zeros((r + 1, W + 1), dtype=int)
    best[0, 0] = 0.0
    for k in range(1, r + 1):
        total = best[k - 1][:, None] + cost  # [a, b]
        arg[k] = np.argmin(total, axis=0)
        best[k] = total[arg[k], np.arange(W + 1)]
    if not np.isfinite(best[r, W]):
        raise CleaningError(f"insufficient support for {r} line(s) (q={q}, {support.sum()} points)")

    bounds = [W]
    for k in range(r, 0, -1):
        bounds.append(arg[k, bounds[-1]])
    bounds = bounds[::-1]
    lines = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        sel = (cols >= a) & (cols < b)
        slope, intercept = _line_fit(cols[sel], ns[sel])
        lines.append(Line(float(slope), float(intercept), int(a), int(b), n_ref))
    return PiecewiseLines(lines)


def build_mask(lines: PiecewiseLines, rho: float, dims) -> np.ndarray:
    """Gaussian ridge mask ``sum_j exp(-(n - m_j x - lambda_j)^2 / (2 rho^2))``.

    Each line contributes only inside its own lateral range.  The result is
    floored at the smallest normal double so it never reaches exactly zero.
    """
    W, N = dims
    phi = np.zeros((W, N))
    n = np.arange(N, dtype=np.float64)
    for ln in lines:
        x = np.arange(ln.x_lo, min(ln.x_hi, W), dtype=np.float64)
        theta = (n[None, :] - ln.n_ref) - ln.slope * x[:, None] - ln.offset
        if np.isinf(rho):
            phi[ln.x_lo:ln.x_hi] += 1.0
        else:
            phi[ln.x_lo:ln.x_hi] += np.exp(-theta ** 2 / (2.0 * rho * rho))
    return np.maximum(phi, _TINY)


def clean_plane(plane: TlPlane, params: CleaningParams):
    """Run pruning, line fitting and masking on a conditioned plane.

    Returns ``(cleaned, lines)``.  Falls back to a single line when ``r``
    lines cannot be fitted; re-raises :class:`CleaningError` if even that
    fails.
    """
    profile = ttp_profile(plane)
    kept = prune_outlier_peaks(profile, params.t_sh)
    try:
        lines = piecewise_fit(plane, kept, params.q, params.r, params.min_seg_px)
    except CleaningError:
        if params.r == 1:
            raise
        log.debug("z=%d: %d-line fit failed, retrying with one line", plane.z_index, params.r)
        lines = piecewise_fit(plane, kept, params.q, 1, params.min_seg_px)
    phi = np.minimum(build_mask(lines, params.rho, plane.d.shape), 1.0)
    return phi * plane.d, lines


def clean_volume(vol: DisplacementVolume, params: CleaningParams):
    """TL-clean every axial slice; returns ``(volume, failed)``.

    ``failed[z]`` marks slices where no line model could be fitted; those
    slices carry the normalised but unmasked ROI.
    """
    X, Z, N = vol.data.shape
    lo, hi = params.roi_for(X)
    if hi - lo < 2 * params.r and hi - lo < 4:
        raise ParameterError(f"ROI of {hi - lo} columns is too narrow for cleaning")
    out = np.empty((hi - lo, Z, N))
    failed = np.zeros(Z, dtype=bool)
    for z in range(Z):
        plane = extract_condition_plane(vol, z, params)
        try:
            out[:, z, :], _ = clean_plane(plane, params)
        except CleaningError as exc:
            log.warning("TL cleaning failed at z=%d (%s); keeping normalised slice", z, exc)
            failed[z] = True
            out[:, z, :] = plane.d
    cleaned = vol.with_data(out, x_offset_px=vol.x_offset_px + lo)
    return cleaned, failed


def tl_clean(vol: DisplacementVolume, params: CleaningParams) -> DisplacementVolume:
    """Cleaned, normalised ROI of ``vol`` (lateral extent = ROI)."""
    return clean_volume(vol, params)[0]
