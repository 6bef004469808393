"""Kernel-constrained shift estimation on signal groups.

A signal group is the displacement of one particle (``u0``) and of its two
lateral neighbours ``dx_px`` columns before (``u1``) and after (``u2``).
For a candidate integer shift ``T`` (in samples at the upsampled rate
``L * fs``) the group is scored by

* a time-domain loss, ``2 - NCC(u1 shifted by T, u0) - NCC(u0 shifted by T, u2)``,
* a phase-domain loss, the magnitude-weighted squared distance between the
  regression lines of the two neighbour phase differences and the line of
  slope ``T / L``,
* or a weighted sum of both.

The loss of every group in an ``l x a`` neighbourhood is weighted by a
normalised Gaussian kernel and the weighted total is minimised over a
search range bounded by the pairwise delays of the neighbourhood.  The
winning ``T`` converts to speed through the lateral distance ``dx_px``.

Shifts are zero-filled (samples moved past the end are dropped).  The wave
is assumed to travel towards increasing ``x``; delays are searched over
non-negative shifts only.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from ._numeric import argbest
from .errors import DataError, ParameterError, UsageError
from .preprocess import CleaningParams, clean_volume, lateral_interpolate, temporal_upsample
from .volume_io import DisplacementVolume, SwsMap

log = logging.getLogger(__name__)

EPS = 1e-12
# NCC values whose shifted-signal energy is below this fraction of the full
# energy are set to 0: the remaining overlap carries no usable signal and
# the FFT correlation is dominated by rounding there.
_OVERLAP_FLOOR = 1e-10

MODES = ("td", "pd", "combined")


@dataclass(frozen=True)
class OptimizationParams:
    """Settings of the kernel-constrained optimisation.

    ``dx_px`` is the lateral group half-spacing on the (interpolated) grid
    the estimator runs on, ``l`` and ``a`` the lateral and axial kernel
    extents, ``L`` the temporal upsampling factor.
    """

    dx_px: int = 1
    l: int = 5
    a: int = 5
    sigma_w: float = 1.0
    L: int = 10
    f_sig_hz: float = 500.0
    gamma1: float = 1.0
    gamma2: float = 0.2
    mode: str = "td"

    def __post_init__(self):
        errors = []
        if int(self.dx_px) != self.dx_px or self.dx_px < 1:
            errors.append(f"dx_px must be an integer >= 1 (got {self.dx_px})")
        for name in ("l", "a"):
            v = getattr(self, name)
            if int(v) != v or v < 1 or v % 2 == 0:
                errors.append(f"kernel extent {name} must be a positive odd integer (got {v})")
        if not self.sigma_w > 0:
            errors.append(f"sigma_w must be > 0 (got {self.sigma_w})")
        if int(self.L) != self.L or self.L < 1:
            errors.append(f"L must be an integer >= 1 (got {self.L})")
        if not self.f_sig_hz > 0:
            errors.append(f"f_sig_hz must be > 0 (got {self.f_sig_hz})")
        if self.gamma1 < 0 or self.gamma2 < 0:
            errors.append("gamma1 and gamma2 must be >= 0")
        if self.mode not in MODES:
            errors.append(f"mode must be one of {MODES} (got {self.mode!r})")
        elif self.mode == "combined" and not self.gamma1 + self.gamma2 > 0:
            errors.append("combined mode needs gamma1 + gamma2 > 0")
        if errors:
            raise ParameterError("; ".join(errors))

    def check_rate(self, fs_hz):
        if not self.f_sig_hz < fs_hz / 2:
            raise ParameterError(f"f_sig_hz {self.f_sig_hz} must be below fs/2 = {fs_hz / 2}")

    @property
    def uses_td(self):
        return self.mode == "td" or self.mode == "combined"

    @property
    def uses_pd(self):
        return self.mode == "pd" or self.mode == "combined"


@dataclass(frozen=True)
class SignalGroup:
    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=np.float64) for k in ("u0", "u1", "u2")]
        if any(a.ndim != 1 for a in arrs) or len({a.size for a in arrs}) != 1:
            raise DataError("group signals must be 1-D and of equal length")
        if not all(np.isfinite(a).all() for a in arrs):
            raise DataError("group signals must be finite")
        for k, a in zip(("u0", "u1", "u2"), arrs):
            object.__setattr__(self, k, a)

    @property
    def n(self):
        return self.u0.size


@dataclass(frozen=True)
class KernelWeights:
    mu: np.ndarray  # (l, a)
    valid: np.ndarray  # (l, a) bool


@dataclass(frozen=True)
class ShiftEstimate:
    t_opt: int
    search_range: tuple
    objective_curve: np.ndarray  # F(T) for T = t_min .. t_max


# ---------------------------------------------------------------- similarity

def ncc(a, b) -> float:
    """Normalised cross-correlation ``sum(ab) / (sqrt(sum(a^2) sum(b^2)) + 1e-12)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"ncc needs equal lengths, got {a.shape} and {b.shape}")
    return float(np.dot(a, b) / (np.sqrt(np.dot(a, a) * np.dot(b, b)) + EPS))


def shift_zero_fill(a, T: int):
    """``a(n - T)`` on the same support, zeros shifted in."""
    a = np.asarray(a, dtype=np.float64)
    out = np.zeros_like(a)
    if T >= 0:
        if T < a.size:
            out[T:] = a[:a.size - T]
    elif -T < a.size:
        out[:T] = a[-T:]
    return out


def _ncc_curves(a, b):
    """``NCC(a(n - tau), b(n))`` for every ``tau`` in ``[0, n-1]``, row-wise."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    n = a.shape[-1]
    nfft = next_fast_len(2 * n, real=True)
    r = irfft(np.conj(rfft(a, nfft, axis=-1)) * rfft(b, nfft, axis=-1), nfft, axis=-1)[..., :n]
    cum_a = np.cumsum(a * a, axis=-1)
    ea_trunc = cum_a[..., ::-1]  # energy of a[0 : n - tau]
    ea = cum_a[..., -1:]
    eb = np.sum(b * b, axis=-1, keepdims=True)
    den = np.sqrt(ea_trunc * eb)
    out = r / (den + EPS)
    out[den <= _OVERLAP_FLOOR * np.sqrt(ea * eb)] = 0.0
    return out


def ncc_curve(a, b):
    """NCC of ``a`` delayed by ``tau`` against ``b`` for ``tau = 0 .. len-1``.

    Computed by FFT correlation; lags where the delayed signal keeps less
    than ``1e-20`` of its energy inside the window are reported as 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError("ncc_curve needs two 1-D signals of equal length")
    return _ncc_curves(a, b)[0]


def pairwise_delays_td(group: SignalGroup, L: int):
    """NCC-maximising delays ``(t10, t02)`` at the upsampled rate.

    ``t10`` aligns ``u1`` to ``u0`` and ``t02`` aligns ``u0`` to ``u2``.
    Ties (including all-zero signals) resolve to the smallest shift.
    """
    up = temporal_upsample(np.stack([group.u1, group.u0, group.u2]), L)
    curves = _ncc_curves(up[:2], up[1:])
    t10, t02 = argbest(curves, maximize=True)
    return int(t10), int(t02)


def loss_td(group: SignalGroup, T: int, L: int) -> float:
    """Time-domain group loss at shift ``T``; lies in ``[0, 4]``."""
    up = temporal_upsample(np.stack([group.u0, group.u1, group.u2]), L)
    if not 0 <= T < up.shape[-1]:
        raise UsageError(f"shift {T} outside [0, {up.shape[-1] - 1}]")
    u0, u1, u2 = up
    return 2.0 - ncc(shift_zero_fill(u1, T), u0) - ncc(shift_zero_fill(u0, T), u2)


# ---------------------------------------------------------------- phase domain

def n_bins(n, f_sig_hz, fs_hz):
    K = int(np.floor(n * f_sig_hz / fs_hz))
    if K < 2:
        raise ParameterError(
            f"only {K} frequency bin(s) below f_sig={f_sig_hz} Hz for {n} samples at {fs_hz} Hz; need >= 2")
    return K


def _omega(n, K):
    return 2.0 * np.pi * np.arange(1, K + 1) / n


def _slopes(spec_a, spec_b, omega):
    """LS slope (with intercept) of the unwrapped cross-phase over ``omega``."""
    phase = np.unwrap(np.angle(spec_a * np.conj(spec_b)), axis=-1)
    w = omega - omega.mean()
    return (phase - phase.mean(axis=-1, keepdims=True)) @ w / np.dot(w, w)


def phase_shift_regress(ua, ub, f_sig_hz, fs_hz) -> float:
    """Delay of ``ub`` relative to ``ua`` in samples, from the phase slope.

    Fits a straight line to the unwrapped phase of ``Ua * conj(Ub)`` over
    DFT bins ``1 .. K`` (``K = floor(N f_sig / fs)``) and returns its slope
    against the digital frequency; the intercept is discarded.
    """
    ua = np.asarray(ua, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    n = ua.size
    K = n_bins(n, f_sig_hz, fs_hz)
    sa, sb = rfft(ua)[1:K + 1], rfft(ub)[1:K + 1]
    return float(_slopes(sa, sb, _omega(n, K)))


def _group_magnitude(mags):
    """Average of per-member unit-peak magnitude spectra, rescaled to unit peak."""
    m = mags / (mags.max(axis=-1, keepdims=True) + EPS)
    avg = (m[0] + m[1] + m[2]) / 3.0
    return avg / (avg.max(axis=-1, keepdims=True) + EPS)


def loss_pd(group: SignalGroup, T: int, L: int, f_sig_hz, fs_hz) -> float:
    """Phase-domain group loss at shift ``T`` (non-negative).

    Each member's magnitude spectrum is scaled to unit peak before the
    three are averaged, so amplitude differences between members do not
    change the weights.
    """
    n = group.n
    K = n_bins(n, f_sig_hz, fs_hz)
    omega = _omega(n, K)
    spec = rfft(np.stack([group.u0, group.u1, group.u2]), axis=-1)[:, 1:K + 1]
    m01 = _slopes(spec[1], spec[0], omega)
    m20 = _slopes(spec[0], spec[2], omega)
    mag = _group_magnitude(np.abs(spec))
    s = T / L
    return float(np.sum(((m01 - s) * omega * mag) ** 2) / K + np.sum(((m20 - s) * omega * mag) ** 2) / K)


# ---------------------------------------------------------------- kernel

def gaussian_kernel(l: int, a: int, sigma_w: float) -> KernelWeights:
    """Normalised ``l x a`` Gaussian weights centred on the middle cell."""
    if l % 2 == 0 or a % 2 == 0 or l < 1 or a < 1:
        raise ParameterError(f"kernel extents must be positive odd integers, got {(l, a)}")
    if not sigma_w > 0:
        raise ParameterError("sigma_w must be > 0")
    k = np.arange(l) - (l - 1) // 2
    i = np.arange(a) - (a - 1) // 2
    w = np.exp(-(k[:, None] ** 2 + i[None, :] ** 2) / (2.0 * sigma_w ** 2)) / (2.0 * np.pi * sigma_w ** 2)
    return KernelWeights(w / w.sum(), np.ones((l, a), dtype=bool))


def edge_renormalize(w: KernelWeights, inside) -> KernelWeights:
    """Drop cells outside the usable area and rescale the rest to sum to 1."""
    inside = np.asarray(inside, dtype=bool) & w.valid
    l, a = w.mu.shape
    if not inside[l // 2, a // 2]:
        raise UsageError("kernel centre must be inside the usable area")
    mu = np.where(inside, w.mu, 0.0)
    return KernelWeights(mu / mu.sum(), inside)


def search_range(pairwise, L: int):
    """Shift interval ``(t_min, t_max)`` spanned by a set of pairwise delays.

    ``t_min`` is at least 1.  A degenerate interval is widened by ``L`` on
    both sides (the lower end still clipped at 1).
    """
    d = np.asarray(pairwise, dtype=np.float64).ravel()
    if d.size == 0:
        raise UsageError("search_range needs at least one delay")
    t_min, t_max = _range_from(d.min(), d.max(), L)
    return int(t_min), int(t_max)


def _range_from(dmin, dmax, L):
    t_min = np.maximum(1.0, dmin)
    t_max = np.maximum(dmax, t_min)
    same = t_min == t_max
    return np.where(same, np.maximum(1.0, t_min - L), t_min), np.where(same, t_max + L, t_max)


def sws_from_shift(T, dx_px, L, fs_hz, fsp_px_per_mm):
    """Speed in m/s for a shift of ``T`` upsampled samples over ``dx_px`` pixels."""
    T = np.asarray(T, dtype=np.float64)
    if np.any(T < 1):
        raise UsageError("shift must be >= 1")
    c = dx_px / T * (L * fs_hz) / fsp_px_per_mm * 1e-3
    return float(c) if c.ndim == 0 else c


# ---------------------------------------------------------------- engine

class _Row:
    """Per-depth quantities shared by every pixel whose kernel touches the row."""

    __slots__ = ("degen", "C", "tdel", "m", "pdel", "wg")


class _Engine:
    """Evaluates the kernel objective row by row on a cleaned volume."""

    def __init__(self, data, op: OptimizationParams, fs_hz):
        self.data = data
        self.W, self.Z, self.N = data.shape
        self.op = op
        self.dx = int(op.dx_px)
        self.NL = self.N * op.L
        if op.uses_pd:
            self.K = n_bins(self.N, op.f_sig_hz, fs_hz)
            self.omega = _omega(self.N, self.K)
        kern = gaussian_kernel(op.l, op.a, op.sigma_w)
        k, i = np.meshgrid(np.arange(op.l) - op.l // 2, np.arange(op.a) - op.a // 2, indexing="ij")
        self.dk, self.di, self.mu = k.ravel(), i.ravel(), kern.mu.ravel()
        self.center = self.mu.size // 2

    def row(self, z) -> _Row:
        op, dx, W = self.op, self.dx, self.W
        sig = self.data[:, z, :]
        live = np.any(sig != 0, axis=-1)
        r = _Row()
        r.degen = np.ones(W, dtype=bool)
        if W > 2 * dx:
            r.degen[dx:W - dx] = ~(live[:W - 2 * dx] & live[dx:W - dx] & live[2 * dx:])
        # quantities indexed by the later member of each neighbour pair
        if op.uses_td:
            up = temporal_upsample(sig, op.L)
            r.C = np.full((W, self.NL), np.nan)
            r.C[dx:] = _ncc_curves(up[:W - dx], up[dx:])
            r.tdel = np.full(W, np.nan)
            r.tdel[dx:] = argbest(r.C[dx:], maximize=True)
        if op.uses_pd:
            spec = rfft(sig, axis=-1)[:, 1:self.K + 1]
            r.m = np.full(W, np.nan)
            r.m[dx:] = _slopes(spec[:W - dx], spec[dx:], self.omega)
            r.pdel = np.rint(op.L * r.m)
            mag = np.abs(spec)
            r.wg = np.full(W, np.nan)
            if W > 2 * dx:
                g = _group_magnitude(np.stack([mag[dx:W - dx], mag[:W - 2 * dx], mag[2 * dx:]]))
                r.wg[dx:W - dx] = np.sum((self.omega * g) ** 2, axis=-1) / self.K
        return r

    def delays(self, r: _Row, xs):
        d = []
        if self.op.uses_td:
            d += [r.tdel[xs], r.tdel[xs + self.dx]]
        if self.op.uses_pd:
            d += [r.pdel[xs], r.pdel[xs + self.dx]]
        return np.stack(d, axis=-1)

    def loss(self, r: _Row, xs, T):
        op, dx = self.op, self.dx
        J = 0.0
        if op.uses_td:
            td = 2.0 - r.C[xs][:, T] - r.C[xs + dx][:, T]
            J = td if op.mode == "td" else op.gamma1 * td
        if op.uses_pd:
            s = T / op.L
            pd = r.wg[xs, None] * ((r.m[xs, None] - s) ** 2 + (r.m[xs + dx, None] - s) ** 2)
            J = pd if op.mode == "pd" else J + op.gamma2 * pd
        return J

    def evaluate(self, z, xs, rows, want_curves=False):
        """Optimal shifts for kernel centres ``xs`` on row ``z``.

        ``rows`` maps depth to :class:`_Row` and must cover every depth the
        kernel reaches.  Returns ``(t_opt, valid, t_min, t_max, curves)``
        where invalid pixels carry ``t_opt = -1``.
        """
        xs = np.asarray(xs, dtype=int)
        nx = xs.size
        ncell = self.mu.size
        zc = z + self.di
        ok = np.zeros((ncell, nx), dtype=bool)
        for c in range(ncell):
            if 0 <= zc[c] < self.Z:
                xc = xs + self.dk[c]
                inb = (xc >= self.dx) & (xc < self.W - self.dx)
                ok[c] = inb & ~rows[zc[c]].degen[np.clip(xc, 0, self.W - 1)]
        valid = ok[self.center].copy()
        wsum = np.zeros(nx)
        for c in range(ncell):
            wsum = wsum + np.where(ok[c], self.mu[c], 0.0)
        weights = np.where(ok, self.mu[:, None], 0.0) / np.where(wsum > 0, wsum, 1.0)

        dmin = np.full(nx, np.inf)
        dmax = np.full(nx, -np.inf)
        for c in range(ncell):
            if ok[c].any():
                d = self.delays(rows[zc[c]], xs[ok[c]] + self.dk[c])
                dmin[ok[c]] = np.minimum(dmin[ok[c]], d.min(axis=-1))
                dmax[ok[c]] = np.maximum(dmax[ok[c]], d.max(axis=-1))
        t_min, t_max = _range_from(dmin, dmax, self.op.L)
        t_max = np.minimum(t_max, self.NL - 1)
        t_min = np.minimum(t_min, t_max)

        t_opt = np.full(nx, -1, dtype=int)
        curves = [None] * nx
        if not valid.any():
            return t_opt, valid, t_min, t_max, curves
        T = np.arange(int(t_min[valid].min()), int(t_max[valid].max()) + 1)
        F = np.zeros((nx, T.size))
        for c in range(ncell):
            sel = ok[c] & valid
            if sel.any():
                F[sel] += weights[c, sel, None] * self.loss(rows[zc[c]], xs[sel] + self.dk[c], T)
        in_range = (T[None, :] >= t_min[:, None]) & (T[None, :] <= t_max[:, None])
        idx = argbest(np.where(in_range, F, np.inf), maximize=False)
        t_opt[valid] = T[idx[valid]]
        if want_curves:
            for j in np.flatnonzero(valid):
                curves[j] = F[j, in_range[j]]
        return t_opt, valid, t_min, t_max, curves

    def run_rows(self, z_list, centers):
        """Shift maps for a contiguous run of depths, streaming the row cache."""
        h = self.op.a // 2
        rows = {}
        out = {}
        for z in z_list:
            for zz in range(max(0, z - h), min(self.Z, z + h + 1)):
                if zz not in rows:
                    rows[zz] = self.row(zz)
            for zz in [k for k in rows if k < z - h]:
                del rows[zz]
            out[z] = self.evaluate(z, centers, rows)[0]
        return out


def _resolve_threads(threads):
    if threads is None:
        import os
        env = os.environ.get("SWS_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ParameterError(f"thread count must be >= 1, got {threads}")
    return int(threads)


def estimate_pixel(vol_clean: DisplacementVolume, x: int, z: int, params: OptimizationParams):
    """Optimal shift for the group centred at column ``x``, depth ``z``.

    Returns ``None`` when the pixel lacks both lateral neighbours or one of
    its group signals is identically zero.
    """
    params.check_rate(vol_clean.fs_hz)
    data = vol_clean.data
    W, Z, _ = data.shape
    if not (0 <= x < W and 0 <= z < Z):
        raise UsageError(f"pixel {(x, z)} outside the {W}x{Z} volume")
    eng = _Engine(data, params, vol_clean.fs_hz)
    h = params.a // 2
    rows = {zz: eng.row(zz) for zz in range(max(0, z - h), min(Z, z + h + 1))}
    t_opt, valid, t_min, t_max, curves = eng.evaluate(z, np.array([x]), rows, want_curves=True)
    if not valid[0]:
        return None
    return ShiftEstimate(int(t_opt[0]), (int(t_min[0]), int(t_max[0])), curves[0])


def estimate_shift_map(vol_clean: DisplacementVolume, params: OptimizationParams, columns=None,
                       threads=None) -> np.ndarray:
    """Optimal shift at every depth for kernel centres ``columns``.

    Returns an integer array ``(len(columns), Z)`` with ``-1`` for invalid
    pixels.  Columns outside the volume are invalid.  Depths are split into
    contiguous blocks, one per worker; each block's result depends only on
    the volume, so the output is identical for any thread count.
    """
    params.check_rate(vol_clean.fs_hz)
    W, Z, _ = vol_clean.data.shape
    cols = np.arange(W) if columns is None else np.asarray(columns, dtype=int)
    inside = (cols >= 0) & (cols < W)
    centers = np.clip(cols, 0, W - 1)
    eng = _Engine(vol_clean.data, params, vol_clean.fs_hz)
    n = min(_resolve_threads(threads), Z)
    blocks = [b for b in np.array_split(np.arange(Z), n) if b.size]
    if n == 1:
        results = [eng.run_rows(blocks[0], centers)]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(lambda b: eng.run_rows(b, centers), blocks))
    out = np.full((cols.size, Z), -1, dtype=int)
    for res in results:
        for z, t in res.items():
            out[:, z] = np.where(inside, t, -1)
    return out


def prepare_volume(vol: DisplacementVolume, cp: CleaningParams | None, M: int = 1, clean_first=False):
    """Interpolate laterally by ``M`` and TL-clean, in either order.

    ``cp.roi_x`` is given in columns of the input volume and is mapped onto
    the interpolated grid.  Returns ``(volume, failed_slices)``.
    """
    Z = vol.data.shape[1]
    if cp is None:
        return lateral_interpolate(vol, M), np.zeros(Z, dtype=bool)
    if clean_first:
        cleaned, failed = clean_volume(vol, cp)
        return lateral_interpolate(cleaned, M), failed
    if cp.roi_x is not None and M > 1:
        lo, hi = cp.roi_x
        hi = min(hi, vol.data.shape[0])
        cp = replace(cp, roi_x=(lo * M, (hi - 1) * M + 1))
    return clean_volume(lateral_interpolate(vol, M), cp)


def reconstruct(vol: DisplacementVolume, cp: CleaningParams | None, op: OptimizationParams, M: int = 1,
                median: int | None = None, threads=None, full_grid=False, clean_first=False) -> SwsMap:
    """Full pipeline from a raw volume to an SWS map.

    The map is reported on the input lateral grid (``X x Z``) unless
    ``full_grid`` is set, in which case every interpolated column is
    returned.  Columns outside the cleaning ROI or without both ``dx_px``
    neighbours are invalid.  ``median`` applies a ``w x w`` median filter.
    Pass ``cp=None`` to skip cleaning.
    """
    vol.require_pipeline_shape()
    op.check_rate(vol.fs_hz)
    work, failed = prepare_volume(vol, cp, M, clean_first)
    if failed.any():
        log.warning("TL cleaning fell back to the uncleaned plane on %d of %d slices",
                    int(failed.sum()), failed.size)
    X = vol.data.shape[0]
    grid = np.arange(M * X - (M - 1)) if full_grid else M * np.arange(X)
    T = estimate_shift_map(work, op, grid - work.x_offset_px, threads)
    valid = T >= 1
    sws = np.full(T.shape, np.nan)
    sws[valid] = sws_from_shift(T[valid], op.dx_px, op.L, work.fs_hz, work.fsp_px_per_mm)
    out = SwsMap(sws, valid)
    if median:
        from .metrics import median_filter
        out = median_filter(out, median)
    return out


__all__ = [
    "OptimizationParams", "SignalGroup", "KernelWeights", "ShiftEstimate", "ncc", "ncc_curve",
    "shift_zero_fill", "pairwise_delays_td", "loss_td", "phase_shift_regress", "loss_pd",
    "gaussian_kernel", "edge_renormalize", "search_range", "sws_from_shift", "estimate_pixel",
    "estimate_shift_map", "prepare_volume", "reconstruct",
]
