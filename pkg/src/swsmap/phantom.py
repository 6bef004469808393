"""Synthetic displacement volumes with known shear-wave speed.

The generator realises the discrete delay model directly: every particle
sees the same Gaussian pulse, attenuated with lateral distance from the
push and delayed by the accumulated lateral travel time through the speed
map.  Optional jitter, a single reflected pulse and a residual tail
oscillation reproduce the artefacts the estimators are meant to survive.
The resulting volumes (with their speed maps) are the ground truth for the
test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError
from .volume_io import DisplacementVolume, RegionMask, load_field, save_field

SPEED_MIN, SPEED_MAX = 0.25, 10.0


def speed_from_kpa(kpa):
    """Young's modulus in kPa to shear-wave speed in m/s (``E = 3000 c**2``)."""
    return np.sqrt(np.asarray(kpa, dtype=float) * 1000.0 / 3000.0)


def kpa_from_speed(c):
    return 3.0 * np.asarray(c, dtype=float) ** 2


@dataclass(frozen=True)
class SpeedMap:
    c: np.ndarray
    fsp_px_per_mm: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 2:
            raise DataError(f"speed map must be 2-D, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or c.min() < SPEED_MIN or c.max() > SPEED_MAX:
            raise DataError(f"speeds must lie in [{SPEED_MIN}, {SPEED_MAX}] m/s")
        if not self.fsp_px_per_mm > 0:
            raise DataError("fsp_px_per_mm must be positive")
        object.__setattr__(self, "c", c)

    @property
    def shape(self):
        return self.c.shape


@dataclass(frozen=True)
class PulseParams:
    width_ms: float = 0.4
    amp0: float = 1.0
    alpha_per_mm: float = 0.95
    source_x_px: int = 0
    t0_ms: float | None = None  # arrival time at the source; default 4 widths

    def __post_init__(self):
        if not self.width_ms > 0 or not self.amp0 > 0:
            raise ParameterError("pulse width and amplitude must be positive")
        if not 0 < self.alpha_per_mm <= 1:
            raise ParameterError("alpha_per_mm must lie in (0, 1]")

    @property
    def onset_ms(self):
        return 4.0 * self.width_ms if self.t0_ms is None else float(self.t0_ms)


@dataclass(frozen=True)
class NoiseParams:
    jitter_std: float = 0.0
    reflect_gain: float = 0.0
    reflect_x_px: int | None = None
    tail_amp: float = 0.0
    tail_hz: float = 450.0
    tail_decay_ms: float = 4.0
    tail_delay_widths: float = 1.5  # tail starts this many pulse widths after the peak

    def __post_init__(self):
        if self.jitter_std < 0 or self.tail_amp < 0:
            raise ParameterError("noise amplitudes must be non-negative")
        if not 0 <= self.reflect_gain < 1:
            raise ParameterError("reflect_gain must lie in [0, 1)")


def make_homogeneous_speed_map(X, Z, fsp, kpa) -> SpeedMap:
    return SpeedMap(np.full((X, Z), float(speed_from_kpa(kpa))), fsp)


def make_inclusion_speed_map(X, Z, fsp, bg_kpa, inc_kpa, center_px, radius_mm) -> SpeedMap:
    """Circular inclusion (isotropic pixels) in a homogeneous background."""
    cx, cz = center_px
    r_px = radius_mm * fsp
    if cx - r_px < 0 or cx + r_px > X - 1 or cz - r_px < 0 or cz + r_px > Z - 1:
        raise ParameterError(f"inclusion of radius {radius_mm} mm at {center_px} does not fit a {X}x{Z} grid")
    inside = _disc(X, Z, center_px, r_px)
    c = np.where(inside, speed_from_kpa(inc_kpa), speed_from_kpa(bg_kpa))
    return SpeedMap(c, fsp)


def _disc(X, Z, center_px, r_px):
    x = np.arange(X)[:, None]
    z = np.arange(Z)[None, :]
    return (x - center_px[0]) ** 2 + (z - center_px[1]) ** 2 <= r_px ** 2


def inclusion_masks(X, Z, fsp, center_px, radius_mm, guard_mm=0.0):
    """Inclusion and background region masks for a circular inclusion.

    A positive ``guard_mm`` leaves a ring of that half-width around the
    boundary out of both regions.
    """
    r_px = radius_mm * fsp
    g_px = guard_mm * fsp
    inc = _disc(X, Z, center_px, r_px - g_px)
    bg = ~_disc(X, Z, center_px, r_px + g_px)
    return RegionMask(inc, "inclusion"), RegionMask(bg, "background")


def arrival_time_field(speed: SpeedMap, source_x_px: int) -> np.ndarray:
    """Lateral travel time in ms from the push column to every pixel.

    Pixel ``x'`` owns the lateral interval ``[x', x'+1)``; crossing it takes
    ``1/(fsp * c(x', z))`` ms.  Returns an ``(X, Z)`` array, zero on the
    source column.
    """
    X, Z = speed.shape
    if not 0 <= source_x_px < X:
        raise ParameterError(f"source column {source_x_px} outside [0, {X})")
    step_ms = (1.0 / speed.fsp_px_per_mm) / speed.c  # mm / (m/s) = ms
    t = np.zeros((X, Z))
    s = source_x_px
    if s < X - 1:
        t[s + 1:] = np.cumsum(step_ms[s:X - 1], axis=0)
    if s > 0:
        t[:s] = np.cumsum(step_ms[:s][::-1], axis=0)[::-1]
    return t


def synth_volume(speed: SpeedMap, pulse: PulseParams, noise: NoiseParams, fs_hz: float,
                 n_frames: int, seed: int = 0) -> DisplacementVolume:
    """Render a displacement volume for ``speed``.

    Raises :class:`ParameterError` when ``n_frames`` does not cover the
    latest direct arrival plus four pulse widths, or the pulse spans fewer
    than two samples.
    """
    X, Z = speed.shape
    fsp = speed.fsp_px_per_mm
    w = pulse.width_ms
    if w * fs_hz / 1000.0 < 2:
        raise ParameterError(f"pulse width {w} ms spans fewer than 2 samples at {fs_hz} Hz")
    travel = arrival_time_field(speed, pulse.source_x_px)
    arrival = pulse.onset_ms + travel
    horizon_ms = n_frames / fs_hz * 1000.0
    if horizon_ms <= arrival.max() + 4 * w:
        raise ParameterError(
            f"{n_frames} frames ({horizon_ms:.3f} ms) do not cover the last arrival "
            f"({arrival.max():.3f} ms) plus 4 pulse widths")

    t = np.arange(n_frames) / fs_hz * 1000.0
    xs = np.arange(X)
    dist_mm = np.abs(xs - pulse.source_x_px) / fsp
    amp = pulse.amp0 * pulse.alpha_per_mm ** dist_mm
    u = amp[:, None, None] * np.exp(-(t - arrival[..., None]) ** 2 / (2 * w * w))

    if noise.reflect_gain > 0:
        xr = X - 1 if noise.reflect_x_px is None else int(noise.reflect_x_px)
        if not 0 <= xr < X:
            raise ParameterError(f"reflect_x_px {xr} outside [0, {X})")
        lo, hi = sorted((pulse.source_x_px, xr))
        cols = xs[lo:hi + 1]
        back = np.abs(travel[xr] - travel[cols])
        t_ref = arrival[xr] + back
        path_mm = (abs(xr - pulse.source_x_px) + np.abs(xr - cols)) / fsp
        a_ref = noise.reflect_gain * pulse.amp0 * pulse.alpha_per_mm ** path_mm
        u[lo:hi + 1] += a_ref[:, None, None] * np.exp(-(t - t_ref[..., None]) ** 2 / (2 * w * w))

    if noise.tail_amp > 0 or noise.jitter_std > 0:
        for x in range(X):
            if noise.tail_amp > 0:
                phase = np.random.default_rng([seed, x, 1]).uniform(0, 2 * np.pi, size=(Z, 1))
                lag = t - (arrival[x][:, None] + noise.tail_delay_widths * w)
                on = lag > 0
                lag = np.where(on, lag, 0.0)
                env = np.exp(-lag / noise.tail_decay_ms) * (1 - np.exp(-lag ** 2 / (2 * w * w)))
                osc = np.sin(2 * np.pi * noise.tail_hz * lag / 1000.0 + phase)
                u[x] += noise.tail_amp * amp[x] * np.where(on, env * osc, 0.0)
            if noise.jitter_std > 0:
                rng = np.random.default_rng([seed, x, 0])
                u[x] += rng.normal(0.0, noise.jitter_std, size=(Z, n_frames))

    return DisplacementVolume(u, fs_hz=fs_hz, fsp_px_per_mm=fsp, axial_res_mm_per_px=1.0 / fsp)


def save_speed_map(speed: SpeedMap, path):
    save_field(speed.c, path, kind="speed_map", fsp_px_per_mm=float(speed.fsp_px_per_mm))


def load_speed_map(path) -> SpeedMap:
    c, meta = load_field(path)
    return SpeedMap(c, float(meta.get("fsp_px_per_mm", 1.0)))


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class Preset:
    """A named phantom scenario: geometry, stiffness and sampling."""

    name: str
    X: int
    Z: int
    N: int
    fs_hz: float
    fsp_px_per_mm: float
    bg_kpa: float
    inc_kpa: float | None = None
    diameter_mm: float | None = None
    center_mm: tuple = (13.6, 9.6)
    pulse: PulseParams = field(default_factory=PulseParams)

    @property
    def center_px(self):
        return tuple(v * self.fsp_px_per_mm for v in self.center_mm)

    def speed_map(self) -> SpeedMap:
        if self.inc_kpa is None:
            return make_homogeneous_speed_map(self.X, self.Z, self.fsp_px_per_mm, self.bg_kpa)
        return make_inclusion_speed_map(self.X, self.Z, self.fsp_px_per_mm, self.bg_kpa,
                                        self.inc_kpa, self.center_px, self.diameter_mm / 2)

    def masks(self, guard_mm=0.0):
        if self.inc_kpa is None:
            raise ParameterError(f"preset {self.name} has no inclusion")
        return inclusion_masks(self.X, self.Z, self.fsp_px_per_mm, self.center_px,
                               self.diameter_mm / 2, guard_mm)

    def volume(self, noise: NoiseParams = NoiseParams(), seed: int = 0) -> DisplacementVolume:
        return synth_volume(self.speed_map(), self.pulse, noise, self.fs_hz, self.N, seed)


def _build_presets():
    presets = {}
    # simulation-like sampling: 10 kHz, 0.17 mm pixels
    for kpa in (15, 30):
        presets[f"homog{kpa}"] = Preset(f"homog{kpa}", 96, 64, 128, 10_000.0, 1 / 0.17, kpa)
    # CIRS-049-like inclusions: 45 or 80 kPa in 25 kPa background, four diameters
    for inc in (45, 80):
        for d in (10.40, 6.49, 4.05, 2.53):
            name = f"inc{inc}_d{d:.2f}"
            presets[name] = Preset(name, 128, 96, 160, 10_000.0, 5.0, 25, inc, d)
    return presets


PRESETS = _build_presets()
