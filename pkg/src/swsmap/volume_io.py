"""Displacement volumes, SWS maps and region masks, plus their on-disk formats.

Every binary payload is written as little-endian float32 (uint8 for masks)
next to a plain-text sidecar named ``<payload>.hdr`` holding ``key = value``
lines.  Volumes are laid out with the time index fastest, then axial, then
lateral, i.e. sample ``(x, z, n)`` lives at element ``((x*Z)+z)*N + n``.
2-D fields drop the time axis (element ``x*Z + z``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, UsageError

SIDECAR_SUFFIX = ".hdr"
_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class DisplacementVolume:
    """Displacement field ``u(x, z, n)`` with its sampling metadata.

    ``data`` is held as float64 with shape ``(X, Z, N)``.  ``x_offset_px``
    records where column 0 sits on the lateral grid the volume was cropped
    from (0 for an uncropped volume).
    """

    data: np.ndarray
    fs_hz: float
    fsp_px_per_mm: float
    axial_res_mm_per_px: float
    x_offset_px: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DataError(f"volume data must be a non-empty 3-D array, got shape {data.shape}")
        for name in ("fs_hz", "fsp_px_per_mm", "axial_res_mm_per_px"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DataError(f"{name} must be a positive finite number, got {value!r}")
        _check_finite(data)
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data, **changes) -> "DisplacementVolume":
        kw = dict(
            fs_hz=self.fs_hz,
            fsp_px_per_mm=self.fsp_px_per_mm,
            axial_res_mm_per_px=self.axial_res_mm_per_px,
            x_offset_px=self.x_offset_px,
        )
        kw.update(changes)
        return DisplacementVolume(data, **kw)

    def require_pipeline_shape(self):
        """Raise unless the volume is large enough for the estimation pipeline."""
        X, Z, N = self.data.shape
        if X < 3 or Z < 1 or N < 8:
            raise DataError(f"pipeline needs X >= 3, Z >= 1, N >= 8; got {(X, Z, N)}")


@dataclass
class SwsMap:
    """Shear-wave-speed map in m/s, shape ``(X, Z)``, with a validity mask."""

    data: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError(f"SWS map must be 2-D, got shape {self.data.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.data)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.data.shape:
            raise DataError("valid mask shape does not match map shape")

    @property
    def shape(self):
        return self.data.shape

    def check(self):
        """Raise :class:`DataError` if a valid cell is non-finite or non-positive."""
        vals = self.data[self.valid]
        bad = ~np.isfinite(vals) | (vals <= 0)
        if bad.any():
            idx = np.argwhere(self.valid)[np.argmax(bad)]
            raise DataError(f"SWS map has invalid value {self.data[tuple(idx)]!r} at (x, z) = {tuple(idx)}")

    def valid_mean(self) -> float:
        vals = self.data[self.valid]
        return float(vals.mean()) if vals.size else float("nan")


@dataclass
class RegionMask:
    mask: np.ndarray
    label: str = "inclusion"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.label not in ("inclusion", "background"):
            raise UsageError(f"mask label must be 'inclusion' or 'background', not {self.label!r}")


def check_disjoint(inc: RegionMask, bg: RegionMask):
    if inc.mask.shape != bg.mask.shape:
        raise DataError("region masks differ in shape")
    if np.any(inc.mask & bg.mask):
        raise DataError("inclusion and background masks overlap")


# ---------------------------------------------------------------- sidecars

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def write_sidecar(path, meta: dict):
    lines = ["# swsmap sidecar"]
    for key, value in meta.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    sidecar_path(path).write_text("\n".join(lines) + "\n")


def read_sidecar(path) -> dict:
    hdr = sidecar_path(path)
    if not hdr.exists():
        raise FormatError(f"missing sidecar metadata file {hdr}")
    meta = {}
    for lineno, line in enumerate(hdr.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{hdr}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        meta[key] = value
    return meta


def _meta_int(meta, key, path):
    try:
        return int(meta[key])
    except KeyError:
        raise FormatError(f"sidecar for {path} lacks '{key}'") from None
    except ValueError:
        raise FormatError(f"sidecar for {path}: '{key}' is not an integer: {meta[key]!r}") from None


def _meta_float(meta, key, path):
    try:
        return float(meta[key])
    except KeyError:
        raise FormatError(f"sidecar for {path} lacks '{key}'") from None
    except ValueError:
        raise FormatError(f"sidecar for {path}: '{key}' is not a number: {meta[key]!r}") from None


def _read_payload(path, count, dtype):
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing payload file {path}")
    expected = count * np.dtype(dtype).itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise FormatError(f"{path}: expected {expected} bytes of payload, found {actual}")
    return np.fromfile(path, dtype=dtype, count=count)


def _check_finite(data):
    finite = np.isfinite(data)
    if not finite.all():
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(finite), data.shape))
        raise DataError(f"non-finite sample {data[idx]!r} at index {idx}")


# ---------------------------------------------------------------- volumes

def save_volume(vol: DisplacementVolume, path):
    path = Path(path)
    X, Z, N = vol.data.shape
    np.ascontiguousarray(vol.data, dtype=_F32).tofile(path)
    write_sidecar(path, {
        "kind": "volume",
        "X": X,
        "Z": Z,
        "N": N,
        "fs_hz": float(vol.fs_hz),
        "fsp_px_per_mm": float(vol.fsp_px_per_mm),
        "axial_res_mm_per_px": float(vol.axial_res_mm_per_px),
        "x_offset_px": int(vol.x_offset_px),
        "dtype": "float32",
        "byte_order": "little",
    })


def load_volume(path) -> DisplacementVolume:
    """Read a volume written by :func:`save_volume` (or any tool honouring the layout)."""
    meta = read_sidecar(path)
    X, Z, N = (_meta_int(meta, k, path) for k in ("X", "Z", "N"))
    raw = _read_payload(path, X * Z * N, _F32)
    data = raw.reshape(X, Z, N).astype(np.float64)
    _check_finite(data)
    return DisplacementVolume(
        data,
        fs_hz=_meta_float(meta, "fs_hz", path),
        fsp_px_per_mm=_meta_float(meta, "fsp_px_per_mm", path),
        axial_res_mm_per_px=_meta_float(meta, "axial_res_mm_per_px", path),
        x_offset_px=int(meta.get("x_offset_px", 0)),
    )


# ---------------------------------------------------------------- 2-D fields

def save_field(array, path, **meta):
    """Write a 2-D float field (NaN allowed) as raw float32 plus sidecar."""
    array = np.asarray(array, dtype=np.float64)
    X, Z = array.shape
    np.ascontiguousarray(array, dtype=_F32).tofile(path)
    write_sidecar(path, {"kind": meta.pop("kind", "field"), "X": X, "Z": Z,
                         "dtype": "float32", "byte_order": "little", **meta})


def load_field(path):
    meta = read_sidecar(path)
    X, Z = _meta_int(meta, "X", path), _meta_int(meta, "Z", path)
    data = _read_payload(path, X * Z, _F32).reshape(X, Z).astype(np.float64)
    return data, meta


def _csv_cell(value):
    text = "%#.6g" % value
    return text[:-1] if text.endswith(".") else text


def save_sws_map(sws: SwsMap, path, format: str | None = None):
    """Write a map as ``csv``, ``pgm`` (8-bit P5) or ``raw`` float32.

    The format defaults to the file extension.  CSV has one line per axial
    row with empty cells where the map is invalid; PGM scales valid cells
    linearly onto 0..255 (a constant map becomes all zeros) and paints
    invalid cells 0; raw stores invalid cells as NaN.
    """
    path = Path(path)
    if format is None:
        format = path.suffix.lstrip(".").lower() or "raw"
        if format == "bin":
            format = "raw"
    if format not in ("csv", "pgm", "raw"):
        raise UsageError(f"unknown map format {format!r}")
    sws.check()
    X, Z = sws.shape
    try:
        if format == "csv":
            rows = []
            for z in range(Z):
                cells = [_csv_cell(sws.data[x, z]) if sws.valid[x, z] else "" for x in range(X)]
                rows.append(",".join(cells))
            path.write_text("\n".join(rows) + "\n")
        elif format == "pgm":
            img = np.zeros((Z, X), dtype=np.uint8)
            vals = sws.data[sws.valid]
            if vals.size:
                lo, hi = vals.min(), vals.max()
                if hi > lo:
                    scaled = np.rint((sws.data - lo) / (hi - lo) * 255.0)
                    scaled = np.where(sws.valid, scaled, 0)
                    img = np.clip(scaled, 0, 255).astype(np.uint8).T
            with open(path, "wb") as fh:
                fh.write(f"P5\n{X} {Z}\n255\n".encode("ascii"))
                fh.write(np.ascontiguousarray(img).tobytes())
        else:
            save_field(np.where(sws.valid, sws.data, np.nan), path, kind="sws_map")
    except OSError as exc:
        raise OSError(f"cannot write SWS map to {path}: {exc.strerror or exc}") from exc


def load_sws_map(path) -> SwsMap:
    """Read a map written as ``csv`` or ``raw`` by :func:`save_sws_map`."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        rows = [line.split(",") for line in path.read_text().splitlines() if line != ""]
        if not rows or len({len(r) for r in rows}) != 1:
            raise FormatError(f"{path}: ragged or empty CSV map")
        data = np.array([[float(c) if c.strip() else np.nan for c in row] for row in rows]).T
    elif path.suffix.lower() == ".pgm":
        raise FormatError("PGM maps are lossy and cannot be read back")
    else:
        data, _ = load_field(path)
    return SwsMap(data, np.isfinite(data))


def save_mask(mask: RegionMask, path):
    path = Path(path)
    X, Z = mask.mask.shape
    np.ascontiguousarray(mask.mask, dtype=np.uint8).tofile(path)
    write_sidecar(path, {"kind": "mask", "X": X, "Z": Z, "label": mask.label, "dtype": "uint8"})


def load_mask(path) -> RegionMask:
    meta = read_sidecar(path)
    X, Z = _meta_int(meta, "X", path), _meta_int(meta, "Z", path)
    data = _read_payload(path, X * Z, np.uint8).reshape(X, Z)
    return RegionMask(data.astype(bool), meta.get("label", "inclusion"))


def ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
