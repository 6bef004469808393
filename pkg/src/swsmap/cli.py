"""Command-line front end: ``swsmap {synth,clean,reconstruct,evaluate}``.

Every subcommand prints a single summary line of ``key=value`` pairs on
success and exits 0.  Invalid flags are all reported together (exit 2);
failures while running name the stage that failed (exit 1).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines, metrics
from .baselines import BaselineParams
from .errors import SwsError
from .estimators import MODES, OptimizationParams, reconstruct
from .phantom import PRESETS, NoiseParams, load_speed_map, save_speed_map
from .preprocess import CleaningParams, clean_volume, lateral_interpolate
from .volume_io import (SwsMap, check_disjoint, ensure_parent, load_mask, load_sws_map, load_volume, save_mask,
                        save_sws_map, save_volume)

log = logging.getLogger("swsmap")

METHODS = ("ttp", "ttp-avg", "xcorr", "fdsm") + MODES


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"{stage} failed: {exc}")
        self.stage = stage


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, etype, exc, tb):
        if exc is not None and isinstance(exc, (SwsError, OSError, ValueError)):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class RunConfig:
    """Validated settings for one subcommand; lengths are still in mm here."""

    subcommand: str
    args: argparse.Namespace
    cleaning: dict = field(default_factory=dict)
    optimization: dict = field(default_factory=dict)
    baseline: BaselineParams | None = None
    interp: int = 2
    median: int = 0
    threads: int = 1
    seed: int = 0


# ---------------------------------------------------------------- parsing helpers

def _pair(text, cast, name, errors, n=2):
    try:
        vals = tuple(cast(v) for v in text.split(","))
        if len(vals) != n:
            raise ValueError
        return vals
    except (ValueError, AttributeError):
        errors.append(f"{name} expects {n} comma-separated values, got {text!r}")
        return None


def _add_cleaning(p):
    g = p.add_argument_group("TL cleaning")
    g.add_argument("--tsh", type=float, default=250.0, help="peak-pruning threshold (samples^2)")
    g.add_argument("--q", type=float, default=0.9, help="amplitude threshold for line support")
    g.add_argument("--rho", type=float, default=1.0, help="mask spread (samples)")
    g.add_argument("--r", type=int, default=3, help="number of piecewise lines")
    g.add_argument("--roi-x", default=None, metavar="LO,HI", help="lateral ROI in mm")


def _add_optimization(p):
    g = p.add_argument_group("constrained estimator")
    g.add_argument("--dx-mm", type=float, default=0.5, help="lateral group spacing (mm)")
    g.add_argument("--kernel", default="5,5", metavar="L,A", help="kernel extents (odd)")
    g.add_argument("--sigma-w", type=float, default=1.0)
    g.add_argument("--upsample", type=int, default=10, metavar="L")
    g.add_argument("--fsig-hz", type=float, default=500.0)
    g.add_argument("--gamma1", type=float, default=1.0)
    g.add_argument("--gamma2", type=float, default=0.2)


def _add_baseline(p):
    g = p.add_argument_group("baselines")
    g.add_argument("--fit-halfwidth", type=int, default=3, help="TTP window half-width (px)")
    g.add_argument("--theta", default="0.5,6.0,0.01", metavar="LO,HI,STEP", help="FDSM speed grid (m/s)")
    g.add_argument("--xcorr-dx", type=int, default=1, help="cross-correlation neighbour offset (px)")


def build_parser():
    parser = argparse.ArgumentParser(prog="swsmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    parser.subparsers = {}

    p = sub.add_parser("synth", help="write a synthetic phantom volume")
    parser.subparsers["synth"] = p
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0, help="additive noise std (pulse amplitudes)")
    p.add_argument("--reflect-gain", type=float, default=0.0)
    p.add_argument("--tail-amp", type=float, default=0.0)

    p = sub.add_parser("clean", help="TL-clean a volume")
    parser.subparsers["clean"] = p
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interp", type=int, default=1, metavar="M")
    p.add_argument("--figure", default=None, help="PNG of the mid-depth TL plane before/after")
    _add_cleaning(p)

    p = sub.add_parser("reconstruct", help="estimate an SWS map")
    parser.subparsers["reconstruct"] = p
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="map file (.csv, .pgm or .bin)")
    p.add_argument("--method", default="td", choices=METHODS)
    p.add_argument("--interp", type=int, default=2, metavar="M")
    p.add_argument("--median", type=int, default=5, help="median window (0 disables)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-clean", action="store_true", help="skip TL cleaning (constrained methods)")
    p.add_argument("--clean", action="store_true", help="TL-clean before baseline estimators")
    p.add_argument("--clean-first", action="store_true", help="clean before lateral interpolation")
    p.add_argument("--full-grid", action="store_true", help="report every interpolated column")
    p.add_argument("--figure", default=None, help="PNG rendering of the map")
    _add_cleaning(p)
    _add_optimization(p)
    _add_baseline(p)

    p = sub.add_parser("evaluate", help="report region statistics, CNR and PSNR")
    parser.subparsers["evaluate"] = p
    p.add_argument("--in", dest="inp", required=True, nargs="+", help="map file(s)")
    p.add_argument("--truth", default=None, help="reference speed map (.bin)")
    p.add_argument("--inc", default=None, help="inclusion mask")
    p.add_argument("--bg", default=None, help="background mask")
    p.add_argument("--preset", default=None, choices=sorted(PRESETS), help="take truth and masks from a preset")
    p.add_argument("--guard-mm", type=float, default=1.0, help="boundary ring excluded from preset masks")
    p.add_argument("--figure", default=None)
    return parser


def validate(args, parser) -> RunConfig:
    """Check every flag and report all problems in one parser error."""
    errors = []
    cfg = RunConfig(args.subcommand, args)
    env_threads = os.environ.get("SWS_THREADS")
    threads = getattr(args, "threads", None)
    if threads is None and env_threads:
        try:
            threads = int(env_threads)
        except ValueError:
            errors.append(f"SWS_THREADS must be an integer, got {env_threads!r}")
    cfg.threads = 1 if threads is None else threads
    if cfg.threads < 1:
        errors.append(f"--threads must be >= 1, got {cfg.threads}")
    cfg.seed = getattr(args, "seed", 0)

    if args.subcommand == "synth":
        if args.jitter < 0 or args.tail_amp < 0:
            errors.append("--jitter and --tail-amp must be >= 0")
        if not 0 <= args.reflect_gain < 1:
            errors.append("--reflect-gain must lie in [0, 1)")

    if hasattr(args, "tsh"):
        roi = _pair(args.roi_x, float, "--roi-x", errors) if args.roi_x else None
        if roi is not None and not roi[1] > roi[0] >= 0:
            errors.append(f"--roi-x needs 0 <= lo < hi, got {args.roi_x}")
        if not args.tsh > 0:
            errors.append("--tsh must be > 0")
        if not 0 < args.q < 1:
            errors.append("--q must lie in (0, 1)")
        if not args.rho > 0:
            errors.append("--rho must be > 0")
        if args.r < 1:
            errors.append("--r must be >= 1")
        cfg.cleaning = dict(t_sh=args.tsh, q=args.q, rho=args.rho, r=args.r, roi_mm=roi)
    if hasattr(args, "interp"):
        cfg.interp = args.interp
        if args.interp < 1:
            errors.append("--interp must be >= 1")

    if args.subcommand == "reconstruct":
        kern = _pair(args.kernel, int, "--kernel", errors)
        if kern and any(k < 1 or k % 2 == 0 for k in kern):
            errors.append(f"--kernel extents must be positive odd integers, got {args.kernel}")
        if not args.dx_mm > 0:
            errors.append("--dx-mm must be > 0")
        if not args.sigma_w > 0:
            errors.append("--sigma-w must be > 0")
        if args.upsample < 1:
            errors.append("--upsample must be >= 1")
        if not args.fsig_hz > 0:
            errors.append("--fsig-hz must be > 0")
        if args.gamma1 < 0 or args.gamma2 < 0:
            errors.append("--gamma1 and --gamma2 must be >= 0")
        if args.method == "combined" and not args.gamma1 + args.gamma2 > 0:
            errors.append("--gamma1 and --gamma2 cannot both be 0 with --method combined")
        if args.median < 0 or (args.median and args.median % 2 == 0):
            errors.append("--median must be 0 or a positive odd integer")
        if args.fit_halfwidth < 1:
            errors.append("--fit-halfwidth must be >= 1")
        if args.xcorr_dx < 1:
            errors.append("--xcorr-dx must be >= 1")
        theta = _pair(args.theta, float, "--theta", errors, n=3)
        if theta and not (theta[0] > 0 and theta[2] > 0 and theta[1] >= theta[0]):
            errors.append(f"--theta needs lo > 0, step > 0, hi >= lo, got {args.theta}")
        cfg.median = args.median
        cfg.optimization = dict(dx_mm=args.dx_mm, kernel=kern, sigma_w=args.sigma_w, L=args.upsample,
                                f_sig_hz=args.fsig_hz, gamma1=args.gamma1, gamma2=args.gamma2)
        if not errors:
            cfg.baseline = BaselineParams(fit_halfwidth_px=args.fit_halfwidth, theta_grid=theta,
                                          f_sig_hz=args.fsig_hz, dx_px=args.xcorr_dx, L=args.upsample)

    if args.subcommand == "evaluate":
        if args.preset is None and args.truth is None and (args.inc is None or args.bg is None):
            errors.append("evaluate needs --preset, --truth, or both --inc and --bg")
        if (args.inc is None) != (args.bg is None):
            errors.append("--inc and --bg must be given together")
        if args.guard_mm < 0:
            errors.append("--guard-mm must be >= 0")

    for attr in ("inp",):
        paths = getattr(args, attr, None)
        for path in ([paths] if isinstance(paths, str) else paths or []):
            if not Path(path).exists():
                errors.append(f"input file not found: {path}")
    if errors:
        parser.subparsers.get(args.subcommand, parser).error("; ".join(errors))
    return cfg


# ---------------------------------------------------------------- subcommands

def _cleaning_params(cfg, vol):
    c = dict(cfg.cleaning)
    roi_mm = c.pop("roi_mm")
    roi = None
    if roi_mm is not None:
        X = vol.data.shape[0]
        roi = (min(int(round(roi_mm[0] * vol.fsp_px_per_mm)), X), min(int(round(roi_mm[1] * vol.fsp_px_per_mm)), X))
    return CleaningParams(roi_x=roi, **c)


def _summary(**items):
    parts = []
    for k, v in items.items():
        parts.append(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}")
    print(" ".join(parts))


def run_synth(cfg):
    a = cfg.args
    preset = PRESETS[a.preset]
    noise = NoiseParams(jitter_std=a.jitter * preset.pulse.amp0, reflect_gain=a.reflect_gain,
                        tail_amp=a.tail_amp)
    t0 = time.perf_counter()
    with _Stage("synthesis"):
        vol = preset.volume(noise, seed=a.seed)
    out = Path(a.out)
    stem = out.with_suffix("")
    with _Stage("write"):
        ensure_parent(out)
        save_volume(vol, out)
        save_speed_map(preset.speed_map(), f"{stem}.speed.bin")
        if preset.inc_kpa is not None:
            inc, bg = preset.masks()
            save_mask(inc, f"{stem}.inc.mask")
            save_mask(bg, f"{stem}.bg.mask")
    _summary(method="synth", preset=a.preset, runtime_s=time.perf_counter() - t0,
             mean_sws=float(preset.speed_map().c.mean()), shape="x".join(map(str, vol.shape)))


def run_clean(cfg):
    a = cfg.args
    t0 = time.perf_counter()
    with _Stage("load"):
        vol = load_volume(a.inp)
    with _Stage("cleaning"):
        cp = _cleaning_params(cfg, vol)
        if cfg.interp > 1 and cp.roi_x is not None:
            cp = replace(cp, roi_x=(cp.roi_x[0] * cfg.interp, (cp.roi_x[1] - 1) * cfg.interp + 1))
        work = lateral_interpolate(vol, cfg.interp)
        cleaned, failed = clean_volume(work, cp)
    with _Stage("write"):
        ensure_parent(a.out)
        save_volume(cleaned, a.out)
        if a.figure:
            from .plotting import plot_tl_plane
            z = vol.data.shape[1] // 2
            stem = Path(a.figure)
            plot_tl_plane(work.data[:, z, :], stem.with_name(stem.stem + "_raw.png"), vol.fs_hz,
                          work.fsp_px_per_mm, "raw")
            plot_tl_plane(cleaned.data[:, z, :], a.figure, vol.fs_hz, work.fsp_px_per_mm, "cleaned")
    _summary(method="clean", runtime_s=time.perf_counter() - t0, failed_slices=int(failed.sum()),
             shape="x".join(map(str, cleaned.shape)))


def _embed(sws: SwsMap, offset, X):
    data = np.full((X, sws.shape[1]), np.nan)
    data[offset:offset + sws.shape[0]] = np.where(sws.valid, sws.data, np.nan)
    return SwsMap(data, np.isfinite(data))


def run_reconstruct(cfg):
    a = cfg.args
    t0 = time.perf_counter()
    with _Stage("load"):
        vol = load_volume(a.inp)
        vol.require_pipeline_shape()
    X = vol.data.shape[0]
    cp = None if a.no_clean and a.method in MODES else _cleaning_params(cfg, vol)
    if a.method in MODES:
        o = cfg.optimization
        dx_px = max(1, int(round(o["dx_mm"] * vol.fsp_px_per_mm * cfg.interp)))
        with _Stage("parameters"):
            op = OptimizationParams(dx_px=dx_px, l=o["kernel"][0], a=o["kernel"][1], sigma_w=o["sigma_w"],
                                    L=o["L"], f_sig_hz=o["f_sig_hz"], gamma1=o["gamma1"],
                                    gamma2=o["gamma2"], mode=a.method)
        with _Stage("reconstruction"):
            sws = reconstruct(vol, cp, op, M=cfg.interp, median=cfg.median or None, threads=cfg.threads,
                              full_grid=a.full_grid, clean_first=a.clean_first)
    else:
        with _Stage("cleaning"):
            work = vol
            if a.clean:
                work, _ = clean_volume(vol, cp)
        with _Stage("estimation"):
            sws = _embed(baselines.ESTIMATORS[a.method](work, cfg.baseline), work.x_offset_px, X)
            if cfg.median:
                sws = metrics.median_filter(sws, cfg.median)
    runtime = time.perf_counter() - t0
    with _Stage("write"):
        ensure_parent(a.out)
        save_sws_map(sws, a.out)
        if a.figure:
            from .plotting import plot_maps
            fsp = vol.fsp_px_per_mm * (cfg.interp if a.full_grid else 1)
            plot_maps({a.method: sws}, a.figure, fsp)
    _summary(method=a.method, runtime_s=runtime, mean_sws=sws.valid_mean(),
             valid_fraction=float(sws.valid.mean()))


def run_evaluate(cfg):
    a = cfg.args
    t0 = time.perf_counter()
    with _Stage("load"):
        maps = {Path(p).stem: load_sws_map(p) for p in a.inp}
        truth = inc = bg = None
        if a.preset:
            preset = PRESETS[a.preset]
            truth = preset.speed_map()
            if preset.inc_kpa is not None:
                inc, bg = preset.masks(guard_mm=a.guard_mm)
        if a.truth:
            truth = load_speed_map(a.truth)
        if a.inc:
            inc, bg = load_mask(a.inc), load_mask(a.bg)
        if inc is not None:
            check_disjoint(inc, bg)
    with _Stage("metrics"):
        for name, m in maps.items():
            rep = {"map": name, "mean_sws": m.valid_mean(), "valid_fraction": float(m.valid.mean())}
            if truth is not None:
                rep["truth_mean"] = float(truth.c.mean())
                rep["mean_error_pct"] = 100.0 * (m.valid_mean() / float(truth.c[m.valid].mean()) - 1.0)
                rep["psnr_db"] = metrics.psnr(m, truth)
            if inc is not None:
                si, sb = metrics.region_stats(m, inc), metrics.region_stats(m, bg)
                rep.update(inc_mean=si.mean, inc_std=si.std, bg_mean=sb.mean, bg_std=sb.std,
                           cnr_db=metrics.cnr_from_stats(si, sb))
            print(f"# {name}: mean {rep['mean_sws']:.4f} m/s over {rep['valid_fraction']:.1%} of pixels")
            _summary(**rep)
    if a.figure:
        with _Stage("write"):
            from .plotting import plot_maps
            fsp = truth.fsp_px_per_mm if truth is not None else 1.0
            shown = dict(maps)
            if truth is not None:
                shown = {"truth": SwsMap(truth.c), **shown}
            plot_maps(shown, a.figure, fsp)
    _summary(method="evaluate", runtime_s=time.perf_counter() - t0, maps=len(maps))


RUNNERS = {"synth": run_synth, "clean": run_clean, "reconstruct": run_reconstruct, "evaluate": run_evaluate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = validate(args, parser)
    try:
        RUNNERS[cfg.subcommand](cfg)
    except StageError as exc:
        print(f"swsmap {cfg.subcommand}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
