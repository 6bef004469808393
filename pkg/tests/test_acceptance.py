"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import time
from functools import lru_cache

import numpy as np
import pytest

from swsmap.baselines import ESTIMATORS, BaselineParams, estimate_fdsm_detailed, estimate_ttp, estimate_xcorr
from swsmap.estimators import (OptimizationParams, SignalGroup, _omega, edge_renormalize, gaussian_kernel,
                               n_bins, pairwise_delays_td, phase_shift_regress, reconstruct)
from swsmap.metrics import RegionStats, cnr, cnr_from_stats, median_filter, psnr
from swsmap.phantom import PRESETS, NoiseParams
from swsmap.preprocess import (CleaningParams, build_mask, clean_volume, extract_condition_plane,
                               piecewise_fit, prune_outlier_peaks, ttp_profile)
from swsmap.volume_io import SwsMap

from oracles import fractional_delay, gaussian_pulse

pytestmark = pytest.mark.slow

INC = "inc45_d10.40"
INC_NOISE = NoiseParams(jitter_std=0.1, reflect_gain=0.3)  # pulse amplitude is 1
MODES = ("td", "pd", "combined")


def op_for(mode, dx_px):
    return OptimizationParams(dx_px=dx_px, f_sig_hz=1000.0, gamma1=1.0, gamma2=0.2, mode=mode)


@lru_cache(maxsize=None)
def inclusion_maps(seed):
    """Constrained-estimator maps (M = 2, 5x5 median) on the noisy inclusion phantom."""
    vol = PRESETS[INC].volume(INC_NOISE, seed=seed)
    # groups span +-5 original columns (0.85 mm) on the 2x interpolated grid
    return vol, {m: reconstruct(vol, CleaningParams(), op_for(m, 10), M=2, median=5) for m in MODES}


def test_criterion_1_homogeneous_accuracy(verdict):
    rows, ok = [], True
    for name in ("homog15", "homog30"):
        pre = PRESETS[name]
        vol = pre.volume()
        truth = float(pre.speed_map().c.mean())
        dx = int(round(0.5 * vol.fsp_px_per_mm * 2))  # 0.5 mm on the interpolated grid
        for mode in MODES:
            op = OptimizationParams(dx_px=dx, f_sig_hz=500.0, mode=mode)
            t0 = time.perf_counter()
            m = reconstruct(vol, CleaningParams(), op, M=2, threads=1)
            dt = time.perf_counter() - t0
            err = 100.0 * (m.valid_mean() / truth - 1.0)
            ok &= abs(err) <= 2.0 and dt <= 60.0
            rows.append(f"{name}/{mode} {err:+.2f}% {dt:.1f}s")
    verdict(1, "homogeneous mean error <= 2%, runtime <= 60 s", ok, "; ".join(rows))


def test_criterion_2_inclusion_contrast_ordering(verdict):
    vol, maps = inclusion_maps(0)
    inc, bg = PRESETS[INC].masks(guard_mm=1.0)
    c = {m: cnr(maps[m], inc, bg) for m in ("td", "pd")}
    # baselines get the same lateral support as the groups: +-5 columns
    c["ttp"] = cnr(median_filter(estimate_ttp(vol, BaselineParams(fit_halfwidth_px=5))), inc, bg)
    c["xcorr"] = cnr(median_filter(estimate_xcorr(vol, BaselineParams(dx_px=5))), inc, bg)
    margin = min(c["td"], c["pd"]) - max(c["ttp"], c["xcorr"])
    detail = ", ".join(f"{k}={v:.2f} dB" for k, v in c.items()) + f", margin={margin:.2f} dB"
    verdict(2, "CNR(td), CNR(pd) exceed CNR(ttp), CNR(xcorr) by >= 2 dB", margin >= 2.0, detail)


def test_criterion_3_delay_recovery(verdict):
    rng = np.random.default_rng(2024)
    n, fs = 64, 10_000.0
    td_hits = pd_hits = 0
    trials = 200
    for _ in range(trials):
        d = rng.uniform(0.5, 8.0)
        base = gaussian_pulse(n, rng.uniform(10, 20), rng.uniform(1.5, 3.5))
        g = SignalGroup(fractional_delay(base, d), base, fractional_delay(base, 2 * d))
        t10, t02 = pairwise_delays_td(g, 10)
        td_hits += abs(t10 - 10 * d) <= 1 and abs(t02 - 10 * d) <= 1
        pd_hits += abs(phase_shift_regress(g.u1, g.u0, 1000.0, fs) - d) <= 0.1
    ok = td_hits >= 0.99 * trials and pd_hits >= 0.95 * trials
    verdict(3, "fractional delays recovered (td +-1 in >=99%, phase +-0.1 in >=95%)", ok,
            f"td {td_hits}/{trials}, phase {pd_hits}/{trials}")


def _phase_rms(vol, f_sig_hz, sep=3):
    """Mean RMS residual of the cross-phase of columns ``sep`` apart from its LS line."""
    N = vol.data.shape[2]
    K = n_bins(N, f_sig_hz, vol.fs_hz)
    om = _omega(N, K)
    S = np.fft.rfft(vol.data, axis=-1)[..., 1:K + 1]
    ph = np.unwrap(np.angle(S[:-sep] * np.conj(S[sep:])), axis=-1).reshape(-1, K)
    A = np.vstack([om, np.ones_like(om)]).T
    coef, *_ = np.linalg.lstsq(A, ph.T, rcond=None)
    res = ph.T - A @ coef
    return float(np.sqrt((res ** 2).mean(axis=0)).mean())


def test_criterion_4_phase_linearization(verdict):
    rhos = (20.0, 10.0, 5.0, 2.0, 1.0)
    rows, ok = [], True
    for name in ("homog15", INC):
        vol = PRESETS[name].volume(NoiseParams(tail_amp=0.5), seed=5)
        rms = []
        for rho in rhos:
            cp = CleaningParams(rho=rho)
            cleaned, failed = clean_volume(vol, cp)
            rms.append(_phase_rms(cleaned, 1000.0))
            # mask bounds on every slice
            for z in range(vol.data.shape[1]):
                plane = extract_condition_plane(vol, z, cp)
                kept = prune_outlier_peaks(ttp_profile(plane), cp.t_sh)
                phi = build_mask(piecewise_fit(plane, kept, cp.q, cp.r), rho, plane.d.shape)
                ok &= bool(np.all(phi > 0) and np.all(phi <= cp.r))
        ok &= all(b <= a for a, b in zip(rms, rms[1:]))
        rows.append(f"{name}: " + " ".join(f"{v:.3g}" for v in rms))
    verdict(4, "phase residual non-increasing over rho 20..1, 0 < mask <= r", ok, "; ".join(rows))


def test_criterion_5_fdsm_flat_fraction_drops_after_cleaning(verdict):
    vol = PRESETS[INC].volume(INC_NOISE, seed=0)
    bp = BaselineParams()
    raw = estimate_fdsm_detailed(vol, bp).flat_fraction
    cleaned = estimate_fdsm_detailed(clean_volume(vol, CleaningParams(rho=1.0))[0], bp).flat_fraction
    verdict(5, "FDSM flat-objective fraction strictly lower after cleaning", cleaned < raw,
            f"uncleaned {raw:.3f}, cleaned {cleaned:.3f}")


def _all_maps(vol, threads=1):
    cp = CleaningParams()
    maps = {m: reconstruct(vol, cp, op_for(m, 4), M=2, threads=threads) for m in MODES}
    bp = BaselineParams(dx_px=2)
    maps.update({k: f(vol, bp) for k, f in ESTIMATORS.items()})
    return maps


def _same(a: SwsMap, b: SwsMap):
    return np.array_equal(a.valid, b.valid) and np.array_equal(a.data[a.valid], b.data[b.valid])


def test_criterion_6_invariance_suite(verdict, small_inclusion):
    zeros = np.zeros(small_inclusion.data.shape[:2] + (9,))
    base = small_inclusion.with_data(np.concatenate([small_inclusion.data, zeros], -1))
    ref = _all_maps(base)
    scaled = _all_maps(base.with_data(7.3 * base.data))
    shifted = _all_maps(base.with_data(np.concatenate([zeros, small_inclusion.data], -1)))
    scale_ok = [k for k in ref if _same(ref[k], scaled[k])]
    shift_ok = [k for k in ref if _same(ref[k], shifted[k])]

    rng = np.random.default_rng(6)
    worst = 0.0
    for l, a, s in [(5, 5, 1.0), (3, 3, 0.5), (7, 5, 2.0), (1, 1, 1.0)]:
        k = gaussian_kernel(l, a, s)
        worst = max(worst, abs(k.mu.sum() - 1))
        for _ in range(50):
            inside = rng.random((l, a)) < 0.5
            inside[l // 2, a // 2] = True
            worst = max(worst, abs(edge_renormalize(k, inside).mu.sum() - 1))

    thread_ok = True
    for n in (2, 8):
        other = {m: reconstruct(base, CleaningParams(), op_for(m, 4), M=2, threads=n) for m in MODES}
        thread_ok &= all(_same(ref[m], other[m]) for m in MODES)

    ok = len(scale_ok) == len(ref) and len(shift_ok) == len(ref) and worst <= 1e-12 and thread_ok
    detail = (f"scale {len(scale_ok)}/{len(ref)}, shift {len(shift_ok)}/{len(ref)}, "
              f"max |sum mu - 1| {worst:.1e}, threads 1/2/8 identical: {thread_ok}")
    verdict(6, "scale/shift invariance, kernel normalisation, thread determinism", ok, detail)


def test_criterion_7_metric_correctness(verdict):
    errs = []
    errs.append(abs(cnr_from_stats(RegionStats(4, 0.3, 9), RegionStats(2, 0.4, 9)) - 20 * np.log10(4.0)))
    swapped = cnr_from_stats(RegionStats(2, 0.4, 9), RegionStats(4, 0.3, 9))
    errs.append(abs(swapped - 20 * np.log10(4.0)))
    sentinels = (cnr_from_stats(RegionStats(2, 0.3, 9), RegionStats(2, 0.4, 9)) == -np.inf
                 and cnr_from_stats(RegionStats(3, 0, 9), RegionStats(2, 0, 9)) == np.inf)
    # normalised map [1, 0.5] against normalised label [1, 0.5 + sqrt(0.02)]: mse = 0.01
    m = SwsMap(np.array([[2.0, 1.0]]))
    label = np.array([[3.0, 3.0 * (0.5 + np.sqrt(0.02))]])
    errs.append(abs(psnr(m, label) - 20.0))
    sentinels &= psnr(SwsMap(np.array([[2.0, 1.0]])), np.array([[4.0, 2.0]])) == np.inf
    idem = True
    for X, Z, cut in [(12, 9, 5), (4, 2, 2), (20, 3, 0), (7, 7, 6)]:
        step = np.where(np.arange(X)[:, None] < cut, 1.5, 4.0) * np.ones((1, Z))
        once = median_filter(SwsMap(step))
        idem &= np.array_equal(median_filter(once).data, once.data)
    ok = max(errs) <= 1e-9 and sentinels and idem
    verdict(7, "cnr/psnr hand examples to 1e-9, median idempotent on steps", ok,
            f"max abs error {max(errs):.1e}, sentinels {sentinels}, idempotent {idem}")


def test_criterion_8_combined_loss_benefit(verdict):
    truth = PRESETS[INC].speed_map()
    rows, ok = [], True
    for seed in range(5):
        _, maps = inclusion_maps(seed)
        p = {m: psnr(maps[m], truth) for m in MODES}
        ok &= p["combined"] >= max(p["td"], p["pd"]) - 0.5
        rows.append(f"seed {seed}: td {p['td']:.2f} pd {p['pd']:.2f} combined {p['combined']:.2f}")
    verdict(8, "PSNR(combined) >= max(td, pd) - 0.5 dB on 5 seeds", ok, "; ".join(rows))
