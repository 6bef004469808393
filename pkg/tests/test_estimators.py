import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swsmap.errors import ParameterError, UsageError
from swsmap.estimators import (OptimizationParams, SignalGroup, edge_renormalize, estimate_pixel,
                               estimate_shift_map, gaussian_kernel, loss_pd, loss_td, ncc, ncc_curve,
                               pairwise_delays_td, phase_shift_regress, reconstruct, search_range,
                               sws_from_shift)
from swsmap.metrics import psnr
from swsmap.phantom import PRESETS, NoiseParams
from swsmap.preprocess import CleaningParams
from swsmap.volume_io import DisplacementVolume

from oracles import brute_force_delay, fractional_delay, gaussian_pulse, ncc_direct, shifted

FS = 10_000.0


def pulse_group(s, n=64, center=14.0, width=2.5, scales=(1.0, 1.0, 1.0)):
    """u1 earliest, u0 delayed by s, u2 by 2s (samples)."""
    base = gaussian_pulse(n, center, width)
    return SignalGroup(scales[0] * fractional_delay(base, s), scales[1] * base,
                       scales[2] * fractional_delay(base, 2 * s))


def tiny_volume(group, W=5):
    """A one-depth volume whose middle column carries ``group`` with dx = 1."""
    d = np.zeros((W, 1, group.n))
    c = W // 2
    d[c - 1, 0], d[c, 0], d[c + 1, 0] = group.u1, group.u0, group.u2
    return DisplacementVolume(d, FS, 5.0, 0.2)


# ---------------------------------------------------------------- NCC

def test_ncc_examples():
    s = np.random.default_rng(0).normal(size=50)
    assert ncc(s, s) == pytest.approx(1.0, abs=1e-9)
    assert ncc([1, 0], [0, 1]) == 0.0
    assert ncc(s, 3 * s) == pytest.approx(1.0, abs=1e-9)
    assert ncc(np.zeros(4), np.zeros(4)) == 0.0
    with pytest.raises(UsageError):
        ncc([1, 2], [1, 2, 3])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ncc_curve_matches_direct_loop(seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=24), r.normal(size=24)
    direct = np.array([ncc_direct(shifted(a, t), b) for t in range(24)])
    assert np.allclose(ncc_curve(a, b), direct, atol=1e-9)


def test_on_grid_delay_is_exact():
    base = gaussian_pulse(64, 12, 2.0)
    g = SignalGroup(shifted(base, 4), base, shifted(base, 8))
    assert pairwise_delays_td(g, 10) == (40, 40)


def test_zero_signal_delay_is_zero():
    base = gaussian_pulse(32, 10, 2.0)
    assert pairwise_delays_td(SignalGroup(base, np.zeros(32), base), 5)[0] == 0


def test_fractional_delay_recovered():
    t10, t02 = pairwise_delays_td(pulse_group(2.3), 10)
    assert abs(t10 - 23) <= 1 and abs(t02 - 23) <= 1


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 8.0))
def test_loss_td_argmin_agrees_with_brute_force_alignment(s):
    g = pulse_group(s)
    L = 4
    curve = [loss_td(g, T, L) for T in range(1, 60)]
    best = 1 + int(np.argmin(curve))
    from swsmap.preprocess import temporal_upsample
    up = temporal_upsample(np.stack([g.u1, g.u0]), L)
    assert abs(best - brute_force_delay(up[0], up[1])) <= 1


# ---------------------------------------------------------------- losses

def test_loss_td_examples():
    base = gaussian_pulse(48, 10, 2.0)
    g = SignalGroup(2 * shifted(base, 3), 0.5 * base, 7 * shifted(base, 6))
    assert loss_td(g, 30, 10) < 1e-6
    vals = [loss_td(g, T, 10) for T in range(0, 480, 7)]
    assert min(vals) >= 0 and max(vals) <= 4


def test_loss_td_with_jitter_noise():
    r = np.random.default_rng(5)
    g = pulse_group(3.0)
    noisy = SignalGroup(*(u + r.normal(0, 0.05, u.size) for u in (g.u0, g.u1, g.u2)))
    curve = [loss_td(noisy, T, 10) for T in range(1, 100)]
    assert abs(1 + int(np.argmin(curve)) - 30) <= 10


def test_phase_regression_examples():
    a = gaussian_pulse(64, 20, 2.0)
    assert phase_shift_regress(a, a, 1000, FS) == pytest.approx(0.0, abs=1e-12)
    b = fractional_delay(a, 3.4)
    assert phase_shift_regress(a, b, 1500, FS) == pytest.approx(3.4, abs=0.05)
    assert phase_shift_regress(a, b, 1500, FS) == pytest.approx(-phase_shift_regress(b, a, 1500, FS), abs=1e-9)
    with pytest.raises(ParameterError):
        phase_shift_regress(a, b, 200, FS)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 6.0))
def test_loss_pd_argmin_is_rounded_shift(s):
    g = pulse_group(s, width=2.0)
    L = 10
    curve = [loss_pd(g, T, L, 2000, FS) for T in range(1, 80)]
    assert min(curve) >= 0
    assert 1 + int(np.argmin(curve)) == int(np.floor(s * L + 0.5))


def test_loss_pd_amplitude_invariance():
    g = pulse_group(2.7)
    h = pulse_group(2.7, scales=(3.0, 0.2, 11.0))
    for T in (5, 27, 40):
        assert loss_pd(h, T, 10, 1500, FS) == pytest.approx(loss_pd(g, T, 10, 1500, FS), abs=1e-9)


@pytest.mark.parametrize("mode", ["td", "pd", "combined"])
def test_engine_curve_matches_definitions(mode):
    r = np.random.default_rng(3)
    g = pulse_group(2.2)
    g = SignalGroup(*(u + r.normal(0, 0.02, u.size) for u in (g.u0, g.u1, g.u2)))
    op = OptimizationParams(dx_px=1, l=1, a=1, L=10, f_sig_hz=1500, gamma1=1.0, gamma2=0.2, mode=mode)
    est = estimate_pixel(tiny_volume(g), 2, 0, op)
    t_min, t_max = est.search_range
    for T, got in zip(range(t_min, t_max + 1), est.objective_curve):
        want = 0.0
        if mode != "pd":
            want += (1.0 if mode == "td" else op.gamma1) * loss_td(g, T, 10)
        if mode != "td":
            want += (1.0 if mode == "pd" else op.gamma2) * loss_pd(g, T, 10, 1500, FS)
        assert got == pytest.approx(want, abs=1e-9)
    assert est.t_opt == t_min + int(np.argmin(est.objective_curve))


# ---------------------------------------------------------------- kernel and range

def test_kernel_examples():
    assert gaussian_kernel(1, 1, 1.0).mu.tolist() == [[1.0]]
    k = gaussian_kernel(5, 5, 1.0)
    assert k.mu.sum() == pytest.approx(1.0, abs=1e-12) and k.valid.all()
    k = gaussian_kernel(5, 5, 0.5)
    mu = k.mu.copy()
    c = mu[2, 2]
    mu[2, 2] = -1
    assert c > mu.max()
    with pytest.raises(ParameterError):
        gaussian_kernel(4, 5, 1.0)


def test_edge_renormalize_examples():
    k = gaussian_kernel(3, 3, 0.5)
    same = edge_renormalize(k, np.ones((3, 3), bool))
    assert np.allclose(same.mu, k.mu)
    inside = np.ones((3, 3), bool)
    inside[2, :] = False
    cut = edge_renormalize(k, inside)
    assert cut.mu[inside].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(cut.mu[~inside] == 0) and cut.mu[1, 1] > k.mu[1, 1]
    inside[1, 1] = False
    with pytest.raises(UsageError):
        edge_renormalize(k, inside)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([1, 3, 5, 7]), st.sampled_from([1, 3, 5]), st.floats(0.2, 4.0),
       st.integers(0, 2**32 - 1))
def test_kernel_sum_after_any_renormalization(l, a, sig, seed):
    k = gaussian_kernel(l, a, sig)
    inside = np.random.default_rng(seed).random((l, a)) < 0.6
    inside[l // 2, a // 2] = True
    w = edge_renormalize(k, inside)
    assert abs(w.mu.sum() - 1.0) <= 1e-12 and np.all(w.mu >= 0)


def test_search_range_examples():
    assert search_range([(25, 25), (25, 25)], 10) == (15, 35)
    assert search_range([(4, 4)], 10) == (1, 14)
    assert search_range([(10, 30)], 10) == (10, 30)
    assert search_range([(0, 12)], 10) == (1, 12)


def test_sws_from_shift_examples():
    assert sws_from_shift(100, 5.882, 10, FS, 5.882) == pytest.approx(1.0)
    assert sws_from_shift(30, 3, 10, FS, 5.882) == pytest.approx(1.700, abs=5e-4)
    assert sws_from_shift(60, 3, 10, FS, 5.882) == pytest.approx(sws_from_shift(30, 3, 10, FS, 5.882) / 2)
    with pytest.raises(UsageError):
        sws_from_shift(0, 3, 10, FS, 5.882)


def test_params_validation():
    with pytest.raises(ParameterError):
        OptimizationParams(l=4)
    with pytest.raises(ParameterError):
        OptimizationParams(mode="combined", gamma1=0.0, gamma2=0.0)
    with pytest.raises(ParameterError):
        OptimizationParams(mode="xx")
    with pytest.raises(ParameterError):
        OptimizationParams(f_sig_hz=6000).check_rate(FS)


# ---------------------------------------------------------------- pixels on phantoms

def _true_shift(vol, dx_px, c, L):
    return dx_px / vol.fsp_px_per_mm / c * vol.fs_hz * 1e-3 * L


def test_pixel_estimate_on_noiseless_homogeneous(homog15):
    op = OptimizationParams(dx_px=3, f_sig_hz=1000)
    truth = _true_shift(homog15, 3, np.sqrt(5.0), 10)  # c = sqrt(15 kPa / 3000)
    for x, z in [(20, 10), (48, 32), (70, 50)]:
        td = estimate_pixel(homog15, x, z, op)
        pd = estimate_pixel(homog15, x, z, OptimizationParams(dx_px=3, f_sig_hz=1000, mode="pd"))
        assert abs(td.t_opt - truth) <= 1
        assert abs(pd.t_opt - td.t_opt) <= op.L
        assert td.search_range[0] <= td.t_opt <= td.search_range[1]


def test_search_range_contains_truth_everywhere(homog15):
    op = OptimizationParams(dx_px=3, f_sig_hz=1000)
    truth = _true_shift(homog15, 3, np.sqrt(5.0), 10)
    for x in range(3, 93, 5):
        for z in range(0, 64, 7):
            lo, hi = estimate_pixel(homog15, x, z, op).search_range
            assert lo <= truth <= hi


def test_invalid_pixels():
    g = pulse_group(2.0)
    vol = tiny_volume(g)
    op = OptimizationParams(dx_px=1, l=1, a=1, f_sig_hz=1500)
    assert estimate_pixel(vol, 0, 0, op) is None
    vol.data[1] = 0.0
    assert estimate_pixel(vol, 2, 0, op) is None


def test_thread_count_does_not_change_result(small_inclusion):
    op = OptimizationParams(dx_px=2, f_sig_hz=1000, mode="combined")
    ref = estimate_shift_map(small_inclusion, op, threads=1)
    for n in (2, 8):
        assert np.array_equal(estimate_shift_map(small_inclusion, op, threads=n), ref)


def test_scale_and_delay_leave_map_unchanged(small_inclusion):
    op = OptimizationParams(dx_px=2, f_sig_hz=1000)
    cp = CleaningParams()
    # a delay keeps the record length: zeros in front versus the same zeros behind
    zeros = np.zeros(small_inclusion.data.shape[:2] + (7,))
    ref = reconstruct(small_inclusion.with_data(np.concatenate([small_inclusion.data, zeros], -1)), cp, op, M=2)
    scaled = reconstruct(small_inclusion.with_data(np.concatenate([7.3 * small_inclusion.data, zeros], -1)),
                         cp, op, M=2)
    delayed = reconstruct(small_inclusion.with_data(np.concatenate([zeros, small_inclusion.data], -1)), cp, op, M=2)
    for other in (scaled, delayed):
        assert np.array_equal(other.valid, ref.valid)
        assert np.array_equal(other.data[ref.valid], ref.data[ref.valid])


@pytest.mark.slow
def test_combined_not_worse_than_best_single_mode():
    pre = PRESETS["inc45_d10.40"]
    vol = pre.volume(NoiseParams(jitter_std=0.1, reflect_gain=0.3), seed=0)
    cp = CleaningParams()
    scores = {}
    for mode in ("td", "pd", "combined"):
        op = OptimizationParams(dx_px=10, f_sig_hz=1000, mode=mode)
        scores[mode] = psnr(reconstruct(vol, cp, op, M=2, median=5), pre.speed_map())
    assert scores["combined"] >= max(scores["td"], scores["pd"]) - 0.5
