"""Objective, analytic gradient, box-constrained estimation, pre-calibration."""

import numpy as np
import numpy.testing as npt
import pytest

import vcavity as vc
from vcavity import inverse


def central_fd(fun, x, h=1e-6):
    grad = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        grad[k] = (fun(xp) - fun(xm)) / (2.0 * h)
    return grad


# -------------------------------------------------------- smoothness ------


def test_smoothness_zero_for_constant_and_ramp():
    value, grad = vc.smoothness_penalty(np.full(61, 0.5))
    assert value == 0.0
    npt.assert_array_equal(grad, 0.0)
    value, grad = vc.smoothness_penalty(np.linspace(0.1, 0.9, 61))
    npt.assert_allclose(value, 0.0, atol=1e-28)
    npt.assert_allclose(grad, 0.0, atol=1e-13)


def test_smoothness_single_spike_hand_value():
    # triples around a unit spike: (0,1,0) -> 4, (1,0,0) and (0,0,1) -> 1 each
    r = np.zeros(7)
    r[3] = 1.0
    value, _ = vc.smoothness_penalty(r)
    npt.assert_allclose(value, 6.0)
    value3, _ = vc.smoothness_penalty(np.array([0.0, 1.0, 0.0]))
    npt.assert_allclose(value3, 4.0)


def test_smoothness_gradient_matches_finite_differences(rng):
    r = rng.uniform(0.1, 0.9, 61)
    _, grad = vc.smoothness_penalty(r)
    fd = central_fd(lambda x: vc.smoothness_penalty(x)[0], r)
    npt.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


def test_smoothness_needs_three_bands():
    with pytest.raises(ValueError):
        vc.smoothness_penalty(np.array([0.1, 0.2]))


# --------------------------------------------------------- objective ------


def test_objective_vanishes_at_ground_truth(small_eig, d65, camera, patches):
    truth = patches["orange"]
    obs = vc.forward_uniform(small_eig, truth, d65, camera)
    cfg = vc.EstimationConfig(alpha=0.0, normalization="none")
    value, _ = vc.objective(truth, small_eig, d65, camera, obs, cfg)
    assert value <= 1e-18 * float(obs.values @ obs.values)


def test_objective_gradient_matches_finite_differences(small_eig, d65, camera, patches, rng):
    obs = vc.forward_uniform(small_eig, patches["blue"], d65, camera)
    for normalization in ("none", "sum"):
        cfg = vc.EstimationConfig(alpha=1.3, normalization=normalization)
        x = rng.uniform(0.1, 0.9, 61)
        _, grad = vc.objective(x, small_eig, d65, camera, obs, cfg)
        fd = central_fd(
            lambda v: vc.objective(v, small_eig, d65, camera, obs, cfg)[0], x
        )
        rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
        assert rel <= 1e-4


def test_growing_alpha_drives_the_minimizer_toward_affine(small_eig, d65, camera, patches):
    # the penalty null space is affine spectra, so its weight trades
    # curvature for data fit monotonically
    obs = vc.forward_uniform(small_eig, patches["green"], d65, camera)
    penalties = []
    for alpha in (0.0, 10.0, 1e4, 1e9):
        cfg = vc.EstimationConfig(alpha=alpha, max_iters=1000)
        penalties.append(vc.estimate(obs, small_eig, d65, camera, cfg).smoothness_penalty)
    assert all(b < a for a, b in zip(penalties, penalties[1:]))
    cfg = vc.EstimationConfig(alpha=1e9, max_iters=1000)
    v = vc.estimate(obs, small_eig, d65, camera, cfg).reflectance.values
    assert np.abs(v[2:] - 2.0 * v[1:-1] + v[:-2]).max() <= 5e-3


def test_objective_warns_and_clamps_outside_the_box(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["red"], d65, camera)
    cfg = vc.EstimationConfig()
    inside, _ = vc.objective(np.full(61, 1.0), small_eig, d65, camera, obs, cfg)
    with pytest.warns(vc.ClampWarning):
        outside, _ = vc.objective(np.full(61, 1.4), small_eig, d65, camera, obs, cfg)
    npt.assert_allclose(outside, inside, rtol=1e-12)


def test_objective_dimension_checks(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["red"], d65, camera)
    cfg = vc.EstimationConfig()
    with pytest.raises(ValueError, match="reflectance bands"):
        vc.objective(np.full(30, 0.5), small_eig, d65, camera, obs, cfg)
    with pytest.raises(ValueError, match="observation"):
        vc.objective(np.full(61, 0.5), small_eig, d65, camera, obs.values[:-3], cfg)


def test_objective_eigenvalue_collision_raises(d65, camera):
    # g = 2 makes 1/r - g vanish at r = 0.5; valid kernels never reach this
    eig = vc.EigenKernel(np.eye(2), np.array([2.0, 0.0]), np.eye(2))
    cfg = vc.EstimationConfig()
    with pytest.raises(vc.NumericError):
        vc.objective(np.full(61, 0.5), eig, d65, camera, np.ones(2 * 3), cfg)


# ------------------------------------------------------------ config ------


def test_estimation_config_validation():
    with pytest.raises(ValueError):
        vc.EstimationConfig(alpha=-1.0)
    with pytest.raises(ValueError):
        vc.EstimationConfig(max_iters=0)
    with pytest.raises(ValueError):
        vc.EstimationConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        vc.EstimationConfig(lower_bound=0.0)
    with pytest.raises(ValueError):
        vc.EstimationConfig(lower_bound=0.5, upper_bound=0.5)
    with pytest.raises(ValueError):
        vc.EstimationConfig(upper_bound=1.5)
    with pytest.raises(ValueError):
        vc.EstimationConfig(normalization="zscore")
    with pytest.raises(ValueError):
        vc.EstimationConfig(init=0.0)
    assert vc.EstimationConfig().normalization == "none"
    assert vc.EstimationConfig().alpha == 2.5


# ---------------------------------------------------------- estimate ------


def test_constant_half_recovered_from_cold_start(small_eig, d65, camera):
    truth = vc.Spectrum(vc.DEFAULT_GRID, np.full(61, 0.5), "reflectance")
    obs = vc.forward_uniform(small_eig, truth, d65, camera)
    cfg = vc.EstimationConfig(alpha=0.0, init=0.3)
    result = vc.estimate(obs, small_eig, d65, camera, cfg)
    npt.assert_allclose(result.reflectance.values, 0.5, atol=1e-3)


def test_estimate_is_deterministic(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["purple"], d65, camera)
    cfg = vc.EstimationConfig()
    a = vc.estimate(obs, small_eig, d65, camera, cfg)
    b = vc.estimate(obs, small_eig, d65, camera, cfg)
    npt.assert_array_equal(a.reflectance.values, b.reflectance.values)
    assert a.per_iteration_trace == b.per_iteration_trace


def test_sum_normalization_cancels_observation_scale(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["yellow"], d65, camera)
    scaled = vc.RgbObservation(obs.m, obs.s, 3.0 * obs.values)
    cfg = vc.EstimationConfig(normalization="sum")
    a = vc.estimate(obs, small_eig, d65, camera, cfg)
    b = vc.estimate(scaled, small_eig, d65, camera, cfg)
    npt.assert_array_equal(a.reflectance.values, b.reflectance.values)


def test_trace_is_monotone_and_starts_at_init(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["moderate_red"], d65, camera)
    cfg = vc.EstimationConfig()
    result = vc.estimate(obs, small_eig, d65, camera, cfg)
    trace = np.array(result.per_iteration_trace)
    assert trace.size >= 2
    assert np.all(np.diff(trace) <= 1e-12 * max(1.0, trace[0]))
    first, _ = vc.objective(np.full(61, 0.5), small_eig, d65, camera, obs, cfg)
    npt.assert_allclose(trace[0], first, rtol=1e-12)


def test_estimate_respects_the_box(small_eig, d65, camera, patches):
    truth = patches["white"]  # bright patch pushes against a tight box
    obs = vc.forward_uniform(small_eig, truth, d65, camera)
    cfg = vc.EstimationConfig(upper_bound=0.6, lower_bound=0.05)
    result = vc.estimate(obs, small_eig, d65, camera, cfg)
    assert np.all(result.reflectance.values <= 0.6 + 1e-15)
    assert np.all(result.reflectance.values >= 0.05 - 1e-15)


def test_multi_start_invariance(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["blue_flower"], d65, camera)
    cfg = vc.EstimationConfig(normalization="sum", max_iters=2000)
    answers = [
        vc.estimate(obs, small_eig, d65, camera, vc.EstimationConfig(
            normalization="sum", max_iters=2000, init=start
        )).reflectance.values
        for start in (0.2, 0.5, 0.8)
    ]
    for other in answers[1:]:
        assert vc.rmse(answers[0], other) <= 1e-3


def test_estimate_result_bookkeeping(small_eig, d65, camera, patches):
    obs = vc.forward_uniform(small_eig, patches["green"], d65, camera)
    cfg = vc.EstimationConfig()
    result = vc.estimate(obs, small_eig, d65, camera, cfg)
    npt.assert_allclose(
        result.objective_value,
        result.data_residual + cfg.alpha * result.smoothness_penalty,
        rtol=1e-12,
    )
    assert result.iterations >= 1
    assert isinstance(result.converged, bool)


def test_estimate_accepts_spectrum_init(small_eig, d65, camera, patches):
    truth = patches["cyan"]
    obs = vc.forward_uniform(small_eig, truth, d65, camera)
    cfg = vc.EstimationConfig(alpha=0.0, init=truth, max_iters=50)
    result = vc.estimate(obs, small_eig, d65, camera, cfg)
    # starting at the optimum: nothing to improve, answer stays put
    npt.assert_allclose(result.reflectance.values, truth.values, atol=1e-6)

    coarse = vc.WavelengthGrid(400.0, 700.0, 10.0)
    bad_init = vc.Spectrum(coarse, np.full(31, 0.5), "reflectance")
    with pytest.raises(ValueError, match="init"):
        vc.estimate(obs, small_eig, d65, camera, vc.EstimationConfig(init=bad_init))


def test_low_signal_observation_warns(small_eig, d65, camera):
    tiny = vc.Spectrum(vc.DEFAULT_GRID, np.full(61, 1e-6), "reflectance")
    obs = vc.forward_uniform(small_eig, tiny, d65, camera)
    cfg = vc.EstimationConfig(max_iters=3)
    with pytest.warns(vc.LowSignalWarning):
        vc.estimate(obs, small_eig, d65, camera, cfg)


def test_estimate_dimension_mismatch(small_eig, d65, camera):
    with pytest.raises(ValueError, match="observation"):
        vc.estimate(np.ones(7), small_eig, d65, camera, vc.EstimationConfig())


# ----------------------------------------------------- pre-calibration ----


def test_identity_calibration_recovered(rng):
    measured = rng.uniform(0.0, 1.0, (24, 3))
    cal = vc.fit_precalibration(measured, measured)
    npt.assert_allclose(cal.coefficients, np.tile([0.0, 1.0, 0.0], (3, 1)), atol=1e-10)
    npt.assert_allclose(cal.residuals, 0.0, atol=1e-12)


def test_affine_calibration_recovered(rng):
    measured = rng.uniform(0.0, 1.0, (24, 3))
    expected = 2.0 * measured + 1.0
    cal = vc.fit_precalibration(measured, expected)
    npt.assert_allclose(cal.coefficients, np.tile([0.0, 2.0, 1.0], (3, 1)), atol=1e-9)


def test_noisy_quadratic_calibration_close_to_generator(rng):
    # a single 48-sample fit at 1 percent noise scatters the quadratic
    # coefficient by several percent (x^2 and x are nearly collinear on
    # [0, 1]), so the recovery claim is checked on the mean of ten refits
    true_coeffs = np.array([[0.4, 0.8, 0.20], [0.6, 0.5, 0.30], [0.3, 1.0, 0.25]])
    x = np.linspace(0.05, 1.0, 48)
    measured = np.tile(x[:, None], (1, 3))
    expected = np.empty_like(measured)
    for c in range(3):
        a, b, k = true_coeffs[c]
        expected[:, c] = a * x * x + b * x + k
    fits = []
    for _ in range(10):
        noisy = expected + rng.normal(0.0, 0.01 * expected.max(), expected.shape)
        fits.append(vc.fit_precalibration(measured, noisy).coefficients)
    npt.assert_allclose(np.mean(fits, axis=0), true_coeffs, rtol=0.05)


def test_calibration_needs_three_distinct_samples():
    same = np.full((24, 3), 0.5)
    with pytest.raises(ValueError, match="distinct"):
        vc.fit_precalibration(same, same)
    with pytest.raises(ValueError, match="3 samples"):
        vc.fit_precalibration(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError, match="matching"):
        vc.fit_precalibration(np.ones((24, 3)), np.ones((24, 2)))


def test_apply_calibration_transforms_and_clamps():
    obs = vc.RgbObservation(2, 3, np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]))
    doubler = vc.CalibrationMap(np.tile([0.0, 2.0, 0.0], (3, 1)), np.zeros(3))
    out = vc.apply_precalibration(doubler, obs)
    npt.assert_allclose(out.values, 2.0 * obs.values)

    negator = vc.CalibrationMap(np.tile([0.0, 1.0, -1.0], (3, 1)), np.zeros(3))
    clamped = vc.apply_precalibration(negator, obs)
    npt.assert_array_equal(clamped.values, 0.0)

    mono = vc.CalibrationMap(np.array([[0.0, 1.0, 0.0]]), np.zeros(1))
    with pytest.raises(ValueError, match="channel"):
        vc.apply_precalibration(mono, obs)


def test_fitted_map_beats_identity_on_its_own_fitting_set(rng):
    measured = rng.uniform(0.05, 1.0, (24, 3))
    expected = 0.8 * measured**2 + 0.6 * measured + 0.05
    cal = vc.fit_precalibration(measured, expected)
    obs = vc.RgbObservation.from_matrix(measured)
    mapped = vc.apply_precalibration(cal, obs).as_matrix()
    assert np.abs(mapped - expected).mean() < np.abs(measured - expected).mean()
