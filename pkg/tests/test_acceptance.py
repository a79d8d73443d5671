"""End-to-end acceptance gates for the shipped guarantees.

Each test prints one PASS/FAIL line with the measured quantity so a bare
`pytest -v -s tests/test_acceptance.py` doubles as the verification report.
The gradient check must pass before the round-trip accuracy claims are
evaluated; the round-trip tests assert that gate first.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

import vcavity as vc
from vcavity import cli, inverse

GATE = {"gradient": False}


def _check(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def _random_cavity(rng, rows_hi=4):
    rows = int(rng.integers(2, rows_hi + 1))
    cols = int(rng.integers(2, rows_hi + 1))
    angle = float(rng.uniform(30.0, 90.0))
    return vc.build_v_cavity(0.02, 0.02, angle, rows, cols)


def _random_spectra(rng):
    r = vc.Spectrum(vc.DEFAULT_GRID, rng.uniform(0.05, 0.95, 61), "reflectance")
    spd = vc.Spectrum(vc.DEFAULT_GRID, rng.uniform(0.2, 1.0, 61), "spd")
    return r, spd


def _write_config(dirpath, angle, rows, cols):
    doc = {
        "cavity": {
            "panel_width_m": 0.02,
            "panel_height_m": 0.02,
            "angle_deg": angle,
            "rows": rows,
            "cols": cols,
        }
    }
    path = Path(dirpath) / f"accept_{angle:g}_{rows}x{cols}.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _roundtrip_mean_rmse(tmp_path, angle, rows, cols):
    config = _write_config(tmp_path, angle, rows, cols)
    out = str(Path(tmp_path) / f"rt_{angle:g}_{rows}x{cols}.csv")
    rc = cli.main(["roundtrip", "--config", config, "--out", out])
    assert rc == 0
    lines = Path(out).read_text().strip().splitlines()
    mean = lines[-1].split(",")
    assert mean[0] == "mean"
    return float(mean[1]), float(mean[2])


def test_bounce_series_matches_closed_form():
    rng = np.random.default_rng(101)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(50):
        cavity = _random_cavity(rng)
        r, spd = _random_spectra(rng)
        kernel = vc.kernel_exact(cavity)
        e0 = vc.direct_irradiance(cavity, spd)
        series = vc.bounce_irradiance(kernel, r, e0, 200)
        closed = vc.closed_form_irradiance(kernel, r, e0)
        rel = float(np.linalg.norm(series.values - closed.values) / np.linalg.norm(closed.values))
        worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    _check(
        "200-bounce series vs closed form, 50 instances",
        worst <= 1e-9 and elapsed < 10.0,
        f"worst rel {worst:.3g} <= 1e-9, {elapsed:.1f}s < 10s",
    )


def test_every_kernel_is_substochastic():
    rng = np.random.default_rng(202)
    built = []
    for angle in (30.0, 45.0, 60.0, 90.0):
        for rows, cols in ((8, 8), (10, 10)):
            built.append((f"exact {angle:g}deg {rows}x{cols}", vc.kernel_exact(
                vc.build_v_cavity(0.02, 0.02, angle, rows, cols))))
    for angle in (30.0, 90.0):
        cavity = vc.build_v_cavity(0.02, 0.02, angle, 16, 16)
        built.append((f"exact {angle:g}deg 16x16", vc.kernel_exact(cavity)))
        built.append((f"mc {angle:g}deg 16x16", vc.kernel_monte_carlo(cavity, 16, seed=1)))
    built.append(("mc 45deg 8x8", vc.kernel_monte_carlo(
        vc.build_v_cavity(0.02, 0.02, 45.0, 8, 8), 1000, seed=2)))
    for _ in range(10):
        cavity = _random_cavity(rng, rows_hi=6)
        built.append((f"exact random {cavity.angle_deg:.1f}deg m={cavity.m}", vc.kernel_exact(cavity)))

    worst_col = 0.0
    for label, kernel in built:
        entries = kernel.entries
        assert np.all(np.diag(entries) == 0.0), label
        assert np.all(entries >= 0.0), label
        col = kernel.max_column_sum()
        assert col <= 1.0, f"{label}: max column sum {col}"
        worst_col = max(worst_col, col)
    _check(
        "kernel substochasticity, exact + Monte Carlo, 30-90 deg, up to 256/panel",
        worst_col <= 1.0,
        f"{len(built)} kernels, worst max column sum {worst_col:.6f}",
    )


def test_eigen_path_matches_direct_solve():
    rng = np.random.default_rng(303)
    camera = vc.default_camera()
    worst = 0.0
    for _ in range(50):
        cavity = _random_cavity(rng)
        r, spd = _random_spectra(rng)
        kernel = vc.kernel_exact(cavity)
        e0 = vc.direct_irradiance(cavity, spd)
        fast = vc.forward_uniform(vc.eigen_prepare(kernel), r, e0, camera)
        direct = vc.project_camera(vc.radiance(kernel, r, e0), camera)
        rel = float(np.abs(fast.values - direct.values).max() / np.abs(direct.values).max())
        worst = max(worst, rel)
    _check(
        "eigen fast path vs per-band direct solve, 50 instances",
        worst <= 1e-8,
        f"worst rel {worst:.3g} <= 1e-8",
    )


def test_objective_gradient_matches_finite_differences(small_eig, d65, camera, patches):
    rng = np.random.default_rng(404)
    obs = vc.forward_uniform(small_eig, patches["green"], d65, camera)
    worst = 0.0
    for i in range(20):
        cfg = vc.EstimationConfig(
            alpha=float(rng.uniform(0.0, 5.0)),
            normalization="sum" if i % 2 else "none",
        )
        x = rng.uniform(0.05, 0.95, 61)
        _, grad = vc.objective(x, small_eig, d65, camera, obs, cfg)
        fd = np.empty_like(x)
        h = 1e-6
        for k in range(x.size):
            up, dn = x.copy(), x.copy()
            up[k] += h
            dn[k] -= h
            fd[k] = (
                vc.objective(up, small_eig, d65, camera, obs, cfg)[0]
                - vc.objective(dn, small_eig, d65, camera, obs, cfg)[0]
            ) / (2 * h)
        rel = float(np.abs(grad - fd).max() / max(1.0, np.abs(grad).max()))
        worst = max(worst, rel)
    GATE["gradient"] = worst <= 1e-4
    _check(
        "analytic gradient vs central differences, 20 points",
        GATE["gradient"],
        f"worst rel {worst:.3g} <= 1e-4",
    )


def test_colorchecker_roundtrip_accuracy(tmp_path):
    assert GATE["gradient"], "gradient check must pass before round-trip claims"
    start = time.perf_counter()
    mean_rmse, mean_de = _roundtrip_mean_rmse(tmp_path, 45.0, 10, 10)
    elapsed = time.perf_counter() - start
    _check(
        "45 deg, 100 facets/panel ColorChecker round trip",
        mean_rmse <= 0.025 and mean_de <= 0.45 and elapsed < 300.0,
        f"mean rmse {mean_rmse:.4f} <= 0.025, mean ciede00 {mean_de:.3f} <= 0.45, {elapsed:.0f}s < 300s",
    )


def test_sharper_angle_and_finer_grid_trends(tmp_path):
    assert GATE["gradient"], "gradient check must pass before round-trip claims"
    rmse30, _ = _roundtrip_mean_rmse(tmp_path, 30.0, 10, 10)
    rmse90, _ = _roundtrip_mean_rmse(tmp_path, 90.0, 10, 10)
    rmse45_fine, _ = _roundtrip_mean_rmse(tmp_path, 45.0, 16, 16)
    _check(
        "round-trip accuracy improves from 90 to 30 deg; fine-grid cell in range",
        rmse30 < rmse90 and 0.007 <= rmse45_fine <= 0.027,
        f"rmse 30deg {rmse30:.4f} < 90deg {rmse90:.4f}; 45deg/256 {rmse45_fine:.4f} in [0.007, 0.027]",
    )


def test_sum_normalized_estimate_ignores_illuminant_scale(d65, camera, patches):
    cavity = vc.build_v_cavity(0.02, 0.02, 45.0, 4, 4)
    eig = vc.eigen_prepare(vc.kernel_exact(cavity))
    obs = vc.forward_uniform(eig, patches["green"], vc.direct_irradiance(cavity, d65), camera)
    cfg = vc.EstimationConfig(normalization="sum")
    baseline = inverse.estimate(obs, eig, d65, camera, cfg)
    identical = True
    for factor in (0.1, 10.0):
        scaled = vc.Spectrum(d65.grid, d65.values * factor, kind="spd")
        result = inverse.estimate(obs, eig, scaled, camera, cfg)
        identical = identical and np.array_equal(
            result.reflectance.values, baseline.reflectance.values
        )
        identical = identical and result.objective_value == baseline.objective_value
    _check(
        "sum-normalized estimates under illuminant x0.1 / x10",
        identical,
        "bit-identical reflectance and objective",
    )


def test_flat_metamers_separate_in_the_cavity(d65, camera, patches):
    base = patches["green"]
    partner = vc.flat_metamer_partner(base, d65, camera, 0.08)
    flat_a = vc.flat_projection(base, d65, camera)
    flat_b = vc.flat_projection(partner, d65, camera)
    flat_rel = float(np.abs(flat_a - flat_b).max() / np.abs(flat_a).max())

    cavity = vc.build_v_cavity(0.02, 0.02, 60.0, 10, 10)
    eig = vc.eigen_prepare(vc.kernel_exact(cavity))
    e0 = vc.direct_irradiance(cavity, d65)
    obs_a = vc.forward_uniform(eig, base, e0, camera)
    obs_b = vc.forward_uniform(eig, partner, e0, camera)
    divergence = float(
        np.abs(obs_a.values - obs_b.values).max()
        / max(obs_a.values.max(), obs_b.values.max())
    )

    cfg = vc.EstimationConfig(alpha=0.0, max_iters=2000)
    est_a = inverse.estimate(obs_a, eig, d65, camera, cfg).reflectance
    est_b = inverse.estimate(obs_b, eig, d65, camera, cfg).reflectance
    a_own, a_other = vc.rmse(base, est_a), vc.rmse(partner, est_a)
    b_own, b_other = vc.rmse(partner, est_b), vc.rmse(base, est_b)
    _check(
        "flat-metamer pair separates at 60 deg",
        flat_rel <= 1e-6
        and divergence > 0.01
        and a_own < a_other
        and b_own < b_other,
        f"flat rel {flat_rel:.2g} <= 1e-6, divergence {divergence:.4f} > 0.01, "
        f"a {a_own:.4f} < {a_other:.4f}, b {b_own:.4f} < {b_other:.4f}",
    )


def test_ciede2000_reference_pairs():
    fixture = Path(vc.__file__).parent / "data" / "ciede2000_test_pairs.csv"
    lines = [ln for ln in fixture.read_text().splitlines() if ln and not ln.startswith("#")]
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    worst = 0.0
    for L1, a1, b1, L2, a2, b2, expected in rows:
        got = vc.ciede2000(vc.LabColor(L1, a1, b1), vc.LabColor(L2, a2, b2))
        worst = max(worst, abs(got - expected))
    _check(
        "CIEDE2000 on the 34 published reference pairs",
        rows.shape == (34, 7) and worst <= 1e-4,
        f"worst abs error {worst:.2e} <= 1e-4",
    )
