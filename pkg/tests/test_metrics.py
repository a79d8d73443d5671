"""Tests for error metrics: RMSE, Pearson distance, CIELAB, CIEDE2000."""

import math
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

import vcavity as vc

FIXTURE = Path(vc.__file__).parent / "data" / "ciede2000_test_pairs.csv"


# --- RMSE ---


def test_rmse_of_identical_spectra_is_zero(patches):
    assert vc.rmse(patches["green"], patches["green"]) == 0.0


def test_rmse_of_constant_offset():
    grid = vc.DEFAULT_GRID
    a = vc.Spectrum(grid, np.full(grid.count, 0.4))
    b = vc.Spectrum(grid, np.full(grid.count, 0.5))
    npt.assert_allclose(vc.rmse(a, b), 0.1, rtol=1e-12)


def test_rmse_matches_direct_summation(rng):
    a = rng.uniform(0.0, 1.0, 31)
    b = rng.uniform(0.0, 1.0, 31)
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) ** 2
    npt.assert_allclose(vc.rmse(a, b), math.sqrt(total / 31), rtol=1e-12)


def test_rmse_accepts_spectrum_and_array(patches):
    green = patches["green"]
    assert vc.rmse(green, green.values.copy()) == 0.0


def test_rmse_rejects_length_mismatch():
    with pytest.raises(ValueError, match="lengths"):
        vc.rmse(np.ones(5), np.ones(6))


def test_rmse_rejects_grid_mismatch():
    coarse = vc.WavelengthGrid(400.0, 700.0, 10.0)
    a = vc.Spectrum(vc.DEFAULT_GRID, np.full(vc.DEFAULT_GRID.count, 0.5))
    b = vc.Spectrum(coarse, np.full(coarse.count, 0.5))
    with pytest.raises(ValueError, match="grids"):
        vc.rmse(a, b)


# --- Pearson distance ---


def test_pearson_distance_ignores_positive_scale(patches):
    green = patches["green"]
    doubled = vc.Spectrum(green.grid, np.minimum(2.0 * green.values, 1.0 - 1e-9))
    assert vc.pearson_distance(green.values, 2.0 * green.values) < 1e-12
    # Clipped rescale is no longer exactly parallel, only nearly so.
    assert vc.pearson_distance(green, doubled) < 1e-3


def test_pearson_distance_orthogonal_is_one():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    npt.assert_allclose(vc.pearson_distance(a, b), 1.0, rtol=1e-15)


def test_pearson_distance_antiparallel_is_two(rng):
    a = rng.uniform(0.1, 1.0, 61)
    npt.assert_allclose(vc.pearson_distance(a, -a), 2.0, rtol=1e-12)


def test_pearson_distance_lies_in_unit_scale_range(rng):
    for _ in range(20):
        a = rng.normal(size=61)
        b = rng.normal(size=61)
        d = vc.pearson_distance(a, b)
        assert -1e-12 <= d <= 2.0 + 1e-12


def test_pearson_distance_rejects_zero_spectrum():
    with pytest.raises(ValueError, match="zero"):
        vc.pearson_distance(np.zeros(5), np.ones(5))


# --- CIELAB conversion ---


def test_perfect_reflector_is_lab_white():
    grid = vc.DEFAULT_GRID
    white = vc.Spectrum(grid, np.ones(grid.count), kind="reflectance")
    lab = vc.spectrum_to_lab(white)
    npt.assert_allclose([lab.L, lab.a, lab.b], [100.0, 0.0, 0.0], atol=1e-12)


def test_neutral_gray_lightness_closed_form():
    # Constant reflectance r scales XYZ by r, so L* = 116 * cbrt(r) - 16
    # whenever r is above the CIELAB linear-segment knee.
    grid = vc.DEFAULT_GRID
    gray = vc.Spectrum(grid, np.full(grid.count, 0.18), kind="reflectance")
    lab = vc.spectrum_to_lab(gray)
    npt.assert_allclose(lab.L, 116.0 * 0.18 ** (1.0 / 3.0) - 16.0, atol=1e-9)
    npt.assert_allclose([lab.a, lab.b], [0.0, 0.0], atol=1e-9)


def test_chromatic_patch_shifts_with_illuminant(patches):
    d65 = vc.spectrum_to_lab(patches["green"], illuminant=vc.builtin("D65"))
    d50 = vc.spectrum_to_lab(patches["green"], illuminant=vc.builtin("D50"))
    assert abs(d65.a - d50.a) > 1.0
    assert abs(d65.b - d50.b) > 1.0


def test_lab_requires_three_channel_observer(patches):
    four = vc.CameraModel(vc.DEFAULT_GRID, np.ones((4, vc.DEFAULT_GRID.count)))
    with pytest.raises(ValueError, match="3 channels"):
        vc.spectrum_to_lab(patches["green"], observer=four)


def test_lab_rejects_grid_mismatch():
    coarse = vc.WavelengthGrid(400.0, 700.0, 10.0)
    gray = vc.Spectrum(coarse, np.full(coarse.count, 0.5), kind="reflectance")
    with pytest.raises(ValueError, match="grids"):
        vc.spectrum_to_lab(gray)


def test_lab_color_rejects_negative_lightness():
    with pytest.raises(ValueError, match="nonnegative"):
        vc.LabColor(-1.0, 0.0, 0.0)


# --- CIEDE2000 ---


def test_ciede2000_identical_is_zero():
    lab = vc.LabColor(50.0, 2.6772, -79.7751)
    assert vc.ciede2000(lab, lab) == 0.0


def test_ciede2000_is_symmetric(rng):
    for _ in range(10):
        lab1 = vc.LabColor(rng.uniform(5, 95), rng.uniform(-60, 60), rng.uniform(-60, 60))
        lab2 = vc.LabColor(rng.uniform(5, 95), rng.uniform(-60, 60), rng.uniform(-60, 60))
        npt.assert_allclose(vc.ciede2000(lab1, lab2), vc.ciede2000(lab2, lab1), rtol=1e-12)


def test_ciede2000_reference_pairs():
    lines = [ln for ln in FIXTURE.read_text().splitlines() if ln and not ln.startswith("#")]
    assert lines[0] == "L1,a1,b1,L2,a2,b2,dE00"
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    assert rows.shape == (34, 7)
    for L1, a1, b1, L2, a2, b2, expected in rows:
        got = vc.ciede2000(vc.LabColor(L1, a1, b1), vc.LabColor(L2, a2, b2))
        assert abs(got - expected) <= 1e-4
