#!/usr/bin/env python3
"""Generate the bundled 24-patch reflectance fixture and the RGB camera SRF.

The 24 reflectance curves are synthetic: for each patch of the X-Rite
ColorChecker Classic, the smoothest spectral reflectance on the 400-700 nm /
5 nm grid is fitted so that its CIELAB coordinates under illuminant D50 and
the CIE 1931 2-degree observer reproduce the published chart colours
(BabelColor averaged measurement data, D50/2-degree). These are therefore
colorimetric reconstructions, not spectrophotometer measurements; header
comments in the CSV say so.

The camera response fixture is a synthetic three-channel sensor: broad,
overlapping Gaussian lobes peaking at 1.0, loosely modeled on a
Foveon-style RGB DSLR response.

Run from the repository root:  python tools/make_colorchecker.py
"""

import os

import numpy as np
from scipy.optimize import minimize

from make_cie_fixtures import (CMF_1931_2DEG, DATA_DIR, GRID,
                               derive_daylight_spd, write_csv)

# BabelColor averaged CIELAB coordinates (D50, 2-degree observer) of the
# ColorChecker Classic, patches 1-24 row-major.
PATCHES = [
    ("dark_skin", 37.99, 13.56, 14.06),
    ("light_skin", 65.71, 18.13, 17.81),
    ("blue_sky", 49.93, -4.88, -21.93),
    ("foliage", 43.14, -13.10, 21.91),
    ("blue_flower", 55.11, 8.84, -25.40),
    ("bluish_green", 70.72, -33.40, -0.20),
    ("orange", 62.66, 36.07, 57.10),
    ("purplish_blue", 40.02, 10.41, -45.96),
    ("moderate_red", 51.12, 48.24, 16.25),
    ("purple", 30.33, 22.98, -21.59),
    ("yellow_green", 72.53, -23.71, 57.26),
    ("orange_yellow", 71.94, 19.36, 67.86),
    ("blue", 28.78, 14.18, -50.30),
    ("green", 55.26, -38.34, 31.37),
    ("red", 42.10, 53.38, 28.19),
    ("yellow", 81.73, 4.04, 79.82),
    ("magenta", 51.94, 49.99, -14.57),
    ("cyan", 51.04, -28.63, -28.64),
    ("white", 96.54, -0.43, 1.19),
    ("neutral_8", 81.26, -0.64, -0.34),
    ("neutral_65", 66.77, -0.73, -0.50),
    ("neutral_5", 50.87, -0.15, -0.27),
    ("neutral_35", 35.66, -0.42, -1.23),
    ("black", 20.46, -0.08, -0.97),
]

DELTA = 6.0 / 29.0
R_LO, R_HI = 1e-3, 0.999


def lab_machinery():
    wl = np.array(GRID, float)
    cmf = np.array([CMF_1931_2DEG[int(w)] for w in wl])          # q x 3
    spd = np.array([derive_daylight_spd(5000.0)[0][int(w)] for w in wl])
    weights = cmf * spd[:, None]                                  # q x 3
    white = weights.sum(axis=0)                                   # XYZ of perfect reflector
    return weights / white[1], white / white[1]                   # scaled so Y_white = 1


WEIGHTS, WHITE = lab_machinery()


def f_lab(t):
    t = np.asarray(t, float)
    return np.where(t > DELTA**3, np.cbrt(t), t / (3 * DELTA**2) + 4.0 / 29.0)


def f_lab_prime(t):
    t = np.asarray(t, float)
    return np.where(t > DELTA**3, np.cbrt(t)**-2 / 3.0, 1.0 / (3 * DELTA**2))


def lab_of(r):
    xyz = WEIGHTS.T @ r
    fx, fy, fz = f_lab(xyz / WHITE)
    return np.array([116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)])


def second_diff_matrix(q):
    d2 = np.zeros((q - 2, q))
    for k in range(q - 2):
        d2[k, k:k + 3] = (1.0, -2.0, 1.0)
    return d2


D2 = second_diff_matrix(len(GRID))
D2TD2 = D2.T @ D2


def fit_patch(lab_target, beta):
    lab_target = np.asarray(lab_target, float)

    def loss_grad(r):
        xyz = WEIGHTS.T @ r
        fw = xyz / WHITE
        fx, fy, fz = f_lab(fw)
        lab = np.array([116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)])
        res = lab - lab_target
        # d lab / d fvec
        j_lab = np.array([[0.0, 116.0, 0.0],
                          [500.0, -500.0, 0.0],
                          [0.0, 200.0, -200.0]])
        dfdxyz = f_lab_prime(fw) / WHITE
        g_xyz = (j_lab.T @ (2 * res)) * dfdxyz
        g = WEIGHTS @ g_xyz + 2 * beta * (D2TD2 @ r)
        return float(res @ res + beta * (r @ D2TD2 @ r)), g

    # start from the gray that matches the target lightness
    y0 = ((lab_target[0] + 16) / 116) ** 3
    r0 = np.full(len(GRID), np.clip(y0, 0.02, 0.95))
    out = minimize(loss_grad, r0, jac=True, method="L-BFGS-B",
                   bounds=[(R_LO, R_HI)] * len(GRID),
                   options={"maxiter": 4000, "ftol": 1e-16, "gtol": 1e-12})
    return out.x


def main():
    os.makedirs(DATA_DIR, exist_ok=True)

    rows = {wl: [wl] for wl in GRID}
    report = []
    for name, L, a, b in PATCHES:
        beta = 0.1
        r = fit_patch((L, a, b), beta)
        de = np.linalg.norm(lab_of(r) - np.array([L, a, b]))
        while de > 0.05 and beta > 1e-5:
            beta /= 4.0
            r = fit_patch((L, a, b), beta)
            de = np.linalg.norm(lab_of(r) - np.array([L, a, b]))
        curv = float(np.abs(D2 @ r).max())
        report.append((name, de, beta, float(r.min()), float(r.max()), curv))
        for wl, val in zip(GRID, r):
            rows[wl].append(round(float(val), 6))

    write_csv(
        "colorchecker24.csv",
        ["Synthetic 24-patch reflectance set on 400-700 nm / 5 nm.",
         "Smoothest spectra whose CIELAB coordinates under illuminant D50 and",
         "the CIE 1931 2-degree observer match the X-Rite ColorChecker Classic",
         "chart colours (BabelColor averaged data). Colorimetric",
         "reconstructions, not spectrophotometer measurements."],
        ["wavelength_nm"] + [p[0] for p in PATCHES],
        [tuple(rows[wl]) for wl in GRID],
    )

    print(f"{'patch':<15} {'dE76':>8} {'beta':>9} {'min':>7} {'max':>7} {'max|d2|':>8}")
    worst = 0.0
    for name, de, beta, rmin, rmax, curv in report:
        worst = max(worst, de)
        print(f"{name:<15} {de:8.4f} {beta:9.1e} {rmin:7.4f} {rmax:7.4f} {curv:8.4f}")
    if worst > 0.05:
        raise SystemExit("colorchecker fit did not converge")

    wl = np.array(GRID, float)
    srf = {
        "R": np.exp(-0.5 * ((wl - 608.0) / 52.0) ** 2),
        "G": np.exp(-0.5 * ((wl - 540.0) / 48.0) ** 2),
        "B": np.exp(-0.5 * ((wl - 462.0) / 40.0) ** 2),
    }
    write_csv(
        "camera_rgb_srf.csv",
        ["Synthetic three-channel camera spectral response functions,",
         "broad overlapping Gaussian lobes normalized to peak 1.0",
         "(stand-in for a Foveon-style RGB DSLR sensor)."],
        ["wavelength_nm", "R", "G", "B"],
        [(int(w),) + tuple(round(float(srf[c][i]), 6) for c in "RGB")
         for i, w in enumerate(wl)],
    )


if __name__ == "__main__":
    main()
