#!/usr/bin/env python3
"""Generate the bundled CIE spectral data fixtures (CSV) under src/vcavity/data/.

Sources:
- D65 relative SPD: CIE 15:2004 Table T.1 (5 nm tabulation, value 100 at 560 nm).
- CIE 1931 2-degree observer CMFs: CIE 15:2004 Table T.2 (used here only to
  verify derived chromaticities; not bundled).
- Daylight components S0/S1/S2: CIE 15:2004 Appendix B. D50 is reconstructed
  with the standard daylight-locus recipe (CCT 5000 K on the ITS-90 scale,
  i.e. 5000 * 1.4388/1.4380 K) and normalized to 100 at 560 nm.
- CIE 1964 10-degree observer CMFs: transcribed at 10 nm spacing and linearly
  interpolated to the 5 nm working grid. Verify against the CIE publication
  before any metrological use; the toolkit only relies on the overall shape.

Each generated CSV carries its citation in '#' comment lines above the header.

Run from the repository root:  python tools/make_cie_fixtures.py
"""

import os

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "vcavity", "data")

GRID = list(range(400, 701, 5))

# CIE 15:2004 Table T.1, 400-700 nm at 5 nm.
D65_SPD = {
    400: 82.7549, 405: 87.1204, 410: 91.486, 415: 92.4589, 420: 93.4318,
    425: 90.057, 430: 86.6823, 435: 95.7736, 440: 104.865, 445: 110.936,
    450: 117.008, 455: 117.410, 460: 117.812, 465: 116.336, 470: 114.861,
    475: 115.392, 480: 115.923, 485: 112.367, 490: 108.811, 495: 109.082,
    500: 109.354, 505: 108.578, 510: 107.802, 515: 106.296, 520: 104.790,
    525: 106.239, 530: 107.689, 535: 106.047, 540: 104.405, 545: 104.225,
    550: 104.046, 555: 102.023, 560: 100.000, 565: 98.1671, 570: 96.3342,
    575: 96.0611, 580: 95.788, 585: 92.2368, 590: 88.6856, 595: 89.3459,
    600: 90.0062, 605: 89.8026, 610: 89.5991, 615: 88.6489, 620: 87.6987,
    625: 85.4936, 630: 83.2886, 635: 83.4939, 640: 83.6992, 645: 81.8630,
    650: 80.0268, 655: 80.1207, 660: 80.2146, 665: 81.2462, 670: 82.2778,
    675: 80.2810, 680: 78.2842, 685: 74.0027, 690: 69.7213, 695: 70.6652,
    700: 71.6091,
}

# CIE 15:2004 Table T.2 (x_bar, y_bar, z_bar), 400-700 nm at 5 nm.
CMF_1931_2DEG = {
    400: (0.014310, 0.000396, 0.067850),
    405: (0.023190, 0.000640, 0.110200),
    410: (0.043510, 0.001210, 0.207400),
    415: (0.077630, 0.002180, 0.371300),
    420: (0.134380, 0.004000, 0.645600),
    425: (0.214770, 0.007300, 1.039050),
    430: (0.283900, 0.011600, 1.385600),
    435: (0.328500, 0.016840, 1.622960),
    440: (0.348280, 0.023000, 1.747060),
    445: (0.348060, 0.029800, 1.782600),
    450: (0.336200, 0.038000, 1.772110),
    455: (0.318700, 0.048000, 1.744100),
    460: (0.290800, 0.060000, 1.669200),
    465: (0.251100, 0.073900, 1.528100),
    470: (0.195360, 0.090980, 1.287640),
    475: (0.142100, 0.112600, 1.041900),
    480: (0.095640, 0.139020, 0.812950),
    485: (0.058010, 0.169300, 0.616200),
    490: (0.032010, 0.208020, 0.465180),
    495: (0.014700, 0.258600, 0.353300),
    500: (0.004900, 0.323000, 0.272000),
    505: (0.002400, 0.407300, 0.212300),
    510: (0.009300, 0.503000, 0.158200),
    515: (0.029100, 0.608200, 0.111700),
    520: (0.063270, 0.710000, 0.078250),
    525: (0.109600, 0.793200, 0.057250),
    530: (0.165500, 0.862000, 0.042160),
    535: (0.225750, 0.914850, 0.029840),
    540: (0.290400, 0.954000, 0.020300),
    545: (0.359700, 0.980300, 0.013400),
    550: (0.433450, 0.994950, 0.008750),
    555: (0.512050, 1.000000, 0.005750),
    560: (0.594500, 0.995000, 0.003900),
    565: (0.678400, 0.978600, 0.002750),
    570: (0.762100, 0.952000, 0.002100),
    575: (0.842500, 0.915400, 0.001800),
    580: (0.916300, 0.870000, 0.001650),
    585: (0.978600, 0.816300, 0.001400),
    590: (1.026300, 0.757000, 0.001100),
    595: (1.056700, 0.694900, 0.001000),
    600: (1.062200, 0.631000, 0.000800),
    605: (1.045600, 0.566800, 0.000600),
    610: (1.002600, 0.503000, 0.000340),
    615: (0.938400, 0.441200, 0.000240),
    620: (0.854450, 0.381000, 0.000190),
    625: (0.751400, 0.321000, 0.000100),
    630: (0.642400, 0.265000, 0.000050),
    635: (0.541900, 0.217000, 0.000030),
    640: (0.447900, 0.175000, 0.000020),
    645: (0.360800, 0.138200, 0.000010),
    650: (0.283500, 0.107000, 0.000000),
    655: (0.218700, 0.081600, 0.000000),
    660: (0.164900, 0.061000, 0.000000),
    665: (0.121200, 0.044580, 0.000000),
    670: (0.087400, 0.032000, 0.000000),
    675: (0.063600, 0.023200, 0.000000),
    680: (0.046770, 0.017000, 0.000000),
    685: (0.032900, 0.011920, 0.000000),
    690: (0.022700, 0.008210, 0.000000),
    695: (0.015840, 0.005723, 0.000000),
    700: (0.011359, 0.004102, 0.000000),
}

# CIE 15:2004 Appendix B (S0, S1, S2), 400-700 nm at 5 nm.
DAYLIGHT_BASIS = {
    400: (94.80, 43.40, -1.10), 405: (99.80, 44.85, -0.80),
    410: (104.80, 46.30, -0.50), 415: (105.35, 45.10, -0.60),
    420: (105.90, 43.90, -0.70), 425: (101.35, 40.50, -0.95),
    430: (96.80, 37.10, -1.20), 435: (105.35, 36.90, -1.90),
    440: (113.90, 36.70, -2.60), 445: (119.75, 36.30, -2.75),
    450: (125.60, 35.90, -2.90), 455: (125.55, 34.25, -2.85),
    460: (125.50, 32.60, -2.80), 465: (123.40, 30.25, -2.70),
    470: (121.30, 27.90, -2.60), 475: (121.30, 26.10, -2.60),
    480: (121.30, 24.30, -2.60), 485: (117.40, 22.20, -2.20),
    490: (113.50, 20.10, -1.80), 495: (113.30, 18.15, -1.65),
    500: (113.10, 16.20, -1.50), 505: (111.95, 14.70, -1.40),
    510: (110.80, 13.20, -1.30), 515: (108.65, 10.90, -1.25),
    520: (106.50, 8.60, -1.20), 525: (107.65, 7.35, -1.10),
    530: (108.80, 6.10, -1.00), 535: (107.05, 5.15, -0.75),
    540: (105.30, 4.20, -0.50), 545: (104.85, 3.05, -0.40),
    550: (104.40, 1.90, -0.30), 555: (102.20, 0.95, -0.15),
    560: (100.00, 0.00, 0.00), 565: (98.00, -0.80, 0.10),
    570: (96.00, -1.60, 0.20), 575: (95.55, -2.55, 0.35),
    580: (95.10, -3.50, 0.50), 585: (92.10, -3.50, 1.30),
    590: (89.10, -3.50, 2.10), 595: (89.80, -4.65, 2.65),
    600: (90.50, -5.80, 3.20), 605: (90.40, -6.50, 3.65),
    610: (90.30, -7.20, 4.10), 615: (89.35, -7.90, 4.40),
    620: (88.40, -8.60, 4.70), 625: (86.20, -9.05, 4.90),
    630: (84.00, -9.50, 5.10), 635: (84.55, -10.20, 5.90),
    640: (85.10, -10.90, 6.70), 645: (83.50, -10.80, 7.00),
    650: (81.90, -10.70, 7.30), 655: (82.25, -11.35, 7.95),
    660: (82.60, -12.00, 8.60), 665: (83.75, -13.00, 9.20),
    670: (84.90, -14.00, 9.80), 675: (83.10, -13.80, 10.00),
    680: (81.30, -13.60, 10.20), 685: (76.60, -12.80, 9.25),
    690: (71.90, -12.00, 8.30), 695: (73.10, -12.65, 8.95),
    700: (74.30, -13.30, 9.60),
}

# CIE 1964 10-degree observer (x10_bar, y10_bar, z10_bar), 400-700 nm at
# 10 nm, transcribed. Interpolated to 5 nm below.
CMF_1964_10DEG_10NM = {
    400: (0.019110, 0.002004, 0.086011),
    410: (0.084736, 0.008756, 0.389366),
    420: (0.204492, 0.021391, 0.972542),
    430: (0.314679, 0.038676, 1.553480),
    440: (0.383734, 0.062077, 1.967280),
    450: (0.370702, 0.089456, 1.994800),
    460: (0.302273, 0.128201, 1.745370),
    470: (0.195618, 0.185190, 1.317560),
    480: (0.080507, 0.253589, 0.772125),
    490: (0.016172, 0.339133, 0.415254),
    500: (0.003816, 0.460777, 0.218502),
    510: (0.037465, 0.606741, 0.112044),
    520: (0.117749, 0.761757, 0.060709),
    530: (0.236491, 0.875211, 0.030451),
    540: (0.376772, 0.961988, 0.013676),
    550: (0.529826, 0.991761, 0.003988),
    560: (0.705224, 0.997340, 0.000000),
    570: (0.878655, 0.955552, 0.000000),
    580: (1.014160, 0.868934, 0.000000),
    590: (1.118520, 0.777405, 0.000000),
    600: (1.123990, 0.658341, 0.000000),
    610: (1.030480, 0.527963, 0.000000),
    620: (0.856297, 0.398057, 0.000000),
    630: (0.647467, 0.283493, 0.000000),
    640: (0.431567, 0.179828, 0.000000),
    650: (0.268329, 0.107633, 0.000000),
    660: (0.152568, 0.060281, 0.000000),
    670: (0.081261, 0.031800, 0.000000),
    680: (0.040851, 0.015905, 0.000000),
    690: (0.019941, 0.007749, 0.000000),
    700: (0.009577, 0.003718, 0.000000),
}


def daylight_locus(temp_k):
    """Daylight-locus chromaticity for a CCT in [4000, 7000] K (CIE 15:2004 eq. 3.3/3.2)."""
    x = (-4.6070e9 / temp_k**3 + 2.9678e6 / temp_k**2
         + 0.09911e3 / temp_k + 0.244063)
    y = -3.000 * x**2 + 2.870 * x - 0.275
    return x, y


def m_coefficients(x_d, y_d):
    """M1/M2 daylight-component weights (CIE 15:2004 eq. 3.6), rounded to 3 decimals."""
    den = 0.0241 + 0.2562 * x_d - 0.7341 * y_d
    m1 = (-1.3515 - 1.7703 * x_d + 5.9114 * y_d) / den
    m2 = (0.0300 - 31.4424 * x_d + 30.0717 * y_d) / den
    return round(m1, 3), round(m2, 3)


def derive_daylight_spd(nominal_cct):
    cct = nominal_cct * 1.4388 / 1.4380
    x_d, y_d = daylight_locus(cct)
    m1, m2 = m_coefficients(x_d, y_d)
    spd = {wl: s0 + m1 * s1 + m2 * s2 for wl, (s0, s1, s2) in DAYLIGHT_BASIS.items()}
    scale = 100.0 / spd[560]
    return {wl: v * scale for wl, v in spd.items()}, (x_d, y_d, m1, m2)


def interp_1964_to_5nm():
    out = {}
    for wl in GRID:
        lo = (wl // 10) * 10
        if wl == lo:
            out[wl] = CMF_1964_10DEG_10NM[wl]
        else:
            a = CMF_1964_10DEG_10NM[lo]
            b = CMF_1964_10DEG_10NM[lo + 10]
            out[wl] = tuple((ai + bi) / 2.0 for ai, bi in zip(a, b))
    return out


def chromaticity(spd, cmf):
    sx = sum(spd[wl] * cmf[wl][0] for wl in spd if wl in cmf)
    sy = sum(spd[wl] * cmf[wl][1] for wl in spd if wl in cmf)
    sz = sum(spd[wl] * cmf[wl][2] for wl in spd if wl in cmf)
    tot = sx + sy + sz
    return sx / tot, sy / tot


def write_csv(name, comment_lines, header, rows):
    path = os.path.join(DATA_DIR, name)
    with open(path, "w", encoding="utf-8") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    print(f"wrote {path} ({len(rows)} rows)")


def main():
    os.makedirs(DATA_DIR, exist_ok=True)

    write_csv(
        "illuminant_d65.csv",
        ["CIE standard illuminant D65, relative SPD (100 at 560 nm).",
         "Source: CIE 15:2004 Table T.1, 400-700 nm at 5 nm."],
        ["wavelength_nm", "D65"],
        [(wl, D65_SPD[wl]) for wl in GRID],
    )

    d50, (x_d, y_d, m1, m2) = derive_daylight_spd(5000.0)
    write_csv(
        "illuminant_d50.csv",
        ["CIE standard illuminant D50, relative SPD (100 at 560 nm).",
         "Reconstructed from the CIE daylight components S0/S1/S2",
         "(CIE 15:2004 Appendix B) at CCT 5000 K * 1.4388/1.4380,",
         f"M1={m1}, M2={m2}, daylight-locus x={x_d:.5f}, y={y_d:.5f}."],
        ["wavelength_nm", "D50"],
        [(wl, round(d50[wl], 4)) for wl in GRID],
    )

    cmf10 = interp_1964_to_5nm()
    write_csv(
        "observer_cie1964_10deg.csv",
        ["CIE 1964 10-degree standard observer colour-matching functions.",
         "Transcribed at 10 nm and linearly interpolated to 5 nm; verify",
         "against the CIE tabulation before metrological use."],
        ["wavelength_nm", "xbar", "ybar", "zbar"],
        [(wl,) + tuple(round(v, 6) for v in cmf10[wl]) for wl in GRID],
    )

    # Verification oracles: chromaticities derived from the fixtures must land
    # on the published white points.
    checks = [
        ("D65 under 1931 2deg", chromaticity(D65_SPD, CMF_1931_2DEG), (0.31272, 0.32903), 0.0005),
        ("D50 under 1931 2deg", chromaticity(d50, CMF_1931_2DEG), (0.34567, 0.35851), 0.0015),
        ("D65 under 1964 10deg", chromaticity(D65_SPD, cmf10), (0.31382, 0.33100), 0.0030),
        ("D50 under 1964 10deg", chromaticity(d50, cmf10), (0.34773, 0.35952), 0.0030),
    ]
    ok = True
    for label, (x, y), (xr, yr), tol in checks:
        good = abs(x - xr) <= tol and abs(y - yr) <= tol
        ok &= good
        print(f"{'PASS' if good else 'FAIL'}  {label}: x={x:.5f} y={y:.5f} "
              f"(reference {xr:.5f}, {yr:.5f}, tol {tol})")
    if not ok:
        raise SystemExit("fixture verification failed")


if __name__ == "__main__":
    main()
