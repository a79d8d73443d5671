"""Evaluation metrics between estimated and ground-truth spectra.

RMSE compares band values directly; Pearson distance (1 minus cosine
similarity, no mean centering) compares shape regardless of magnitude;
CIEDE2000 compares the perceived colors under a chosen illuminant and
observer (D65 and the CIE 1964 10 degree observer by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectra import CameraModel, Spectrum, builtin

__all__ = [
    "LabColor",
    "rmse",
    "pearson_distance",
    "spectrum_to_lab",
    "ciede2000",
]


@dataclass(frozen=True)
class LabColor:
    """CIELAB coordinates under a stated white point."""

    L: float
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.L >= 0):
            raise ValueError("L must be nonnegative")


def _values(spec) -> np.ndarray:
    return spec.values if isinstance(spec, Spectrum) else np.asarray(spec, dtype=float)


def _check_grids(R, R_hat) -> None:
    if isinstance(R, Spectrum) and isinstance(R_hat, Spectrum) and R.grid != R_hat.grid:
        raise ValueError("spectra are on different grids")


def rmse(R, R_hat) -> float:
    """Root mean squared band-wise difference."""
    _check_grids(R, R_hat)
    a = _values(R)
    b = _values(R_hat)
    if a.shape != b.shape:
        raise ValueError("spectra have different lengths")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def pearson_distance(R, R_hat) -> float:
    """1 - cosine similarity; zero for any positive rescaling of a spectrum."""
    _check_grids(R, R_hat)
    a = _values(R)
    b = _values(R_hat)
    if a.shape != b.shape:
        raise ValueError("spectra have different lengths")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("pearson distance is undefined for zero spectra")
    return float(1.0 - (a @ b) / (na * nb))


def _lab_f(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    cube = delta ** 3
    return np.where(t > cube, np.cbrt(t), t / (3.0 * delta * delta) + 4.0 / 29.0)


def spectrum_to_lab(R: Spectrum, illuminant: Spectrum = None, observer: CameraModel = None) -> LabColor:
    """CIELAB coordinates of a reflectance under an illuminant and observer.

    Tristimulus values are Riemann sums of R * SPD against the color matching
    functions, normalized so the perfect reflector has Y = 100.  Defaults to
    D65 with the CIE 1964 10 degree observer.
    """
    if illuminant is None:
        illuminant = builtin("D65")
    if observer is None:
        observer = builtin("CIE1964_CMF")
    if R.grid != illuminant.grid or R.grid != observer.grid:
        raise ValueError("reflectance, illuminant, and observer grids differ")
    cmf = observer.response
    if cmf.shape[0] != 3:
        raise ValueError("observer must have exactly 3 channels (x, y, z)")
    weights = illuminant.values * R.grid.step_nm
    norm = float(cmf[1] @ weights)
    if norm <= 0:
        raise ValueError("illuminant has zero luminance on this grid")
    xyz = cmf @ (weights * R.values) * (100.0 / norm)
    white = cmf @ weights * (100.0 / norm)

    fx, fy, fz = _lab_f(xyz / white)
    return LabColor(
        L=float(116.0 * fy - 16.0),
        a=float(500.0 * (fx - fy)),
        b=float(200.0 * (fy - fz)),
    )


def ciede2000(lab1: LabColor, lab2: LabColor) -> float:
    """CIEDE2000 color difference, including the rotation term (kL=kC=kH=1)."""
    L1, a1, b1 = lab1.L, lab1.a, lab1.b
    L2, a2, b2 = lab2.L, lab2.a, lab2.b

    c1 = math.hypot(a1, b1)
    c2 = math.hypot(a2, b2)
    c_bar = 0.5 * (c1 + c2)
    c7 = c_bar ** 7
    g = 0.5 * (1.0 - math.sqrt(c7 / (c7 + 25.0 ** 7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = math.hypot(a1p, b1)
    c2p = math.hypot(a2p, b2)

    def hue(ap: float, b: float) -> float:
        if ap == 0.0 and b == 0.0:
            return 0.0
        h = math.degrees(math.atan2(b, ap))
        return h + 360.0 if h < 0.0 else h

    h1p = hue(a1p, b1)
    h2p = hue(a2p, b2)

    dL = L2 - L1
    dC = c2p - c1p
    if c1p * c2p == 0.0:
        dh = 0.0
    else:
        diff = h2p - h1p
        if abs(diff) <= 180.0:
            dh = diff
        elif diff > 180.0:
            dh = diff - 360.0
        else:
            dh = diff + 360.0
    dH = 2.0 * math.sqrt(c1p * c2p) * math.sin(math.radians(0.5 * dh))

    L_bar = 0.5 * (L1 + L2)
    c_bar_p = 0.5 * (c1p + c2p)
    if c1p * c2p == 0.0:
        h_bar = h1p + h2p
    else:
        total = h1p + h2p
        if abs(h1p - h2p) <= 180.0:
            h_bar = 0.5 * total
        elif total < 360.0:
            h_bar = 0.5 * (total + 360.0)
        else:
            h_bar = 0.5 * (total - 360.0)

    t = (
        1.0
        - 0.17 * math.cos(math.radians(h_bar - 30.0))
        + 0.24 * math.cos(math.radians(2.0 * h_bar))
        + 0.32 * math.cos(math.radians(3.0 * h_bar + 6.0))
        - 0.20 * math.cos(math.radians(4.0 * h_bar - 63.0))
    )
    d_theta = 30.0 * math.exp(-(((h_bar - 275.0) / 25.0) ** 2))
    c7p = c_bar_p ** 7
    rc = 2.0 * math.sqrt(c7p / (c7p + 25.0 ** 7))
    l50 = (L_bar - 50.0) ** 2
    sl = 1.0 + 0.015 * l50 / math.sqrt(20.0 + l50)
    sc = 1.0 + 0.045 * c_bar_p
    sh = 1.0 + 0.015 * c_bar_p * t
    rt = -math.sin(math.radians(2.0 * d_theta)) * rc

    vl = dL / sl
    vc = dC / sc
    vh = dH / sh
    return math.sqrt(vl * vl + vc * vc + vh * vh + rt * vc * vh)
