"""Spectral axis, spectral quantities, and loaders for bundled reference data.

Everything downstream (geometry kernels excepted) works on sampled spectra:
reflectance curves, illuminant power distributions, and camera response
functions, all tabulated on a uniform wavelength grid.  Cross-type operations
require grid equality and never resample implicitly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "DEFAULT_GRID",
    "REFLECTANCE_FLOOR",
    "WavelengthGrid",
    "Spectrum",
    "CameraModel",
    "resample",
    "load_spectra_csv",
    "save_spectra_csv",
    "load_camera_csv",
    "builtin",
    "default_camera",
]

# Reflectance must stay strictly positive: the closed-form radiance divides
# by r, and the convergence argument needs r > 0.  1e-6 is safe for 1/r.
REFLECTANCE_FLOOR = 1e-6

_VALID_KINDS = ("generic", "reflectance", "spd")


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniformly sampled wavelength axis in nanometres, endpoints included."""

    start_nm: float
    end_nm: float
    step_nm: float

    def __post_init__(self) -> None:
        if not (self.step_nm > 0):
            raise ValueError(f"step_nm must be positive, got {self.step_nm}")
        if not (self.end_nm > self.start_nm):
            raise ValueError(
                f"end_nm must exceed start_nm, got [{self.start_nm}, {self.end_nm}]"
            )
        span = (self.end_nm - self.start_nm) / self.step_nm
        if abs(span - round(span)) > 1e-9 * max(1.0, abs(span)):
            raise ValueError(
                f"grid span {self.start_nm}..{self.end_nm} is not an integer "
                f"multiple of step {self.step_nm}"
            )

    @property
    def count(self) -> int:
        return int(round((self.end_nm - self.start_nm) / self.step_nm)) + 1

    @property
    def wavelengths(self) -> np.ndarray:
        return np.linspace(self.start_nm, self.end_nm, self.count)


DEFAULT_GRID = WavelengthGrid(400.0, 700.0, 5.0)


def _frozen_array(values: Iterable[float], dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sampled spectral function: reflectance, SPD, or an untagged curve.

    Reflectance values must lie in (0, 1]; SPD values must be nonnegative.
    Values are stored read-only.
    """

    grid: WavelengthGrid
    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self) -> None:
        vals = _frozen_array(self.values)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.shape[0] != self.grid.count:
            raise ValueError(
                f"expected {self.grid.count} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("spectrum contains non-finite values")
        if self.kind not in _VALID_KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.kind == "reflectance":
            if np.any(vals <= 0.0) or np.any(vals > 1.0 + 1e-12):
                raise ValueError("reflectance values must lie in (0, 1]")
        elif self.kind == "spd":
            if np.any(vals < 0.0):
                raise ValueError("SPD values must be nonnegative")


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Per-channel spectral response matrix, one row per channel."""

    grid: WavelengthGrid
    response: np.ndarray
    channel_names: tuple = ()

    def __post_init__(self) -> None:
        resp = np.array(self.response, dtype=float)
        if resp.ndim != 2 or resp.shape[1] != self.grid.count:
            raise ValueError(
                f"response must be s x {self.grid.count}, got shape {resp.shape}"
            )
        if np.any(resp < 0.0) or not np.all(np.isfinite(resp)):
            raise ValueError("response entries must be finite and nonnegative")
        if np.any(resp.max(axis=1) <= 0.0):
            raise ValueError("every channel needs at least one positive entry")
        resp.setflags(write=False)
        object.__setattr__(self, "response", resp)
        names = tuple(self.channel_names)
        if not names:
            names = tuple(f"ch{i}" for i in range(resp.shape[0]))
        if len(names) != resp.shape[0]:
            raise ValueError("channel_names length does not match response rows")
        object.__setattr__(self, "channel_names", names)

    @property
    def channels(self) -> int:
        return self.response.shape[0]


def resample(spectrum: Spectrum, target: WavelengthGrid) -> Spectrum:
    """Linearly interpolate a spectrum onto a target grid.

    The source grid must cover the target range; extrapolation is refused.
    Reflectance results are clamped into [REFLECTANCE_FLOOR, 1].
    """
    src = spectrum.grid
    if src == target:
        return spectrum
    eps = 1e-9
    if target.start_nm < src.start_nm - eps or target.end_nm > src.end_nm + eps:
        raise ValueError(
            f"target range [{target.start_nm}, {target.end_nm}] exceeds "
            f"source range [{src.start_nm}, {src.end_nm}]"
        )
    vals = np.interp(target.wavelengths, src.wavelengths, spectrum.values)
    if spectrum.kind == "reflectance":
        vals = np.clip(vals, REFLECTANCE_FLOOR, 1.0)
    return Spectrum(target, vals, spectrum.kind)


class SpectraParseError(ValueError):
    """Malformed spectra CSV; message carries row/column location."""


def _parse_spectra(text: str, source: str, kind: str) -> list:
    names: list = []
    rows: list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if not names:
            if cells[0] != "wavelength_nm":
                raise SpectraParseError(
                    f"{source}:{lineno}: first header column must be "
                    f"'wavelength_nm', got {cells[0]!r}"
                )
            names = cells[1:]
            continue
        if len(cells) != len(names) + 1:
            raise SpectraParseError(
                f"{source}:{lineno}: expected {len(names) + 1} cells, "
                f"got {len(cells)}"
            )
        parsed = []
        for col, cell in enumerate(cells, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise SpectraParseError(
                    f"{source}:{lineno}: column {col}: non-numeric cell {cell!r}"
                ) from None
        rows.append(parsed)

    if not names:
        raise SpectraParseError(f"{source}: missing header row")
    if not rows or not names:
        return []

    data = np.array(rows, dtype=float)
    wl = data[:, 0]
    diffs = np.diff(wl)
    if np.any(diffs <= 0):
        bad = int(np.argmax(diffs <= 0)) + 2
        raise SpectraParseError(
            f"{source}: wavelengths not strictly increasing at data row {bad}"
        )
    if len(wl) < 2:
        raise SpectraParseError(f"{source}: need at least two wavelength rows")
    step = diffs[0]
    if np.any(np.abs(diffs - step) > 1e-9 * max(1.0, step)):
        raise SpectraParseError(f"{source}: wavelength spacing is not uniform")
    grid = WavelengthGrid(float(wl[0]), float(wl[-1]), float(step))

    out = []
    for j, name in enumerate(names):
        vals = data[:, j + 1]
        if kind == "reflectance":
            vals = np.clip(vals, REFLECTANCE_FLOOR, 1.0)
        out.append((name, Spectrum(grid, vals, kind)))
    return out


def load_spectra_csv(path, kind: str = "generic") -> list:
    """Load named spectra from a CSV file.

    Format: optional '#' comment lines, then header
    ``wavelength_nm,<name1>,<name2>,...`` and one row per wavelength,
    strictly increasing with uniform spacing.  Returns ``[(name, Spectrum)]``
    in column order; a header with no data rows yields an empty list.
    ``kind='reflectance'`` clamps values into [REFLECTANCE_FLOOR, 1].
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return _parse_spectra(text, str(path), kind)


def save_spectra_csv(path, named_spectra: Sequence, comments: Sequence[str] = ()) -> None:
    """Write named spectra (all on one shared grid) as a spectra CSV."""
    if not named_spectra:
        raise ValueError("nothing to save")
    grid = named_spectra[0][1].grid
    for name, spec in named_spectra:
        if spec.grid != grid:
            raise ValueError(f"spectrum {name!r} is on a different grid")
    buf = io.StringIO()
    for comment in comments:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["wavelength_nm"] + [name for name, _ in named_spectra])
    wl = grid.wavelengths
    for i in range(grid.count):
        row = [f"{wl[i]:g}"] + [f"{spec.values[i]:.17g}" for _, spec in named_spectra]
        writer.writerow(row)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def load_camera_csv(path) -> CameraModel:
    """Load a camera response matrix from a spectra CSV (one column per channel)."""
    named = load_spectra_csv(path, kind="generic")
    if not named:
        raise SpectraParseError(f"{path}: camera file has no data rows")
    grid = named[0][1].grid
    resp = np.vstack([spec.values for _, spec in named])
    return CameraModel(grid, resp, tuple(name for name, _ in named))


def _data_text(filename: str) -> str:
    return resources.files("vcavity.data").joinpath(filename).read_text(encoding="utf-8")


_BUILTIN_FILES = {
    "D65": ("illuminant_d65.csv", "spd"),
    "D50": ("illuminant_d50.csv", "spd"),
    "CIE1964_CMF": ("observer_cie1964_10deg.csv", "generic"),
    "ColorChecker24": ("colorchecker24.csv", "reflectance"),
}


def builtin(name: str) -> Union[Spectrum, CameraModel, list]:
    """Return a bundled dataset resampled to the default grid.

    ``D65`` / ``D50`` give an illuminant Spectrum, ``CIE1964_CMF`` a
    3-channel CameraModel (x, y, z rows), ``ColorChecker24`` a list of 24
    ``(name, Spectrum)`` reflectances.
    """
    try:
        filename, kind = _BUILTIN_FILES[name]
    except KeyError:
        raise KeyError(
            f"unknown builtin {name!r}; available: {sorted(_BUILTIN_FILES)}"
        ) from None
    named = _parse_spectra(_data_text(filename), filename, kind)
    named = [(n, resample(s, DEFAULT_GRID)) for n, s in named]
    if name in ("D65", "D50"):
        return named[0][1]
    if name == "CIE1964_CMF":
        resp = np.vstack([spec.values for _, spec in named])
        return CameraModel(DEFAULT_GRID, resp, tuple(n for n, _ in named))
    return named


def default_camera() -> CameraModel:
    """Bundled 3-channel RGB response used by the synthetic experiments."""
    named = _parse_spectra(_data_text("camera_rgb_srf.csv"), "camera_rgb_srf.csv", "generic")
    named = [(n, resample(s, DEFAULT_GRID)) for n, s in named]
    resp = np.vstack([spec.values for _, spec in named])
    return CameraModel(DEFAULT_GRID, resp, tuple(n for n, _ in named))
