"""Forward light transport in a uniformly colored cavity.

Per wavelength band the bounced irradiance is a geometric series in (K r):
E = E0 + K r E0 + (K r)^2 E0 + ... with closed form E = (I - r K)^{-1} E0,
valid because K is substochastic and r <= 1.  Radiance follows as r E / pi,
and camera values are band-integrated radiances.  For uniform reflectance a
single symmetric eigendecomposition of K turns every band solve into a
diagonal rescale; that fast path is what the estimator iterates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import KernelMatrix, VCavity
from .spectra import CameraModel, Spectrum, WavelengthGrid

__all__ = [
    "NumericError",
    "SpectralField",
    "IrradianceField",
    "EigenKernel",
    "RgbObservation",
    "direct_irradiance",
    "bounce_irradiance",
    "closed_form_irradiance",
    "radiance",
    "eigen_prepare",
    "forward_uniform",
    "project_camera",
    "flat_projection",
    "flat_metamer_partner",
    "save_observation_csv",
    "load_observation_csv",
]

_SOLVE_CHUNK = 8  # bands per stacked linear solve; bounds peak memory


class NumericError(ArithmeticError):
    """Numerical failure that valid inputs should never produce."""


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Per-facet, per-band values (m x q) on a wavelength grid."""

    grid: WavelengthGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != self.grid.count:
            raise ValueError(
                f"values must be m x {self.grid.count}, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        self._check(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _check(self, vals: np.ndarray) -> None:
        pass

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class IrradianceField(SpectralField):
    """Irradiance is nonnegative everywhere."""

    def _check(self, vals: np.ndarray) -> None:
        if np.any(vals < 0.0):
            raise ValueError("irradiance must be nonnegative")


@dataclass(frozen=True, eq=False)
class EigenKernel:
    """Symmetric eigendecomposition of a kernel: K = Q diag(g) Qinv."""

    Q: np.ndarray
    g: np.ndarray
    Qinv: np.ndarray

    def __post_init__(self) -> None:
        for name in ("Q", "g", "Qinv"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        m = self.Q.shape[0]
        if self.Q.shape != (m, m) or self.Qinv.shape != (m, m) or self.g.shape != (m,):
            raise ValueError("inconsistent eigendecomposition shapes")

    @property
    def m(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True, eq=False)
class RgbObservation:
    """Per-facet sensor values, channel-major: all m values of channel 0 first."""

    m: int
    s: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.m * self.s,):
            raise ValueError(
                f"expected {self.m * self.s} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("observation contains non-finite values")
        if np.any(vals < 0.0):
            raise ValueError("observation values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def channel(self, c: int) -> np.ndarray:
        return self.values[c * self.m : (c + 1) * self.m]

    def as_matrix(self) -> np.ndarray:
        """Facet-major view, m x s."""
        return self.values.reshape(self.s, self.m).T

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "RgbObservation":
        mat = np.asarray(mat, dtype=float)
        return cls(mat.shape[0], mat.shape[1], mat.T.ravel().copy())


def direct_irradiance(cavity: VCavity, spd: Spectrum, mode: str = "uniform") -> IrradianceField:
    """Zero-bounce irradiance per facet and band.

    'uniform' gives every facet the illuminant SPD unchanged.  'cosine'
    models a collimated beam down the bisecting plane: each facet receives
    the SPD scaled by the cosine of the beam's incidence angle, which is
    sin(angle/2) on both panels.
    """
    if mode not in ("uniform", "cosine"):
        raise ValueError(f"unknown irradiance mode {mode!r}")
    scale = np.ones(cavity.m)
    if mode == "cosine":
        beam = np.array([0.0, 0.0, -1.0])  # frontal, parallel to the bisector
        scale = np.maximum(cavity.normals @ -beam, 0.0)
    return IrradianceField(spd.grid, scale[:, None] * spd.values[None, :])


def _reflectance_values(r: Spectrum) -> np.ndarray:
    vals = r.values
    if np.any(vals <= 0.0) or np.any(vals > 1.0 + 1e-12):
        raise ValueError("reflectance must lie in (0, 1]")
    return vals


def bounce_irradiance(K: KernelMatrix, r: Spectrum, E0: IrradianceField, n_bounces: int) -> IrradianceField:
    """Partial geometric series: sum of (K r)^b E0 for b = 0..n_bounces.

    Computed by iterated multiplication, never by matrix powers.
    """
    if n_bounces < 0:
        raise ValueError("n_bounces must be nonnegative")
    if r.grid != E0.grid:
        raise ValueError("reflectance and irradiance grids differ")
    rv = _reflectance_values(r)
    term = E0.values.copy()
    total = term.copy()
    for _ in range(n_bounces):
        term = (K.entries @ term) * rv[None, :]
        total += term
    return IrradianceField(E0.grid, total)


def closed_form_irradiance(K: KernelMatrix, r: Spectrum, E0: IrradianceField) -> IrradianceField:
    """Infinite-bounce irradiance: per band solve (I - r K) E = E0."""
    if r.grid != E0.grid:
        raise ValueError("reflectance and irradiance grids differ")
    rv = _reflectance_values(r)
    m = K.m
    q = E0.grid.count
    eye = np.eye(m)
    out = np.empty((m, q))
    for lo in range(0, q, _SOLVE_CHUNK):
        hi = min(lo + _SOLVE_CHUNK, q)
        mats = eye[None, :, :] - rv[lo:hi, None, None] * K.entries[None, :, :]
        rhs = E0.values[:, lo:hi].T[:, :, None]
        try:
            sol = np.linalg.solve(mats, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular bounce system: {exc}") from exc
        out[:, lo:hi] = sol[:, :, 0].T
    return IrradianceField(E0.grid, out)


def radiance(K: KernelMatrix, r: Spectrum, E0: IrradianceField) -> SpectralField:
    """Reflected radiance per facet and band: r/pi times total irradiance."""
    total = closed_form_irradiance(K, r, E0)
    return SpectralField(E0.grid, total.values * (r.values[None, :] / math.pi))


def eigen_prepare(K: KernelMatrix) -> EigenKernel:
    """Symmetric eigendecomposition; the uniform-reflectance fast path.

    Requires a (numerically) symmetric kernel, i.e. equal facet areas.
    """
    scale = max(float(np.abs(K.entries).max(initial=0.0)), 1.0)
    if K.symmetry_residual() > 1e-8 * scale:
        raise ValueError(
            "kernel is not symmetric (unequal facet areas?); "
            "use the direct per-band solve instead"
        )
    sym = 0.5 * (K.entries + K.entries.T)
    g, Q = np.linalg.eigh(sym)
    if np.abs(g).max(initial=0.0) >= 1.0:
        raise NumericError("kernel spectral radius must be below 1")
    eig = EigenKernel(Q, g, Q.T)
    residual = np.abs((Q * g[None, :]) @ Q.T - K.entries).max(initial=0.0)
    if residual > 1e-8 * scale:
        raise NumericError(f"eigendecomposition residual {residual:.3g} too large")
    return eig


def _band_diagonal(eig: EigenKernel, rv: np.ndarray) -> np.ndarray:
    """d[j, band] = 1 / (1/r_band - g_j); the per-band diagonal resolvent."""
    den = (1.0 / rv)[None, :] - eig.g[:, None]
    if np.any(np.abs(den) < 1e-12):
        raise NumericError("1/r collides with a kernel eigenvalue")
    return 1.0 / den


def forward_uniform(eig: EigenKernel, r: Spectrum, E0, camera: CameraModel) -> RgbObservation:
    """Camera observation of the cavity via the eigendecomposition.

    E0 may be an illuminant Spectrum (every facet lit identically) or an
    IrradianceField.  Per band the radiance is
    (1/pi) Q diag(1/(1/r - g)) Qinv E0, and channel values are Riemann sums
    over bands.
    """
    if r.grid != camera.grid:
        raise ValueError("reflectance and camera grids differ")
    rv = _reflectance_values(r)
    dmat = _band_diagonal(eig, rv)
    if isinstance(E0, SpectralField):
        if E0.grid != r.grid:
            raise ValueError("irradiance and reflectance grids differ")
        if E0.m != eig.m:
            raise ValueError("irradiance facet count does not match kernel")
        t = eig.Qinv @ E0.values
    else:
        if E0.grid != r.grid:
            raise ValueError("illuminant and reflectance grids differ")
        t = (eig.Qinv @ np.ones(eig.m))[:, None] * E0.values[None, :]
    lmat = (eig.Q @ (dmat * t)) / math.pi
    return project_camera(SpectralField(r.grid, lmat), camera)


def project_camera(field: SpectralField, camera: CameraModel) -> RgbObservation:
    """Band-integrate radiance against the camera response (Riemann sum)."""
    if field.grid != camera.grid:
        raise ValueError("field and camera grids differ")
    dlam = field.grid.step_nm
    mat = field.values @ camera.response.T * dlam
    mat = np.maximum(mat, 0.0)  # clip float dust; radiance is nonnegative
    return RgbObservation.from_matrix(mat)


def flat_projection(r: Spectrum, spd: Spectrum, camera: CameraModel) -> np.ndarray:
    """Sensor triple of an unbent (K = 0) surface: C (r E0 / pi) d_lambda."""
    if r.grid != spd.grid or r.grid != camera.grid:
        raise ValueError("grids differ")
    radiance_flat = r.values * spd.values / math.pi
    return camera.response @ radiance_flat * r.grid.step_nm


def flat_metamer_partner(
    base: Spectrum,
    spd: Spectrum,
    camera: CameraModel,
    amplitude: float = 0.12,
) -> Spectrum:
    """Construct a distinct reflectance metameric to `base` on a flat surface.

    Adds an oscillatory perturbation projected onto the null space of the
    flat-projection map, scaled to `amplitude` peak deviation (reduced if
    needed to keep the result strictly inside (0, 1]).  The pair then has
    identical flat sensor values to machine precision but separates once
    interreflections couple the bands differently.
    """
    if not (amplitude > 0):
        raise ValueError("amplitude must be positive")
    grid = base.grid
    mat = camera.response * spd.values[None, :] * (grid.step_nm / math.pi)
    wl = grid.wavelengths
    profile = np.sin(3.0 * 2.0 * math.pi * (wl - wl[0]) / (wl[-1] - wl[0]))
    coef = np.linalg.solve(mat @ mat.T, mat @ profile)
    null_dir = profile - mat.T @ coef
    peak = np.abs(null_dir).max()
    if peak < 1e-9:
        raise NumericError("perturbation profile lies in the camera row space")
    null_dir /= peak

    c = amplitude
    room = np.where(null_dir > 0, (1.0 - base.values) / null_dir, np.inf)
    room = np.minimum(
        room, np.where(null_dir < 0, (base.values - 2e-6) / -null_dir, np.inf)
    )
    c = min(c, 0.95 * float(room.min()))
    if c <= 0:
        raise ValueError("base spectrum leaves no room for a metameric partner")
    partner = base.values + c * null_dir
    return Spectrum(grid, np.clip(partner, 1e-6, 1.0), "reflectance")


def save_observation_csv(path, obs: RgbObservation, panels, channel_names=None) -> None:
    """Write an observation CSV: header facet,panel,<channels>, one row per facet."""
    panels = np.asarray(panels, dtype=int)
    if panels.shape != (obs.m,):
        raise ValueError("panels must list one panel id per facet")
    names = list(channel_names) if channel_names else [f"ch{c}" for c in range(obs.s)]
    if len(names) != obs.s:
        raise ValueError("channel name count does not match channels")
    mat = obs.as_matrix()
    lines = ["facet,panel," + ",".join(names)]
    for i in range(obs.m):
        cells = [str(i), str(int(panels[i]))] + [f"{v:.17g}" for v in mat[i]]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_observation_csv(path):
    """Read an observation CSV; returns (RgbObservation, panel ids, channel names)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty observation file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[:2] != ["facet", "panel"] or len(header) < 3:
        raise ValueError(f"{path}: header must start with 'facet,panel' plus channels")
    names = header[2:]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} cells")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
    data = np.array(rows)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if np.any(data[:, 0] != np.arange(len(data))):
        raise ValueError(f"{path}: facet indices must cover 0..m-1 exactly once")
    panels = data[:, 1].astype(int)
    obs = RgbObservation.from_matrix(data[:, 2:])
    return obs, panels, names
