"""Interreflection simulation in a V-shaped Lambertian cavity and
spectral reflectance estimation from a single RGB observation."""

from .spectra import (
    DEFAULT_GRID,
    CameraModel,
    Spectrum,
    WavelengthGrid,
    builtin,
    default_camera,
    load_camera_csv,
    load_spectra_csv,
    resample,
    save_spectra_csv,
)
from .geometry import (
    Facet,
    KernelMatrix,
    VCavity,
    build_v_cavity,
    kernel_exact,
    kernel_monte_carlo,
    kernel_pair,
    load_kernel_csv,
    save_kernel_csv,
)
from .forward import (
    EigenKernel,
    IrradianceField,
    NumericError,
    RgbObservation,
    SpectralField,
    bounce_irradiance,
    closed_form_irradiance,
    direct_irradiance,
    eigen_prepare,
    flat_metamer_partner,
    flat_projection,
    forward_uniform,
    load_observation_csv,
    project_camera,
    radiance,
    save_observation_csv,
)
from .inverse import (
    CalibrationMap,
    ClampWarning,
    EstimationConfig,
    EstimationResult,
    LowSignalWarning,
    apply_precalibration,
    estimate,
    fit_precalibration,
    objective,
    smoothness_penalty,
)
from .metrics import LabColor, ciede2000, pearson_distance, rmse, spectrum_to_lab

__version__ = "0.1.0"
