"""Uniform spectral reflectance estimation from one cavity observation.

Minimizes ||rho_img - rho_model(r)||^2 + alpha * smoothness(r) over the box
(0, 1]^q.  The model is the eigendecomposition forward path, which makes the
gradient a closed-form diagonal perturbation per band: with
d_j = 1/(1/r - g_j), the derivative of d_j in r is (d_j / r)^2.  One gradient
costs about as much as one forward evaluation instead of q of them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .forward import EigenKernel, NumericError, RgbObservation
from .spectra import CameraModel, Spectrum

__all__ = [
    "ClampWarning",
    "LowSignalWarning",
    "EstimationConfig",
    "EstimationResult",
    "CalibrationMap",
    "smoothness_penalty",
    "objective",
    "estimate",
    "fit_precalibration",
    "apply_precalibration",
]

# Observed inter-facet variation below this fraction of the signal level
# means interreflection barely shows and the inversion is poorly conditioned.
LOW_SIGNAL_FRACTION = 0.02


class ClampWarning(UserWarning):
    """Objective was probed outside the reflectance box and clamped."""


class LowSignalWarning(UserWarning):
    """Observation shows almost no inter-facet variation."""


@dataclass(frozen=True)
class EstimationConfig:
    """Solver and model options for one estimation run.

    normalization 'sum' rescales observation and model values by their
    respective sums (each vector to mean 1) before the residual, cancelling
    any global intensity factor while keeping the data term at its natural
    magnitude against alpha.  init is a constant starting reflectance or a
    full Spectrum.
    """

    alpha: float = 2.5
    max_iters: int = 500
    grad_tol: float = 1e-8
    step_tol: float = 1e-14
    lower_bound: float = 1e-6
    upper_bound: float = 1.0
    normalization: str = "none"
    init: object = 0.5

    def __post_init__(self) -> None:
        if not (self.alpha >= 0):
            raise ValueError("alpha must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (self.grad_tol > 0 and self.step_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.lower_bound < self.upper_bound <= 1.0):
            raise ValueError("bounds must satisfy 0 < lower < upper <= 1")
        if self.normalization not in ("none", "sum"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if isinstance(self.init, Spectrum):
            return
        init = float(self.init)
        if not (0 < init <= 1.0):
            raise ValueError("constant init must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class EstimationResult:
    """Estimated spectrum plus solver diagnostics.

    objective_value = data_residual + alpha * smoothness_penalty at the
    solution; per_iteration_trace lists the objective at every accepted
    iterate, starting from the initial point.
    """

    reflectance: Spectrum
    objective_value: float
    data_residual: float
    smoothness_penalty: float
    iterations: int
    converged: bool
    per_iteration_trace: tuple


@dataclass(frozen=True, eq=False)
class CalibrationMap:
    """Per-channel quadratic maps expected = a x^2 + b x + c, with fit residuals."""

    coefficients: np.ndarray
    residuals: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.array(self.coefficients, dtype=float)
        resid = np.array(self.residuals, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1] != 3:
            raise ValueError("coefficients must be s x 3")
        if resid.shape != (coeffs.shape[0],):
            raise ValueError("one residual per channel required")
        coeffs.setflags(write=False)
        resid.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "residuals", resid)


def smoothness_penalty(r) -> tuple:
    """Sum of squared discrete second differences, with its exact gradient."""
    vals = r.values if isinstance(r, Spectrum) else np.asarray(r, dtype=float)
    if vals.size < 3:
        raise ValueError("smoothness penalty needs at least 3 bands")
    d2 = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
    grad = np.zeros_like(vals)
    grad[2:] += 2.0 * d2
    grad[1:-1] -= 4.0 * d2
    grad[:-2] += 2.0 * d2
    return float(d2 @ d2), grad


def _quantize(vec: np.ndarray) -> np.ndarray:
    """Round to float32 so sum-normalized inputs are reproducible bitwise.

    Rescaling an illuminant or observation by a scalar perturbs each entry
    by roughly one float64 ulp; after division by the sum those ulps would
    leak into the iterate sequence.  Rounding the normalized vector to
    float32 absorbs them (the 1e-7 relative error is far below any
    measurement noise), making estimates bit-identical under rescaling.
    """
    return vec.astype(np.float32).astype(np.float64)


class _Prepared:
    """Shared precomputation for objective evaluations on one problem."""

    def __init__(
        self,
        eig: EigenKernel,
        E0: Spectrum,
        camera: CameraModel,
        rho_img,
        config: EstimationConfig,
    ):
        if E0.grid != camera.grid:
            raise ValueError("illuminant and camera grids differ")
        rho = rho_img.values if isinstance(rho_img, RgbObservation) else np.asarray(rho_img, dtype=float)
        m = eig.m
        s = camera.channels
        if rho.shape != (m * s,):
            raise ValueError(
                f"observation has {rho.shape} values, kernel/camera need {m * s}"
            )
        self.eig = eig
        self.grid = camera.grid
        self.q = camera.grid.count
        self.m = m
        self.s = s
        self.config = config
        self.cw = camera.response * camera.grid.step_nm
        self.t0 = eig.Qinv @ np.ones(m)

        e0 = E0.values.astype(float)
        if config.normalization == "sum":
            e0_sum = e0.sum()
            rho_sum = rho.sum()
            if e0_sum <= 0 or rho_sum <= 0:
                raise ValueError("sum normalization needs positive totals")
            # Mean-1 scaling: divide by the sum, multiply by the length.  A
            # plain 1/sum would shrink the residual by (m*s)^2 and let the
            # alpha term over-smooth; the constant factor changes neither
            # the minimizer of the data term nor the intensity cancellation.
            self.e0 = _quantize(e0 * (self.q / e0_sum))
            self.rho_img = _quantize(rho * (m * s / rho_sum))
        else:
            self.e0 = e0
            self.rho_img = rho.copy()
        self.cwe = self.cw * self.e0[None, :]

    def __call__(self, r: np.ndarray) -> tuple:
        cfg = self.config
        lb, ub = cfg.lower_bound, cfg.upper_bound
        if np.any(r < lb - 1e-15) or np.any(r > ub + 1e-15):
            warnings.warn(
                "objective probed outside the reflectance box; clamping",
                ClampWarning,
                stacklevel=2,
            )
        rv = np.clip(r, lb, ub)

        den = (1.0 / rv)[None, :] - self.eig.g[:, None]
        if np.any(np.abs(den) < 1e-12):
            raise NumericError("1/r collides with a kernel eigenvalue")
        dmat = 1.0 / den
        phi = dmat @ self.cwe.T / math.pi  # m x s
        pmat = self.eig.Q @ (self.t0[:, None] * phi)  # m x s
        rho = pmat.T.ravel()

        if cfg.normalization == "sum":
            total = rho.sum()
            if total <= 0:
                raise NumericError("model observation sums to zero")
            rho_n = rho * (self.m * self.s / total)
            res = self.rho_img - rho_n
        else:
            res = self.rho_img - rho

        pen, pen_grad = smoothness_penalty(rv)
        value = float(res @ res) + cfg.alpha * pen

        # dd/dr = d^2 / r^2 band-wise; chain through Q, the camera weights,
        # and (when active) the sum normalization.
        res_mat = res.reshape(self.s, self.m)
        vmat = self.eig.Qinv @ res_mat.T  # m x s
        dsq_t = dmat * dmat * self.t0[:, None]  # m x q
        a2 = dsq_t.T @ vmat  # q x s
        scale = self.e0 / (math.pi * rv * rv)
        g1 = np.einsum("cq,qc->q", self.cw, a2) * scale
        if cfg.normalization == "sum":
            a1 = (dsq_t * self.t0[:, None]).sum(axis=0)
            sum_d = self.cw.sum(axis=0) * a1 * scale
            data_grad = -2.0 * (self.m * self.s * g1 - float(res @ rho_n) * sum_d) / total
        else:
            data_grad = -2.0 * g1
        grad = data_grad + cfg.alpha * pen_grad

        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NumericError(f"non-finite objective at r = {rv.tolist()}")
        return value, grad

    def components(self, r: np.ndarray) -> tuple:
        """(data residual, smoothness penalty) at r, matching __call__."""
        value, _ = self(r)
        pen, _ = smoothness_penalty(np.clip(r, self.config.lower_bound, self.config.upper_bound))
        return value - self.config.alpha * pen, pen


def objective(
    r,
    eig: EigenKernel,
    E0: Spectrum,
    camera: CameraModel,
    rho_img,
    config: EstimationConfig,
) -> tuple:
    """Objective value and exact analytic gradient at reflectance r."""
    prepared = _Prepared(eig, E0, camera, rho_img, config)
    vals = r.values if isinstance(r, Spectrum) else np.asarray(r, dtype=float)
    if vals.shape != (prepared.q,):
        raise ValueError(f"expected {prepared.q} reflectance bands")
    return prepared(vals)


def _low_signal_check(rho: np.ndarray, m: int, s: int) -> None:
    mat = rho.reshape(s, m)
    variation = float(np.mean(mat.max(axis=1) - mat.min(axis=1)))
    level = float(rho.max(initial=0.0))
    if level <= 0 or variation < LOW_SIGNAL_FRACTION * level:
        warnings.warn(
            "inter-facet variation is below "
            f"{LOW_SIGNAL_FRACTION:.0%} of the signal level; "
            "interreflection is weak and the estimate may be unreliable",
            LowSignalWarning,
            stacklevel=3,
        )


def estimate(
    rho_img,
    eig: EigenKernel,
    E0: Spectrum,
    camera: CameraModel,
    config: EstimationConfig = EstimationConfig(),
) -> EstimationResult:
    """Recover a uniform reflectance spectrum from one observation.

    Bound-constrained quasi-Newton descent (L-BFGS-B) with the analytic
    gradient; iterates stay inside the box and the line search only accepts
    decreasing steps.  Deterministic for fixed inputs and config.
    """
    prepared = _Prepared(eig, E0, camera, rho_img, config)
    rho_vec = rho_img.values if isinstance(rho_img, RgbObservation) else np.asarray(rho_img, dtype=float)
    _low_signal_check(rho_vec, prepared.m, prepared.s)

    q = prepared.q
    if isinstance(config.init, Spectrum):
        if config.init.grid != camera.grid:
            raise ValueError("init spectrum grid does not match camera grid")
        x0 = config.init.values.copy()
    else:
        x0 = np.full(q, float(config.init))
    x0 = np.clip(x0, config.lower_bound, config.upper_bound)

    trace = [prepared(x0)[0]]

    def record(xk: np.ndarray) -> None:
        trace.append(prepared(xk)[0])

    result = optimize.minimize(
        prepared,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(config.lower_bound, config.upper_bound)] * q,
        callback=record,
        options={
            "maxiter": config.max_iters,
            "gtol": config.grad_tol,
            "ftol": config.step_tol,
            "maxfun": 10 * config.max_iters * max(q, 1),
        },
    )
    message = str(result.message)
    if result.status not in (0, 1) and "ABNORMAL" not in message:
        raise NumericError(f"solver failed: {message} at r = {result.x.tolist()}")
    # ABNORMAL line-search termination means no acceptable step existed
    # (typically the start is already a minimizer); the best iterate is
    # still valid, so report it as a step-size stall, not an error.

    x = np.clip(result.x, config.lower_bound, config.upper_bound)
    data, pen = prepared.components(x)
    return EstimationResult(
        reflectance=Spectrum(prepared.grid, x, "reflectance"),
        objective_value=float(data + config.alpha * pen),
        data_residual=float(data),
        smoothness_penalty=float(pen),
        iterations=int(result.nit),
        converged=bool(result.status == 0),
        per_iteration_trace=tuple(trace),
    )


def fit_precalibration(measured_rgb, expected_rgb) -> CalibrationMap:
    """Fit per-channel quadratics mapping measured to expected sensor values."""
    measured = np.asarray(measured_rgb, dtype=float)
    expected = np.asarray(expected_rgb, dtype=float)
    if measured.ndim != 2 or measured.shape != expected.shape:
        raise ValueError("measured and expected must be matching n x s arrays")
    if measured.shape[0] < 3:
        raise ValueError("need at least 3 samples per channel")
    coeffs = []
    residuals = []
    for c in range(measured.shape[1]):
        x = measured[:, c]
        if np.unique(x).size < 3:
            raise ValueError(
                f"channel {c}: need at least 3 distinct measured values"
            )
        design = np.column_stack([x * x, x, np.ones_like(x)])
        sol, _, _, _ = np.linalg.lstsq(design, expected[:, c], rcond=None)
        coeffs.append(sol)
        pred = design @ sol
        residuals.append(float(np.sqrt(np.mean((pred - expected[:, c]) ** 2))))
    return CalibrationMap(np.array(coeffs), np.array(residuals))


def apply_precalibration(cal: CalibrationMap, observation: RgbObservation) -> RgbObservation:
    """Apply the per-channel quadratics; negative outputs clamp to zero."""
    if cal.coefficients.shape[0] != observation.s:
        raise ValueError("calibration channel count does not match observation")
    out = np.empty_like(observation.values)
    m = observation.m
    for c in range(observation.s):
        a, b, k = cal.coefficients[c]
        x = observation.channel(c)
        out[c * m : (c + 1) * m] = a * x * x + b * x + k
    return RgbObservation(observation.m, observation.s, np.maximum(out, 0.0))
