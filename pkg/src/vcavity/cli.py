"""Command-line pipeline: kernels, simulation, estimation, and experiments.

All commands read one JSON config document, validated in full (unknown keys
rejected) before any output file is touched.  Exit codes: 0 success, 1 usage
or config error, 2 numeric failure.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import forward, geometry, inverse, metrics, spectra

SWEEP_ANGLES = (30.0, 45.0, 60.0, 90.0)
SWEEP_FACETS = (64, 100, 256)


class ConfigError(Exception):
    """Invalid config document or inconsistent pipeline inputs."""


# ---------------------------------------------------------------- config ---

_CAVITY_KEYS = ("panel_width_m", "panel_height_m", "angle_deg", "rows", "cols")

_SCHEMA = {
    "cavity": _CAVITY_KEYS,
    "kernel": ("method", "samples_per_pair", "cache"),
    "illuminant": None,
    "camera": None,
    "irradiance_mode": None,
    "estimation": (
        "alpha",
        "max_iters",
        "grad_tol",
        "step_tol",
        "lower_bound",
        "upper_bound",
        "normalization",
        "init",
    ),
    "seed": None,
    "simulate": ("reflectance", "noise_sigma"),
    "estimate": ("observation", "ground_truth", "precalibration", "image", "image_layout"),
    "metamer": ("base", "partner", "amplitude"),
}

_DEFAULTS = {
    "kernel": {"method": "exact", "samples_per_pair": 10000, "cache": None},
    "illuminant": "D65",
    "camera": "builtin",
    "irradiance_mode": "uniform",
    "estimation": {},
    "seed": 0,
    "simulate": {},
    "estimate": {},
    "metamer": {},
}


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def load_config(path) -> dict:
    """Parse and fully validate a config JSON document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "config root must be a JSON object")

    for key in doc:
        _require(key in _SCHEMA, f"unknown config key {key!r}")
    for key, subkeys in _SCHEMA.items():
        if subkeys is None or key not in doc:
            continue
        _require(isinstance(doc[key], dict), f"config key {key!r} must be an object")
        for sub in doc[key]:
            _require(sub in subkeys, f"unknown config key {key}.{sub}")

    merged = {}
    for key, default in _DEFAULTS.items():
        value = doc.get(key, default)
        if isinstance(default, dict) and isinstance(value, dict):
            value = {**default, **value}
        merged[key] = value
    _require("cavity" in doc, "config must define 'cavity'")
    merged["cavity"] = doc["cavity"]

    cav = merged["cavity"]
    for field in _CAVITY_KEYS:
        _require(field in cav, f"cavity.{field} is required")
        _require(isinstance(cav[field], (int, float)), f"cavity.{field} must be numeric")
    _require(
        isinstance(cav["rows"], int) and isinstance(cav["cols"], int),
        "cavity.rows and cavity.cols must be integers",
    )
    _require(0 < cav["angle_deg"] < 180, "cavity.angle_deg must lie in (0, 180)")
    _require(
        cav["panel_width_m"] > 0 and cav["panel_height_m"] > 0,
        "cavity panel dimensions must be positive",
    )
    _require(cav["rows"] >= 1 and cav["cols"] >= 1, "cavity grid must be at least 1x1")

    ker = merged["kernel"]
    _require(ker["method"] in ("exact", "monte_carlo"), "kernel.method must be 'exact' or 'monte_carlo'")
    _require(
        isinstance(ker["samples_per_pair"], int) and ker["samples_per_pair"] >= 1,
        "kernel.samples_per_pair must be a positive integer",
    )
    _require(
        isinstance(merged["seed"], int) and merged["seed"] >= 0,
        "seed must be a nonnegative integer",
    )
    _require(
        merged["irradiance_mode"] in ("uniform", "cosine"),
        "irradiance_mode must be 'uniform' or 'cosine'",
    )

    sim = merged["simulate"]
    if "noise_sigma" in sim:
        _require(
            isinstance(sim["noise_sigma"], (int, float)) and sim["noise_sigma"] >= 0,
            "simulate.noise_sigma must be nonnegative",
        )
    met = merged["metamer"]
    if "amplitude" in met:
        _require(
            isinstance(met["amplitude"], (int, float)) and met["amplitude"] > 0,
            "metamer.amplitude must be positive",
        )

    # EstimationConfig re-validates numeric ranges; surface those as config errors.
    try:
        estimation_config(merged)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"estimation: {exc}") from exc
    return merged


def estimation_config(cfg: dict, **overrides) -> inverse.EstimationConfig:
    params = {**cfg["estimation"], **overrides}
    if isinstance(params.get("init"), str):
        init_spec = load_reflectance(params["init"])[1]
        params["init"] = init_spec
    return inverse.EstimationConfig(**params)


def build_cavity(cfg: dict) -> geometry.VCavity:
    cav = cfg["cavity"]
    return geometry.build_v_cavity(
        cav["panel_width_m"],
        cav["panel_height_m"],
        cav["angle_deg"],
        cav["rows"],
        cav["cols"],
    )


def build_kernel(cfg: dict, cavity: geometry.VCavity, seed: int, use_cache: bool = True) -> geometry.KernelMatrix:
    cache = cfg["kernel"]["cache"]
    if use_cache and cache and Path(cache).exists():
        kernel = geometry.load_kernel_csv(cache)
        _require(
            kernel.m == cavity.m,
            f"cached kernel {cache} is {kernel.m}x{kernel.m}, cavity needs {cavity.m}",
        )
        return kernel
    if cfg["kernel"]["method"] == "monte_carlo":
        return geometry.kernel_monte_carlo(cavity, cfg["kernel"]["samples_per_pair"], seed)
    return geometry.kernel_exact(cavity)


def load_illuminant(name: str) -> spectra.Spectrum:
    if name in ("D65", "D50"):
        return spectra.builtin(name)
    named = spectra.load_spectra_csv(name, kind="spd")
    _require(bool(named), f"illuminant file {name} has no data")
    return spectra.resample(named[0][1], spectra.DEFAULT_GRID)


def load_camera(name: str) -> spectra.CameraModel:
    if name == "builtin":
        return spectra.default_camera()
    cam = spectra.load_camera_csv(name)
    if cam.grid != spectra.DEFAULT_GRID:
        resp = np.vstack(
            [
                spectra.resample(spectra.Spectrum(cam.grid, row), spectra.DEFAULT_GRID).values
                for row in cam.response
            ]
        )
        cam = spectra.CameraModel(spectra.DEFAULT_GRID, resp, cam.channel_names)
    return cam


def load_reflectance(name: str):
    """Resolve a reflectance reference: patch name, ColorChecker24:<patch>, or CSV path."""
    patches = dict(spectra.builtin("ColorChecker24"))
    if name.startswith("ColorChecker24:"):
        key = name.split(":", 1)[1]
        _require(key in patches, f"unknown ColorChecker patch {key!r}")
        return key, patches[key]
    if name in patches:
        return name, patches[name]
    path = Path(name)
    _require(path.exists(), f"reflectance {name!r} is neither a patch name nor a file")
    named = spectra.load_spectra_csv(path, kind="reflectance")
    _require(bool(named), f"reflectance file {name} has no data")
    return named[0][0], spectra.resample(named[0][1], spectra.DEFAULT_GRID)


# ------------------------------------------------------------------- ppm ---


def read_ppm(path) -> np.ndarray:
    """Read a P6 (binary) or P3 (ascii) PPM into an H x W x 3 float array in [0, 1]."""
    data = Path(path).read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b""):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        return data[start:pos]

    magic = token()
    if magic not in (b"P6", b"P3"):
        raise ValueError(f"{path}: not a PPM file (magic {magic!r})")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise ValueError(f"{path}: invalid PPM dimensions")

    if magic == b"P3":
        values = np.array(data[pos:].split(), dtype=float)
        if values.size != width * height * 3:
            raise ValueError(f"{path}: expected {width * height * 3} samples")
        img = values.reshape(height, width, 3)
    else:
        pos += 1  # exactly one whitespace byte after maxval
        raw = data[pos:]
        if maxval > 255:
            count = width * height * 3
            if len(raw) < 2 * count:
                raise ValueError(f"{path}: truncated pixel data")
            img = np.frombuffer(raw[: 2 * count], dtype=">u2").astype(float)
        else:
            count = width * height * 3
            if len(raw) < count:
                raise ValueError(f"{path}: truncated pixel data")
            img = np.frombuffer(raw[:count], dtype=np.uint8).astype(float)
        img = img.reshape(height, width, 3)
    return img / float(maxval)


def image_observation(img: np.ndarray, quad0, quad1, rows: int, cols: int, samples_per_cell: int = 4):
    """Average image RGB over a rows x cols cell grid on two panel quads.

    Each quad is four [x, y] pixel-coordinate corners in the order
    (edge, col 0), (outer, col 0), (outer, last col), (edge, last col);
    cells follow the facet layout (rows count distance from the joint edge).
    Returns (RgbObservation, panel ids).
    """
    h, w, _ = img.shape
    per_cell = []
    for quad in (quad0, quad1):
        corners = np.asarray(quad, dtype=float)
        if corners.shape != (4, 2):
            raise ValueError("each panel quad needs four [x, y] corners")
        offsets = (np.arange(samples_per_cell) + 0.5) / samples_per_cell
        for r in range(rows):
            for c in range(cols):
                u = (r + offsets[:, None]) / rows
                v = (c + offsets[None, :]) / cols
                pts = (
                    (1 - u)[..., None] * (1 - v)[..., None] * corners[0]
                    + u[..., None] * (1 - v)[..., None] * corners[1]
                    + u[..., None] * v[..., None] * corners[2]
                    + (1 - u)[..., None] * v[..., None] * corners[3]
                )
                xs = np.clip(np.round(pts[..., 0]).astype(int), 0, w - 1)
                ys = np.clip(np.round(pts[..., 1]).astype(int), 0, h - 1)
                per_cell.append(img[ys, xs].reshape(-1, 3).mean(axis=0))
    mat = np.array(per_cell)
    panels = np.repeat([0, 1], rows * cols)
    return forward.RgbObservation.from_matrix(mat), panels


# ------------------------------------------------------------------- svg ---


def write_spectra_svg(path, grid: spectra.WavelengthGrid, curves, title: str = "") -> None:
    """Write a minimal SVG line chart of spectra; curves = [(label, values, color)]."""
    width, height = 640, 420
    left, right, top, bottom = 60, 20, 30, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    wl = grid.wavelengths
    ymax = max(1.0, max(float(np.max(vals)) for _, vals, _ in curves) * 1.05)

    def sx(x: float) -> float:
        return left + (x - wl[0]) / (wl[-1] - wl[0]) * plot_w

    def sy(y: float) -> float:
        return top + (1.0 - y / ymax) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444"/>',
    ]
    for tick in np.arange(wl[0], wl[-1] + 1, 50.0):
        x = sx(tick)
        parts.append(f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 5}" stroke="#444"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 20}" text-anchor="middle" font-size="11">{tick:.0f}</text>'
        )
    y_step = 0.25 if ymax <= 1.5 else ymax / 5
    tick = 0.0
    while tick <= ymax + 1e-9:
        y = sy(tick)
        parts.append(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#444"/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{tick:.2f}</text>'
        )
        tick += y_step
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">wavelength (nm)</text>'
    )
    for idx, (label, vals, color) in enumerate(curves):
        pts = " ".join(f"{sx(x):.2f},{sy(float(y)):.2f}" for x, y in zip(wl, vals))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 16 + 16 * idx
        parts.append(f'<line x1="{left + 10}" y1="{ly - 4}" x2="{left + 34}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + 40}" y="{ly}" font-size="11">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


# ------------------------------------------------------------ pipeline ----


def _simulate_observation(cfg, cavity, kernel, reflectance, seed, noise_sigma):
    illuminant = load_illuminant(cfg["illuminant"])
    camera = load_camera(cfg["camera"])
    eig = forward.eigen_prepare(kernel)
    e0 = forward.direct_irradiance(cavity, illuminant, cfg["irradiance_mode"])
    obs = forward.forward_uniform(eig, reflectance, e0, camera)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noisy = obs.values + rng.normal(0.0, noise_sigma, obs.values.shape)
        obs = forward.RgbObservation(obs.m, obs.s, np.maximum(noisy, 0.0))
    return obs, camera, illuminant, eig, e0


def _estimate_patch(rho, eig, illuminant, camera, est_cfg):
    return inverse.estimate(rho, eig, illuminant, camera, est_cfg)


def estimation_illuminant(cfg: dict, cavity: geometry.VCavity, illuminant: spectra.Spectrum) -> spectra.Spectrum:
    """Per-facet illumination spectrum matching the simulation's mode.

    Cosine mode attenuates a frontal beam by sin(angle/2), identically on
    both panels, so the estimator sees one uniformly scaled illuminant.
    """
    if cfg["irradiance_mode"] == "cosine":
        factor = math.sin(math.radians(cavity.angle_deg / 2.0))
        return spectra.Spectrum(illuminant.grid, illuminant.values * factor, kind="spd")
    return illuminant


def _patch_metrics(truth: spectra.Spectrum, est: spectra.Spectrum) -> dict:
    lab_t = metrics.spectrum_to_lab(truth)
    lab_e = metrics.spectrum_to_lab(est)
    return {
        "rmse": metrics.rmse(truth, est),
        "ciede00": metrics.ciede2000(lab_t, lab_e),
        "pd": metrics.pearson_distance(truth, est),
    }


def _roundtrip_rows(cfg, seed, angle=None, rows_cols=None):
    """Simulate and re-estimate every ColorChecker patch; returns metric rows."""
    cav_cfg = dict(cfg["cavity"])
    if angle is not None:
        cav_cfg["angle_deg"] = angle
    if rows_cols is not None:
        cav_cfg["rows"], cav_cfg["cols"] = rows_cols
    cavity = geometry.build_v_cavity(
        cav_cfg["panel_width_m"],
        cav_cfg["panel_height_m"],
        cav_cfg["angle_deg"],
        cav_cfg["rows"],
        cav_cfg["cols"],
    )
    kernel = build_kernel(cfg, cavity, seed, use_cache=angle is None and rows_cols is None)
    illuminant = load_illuminant(cfg["illuminant"])
    camera = load_camera(cfg["camera"])
    eig = forward.eigen_prepare(kernel)
    e0 = forward.direct_irradiance(cavity, illuminant, cfg["irradiance_mode"])
    # Experiment commands mimic the uncalibrated protocol: intensity-free
    # residual, and enough iterations for the dark patches to settle.  A
    # config that sets these keys still wins.
    exp_defaults = {"normalization": "sum", "max_iters": 2000}
    overrides = {k: v for k, v in exp_defaults.items() if k not in cfg["estimation"]}
    est_cfg = estimation_config(cfg, **overrides)

    est_illum = estimation_illuminant(cfg, cavity, illuminant)

    def job(truth):
        obs = forward.forward_uniform(eig, truth, e0, camera)
        result = _estimate_patch(obs, eig, est_illum, camera, est_cfg)
        return _patch_metrics(truth, result.reflectance)

    # Per-patch jobs are independent; rows keep the patch order regardless
    # of completion order.
    patches = spectra.builtin("ColorChecker24")
    import warnings as _warnings

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", inverse.LowSignalWarning)
        with ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 1)) as pool:
            futures = [pool.submit(job, truth) for _, truth in patches]
            out = [
                {"patch": name, **fut.result()}
                for (name, _), fut in zip(patches, futures)
            ]
    return out


def _write_metrics_csv(path, rows) -> None:
    lines = ["patch,rmse,ciede00,pd"]
    for row in rows:
        lines.append(f"{row['patch']},{row['rmse']:.6f},{row['ciede00']:.6f},{row['pd']:.6f}")
    mean = {k: float(np.mean([r[k] for r in rows])) for k in ("rmse", "ciede00", "pd")}
    lines.append(f"mean,{mean['rmse']:.6f},{mean['ciede00']:.6f},{mean['pd']:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ------------------------------------------------------------- commands ---


@click.group()
def cli() -> None:
    """Interreflection simulation and spectral reflectance estimation."""


_config_opt = click.option(
    "--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False)
)
_seed_opt = click.option("--seed", type=int, default=None, help="Override the config seed.")
_out_opt = click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)


@cli.command("kernel")
@_config_opt
@_seed_opt
@_out_opt
def cmd_kernel(config_path, seed, out_path) -> None:
    """Build the kernel matrix and save it as a cache CSV."""
    cfg = load_config(config_path)
    seed = cfg["seed"] if seed is None else seed
    cavity = build_cavity(cfg)
    kernel = build_kernel(cfg, cavity, seed, use_cache=False)
    out = out_path or cfg["kernel"]["cache"] or "kernel.csv"
    geometry.save_kernel_csv(out, kernel)
    click.echo(f"kernel {kernel.m}x{kernel.m} -> {out}")
    click.echo(f"max column sum {kernel.max_column_sum():.6f}")
    click.echo(f"symmetry residual {kernel.symmetry_residual():.3g}")
    if cfg["kernel"]["method"] == "monte_carlo":
        exact = geometry.kernel_exact(cavity)
        diff = float(np.abs(kernel.column_sums() - exact.column_sums()).max())
        click.echo(f"max column-sum difference vs exact {diff:.3g}")


@cli.command("simulate")
@_config_opt
@_seed_opt
@_out_opt
@click.option("--reflectance", "reflectance_name", default=None, help="Patch name or spectra CSV.")
@click.option("--noise-sigma", type=float, default=None, help="Gaussian sensor noise sigma.")
def cmd_simulate(config_path, seed, out_path, reflectance_name, noise_sigma) -> None:
    """Simulate the cavity observation for one reflectance."""
    cfg = load_config(config_path)
    seed = cfg["seed"] if seed is None else seed
    name = reflectance_name or cfg["simulate"].get("reflectance")
    if not name:
        raise ConfigError("simulate needs a reflectance (config simulate.reflectance or --reflectance)")
    sigma = noise_sigma if noise_sigma is not None else cfg["simulate"].get("noise_sigma", 0.0)
    if sigma < 0:
        raise ConfigError("noise sigma must be nonnegative")
    patch_name, reflectance = load_reflectance(name)
    cavity = build_cavity(cfg)
    kernel = build_kernel(cfg, cavity, seed)
    obs, camera, _, _, _ = _simulate_observation(cfg, cavity, kernel, reflectance, seed, sigma)
    out = out_path or "observation.csv"
    forward.save_observation_csv(out, obs, cavity.panels, camera.channel_names)
    click.echo(f"simulated {patch_name!r} ({cavity.m} facets) -> {out}")


@cli.command("estimate")
@_config_opt
@_seed_opt
@_out_opt
@click.option("--observation", "obs_path", default=None, type=click.Path(dir_okay=False))
@click.option("--ground-truth", "truth_name", default=None, help="Patch name or spectra CSV.")
@click.option("--plot", "plot_path", default=None, type=click.Path(dir_okay=False))
def cmd_estimate(config_path, seed, out_path, obs_path, truth_name, plot_path) -> None:
    """Estimate reflectance from an observation CSV (or PPM image)."""
    cfg = load_config(config_path)
    seed = cfg["seed"] if seed is None else seed
    est_section = cfg["estimate"]

    cavity = build_cavity(cfg)
    image_path = est_section.get("image")
    if image_path:
        layout_path = est_section.get("image_layout")
        _require(layout_path, "estimate.image requires estimate.image_layout")
        with open(layout_path, "r", encoding="utf-8") as fh:
            layout = json.load(fh)
        for key in layout:
            _require(key in ("panel0", "panel1"), f"unknown layout key {key!r}")
        _require(
            "panel0" in layout and "panel1" in layout,
            "image layout needs panel0 and panel1 quads",
        )
        img = read_ppm(image_path)
        obs, _ = image_observation(
            img, layout["panel0"], layout["panel1"], cavity.rows, cavity.cols
        )
    else:
        source = obs_path or est_section.get("observation")
        _require(source, "estimate needs an observation (config estimate.observation or --observation)")
        obs, _, _ = forward.load_observation_csv(source)
    _require(
        obs.m == cavity.m,
        f"observation has {obs.m} facets, cavity has {cavity.m}",
    )

    calibration_path = est_section.get("precalibration")
    if calibration_path:
        with open(calibration_path, "r", encoding="utf-8") as fh:
            cal_doc = json.load(fh)
        for key in cal_doc:
            _require(key == "coefficients", f"unknown calibration key {key!r}")
        coeffs = np.asarray(cal_doc.get("coefficients", []), dtype=float)
        _require(coeffs.ndim == 2 and coeffs.shape[1] == 3, "calibration coefficients must be s x 3")
        cal = inverse.CalibrationMap(coeffs, np.zeros(coeffs.shape[0]))
        obs = inverse.apply_precalibration(cal, obs)

    kernel = build_kernel(cfg, cavity, seed)
    illuminant = load_illuminant(cfg["illuminant"])
    camera = load_camera(cfg["camera"])
    eig = forward.eigen_prepare(kernel)
    est_cfg = estimation_config(cfg)
    est_illum = estimation_illuminant(cfg, cavity, illuminant)
    result = inverse.estimate(obs, eig, est_illum, camera, est_cfg)

    report = {
        "reflectance": result.reflectance.values.tolist(),
        "wavelengths": result.reflectance.grid.wavelengths.tolist(),
        "objective": result.objective_value,
        "iterations": result.iterations,
        "converged": result.converged,
        "config": {
            "alpha": est_cfg.alpha,
            "max_iters": est_cfg.max_iters,
            "grad_tol": est_cfg.grad_tol,
            "step_tol": est_cfg.step_tol,
            "lower_bound": est_cfg.lower_bound,
            "upper_bound": est_cfg.upper_bound,
            "normalization": est_cfg.normalization,
            "seed": seed,
        },
    }
    truth_name = truth_name or est_section.get("ground_truth")
    curves = [("estimate", result.reflectance.values, "#d62728")]
    if truth_name:
        _, truth = load_reflectance(truth_name)
        report.update(_patch_metrics(truth, result.reflectance))
        curves.insert(0, ("ground truth", truth.values, "#1f77b4"))
    out = out_path or "report.json"
    Path(out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if plot_path:
        write_spectra_svg(plot_path, result.reflectance.grid, curves, "Estimated reflectance")
    click.echo(f"estimate -> {out} (objective {result.objective_value:.3e}, "
               f"{result.iterations} iterations, converged={result.converged})")


@cli.command("roundtrip")
@_config_opt
@_seed_opt
@_out_opt
def cmd_roundtrip(config_path, seed, out_path) -> None:
    """Simulate and re-estimate all 24 ColorChecker patches."""
    cfg = load_config(config_path)
    seed = cfg["seed"] if seed is None else seed
    rows = _roundtrip_rows(cfg, seed)
    out = out_path or "roundtrip.csv"
    _write_metrics_csv(out, rows)
    mean_rmse = float(np.mean([r["rmse"] for r in rows]))
    mean_de = float(np.mean([r["ciede00"] for r in rows]))
    click.echo(f"roundtrip -> {out}")
    click.echo(f"mean rmse {mean_rmse:.4f}, mean ciede00 {mean_de:.3f}")


@cli.command("sweep")
@_config_opt
@_seed_opt
@_out_opt
def cmd_sweep(config_path, seed, out_path) -> None:
    """Roundtrip accuracy over angles 30-90 deg and 64/100/256 facets per panel."""
    cfg = load_config(config_path)
    seed = cfg["seed"] if seed is None else seed
    lines = ["angle_deg,facets_per_panel,mean_rmse,mean_ciede00,mean_pd"]
    for angle in SWEEP_ANGLES:
        for facets in SWEEP_FACETS:
            side = int(round(math.sqrt(facets)))
            rows = _roundtrip_rows(cfg, seed, angle=angle, rows_cols=(side, side))
            means = {k: float(np.mean([r[k] for r in rows])) for k in ("rmse", "ciede00", "pd")}
            lines.append(
                f"{angle:g},{facets},{means['rmse']:.6f},{means['ciede00']:.6f},{means['pd']:.6f}"
            )
            click.echo(f"angle {angle:g} deg, {facets}/panel: mean rmse {means['rmse']:.4f}")
    out = out_path or "sweep.csv"
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"sweep -> {out}")


@cli.command("metamer")
@_config_opt
@_seed_opt
@_out_opt
@click.argument("spectrum_a", required=False, type=click.Path(exists=True, dir_okay=False))
@click.argument("spectrum_b", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--derive-partner", is_flag=True, help="Construct B from A in the flat-metamer null space.")
@click.option("--plot", "plot_path", default=None, type=click.Path(dir_okay=False))
def cmd_metamer(config_path, seed, out_path, spectrum_a, spectrum_b, derive_partner, plot_path) -> None:
    """Check that a flat-metameric pair separates on the bent cavity."""
    cfg = load_config(config_path)
    seed = cfg["seed"] if seed is None else seed
    met = cfg["metamer"]

    source_a = spectrum_a or met.get("base")
    _require(source_a, "metamer needs spectrum A (argument or config metamer.base)")
    _, spec_a = load_reflectance(source_a)
    illuminant = load_illuminant(cfg["illuminant"])
    camera = load_camera(cfg["camera"])

    if derive_partner or (not spectrum_b and not met.get("partner")):
        spec_b = forward.flat_metamer_partner(
            spec_a, illuminant, camera, met.get("amplitude", 0.12)
        )
        partner_label = "derived"
    else:
        source_b = spectrum_b or met.get("partner")
        _, spec_b = load_reflectance(source_b)
        partner_label = str(source_b)

    flat_a = forward.flat_projection(spec_a, illuminant, camera)
    flat_b = forward.flat_projection(spec_b, illuminant, camera)
    flat_diff = float(np.abs(flat_a - flat_b).max() / max(np.abs(flat_a).max(), 1e-300))
    _require(
        flat_diff <= 1e-6,
        f"spectra are not flat-metameric: relative sensor difference {flat_diff:.3g}",
    )

    cavity = build_cavity(cfg)
    kernel = build_kernel(cfg, cavity, seed)
    eig = forward.eigen_prepare(kernel)
    e0 = forward.direct_irradiance(cavity, illuminant, cfg["irradiance_mode"])
    obs_a = forward.forward_uniform(eig, spec_a, e0, camera)
    obs_b = forward.forward_uniform(eig, spec_b, e0, camera)
    signal_range = float(max(obs_a.values.max(), obs_b.values.max()))
    divergence = float(np.abs(obs_a.values - obs_b.values).max() / signal_range)

    est_cfg = estimation_config(cfg, alpha=0.0)
    est_illum = estimation_illuminant(cfg, cavity, illuminant)
    import warnings as _warnings

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", inverse.LowSignalWarning)
        est_a = inverse.estimate(obs_a, eig, est_illum, camera, est_cfg)
        est_b = inverse.estimate(obs_b, eig, est_illum, camera, est_cfg)

    report = {
        "partner": partner_label,
        "flat_relative_difference": flat_diff,
        "bent_divergence_fraction": divergence,
        "wavelengths": spec_a.grid.wavelengths.tolist(),
        "spectrum_a": spec_a.values.tolist(),
        "spectrum_b": spec_b.values.tolist(),
        "estimate_a": est_a.reflectance.values.tolist(),
        "estimate_b": est_b.reflectance.values.tolist(),
        "rmse_a_vs_own": metrics.rmse(spec_a, est_a.reflectance),
        "rmse_a_vs_other": metrics.rmse(spec_b, est_a.reflectance),
        "rmse_b_vs_own": metrics.rmse(spec_b, est_b.reflectance),
        "rmse_b_vs_other": metrics.rmse(spec_a, est_b.reflectance),
    }
    report["disambiguated"] = bool(
        report["rmse_a_vs_own"] < report["rmse_a_vs_other"]
        and report["rmse_b_vs_own"] < report["rmse_b_vs_other"]
    )
    out = out_path or "metamer.json"
    Path(out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if plot_path:
        write_spectra_svg(
            plot_path,
            spec_a.grid,
            [
                ("A", spec_a.values, "#1f77b4"),
                ("B", spec_b.values, "#d62728"),
                ("estimate A", est_a.reflectance.values, "#17becf"),
                ("estimate B", est_b.reflectance.values, "#ff7f0e"),
            ],
            "Metamer separation",
        )
    click.echo(f"metamer -> {out}")
    click.echo(
        f"flat diff {flat_diff:.2e}, bent divergence {divergence:.2%}, "
        f"disambiguated={report['disambiguated']}"
    )


def main(argv=None) -> int:
    """Entry point with the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except (forward.NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        click.echo(f"numeric error: {exc}", err=True)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
