"""V-shaped cavity discretization and the geometrical kernel matrix.

The cavity is two equal rectangular Lambertian panels joined along an edge at
a dihedral angle.  The kernel matrix K couples facet pairs: entry (i, j) is
the fraction of radiosity leaving facet j that arrives at facet i, i.e. the
facet-to-facet form factor with 1/pi and the source area folded in.

Construction is hybrid.  Well-separated pairs use a low-order tensor
Gauss-Legendre quadrature over both facets, accurate because the integrand
is smooth at that range.  Pairs near the joint edge use an exact
point-to-rectangle contour integral averaged over the receiving facet by
high-order quadrature: the smooth rule degrades like 1/d^2 for nearly
touching facets and would push column sums far above 1, breaking the
substochasticity that the whole bounce series relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Facet",
    "VCavity",
    "KernelMatrix",
    "build_v_cavity",
    "kernel_pair",
    "kernel_exact",
    "kernel_monte_carlo",
    "save_kernel_csv",
    "load_kernel_csv",
]

# Center distance below NEAR_FIELD_FACTOR facet diagonals switches a pair
# from the smooth tensor rule to the contour-integral path.
NEAR_FIELD_FACTOR = 4.0

# Gauss-Legendre points per facet axis for near-field receiver averaging.
_QUAD_POINTS = 16

# Sample pairs closer than this are rejected and redrawn: 1/d^4 is
# integrable but a single sample can overflow.
MIN_SAMPLE_DISTANCE_M = 1e-9


@dataclass(frozen=True, eq=False)
class Facet:
    """Flat rectangular surface element with an interior-facing unit normal."""

    center: np.ndarray
    normal: np.ndarray
    area: float
    panel_id: int

    def __post_init__(self) -> None:
        center = np.array(self.center, dtype=float)
        normal = np.array(self.normal, dtype=float)
        if center.shape != (3,) or normal.shape != (3,):
            raise ValueError("center and normal must be 3-vectors")
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise ValueError("normal must have unit length")
        if not (self.area > 0):
            raise ValueError("facet area must be positive")
        if self.panel_id not in (0, 1):
            raise ValueError("panel_id must be 0 or 1")
        center.setflags(write=False)
        normal.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True, eq=False)
class VCavity:
    """Two equal panels sharing the joint edge (the y axis), opened at angle_deg.

    Panel p occupies directions (s_p * sin(h), y, d * cos(h)) with
    h = angle_deg / 2 and s_0 = +1, s_1 = -1, so the dihedral angle between
    the panels is exactly angle_deg and both normals point into the cavity.
    Facets are indexed row-major, panel 0 first; rows count distance from the
    joint edge, columns run along it.
    """

    panel_width_m: float
    panel_height_m: float
    angle_deg: float
    rows: int
    cols: int
    facets: tuple

    @property
    def m(self) -> int:
        return 2 * self.rows * self.cols

    @property
    def facet_size(self) -> tuple:
        return (self.panel_width_m / self.rows, self.panel_height_m / self.cols)

    @cached_property
    def centers(self) -> np.ndarray:
        return np.array([f.center for f in self.facets])

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([f.normal for f in self.facets])

    @cached_property
    def panels(self) -> np.ndarray:
        return np.array([f.panel_id for f in self.facets], dtype=int)

    @cached_property
    def spans(self) -> tuple:
        """Per-facet edge vectors (m x 3 each): across-edge span and along-edge span."""
        du, dv = self.facet_size
        half = math.radians(self.angle_deg) / 2.0
        slope = {
            0: np.array([math.sin(half), 0.0, math.cos(half)]),
            1: np.array([-math.sin(half), 0.0, math.cos(half)]),
        }
        span_u = np.array([du * slope[f.panel_id] for f in self.facets])
        span_v = np.tile(np.array([0.0, dv, 0.0]), (self.m, 1))
        return span_u, span_v

    @cached_property
    def corners(self) -> np.ndarray:
        """Facet corner points, m x 4 x 3, in cyclic order."""
        span_u, span_v = self.spans
        c = self.centers
        return np.stack(
            [
                c - 0.5 * span_u - 0.5 * span_v,
                c + 0.5 * span_u - 0.5 * span_v,
                c + 0.5 * span_u + 0.5 * span_v,
                c - 0.5 * span_u + 0.5 * span_v,
            ],
            axis=1,
        )


def build_v_cavity(
    panel_width: float,
    panel_height: float,
    angle_deg: float,
    rows: int,
    cols: int,
) -> VCavity:
    """Discretize a V cavity into 2 * rows * cols equal rectangular facets."""
    if not (panel_width > 0 and panel_height > 0):
        raise ValueError("panel dimensions must be positive")
    if not (0.0 < angle_deg < 180.0):
        raise ValueError(f"angle_deg must lie strictly in (0, 180), got {angle_deg}")
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be at least 1")

    half = math.radians(angle_deg) / 2.0
    du = panel_width / rows
    dv = panel_height / cols
    area = du * dv
    edge = np.array([0.0, 1.0, 0.0])

    facets = []
    for panel_id, sign in ((0, 1.0), (1, -1.0)):
        slope = np.array([sign * math.sin(half), 0.0, math.cos(half)])
        normal = np.array([-sign * math.cos(half), 0.0, math.sin(half)])
        for r in range(rows):
            dist = (r + 0.5) * du
            for c in range(cols):
                y = (c + 0.5) * dv
                center = dist * slope + y * edge
                facets.append(Facet(center, normal, area, panel_id))
    return VCavity(panel_width, panel_height, angle_deg, rows, cols, tuple(facets))


def kernel_pair(pi, ni, pj, nj, visibility: float) -> float:
    """Point-pair geometrical coupling with unnormalized direction vectors.

    Returns (N_i . P_iP_j)(N_j . P_jP_i) * V / |P_iP_j|^4, clamping either
    dot product to zero when the points face away from each other.
    """
    pi = np.asarray(pi, dtype=float)
    pj = np.asarray(pj, dtype=float)
    d = pj - pi
    r2 = float(d @ d)
    if r2 == 0.0:
        raise ValueError("kernel_pair is undefined for coincident points")
    dot_i = max(float(np.asarray(ni, dtype=float) @ d), 0.0)
    dot_j = max(float(np.asarray(nj, dtype=float) @ -d), 0.0)
    return dot_i * dot_j * float(visibility) / (r2 * r2)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """m x m geometrical kernel; validated substochastic on construction."""

    m: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=float)
        if entries.shape != (self.m, self.m):
            raise ValueError(f"entries must be {self.m} x {self.m}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("kernel entries must be finite")
        if np.any(np.diagonal(entries) != 0.0):
            raise ValueError("kernel diagonal must be exactly zero")
        if np.any(entries < 0.0):
            raise ValueError("kernel entries must be nonnegative")
        worst = float(entries.sum(axis=0).max(initial=0.0))
        if worst > 1.0:
            raise ValueError(
                f"kernel is not substochastic: max column sum {worst:.6g} > 1"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def column_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    def max_column_sum(self) -> float:
        return float(self.column_sums().max(initial=0.0))

    def symmetry_residual(self) -> float:
        return float(np.abs(self.entries - self.entries.T).max(initial=0.0))


_GL_CACHE: dict = {}


def _quad_grid(npts: int):
    """Tensor Gauss-Legendre nodes/weights on [-1, 1]^2, flattened."""
    if npts not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(npts)
        xi, eta = np.meshgrid(x, x, indexing="ij")
        wij = np.outer(w, w)
        _GL_CACHE[npts] = (xi.ravel(), eta.ravel(), wij.ravel())
    return _GL_CACHE[npts]


def _point_rect_form_factor(points: np.ndarray, normal: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Exact form factor from differential receivers to a rectangle.

    Lambert's contour formula; assumes the rectangle lies entirely above the
    receivers' horizon planes (true for cross-panel pairs in a V cavity).
    Accepts either corner winding.
    """
    total = np.zeros(points.shape[0])
    for e in range(4):
        a = corners[e][None, :] - points
        b = corners[(e + 1) % 4][None, :] - points
        cross = np.cross(a, b)
        norm = np.linalg.norm(cross, axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        gamma = np.arctan2(norm, dot)
        safe = norm > 1e-300
        contrib = np.where(safe, gamma * (cross @ normal) / np.where(safe, norm, 1.0), 0.0)
        total += contrib
    return np.abs(total) / (2.0 * math.pi)


def _near_pair_entry(cavity: VCavity, i: int, j: int) -> float:
    """Facet-averaged exact form factor between facets i and j.

    Averages the point-to-rectangle form factor over the receiving facet with
    tensor Gauss-Legendre quadrature, in both directions (they agree
    analytically for equal areas; averaging keeps the matrix symmetric).
    """
    xi, eta, w = _quad_grid(_QUAD_POINTS)
    span_u, span_v = cavity.spans
    centers = cavity.centers
    normals = cavity.normals
    corners = cavity.corners
    total_w = w.sum()

    vals = []
    for a, b in ((i, j), (j, i)):
        pts = (
            centers[a][None, :]
            + 0.5 * xi[:, None] * span_u[a][None, :]
            + 0.5 * eta[:, None] * span_v[a][None, :]
        )
        ff = _point_rect_form_factor(pts, normals[a], corners[b])
        vals.append(float((w * ff).sum() / total_w))
    return 0.5 * (vals[0] + vals[1])


def _pair_classification(cavity: VCavity):
    """Boolean masks (cross-panel, near-field) plus squared center distances."""
    centers = cavity.centers
    d = centers[None, :, :] - centers[:, None, :]
    dist2 = np.einsum("ijk,ijk->ij", d, d)
    cross = cavity.panels[:, None] != cavity.panels[None, :]
    du, dv = cavity.facet_size
    near_radius = NEAR_FIELD_FACTOR * math.hypot(du, dv)
    near = cross & (dist2 < near_radius * near_radius)
    return cross, near, dist2


# Gauss-Legendre points per facet axis for well-separated pairs.  Grazing
# cross-panel geometry biases single-point evaluation by several percent at
# any distance, while 4 points per axis hold the error near 1e-4.
_FAR_QUAD_POINTS = 4


def _far_quadrature(cavity: VCavity, cross: np.ndarray, near: np.ndarray) -> np.ndarray:
    """Tensor-product quadrature entries for the separated cross-panel pairs."""
    xi, eta, w = _quad_grid(_FAR_QUAD_POINTS)
    w = w / w.sum()
    span_u, span_v = cavity.spans
    pts = (
        cavity.centers[:, None, :]
        + 0.5 * xi[None, :, None] * span_u[:, None, :]
        + 0.5 * eta[None, :, None] * span_v[:, None, :]
    )  # (m, P, 3)
    normals = cavity.normals
    area = float(cavity.facets[0].area)
    entries = np.zeros((cavity.m, cavity.m))
    ii, jj = np.nonzero(np.triu(cross & ~near, k=1))
    chunk = 4096
    for start in range(0, ii.size, chunk):
        a = ii[start : start + chunk]
        b = jj[start : start + chunk]
        d = pts[b][:, None, :, :] - pts[a][:, :, None, :]  # (n, P, P, 3)
        r2 = np.einsum("npqk,npqk->npq", d, d)
        di = np.maximum(np.einsum("nk,npqk->npq", normals[a], d), 0.0)
        dj = np.maximum(-np.einsum("nk,npqk->npq", normals[b], d), 0.0)
        kvals = di * dj / (r2 * r2)
        vals = np.einsum("p,q,npq->n", w, w, kvals) * (area / math.pi)
        entries[a, b] = vals
        entries[b, a] = vals
    return entries


def kernel_exact(cavity: VCavity) -> KernelMatrix:
    """Deterministic kernel by facet-pair quadrature.

    Same-panel entries are exactly zero (coplanar facets cannot exchange
    light); cross-panel visibility is 1.  Separated pairs use a smooth
    tensor quadrature; pairs near the joint edge use the contour integral,
    which handles the 1/d^2 blow-up.  The result is exactly symmetric for
    the equal-area facets produced by build_v_cavity.
    """
    cross, near, _ = _pair_classification(cavity)
    entries = _far_quadrature(cavity, cross, near)
    for i, j in zip(*np.nonzero(np.triu(near, k=1))):
        val = _near_pair_entry(cavity, int(i), int(j))
        entries[i, j] = val
        entries[j, i] = val
    entries = 0.5 * (entries + entries.T)
    np.fill_diagonal(entries, 0.0)
    return KernelMatrix(cavity.m, entries)


def _pair_rng(seed: int, i: int, j: int) -> np.random.Generator:
    """Counter-based stream for one facet pair; independent of build order."""
    bits = np.random.Philox(
        key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x5CAF], dtype=np.uint64),
        counter=np.array([i, j, 0, 0], dtype=np.uint64),
    )
    return np.random.Generator(bits)


def _stratified_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    """n points in [0,1)^4: jittered k^4 strata plus unstratified remainder."""
    k = max(1, int(math.floor(n ** 0.25)))
    n_strat = k ** 4
    if n_strat > n:  # floor can overshoot through rounding on exact powers
        k -= 1
        n_strat = k ** 4
    grids = np.stack(
        np.meshgrid(*([np.arange(k)] * 4), indexing="ij"), axis=-1
    ).reshape(-1, 4)
    jitter = rng.random((n_strat, 4))
    samples = (grids + jitter) / k
    extra = n - n_strat
    if extra > 0:
        samples = np.vstack([samples, rng.random((extra, 4))])
    return samples


def _mc_pair_entry(cavity: VCavity, i: int, j: int, n: int, seed: int) -> float:
    """Monte Carlo estimate of entry (i, j) from the pair's own sample stream."""
    span_u, span_v = cavity.spans
    corners = cavity.corners
    normals = cavity.normals
    area = float(cavity.facets[0].area)
    rng = _pair_rng(seed, i, j)
    u = _stratified_uniforms(rng, n)

    def points(idx: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (
            corners[idx, 0][None, :]
            + a[:, None] * span_u[idx][None, :]
            + b[:, None] * span_v[idx][None, :]
        )

    pi = points(i, u[:, 0], u[:, 1])
    pj = points(j, u[:, 2], u[:, 3])
    d = pj - pi
    r2 = np.einsum("ij,ij->i", d, d)

    # Redraw sample pairs that land closer than the distance floor.
    bad = r2 < MIN_SAMPLE_DISTANCE_M ** 2
    while np.any(bad):
        refresh = rng.random((int(bad.sum()), 4))
        pi[bad] = points(i, refresh[:, 0], refresh[:, 1])
        pj[bad] = points(j, refresh[:, 2], refresh[:, 3])
        d = pj - pi
        r2 = np.einsum("ij,ij->i", d, d)
        bad = r2 < MIN_SAMPLE_DISTANCE_M ** 2

    dot_i = np.maximum(d @ normals[i], 0.0)
    dot_j = np.maximum(-(d @ normals[j]), 0.0)
    k_vals = dot_i * dot_j / (r2 * r2)
    return float(k_vals.mean()) * area / math.pi


def kernel_monte_carlo(cavity: VCavity, samples_per_pair: int, seed: int) -> KernelMatrix:
    """Stochastic kernel estimate, deterministic for a given seed.

    Well-separated pairs average kernel_pair over stratified jittered point
    pairs drawn from a counter-based stream keyed by (seed, i, j), so results
    do not depend on evaluation order.  Near-field pairs reuse the exact
    quadrature path: the raw 1/d^4 estimator has unbounded variance for
    nearly touching facets and routinely breaks substochasticity.  The matrix
    is symmetrized by averaging with its transpose.
    """
    if samples_per_pair < 1:
        raise ValueError("samples_per_pair must be at least 1")
    cross, near, _ = _pair_classification(cavity)
    entries = np.zeros((cavity.m, cavity.m))
    for i, j in zip(*np.nonzero(np.triu(cross, k=1))):
        i, j = int(i), int(j)
        if near[i, j]:
            val = _near_pair_entry(cavity, i, j)
        else:
            val = _mc_pair_entry(cavity, i, j, samples_per_pair, seed)
        entries[i, j] = val
        entries[j, i] = val
    entries = 0.5 * (entries + entries.T)
    np.fill_diagonal(entries, 0.0)
    return KernelMatrix(cavity.m, entries)


def save_kernel_csv(path, kernel: KernelMatrix) -> None:
    """Cache a kernel as CSV: a header line with m, then m rows of m reals."""
    lines = [str(kernel.m)]
    for row in kernel.entries:
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_kernel_csv(path) -> KernelMatrix:
    """Load a cached kernel; construction re-checks all kernel invariants."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty kernel file")
    try:
        m = int(lines[0])
    except ValueError:
        raise ValueError(f"{path}: header must be the facet count m") from None
    if len(lines) != m + 1:
        raise ValueError(f"{path}: expected {m} rows, found {len(lines) - 1}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != m:
            raise ValueError(f"{path}:{lineno}: expected {m} cells, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
    return KernelMatrix(m, np.array(rows))
