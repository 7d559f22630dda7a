"""Free-space Green's kernels and discrete operator assembly.

Two wave models share one code path:

* diffuse:  G(r) = exp(-k r) / (4 pi r)   (real, positive)
* scalar:   G(r) = exp(i k r) / (4 pi r)  (oscillatory)

Kernels are stored complex in both modes.  The singular diagonal of the
volume-volume kernel is replaced by the analytic integral of G over a ball of
the same volume as the voxel, which removes the 1/r singularity at O(h)
quadrature consistency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BoundaryArray, Grid

__all__ = [
    "WaveMode",
    "OperatorSet",
    "greens_kernel",
    "self_cell_integral",
    "self_cell_l1",
    "self_cell_l2",
    "assemble",
]

_KINDS = ("diffuse", "scalar")


@dataclass(frozen=True)
class WaveMode:
    """Wave model (diffuse or scalar) together with its wave number k > 0."""

    kind: str
    k: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not self.k > 0:
            raise ValueError(f"wave number must be positive, got {self.k}")

    @classmethod
    def diffuse(cls, k: float) -> "WaveMode":
        return cls("diffuse", float(k))

    @classmethod
    def scalar(cls, k: float) -> "WaveMode":
        return cls("scalar", float(k))

    @property
    def sign(self) -> float:
        """Sign s of the scattering term in (I + s k^2 G eta) u = u_i."""
        return 1.0 if self.kind == "diffuse" else -1.0


def greens_kernel(mode: WaveMode, r):
    """Point value of the free-space kernel at distance r > 0 (complex)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("greens_kernel requires r > 0; use self_cell_integral at coincident points")
    if mode.kind == "diffuse":
        vals = np.exp(-mode.k * r) / (4.0 * math.pi * r) + 0j
    else:
        vals = np.exp(1j * mode.k * r) / (4.0 * math.pi * r)
    return vals if vals.ndim else complex(vals)


def _cell_radius(w: float) -> float:
    """Radius of the ball with the same volume as a voxel of weight w."""
    return (3.0 * w / (4.0 * math.pi)) ** (1.0 / 3.0)


def self_cell_integral(mode: WaveMode, w: float) -> complex:
    """Integral of G over the equal-volume ball centered on the node.

    With r_c = (3w / 4 pi)^(1/3):

    * diffuse:  (1 - (1 + k r_c) e^{-k r_c}) / k^2
    * scalar:   (e^{i k r_c} (1 - i k r_c) - 1) / k^2

    Both reduce to r_c^2 / 2 as k r_c -> 0.
    """
    if w <= 0:
        raise ValueError("voxel weight must be positive")
    rc = _cell_radius(w)
    k = mode.k
    if mode.kind == "diffuse":
        return complex((1.0 - (1.0 + k * rc) * math.exp(-k * rc)) / k**2)
    return complex((np.exp(1j * k * rc) * (1.0 - 1j * k * rc) - 1.0) / k**2)


def self_cell_l1(mode: WaveMode, w: float) -> float:
    """Integral of |G| over the equal-volume ball (for sup-type row sums)."""
    rc = _cell_radius(w)
    if mode.kind == "diffuse":
        k = mode.k
        return (1.0 - (1.0 + k * rc) * math.exp(-k * rc)) / k**2
    return 0.5 * rc**2


def self_cell_l2(mode: WaveMode, w: float) -> float:
    """Integral of |G|^2 over the equal-volume ball (for L2 row sums)."""
    rc = _cell_radius(w)
    if mode.kind == "diffuse":
        k = mode.k
        return (1.0 - math.exp(-2.0 * k * rc)) / (8.0 * math.pi * k)
    return rc / (4.0 * math.pi)


@dataclass(frozen=True)
class OperatorSet:
    """Assembled discrete kernels for one (mode, grid, boundary) triple.

    g_vv[i, j] = G(|x_i - x_j|) * w_j off the diagonal, the self-cell integral
    on it, so that (g_vv @ f)[i] approximates the volume integral of G f.
    g_sv[s, j] and g_vd[j, d] are plain kernel values; volume weights are
    applied at application time on the volume side.
    """

    mode: WaveMode
    grid: Grid
    boundary: BoundaryArray
    g_vv: np.ndarray
    g_sv: np.ndarray
    g_vd: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    @property
    def n_src(self) -> int:
        return self.boundary.n_src

    @property
    def n_det(self) -> int:
        return self.boundary.n_det


def _pairwise_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)


def assemble(mode: WaveMode, grid: Grid, boundary: BoundaryArray) -> OperatorSet:
    """Assemble the volume-volume and boundary-volume kernels."""
    r_src = np.linalg.norm(boundary.sources, axis=1)
    r_det = np.linalg.norm(boundary.detectors, axis=1)
    if np.any(r_src <= grid.radius_a) or np.any(r_det <= grid.radius_a):
        raise ValueError("boundary points must lie strictly outside the support ball")

    r = _pairwise_dist(grid.centers, grid.centers)
    np.fill_diagonal(r, 1.0)  # placeholder, diagonal overwritten below
    g_vv = greens_kernel(mode, r) * grid.weights[None, :]
    diag = np.array([self_cell_integral(mode, w) for w in grid.weights])
    np.fill_diagonal(g_vv, diag)

    g_sv = greens_kernel(mode, _pairwise_dist(boundary.sources, grid.centers))
    g_vd = greens_kernel(mode, _pairwise_dist(grid.centers, boundary.detectors))
    return OperatorSet(mode=mode, grid=grid, boundary=boundary, g_vv=g_vv, g_sv=g_sv, g_vd=g_vd)
