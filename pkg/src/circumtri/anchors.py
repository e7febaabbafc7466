"""Spherical anchor grid: anchor points, cells, matching and offset coding.

The neighborhood space of a patch center is partitioned along (rho, theta,
phi) into a fixed grid of cells, each owning an anchor point at its middle.
Detection predicts, per cell, whether a circumcenter is present and where it
sits relative to the anchor, as step-normalized offsets.

Axis ranges: rho in (0, R], theta in (-pi, pi], phi in [-pi/2, pi/2].
Each axis is split uniformly by its step; bins are half-open [low, high)
except the top bin, which is closed, so every in-range coordinate falls in
exactly one cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Spherical

# Defaults: eta0-normalized patches put relevant circumcenters within
# 20*eta0 of the center, split at 2*eta0 radially and pi/6 angularly,
# giving 10 * 12 * 6 = 720 anchors.
DEFAULT_DELTA_RHO = 0.02
DEFAULT_DELTA_THETA = math.pi / 6
DEFAULT_DELTA_PHI = math.pi / 6
DEFAULT_R = 0.2

_CEIL_EPS = 1e-9


def _split_count(extent: float, step: float) -> int:
    """ceil(extent / step), robust to float ratios sitting just above an integer."""
    return int(math.ceil(extent / step - _CEIL_EPS))


@dataclass(frozen=True)
class AnchorGrid:
    """The fixed grid of spherical anchor points and their cells."""

    delta_rho: float
    delta_theta: float
    delta_phi: float
    r_max: float
    t_rho: int
    t_theta: int
    t_phi: int

    @property
    def t(self) -> int:
        """Total number of anchors."""
        return self.t_rho * self.t_theta * self.t_phi

    @property
    def axis_origins(self):
        """Lower end of each axis range: (rho, theta, phi)."""
        return (0.0, -math.pi, -math.pi / 2)

    def params(self):
        return (self.delta_rho, self.delta_theta, self.delta_phi, self.r_max)

    # -- anchor coordinates ------------------------------------------------

    def anchor(self, cell) -> Spherical:
        """Anchor point at the middle of cell (i_rho, i_theta, i_phi), 0-based."""
        i, j, k = cell
        return Spherical(
            rho=self.delta_rho / 2 + i * self.delta_rho,
            theta=-math.pi + self.delta_theta / 2 + j * self.delta_theta,
            phi=-math.pi / 2 + self.delta_phi / 2 + k * self.delta_phi,
        )

    def anchor_array(self) -> np.ndarray:
        """All anchors as a (t, 3) array in flat-index order."""
        rho = self.delta_rho / 2 + np.arange(self.t_rho) * self.delta_rho
        theta = -math.pi + self.delta_theta / 2 + np.arange(self.t_theta) * self.delta_theta
        phi = -math.pi / 2 + self.delta_phi / 2 + np.arange(self.t_phi) * self.delta_phi
        grid = np.stack(np.meshgrid(rho, theta, phi, indexing="ij"), axis=-1)
        return grid.reshape(-1, 3)

    def axis_edges(self, axis: int) -> np.ndarray:
        """Shared bin edges along one axis (0 = rho, 1 = theta, 2 = phi).

        Adjacent cells reference the exact same floating-point boundary, so
        the half-open bins partition the range with no one-ulp gap or overlap
        (which intervals derived per-cell from `anchor +- step/2` would have).
        """
        lo = self.axis_origins[axis]
        step = (self.delta_rho, self.delta_theta, self.delta_phi)[axis]
        count = (self.t_rho, self.t_theta, self.t_phi)[axis]
        return lo + step * np.arange(count + 1)

    def cell_intervals(self, cell):
        """The cell's (rho, theta, phi) intervals as ((lo, hi), ...) triples."""
        return tuple((float(self.axis_edges(axis)[b]),
                      float(self.axis_edges(axis)[b + 1]))
                     for axis, b in enumerate(cell))

    # -- index layout --------------------------------------------------------

    def flat_index(self, cell) -> int:
        i, j, k = cell
        return (i * self.t_theta + j) * self.t_phi + k

    def unflatten(self, flat: int):
        k = flat % self.t_phi
        j = (flat // self.t_phi) % self.t_theta
        i = flat // (self.t_phi * self.t_theta)
        return (int(i), int(j), int(k))

    # -- matching ------------------------------------------------------------

    def match_cell(self, s):
        """Cell containing the spherical coordinate, or None when rho > R.

        None signals that the circumcenter is unreachable under this grid;
        callers drop the label and count it.
        """
        sph = s.as_array() if isinstance(s, Spherical) else np.asarray(s, dtype=np.float64)
        cells, in_range = self.match_cells(sph.reshape(1, 3))
        if not in_range[0]:
            return None
        return tuple(int(v) for v in cells[0])

    def match_cells(self, s: np.ndarray):
        """Vectorized matching: (N, 3) spherical -> ((N, 3) cell indices, (N,) in-range mask).

        Rows out of radial range get index (-1, -1, -1).
        """
        s = np.asarray(s, dtype=np.float64)
        in_range = s[:, 0] <= self.r_max
        counts = np.array([self.t_rho, self.t_theta, self.t_phi])
        idx = np.empty((len(s), 3), dtype=np.int64)
        for axis in range(3):
            idx[:, axis] = np.searchsorted(self.axis_edges(axis), s[:, axis],
                                           side="right") - 1
        # top of each range belongs to the last bin (closed top)
        idx = np.minimum(idx, counts - 1)
        idx = np.maximum(idx, 0)
        idx[~in_range] = -1
        return idx, in_range

    # -- offsets ---------------------------------------------------------

    def encode_offsets(self, cell, s) -> np.ndarray:
        """Step-normalized displacement of `s` from the cell's anchor.

        For coordinates inside the cell every component lies in [-0.5, 0.5].
        """
        sph = s.as_array() if isinstance(s, Spherical) else np.asarray(s, dtype=np.float64)
        a = self.anchor(cell)
        return np.array([(sph[0] - a.rho) / self.delta_rho,
                         (sph[1] - a.theta) / self.delta_theta,
                         (sph[2] - a.phi) / self.delta_phi])

    def decode_offsets(self, cell, g) -> Spherical:
        """Exact inverse of `encode_offsets`."""
        g = np.asarray(g, dtype=np.float64)
        a = self.anchor(cell)
        return Spherical(rho=a.rho + g[0] * self.delta_rho,
                         theta=a.theta + g[1] * self.delta_theta,
                         phi=a.phi + g[2] * self.delta_phi)

    def decode_offsets_array(self, flat_cells: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Vectorized decode: flat cell indices (N,) + offsets (N, 3) -> spherical (N, 3)."""
        anchors = self.anchor_array()[np.asarray(flat_cells, dtype=np.int64)]
        steps = np.array([self.delta_rho, self.delta_theta, self.delta_phi])
        return anchors + np.asarray(g, dtype=np.float64) * steps


def build_grid(delta_rho: float = DEFAULT_DELTA_RHO,
               delta_theta: float = DEFAULT_DELTA_THETA,
               delta_phi: float = DEFAULT_DELTA_PHI,
               r_max: float = DEFAULT_R) -> AnchorGrid:
    """Construct the anchor grid from step sizes and the radial range."""
    if min(delta_rho, delta_theta, delta_phi, r_max) <= 0:
        raise ValueError("grid steps and R must be positive")
    return AnchorGrid(
        delta_rho=float(delta_rho),
        delta_theta=float(delta_theta),
        delta_phi=float(delta_phi),
        r_max=float(r_max),
        t_rho=_split_count(r_max, delta_rho),
        t_theta=_split_count(2 * math.pi, delta_theta),
        t_phi=_split_count(math.pi, delta_phi),
    )
