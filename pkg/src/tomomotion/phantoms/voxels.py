"""Voxel objects: raw file IO, rasterization and first-moment projection."""

import json
import os
from dataclasses import dataclass

import numpy as np

from .._validation import readonly
from ..errors import ParseError, SupportViolationError

FORMAT_VERSION = 1
BUMP_FRACTION = 0.45


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Values ``data[i, j, k]`` at voxel centres ``origin + (i, j, k) * spacing``."""

    data: np.ndarray
    spacing: np.ndarray
    origin: np.ndarray
    support_radius: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 3:
            raise ParseError("voxel data must be 3-d")
        sp = np.broadcast_to(np.asarray(self.spacing, dtype=float), (3,))
        if np.any(sp <= 0):
            raise ParseError("voxel spacing must be positive")
        object.__setattr__(self, "data", readonly(d))
        object.__setattr__(self, "spacing", readonly(sp))
        object.__setattr__(self, "origin", readonly(np.broadcast_to(np.asarray(self.origin, dtype=float), (3,))))

    @classmethod
    def centered(cls, data, extent, support_radius=1.0):
        """Grid whose voxel centres tile the cube ``[-extent, extent]^3`` cell-centred."""
        shape = np.asarray(np.shape(data))
        sp = 2.0 * extent / shape
        return cls(data, sp, -extent + 0.5 * sp, support_radius)

    @property
    def shape(self):
        return self.data.shape

    def axes(self):
        return [self.origin[a] + self.spacing[a] * np.arange(self.shape[a]) for a in range(3)]

    def coordinates(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def first_moments(self):
        return np.einsum("ijk,ijka->a", self.data, self.coordinates()) * self.cell_volume

    def density(self, X):
        from .symmetry import voxel_density
        return voxel_density(self, X)

    def check_support(self, radius=None):
        R = self.support_radius if radius is None else radius
        r = np.linalg.norm(self.coordinates(), axis=-1)
        if np.any((self.data != 0) & (r >= R)):
            raise SupportViolationError(f"nonzero voxels at radius >= {R:g}")

    def header(self):
        return {
            "format_version": FORMAT_VERSION,
            "type": "voxel-grid",
            "shape": list(self.shape),
            "spacing": self.spacing.tolist(),
            "origin": self.origin.tolist(),
            "support_radius": self.support_radius,
            "dtype": "<f8",
            "order": "x-fastest",
        }

    def save(self, path):
        """Write ``path`` (raw little-endian float64, x fastest) and ``path.json``."""
        np.asarray(self.data, dtype="<f8").ravel(order="F").tofile(path)
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.header(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        hdr_path = str(path) + ".json"
        try:
            with open(hdr_path) as fh:
                hdr = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read voxel header {hdr_path}: {exc}") from exc
        try:
            if hdr["format_version"] != FORMAT_VERSION or hdr["type"] != "voxel-grid":
                raise ParseError("unsupported voxel header version or type")
            if hdr.get("dtype", "<f8") != "<f8" or hdr.get("order", "x-fastest") != "x-fastest":
                raise ParseError("voxel payload must be little-endian float64 in x-fastest order")
            shape = tuple(int(s) for s in hdr["shape"])
            spacing, origin = hdr["spacing"], hdr["origin"]
            rs = float(hdr.get("support_radius", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed voxel header: {exc}") from exc
        if len(shape) != 3 or min(shape) < 1:
            raise ParseError("voxel shape must have three positive entries")
        if not os.path.exists(path) or os.path.getsize(path) != 8 * int(np.prod(shape)):
            raise ParseError("voxel payload size does not match header")
        data = np.fromfile(path, dtype="<f8").reshape(shape, order="F")
        return cls(data, spacing, origin, rs)


def rasterize(obj, shape, extent=1.0):
    """Sample ``obj.density`` at voxel centres of a cell-centred cube grid."""
    shape = tuple(np.broadcast_to(shape, (3,)))
    grid = VoxelGrid.centered(np.zeros(shape), extent, getattr(obj, "support_radius", extent))
    return VoxelGrid(obj.density(grid.coordinates()), grid.spacing, grid.origin, grid.support_radius)


def bump(x, radius):
    """Smooth radial bump ``(1 - |x|^2 / radius^2)^3`` supported in ``|x| < radius``."""
    q = 1.0 - np.einsum("...i,...i->...", x, x) / radius**2
    return np.where(q > 0, q, 0.0) ** 3


def moment_project(grid, radius=None):
    """Remove the first moments of ``grid`` with a correction ``sum_j a_j x_j phi(x)``.

    ``phi`` is a bump supported in the ball of radius ``0.45 * support_radius``.
    The coefficients solve the 3x3 system of discrete moments, so the
    projected grid has vanishing first moments up to roundoff.
    """
    grid.check_support()
    X = grid.coordinates()
    phi = bump(X, BUMP_FRACTION * grid.support_radius if radius is None else radius)
    m = grid.first_moments()
    A = np.einsum("ijka,ijkb,ijk->ab", X, X, phi) * grid.cell_volume
    a = np.linalg.solve(A, m)
    data = grid.data - np.einsum("ijka,a->ijk", X, a) * phi
    return VoxelGrid(data, grid.spacing, grid.origin, grid.support_radius)
