"""Voxel ingestion: a sampled, interpolated spectral provider for grid objects."""

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from ..phantoms.spectral import SpectralDerivatives
from ..phantoms.voxels import VoxelGrid, moment_project

DEFAULT_DK = 0.5


class SampledSpectrum:
    """``f^`` sampled on a cube of frequencies and interpolated by cubic splines.

    Values at ``kappa`` are spline interpolants of the tabulated transform
    times the analytic phase of the grid offset; derivatives use central
    differences of the interpolant with step ``h``.
    """

    def __init__(self, table, k_axis, offset, support_radius=1.0, h=None):
        self.k_axis = np.asarray(k_axis, dtype=float)
        self.dk = float(self.k_axis[1] - self.k_axis[0])
        self.offset = np.asarray(offset, dtype=float)
        self.support_radius = support_radius
        self.h = 0.05 * self.dk if h is None else float(h)
        self._re = spline_filter(np.ascontiguousarray(table.real), order=3, mode="nearest")
        self._im = spline_filter(np.ascontiguousarray(table.imag), order=3, mode="nearest")

    @property
    def k_max(self):
        return float(self.k_axis[-1])

    def _value(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        idx = ((kappa - self.k_axis[0]) / self.dk).reshape(-1, 3).T
        v = (map_coordinates(self._re, idx, order=3, prefilter=False, mode="nearest")
             + 1j * map_coordinates(self._im, idx, order=3, prefilter=False, mode="nearest"))
        v = v.reshape(kappa.shape[:-1]) * np.exp(-1j * kappa @ self.offset)
        # outside the tabulated band the transform is reported as zero
        return np.where(np.abs(kappa).max(-1) <= self.k_max, v, 0.0)

    def spectral(self, kappa, order=0):
        kappa = np.asarray(kappa, dtype=float)
        value = self._value(kappa)
        if order == 0:
            return SpectralDerivatives(value)
        h = self.h
        E = np.eye(3) * h

        def f(*shifts):
            return self._value(kappa + sum(shifts, np.zeros(3)))

        lead = kappa.shape[:-1]
        grad = np.empty(lead + (3,), dtype=complex)
        for a in range(3):
            grad[..., a] = (f(-2 * E[a]) - 8 * f(-E[a]) + 8 * f(E[a]) - f(2 * E[a])) / (12 * h)
        if order == 1:
            return SpectralDerivatives(value, grad)
        hess = np.empty(lead + (3, 3), dtype=complex)
        for a in range(3):
            hess[..., a, a] = (f(E[a]) - 2 * value + f(-E[a])) / h**2
            for b in range(a + 1, 3):
                hess[..., a, b] = hess[..., b, a] = (
                    f(E[a], E[b]) - f(E[a], -E[b]) - f(-E[a], E[b]) + f(-E[a], -E[b])) / (4 * h * h)
        if order == 2:
            return SpectralDerivatives(value, grad, hess)
        # third derivatives by central differences of the Hessian
        third = np.empty(lead + (3, 3, 3), dtype=complex)
        for c in range(3):
            hp = self.spectral(kappa + E[c], 2).hess
            hm = self.spectral(kappa - E[c], 2).hess
            third[..., c] = (hp - hm) / (2 * h)
        third = (third + np.swapaxes(third, -1, -2) + np.swapaxes(third, -1, -3)) / 3
        return SpectralDerivatives(value, grad, hess, third)


def _dft_matrix(x, k):
    return np.exp(-1j * np.outer(k, x))


def ingest_voxels(grid, cfg=None, k_max=None, dk=DEFAULT_DK):
    """Sampled spectral provider for a voxel grid (a :class:`VoxelGrid` or file path).

    The grid is moment-projected, then transformed with the continuous
    normalization ``(2 pi)^(-3/2) sum f(x_n) exp(-i <x_n, k>) dV`` on a cube of
    frequencies covering ``|kappa| <= k_max`` (a direct separable DFT,
    equivalent to a zero-padded FFT restricted to that band).
    """
    if not isinstance(grid, VoxelGrid):
        grid = VoxelGrid.load(grid)
    grid = moment_project(grid)
    if k_max is None:
        if cfg is not None and cfg.model == "DT":
            k_max = 1.1 * cfg.k0
        elif cfg is not None and len(cfg.samples):
            k_max = float(np.abs(cfg.sample_array).max())
        else:
            k_max = 20.0
    n = int(np.ceil(k_max / dk)) + 3
    k_axis = dk * np.arange(-n, n + 1)
    axes = grid.axes()
    # centre each axis near zero so the tabulated values vary slowly in k
    offset = np.array([ax[np.argmin(np.abs(ax))] for ax in axes])
    Mx, My, Mz = (_dft_matrix(ax - o, k_axis) for ax, o in zip(axes, offset))
    T = np.einsum("ai,ijk->ajk", Mx, grid.data.astype(complex))
    T = np.einsum("bj,ajk->abk", My, T)
    T = np.einsum("ck,abk->abc", Mz, T)
    T *= grid.cell_volume * (2 * np.pi) ** -1.5
    return SampledSpectrum(T, k_axis, offset, grid.support_radius)
