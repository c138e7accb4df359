"""Spectral measures of lattice-indexed sequences.

Measures live on the fundamental domain of the dual lattice, parameterized by
dual-basis coordinates t in [0, 1)^d; a lattice point with coefficients q
pairs with t through <n, x> = q.t. Densities are relative to the uniform
measure of that unit cell and integrals use the midpoint rule.
"""
import logging

import numpy as np
import pandas as pd
from scipy import fft

from lattice_echo.core import ball_coefficients
from lattice_echo.estimator import normalization
from lattice_echo.exceptions import GridMismatch, LengthMismatch


logger = logging.getLogger(__name__)


class DensityMeasure():
    """Nonnegative density sampled on the regular grid t_j = j/grid_n.

    `cell_volume` is the reference measure of one grid cell, a scalar for the
    uniform measure or an array with the grid's shape.
    """

    def __init__(self, density, cell_volume=None, lattice=None, radius=None):
        density = np.asarray(density, dtype=np.float64)
        if np.any(density < 0):
            raise ValueError("Density must be nonnegative.")

        self.density = density
        if cell_volume is None:
            cell_volume = 1/density.size
        self.cell_volume = np.asarray(cell_volume, dtype=np.float64)
        self.lattice = lattice
        self.radius = radius

        if self.cell_volume.ndim and self.cell_volume.shape != density.shape:
            raise GridMismatch(f"Cell volumes of shape {self.cell_volume.shape} "
                               f"for a density of shape {density.shape}.")

    @property
    def dim(self):
        return self.density.ndim

    @property
    def grid_n(self):
        return self.density.shape[0]

    @property
    def mass(self):
        return float(np.sum(self.density*self.cell_volume))

    def coordinates(self):
        axes = [np.arange(n)/n for n in self.density.shape]
        mesh = np.meshgrid(*axes, indexing='ij')
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def to_frame(self):
        coordinates = self.coordinates()
        data = {f"x_{i+1}": coordinates[:, i] for i in range(self.dim)}
        data['density'] = self.density.reshape(-1)
        return pd.DataFrame(data)

    def __repr__(self):
        return f"DensityMeasure(shape={self.density.shape}, mass={self.mass:.6g})"


def periodogram_density(u, lattice, radius, grid_n):
    """(1/norm)*|sum u(n)*conj(e(<n, x>))|^2 on an n^d grid of the unit cell.

    u is aligned with the lattice points of B_R in lexicographic order. The
    coefficients are folded modulo grid_n and transformed with one FFT, which
    evaluates the trigonometric polynomial exactly at the grid nodes.
    """
    grid_n = int(grid_n)
    if grid_n < 2:
        raise ValueError(f"Periodogram grid needs grid_n >= 2, got {grid_n}.")

    coeffs, _ = ball_coefficients(lattice, radius)
    u = np.asarray(u, dtype=np.complex128).reshape(-1)
    if len(u) != len(coeffs):
        raise LengthMismatch(f"Sequence of length {len(u)} for {len(coeffs)} lattice points.")

    if 2*np.max(np.abs(coeffs), initial=0) >= grid_n:
        logger.debug("Periodogram grid %d aliases coefficients up to %d", grid_n, np.max(np.abs(coeffs)))

    folded = np.zeros((grid_n,)*lattice.dim, dtype=np.complex128)
    np.add.at(folded, tuple(np.mod(coeffs, grid_n).T), u)

    density = np.abs(fft.fftn(folded))**2/normalization(lattice, radius)
    return DensityMeasure(density, 1/grid_n**lattice.dim, lattice=lattice, radius=radius)


def measure_fourier_coeff(measure, k):
    """Integral of density(t)*conj(e(<k, t>)) over the unit cell.

    k is a primal lattice point or its integer coefficients.
    """
    coeffs = np.asarray(getattr(k, 'coeffs', k), dtype=np.float64).reshape(-1)
    if coeffs.shape[0] != measure.dim:
        raise ValueError(f"Lattice point of dimension {coeffs.shape[0]} for a measure of dimension {measure.dim}.")

    t = measure.coordinates()
    angle = 2*np.pi*(t @ coeffs)
    weights = (measure.density*measure.cell_volume).reshape(-1)
    return complex(np.sum(weights*(np.cos(angle) - 1j*np.sin(angle))))


def _check_grids(mu, nu):
    if mu.density.shape != nu.density.shape:
        raise GridMismatch(f"Grids of shapes {mu.density.shape} and {nu.density.shape}.")

    cells_mu = np.broadcast_to(mu.cell_volume, mu.density.shape)
    cells_nu = np.broadcast_to(nu.cell_volume, nu.density.shape)
    if not np.allclose(cells_mu, cells_nu, rtol=1e-12, atol=0):
        raise GridMismatch("Measures use different reference cell volumes.")


def hellinger_affinity(mu, nu):
    """rho(mu, nu) = sum sqrt(density_mu*density_nu)*cell_volume."""
    _check_grids(mu, nu)
    return float(np.sum(np.sqrt(mu.density*nu.density)*mu.cell_volume))


def spectral_flatness(measure, bins=8):
    """Mean relative L1 deviation of coarse-cell averages from the overall mean.

    The grid is split into bins^d equal blocks; a multiple of the Lebesgue
    measure gives 0.
    """
    shape = measure.density.shape
    if any(n % bins for n in shape):
        raise ValueError(f"Grid shape {shape} is not divisible into {bins} bins per axis.")

    split = []
    for n in shape:
        split.extend((bins, n//bins))
    blocks = measure.density.reshape(split).mean(axis=tuple(range(1, 2*len(shape), 2)))

    mean = measure.density.mean()
    if mean == 0:
        return 0.0
    return float(np.mean(np.abs(blocks - mean))/mean)
