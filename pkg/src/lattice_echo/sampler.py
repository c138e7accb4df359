import logging
import time

import numpy as np
import pandas as pd

from lattice_echo.core import ball_coefficients, ball_volume, DEFAULT_POINT_CAP
from lattice_echo.exceptions import DimensionMismatch, RadiusExceedsWindow
from lattice_echo.utils import point_keys


logger = logging.getLogger(__name__)

MISS_PROBABILITY = 1e-12


class Realization():
    """A finite, reproducible piece of the perturbed lattice W = {n + c + xi_n}.

    Rows are sorted lexicographically by the integer coefficients of n and
    cover every lattice point with |n| <= gen_radius + slack.
    """

    def __init__(self, lattice, noise, offset, seed, gen_radius, slack, coeffs, positions):
        self.lattice = lattice
        self.noise = noise
        self.offset = np.array(offset, dtype=np.float64)
        self.seed = int(seed)
        self.gen_radius = float(gen_radius)
        self.slack = float(slack)

        self._coeffs = np.array(coeffs, dtype=np.int64)
        self._positions = np.array(positions, dtype=np.float64)
        self._coeffs.setflags(write=False)
        self._positions.setflags(write=False)

        self._norms = np.linalg.norm(self._positions, axis=1)
        self._lattice_norms = np.linalg.norm(self.lattice_positions, axis=1)
        self._window_cache = {}
        self._codes = None
        self._low = None
        self._shape = None

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def coeffs(self):
        return self._coeffs

    @property
    def positions(self):
        return self._positions

    @property
    def lattice_positions(self):
        return self._coeffs @ self.lattice.basis.T

    @property
    def displacements(self):
        """xi_n = w_n - n - c for every row."""
        return self._positions - self.lattice_positions - self.offset

    @property
    def entries(self):
        return list(zip(map(tuple, self._coeffs.tolist()), self._positions))

    def __len__(self):
        return len(self._coeffs)

    def check_radius(self, radius):
        if radius < 0:
            raise ValueError(f"Radius must be nonnegative, got {radius}.")
        if radius > self.gen_radius:
            raise RadiusExceedsWindow(
                f"Radius {radius} exceeds the generation radius {self.gen_radius}.")

    def window_mask(self, radius):
        self.check_radius(radius)
        return self._norms <= radius

    def window(self, radius):
        radius = float(radius)
        positions = self._window_cache.get(radius)
        if positions is None:
            positions = self._positions[self.window_mask(radius)]
            positions.setflags(write=False)
            # shared by worker threads; the local reference survives a clear
            if len(self._window_cache) > 16:
                self._window_cache.clear()
            self._window_cache[radius] = positions
        return positions

    def lattice_mask(self, radius):
        """Rows whose lattice point n lies in B_radius."""
        self.check_radius(radius)
        return self._lattice_norms <= radius

    def lookup(self, coeffs):
        """Row index of each coefficient vector, -1 where the point is absent."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.int64))
        if self._codes is None:
            self._low = self._coeffs.min(axis=0)
            self._shape = tuple(self._coeffs.max(axis=0) - self._low + 1)
            self._codes = np.ravel_multi_index((self._coeffs - self._low).T, self._shape)

        shifted = coeffs - self._low
        inside = np.all((shifted >= 0) & (shifted < np.array(self._shape)), axis=1)
        index = np.full(len(coeffs), -1, dtype=np.int64)
        if np.any(inside):
            codes = np.ravel_multi_index(shifted[inside].T, self._shape)
            found = np.searchsorted(self._codes, codes)
            found = np.minimum(found, len(self._codes) - 1)
            hit = self._codes[found] == codes
            index[np.flatnonzero(inside)[hit]] = found[hit]
        return index

    def box_mask(self, low, high):
        return np.all((self._positions >= low) & (self._positions <= high), axis=1)

    def crop(self, low, high):
        """Positions inside the box [low, high]^d."""
        return self._positions[self.box_mask(low, high)]

    def scaled(self, factor):
        """The realization of factor*W on the lattice factor*L."""
        return Realization(
            self.lattice.scaled(factor), self.noise.scaled(factor), factor*self.offset,
            self.seed, factor*self.gen_radius, factor*self.slack,
            self._coeffs, factor*self._positions)

    def to_frame(self):
        d = self.dim
        data = {f"coeff_{i+1}": self._coeffs[:, i] for i in range(d)}
        data.update({f"w_{i+1}": self._positions[:, i] for i in range(d)})
        return pd.DataFrame(data)

    def __repr__(self):
        return (f"Realization({self.lattice}, {self.noise}, seed={self.seed}, "
                f"gen_radius={self.gen_radius}, points={len(self)})")


def window_slack(lattice, noise, gen_radius):
    """Slack s so that a point from outside B_(R_gen + s) reaches B_(R_gen)
    with probability at most 1e-12 (union bound over a unit shell)."""
    d = lattice.dim
    if gen_radius > 0:
        shell = d*ball_volume(d, gen_radius)/gen_radius/lattice.covolume
    else:
        shell = 1.0

    slack = max(1.0, noise.tail_quantile(MISS_PROBABILITY/max(1.0, shell)))

    if noise.slack_cap is not None and slack > noise.slack_cap:
        logger.warning("Capping window slack of %s at %.3g; windows may miss far displaced points.",
                       noise, noise.slack_cap)
        slack = max(1.0, noise.slack_cap)

    return slack


def realize(lattice, noise, offset=None, seed=0, gen_radius=0.0, cap=DEFAULT_POINT_CAP):
    """Generate W = {n + c + xi_n} for all n in a ball around the origin.

    xi_n is keyed by (seed, coeffs of n), so the result does not depend on the
    window radius or on the order of evaluation.
    """
    if gen_radius < 0:
        raise ValueError(f"Generation radius must be nonnegative, got {gen_radius}.")
    if noise.dim != lattice.dim:
        raise DimensionMismatch(f"Noise of dimension {noise.dim} on a lattice of dimension {lattice.dim}.")

    offset = np.zeros(lattice.dim) if offset is None else np.asarray(offset, dtype=np.float64)
    if offset.shape != (lattice.dim,):
        raise DimensionMismatch(f"Offset of shape {offset.shape} on a lattice of dimension {lattice.dim}.")

    t_start = time.time()

    slack = window_slack(lattice, noise, gen_radius)
    coeffs, lattice_positions = ball_coefficients(
        lattice, gen_radius + slack + np.linalg.norm(offset), cap)

    displacements = noise.sample(point_keys(seed, coeffs))
    positions = lattice_positions + offset + displacements

    logger.info("Realized %d points of %s with %s up to radius %.4g in %.2fs",
                len(coeffs), lattice, noise, gen_radius, time.time() - t_start)

    return Realization(lattice, noise, offset, seed, gen_radius, slack, coeffs, positions)


def window(realization, radius):
    """Positions w with |w| <= radius, in lexicographic order of their n."""
    return realization.window(radius)


def boundary_counts(realization, radius):
    """(escaped, entered): points leaving or entering B_radius through the noise."""
    inside_before = realization.lattice_mask(radius)
    inside_after = realization.window_mask(radius)

    escaped = int(np.count_nonzero(inside_before & ~inside_after))
    entered = int(np.count_nonzero(~inside_before & inside_after))
    return escaped, entered
