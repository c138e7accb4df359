"""Random exponential sums over a realization and the correlation statistics
of its displacement sequence.

All sums are divided by the expected point count m_d(B_R)/covolume, so on
any lattice they converge to the characteristic function of the noise on the
dual lattice and to zero elsewhere.
"""
import logging
import time

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from lattice_echo.core import ball_coefficients, predicted_count, LatticePoint
from lattice_echo.exceptions import GridTooLarge, LengthMismatch, RadiusExceedsWindow
from lattice_echo.noise import char_fn
from lattice_echo.utils import SUM_BLOCK, TreeAccumulator, pairwise_sum, resolve_workers


logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 2*10**7

# fixed work unit sizes; results never depend on the number of workers
ROW_CHUNK = 32
LAMBDA_CHUNK = 512


def normalization(lattice, radius):
    if radius <= 0:
        raise ValueError(f"Radius must be positive, got {radius}.")
    return predicted_count(lattice, radius)


def _phase_terms(positions, lambdas):
    """conj(e(<w, lam>)) for all pairs, shape (num_points, num_lambdas)."""
    angle = 2*np.pi*(positions @ lambdas.T)
    return np.cos(angle) - 1j*np.sin(angle)


def _sum_phases(positions, lambdas):
    accumulator = TreeAccumulator()
    accumulator.push(np.zeros(len(lambdas), dtype=np.complex128))
    for start in range(0, len(positions), SUM_BLOCK):
        accumulator.push(_phase_terms(positions[start:start + SUM_BLOCK], lambdas).sum(axis=0))
    return accumulator.result()


class RegularGrid():
    """Regular frequency grid: origin + spacing*index along every axis."""

    def __init__(self, origin, spacing, shape):
        self.origin = np.array(origin, dtype=np.float64).reshape(-1)
        self.spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), self.origin.shape).copy()
        self.shape = tuple(int(n) for n in np.broadcast_to(shape, self.origin.shape))

        if np.any(self.spacing <= 0):
            raise ValueError(f"Grid spacing must be positive, got {self.spacing.tolist()}.")
        if min(self.shape) < 1:
            raise ValueError(f"Grid shape must be positive, got {self.shape}.")

    @classmethod
    def from_box(cls, low, high, spacing, dim):
        if high < low:
            raise ValueError(f"Empty grid box [{low}, {high}].")
        n = int(np.floor((high - low)/spacing + 1e-9)) + 1
        return cls(np.full(dim, low), spacing, (n,)*dim)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axes(self):
        return [o + h*np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def nodes(self):
        mesh = np.meshgrid(*self.axes(), indexing='ij')
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def __repr__(self):
        return f"RegularGrid(origin={self.origin.tolist()}, spacing={self.spacing.tolist()}, shape={self.shape})"


class ExpSumField():
    """Values of M_R on a set of frequencies.

    `nodes` holds the frequencies row-major; `shape` is the grid shape for a
    regular grid and None for an explicit list.
    """

    def __init__(self, radius, nodes, values, shape=None, normalization=None,
                 count=None, lattice=None, noise=None, seed=None):
        self.radius = float(radius)
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.complex128).reshape(-1)
        self.shape = None if shape is None else tuple(shape)
        self.normalization = normalization
        self.count = count
        self.lattice = lattice
        self.noise = noise
        self.seed = seed

        if len(self.nodes) != len(self.values):
            raise LengthMismatch(f"{len(self.nodes)} nodes but {len(self.values)} values.")

    @property
    def dim(self):
        return self.nodes.shape[1]

    def grid_values(self):
        if self.shape is None:
            return self.values
        return self.values.reshape(self.shape)

    def to_frame(self):
        data = {f"lambda_{i+1}": self.nodes[:, i] for i in range(self.dim)}
        data['re'] = self.values.real
        data['im'] = self.values.imag
        return pd.DataFrame(data)

    def __repr__(self):
        return f"ExpSumField(radius={self.radius}, nodes={len(self.nodes)}, shape={self.shape})"


def load_field(path, radius=None):
    """Read a field written by `ExpSumField.to_frame`, recovering its grid shape."""
    frame = pd.read_csv(path)
    lambda_columns = [c for c in frame.columns if c.startswith('lambda_')]
    nodes = frame[lambda_columns].to_numpy(dtype=np.float64)
    values = frame['re'].to_numpy() + 1j*frame['im'].to_numpy()

    axes = [np.unique(nodes[:, i]) for i in range(nodes.shape[1])]
    shape = tuple(len(axis) for axis in axes)
    if int(np.prod(shape)) != len(nodes):
        shape = None
    else:
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(axes))
        if not np.array_equal(mesh, nodes):
            shape = None

    return ExpSumField(np.nan if radius is None else radius, nodes, values, shape=shape)


def _check_window(realization, radius):
    if radius > realization.gen_radius:
        raise RadiusExceedsWindow(
            f"Radius {radius} exceeds the generation radius {realization.gen_radius}.")


def exp_sum(realization, radius, lam):
    """M_R(lam) = sum over w in W, |w| <= R of conj(e(<w, lam>)), normalized."""
    _check_window(realization, radius)
    lam = np.asarray(lam, dtype=np.float64).reshape(1, -1)
    points = realization.window(radius)
    return complex(_sum_phases(points, lam)[0]/normalization(realization.lattice, radius))


def exp_sum_points(realization, radius, lambdas, workers=None):
    """M_R at every row of an explicit (K, d) array of frequencies."""
    _check_window(realization, radius)
    lambdas = np.atleast_2d(np.asarray(lambdas, dtype=np.float64))
    points = realization.window(radius)
    scale = normalization(realization.lattice, radius)

    chunks = [lambdas[i:i + LAMBDA_CHUNK] for i in range(0, len(lambdas), LAMBDA_CHUNK)]
    with threadpool_limits(limits=1, user_api='blas'):
        sums = Parallel(n_jobs=resolve_workers(workers), prefer='threads')(
            delayed(_sum_phases)(points, chunk) for chunk in chunks)

    if not sums:
        return np.zeros(0, dtype=np.complex128)
    return np.concatenate(sums)/scale


def _axis_phases(coordinates, axis):
    angle = 2*np.pi*np.multiply.outer(coordinates, axis)
    return np.cos(angle) - 1j*np.sin(angle)


def _grid_rows(points, axes):
    """Unnormalized sums on the sub-grid spanned by `axes`.

    conj(e(<w, lam>)) factorizes into one phase per axis, so every block of
    points contributes an outer product that reduces to one matrix product.
    """
    shape = tuple(len(a) for a in axes)
    accumulator = TreeAccumulator()
    accumulator.push(np.zeros(shape, dtype=np.complex128))

    for start in range(0, len(points), SUM_BLOCK):
        block = points[start:start + SUM_BLOCK]
        factors = [_axis_phases(block[:, a], axis) for a, axis in enumerate(axes)]

        if len(factors) == 1:
            partial = factors[0].sum(axis=0)
        else:
            left = factors[0]
            for factor in factors[1:-1]:
                left = (left[:, :, None]*factor[:, None, :]).reshape(len(block), -1)
            partial = (left.T @ factors[-1]).reshape(shape)

        accumulator.push(partial)

    return accumulator.result()


def exp_sum_grid(realization, radius, grid, workers=None, node_cap=DEFAULT_NODE_CAP):
    """M_R on a RegularGrid (or an explicit array of frequencies)."""
    _check_window(realization, radius)
    scale = normalization(realization.lattice, radius)
    meta = dict(normalization=scale, lattice=realization.lattice,
                noise=realization.noise, seed=realization.seed)

    if not isinstance(grid, RegularGrid):
        lambdas = np.atleast_2d(np.asarray(grid, dtype=np.float64))
        if len(lambdas) > node_cap:
            raise GridTooLarge(f"{len(lambdas)} frequencies exceed the cap of {node_cap}.")
        values = exp_sum_points(realization, radius, lambdas, workers)
        return ExpSumField(radius, lambdas, values, count=len(realization.window(radius)), **meta)

    if grid.size > node_cap:
        raise GridTooLarge(f"{grid.size} grid nodes exceed the cap of {node_cap}.")
    if grid.dim != realization.dim:
        raise ValueError(f"Grid of dimension {grid.dim} for a realization of dimension {realization.dim}.")

    t_start = time.time()
    points = realization.window(radius)
    axes = grid.axes()
    row_slices = [slice(i, i + ROW_CHUNK) for i in range(0, grid.shape[0], ROW_CHUNK)]

    with threadpool_limits(limits=1, user_api='blas'):
        blocks = Parallel(n_jobs=resolve_workers(workers), prefer='threads')(
            delayed(_grid_rows)(points, [axes[0][rows]] + axes[1:]) for rows in row_slices)

    values = np.concatenate(blocks, axis=0)/scale

    logger.info("Evaluated %d grid nodes over %d points at R=%.4g in %.2fs",
                grid.size, len(points), radius, time.time() - t_start)

    return ExpSumField(radius, grid.nodes(), values.reshape(-1), shape=grid.shape,
                       count=len(points), **meta)


def radius_sweep(realization, radii, lam):
    """[(R, M_R(lam))] for every radius, from one cumulative pass over the
    points sorted by norm."""
    radii = [float(r) for r in radii]
    if not radii:
        return []
    _check_window(realization, max(radii))

    lam = np.asarray(lam, dtype=np.float64).reshape(1, -1)
    points = realization.window(max(radii))
    norms = np.linalg.norm(points, axis=1)
    order = np.argsort(norms, kind='stable')

    cumulative = np.cumsum(_phase_terms(points[order], lam)[:, 0])
    sorted_norms = norms[order]

    sweep = []
    for radius in radii:
        count = int(np.searchsorted(sorted_norms, radius, side='right'))
        total = cumulative[count - 1] if count else 0j
        sweep.append((radius, complex(total/normalization(realization.lattice, radius))))
    return sweep


def lattice_exp_sum(lattice, radius, lam):
    """Normalized sum of conj(e(<n, lam>)) over the unperturbed lattice points in B_R."""
    lam = np.asarray(lam, dtype=np.float64).reshape(1, -1)
    _, positions = ball_coefficients(lattice, radius)
    return complex(_sum_phases(positions, lam)[0]/normalization(lattice, radius))


class CorrelationEstimate():
    """Windowed correlation F_{R,k}(lam) of the centred phase sequence A_lam."""

    def __init__(self, lam, k, radius, value):
        self.lam = np.asarray(lam, dtype=np.float64)
        self.k = k
        self.radius = radius
        self.value = complex(value)

    def __repr__(self):
        return f"CorrelationEstimate(lam={self.lam.tolist()}, k={self.k.coeffs}, R={self.radius}, value={self.value:.6g})"


def _centred_phases(realization, rows, lam):
    lam = np.asarray(lam, dtype=np.float64)
    phi = char_fn(realization.noise, lam)
    return _phase_terms(realization.displacements[rows], lam.reshape(1, -1))[:, 0] - phi


def noise_sequence(realization, lam, radius):
    """A_lam(n) = conj(e(<xi_n, lam>)) - phi(lam) for n in L with |n| <= R.

    The order is lexicographic in the coefficients of n, as for `points_in_ball`.
    """
    rows = np.flatnonzero(realization.lattice_mask(radius))
    return _centred_phases(realization, rows, lam)


def phase_sequence(lattice, radius, lam):
    """e(<n, lam>) for n in L with |n| <= R, in `points_in_ball` order."""
    lam = np.asarray(lam, dtype=np.float64).reshape(1, -1)
    _, positions = ball_coefficients(lattice, radius)
    return np.conj(_phase_terms(positions, lam)[:, 0])


def wiener_correlation(realization, lam, k, radius):
    if not isinstance(k, LatticePoint):
        k = LatticePoint.of(realization.lattice, k)
    if k.norm + radius > realization.gen_radius:
        raise RadiusExceedsWindow(
            f"|k| + R = {k.norm + radius:.6g} exceeds the generation radius {realization.gen_radius}.")

    rows = np.flatnonzero(realization.lattice_mask(radius))
    shifted = realization.lookup(realization.coeffs[rows] + np.array(k.coeffs))
    if np.any(shifted < 0):
        raise RadiusExceedsWindow("Shifted lattice points fall outside the realization.")

    a_n = _centred_phases(realization, rows, lam)
    a_shifted = _centred_phases(realization, shifted, lam)

    value = pairwise_sum(a_n*np.conj(a_shifted))/normalization(realization.lattice, radius)
    return CorrelationEstimate(lam, k, radius, value)


def cross_correlation(u, v, radius, lattice):
    """Average of u(n)*conj(v(n)) over aligned sequences on L and B_R."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise LengthMismatch(f"Sequences of lengths {u.shape} and {v.shape}.")
    return complex(pairwise_sum(u*np.conj(v))/normalization(lattice, radius))


def main_term(realization, lam, radius):
    """Average of A_lam(n)*conj(e(<n, lam>)), which tends to 0 for every lam."""
    rows = np.flatnonzero(realization.lattice_mask(radius))
    u = _centred_phases(realization, rows, lam)
    lam = np.asarray(lam, dtype=np.float64).reshape(1, -1)
    v = np.conj(_phase_terms(realization.lattice_positions[rows], lam)[:, 0])
    return cross_correlation(u, v, radius, realization.lattice)
