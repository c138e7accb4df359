import logging

import numpy as np
from scipy.special import gamma

from lattice_echo.exceptions import SingularBasis, DimensionMismatch, WindowTooLarge


logger = logging.getLogger(__name__)

MAX_DIM = 8
DEFAULT_POINT_CAP = 10**8
EQUIVALENCE_TOL = 1e-6
LLL_DELTA = 0.75

# rows per enumeration chunk
_CHUNK_ROWS = 2**20


def ball_volume(dim, radius):
    """Lebesgue measure of the closed Euclidean ball of the given radius."""
    return np.pi**(dim/2) * radius**dim / gamma(dim/2 + 1)


def _frozen(array):
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


class LatticeSpec():
    """A full-rank lattice in R^d.

    The columns of `basis` generate the lattice; the dual basis is the
    inverse-transpose, so `basis.T @ dual_basis` is the identity.
    """

    def __init__(self, basis, dual_basis=None):
        self._basis = _frozen(basis)
        self._covolume = float(abs(np.linalg.det(self._basis)))

        if dual_basis is None:
            dual_basis = np.linalg.inv(self._basis).T
        self._dual_basis = _frozen(dual_basis)

    @property
    def dim(self):
        return self._basis.shape[0]

    @property
    def basis(self):
        return self._basis

    @property
    def covolume(self):
        return self._covolume

    @property
    def dual_basis(self):
        return self._dual_basis

    @property
    def density(self):
        return 1/self._covolume

    def dual(self):
        return dual_lattice(self)

    def position(self, coeffs):
        return np.asarray(coeffs) @ self._basis.T

    def coefficients(self, x):
        """Real coordinates of x in the basis (integers for lattice points)."""
        return np.asarray(x) @ self._dual_basis

    def scaled(self, factor):
        return make_lattice(factor*self._basis)

    def to_rows(self):
        return self._basis.tolist()

    def __eq__(self, other):
        if not isinstance(other, LatticeSpec):
            return NotImplemented
        return (self._basis.shape == other._basis.shape
                and np.array_equal(self._basis, other._basis))

    def __hash__(self):
        return hash(self._basis.tobytes())

    def __repr__(self):
        return f"LatticeSpec({self.to_rows()})"


class LatticePoint():
    """A lattice point given by its integer coefficients and its position."""

    def __init__(self, coeffs, position):
        self.coeffs = tuple(int(c) for c in coeffs)
        self.position = np.asarray(position, dtype=np.float64)

    @classmethod
    def of(cls, lattice, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.int64)
        return cls(coeffs, lattice.position(coeffs))

    @property
    def norm(self):
        return float(np.linalg.norm(self.position))

    def __eq__(self, other):
        if not isinstance(other, LatticePoint):
            return NotImplemented
        return self.coeffs == other.coeffs and np.array_equal(self.position, other.position)

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"LatticePoint({self.coeffs}, {self.position.tolist()})"


def _as_basis(lattice):
    if isinstance(lattice, LatticeSpec):
        return lattice.basis
    return np.asarray(lattice, dtype=np.float64)


def _check_square(basis):
    if basis.ndim != 2 or basis.shape[0] != basis.shape[1] or basis.shape[0] < 1:
        raise ValueError(f"Basis must be a square d x d matrix, got shape {basis.shape}.")
    if basis.shape[0] > MAX_DIM:
        raise ValueError(f"Dimension {basis.shape[0]} exceeds the supported maximum {MAX_DIM}.")
    if not np.all(np.isfinite(basis)):
        raise ValueError("Basis contains non-finite entries.")


def _check_full_rank(basis):
    d = basis.shape[0]
    scale = np.max(np.linalg.norm(basis, axis=0))
    det = np.linalg.det(basis)
    if scale == 0 or abs(det) < 1e-12*scale**d:
        raise SingularBasis(f"Basis is (nearly) singular, det={det:.3g}.")


def make_lattice(basis):
    basis = np.asarray(basis, dtype=np.float64)
    _check_square(basis)
    _check_full_rank(basis)
    return LatticeSpec(basis)


def dual_lattice(lattice):
    return LatticeSpec(lattice.dual_basis, dual_basis=lattice.basis)


def predicted_count(lattice, radius):
    return ball_volume(lattice.dim, radius)/lattice.covolume


def ball_coefficients(lattice, radius, cap=DEFAULT_POINT_CAP):
    """Integer coefficients and positions of all lattice points with |n| <= radius.

    Rows come in lexicographic order of the coefficients. The coefficient box
    uses the dual generators, |coeff_i| <= radius*|dual_i|, which covers the
    ball for any skew basis.
    """
    if radius < 0:
        raise ValueError(f"Radius must be nonnegative, got {radius}.")

    expected = predicted_count(lattice, radius)
    if expected > cap:
        raise WindowTooLarge(
            f"About {expected:.3g} lattice points in a ball of radius {radius}, cap is {cap:.3g}.")

    d = lattice.dim
    bounds = np.floor(radius*np.linalg.norm(lattice.dual_basis, axis=0) + 1e-9).astype(np.int64)

    axes = [np.arange(-b, b + 1) for b in bounds[1:]]
    if axes:
        rest = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, d - 1)
    else:
        rest = np.zeros((1, 0), dtype=np.int64)

    first_axis = np.arange(-bounds[0], bounds[0] + 1)
    step = max(1, _CHUNK_ROWS//len(rest))

    coeff_chunks = []
    position_chunks = []
    for start in range(0, len(first_axis), step):
        firsts = first_axis[start:start + step]
        coeffs = np.concatenate(
            (np.repeat(firsts, len(rest))[:, None], np.tile(rest, (len(firsts), 1))), axis=1)
        positions = coeffs @ lattice.basis.T
        keep = np.einsum('ij,ij->i', positions, positions) <= radius*radius
        coeff_chunks.append(coeffs[keep])
        position_chunks.append(positions[keep])

    return np.concatenate(coeff_chunks), np.concatenate(position_chunks)


def points_in_ball(lattice, radius, cap=DEFAULT_POINT_CAP):
    coeffs, positions = ball_coefficients(lattice, radius, cap)
    return [LatticePoint(c, p) for c, p in zip(coeffs, positions)]


def gauss_discrepancy(lattice, radius, cap=DEFAULT_POINT_CAP):
    """Lattice point count in B_R and its distance to the expected count."""
    if radius < 1:
        raise ValueError(f"Gauss discrepancy needs radius >= 1, got {radius}.")

    coeffs, _ = ball_coefficients(lattice, radius, cap)
    count = len(coeffs)
    return count, abs(count - predicted_count(lattice, radius))


def _normalize_signs(basis):
    basis = basis.copy()
    for j in range(basis.shape[1]):
        column = basis[:, j]
        significant = np.flatnonzero(np.abs(column) > 1e-12*np.linalg.norm(column))
        if significant.size and column[significant[0]] < 0:
            basis[:, j] = -column
    return basis


def _gauss_reduce(basis):
    b1, b2 = basis[:, 0].copy(), basis[:, 1].copy()
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1

    while True:
        mu = np.rint((b1 @ b2)/(b1 @ b1))
        b2 = b2 - mu*b1
        if b2 @ b2 < b1 @ b1:
            b1, b2 = b2, b1
        else:
            break

    return np.stack((b1, b2), axis=1)


def _gram_schmidt(rows):
    n = rows.shape[0]
    ortho = np.zeros_like(rows)
    mu = np.eye(n)
    for i in range(n):
        ortho[i] = rows[i]
        for j in range(i):
            mu[i, j] = (rows[i] @ ortho[j])/(ortho[j] @ ortho[j])
            ortho[i] = ortho[i] - mu[i, j]*ortho[j]
    return ortho, mu


def _lll_reduce(basis, delta=LLL_DELTA):
    rows = basis.T.copy()
    n = rows.shape[0]
    ortho, mu = _gram_schmidt(rows)
    norms = np.einsum('ij,ij->i', ortho, ortho)

    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = np.rint(mu[k, j])
            if q != 0:
                rows[k] = rows[k] - q*rows[j]
                mu[k, :j + 1] -= q*mu[j, :j + 1]

        if norms[k] >= (delta - mu[k, k - 1]**2)*norms[k - 1]:
            k += 1
        else:
            rows[[k - 1, k]] = rows[[k, k - 1]]
            ortho, mu = _gram_schmidt(rows)
            norms = np.einsum('ij,ij->i', ortho, ortho)
            k = max(k - 1, 1)

    return rows.T


def reduce_basis(basis):
    """Reduced basis of the same lattice.

    Exact Lagrange-Gauss reduction in the plane, LLL with delta 3/4 (not
    guaranteed shortest) in higher dimensions.
    """
    basis = _as_basis(basis).astype(np.float64)
    _check_square(basis)
    _check_full_rank(basis)

    d = basis.shape[0]
    if d == 1:
        reduced = basis.copy()
    elif d == 2:
        reduced = _gauss_reduce(basis)
    else:
        reduced = _lll_reduce(basis)

    return _normalize_signs(reduced)


def _integer_distance(matrix):
    return np.max(np.abs(matrix - np.rint(matrix)))


def lattices_equivalent(a, b, tol=EQUIVALENCE_TOL):
    """True iff both change-of-basis matrices are integral within tol."""
    basis_a = _as_basis(a)
    basis_b = _as_basis(b)
    if basis_a.shape != basis_b.shape:
        raise DimensionMismatch(
            f"Cannot compare lattices of shapes {basis_a.shape} and {basis_b.shape}.")

    forward = np.linalg.solve(basis_a, basis_b)
    backward = np.linalg.solve(basis_b, basis_a)
    return bool(_integer_distance(forward) <= tol and _integer_distance(backward) <= tol)
