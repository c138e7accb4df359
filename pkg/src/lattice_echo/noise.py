"""Perturbation laws for the displacements of lattice points.

All characteristic functions use the conjugated exponential,
phi(lam) = E[exp(-2*pi*i*<xi, lam>)], which is the sign convention of the
exponential sums in `lattice_echo.estimator`.
"""
import numpy as np
from scipy.stats import chi2

from lattice_echo.utils import uniforms_from_keys


def _positive(name, value):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"Noise parameter '{name}' must be positive and finite, got {value}.")
    return value


def _check_probability(p):
    if not 0 < p < 1:
        raise ValueError(f"Probability must lie in (0, 1), got {p}.")


class NoiseModel():
    """Base class of the i.i.d. displacement laws.

    Subclasses map uniform variates to displacements (`transform`) and give
    the closed form characteristic function and a tail bound.
    """

    kind = None

    def __init__(self, dim):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError(f"Noise dimension must be positive, got {dim}.")

    @property
    def moment_exponent_ok(self):
        """Whether E|xi|^(d+eps) < inf for some eps > 0."""
        return True

    @property
    def symmetric(self):
        return True

    @property
    def slack_cap(self):
        """Upper limit on the window slack, None when the tail bound is usable."""
        return None

    @property
    def num_uniforms(self):
        return self.dim

    def _frequencies(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape[-1] != self.dim:
            raise ValueError(f"Frequency has dimension {lam.shape[-1]}, noise has {self.dim}.")
        return lam

    def char_fn(self, lam):
        raise NotImplementedError

    def transform(self, uniforms):
        raise NotImplementedError

    def tail_quantile(self, p):
        raise NotImplementedError

    def scaled(self, factor):
        raise NotImplementedError

    def params(self):
        return {'kind': self.kind}

    def sample(self, keys):
        keys = np.atleast_2d(keys)
        return self.transform(uniforms_from_keys(keys, self.num_uniforms))

    def __eq__(self, other):
        return type(self) is type(other) and self.dim == other.dim and self.params() == other.params()

    def __hash__(self):
        return hash((self.kind, self.dim, repr(self.params())))

    def __repr__(self):
        args = ', '.join(f"{k}={v}" for k, v in self.params().items() if k != 'kind')
        return f"{self.__class__.__name__}({args}, dim={self.dim})"


class GaussianNoise(NoiseModel):
    """Isotropic Gaussian with density exp(-|x|^2/a)/(pi*a)^(d/2).

    Each coordinate has variance a/2.
    """

    kind = 'gaussian'

    def __init__(self, a, dim=2):
        super().__init__(dim)
        self.a = _positive('a', a)

    @property
    def variance(self):
        return self.a/2

    @property
    def num_uniforms(self):
        return 2*((self.dim + 1)//2)

    def char_fn(self, lam):
        lam = self._frequencies(lam)
        return np.exp(-self.a*np.pi**2*np.sum(lam**2, axis=-1)).astype(np.complex128)

    def transform(self, uniforms):
        # Box-Muller on consecutive pairs
        u1 = uniforms[:, 0::2]
        u2 = uniforms[:, 1::2]
        radius = np.sqrt(-2*np.log(u1))
        angle = 2*np.pi*u2
        normals = np.empty((uniforms.shape[0], self.num_uniforms))
        normals[:, 0::2] = radius*np.cos(angle)
        normals[:, 1::2] = radius*np.sin(angle)
        return np.sqrt(self.variance)*normals[:, :self.dim]

    def tail_quantile(self, p):
        _check_probability(p)
        return float(np.sqrt(self.variance*chi2.isf(p, self.dim)))

    def scaled(self, factor):
        return GaussianNoise(self.a*factor**2, self.dim)

    def params(self):
        return {'kind': self.kind, 'a': self.a}


class UniformBoxNoise(NoiseModel):
    """Uniform on the cube [-h, h]^d."""

    kind = 'uniform_box'

    def __init__(self, h, dim=2):
        super().__init__(dim)
        self.h = _positive('h', h)

    def char_fn(self, lam):
        lam = self._frequencies(lam)
        return np.prod(np.sinc(2*self.h*lam), axis=-1).astype(np.complex128)

    def transform(self, uniforms):
        return self.h*(2*uniforms - 1)

    def tail_quantile(self, p):
        _check_probability(p)
        return self.h*np.sqrt(self.dim)

    def scaled(self, factor):
        return UniformBoxNoise(self.h*factor, self.dim)

    def params(self):
        return {'kind': self.kind, 'h': self.h}


class UniformCellNoise(NoiseModel):
    """Uniform on the centred fundamental cell of a lattice.

    The characteristic function vanishes on the nonzero dual lattice points,
    which makes the periodic structure invisible to exponential sums.
    """

    kind = 'uniform_cell'

    def __init__(self, cell):
        cell = np.array(cell, dtype=np.float64)
        if cell.ndim != 2 or cell.shape[0] != cell.shape[1]:
            raise ValueError(f"Cell must be a square matrix, got shape {cell.shape}.")
        super().__init__(cell.shape[0])
        self.cell = cell

    def char_fn(self, lam):
        lam = self._frequencies(lam)
        return np.prod(np.sinc(lam @ self.cell), axis=-1).astype(np.complex128)

    def transform(self, uniforms):
        return (uniforms - 0.5) @ self.cell.T

    def tail_quantile(self, p):
        _check_probability(p)
        return 0.5*float(np.sum(np.linalg.norm(self.cell, axis=0)))

    def scaled(self, factor):
        return UniformCellNoise(self.cell*factor)

    def params(self):
        return {'kind': self.kind, 'cell': self.cell.tolist()}


class LaplaceNoise(NoiseModel):
    """Independent Laplace coordinates with scale b."""

    kind = 'laplace'

    def __init__(self, b, dim=2):
        super().__init__(dim)
        self.b = _positive('b', b)

    def char_fn(self, lam):
        lam = self._frequencies(lam)
        return np.prod(1/(1 + 4*np.pi**2*self.b**2*lam**2), axis=-1).astype(np.complex128)

    def transform(self, uniforms):
        centred = uniforms - 0.5
        return -self.b*np.sign(centred)*np.log1p(-2*np.abs(centred))

    def tail_quantile(self, p):
        _check_probability(p)
        # union bound over coordinates, then |x| <= sqrt(d)*max|x_j|
        return float(np.sqrt(self.dim)*self.b*np.log(self.dim/p))

    def scaled(self, factor):
        return LaplaceNoise(self.b*factor, self.dim)

    def params(self):
        return {'kind': self.kind, 'b': self.b}


class PointMassNoise(NoiseModel):
    """Deterministic displacement by a fixed vector v."""

    kind = 'point_mass'

    def __init__(self, v):
        v = np.array(v, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"Noise parameter 'v' must be finite, got {v.tolist()}.")
        super().__init__(v.shape[0])
        self.v = v

    @property
    def symmetric(self):
        return not np.any(self.v)

    @property
    def num_uniforms(self):
        return 0

    def char_fn(self, lam):
        lam = self._frequencies(lam)
        return np.exp(-2j*np.pi*(lam @ self.v))

    def transform(self, uniforms):
        return np.tile(self.v, (uniforms.shape[0], 1))

    def tail_quantile(self, p):
        _check_probability(p)
        return float(np.linalg.norm(self.v))

    def scaled(self, factor):
        return PointMassNoise(self.v*factor)

    def params(self):
        return {'kind': self.kind, 'v': self.v.tolist()}


class CauchyNoise(NoiseModel):
    """Independent Cauchy coordinates with scale gamma.

    phi(lam) = exp(-2*pi*gamma*|lam|_1). No moment of order d is finite, so
    no recovery guarantee is claimed.
    """

    kind = 'cauchy'

    def __init__(self, gamma, dim=2):
        super().__init__(dim)
        self.gamma = _positive('gamma', gamma)

    @property
    def moment_exponent_ok(self):
        return False

    @property
    def slack_cap(self):
        return 50*self.gamma

    def char_fn(self, lam):
        lam = self._frequencies(lam)
        return np.exp(-2*np.pi*self.gamma*np.sum(np.abs(lam), axis=-1)).astype(np.complex128)

    def transform(self, uniforms):
        return self.gamma*np.tan(np.pi*(uniforms - 0.5))

    def tail_quantile(self, p):
        _check_probability(p)
        per_coordinate = self.gamma*np.tan(0.5*np.pi*(1 - p/self.dim))
        return float(np.sqrt(self.dim)*per_coordinate)

    def scaled(self, factor):
        return CauchyNoise(self.gamma*factor, self.dim)

    def params(self):
        return {'kind': self.kind, 'gamma': self.gamma}


NOISE_KINDS = {
    cls.kind: cls for cls in (GaussianNoise, UniformBoxNoise, UniformCellNoise,
                              LaplaceNoise, PointMassNoise, CauchyNoise)
}


def make_noise(kind, dim=2, lattice=None, **params):
    """Build a noise model from its kind and parameters.

    `uniform_cell` takes its cell from `lattice` unless `cell` is given.
    """
    if kind not in NOISE_KINDS:
        raise ValueError(f"Noise kind '{kind}' not implemented. "
                         f"Choose from the following models {sorted(NOISE_KINDS)}")

    if kind == 'gaussian':
        return GaussianNoise(params['a'], dim)
    if kind == 'uniform_box':
        return UniformBoxNoise(params['h'], dim)
    if kind == 'laplace':
        return LaplaceNoise(params['b'], dim)
    if kind == 'cauchy':
        return CauchyNoise(params['gamma'], dim)
    if kind == 'point_mass':
        v = params.get('v')
        return PointMassNoise(np.zeros(dim) if v is None else v)

    cell = params.get('cell')
    if cell is None:
        if lattice is None:
            raise ValueError("Noise kind 'uniform_cell' needs a lattice or a cell.")
        cell = lattice.basis
    return UniformCellNoise(cell)


def char_fn(model, lam):
    value = model.char_fn(lam)
    return complex(value) if np.ndim(value) == 0 else value


def _key_words(key):
    if isinstance(key, (int, np.integer)):
        key = int(key)
        if not 0 <= key < 2**128:
            raise ValueError("Key must be a 128-bit unsigned integer.")
        return np.frombuffer(key.to_bytes(16, 'little'), dtype='<u4').astype(np.uint32)
    return np.asarray(key, dtype=np.uint32).reshape(4)


def sample_noise(model, key):
    """One draw of xi, a pure function of (model, key)."""
    return model.sample(_key_words(key)[None, :])[0]


def sample_noise_batch(model, keys):
    """One draw per row of a (N, 4) array of 128-bit keys."""
    return model.sample(np.asarray(keys, dtype=np.uint32).reshape(-1, 4))


def tail_quantile(model, p):
    return model.tail_quantile(p)
