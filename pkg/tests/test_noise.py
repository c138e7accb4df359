import numpy as np
import pytest

from lattice_echo.core import make_lattice
from lattice_echo.noise import (CauchyNoise, GaussianNoise, LaplaceNoise, PointMassNoise,
                                UniformBoxNoise, char_fn, make_noise, sample_noise,
                                sample_noise_batch, tail_quantile)


L2 = make_lattice([[2.0, 0.5], [0.0, 0.5]])

MODELS = [
    make_noise('gaussian', a=0.1),
    make_noise('uniform_box', h=0.3),
    make_noise('uniform_cell', lattice=L2),
    make_noise('laplace', b=0.15),
    make_noise('point_mass', v=[0.3, -0.2]),
    make_noise('cauchy', gamma=0.05),
]


def random_keys(n, seed=0):
    return np.random.default_rng(seed).integers(0, 2**32, size=(n, 4), dtype=np.uint32)


def empirical_char_fn(samples, lam):
    return np.mean(np.exp(-2j*np.pi*(samples @ lam)))


class TestCharFn():
    @pytest.mark.parametrize('model', MODELS, ids=lambda m: m.kind)
    def test_at_origin(self, model):
        assert char_fn(model, np.zeros(2)) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_value(self):
        value = char_fn(make_noise('gaussian', a=0.1), [1.0, 0.0])
        assert value.real == pytest.approx(0.37274, abs=1e-4)
        assert value == pytest.approx(np.exp(-0.1*np.pi**2), abs=1e-15)

    def test_cell_vanishes_on_dual(self):
        model = make_noise('uniform_cell', lattice=make_lattice(np.eye(2)))
        assert abs(char_fn(model, [1.0, 0.0])) < 1e-12
        for coeffs in ([1, 0], [0, 1], [2, -1]):
            assert abs(char_fn(make_noise('uniform_cell', lattice=L2), L2.dual_basis @ coeffs)) < 1e-12

    @pytest.mark.parametrize('model', MODELS, ids=lambda m: m.kind)
    def test_bounded_and_hermitian(self, model):
        lams = np.random.default_rng(4).uniform(-3, 3, size=(50, 2))
        values = model.char_fn(lams)
        assert np.all(np.abs(values) <= 1 + 1e-12)
        assert np.allclose(model.char_fn(-lams), np.conj(values), atol=1e-12)

    @pytest.mark.parametrize('model', [m for m in MODELS if m.symmetric], ids=lambda m: m.kind)
    def test_symmetric_laws_are_real(self, model):
        lams = np.random.default_rng(5).uniform(-3, 3, size=(50, 2))
        assert np.all(np.abs(model.char_fn(lams).imag) <= 1e-12)

    @pytest.mark.parametrize('model', MODELS, ids=lambda m: m.kind)
    def test_matches_empirical(self, model):
        samples = sample_noise_batch(model, random_keys(100000, seed=6))
        tol = 0.05 if model.kind == 'cauchy' else 0.02
        for lam in np.random.default_rng(7).uniform(-3, 3, size=(20, 2)):
            lam = lam*min(1.0, 3/np.linalg.norm(lam))
            assert abs(empirical_char_fn(samples, lam) - char_fn(model, lam)) <= tol

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            char_fn(make_noise('gaussian', a=0.1), [1.0, 0.0, 0.0])


class TestSampling():
    @pytest.mark.parametrize('model', MODELS, ids=lambda m: m.kind)
    def test_same_key_same_draw(self, model):
        key = 0x0123456789abcdef0123456789abcdef
        assert np.array_equal(sample_noise(model, key), sample_noise(model, key))

    def test_point_mass(self):
        model = make_noise('point_mass', v=[0.3, -0.2])
        assert np.array_equal(sample_noise(model, 17), [0.3, -0.2])

    def test_gaussian_variance(self):
        samples = sample_noise_batch(make_noise('gaussian', a=0.1), random_keys(10**6, seed=8))
        assert np.allclose(np.var(samples, axis=0), 0.05, rtol=0.02)
        assert np.allclose(np.mean(samples, axis=0), 0.0, atol=0.002)

    def test_gaussian_odd_dimension(self):
        samples = sample_noise_batch(GaussianNoise(0.2, dim=3), random_keys(1000, seed=9))
        assert samples.shape == (1000, 3)

    def test_box_support(self):
        samples = sample_noise_batch(make_noise('uniform_box', h=0.4), random_keys(10000))
        assert np.all(np.abs(samples) <= 0.4)

    def test_cell_support(self):
        samples = sample_noise_batch(make_noise('uniform_cell', lattice=L2), random_keys(10000))
        coords = L2.coefficients(samples)
        assert np.all(np.abs(coords) <= 0.5 + 1e-12)

    def test_key_range(self):
        with pytest.raises(ValueError):
            sample_noise(make_noise('gaussian', a=0.1), 2**128)


class TestTailQuantile():
    def test_point_mass(self):
        assert tail_quantile(PointMassNoise([0.3, 0.4]), 0.5) == pytest.approx(0.5)

    def test_gaussian_bound(self):
        assert tail_quantile(GaussianNoise(0.1), 1e-12) < 2.0

    def test_gaussian_exceedance(self):
        model = GaussianNoise(0.1)
        radius = tail_quantile(model, 1e-12)
        for chunk in range(10):
            samples = sample_noise_batch(model, random_keys(10**6, seed=100 + chunk))
            assert np.max(np.linalg.norm(samples, axis=1)) <= radius

    def test_box(self):
        assert tail_quantile(UniformBoxNoise(0.5), 1e-3) <= 0.5*np.sqrt(2) + 1e-12

    def test_laplace_exceedance(self):
        model = LaplaceNoise(0.15)
        radius = tail_quantile(model, 1e-6)
        samples = sample_noise_batch(model, random_keys(10**5, seed=11))
        assert np.max(np.linalg.norm(samples, axis=1)) <= radius

    def test_cauchy_monotone(self):
        model = CauchyNoise(0.05)
        assert tail_quantile(model, 1e-3) < tail_quantile(model, 1e-6)

    def test_probability_range(self):
        with pytest.raises(ValueError):
            tail_quantile(GaussianNoise(0.1), 0.0)


class TestMakeNoise():
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_noise('student_t', a=1.0)

    def test_negative_parameter(self):
        with pytest.raises(ValueError):
            make_noise('gaussian', a=-1.0)

    def test_cell_needs_lattice(self):
        with pytest.raises(ValueError):
            make_noise('uniform_cell')

    def test_point_mass_default(self):
        assert np.array_equal(make_noise('point_mass', dim=3).v, np.zeros(3))

    def test_moment_flags(self):
        assert not make_noise('cauchy', gamma=0.1).moment_exponent_ok
        assert all(m.moment_exponent_ok for m in MODELS if m.kind != 'cauchy')

    def test_symmetry_flags(self):
        assert not make_noise('point_mass', v=[0.1, 0.0]).symmetric
        assert make_noise('point_mass', dim=2).symmetric

    @pytest.mark.parametrize('model', MODELS, ids=lambda m: m.kind)
    def test_scaled_char_fn(self, model):
        lam = np.array([0.7, -0.4])
        assert char_fn(model.scaled(2.0), lam/2) == pytest.approx(char_fn(model, lam), abs=1e-12)

    def test_equality(self):
        assert make_noise('gaussian', a=0.1) == GaussianNoise(0.1)
        assert make_noise('gaussian', a=0.1) != GaussianNoise(0.2)


if __name__ == '__main__':
    import timeit

    keys = random_keys(10**6)
    for model in MODELS:
        t = timeit.timeit(lambda: sample_noise_batch(model, keys), number=1)
        print(f'time sample 1e6 {model.kind} (in sec):', t)
