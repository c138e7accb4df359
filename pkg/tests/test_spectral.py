import numpy as np
import pytest

from lattice_echo.core import LatticePoint, make_lattice, points_in_ball
from lattice_echo.estimator import cross_correlation, noise_sequence, phase_sequence
from lattice_echo.exceptions import GridMismatch, LengthMismatch
from lattice_echo.noise import make_noise
from lattice_echo.sampler import realize
from lattice_echo.spectral import (DensityMeasure, hellinger_affinity, measure_fourier_coeff,
                                   periodogram_density, spectral_flatness)


Z1 = make_lattice([[1.0]])
Z2 = make_lattice(np.eye(2))


def random_sequence(count, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(count) + 1j*rng.standard_normal(count)


def windowed_correlation(u, k, radius):
    """(1/2R)*sum u(n)*conj(u(n + k)) over n, n + k in [-R, R] on Z."""
    values = dict(zip(range(-radius, radius + 1), u))
    total = sum(values[n]*np.conj(values[n + k]) for n in values if n + k in values)
    return total/(2*radius)


class TestPeriodogram():
    def test_fejer_peak(self):
        measure = periodogram_density(np.ones(41), Z1, 20, 128)
        assert measure.density[0] == pytest.approx(41**2/40, rel=1e-12)

    def test_zero_sequence(self):
        measure = periodogram_density(np.zeros(41), Z1, 20, 64)
        assert np.all(measure.density == 0)

    def test_parseval(self):
        u = random_sequence(101, seed=0)
        measure = periodogram_density(u, Z1, 50, 256)
        assert measure.mass == pytest.approx(np.sum(np.abs(u)**2)/100, rel=1e-10)

    def test_fourier_coeff_at_zero_is_mass(self):
        measure = periodogram_density(random_sequence(101, seed=1), Z1, 50, 256)
        assert measure_fourier_coeff(measure, [0]) == pytest.approx(measure.mass, abs=1e-10)

    def test_fourier_coeff_is_windowed_correlation(self):
        u = random_sequence(101, seed=2)
        measure = periodogram_density(u, Z1, 50, 256)
        for k in (1, 3, -7):
            expected = windowed_correlation(u, k, 50)
            assert measure_fourier_coeff(measure, LatticePoint.of(Z1, [k])) == pytest.approx(expected, abs=1e-10)

    def test_ones_correlation(self):
        measure = periodogram_density(np.ones(21), Z1, 10, 64)
        assert measure_fourier_coeff(measure, [1]) == pytest.approx(1.0, abs=1e-10)

    def test_oscillation_spectrum(self):
        u = phase_sequence(Z1, 50, [0.3])
        measure = periodogram_density(u, Z1, 50, 512)
        value = measure_fourier_coeff(measure, [3])
        assert abs(value - np.exp(-2j*np.pi*0.9)*measure.mass) < 0.05
        assert value == pytest.approx(windowed_correlation(u, 3, 50), abs=1e-10)

    def test_two_dimensional_parseval(self):
        count = len(points_in_ball(Z2, 10))
        u = random_sequence(count, seed=3)
        measure = periodogram_density(u, Z2, 10, 32)
        assert measure.density.shape == (32, 32)
        assert measure.mass == pytest.approx(np.sum(np.abs(u)**2)/(np.pi*100), rel=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            periodogram_density(np.ones(40), Z1, 20, 64)

    def test_grid_size(self):
        with pytest.raises(ValueError):
            periodogram_density(np.ones(41), Z1, 20, 1)

    def test_to_frame(self):
        frame = periodogram_density(np.ones(13), Z2, 2, 8).to_frame()
        assert list(frame.columns) == ['x_1', 'x_2', 'density']
        assert len(frame) == 64


class TestDensityMeasure():
    def test_negative_density(self):
        with pytest.raises(ValueError):
            DensityMeasure(np.array([1.0, -0.5]))

    def test_default_cell_volume(self):
        assert DensityMeasure(np.ones((4, 4))).mass == pytest.approx(1.0)

    def test_cell_volume_shape(self):
        with pytest.raises(GridMismatch):
            DensityMeasure(np.ones(8), cell_volume=np.ones(4))


class TestHellingerAffinity():
    def test_self_affinity_is_mass(self):
        measure = DensityMeasure(np.random.default_rng(4).uniform(0, 2, 256))
        assert hellinger_affinity(measure, measure) == pytest.approx(measure.mass, abs=1e-10)

    def test_probability(self):
        density = np.random.default_rng(5).uniform(0, 2, 256)
        measure = DensityMeasure(density/density.mean())
        assert hellinger_affinity(measure, measure) == pytest.approx(1.0, abs=1e-10)

    def test_disjoint(self):
        first = np.zeros(256)
        first[:128] = 2
        second = np.zeros(256)
        second[128:] = 2
        assert hellinger_affinity(DensityMeasure(first), DensityMeasure(second)) == 0

    def test_half_overlap(self):
        half = np.zeros(256)
        half[:128] = 2
        value = hellinger_affinity(DensityMeasure(half), DensityMeasure(np.ones(256)))
        assert value == pytest.approx(np.sqrt(2)/2, abs=1e-12)

    def test_cauchy_schwarz(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            mu = DensityMeasure(rng.uniform(0, 3, 128))
            nu = DensityMeasure(rng.uniform(0, 3, 128))
            assert hellinger_affinity(mu, nu) <= np.sqrt(mu.mass*nu.mass) + 1e-12

    def test_reference_independent(self):
        rng = np.random.default_rng(7)
        mu = DensityMeasure(rng.uniform(0, 3, 128))
        nu = DensityMeasure(rng.uniform(0, 3, 128))
        g = rng.uniform(0.5, 2, 128)

        mu_g = DensityMeasure(mu.density/g, mu.cell_volume*g)
        nu_g = DensityMeasure(nu.density/g, nu.cell_volume*g)
        assert hellinger_affinity(mu_g, nu_g) == pytest.approx(hellinger_affinity(mu, nu), abs=1e-10)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            hellinger_affinity(DensityMeasure(np.ones(64)), DensityMeasure(np.ones(128)))
        with pytest.raises(GridMismatch):
            hellinger_affinity(DensityMeasure(np.ones(64)),
                               DensityMeasure(np.ones(64), cell_volume=np.full(64, 0.5/64)))

    def test_bounds_cross_correlation(self):
        for seed in range(20):
            u = random_sequence(101, seed=100 + seed)
            v = random_sequence(101, seed=200 + seed)
            affinity = hellinger_affinity(periodogram_density(u, Z1, 50, 256),
                                          periodogram_density(v, Z1, 50, 256))
            assert abs(cross_correlation(u, v, 50, Z1)) <= affinity + 1e-10


class TestSpectralFlatness():
    def test_constant(self):
        assert spectral_flatness(DensityMeasure(np.full((64, 64), 3.0))) == 0

    def test_peaked(self):
        measure = periodogram_density(np.ones(len(points_in_ball(Z2, 20))), Z2, 20, 64)
        assert spectral_flatness(measure) > 1

    def test_bins_must_divide(self):
        with pytest.raises(ValueError):
            spectral_flatness(DensityMeasure(np.ones(60)))

    def test_centred_phases_are_white(self):
        realization = realize(Z2, make_noise('gaussian', a=0.1), seed=1, gen_radius=200)
        u = noise_sequence(realization, [1.0, 0.0], 200)
        measure = periodogram_density(u, Z2, 200, 64)
        assert spectral_flatness(measure) < 0.15


if __name__ == '__main__':
    import timeit

    count = len(points_in_ball(Z2, 200))
    u = random_sequence(count, seed=0)
    t = timeit.timeit(lambda: periodogram_density(u, Z2, 200, 256), number=3)
    print('time periodogram_density with R=200, grid 256^2 (in sec):', t/3)
