import json

import numpy as np

from lattice_echo import load_config
from lattice_echo.config import parse_config
from lattice_echo.core import make_lattice
from lattice_echo.diagnostics import affinity_suite, boundary_suite, gauss_suite, verify_lemmas
from lattice_echo.noise import make_noise
from lattice_echo.sampler import realize


class TestSuites():
    def test_point_mass_boundary(self):
        realization = realize(make_lattice(np.eye(2)), make_noise('point_mass', dim=2), seed=1, gen_radius=50)
        suite = boundary_suite(realization, [10, 25, 50])
        assert all(r['escaped'] == 0 and r['entered'] == 0 for r in suite['ratios'])
        assert suite['passed'] is True

    def test_cauchy_has_no_verdict(self):
        realization = realize(make_lattice(np.eye(2)), make_noise('cauchy', gamma=0.05), seed=1, gen_radius=30)
        assert boundary_suite(realization, [10, 20, 30])['passed'] is None

    def test_gauss_skew_lattice(self):
        suite = gauss_suite(make_lattice([[2.0, 0.5], [0.0, 0.5]]))
        assert suite['passed']
        assert suite['max_scaled'] <= 6

    def test_affinity_bound(self):
        suite = affinity_suite(seed=3, pairs=5, grid_n=128)
        assert suite['radius'] == 32
        assert suite['max_gap'] <= 1e-10
        assert suite['passed']


class TestVerifyLemmas():
    def test_gaussian_z2(self):
        report = verify_lemmas(load_config('diagnostics_z2'))
        assert report['passed']
        assert all(suite['passed'] for suite in report['suites'].values())
        assert set(report['suites']) == {'boundary', 'gauss', 'wiener', 'affinity', 'main_term'}
        json.dumps(report)

    def test_point_mass(self):
        cfg = parse_config('noise.kind = point_mass\nradius.ladder = [5, 10]\n'
                           'spectral.pairs = 2\nspectral.grid_n = 64')
        report = verify_lemmas(cfg)
        assert report['passed']
        assert report['noise'] == {'kind': 'point_mass', 'v': [0.0, 0.0]}
        for row in report['suites']['wiener']['table'][1:]:
            assert row['error'] == 0

    def test_cauchy(self):
        cfg = parse_config('noise.kind = cauchy\nnoise.gamma = 0.05\nradius.ladder = [10, 20]\n'
                           'spectral.pairs = 2\nspectral.grid_n = 64')
        report = verify_lemmas(cfg)
        assert report['suites']['boundary']['passed'] is None
        json.dumps(report)
