"""Numerical checks of the limit statements behind recovery.

Each suite returns a JSON-ready dict with its measurements and a `passed`
verdict (None where no verdict applies).
"""
import logging
import time

import numpy as np

from lattice_echo.core import LatticePoint, gauss_discrepancy, make_lattice, points_in_ball, predicted_count
from lattice_echo.estimator import cross_correlation, main_term, wiener_correlation
from lattice_echo.noise import char_fn
from lattice_echo.sampler import boundary_counts, realize
from lattice_echo.spectral import hellinger_affinity, periodogram_density


logger = logging.getLogger(__name__)

BOUNDARY_LIMIT = 0.01
GAUSS_CONSTANT = 6.0
GAUSS_RADII = range(10, 201, 10)
WIENER_TOL = 0.05
AFFINITY_TOL = 0.01
AFFINITY_RADIUS = 50
MAIN_TERM_TOL = 0.05


def boundary_suite(realization, ladder):
    """(escaped + entered)/expected count along the radius ladder."""
    ratios = []
    for radius in ladder:
        escaped, entered = boundary_counts(realization, radius)
        ratios.append({'radius': radius, 'escaped': escaped, 'entered': entered,
                       'ratio': (escaped + entered)/predicted_count(realization.lattice, radius)})

    values = [r['ratio'] for r in ratios]
    if realization.noise.moment_exponent_ok:
        decreasing = all(b < a or b == 0 for a, b in zip(values, values[1:]))
        passed = bool(decreasing and values[-1] < BOUNDARY_LIMIT)
    else:
        passed = None

    return {'ratios': ratios, 'limit': BOUNDARY_LIMIT, 'passed': passed}


def gauss_suite(lattice, radii=GAUSS_RADII):
    """Largest discrepancy/R^(d-1) over the radii."""
    rows = []
    for radius in radii:
        count, discrepancy = gauss_discrepancy(lattice, radius)
        rows.append({'radius': radius, 'count': count,
                     'scaled': discrepancy/radius**(lattice.dim - 1)})

    worst = max(r['scaled'] for r in rows)
    return {'rows': rows, 'max_scaled': worst, 'constant': GAUSS_CONSTANT,
            'passed': bool(worst <= GAUSS_CONSTANT)}


def wiener_suite(realization, ladder):
    """F_{R,k}(lam) at the first dual generator for k = 0 and the generators."""
    lattice = realization.lattice
    lam = lattice.dual_basis[:, 0]
    phi = char_fn(realization.noise, lam)

    shifts = [np.zeros(lattice.dim, dtype=np.int64)] + list(np.eye(lattice.dim, dtype=np.int64))
    table = []
    passed = True
    for k in shifts:
        target = 1 - abs(phi)**2 if not np.any(k) else 0.0
        point = LatticePoint.of(lattice, k)
        values = [wiener_correlation(realization, lam, point, radius).value for radius in ladder]
        error = abs(values[-1] - target)
        passed = passed and error <= WIENER_TOL
        table.append({'k': list(point.coeffs), 'target': target,
                      'values': [[v.real, v.imag] for v in values], 'error': error})

    return {'lambda': lam.tolist(), 'radii': list(ladder), 'table': table,
            'tol': WIENER_TOL, 'passed': bool(passed)}


def affinity_suite(seed, pairs, grid_n):
    """|cross_correlation(u, v)| <= rho(periodogram u, periodogram v) on random
    complex sequences over Z, with R capped at grid_n/4."""
    rng = np.random.default_rng(seed)
    lattice = make_lattice([[1.0]])
    radius = min(AFFINITY_RADIUS, grid_n//4)
    count = len(points_in_ball(lattice, radius))

    gaps = []
    for _ in range(pairs):
        u = rng.standard_normal(count) + 1j*rng.standard_normal(count)
        v = rng.standard_normal(count) + 1j*rng.standard_normal(count)
        correlation = abs(cross_correlation(u, v, radius, lattice))
        affinity = hellinger_affinity(periodogram_density(u, lattice, radius, grid_n),
                                      periodogram_density(v, lattice, radius, grid_n))
        gaps.append(correlation - affinity)

    return {'radius': radius, 'grid_n': grid_n, 'pairs': pairs, 'max_gap': max(gaps),
            'tol': AFFINITY_TOL, 'passed': bool(max(gaps) <= AFFINITY_TOL)}


def main_term_suite(realization, radius):
    """Average of A_lam(n)*conj(e(<n, lam>)) at a frequency off the dual lattice."""
    lattice = realization.lattice
    lam = lattice.dual_basis @ np.linspace(0.3, 0.7, lattice.dim)
    value = main_term(realization, lam, radius)
    return {'lambda': lam.tolist(), 'radius': radius, 'value': [value.real, value.imag],
            'tol': MAIN_TERM_TOL, 'passed': bool(abs(value) <= MAIN_TERM_TOL)}


def verify_lemmas(cfg):
    """Run every suite for one configuration and collect a JSON-ready report."""
    t_start = time.time()
    lattice = cfg.build_lattice()
    noise = cfg.build_noise(lattice)
    ladder = sorted(float(r) for r in cfg.radius_ladder)

    reach = max(np.linalg.norm(lattice.basis, axis=0))
    # shifted correlations read up to |k| beyond the largest radius
    gen_radius = max(cfg.generation_radius(ladder[-1]), ladder[-1] + reach)
    realization = realize(lattice, noise, cfg.build_offset(), cfg.seed, gen_radius)

    suites = {
        'boundary': boundary_suite(realization, ladder),
        'gauss': gauss_suite(lattice),
        'wiener': wiener_suite(realization, ladder),
        'affinity': affinity_suite(cfg.seed, cfg.spectral_pairs, cfg.spectral_grid_n),
        'main_term': main_term_suite(realization, ladder[-1]),
    }
    for name, suite in suites.items():
        logger.debug("Suite %s: passed=%s", name, suite['passed'])

    logger.info("Diagnostics finished in %.2fs", time.time() - t_start)

    return {
        'seed': cfg.seed,
        'dim': lattice.dim,
        'noise': noise.params(),
        'suites': suites,
        'passed': all(suite['passed'] is not False for suite in suites.values()),
    }
