from lattice_echo.core import (LatticeSpec, LatticePoint, make_lattice, dual_lattice, points_in_ball,
                               gauss_discrepancy, reduce_basis, lattices_equivalent)
from lattice_echo.noise import NoiseModel, make_noise, char_fn, sample_noise, tail_quantile
from lattice_echo.sampler import Realization, realize, window, boundary_counts
from lattice_echo.estimator import (RegularGrid, ExpSumField, CorrelationEstimate, exp_sum, exp_sum_grid,
                                    radius_sweep, wiener_correlation, cross_correlation, lattice_exp_sum,
                                    main_term, noise_sequence, phase_sequence, load_field)
from lattice_echo.spectral import (DensityMeasure, periodogram_density, measure_fourier_coeff,
                                   hellinger_affinity, spectral_flatness)
from lattice_echo.recovery import (Peak, RefinedPeak, RecoveryParams, RecoveryReport, threshold_set,
                                   refine_peak, extract_dual_basis, estimate_offset, estimate_dispersion,
                                   dispersion_residuals, recover_lattice)
from lattice_echo.config import RunConfig, parse_config, format_config, read_config
from lattice_echo.diagnostics import verify_lemmas

import importlib.resources as pkg_resources

def load_config(name):
    """One of the bundled run configurations, e.g. 'recover_z2'."""
    resource = pkg_resources.files('lattice_echo') / 'data' / f"{name}.cfg"
    text = resource.read_text(encoding='utf-8')

    return parse_config(text)
