"""Recovery of the lattice, the offset and the noise dispersion from a single
realization.

Stage one scans |M_R| on a coarse grid at a moderate radius, clusters the
peaks and extracts a provisional dual basis. Stage two verifies every dual
point of that basis inside the scan ball at a large radius, with the phase
rotation of the estimated offset removed, and refits all estimates on the
verified peaks.
"""
import json
import logging
import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import ndimage
from scipy.linalg import lstsq

from lattice_echo.core import ball_coefficients, ball_volume, make_lattice, reduce_basis
from lattice_echo.estimator import RegularGrid, exp_sum, exp_sum_grid, exp_sum_points
from lattice_echo.exceptions import (InsufficientPeaks, NoAscent, NotALattice,
                                     PhaseUnidentifiable, RankDeficient)
from lattice_echo.utils import resolve_workers


logger = logging.getLogger(__name__)

REFINE_TOL = 1e-4
COEFF_TOL = 0.02
INDEPENDENCE_TOL = 0.1
# starting values below this many fluctuation floors are not refined
ASCENT_FLOOR = 3.0
MISFIT_FLOORS = 5.0
MAX_ASCENT_ROUNDS = 200


class Peak():
    """A frequency lam with the value M_R(lam) observed at radius R."""

    def __init__(self, lam, value, radius):
        self.lam = np.asarray(lam, dtype=np.float64)
        self.value = complex(value)
        self.radius = radius

    @property
    def norm(self):
        return float(np.linalg.norm(self.lam))

    def conjugate(self):
        """The peak at -lam, whose value is the complex conjugate."""
        return self.__class__(-self.lam, self.value.conjugate(), self.radius)

    def __iter__(self):
        return iter((self.lam, self.value))

    def __repr__(self):
        return f"Peak({self.lam.tolist()}, {self.value:.6g}, R={self.radius})"


class RefinedPeak(Peak):
    """Peak after local ascent; `refined` is False when the ascent was refused."""

    def __init__(self, lam, value, radius, refined=True):
        super().__init__(lam, value, radius)
        self.refined = refined

    def conjugate(self):
        return RefinedPeak(-self.lam, self.value.conjugate(), self.radius, self.refined)

    def __repr__(self):
        tag = '' if self.refined else ', unrefined'
        return f"RefinedPeak({self.lam.tolist()}, {self.value:.6g}, R={self.radius}{tag})"


def fluctuation_floor(radius, covolume, dim):
    """Typical size of M_R away from the dual lattice, 1/sqrt(expected count)."""
    return float(np.sqrt(covolume/ball_volume(dim, radius)))


def _as_lambdas(peaks, dim=0):
    if not len(peaks):
        return np.zeros((0, dim))
    return np.array([np.asarray(p[0] if not isinstance(p, Peak) else p.lam, dtype=np.float64)
                     for p in peaks]).reshape(len(peaks), -1)


def _as_values(peaks):
    return np.array([p.value if isinstance(p, Peak) else p[1] for p in peaks], dtype=np.complex128)


def threshold_set(field, beta, part='real', min_separation=None):
    """One representative per connected cluster of grid nodes above beta.

    part selects the score, 'real' for Re(M) or 'abs' for |M|. Adjacent nodes
    (including diagonals) form one cluster; the representative is the node
    with the largest score. With min_separation, representatives closer than
    that to a stronger one are dropped, which removes the side-lobe rings of
    strong peaks. Results come strongest first.
    """
    if not 0 < beta < 1:
        raise ValueError(f"Threshold must lie in (0, 1), got {beta}.")
    if part not in ('real', 'abs'):
        raise ValueError(f"Threshold part '{part}' not implemented. Choose from ['real', 'abs']")

    values = field.grid_values()
    score = values.real if part == 'real' else np.abs(values)
    mask = score > beta

    if field.shape is None:
        representatives = np.flatnonzero(mask)
    else:
        structure = np.ones((3,)*score.ndim, dtype=bool)
        labels, num_clusters = ndimage.label(mask, structure=structure)
        flat_labels = labels.reshape(-1)
        flat_score = score.reshape(-1)

        # within each label the first index of the maximum score wins
        order = np.lexsort((np.arange(flat_score.size), -flat_score, flat_labels))
        ordered_labels = flat_labels[order]
        starts = np.flatnonzero(np.diff(ordered_labels, prepend=-1))
        representatives = order[starts[ordered_labels[starts] > 0]]

        logger.debug("Threshold %.4g keeps %d nodes in %d clusters",
                     beta, int(mask.sum()), num_clusters)

    flat_score = score.reshape(-1)
    representatives = representatives[np.lexsort((representatives, -flat_score[representatives]))]

    peaks = []
    for index in representatives:
        lam = field.nodes[index]
        if min_separation is not None and any(
                np.linalg.norm(lam - p.lam) < min_separation for p in peaks):
            continue
        peaks.append(Peak(lam, field.values[index], field.radius))

    return peaks


def refine_peak(realization, radius, lam0, tol=REFINE_TOL, strict=False, step=None):
    """Maximize |M_R| near lam0 by coordinate ascent with parabolic steps.

    Each axis is probed at +-h; the vertex of the parabola through the three
    values is taken when it is concave, otherwise the better probe. h halves
    when a sweep moves less than h/2 and the search ends once h < tol.
    The ascent is refused (unrefined result, or NoAscent when strict) if the
    start is below the fluctuation floor or the path leaves a 1/R ball.
    """
    lam0 = np.asarray(lam0, dtype=np.float64)
    d = lam0.shape[0]
    h = 0.25/radius if step is None else step
    max_travel = 1/radius

    start_value = exp_sum(realization, radius, lam0)

    def evaluate(lambdas):
        return exp_sum_points(realization, radius, np.array(lambdas), workers=1)

    def refuse(reason):
        if strict:
            raise NoAscent(f"No ascent from {lam0.tolist()} at R={radius}: {reason}.")
        logger.debug("Peak at %s left unrefined: %s", lam0.tolist(), reason)
        return RefinedPeak(lam0, start_value, radius, refined=False)

    floor = fluctuation_floor(radius, realization.lattice.covolume, d)
    if abs(start_value) < ASCENT_FLOOR*floor:
        return refuse("start value below the fluctuation floor")

    lam = lam0.copy()
    value = start_value
    best = abs(value)

    for _ in range(MAX_ASCENT_ROUNDS):
        if h < tol:
            break

        largest = 0.0
        for axis in range(d):
            shift = np.zeros(d)
            shift[axis] = h
            below, above = evaluate([lam - shift, lam + shift])
            f_below, f_above = abs(below), abs(above)

            curvature = f_below - 2*best + f_above
            if curvature < 0:
                delta = float(np.clip(h*(f_below - f_above)/(2*curvature), -h, h))
            else:
                delta = h if f_above > f_below else -h

            options = [(best, 0.0, value), (f_below, -h, below), (f_above, h, above)]
            if delta not in (0.0, h, -h):
                shift[axis] = delta
                vertex = evaluate([lam + shift])[0]
                options.append((abs(vertex), delta, vertex))

            f_new, move, v_new = max(options, key=lambda option: option[0])
            if move != 0.0 and f_new > best:
                lam[axis] += move
                best, value = f_new, v_new
                largest = max(largest, abs(move))

        if np.linalg.norm(lam - lam0) > max_travel:
            return refuse("ascent left the main lobe")
        if largest < h/2:
            h /= 2

    logger.debug("Refined %s to %s at R=%.4g, |M|=%.4g", lam0.tolist(), lam.tolist(), radius, best)
    return RefinedPeak(lam, value, radius)


def _coefficients(lambdas, dual_basis):
    return np.linalg.solve(dual_basis, lambdas.T).T


def _refit(lambdas, coeffs):
    """Least-squares basis B with B @ q ~ lam over all peaks."""
    transposed, _, _, _ = lstsq(coeffs.astype(np.float64), lambdas)
    return transposed.T


def extract_dual_basis(peaks, dim, tol=REFINE_TOL, coeff_tol=COEFF_TOL):
    """Reduced basis of the lattice spanned by the peak frequencies.

    The shortest peaks that stay linearly independent are taken greedily
    (ties broken lexicographically); every peak must then be an integer
    combination of them within coeff_tol. The basis is refit on all peaks and
    reduced. Shortest independent vectors form a basis for dim <= 3.
    """
    lambdas = _as_lambdas(peaks, dim)
    if lambdas.shape[1] != dim:
        raise ValueError(f"Peaks of dimension {lambdas.shape[1]} for dimension {dim}.")

    norms = np.linalg.norm(lambdas, axis=1)
    lambdas = lambdas[norms > 10*tol]
    norms = np.linalg.norm(lambdas, axis=1)

    keys = [lambdas[:, i] for i in reversed(range(dim))] + [np.round(norms, 3)]
    lambdas = lambdas[np.lexsort(keys)]

    chosen = []
    for lam in lambdas:
        if chosen:
            span = np.array(chosen).T
            coeffs, _, _, _ = lstsq(span, lam)
            residual = np.linalg.norm(lam - span @ coeffs)
            if residual <= INDEPENDENCE_TOL*np.linalg.norm(lam):
                continue
        chosen.append(lam)
        if len(chosen) == dim:
            break

    if len(chosen) < dim:
        raise RankDeficient(f"Only {len(chosen)} independent peaks among {len(lambdas)}, need {dim}.")

    basis = np.array(chosen).T
    coeffs = _coefficients(lambdas, basis)
    distance = np.abs(coeffs - np.rint(coeffs))
    if np.max(distance) > coeff_tol:
        worst = int(np.argmax(np.max(distance, axis=1)))
        raise NotALattice(f"Peak {lambdas[worst].tolist()} has coefficients "
                          f"{coeffs[worst].tolist()} in the extracted basis.")

    return reduce_basis(_refit(lambdas, np.rint(coeffs)))


def _generator_peaks(lambdas, values, dual_basis):
    """Peak value at each dual generator, conjugating a peak found at -m_i."""
    coeffs = _coefficients(lambdas, dual_basis)
    d = dual_basis.shape[0]
    found = []
    for i in range(d):
        unit = np.eye(d)[i]
        match = None
        for sign in (1, -1):
            distance = np.max(np.abs(coeffs - sign*unit), axis=1)
            hits = np.flatnonzero(distance <= COEFF_TOL)
            if hits.size:
                best = hits[np.argmax(np.abs(values[hits]))]
                match = values[best] if sign == 1 else np.conj(values[best])
                break
        if match is None:
            raise PhaseUnidentifiable(f"No peak at dual generator {i + 1}.")
        found.append(match)
    return np.array(found)


def _wrap(angle):
    return np.angle(np.exp(1j*angle))


def estimate_offset(peaks, dual_basis, symmetric=True, beta=0.007, fold_sign=False, iterations=8):
    """Offset c, reduced to the fundamental cell of the primal lattice.

    For symmetric noise M(m) ~ phi(m)*e(-<m, c>) with phi(m) > 0, so the phase
    at each dual generator fixes the primal coordinate t_i of c = B t modulo
    1. The estimate is refined by weighted Gauss-Newton on the wrapped phases
    of all peaks. fold_sign allows phi(m) < 0 by fitting doubled phases,
    which identifies c modulo half the primal lattice.
    """
    dual_basis = np.asarray(dual_basis, dtype=np.float64)
    primal_basis = np.linalg.inv(dual_basis).T
    if not symmetric:
        logger.warning("Estimating the offset under non-symmetric noise; "
                       "the noise phase is absorbed into the estimate.")

    lambdas = _as_lambdas(peaks, dual_basis.shape[0])
    values = _as_values(peaks)
    generators = _generator_peaks(lambdas, values, dual_basis)
    if np.any(np.abs(generators) <= 2*beta):
        raise PhaseUnidentifiable(
            f"Generator peaks {np.abs(generators).tolist()} are not above 2*beta = {2*beta}.")

    fold = 2 if fold_sign else 1
    period = 1/fold
    t = np.mod(-np.angle(generators**fold)/(2*np.pi*fold), period)

    coeffs = np.rint(_coefficients(lambdas, dual_basis))
    keep = (np.abs(values) > 2*beta) & np.any(coeffs != 0, axis=1)
    coeffs, values = coeffs[keep], values[keep]
    # rows scaled by sqrt of the weights |value|^2
    weights = np.abs(values)

    for _ in range(iterations):
        predicted = -2*np.pi*fold*(coeffs @ t)
        residual = _wrap(fold*np.angle(values) - predicted)
        jacobian = -2*np.pi*fold*coeffs
        step, _, _, _ = lstsq(weights[:, None]*jacobian, weights*residual)
        t = t + step
        if np.max(np.abs(step)) < 1e-12:
            break

    t = np.mod(t, period)
    t[np.isclose(t, period, rtol=0, atol=1e-12)] = 0.0
    return primal_basis @ t


def estimate_dispersion(peaks, beta=0.007, tol=REFINE_TOL):
    """Gaussian dispersion a from |M(lam)| ~ exp(-a*pi^2*|lam|^2).

    Weighted least squares of -ln|value| against pi^2*|lam|^2 through the
    origin, with weights |value|^2.
    """
    lambdas = _as_lambdas(peaks)
    values = _as_values(peaks)
    magnitudes = np.abs(values)
    usable = (np.linalg.norm(lambdas, axis=1) > 10*tol) & (magnitudes > beta)
    if np.count_nonzero(usable) < 2:
        raise InsufficientPeaks(
            f"Dispersion fit needs 2 non-origin peaks above {beta}, got {int(np.count_nonzero(usable))}.")

    x = np.pi**2*np.sum(lambdas[usable]**2, axis=1)
    y = -np.log(magnitudes[usable])
    w = magnitudes[usable]**2
    return float(np.sum(w*x*y)/np.sum(w*x*x))


def dispersion_residuals(peaks, a, offset=None):
    """|value - exp(-a*pi^2*|lam|^2)*e(-<lam, c>)| for every peak."""
    lambdas = _as_lambdas(peaks)
    values = _as_values(peaks)
    offset = np.zeros(lambdas.shape[1]) if offset is None else np.asarray(offset, dtype=np.float64)
    model = np.exp(-a*np.pi**2*np.sum(lambdas**2, axis=1))*np.exp(-2j*np.pi*(lambdas @ offset))
    return np.abs(values - model)


@dataclass
class RecoveryParams():
    r_detect: float = 60.0
    r_verify: float = 250.0
    box: tuple = (-2.5, 2.5)
    spacing: float = None
    beta_detect: float = 0.05
    beta: float = 0.007
    tol: float = REFINE_TOL
    workers: int = None

    def __post_init__(self):
        if self.r_detect <= 0 or self.r_verify <= 0:
            raise ValueError("Recovery radii must be positive.")
        low, high = self.box
        if not low < 0 < high:
            raise ValueError(f"Scan box [{low}, {high}] must contain the origin.")
        if not 0 < self.beta < 1 or not 0 < self.beta_detect < 1:
            raise ValueError("Thresholds must lie in (0, 1).")

    @property
    def detect_spacing(self):
        limit = 1/(3*self.r_detect)
        if self.spacing is None:
            return limit
        if self.spacing > limit:
            logger.warning("Grid spacing %.4g exceeds 1/(3*R_detect) = %.4g; using the latter.",
                           self.spacing, limit)
            return limit
        return self.spacing

    @property
    def min_separation(self):
        return 3/self.r_detect

    @property
    def ball_radius(self):
        return min(-self.box[0], self.box[1])


class RecoveryReport():
    """Outcome of `recover_lattice`.

    `peaks` are the verified peaks at R_verify, origin included and closed
    under negation; `detected` are the stage one peaks at R_detect.
    """

    def __init__(self, dim, dual_basis, primal_basis, offset, dispersion, peaks, detected,
                 params, seed, cloaked=False, residuals=None, misfit=False, noise=None, lattice=None):
        self.dim = dim
        self.dual_basis = dual_basis
        self.primal_basis = primal_basis
        self.offset = offset
        self.dispersion = dispersion
        self.peaks = peaks
        self.detected = detected
        self.params = params
        self.seed = seed
        self.cloaked = cloaked
        self.residuals = residuals
        self.misfit = misfit
        self.noise = noise
        self.lattice = lattice

    @property
    def verified_count(self):
        return len(self.peaks)

    @property
    def beta(self):
        return self.params.beta

    def to_dict(self):
        def matrix(m):
            return None if m is None else np.asarray(m).tolist()

        return {
            'dim': self.dim,
            'dual_basis': matrix(self.dual_basis),
            'primal_basis': matrix(self.primal_basis),
            'offset': matrix(self.offset),
            'dispersion': self.dispersion,
            'beta': self.params.beta,
            'R_detect': self.params.r_detect,
            'R_verify': self.params.r_verify,
            'peaks': [{'lambda': p.lam.tolist(), 're': p.value.real, 'im': p.value.imag,
                       'radius': p.radius} for p in self.peaks],
            'verified_count': self.verified_count,
            'cloaked': self.cloaked,
            'seed': self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def summary(self):
        print("--------------------------------------------------")
        print(f"Recovery summary (seed {self.seed}):")
        print("--------------------------------------------------")
        print(f"        noise:   {self.noise}")
        print(f"     R_detect:   {self.params.r_detect}")
        print(f"     R_verify:   {self.params.r_verify}")
        print(f"         beta:   {self.params.beta}")
        print("--------------------------------------------------")
        if self.cloaked:
            print("No dual peak besides the origin: the process is cloaked.")
        else:
            print("Primal basis (columns):")
            for row in self.primal_basis:
                print("   " + "  ".join(f"{x: .6f}" for x in row))
            print(f"       offset:   {None if self.offset is None else np.round(self.offset, 6).tolist()}")
            print(f"   dispersion:   {self.dispersion}")
            if self.misfit:
                print("   Gaussian model misfit: residuals exceed the fluctuation floor.")
        print(f"Verified peaks ({self.verified_count}):")
        for peak in self.peaks:
            print(f" - {np.round(peak.lam, 5).tolist()}:   {peak.value:.5f}")
        print("--------------------------------------------------")

    def __repr__(self):
        return (f"RecoveryReport(dim={self.dim}, verified={self.verified_count}, "
                f"cloaked={self.cloaked}, dispersion={self.dispersion})")


def _peak_order(peaks):
    keys = [(round(p.norm, 9), tuple(p.lam.tolist())) for p in peaks]
    return [p for _, p in sorted(zip(keys, peaks), key=lambda item: item[0])]


def _representatives(coeffs):
    """Rows whose first nonzero coefficient is positive, one per +-pair."""
    first = np.array([row[np.flatnonzero(row)[0]] for row in coeffs])
    return first > 0


def _verify(realization, radius, candidate, tol, offset, beta):
    peak = refine_peak(realization, radius, candidate, tol)
    rotated = peak.value*np.exp(2j*np.pi*(peak.lam @ offset))
    return peak, rotated.real > beta


def recover_lattice(realization, params=None):
    params = RecoveryParams() if params is None else params
    t_start = time.time()
    d = realization.dim
    workers = resolve_workers(params.workers)
    symmetric = realization.noise.symmetric

    # (1) coarse scan of |M| at R_detect
    grid = RegularGrid.from_box(params.box[0], params.box[1], params.detect_spacing, d)
    field = exp_sum_grid(realization, params.r_detect, grid, workers=workers)
    logger.info("Scanned %d nodes at R_detect=%.4g", grid.size, params.r_detect)

    # (2) clusters; the one within min_separation of 0 is the origin
    clusters = threshold_set(field, params.beta_detect, part='abs', min_separation=params.min_separation)
    outer = [p for p in clusters if p.norm >= params.min_separation]
    logger.info("Found %d clusters, %d away from the origin", len(clusters), len(outer))

    origin = Peak(np.zeros(d), exp_sum(realization, params.r_verify, np.zeros(d)), params.r_verify)

    if not outer:
        logger.warning("No dual peak besides the origin above %.4g: reporting a cloaked process.",
                       params.beta_detect)
        return RecoveryReport(d, None, None, None, None, [origin], clusters, params,
                              realization.seed, cloaked=True, noise=realization.noise,
                              lattice=realization.lattice)

    # (3) refine at R_detect
    detected = [refine_peak(realization, params.r_detect, p.lam, params.tol) for p in outer]

    # (4) provisional basis and offset
    provisional = extract_dual_basis(detected, d, tol=params.tol)
    logger.info("Provisional dual basis %s", provisional.tolist())
    try:
        offset_guess = estimate_offset(detected, provisional, symmetric, params.beta_detect)
    except PhaseUnidentifiable as error:
        logger.warning("Provisional offset unavailable (%s); verifying without phase correction.", error)
        offset_guess = np.zeros(d)

    # (5) candidate dual points in the largest ball inside the box
    coeffs, candidates = ball_coefficients(make_lattice(provisional), params.ball_radius)
    nonzero = np.any(coeffs != 0, axis=1)
    coeffs, candidates = coeffs[nonzero], candidates[nonzero]
    half = _representatives(coeffs)

    # (6) verify one of each +-pair at R_verify
    outcomes = Parallel(n_jobs=workers, prefer='threads')(
        delayed(_verify)(realization, params.r_verify, lam, params.tol, offset_guess, params.beta)
        for lam in candidates[half])

    verified = [origin]
    verified_coeffs = []
    for (peak, passed), q in zip(outcomes, coeffs[half]):
        if passed:
            verified.extend([peak, peak.conjugate()])
            verified_coeffs.extend([q, -q])

    outer_verified = verified[1:]
    logger.info("Verified %d of %d candidate dual points", len(outer_verified), len(candidates))

    if not outer_verified:
        logger.warning("No candidate dual point passed beta=%.4g at R_verify: reporting a cloaked process.",
                       params.beta)
        return RecoveryReport(d, None, None, None, None, [origin], detected, params,
                              realization.seed, cloaked=True, noise=realization.noise,
                              lattice=realization.lattice)

    if len(outer_verified) >= 2*d:
        fitted = _refit(_as_lambdas(outer_verified), np.array(verified_coeffs))
        try:
            dual_basis = reduce_basis(fitted)
        except ValueError:
            dual_basis = provisional
    else:
        dual_basis = provisional
    primal_basis = np.linalg.inv(dual_basis).T

    # (7) offset and dispersion from the verified peaks
    try:
        offset = estimate_offset(outer_verified, dual_basis, symmetric, params.beta)
    except PhaseUnidentifiable as error:
        logger.warning("Offset not identifiable: %s", error)
        offset = None

    residuals = None
    misfit = False
    try:
        dispersion = estimate_dispersion(outer_verified, params.beta, params.tol)
    except InsufficientPeaks as error:
        logger.warning("Dispersion not estimated: %s", error)
        dispersion = None
    else:
        residuals = dispersion_residuals(outer_verified, dispersion, offset)
        floor = fluctuation_floor(params.r_verify, realization.lattice.covolume, d)
        misfit = bool(np.any(residuals > MISFIT_FLOORS*floor))
        if misfit:
            logger.warning("Gaussian dispersion model misfit: largest residual %.4g, floor %.4g",
                           float(np.max(residuals)), floor)

    logger.info("Recovery finished in %.2fs", time.time() - t_start)

    return RecoveryReport(d, dual_basis, primal_basis, offset, dispersion, _peak_order(verified),
                          detected, params, realization.seed, residuals=residuals, misfit=misfit,
                          noise=realization.noise, lattice=realization.lattice)
