"""Plain-text run configuration.

One `key = value` per line, `#` starts a comment, dotted keys group related
settings. Values are JSON literals; anything that does not parse as JSON is
kept as a bare string, so `noise.kind = gaussian` works without quotes.
"""
import json
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from lattice_echo.core import make_lattice
from lattice_echo.exceptions import ParseError, SingularBasis, ValidationError
from lattice_echo.noise import NOISE_KINDS, make_noise


logger = logging.getLogger(__name__)

NOISE_PARAMS = {'gaussian': 'a', 'uniform_box': 'h', 'laplace': 'b', 'cauchy': 'gamma'}


def _key(name):
    return {'metadata': {'key': name}}


@dataclass
class RunConfig():
    lattice: list = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]], **_key('lattice'))
    offset: list = field(default=None, **_key('offset'))
    seed: int = field(default=1, **_key('seed'))
    noise_kind: str = field(default='gaussian', **_key('noise.kind'))
    noise_a: float = field(default=0.1, **_key('noise.a'))
    noise_h: float = field(default=None, **_key('noise.h'))
    noise_b: float = field(default=None, **_key('noise.b'))
    noise_gamma: float = field(default=None, **_key('noise.gamma'))
    noise_v: list = field(default=None, **_key('noise.v'))
    radius_gen: float = field(default=None, **_key('radius.gen'))
    radius_detect: float = field(default=60.0, **_key('radius.detect'))
    radius_verify: float = field(default=250.0, **_key('radius.verify'))
    radius_scan: float = field(default=100.0, **_key('radius.scan'))
    radius_ladder: list = field(default_factory=lambda: [25.0, 50.0, 100.0, 200.0], **_key('radius.ladder'))
    grid_box: list = field(default_factory=lambda: [-2.5, 2.5], **_key('grid.box'))
    grid_spacing: float = field(default=None, **_key('grid.spacing'))
    beta: float = field(default=0.007, **_key('beta'))
    beta_detect: float = field(default=0.05, **_key('beta_detect'))
    sweep_lambdas: list = field(default_factory=lambda: [[1.0, 0.0]], **_key('sweep.lambdas'))
    sweep_radii: list = field(default_factory=lambda: [25.0, 50.0, 100.0, 200.0], **_key('sweep.radii'))
    spectral_grid_n: int = field(default=256, **_key('spectral.grid_n'))
    spectral_pairs: int = field(default=20, **_key('spectral.pairs'))
    workers: int = field(default=None, **_key('workers'))
    output_simulate: str = field(default=None, **_key('output.simulate'))
    output_scan: str = field(default=None, **_key('output.scan'))
    output_recover: str = field(default=None, **_key('output.recover'))
    output_verify: str = field(default=None, **_key('output.verify'))
    output_sweep: str = field(default=None, **_key('output.sweep'))

    @property
    def dim(self):
        return len(self.lattice)

    def build_lattice(self):
        return make_lattice(np.array(self.lattice, dtype=np.float64))

    def build_noise(self, lattice=None):
        lattice = self.build_lattice() if lattice is None else lattice
        kind = self.noise_kind
        if kind in NOISE_PARAMS:
            name = NOISE_PARAMS[kind]
            return make_noise(kind, self.dim, **{name: getattr(self, f"noise_{name}")})
        if kind == 'point_mass':
            return make_noise(kind, self.dim, v=self.noise_v)
        return make_noise(kind, self.dim, lattice=lattice)

    def build_offset(self):
        return np.zeros(self.dim) if self.offset is None else np.array(self.offset, dtype=np.float64)

    def generation_radius(self, *radii):
        """radius.gen when set, else the largest of the requested radii."""
        if self.radius_gen is not None:
            return float(self.radius_gen)
        return float(max(radii))

    def validate(self):
        _validate(self)
        return self


CONFIG_KEYS = {f.metadata['key']: f.name for f in fields(RunConfig)}


def _fail(key, message):
    raise ValidationError(key, message)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value)


def _positive(cfg, key, optional=True):
    value = getattr(cfg, CONFIG_KEYS[key])
    if value is None and optional:
        return
    if not _is_number(value) or value <= 0:
        _fail(key, f"must be a positive number, got {value!r}")


def _vector(cfg, key, dim):
    value = getattr(cfg, CONFIG_KEYS[key])
    if value is None:
        return
    if not isinstance(value, list) or len(value) != dim or not all(_is_number(x) for x in value):
        _fail(key, f"must be a list of {dim} numbers, got {value!r}")


def _validate(cfg):
    lattice = cfg.lattice
    if (not isinstance(lattice, list) or not lattice
            or not all(isinstance(row, list) and len(row) == len(lattice) for row in lattice)
            or not all(_is_number(x) for row in lattice for x in row)):
        _fail('lattice', f"must be a square matrix of numbers, got {lattice!r}")
    try:
        cfg.build_lattice()
    except (SingularBasis, ValueError) as error:
        _fail('lattice', str(error))

    d = cfg.dim
    _vector(cfg, 'offset', d)
    _vector(cfg, 'noise.v', d)

    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not 0 <= cfg.seed < 2**64:
        _fail('seed', f"must be an integer in [0, 2^64), got {cfg.seed!r}")

    if cfg.noise_kind not in NOISE_KINDS:
        _fail('noise.kind', f"must be one of {sorted(NOISE_KINDS)}, got {cfg.noise_kind!r}")
    for name in ('a', 'h', 'b', 'gamma'):
        _positive(cfg, f"noise.{name}")
    if cfg.noise_kind in NOISE_PARAMS:
        _positive(cfg, f"noise.{NOISE_PARAMS[cfg.noise_kind]}", optional=False)

    for key in ('radius.gen', 'radius.detect', 'radius.verify', 'radius.scan', 'grid.spacing'):
        _positive(cfg, key)
    for key in ('radius.ladder', 'sweep.radii'):
        values = getattr(cfg, CONFIG_KEYS[key])
        if not isinstance(values, list) or not values or not all(_is_number(x) and x > 0 for x in values):
            _fail(key, f"must be a nonempty list of positive numbers, got {values!r}")

    if cfg.radius_gen is not None:
        largest = max([cfg.radius_detect, cfg.radius_verify, cfg.radius_scan]
                      + cfg.radius_ladder + cfg.sweep_radii)
        if cfg.radius_gen < largest:
            _fail('radius.gen', f"{cfg.radius_gen} is below the largest requested radius {largest}")

    box = cfg.grid_box
    if not isinstance(box, list) or len(box) != 2 or not all(_is_number(x) for x in box) or box[0] >= box[1]:
        _fail('grid.box', f"must be [low, high] with low < high, got {box!r}")

    for key in ('beta', 'beta_detect'):
        value = getattr(cfg, CONFIG_KEYS[key])
        if not _is_number(value) or not 0 < value < 1:
            _fail(key, f"must lie in (0, 1), got {value!r}")

    lambdas = cfg.sweep_lambdas
    if (not isinstance(lambdas, list) or not lambdas
            or not all(isinstance(lam, list) and len(lam) == d and all(_is_number(x) for x in lam)
                       for lam in lambdas)):
        _fail('sweep.lambdas', f"must be a nonempty list of {d}-vectors, got {lambdas!r}")

    for key, low in (('spectral.grid_n', 2), ('spectral.pairs', 1)):
        value = getattr(cfg, CONFIG_KEYS[key])
        if not isinstance(value, int) or isinstance(value, bool) or value < low:
            _fail(key, f"must be an integer >= {low}, got {value!r}")

    if cfg.workers is not None and (not isinstance(cfg.workers, int) or cfg.workers < 1):
        _fail('workers', f"must be a positive integer, got {cfg.workers!r}")

    for key in CONFIG_KEYS:
        if key.startswith('output.'):
            value = getattr(cfg, CONFIG_KEYS[key])
            if value is not None and not isinstance(value, str):
                _fail(key, f"must be a path, got {value!r}")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(text):
    """Parse and validate a configuration; missing keys take their defaults."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue

        key, sep, value = line.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in CONFIG_KEYS:
            raise ValidationError(key, "unknown configuration key")
        if CONFIG_KEYS[key] in values:
            raise ParseError(f"duplicate key '{key}'", lineno)

        values[CONFIG_KEYS[key]] = _parse_value(value)

    return RunConfig(**values).validate()


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        lines.append(f"{f.metadata['key']} = {json.dumps(value)}")
    return '\n'.join(lines) + '\n'


def read_config(path):
    with open(path, 'r', encoding='utf-8') as file:
        return parse_config(file.read())


def config_help():
    """Keys and defaults, for the command line help."""
    return '\n'.join(f"  {f.metadata['key']} = {json.dumps(getattr(RunConfig(), f.name))}"
                     for f in fields(RunConfig))
