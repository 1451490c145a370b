# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""Parser for run configurations.

A configuration is a line-oriented text of `key = value` pairs:

    # long-range network, two sizes and two trap strengths
    geometry = disordered3d
    n = 100, 1000
    gamma = 1, 1e-6
    r = 500
    seed = 42

    [n=1000]
    r = 100

Global keys come first. A section header `[n=…]`, `[gamma=…]` or
`[n=…, gamma=…]` opens a block whose keys override the global ones for the
matching sweep points. The sweep is the cartesian product of all listed `n`
and `gamma` values. Unknown keys are errors.
"""

import dataclasses
import itertools
import re

from . import analysis, ensemble
from .network import GeometryKind, InvalidArgument

SECTION_REGEX = re.compile(r'^\[(.*)\]$')
TRUE_VALUES = ('true', 'yes', '1', 'on')
FALSE_VALUES = ('false', 'no', '0', 'off')


class ConfigError(Exception):
    """This exception is raised whenever a configuration cannot be used.

    Example:
    e = ConfigError('unknown key', key='gama', line_number=3)
    assert e.key == 'gama'
    assert e.line_number == 3 # counting from 1
    """

    def __init__(self, message, key=None, line_number=None):
        if key and line_number:
            message = 'line %d, key %r: %s' % (line_number, key, message)
        elif key:
            message = 'key %r: %s' % (key, message)
        elif line_number:
            message = 'line %d: %s' % (line_number, message)
        super().__init__(message)
        self.key = key
        self.line_number = line_number


def _parse_bool(value):
    if value.lower() in TRUE_VALUES:
        return True
    if value.lower() in FALSE_VALUES:
        return False
    raise ValueError('expected a boolean, got %r' % value)


def _parse_uint(value):
    number = int(value, 0)
    if number < 0:
        raise ValueError('expected a non-negative integer, got %r' % value)
    return number


def _split_list(value):
    return [v for v in re.split(r'[\s,]+', value.strip()) if v]


def _parse_list(converter):
    def parse(value):
        items = _split_list(value)
        if not items:
            raise ValueError('expected at least one value')
        return [converter(v) for v in items]

    return parse


def _scalar(converter):
    def parse(value):
        if len(_split_list(value)) != 1:
            raise ValueError('expected a single value, got %r' % value)
        return converter(value.strip())

    return parse


def parse_window(value):
    """Parse 'lo:hi' into a tuple of floats; 'auto' yields None."""
    value = value.strip()
    if value.lower() == 'auto':
        return None
    parts = value.split(':')
    if len(parts) != 2:
        raise ValueError('expected lo:hi, got %r' % value)
    lo, hi = float(parts[0]), float(parts[1])
    if not 0 < lo < hi:
        raise ValueError('expected 0 < lo < hi, got %r' % value)
    return lo, hi


# key -> (parser, EnsembleConfig field or None)
KEYS = {
    'geometry': (_scalar(GeometryKind.parse), 'geometry_kind'),
    'n': (_parse_list(int), None),
    'r': (_scalar(int), 'realizations'),
    'gamma': (_parse_list(float), None),
    'sigma': (_scalar(float), 'sigma'),
    'seed': (_scalar(_parse_uint), 'master_seed'),
    'tau_min': (_scalar(float), 'tau_min'),
    'tau_max': (_scalar(float), 'tau_max'),
    'points_per_decade': (_scalar(int), 'points_per_decade'),
    'delta_min': (_scalar(float), 'delta_min'),
    'spacing': (_scalar(float), 'spacing'),
    'exact_mode': (_scalar(_parse_bool), 'exact_mode'),
    'keep_per_realization': (_scalar(_parse_bool), 'keep_per_realization'),
    'fit_window': (_scalar(parse_window), None),
}
REQUIRED_KEYS = ('n', 'r', 'gamma')
# keys which select sweep points and may not be overridden in a section
SWEEP_KEYS = ('n', 'gamma')


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """A parsed configuration: the resolved sweep points and the fit window.

    `fit_window` is a (lo, hi) tuple in rescaled time, None selects the window
    automatically (`fit_window = auto`).
    """

    points: tuple
    fit_window: tuple = analysis.DEFAULT_FIT_WINDOW
    source: str = None

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _parse_section_header(header, line_number):
    """Parse 'n=1000, gamma=1e-6' into a selector dict."""
    selector = {}
    for item in (i.strip() for i in header.split(',') if i.strip()):
        if '=' not in item:
            raise ConfigError('malformed section header %r' % header, None, line_number)
        key, value = (part.strip() for part in item.split('=', 1))
        if key not in SWEEP_KEYS:
            raise ConfigError(
                'sections select by n and gamma only', key, line_number
            )
        try:
            selector[key] = int(value) if key == 'n' else float(value)
        except ValueError:
            raise ConfigError('malformed value %r' % value, key, line_number) from None
    if not selector:
        raise ConfigError('empty section header', None, line_number)
    return selector


def parse_config(text, source=None):
    """Parse a configuration document and resolve its sweep points.

    :raises ConfigError naming the offending key and line
    """
    global_values = {}
    sections = []  # list of (selector, values, line_number)
    current = global_values
    for line_number, raw in enumerate(text.split('\n'), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        section = SECTION_REGEX.match(line)
        if section:
            current = {}
            sections.append(
                (
                    _parse_section_header(section.groups()[0], line_number),
                    current,
                    line_number,
                )
            )
            continue
        if '=' not in line:
            raise ConfigError('expected key = value, got %r' % line, None, line_number)
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in KEYS:
            raise ConfigError('unknown key', key, line_number)
        if key in current:
            raise ConfigError('key given twice', key, line_number)
        if current is not global_values and key in SWEEP_KEYS:
            raise ConfigError('sweep keys cannot be overridden', key, line_number)
        try:
            current[key] = (KEYS[key][0](value), line_number)
        except ValueError as e:
            raise ConfigError(str(e), key, line_number) from None
    for key in REQUIRED_KEYS:
        if key not in global_values:
            raise ConfigError('required key missing', key)
    fit_window = global_values.pop('fit_window', (analysis.DEFAULT_FIT_WINDOW, 0))[0]
    for _selector, values, line_number in sections:
        if 'fit_window' in values:
            raise ConfigError('fit_window is global only', 'fit_window', line_number)
    n_values = global_values.pop('n')[0]
    gamma_values = global_values.pop('gamma')[0]
    points = []
    for n, gamma in itertools.product(n_values, gamma_values):
        values = dict(global_values)
        for selector, overrides, _line in sections:
            if selector.get('n', n) == n and selector.get('gamma', gamma) == gamma:
                values.update(overrides)
        fields = {KEYS[key][1]: value for key, (value, _l) in values.items()}
        try:
            points.append(
                ensemble.EnsembleConfig(n_nodes=n, gamma=gamma, **fields)
            )
        except InvalidArgument as e:
            raise ConfigError(
                'invalid sweep point n=%d gamma=%g: %s' % (n, gamma, e)
            ) from None
    return RunConfig(tuple(points), fit_window, source)


def load_config(path):
    """Read and parse a configuration file."""
    try:
        with open(path, encoding='UTF-8') as file:
            text = file.read()
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError('cannot read %s: %s' % (path, e)) from None
    return parse_config(text, source=path)


def format_window(window):
    return 'auto' if window is None else '%r:%r' % tuple(window)


def format_config(config, fit_window=analysis.DEFAULT_FIT_WINDOW):
    """Render an EnsembleConfig and a fit window as configuration text which
    parses back to the same single sweep point."""
    lines = []
    for key, value in config.as_dict().items():
        if isinstance(value, bool):
            value = 'true' if value else 'false'
        elif isinstance(value, float):
            value = repr(value)
        lines.append('%s = %s' % (key, value))
    lines.append('fit_window = %s' % format_window(fit_window))
    return '\n'.join(lines) + '\n'


__all__ = [
    'ConfigError',
    'RunConfig',
    'load_config',
    'parse_config',
    'parse_window',
    'format_config',
    'format_window',
]
