# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""
Sinks for computed results.

Every result trapwalk writes to disk is an artifact with a fixed file name and
a fixed header. Tables are comma separated; lines starting with `#` carry
metadata and precede the header. Floating point numbers are written with 17
significant digits so that reading them back yields the same doubles.
Metadata and manifest files are `key = value` lines, the format of the
configuration files.
"""

import csv
import enum
import os

import numpy as np

FLOAT_FORMAT = '%.17g'


class MissingArtifacts(Exception):
    """A run directory lacks an artifact; `path` is the missing file."""

    def __init__(self, path):
        self.path = path
        super().__init__('missing artifact: %s' % path)


class Artifact(enum.Enum):
    """All files written by trapwalk."""

    configuration = 'configuration.csv'
    spectrum = 'spectrum.csv'
    survival = 'survival.csv'
    survival_avg = 'survival_avg.csv'
    survival_exact_avg = 'survival_exact_avg.csv'
    gamma_avg = 'gamma_avg.csv'
    metadata = 'metadata'
    manifest = 'manifest'
    resolved_config = 'resolved.conf'
    survival_trap_excluded = 'survival_trap_excluded.csv'
    fits = 'fits.csv'
    scaling = 'scaling.csv'
    density = 'density.csv'
    consistency = 'consistency.csv'

    def path(self, directory):
        return os.path.join(directory, self.value)


# Map every table to its header; the column order is part of the file format.
HEADERS = {
    Artifact.configuration: ('node_index', 'x1', 'x2', 'x3', 'is_trap'),
    Artifact.spectrum: ('l', 'epsilon', 'gamma'),
    Artifact.survival: ('t', 'tau', 'pi'),
    Artifact.survival_trap_excluded: ('t', 'tau', 'pi'),
    Artifact.survival_avg: ('t', 'tau', 'pi_mean', 'pi_min', 'pi_max', 'jensen_lb'),
    Artifact.survival_exact_avg: ('t', 'tau', 'pi_mean', 'pi_min', 'pi_max'),
    Artifact.gamma_avg: ('l', 'l_over_n', 'gamma_mean'),
    Artifact.fits: (
        'n',
        'gamma',
        'eta',
        'eta_err',
        'window_lo',
        'window_hi',
        'residual',
    ),
    Artifact.scaling: ('gamma', 'eta0', 'mu'),
    Artifact.density: ('gamma_bin', 'rho'),
    Artifact.consistency: (
        'n',
        'gamma',
        'laplace_max_rel_dev',
        'density_slope',
        'expected_slope',
    ),
}


def format_value(value):
    """Format a number for a table: integers as such, floats with 17 digits."""
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return '%d' % value
    return FLOAT_FORMAT % value


def write_table(path, artifact, rows, comments=()):
    """Write rows (iterables of numbers) below the artifact's header."""
    with open(path, 'w', encoding='UTF-8', newline='') as file:
        for comment in comments:
            file.write('# %s\n' % comment)
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(HEADERS[artifact])
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def provenance_comment(provenance):
    if provenance is None:
        return ()
    seed = 'ensemble' if provenance.seed is None else provenance.seed
    return (
        'n=%d gamma=%s seed=%s r=%d'
        % (
            provenance.n_nodes,
            FLOAT_FORMAT % provenance.gamma,
            seed,
            provenance.realizations,
        ),
    )


def write_configuration(path, config):
    rows = (
        (i + 1, x[0], x[1], x[2], config.is_trap(i))
        for i, x in enumerate(config.coords)
    )
    comment = 'geometry=%s seed=%d resample_count=%d delta_min=%s' % (
        config.geometry_kind.value,
        config.seed,
        config.resample_count,
        FLOAT_FORMAT % config.delta_min,
    )
    write_table(path, Artifact.configuration, rows, (comment,))


def write_spectrum(path, spectrum):
    rows = (
        (l + 1, eps, gamma)
        for l, (eps, gamma) in enumerate(zip(spectrum.real_parts, spectrum.decay_rates))
    )
    order = spectrum.sort_order.value if spectrum.sort_order else 'solver'
    write_table(path, Artifact.spectrum, rows, ('sort_order=%s' % order,))


def write_survival(path, curve):
    rows = zip(curve.grid.points, curve.grid.rescaled, curve.values)
    comments = ('kind=%s' % curve.kind.value,) + provenance_comment(curve.provenance)
    write_table(path, Artifact.survival, rows, comments)


def write_ensemble_survival(path, result):
    curve = result.avg_survival
    rows = zip(
        curve.grid.points,
        curve.grid.rescaled,
        curve.values,
        result.min_survival,
        result.max_survival,
        result.jensen_curve.values,
    )
    write_table(
        path, Artifact.survival_avg, rows, provenance_comment(curve.provenance)
    )


def write_exact_survival(path, result):
    curve = result.avg_exact_survival
    rows = zip(
        curve.grid.points,
        curve.grid.rescaled,
        curve.values,
        result.min_exact_survival,
        result.max_exact_survival,
    )
    write_table(
        path, Artifact.survival_exact_avg, rows, provenance_comment(curve.provenance)
    )


def write_rates(path, result):
    n = len(result.avg_sorted_rates)
    rows = (
        (l + 1, (l + 1) / n, gamma) for l, gamma in enumerate(result.avg_sorted_rates)
    )
    write_table(
        path,
        Artifact.gamma_avg,
        rows,
        provenance_comment(result.avg_survival.provenance),
    )


def write_density(path, density):
    write_table(
        path,
        Artifact.density,
        zip(density.bin_centers, density.densities),
        ('method=%s' % density.method,),
    )


def format_key_value(value):
    """Format a metadata value the way it is written to disk."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def write_key_values(path, mapping):
    """Write a mapping as `key = value` lines, in the mapping's order."""
    with open(path, 'w', encoding='UTF-8') as file:
        for key, value in mapping.items():
            file.write('%s = %s\n' % (key, format_key_value(value)))


def read_key_values(path):
    """Read a `key = value` file into a dict of strings."""
    if not os.path.exists(path):
        raise MissingArtifacts(path)
    result = {}
    with open(path, encoding='UTF-8') as file:
        for line in file:
            line = line.strip()
            if not line or line.startswith('#') or '=' not in line:
                continue
            key, value = line.split('=', 1)
            result[key.strip()] = value.strip()
    return result


def read_table(path, artifact):
    """Read a table artifact into a dict mapping column names to arrays.

    The header must match the artifact's header exactly.
    """
    if not os.path.exists(path):
        raise MissingArtifacts(path)
    with open(path, encoding='UTF-8') as file:
        lines = [l for l in file.read().split('\n') if l and not l.startswith('#')]
    expected = ','.join(HEADERS[artifact])
    if not lines or lines[0] != expected:
        raise ValueError(
            '%s: expected header %r, got %r'
            % (path, expected, lines[0] if lines else '')
        )
    data = np.loadtxt(lines[1:], delimiter=',', ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(HEADERS[artifact]))
    return {name: data[:, i] for i, name in enumerate(HEADERS[artifact])}


def read_metadata(directory):
    """Read the metadata file of a run directory."""
    return read_key_values(Artifact.metadata.path(directory))
