# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""This module contains the CheckpointStore, remembering realizations of an
ensemble which have been computed already. An interrupted ensemble run picks
up where it stopped, since only the missing realizations need to be computed.

Checkpoint format, one file per realization, named real_<r>.csv:

    # checkpoint_version=1.1
    # gamma_r=<trap strength> seed=<seed> resample_count=<count> <key>=<value>...
    l,gamma
    1,<smallest decay rate>
    ...

Rates are stored sorted ascending with 17 significant digits, hence they are
read back bit-identically. The trailing key=value pairs record the parameters
of the ensemble which determine the rates besides seed and size, Γ or the
geometry for instance; a checkpoint is only reused if they all match.
"""

import dataclasses
import logging
import os
import re

import numpy as np

from .sink import FLOAT_FORMAT

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = '1.1'
#: fields of the second line which are not ensemble parameters
ENTRY_FIELDS = ('gamma_r', 'seed', 'resample_count')
FILE_NAME_REGEX = re.compile(r'^real_(\d+)\.csv$')
PARAMETER_REGEX = re.compile(r'^[^\s=]+=[^\s=]+$')
HEADER = 'l,gamma'


class CheckpointParserException(Exception):
    """Specialized exception class for handling errors while reading
    checkpoints."""

    pass


@dataclasses.dataclass(frozen=True)
class CheckpointEntry:
    realization: int
    seed: int
    gamma_r: float
    sorted_rates: np.ndarray
    resample_count: int = 0
    parameters: dict = dataclasses.field(default_factory=dict)


def _as_strings(parameters):
    return {str(key): str(value) for key, value in parameters.items()}


def _parse_fields(line):
    """Parse '# key=value key=value' into a dict."""
    fields = {}
    for token in line.lstrip('#').split():
        if '=' not in token:
            raise ValueError('expected key=value, got %r' % token)
        key, value = token.split('=', 1)
        fields[key] = value
    return fields


class CheckpointStore:
    """Completed realizations of one ensemble, kept in a directory.

    If the argument keep_old_checkpoints is True, the store raises a
    CheckpointParserException if a checkpoint could not be read or belongs to
    a different configuration (stale seed, size or parameters). If set to False, it
    discards all checkpoints and starts empty.

    Example:

    store = CheckpointStore('run/checkpoints')
    store.save(CheckpointEntry(1, seed, gamma_r, rates))
    assert store.contains(1)
    """

    def __init__(self, directory, keep_old_checkpoints=True):
        self.__directory = directory
        self.__keep_old_checkpoints = keep_old_checkpoints
        self.__entries = {}
        os.makedirs(directory, exist_ok=True)
        try:
            self._read()
        except CheckpointParserException:
            if keep_old_checkpoints:
                raise
            self.clear()

    def __len__(self):
        """Return number of completed realizations."""
        return len(self.__entries)

    @property
    def directory(self):
        return self.__directory

    def path_for(self, realization):
        return os.path.join(self.__directory, 'real_%d.csv' % realization)

    def _read(self):
        """Read all checkpoints found in the directory.

        :raises CheckpointParserException if a checkpoint could not be parsed
        """
        for file_name in sorted(os.listdir(self.__directory)):
            match = FILE_NAME_REGEX.match(file_name)
            if not match:
                continue
            path = os.path.join(self.__directory, file_name)
            entry = self._parse(path, int(match.groups()[0]))
            self.__entries[entry.realization] = entry

    def _parse(self, path, realization):
        def raise_error(msg):
            raise CheckpointParserException(
                'error while reading checkpoint %s: %s\nPlease delete the '
                'checkpoints or run again without resuming.'
                % (os.path.abspath(path), msg)
            )

        try:
            with open(path, encoding='UTF-8') as file:
                lines = file.read().split('\n')
        except (OSError, UnicodeDecodeError) as e:
            raise_error(str(e))
        if len(lines) < 3:
            raise_error('file is truncated')
        # pylint: disable=broad-except
        try:
            version = _parse_fields(lines[0]).get('checkpoint_version')
            if version != CHECKPOINT_VERSION:
                raise_error(
                    'checkpoint has version %s, expected %s'
                    % (version, CHECKPOINT_VERSION)
                )
            fields = _parse_fields(lines[1])
            if lines[2] != HEADER:
                raise_error('expected header %r' % HEADER)
            rows = np.loadtxt([l for l in lines[3:] if l], delimiter=',', ndmin=2)
            return CheckpointEntry(
                realization=realization,
                seed=int(fields['seed']),
                gamma_r=float(fields['gamma_r']),
                sorted_rates=rows[:, 1],
                resample_count=int(fields.get('resample_count', 0)),
                parameters={
                    key: value
                    for key, value in fields.items()
                    if key not in ENTRY_FIELDS
                },
            )
        except CheckpointParserException:
            raise
        except Exception as e:
            raise_error('%s: %s' % (type(e).__name__, e))

    def clear(self):
        """Remove all checkpoint files and forget all entries."""
        for file_name in os.listdir(self.__directory):
            if FILE_NAME_REGEX.match(file_name):
                os.remove(os.path.join(self.__directory, file_name))
        self.__entries = {}

    def check(self, n_nodes, seed_for, parameters=None):
        """Verify that all entries belong to the current configuration.

        `seed_for(r)` returns the seed the configuration derives for
        realization r; `parameters` maps the remaining parameter names to their
        string values as passed to save(). Stale entries raise a
        CheckpointParserException, or are removed if old checkpoints were not
        to be kept.
        """
        parameters = _as_strings(parameters or {})
        for realization, entry in sorted(self.__entries.items()):
            if (
                len(entry.sorted_rates) == n_nodes
                and entry.seed == seed_for(realization)
                and _as_strings(entry.parameters) == parameters
            ):
                continue
            logger.debug(
                'stale checkpoint %d: seed %d, parameters %s',
                realization,
                entry.seed,
                entry.parameters,
            )
            if self.__keep_old_checkpoints:
                raise CheckpointParserException(
                    'checkpoint %s was computed for a different configuration'
                    % self.path_for(realization)
                )
            os.remove(self.path_for(realization))
            del self.__entries[realization]

    def save(self, entry):
        """Write the checkpoint of a realization.

        The file is written under a temporary name first and renamed
        afterwards, so no partial checkpoint survives an interruption.
        """
        for key, value in entry.parameters.items():
            token = '%s=%s' % (key, value)
            if key in ENTRY_FIELDS or not PARAMETER_REGEX.match(token):
                raise ValueError('cannot store parameter %r=%r' % (key, value))
        path = self.path_for(entry.realization)
        tmp_path = path + '.tmp'
        with open(tmp_path, 'w', encoding='UTF-8') as file:
            file.write('# checkpoint_version=%s\n' % CHECKPOINT_VERSION)
            file.write(
                '# gamma_r=%s seed=%d resample_count=%d%s\n'
                % (
                    FLOAT_FORMAT % entry.gamma_r,
                    entry.seed,
                    entry.resample_count,
                    ''.join(
                        ' %s=%s' % item for item in entry.parameters.items()
                    ),
                )
            )
            file.write(HEADER + '\n')
            for l, gamma in enumerate(entry.sorted_rates):
                file.write(('%d,' + FLOAT_FORMAT + '\n') % (l + 1, gamma))
        os.replace(tmp_path, path)
        self.__entries[entry.realization] = entry

    def contains(self, realization):
        return realization in self.__entries

    def load(self, realization):
        """Return the entry of a realization; KeyError if there is none."""
        return self.__entries[realization]

    def completed(self):
        """Sorted list of realizations with a checkpoint."""
        return sorted(self.__entries)
