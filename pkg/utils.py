import zlib

import numpy as np

from hparams import hparams


def make_rng(seed, component):
    """Counter-based (Philox) generator for one named component of a run.

    The stream id is the CRC-32 of the component name, so 'adversary' and
    'player' draws never overlap for the same seed.
    """
    seed_seq = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(component.encode('utf-8')),))
    return np.random.Generator(np.random.Philox(seed_seq))


def sample_index(probs, rng):
    # Inverse CDF over index order with a single uniform draw
    cdf = np.cumsum(probs)
    index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right'))
    return min(index, len(probs) - 1)


def normalize_log_weights(log_weights):
    log_weights = np.asarray(log_weights, dtype=np.float64)
    return log_weights - np.max(log_weights)


def format_float(value, digits=None):
    digits = hparams.float_digits if digits is None else digits
    return '{:.{}g}'.format(float(value), digits)


def symmetrize(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    return 0.5 * (matrix + matrix.T)


def average_over_seeds(values):
    """Mean and standard error of per-seed results stacked on the first axis."""
    values = np.asarray(values, dtype=np.float64)
    mean = np.mean(values, axis=0)
    if values.shape[0] < 2:
        return mean, np.zeros_like(mean)

    stderr = np.std(values, axis=0, ddof=1) / np.sqrt(values.shape[0])
    return mean, stderr
