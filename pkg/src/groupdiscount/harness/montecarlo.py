"""Monte Carlo checks of the key-management formulas."""

import math
from dataclasses import dataclass

import numpy as np

from .. import keymgmt


@dataclass(frozen=True)
class FailureEstimate:
    trials: int
    failures: int
    empirical: float
    formula: float
    z: float


def montecarlo_failure(l, n, d, trials=10 ** 5, seed=0, batch=200_000):
    """Empirical rate at which a random group of ``n`` finds no usable position.

    Each trial draws ``n`` independent identifiers; only their last ``l * d``
    digits matter, so chunks are drawn uniformly in ``[0, 10^d)``.  The
    batched agreement rule is the same smallest-free-position rule as
    ``keymgmt.agree_index``.
    """
    rng = np.random.default_rng(seed)
    failures = 0
    done = 0
    while done < trials:
        k = min(batch, trials - done)
        chunks = rng.integers(0, 10 ** d, size=(k, n, l), dtype=np.int64)
        failures += int(np.count_nonzero(keymgmt.agree_index_batch(chunks) == 0))
        done += k
    p = keymgmt.failure_probability(l, n, d)
    rate = failures / trials
    se = math.sqrt(p * (1 - p) / trials)
    z = (rate - p) / se if se > 0 else (0.0 if rate == p else math.inf)
    return FailureEstimate(trials, failures, rate, p, z)


@dataclass(frozen=True)
class AnonymityEstimate:
    population: int
    sharing: int
    fraction: float
    expected: float
    z: float


def montecarlo_anonymity(d, population=10 ** 5, seed=0, position=1):
    """Fraction of a random population holding user 0's pseudonym at ``position``.

    User 0 counts itself, so a population of one gives 1.0.  The others
    match independently with probability 10^-d; ``z`` measures their count
    against that binomial.
    """
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, 10, size=(population, position * d), dtype=np.int8)
    end = position * d
    chunk = ids[:, end - d:end] if d else ids
    same = np.all(chunk == chunk[0], axis=1)
    sharing = int(np.count_nonzero(same))
    others = population - 1
    p = keymgmt.anonymity_fraction(d)
    if others == 0:
        return AnonymityEstimate(population, sharing, 1.0, p, 0.0)
    se = math.sqrt(others * p * (1 - p))
    z = ((sharing - 1) - others * p) / se
    return AnonymityEstimate(population, sharing, sharing / population, p, z)
