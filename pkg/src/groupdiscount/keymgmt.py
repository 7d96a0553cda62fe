"""Pseudonym key vectors derived from user identifiers.

A user identifier ``n_U`` is a decimal digit string.  Position ``j`` of its
key vector holds the ``j``-th ``d``-digit chunk counted from the right,
encoded together with ``j``.  Users sharing a chunk at a position share the
pseudonym there, which is where the anonymity comes from.
"""

import re
from dataclasses import dataclass
from fractions import Fraction
from math import perm

import numpy as np

from .errors import DomainError

MAX_COMPACT_POSITIONS = 9
SEPARATOR = "-"
PSEUDONYM_PATTERN = r"[1-9][0-9]+|[0-9]+-[0-9]+"


@dataclass(frozen=True)
class UserIdentifier:
    digits: str

    def __post_init__(self):
        if not isinstance(self.digits, str) or not self.digits or not self.digits.isdigit():
            raise DomainError("identifier must be a non-empty string of decimal digits")
        if not self.digits.isascii():
            raise DomainError("identifier must use ASCII digits")

    def chunk(self, j, d):
        """The ``j``-th ``d``-digit chunk from the right (``j`` is 1-based)."""
        end = len(self.digits) - (j - 1) * d
        return self.digits[end - d:end]

    def __len__(self):
        return len(self.digits)


def encode_pseudonym(j, chunk, l, d):
    """``decimal(j) || chunk`` for up to 9 positions, ``j-chunk`` beyond."""
    if not 1 <= j <= l:
        raise DomainError(f"position {j} outside [1, {l}]")
    chunk = str(chunk).zfill(d)
    if len(chunk) != d or not chunk.isdigit():
        raise DomainError(f"chunk {chunk!r} is not {d} digits")
    if l <= MAX_COMPACT_POSITIONS:
        return f"{j}{chunk}"
    return f"{j}{SEPARATOR}{chunk}"


def decode_pseudonym(pk, l, d):
    if l <= MAX_COMPACT_POSITIONS:
        m = re.fullmatch(rf"([1-9])([0-9]{{{d}}})", pk)
    else:
        m = re.fullmatch(rf"([1-9][0-9]*){SEPARATOR}([0-9]{{{d}}})", pk)
    if not m or not 1 <= int(m.group(1)) <= l:
        raise DomainError(f"{pk!r} is not a pseudonym for l={l}, d={d}")
    return int(m.group(1)), m.group(2)


@dataclass(frozen=True)
class KeyVector:
    entries: tuple
    l: int
    d: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if len(self.entries) != self.l:
            raise DomainError("key vector length differs from l")

    def __getitem__(self, j):
        """Pseudonym at 1-based position ``j``."""
        return self.entries[j - 1]

    def chunks(self):
        return [decode_pseudonym(pk, self.l, self.d)[1] for pk in self.entries]


def derive_key_vector(identifier, l, d=1):
    if not isinstance(identifier, UserIdentifier):
        identifier = UserIdentifier(identifier)
    if l < 1 or d < 1:
        raise DomainError("l and d must be at least 1")
    if len(identifier) < l * d:
        raise DomainError(f"identifier has {len(identifier)} digits, need at least {l * d}")
    return KeyVector(tuple(encode_pseudonym(j, identifier.chunk(j, d), l, d) for j in range(1, l + 1)), l, d)


# ------------------------------------------------------------ probabilities

def failure_probability_exact(l, n, d=1):
    """F(l, n, d) as an exact rational."""
    if l < 1 or n < 1 or d < 1:
        raise DomainError("l, n and d must be at least 1")
    q = 10 ** d
    if n > q:
        return Fraction(1)
    all_distinct = Fraction(perm(q, n), q ** n)
    return (1 - all_distinct) ** l


def failure_probability(l, n, d=1):
    return float(failure_probability_exact(l, n, d))


def failure_probability_single_digit(l, n):
    """The one-digit-per-position case, written out term by term."""
    num = 1
    for i in range(n):
        num *= 10 - i
    return float((1 - Fraction(num, 10 ** n)) ** l)


def anonymity_fraction(d):
    """Expected share of users holding a given pseudonym."""
    if d < 1:
        raise DomainError("d must be at least 1")
    return 10.0 ** -d


# --------------------------------------------------------- index agreement

@dataclass(frozen=True)
class IndexAgreement:
    j: int
    pseudonyms: tuple

    ok = True


@dataclass(frozen=True)
class AgreementFailure:
    reason: str

    ok = False


def agree_index(vectors):
    """Smallest position at which every member's pseudonym is distinct.

    ``vectors`` is in canonical order: master first, then join order.
    Returns an ``AgreementFailure`` when no position works.
    """
    vectors = list(vectors)
    if not vectors:
        raise DomainError("agreement needs at least one key vector")
    params = {(v.l, v.d) for v in vectors}
    if len(params) != 1:
        raise DomainError("key vectors were derived with different (l, d)")
    (l, _), = params
    for j in range(1, l + 1):
        column = [v[j] for v in vectors]
        if len(set(column)) == len(column):
            return IndexAgreement(j, tuple(column))
    return AgreementFailure(f"every one of the {l} positions has a collision")


def agree_index_batch(chunks):
    """Vectorized ``agree_index`` over integer chunk values.

    ``chunks`` has shape ``(trials, n, l)``.  Returns the chosen 1-based
    position per trial, 0 where agreement fails.
    """
    chunks = np.asarray(chunks)
    trials, n, l = chunks.shape
    if n == 1:
        return np.ones(trials, dtype=np.int64)
    s = np.sort(chunks, axis=1)
    distinct = np.all(s[:, 1:, :] != s[:, :-1, :], axis=1)  # (trials, l)
    first = np.argmax(distinct, axis=1) + 1
    return np.where(distinct.any(axis=1), first, 0)
