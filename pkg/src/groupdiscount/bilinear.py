"""Instrumented Type-3 bilinear group over BLS12-381.

Group arithmetic is delegated to RELIC (through ``petrelic``); this module
adds group tags, canonical serialization with subgroup checks, and
per-context operation counters.  Groups are written multiplicatively:
``combine`` is the group law and ``power`` raises an element to a scalar.

Counters record *logical* calls, one per ``combine``/``power``/``pairing``.
Inversion and hashing onto the curve are not counted.
"""

import contextlib
import contextvars
import hashlib
import secrets
from dataclasses import dataclass, field

from petrelic.bn import Bn
from petrelic.multiplicative.pairing import (
    G1 as _G1,
    G2 as _G2,
    GT as _GT,
    G1Element as _G1Element,
    G2Element as _G2Element,
    GTElement as _GTElement,
)

from .errors import ContractViolation, SerializationError

CURVE_NAME = "BLS12-381"
SECURITY_BITS = 128
ORDER = int(_G1.order())
SCALAR_BYTES = 32

G1, G2, GT = "G1", "G2", "GT"
_TAG_BYTE = {G1: 0x01, G2: 0x02, GT: 0x03}
_BYTE_TAG = {v: k for k, v in _TAG_BYTE.items()}
_GROUP = {G1: _G1, G2: _G2, GT: _GT}
_ELEMENT = {G1: _G1Element, G2: _G2Element, GT: _GTElement}


# ---------------------------------------------------------------- scalars

@dataclass(frozen=True)
class Scalar:
    """Element of Z_p, p the prime order of the pairing groups."""

    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", int(self.value) % ORDER)

    @classmethod
    def random(cls, rng=None, nonzero=True):
        rng = rng or secrets.SystemRandom()
        lo = 1 if nonzero else 0
        return cls(rng.randrange(lo, ORDER))

    @classmethod
    def from_hash(cls, domain, *parts):
        """Hash byte strings to a scalar, domain separated.

        A 512-bit digest is reduced mod p so the bias is below 2^-250.
        """
        h = hashlib.sha512()
        for p in (domain, *parts):
            p = p.encode() if isinstance(p, str) else bytes(p)
            h.update(len(p).to_bytes(4, "big"))
            h.update(p)
        return cls(int.from_bytes(h.digest(), "big"))

    def to_bytes(self):
        return self.value.to_bytes(SCALAR_BYTES, "big")

    @classmethod
    def from_bytes(cls, data):
        if len(data) != SCALAR_BYTES:
            raise SerializationError(f"scalar must be {SCALAR_BYTES} bytes")
        v = int.from_bytes(data, "big")
        if v >= ORDER:
            raise SerializationError("scalar not in canonical range")
        return cls(v)

    def inverse(self):
        if self.value == 0:
            raise ZeroDivisionError("zero has no inverse in Z_p")
        return Scalar(pow(self.value, -1, ORDER))

    def __int__(self):
        return self.value

    def __add__(self, other):
        return Scalar(self.value + int(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Scalar(self.value - int(other))

    def __rsub__(self, other):
        return Scalar(int(other) - self.value)

    def __mul__(self, other):
        return Scalar(self.value * int(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * Scalar(other).inverse()

    def __neg__(self):
        return Scalar(-self.value)

    def __bool__(self):
        return self.value != 0


# --------------------------------------------------------------- counters

@dataclass
class OpCounters:
    context_label: str = ""
    multiplications: int = 0
    exponentiations: int = 0
    pairings: int = 0

    def as_tuple(self):
        return (self.multiplications, self.exponentiations, self.pairings)

    def reset(self):
        self.multiplications = self.exponentiations = self.pairings = 0


_active = contextvars.ContextVar("groupdiscount_counters", default=())


@contextlib.contextmanager
def counter_scope(label=""):
    """Accumulate operation counts of everything executed inside the block.

    Scopes nest; an operation is recorded in every enclosing scope.  The
    stack lives in a ``ContextVar`` so threads and asyncio tasks never
    share an accumulator.
    """
    counters = OpCounters(context_label=label)
    token = _active.set(_active.get() + (counters,))
    try:
        yield counters
    finally:
        _active.reset(token)


def _bump(attr):
    for c in _active.get():
        setattr(c, attr, getattr(c, attr) + 1)


# --------------------------------------------------------------- elements

class GroupElement:
    """An element of G1, G2 or GT tagged with its group."""

    __slots__ = ("group_tag", "_pt")

    def __init__(self, group_tag, pt):
        if group_tag not in _GROUP:
            raise ContractViolation(f"unknown group tag {group_tag!r}")
        self.group_tag = group_tag
        self._pt = pt

    @classmethod
    def identity(cls, group_tag):
        return cls(group_tag, _GROUP[group_tag].neutral_element())

    @classmethod
    def generator(cls, group_tag):
        return cls(group_tag, _GROUP[group_tag].generator())

    @classmethod
    def hash_to(cls, group_tag, domain, data):
        if group_tag not in (G1, G2):
            raise ContractViolation("can only hash onto G1 or G2")
        msg = hashlib.sha256(domain.encode()).digest() + bytes(data)
        return cls(group_tag, _GROUP[group_tag].hash_to_point(msg))

    def is_identity(self):
        return self._pt == _GROUP[self.group_tag].neutral_element()

    def inverse(self):
        return GroupElement(self.group_tag, self._pt.inverse())

    def to_bytes(self):
        return bytes([_TAG_BYTE[self.group_tag]]) + self._pt.to_binary()

    @classmethod
    def from_bytes(cls, data, expected_tag=None):
        """Decode and check that the point lies in the prime-order subgroup."""
        data = bytes(data)
        if not data:
            raise SerializationError("empty group element encoding")
        tag = _BYTE_TAG.get(data[0])
        if tag is None:
            raise SerializationError(f"unknown group tag byte {data[0]:#04x}")
        if expected_tag is not None and tag != expected_tag:
            raise SerializationError(f"expected {expected_tag} element, got {tag}")
        try:
            pt = _ELEMENT[tag].from_binary(data[1:])
        except Exception as exc:
            raise SerializationError(f"invalid {tag} encoding") from exc
        el = cls(tag, pt)
        # RELIC reports the point at infinity as invalid; it is the identity.
        if not el.is_identity() and not pt.is_valid():
            raise SerializationError(f"{tag} point is not in the prime-order subgroup")
        if el.to_bytes() != data:
            raise SerializationError(f"non-canonical {tag} encoding")
        return el

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group_tag == other.group_tag and self._pt == other._pt

    def __hash__(self):
        return hash(self.to_bytes())

    def __repr__(self):
        return f"GroupElement({self.group_tag}, {self.to_bytes()[1:9].hex()}...)"

    def __mul__(self, other):
        return combine(self, other)

    def __pow__(self, k):
        return power(self, k)


def combine(a, b):
    """Group law; counts one multiplication."""
    if a.group_tag != b.group_tag:
        raise ContractViolation(f"cannot combine {a.group_tag} with {b.group_tag}")
    _bump("multiplications")
    return GroupElement(a.group_tag, a._pt * b._pt)


def power(a, k):
    """``a`` raised to the scalar ``k``; counts one exponentiation."""
    _bump("exponentiations")
    return GroupElement(a.group_tag, a._pt ** Bn.from_num(int(k) % ORDER))


def pairing(p, q):
    """e: G1 x G2 -> GT; counts one pairing."""
    if p.group_tag != G1 or q.group_tag != G2:
        raise ContractViolation(f"pairing needs (G1, G2), got ({p.group_tag}, {q.group_tag})")
    _bump("pairings")
    return GroupElement(GT, p._pt.pair(q._pt))


@dataclass(frozen=True)
class Backend:
    """Curve description handed out with public parameters."""

    curve: str = CURVE_NAME
    order: int = ORDER
    security_bits: int = SECURITY_BITS
    tags: tuple = field(default=(G1, G2, GT))


BACKEND = Backend()
