"""Identity-based dynamic threshold (IBDT) signatures.

Five algorithms, ``setup``, ``keygen``, ``sign``, ``comb`` and ``verify``,
plus a split of ``sign`` and ``comb`` into a policy-dependent precomputation
and a fast per-message phase.

Construction
------------
Setup draws ``alpha, gamma`` and publishes ``h^(gamma^k)`` for
``k = 0..n`` in G2 and ``v = e(g, h)^alpha``.  Identities and ``n - 1``
public *dummy* identities are hashed to scalars ``x``; the key of ``x`` is
``g^(alpha / (gamma + x))`` in G1.  Every user key also carries the dummy keys.

For a policy with threshold ``t`` signed by ``t`` members, the aggregation
set ``A`` is the signers' scalars plus the first ``n - t`` dummies, so
``|A| = n`` whatever ``t`` is.  With ``P_A(z) = prod_{x in A} (z + x)``
and the partial-fraction weights ``lambda_x = prod_{y != x} 1/(y - x)``::

    prod_x key_x^lambda_x = g^(alpha / P_A(gamma))

Each signer contributes ``key^lambda * H(M)^r`` and ``H_A^r`` where
``H_A = h^P_A(gamma)`` is computed from the published powers of ``gamma``.
The combiner adds its dummy keys for the ``n - t`` padding slots.  The
combined signature ``(s1, s2)`` verifies iff::

    e(s1, H_A) == v * e(H(M), s2)

which is two pairings, constant in ``n`` and ``t``.  The signature also
carries a fixed-width bitmask naming which members of ``S`` signed, so a
policy with ``t < |S|`` works once the signing subset is fixed.
"""

import ast
import hashlib
import operator
import re
import struct
from dataclasses import dataclass, field
from functools import lru_cache

from . import bilinear as bg
from .bilinear import G1, G2, GT, GroupElement, Scalar
from .codec import decode_fields, decode_uint, encode_fields, encode_uint, decode_text, encode_text
from .errors import (
    BindingError,
    ConfigurationError,
    DomainError,
    GroupDiscountError,
    PolicyError,
    SerializationError,
    ThresholdError,
)

VERSION = 0x0001
SUPPORTED_LAMBDA = (bg.SECURITY_BITS,)
N_MAX_LIMIT = 2 ** 16
DECIMAL_IDENTITIES = r"[0-9]{1,64}"

_DST_ID = "groupdiscount/ibdt/identity/v1"
_DST_DUMMY = "groupdiscount/ibdt/dummy/v1"
_DST_MSG = "groupdiscount/ibdt/message/v1"
_DST_POLICY = "groupdiscount/ibdt/policy/v1"


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class PublicParams:
    lam: int
    n_max: int
    identity_universe: str
    g: GroupElement
    h: GroupElement

    def admits(self, identity):
        return isinstance(identity, str) and re.fullmatch(self.identity_universe, identity) is not None

    def dummy_scalars(self):
        return _dummy_scalars(self.n_max)

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_uint(self.lam, 2), encode_uint(self.n_max, 4),
            encode_text(self.identity_universe), self.g.to_bytes(), self.h.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data):
        lam, n, uni, g, h = decode_fields(data, VERSION, 5)
        return cls(decode_uint(lam, 2), decode_uint(n, 4), decode_text(uni),
                   GroupElement.from_bytes(g, G1), GroupElement.from_bytes(h, G2))


@dataclass(frozen=True)
class MasterPublicKey:
    h_powers: tuple  # h^(gamma^k), k = 0..n_max
    v: GroupElement  # e(g, h)^alpha

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_fields(VERSION, [p.to_bytes() for p in self.h_powers]), self.v.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data):
        powers, v = decode_fields(data, VERSION, 2)
        return cls(tuple(GroupElement.from_bytes(p, G2) for p in decode_fields(powers, VERSION)),
                   GroupElement.from_bytes(v, GT))


@dataclass(frozen=True)
class MasterSecretKey:
    alpha: Scalar
    gamma: Scalar

    def __repr__(self):
        return "MasterSecretKey(<redacted>)"


@dataclass(frozen=True)
class MasterKeyPair:
    mpk: MasterPublicKey
    msk: MasterSecretKey = field(repr=False)


@dataclass(frozen=True)
class IdentitySecretKey:
    identity: str
    key: GroupElement
    dummy_keys: tuple  # keys of the n_max - 1 dummy identities

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_text(self.identity), self.key.to_bytes(),
            encode_fields(VERSION, [k.to_bytes() for k in self.dummy_keys]),
        ])

    @classmethod
    def from_bytes(cls, data):
        ident, key, dummies = decode_fields(data, VERSION, 3)
        return cls(decode_text(ident), GroupElement.from_bytes(key, G1),
                   tuple(GroupElement.from_bytes(k, G1) for k in decode_fields(dummies, VERSION)))


@dataclass(frozen=True)
class ThresholdPolicy:
    """Gamma = (t, S); ``members`` is ordered and pairwise distinct."""

    t: int
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))

    @classmethod
    def all_of(cls, members):
        members = tuple(members)
        return cls(len(members), members)

    def check(self, pms):
        if not isinstance(self.t, int) or not 1 <= self.t <= len(self.members) <= pms.n_max:
            raise PolicyError(f"need 1 <= t <= |S| <= {pms.n_max}, got t={self.t}, |S|={len(self.members)}")
        if len(set(self.members)) != len(self.members):
            raise PolicyError("policy members are not pairwise distinct")
        for m in self.members:
            if not pms.admits(m):
                raise DomainError(f"identity {m!r} is outside the identity universe")

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_uint(self.t, 4), encode_fields(VERSION, [encode_text(m) for m in self.members]),
        ])

    @classmethod
    def from_bytes(cls, data):
        t, members = decode_fields(data, VERSION, 2)
        return cls(decode_uint(t, 4), tuple(decode_text(m) for m in decode_fields(members, VERSION)))


@dataclass(frozen=True)
class PartialSignature:
    signer_identity: str
    signers: tuple
    policy_digest: bytes
    s1: GroupElement
    s2: GroupElement

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_text(self.signer_identity),
            encode_fields(VERSION, [encode_text(s) for s in self.signers]),
            self.policy_digest, self.s1.to_bytes(), self.s2.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data):
        ident, signers, digest, s1, s2 = decode_fields(data, VERSION, 5)
        return cls(decode_text(ident), tuple(decode_text(s) for s in decode_fields(signers, VERSION)),
                   bytes(digest), GroupElement.from_bytes(s1, G1), GroupElement.from_bytes(s2, G2))


@dataclass(frozen=True)
class CombinedSignature:
    """Two group elements plus a ``ceil(n_max / 8)``-byte signer mask.

    The serialized size depends only on ``n_max``.  ``policy`` is carried
    for convenience and is not part of the encoding.
    """

    s1: GroupElement
    s2: GroupElement
    signer_mask: bytes
    policy: ThresholdPolicy = field(default=None, compare=False)

    def to_bytes(self):
        return encode_fields(VERSION, [self.s1.to_bytes(), self.s2.to_bytes(), self.signer_mask])

    @classmethod
    def from_bytes(cls, data, policy=None):
        s1, s2, mask = decode_fields(data, VERSION, 3)
        return cls(GroupElement.from_bytes(s1, G1), GroupElement.from_bytes(s2, G2), bytes(mask), policy)


@dataclass(frozen=True)
class SignPrecomputation:
    identity: str
    policy: ThresholdPolicy
    signers: tuple
    policy_digest: bytes
    h_agg: GroupElement  # H_A
    weighted_key: GroupElement  # key^lambda

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_text(self.identity), self.policy.to_bytes(),
            encode_fields(VERSION, [encode_text(s) for s in self.signers]),
            self.policy_digest, self.h_agg.to_bytes(), self.weighted_key.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data):
        ident, pol, signers, digest, h_agg, wk = decode_fields(data, VERSION, 6)
        return cls(decode_text(ident), ThresholdPolicy.from_bytes(pol),
                   tuple(decode_text(s) for s in decode_fields(signers, VERSION)), bytes(digest),
                   GroupElement.from_bytes(h_agg, G2), GroupElement.from_bytes(wk, G1))


@dataclass(frozen=True)
class CombPrecomputation:
    identity: str
    policy: ThresholdPolicy
    signers: tuple
    policy_digest: bytes
    n_max: int
    dummy_part: GroupElement

    def to_bytes(self):
        return encode_fields(VERSION, [
            encode_text(self.identity), self.policy.to_bytes(),
            encode_fields(VERSION, [encode_text(s) for s in self.signers]),
            self.policy_digest, encode_uint(self.n_max, 4), self.dummy_part.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data):
        ident, pol, signers, digest, n, dp = decode_fields(data, VERSION, 6)
        return cls(decode_text(ident), ThresholdPolicy.from_bytes(pol),
                   tuple(decode_text(s) for s in decode_fields(signers, VERSION)), bytes(digest),
                   decode_uint(n, 4), GroupElement.from_bytes(dp, G1))


# ---------------------------------------------------------------- helpers

@lru_cache(maxsize=4096)
def identity_scalar(identity):
    return Scalar.from_hash(_DST_ID, identity)


@lru_cache(maxsize=64)
def _dummy_scalars(n_max):
    return tuple(Scalar.from_hash(_DST_DUMMY, struct.pack(">I", j)) for j in range(1, n_max))


def _poly_from_roots(xs):
    """Coefficients (constant term first) of prod (z + x)."""
    coeffs = [1]
    p = bg.ORDER
    for x in xs:
        x = int(x)
        nxt = [0] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            nxt[i] = (nxt[i] + c * x) % p
            nxt[i + 1] = (nxt[i + 1] + c) % p
        coeffs = nxt
    return coeffs


def _partial_fraction_weight(xs, i):
    p = bg.ORDER
    den = 1
    for j, xj in enumerate(xs):
        if j != i:
            den = den * (int(xj) - int(xs[i])) % p
    return Scalar(pow(den, -1, p))


def _aggregate_h(mpk, xs):
    coeffs = _poly_from_roots(xs)
    if len(coeffs) > len(mpk.h_powers):
        raise PolicyError("aggregation set larger than the setup bound")
    acc = mpk.h_powers[0] ** coeffs[0]
    for k in range(1, len(coeffs)):
        acc = acc * (mpk.h_powers[k] ** coeffs[k])
    return acc


def _resolve_signers(gamma, signers):
    if signers is None:
        if gamma.t != len(gamma.members):
            raise PolicyError("policy has t < |S|: the signing subset must be given explicitly")
        return gamma.members
    signers = tuple(signers)
    if len(signers) != gamma.t or len(set(signers)) != len(signers):
        raise PolicyError(f"signing subset must hold exactly t={gamma.t} distinct members")
    if any(s not in gamma.members for s in signers):
        raise PolicyError("signing subset contains a non-member")
    return tuple(m for m in gamma.members if m in signers)


def _aggregation_set(pms, gamma, signers):
    xs = [identity_scalar(s) for s in signers]
    xs += list(pms.dummy_scalars()[: pms.n_max - gamma.t])
    if len({int(x) for x in xs}) != len(xs):
        raise PolicyError("identity scalars collide inside the aggregation set")
    return xs


def signer_mask(gamma, signers, n_max):
    bits = 0
    for i, m in enumerate(gamma.members):
        if m in signers:
            bits |= 1 << i
    return bits.to_bytes((n_max + 7) // 8, "big")


def signers_from_mask(gamma, mask, n_max):
    if len(mask) != (n_max + 7) // 8:
        raise SerializationError("signer mask has the wrong width")
    bits = int.from_bytes(mask, "big")
    if bits >> len(gamma.members):
        raise PolicyError("signer mask names positions outside S")
    return tuple(m for i, m in enumerate(gamma.members) if bits >> i & 1)


def policy_digest(gamma, signers, msg=None):
    """Digest binding a partial to (Msg, Gamma, signing subset).

    With ``msg=None`` only the policy part is bound; precomputations use it.
    """
    parts = [gamma.to_bytes(), encode_fields(VERSION, [encode_text(s) for s in signers])]
    if msg is not None:
        parts.append(bytes(msg))
    return hashlib.sha256(encode_fields(VERSION, [encode_text(_DST_POLICY), *parts])).digest()


def _message_point(gamma, signers, msg):
    return GroupElement.hash_to(G1, _DST_MSG, policy_digest(gamma, signers, msg))


def _check_identity(pms, identity):
    if not pms.admits(identity):
        raise DomainError(f"identity {identity!r} is outside the identity universe")


# -------------------------------------------------------------- algorithms

def setup(lam, identity_universe=DECIMAL_IDENTITIES, n_max=10, rng=None):
    """Trusted setup. Returns ``(pms, MasterKeyPair)``."""
    if lam not in SUPPORTED_LAMBDA:
        raise ConfigurationError(f"security parameter {lam} unsupported by {bg.CURVE_NAME}")
    if not isinstance(n_max, int) or not 1 <= n_max <= N_MAX_LIMIT:
        raise ConfigurationError(f"n_max must lie in [1, {N_MAX_LIMIT}]")
    try:
        re.compile(identity_universe)
    except re.error as exc:
        raise ConfigurationError("identity universe is not a valid pattern") from exc
    alpha = Scalar.random(rng)
    gamma = Scalar.random(rng)
    g = GroupElement.generator(G1)
    h = GroupElement.generator(G2)
    h_powers = tuple(h ** pow(gamma.value, k, bg.ORDER) for k in range(n_max + 1))
    v = bg.pairing(g, h) ** alpha
    pms = PublicParams(lam, n_max, identity_universe, g, h)
    for x in pms.dummy_scalars():
        if int(x + gamma) == 0:
            raise ConfigurationError("degenerate setup draw; retry with fresh randomness")
    return pms, MasterKeyPair(MasterPublicKey(h_powers, v), MasterSecretKey(alpha, gamma))


def _extract(pms, msk, x):
    denom = msk.gamma + x
    if not denom:
        raise DomainError("identity scalar hits the master trapdoor")
    return pms.g ** (msk.alpha / denom)


def keygen(pms, mpk, msk, identity):
    _check_identity(pms, identity)
    key = _extract(pms, msk, identity_scalar(identity))
    dummies = tuple(_extract(pms, msk, x) for x in pms.dummy_scalars())
    return IdentitySecretKey(identity, key, dummies)


def key_is_consistent(pms, mpk, sk):
    """Check ``e(K, h^(gamma + x)) == v`` for the identity and every dummy key."""
    try:
        if not pms.admits(sk.identity) or len(sk.dummy_keys) != pms.n_max - 1:
            return False
        pairs = [(identity_scalar(sk.identity), sk.key)]
        pairs += list(zip(pms.dummy_scalars(), sk.dummy_keys))
        for x, k in pairs:
            if k.group_tag != G1 or k.is_identity():
                return False
            shifted = mpk.h_powers[1] * (mpk.h_powers[0] ** x)
            if bg.pairing(k, shifted) != mpk.v:
                return False
        return True
    except GroupDiscountError:
        return False


def sign_precompute(pms, mpk, sk, gamma, signers=None):
    gamma.check(pms)
    signers = _resolve_signers(gamma, signers)
    if sk.identity not in signers:
        raise PolicyError(f"{sk.identity!r} is not a signer under this policy")
    xs = _aggregation_set(pms, gamma, signers)
    weight = _partial_fraction_weight(xs, signers.index(sk.identity))
    return SignPrecomputation(
        identity=sk.identity,
        policy=gamma,
        signers=signers,
        policy_digest=policy_digest(gamma, signers),
        h_agg=_aggregate_h(mpk, xs),
        weighted_key=sk.key ** weight,
    )


def fast_sign(pre, msg, rng=None, gamma=None):
    if gamma is not None and policy_digest(gamma, pre.signers) != pre.policy_digest:
        raise BindingError("sign precomputation was built for a different policy")
    r = Scalar.random(rng)
    hm = _message_point(pre.policy, pre.signers, msg)
    return PartialSignature(
        signer_identity=pre.identity,
        signers=pre.signers,
        policy_digest=policy_digest(pre.policy, pre.signers, msg),
        s1=pre.weighted_key * (hm ** r),
        s2=pre.h_agg ** r,
    )


def sign(pms, mpk, sk, msg, gamma, rng=None, signers=None):
    return fast_sign(sign_precompute(pms, mpk, sk, gamma, signers), msg, rng)


def _default_signers(gamma, partials):
    ordered = sorted(partials, key=lambda p: gamma.members.index(p.signer_identity))
    return ordered[0].signers


def comb_precompute(pms, mpk, sk_combiner, gamma, signers=None):
    gamma.check(pms)
    if sk_combiner.identity not in gamma.members:
        raise PolicyError("the combiner must be a member of the policy")
    signers = _resolve_signers(gamma, signers)
    if len(sk_combiner.dummy_keys) != pms.n_max - 1:
        raise BindingError("combiner key was issued under different parameters")
    xs = _aggregation_set(pms, gamma, signers)
    acc = GroupElement.identity(G1)
    for i in range(gamma.t, pms.n_max):
        acc = acc * (sk_combiner.dummy_keys[i - gamma.t] ** _partial_fraction_weight(xs, i))
    return CombPrecomputation(sk_combiner.identity, gamma, signers, policy_digest(gamma, signers),
                              pms.n_max, acc)


def _select_partials(gamma, signers, msg, partials):
    partials = list(partials)
    seen = set()
    for p in partials:
        if p.signer_identity not in gamma.members:
            raise PolicyError(f"partial from non-member {p.signer_identity!r}")
        if p.signer_identity in seen:
            raise PolicyError(f"duplicate partial from {p.signer_identity!r}")
        seen.add(p.signer_identity)
    if len(partials) < gamma.t:
        raise ThresholdError(f"need {gamma.t} partial signatures, got {len(partials)}")
    expected = policy_digest(gamma, signers, msg)
    by_id = {}
    for p in partials:
        if p.signers != signers or p.policy_digest != expected:
            raise BindingError(f"partial from {p.signer_identity!r} is bound to another message or policy")
        by_id[p.signer_identity] = p
    missing = [s for s in signers if s not in by_id]
    if missing:
        raise ThresholdError(f"missing partials from {len(missing)} signer(s)")
    return [by_id[s] for s in signers]


def fast_comb(pre, msg, partials, gamma=None):
    if gamma is not None and policy_digest(gamma, pre.signers) != pre.policy_digest:
        raise BindingError("comb precomputation was built for a different policy")
    chosen = _select_partials(pre.policy, pre.signers, msg, partials)
    s1 = pre.dummy_part
    for p in chosen:
        s1 = s1 * p.s1
    s2 = chosen[0].s2
    for p in chosen[1:]:
        s2 = s2 * p.s2
    return CombinedSignature(s1, s2, signer_mask(pre.policy, pre.signers, pre.n_max), pre.policy)


def comb(pms, mpk, sk_combiner, msg, gamma, partials, signers=None):
    partials = list(partials)
    if signers is None and partials and gamma.t != len(gamma.members):
        if all(p.signer_identity in gamma.members for p in partials):
            signers = _default_signers(gamma, partials)
    pre = comb_precompute(pms, mpk, sk_combiner, gamma, signers)
    return fast_comb(pre, msg, partials)


def verify_detailed(pms, mpk, msg, sigma, gamma):
    """Like ``verify`` but returns ``(bit, reason)``; never raises."""
    try:
        gamma.check(pms)
        if isinstance(sigma, (bytes, bytearray, memoryview)):
            sigma = CombinedSignature.from_bytes(bytes(sigma))
        signers = signers_from_mask(gamma, sigma.signer_mask, pms.n_max)
        if len(signers) != gamma.t:
            return 0, "signer-count"
        if sigma.s1.is_identity() or sigma.s2.is_identity():
            return 0, "degenerate"
        xs = _aggregation_set(pms, gamma, signers)
        h_agg = _aggregate_h(mpk, xs)
        hm = _message_point(gamma, signers, bytes(msg))
        lhs = bg.pairing(sigma.s1, h_agg)
        rhs = mpk.v * bg.pairing(hm, sigma.s2)
        return (1, "ok") if lhs == rhs else (0, "equation")
    except SerializationError:
        return 0, "malformed"
    except (PolicyError, DomainError):
        return 0, "policy"
    except Exception:  # total function over arbitrary input
        return 0, "malformed"


def verify(pms, mpk, msg, sigma, gamma):
    return verify_detailed(pms, mpk, msg, sigma, gamma)[0]


def aggregate_unchecked(pms, sk_combiner, gamma, signers, partials):
    """Multiply whatever partials are at hand, skipping every check.

    This is what a cheating combiner would send when a member withheld its
    partial; it exists so simulations can exercise the verifier's rejection.
    """
    xs = _aggregation_set(pms, gamma, signers)
    s1 = GroupElement.identity(G1)
    for i in range(gamma.t, pms.n_max):
        s1 = s1 * (sk_combiner.dummy_keys[i - gamma.t] ** _partial_fraction_weight(xs, i))
    s2 = GroupElement.identity(G2)
    for p in partials:
        s1 = s1 * p.s1
        s2 = s2 * p.s2
    return CombinedSignature(s1, s2, signer_mask(gamma, signers, pms.n_max), gamma)


# Operation counts realized by this construction, next to the reference
# table values.  Each entry maps (n, t) to (multiplications, exponentiations,
# pairings).
REALIZED_COUNTS = {
    "Setup": ("0", "n+2", "1"),
    "Keygen": ("0", "n", "0"),
    "Sign": ("n+1", "n+4", "0"),
    "Comb": ("n+t-1", "n-t", "0"),
    "Verify": ("n+1", "n+1", "2"),
    "SignPC": ("n", "n+2", "0"),
    "FastSign": ("1", "2", "0"),
    "CombPC": ("n-t", "n-t", "0"),
    "FastComb": ("2t-1", "0", "0"),
}

REFERENCE_COUNTS = {
    "Setup": ("0", "n+4", "1"),
    "Keygen": ("2n", "4n", "0"),
    "Sign": ("2n+6", "2n+5", "0"),
    "Comb": ("2n-t+1", "2n-t", "0"),
    "Verify": ("n+2", "n+1", "4"),
    "SignPC": ("2n+2", "2n+1", "0"),
    "FastSign": ("2", "4", "0"),
    "CombPC": ("2n-2t", "2n-2t", "0"),
    "FastComb": ("3t+1", "3t", "0"),
}


def evaluate_formula(expr, n, t):
    """Evaluate a count formula such as ``"2n-t+1"``."""
    tree = ast.parse(re.sub(r"(\d)([nt])", r"\1*\2", expr), mode="eval")
    names = {"n": n, "t": t}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.Name) and node.id in names:
            return names[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"unsupported count formula {expr!r}")

    return ev(tree)


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul}
