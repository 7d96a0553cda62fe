"""Prepaid scratch-card payments.

The service provider keeps a ledger keyed by a digest of each pay code.
Group members submit their codes encrypted, together with the session
ticket id, under the provider's public key.  Settlement splits the fee over
the submitted codes and either debits every one of them or none.
"""

import base64
import hashlib
import json
import secrets
import threading
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .codec import decode_fields, encode_fields
from .errors import GroupDiscountError, SerializationError

CODE_BYTES = 16
PKE_VERSION = 0x0001
_PKE_INFO = b"groupdiscount/pke/x25519-hkdf-chacha20poly1305/v1"
_NONCE = bytes(12)  # every message uses a fresh ephemeral key


class DecryptionError(GroupDiscountError):
    pass


def _rng(rng):
    return rng or secrets.SystemRandom()


# -------------------------------------------------------- encryption

@dataclass(frozen=True)
class PkeKeyPair:
    public_key: bytes  # raw X25519, 32 bytes
    secret_key: bytes = field(repr=False)


def pke_keygen(rng=None):
    sk = X25519PrivateKey.from_private_bytes(_rng(rng).randbytes(32))
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    raw = sk.private_bytes(serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
                           serialization.NoEncryption())
    return PkeKeyPair(pk, raw)


def _derive_key(shared, eph_pub, recipient_pub):
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None,
                info=_PKE_INFO + eph_pub + recipient_pub).derive(shared)


def pke_encrypt(public_key, plaintext, rng=None):
    """Ephemeral X25519 key agreement, HKDF-SHA256, ChaCha20-Poly1305."""
    recipient = X25519PublicKey.from_public_bytes(public_key)
    eph = X25519PrivateKey.from_private_bytes(_rng(rng).randbytes(32))
    eph_pub = eph.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    key = _derive_key(eph.exchange(recipient), eph_pub, bytes(public_key))
    ct = ChaCha20Poly1305(key).encrypt(_NONCE, bytes(plaintext), eph_pub)
    return PKE_VERSION.to_bytes(2, "big") + eph_pub + ct


def pke_decrypt(secret_key, ciphertext):
    ciphertext = bytes(ciphertext)
    if len(ciphertext) < 2 + 32 + 16 or int.from_bytes(ciphertext[:2], "big") != PKE_VERSION:
        raise DecryptionError("malformed ciphertext")
    eph_pub = ciphertext[2:34]
    sk = X25519PrivateKey.from_private_bytes(secret_key)
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    try:
        key = _derive_key(sk.exchange(X25519PublicKey.from_public_bytes(eph_pub)), eph_pub, pk)
        return ChaCha20Poly1305(key).decrypt(_NONCE, ciphertext[34:], eph_pub)
    except (InvalidTag, ValueError) as exc:
        raise DecryptionError("authentication failed") from exc


# ---------------------------------------------------------------- cards

def _ticket_id(ticket):
    return bytes(getattr(ticket, "ticket_id", ticket))


def code_digest(code):
    return hashlib.sha256(b"groupdiscount/paycode/v1" + code.encode()).hexdigest()[:32]


@dataclass(frozen=True)
class ScratchCard:
    code: str
    denomination: int


@dataclass(frozen=True)
class PaymentCiphertext:
    data: bytes


@dataclass(frozen=True)
class Settlement:
    total: int
    shares: tuple  # (code digest, debited amount), arrival order
    status: str  # "settled" | "declined"
    reason: str = ""

    @property
    def settled(self):
        return self.status == "settled"

    def to_dict(self):
        return {"status": self.status, "reason": self.reason, "total": self.total,
                "shares": [[d, a] for d, a in self.shares]}

    def to_text(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_text(cls, text):
        d = json.loads(text)
        return cls(d["total"], tuple((s, a) for s, a in d["shares"]), d["status"], d["reason"])


class CardLedger:
    """Code digest -> balance, in integer minor units.

    Settlements run one at a time; issuance may interleave with them.
    """

    def __init__(self):
        self.balances = {}
        self.issued_total = 0
        self.settled_total = 0
        self.log = []
        self.consumed_tickets = set()
        self._lock = threading.Lock()

    def balance(self, code):
        return self.balances[code_digest(code)]

    def snapshot(self):
        return json.dumps({
            "balances": self.balances,
            "issued_total": self.issued_total,
            "settled_total": self.settled_total,
            "consumed_tickets": sorted(t.hex() for t in self.consumed_tickets),
        }, sort_keys=True, separators=(",", ":"))

    def conserved(self):
        return sum(self.balances.values()) + self.settled_total == self.issued_total


def issue_card(ledger, denomination, rng=None):
    if not isinstance(denomination, int) or denomination <= 0:
        raise ValueError("denomination must be a positive integer")
    with ledger._lock:
        while True:
            raw = _rng(rng).randbytes(CODE_BYTES)
            code = base64.b32encode(raw).decode().rstrip("=")
            digest = code_digest(code)
            if digest not in ledger.balances:
                break
        ledger.balances[digest] = denomination
        ledger.issued_total += denomination
        ledger.log.append(("issue", digest, denomination))
    return ScratchCard(code, denomination)


def encrypt_paycode(pk_sp, ticket, code, rng=None):
    plaintext = encode_fields(PKE_VERSION, [_ticket_id(ticket), code.encode()])
    return PaymentCiphertext(pke_encrypt(pk_sp, plaintext, rng))


def decrypt_paycode(sk_sp, ciphertext):
    """Returns ``(ticket_id, code)``."""
    data = ciphertext.data if isinstance(ciphertext, PaymentCiphertext) else ciphertext
    try:
        tid, code = decode_fields(pke_decrypt(sk_sp, data), PKE_VERSION, 2)
        return bytes(tid), code.decode("ascii")
    except (SerializationError, UnicodeDecodeError) as exc:
        raise DecryptionError("malformed payment plaintext") from exc


def split_amount(total, k):
    """Floor share each, remainder spread one unit at a time from the front."""
    base, rem = divmod(total, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def settle(ledger, ticket, amount_t, ciphertexts, sk_sp):
    """Debit ``amount_t`` across the codes in ``ciphertexts``, all or nothing."""
    ciphertexts = list(ciphertexts)
    if not ciphertexts:
        raise ValueError("settlement needs at least one payment ciphertext")
    tid = _ticket_id(ticket)

    def declined(reason):
        return Settlement(amount_t, (), "declined", reason)

    with ledger._lock:
        if tid in ledger.consumed_tickets:
            return declined("session-mismatch")
        digests = []
        for c in ciphertexts:
            try:
                embedded, code = decrypt_paycode(sk_sp, c)
            except DecryptionError:
                return declined("undecryptable")
            if embedded != tid:
                return declined("session-mismatch")
            digests.append(code_digest(code))
        if len(set(digests)) != len(digests):
            return declined("duplicate-code")
        if any(d not in ledger.balances for d in digests):
            return declined("unknown-code")
        amounts = split_amount(amount_t, len(digests))
        if any(ledger.balances[d] < a for d, a in zip(digests, amounts)):
            return declined("insufficient")
        for d, a in zip(digests, amounts):
            ledger.balances[d] -= a
        ledger.settled_total += amount_t
        ledger.consumed_tickets.add(tid)
        shares = tuple(zip(digests, amounts))
        ledger.log.append(("settle", tid.hex(), shares))
        return Settlement(amount_t, shares, "settled")
