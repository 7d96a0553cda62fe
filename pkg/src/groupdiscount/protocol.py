"""Group size accreditation between a service provider, user apps and
verifying devices.

The provider runs system setup and registration.  Users load scratch-card
codes, form a group (one master, the rest slaves) and agree on a key
position.  A verifying device hands the detected devices a ticket, the
members sign ``Msg = <ticket || pseudonyms>`` and the master combines and
submits.  The verifier checks the threshold signature, grants or penalizes,
and forwards encrypted pay codes to the provider's ledger.

All messages travel through a ``SimTransport`` as typed frames.
"""

import enum
import hashlib
import logging
import secrets
from dataclasses import dataclass, field

from . import ibdt, keymgmt, payment
from .codec import decode_fields, decode_text, decode_uint, encode_fields, encode_text, encode_uint
from .errors import (
    AuthError,
    BindingError,
    ConfigurationError,
    DomainError,
    GroupDiscountError,
    PolicyError,
    ReplayError,
    SerializationError,
    ThresholdError,
)
from .transport import (
    MSG_ACCREDIT,
    MSG_PARTIAL,
    MSG_PAYMENT,
    MSG_RECEIPT,
    MSG_TICKET,
    MSG_VERDICT,
    SimTransport,
    frame,
    unframe,
)

log = logging.getLogger(__name__)

WIRE_VERSION = 0x0001
TICKET_ID_BYTES = 16


# ----------------------------------------------------------------- config

@dataclass(frozen=True)
class SystemConfig:
    l: int = 4
    d: int = 1
    n_max: int = 10
    prices: dict = field(default_factory=dict)  # t -> amount in minor units
    validity_window: int = 60
    lam: int = 128

    def check(self):
        if self.l < 1 or self.d < 1:
            raise ConfigurationError("l and d must be at least 1")
        if not 1 <= self.n_max <= 10 ** self.d:
            raise ConfigurationError(f"n_max must lie in [1, 10^d] = [1, {10 ** self.d}]")
        missing = [t for t in range(1, self.n_max + 1) if t not in self.prices]
        if missing:
            raise ConfigurationError(f"price table has no entry for t={missing}")
        if any(not isinstance(a, int) or a < 0 for a in self.prices.values()):
            raise ConfigurationError("prices must be non-negative integers")
        if self.validity_window <= 0:
            raise ConfigurationError("validity window must be positive")


@dataclass
class RegistrationRecord:
    pin: str
    identifier_digest: str
    issued: bool = False


@dataclass
class ServiceProviderState:
    config: SystemConfig
    pms: ibdt.PublicParams
    keys: ibdt.MasterKeyPair = field(repr=False)
    pke: payment.PkeKeyPair = field(repr=False)
    salt: bytes = field(repr=False)
    registry: dict = field(default_factory=dict)  # pin -> RegistrationRecord
    ledger: payment.CardLedger = field(default_factory=payment.CardLedger)
    rng: object = field(default=None, repr=False)

    @property
    def mpk(self):
        return self.keys.mpk

    @property
    def pk_sp(self):
        return self.pke.public_key

    def identifier_digest(self, identifier):
        return hashlib.sha256(self.salt + identifier.encode()).hexdigest()


def system_setup(config, rng=None):
    config.check()
    rng = rng or secrets.SystemRandom()
    pms, keys = ibdt.setup(config.lam, keymgmt.PSEUDONYM_PATTERN, config.n_max, rng)
    return ServiceProviderState(config, pms, keys, payment.pke_keygen(rng), rng.randbytes(16), rng=rng)


# ----------------------------------------------------------- registration

def issue_pin(sp, identifier):
    """Face-to-face step: the provider authenticates the user and hands out a PIN."""
    identifier = keymgmt.UserIdentifier(str(identifier))
    while True:
        pin = f"{sp.rng.randrange(10 ** 8):08d}"
        if pin not in sp.registry:
            break
    sp.registry[pin] = RegistrationRecord(pin, sp.identifier_digest(identifier.digits))
    return pin


@dataclass(frozen=True)
class Registration:
    key_vector: keymgmt.KeyVector
    secret_keys: tuple
    pk_sp: bytes
    pms: ibdt.PublicParams
    mpk: ibdt.MasterPublicKey


def register_user(sp, pin, identifier):
    identifier = keymgmt.UserIdentifier(str(identifier))
    rec = sp.registry.get(pin)
    if rec is None:
        raise AuthError("unknown PIN")
    if rec.issued:
        raise ReplayError("PIN already redeemed")
    if rec.identifier_digest != sp.identifier_digest(identifier.digits):
        raise AuthError("PIN was issued for a different identifier")
    vector = keymgmt.derive_key_vector(identifier, sp.config.l, sp.config.d)
    keys = tuple(ibdt.keygen(sp.pms, sp.mpk, sp.keys.msk, pk) for pk in vector.entries)
    rec.issued = True
    return Registration(vector, keys, sp.pk_sp, sp.pms, sp.mpk)


class Mode(enum.Enum):
    MASTER = "master"
    SLAVE = "slave"


@dataclass
class UserAppState:
    identifier: keymgmt.UserIdentifier = field(repr=False)
    key_vector: keymgmt.KeyVector = field(repr=False)
    secret_keys: tuple = field(repr=False)
    pk_sp: bytes
    pms: ibdt.PublicParams
    mpk: ibdt.MasterPublicKey
    device_id: str
    mode: Mode = Mode.SLAVE
    pay_codes: list = field(default_factory=list, repr=False)
    withhold: bool = False  # a free-rider that never returns its partial

    @classmethod
    def install(cls, registration, identifier, rng=None):
        rng = rng or secrets.SystemRandom()
        return cls(keymgmt.UserIdentifier(str(identifier)), registration.key_vector,
                   registration.secret_keys, registration.pk_sp, registration.pms,
                   registration.mpk, device_id=f"dev-{rng.randbytes(6).hex()}")

    def check(self):
        if len(self.secret_keys) != len(self.key_vector.entries):
            return False
        return all(sk.identity == pk and ibdt.key_is_consistent(self.pms, self.mpk, sk)
                   for sk, pk in zip(self.secret_keys, self.key_vector.entries))

    def key_at(self, j):
        return self.secret_keys[j - 1]

    def load_card(self, card):
        self.pay_codes.append(card.code)


def credit_purchase(sp, user, denomination, rng=None):
    card = payment.issue_card(sp.ledger, denomination, rng or sp.rng)
    user.load_card(card)
    return card


# ------------------------------------------------------------ group setup

@dataclass
class GroupSession:
    members: list
    agreement: keymgmt.IndexAgreement
    policy: ibdt.ThresholdPolicy
    sign_pre: dict  # device_id -> SignPrecomputation
    comb_pre: ibdt.CombPrecomputation

    @property
    def master(self):
        return self.members[0]

    @property
    def t(self):
        return self.policy.t

    def pseudonym_of(self, member):
        return member.key_vector[self.agreement.j]


@dataclass(frozen=True)
class GroupInfeasible:
    reason: str


def group_setup(members, master_index=0):
    """Designate the master, agree on a position, precompute sign/comb state."""
    members = list(members)
    if not members:
        raise PolicyError("a group needs at least one member")
    pms = members[0].pms
    if len(members) > pms.n_max:
        raise PolicyError(f"group of {len(members)} exceeds n_max={pms.n_max}")
    if any(m.pms != pms or m.mpk != members[0].mpk for m in members):
        raise PolicyError("members were registered under different providers")
    ordered = [members[master_index]] + [m for i, m in enumerate(members) if i != master_index]
    try:
        agreement = keymgmt.agree_index([m.key_vector for m in ordered])
    except DomainError as exc:
        return GroupInfeasible(str(exc))
    if not agreement.ok:
        return GroupInfeasible(agreement.reason)
    for i, m in enumerate(ordered):
        m.mode = Mode.MASTER if i == 0 else Mode.SLAVE
    policy = ibdt.ThresholdPolicy.all_of(agreement.pseudonyms)
    j = agreement.j
    sign_pre = {m.device_id: ibdt.sign_precompute(pms, m.mpk, m.key_at(j), policy) for m in ordered}
    comb_pre = ibdt.comb_precompute(pms, ordered[0].mpk, ordered[0].key_at(j), policy)
    return GroupSession(ordered, agreement, policy, sign_pre, comb_pre)


# ---------------------------------------------------------- wire objects

@dataclass(frozen=True)
class Ticket:
    ticket_id: bytes
    verifier_id: str
    issued_at: int
    validity_window: int
    service_terms: str = ""

    def expired(self, now):
        return now > self.issued_at + self.validity_window

    def to_bytes(self):
        return encode_fields(WIRE_VERSION, [
            self.ticket_id, encode_text(self.verifier_id), encode_uint(self.issued_at),
            encode_uint(self.validity_window), encode_text(self.service_terms),
        ])

    @classmethod
    def from_bytes(cls, data):
        tid, vid, at, win, terms = decode_fields(data, WIRE_VERSION, 5)
        if len(tid) != TICKET_ID_BYTES:
            raise SerializationError("ticket id must be 16 bytes")
        return cls(bytes(tid), decode_text(vid), decode_uint(at), decode_uint(win), decode_text(terms))


@dataclass(frozen=True)
class AccreditationMessage:
    ticket: Ticket
    pseudonyms: tuple

    def __post_init__(self):
        object.__setattr__(self, "pseudonyms", tuple(self.pseudonyms))

    @property
    def t(self):
        return len(self.pseudonyms)

    def policy(self):
        return ibdt.ThresholdPolicy.all_of(self.pseudonyms)


def canonical_encode(msg):
    """Injective encoding of ``<T || pk_1 || ... || pk_t>``."""
    if not msg.pseudonyms or len(set(msg.pseudonyms)) != len(msg.pseudonyms):
        raise PolicyError("pseudonyms must be non-empty and pairwise distinct")
    return encode_fields(WIRE_VERSION, [
        msg.ticket.to_bytes(),
        encode_fields(WIRE_VERSION, [encode_text(p) for p in msg.pseudonyms]),
    ])


def canonical_decode(data):
    ticket, pks = decode_fields(data, WIRE_VERSION, 2)
    return AccreditationMessage(Ticket.from_bytes(ticket),
                                tuple(decode_text(p) for p in decode_fields(pks, WIRE_VERSION)))


class Verdict(enum.Enum):
    GRANTED = "granted"
    PENALIZED = "penalized"  # the signature did not prove the claimed size
    REJECTED = "rejected"  # structural: unknown, stale or replayed ticket, bad frame


@dataclass(frozen=True)
class AccreditationResult:
    verdict: Verdict
    group_size: int
    amount_due: int
    reason: str
    ticket_id: bytes = b""

    @property
    def granted(self):
        return self.verdict is Verdict.GRANTED

    def to_bytes(self):
        return encode_fields(WIRE_VERSION, [
            self.ticket_id, encode_text(self.verdict.value), encode_uint(self.group_size, 4),
            encode_uint(self.amount_due), encode_text(self.reason),
        ])

    @classmethod
    def from_bytes(cls, data):
        tid, verdict, t, amount, reason = decode_fields(data, WIRE_VERSION, 5)
        return cls(Verdict(decode_text(verdict)), decode_uint(t, 4), decode_uint(amount),
                   decode_text(reason), bytes(tid))


def default_penalty(verifier, result):
    log.info("penalizing group at %s: %s", verifier.verifier_id, result.reason)


# --------------------------------------------------------------- verifier

class VerifyingDevice:
    """SP-side endpoint: issues tickets, verifies, relays payments.

    Holds the provider's decryption key and talks to its ledger; the device
    itself keeps no balances.
    """

    def __init__(self, sp, verifier_id, transport, penalty_hook=default_penalty, service_terms=""):
        self.sp = sp
        self.verifier_id = verifier_id
        self.transport = transport
        self.penalty_hook = penalty_hook
        self.service_terms = service_terms
        self.issued = {}  # ticket_id -> Ticket, for the device lifetime
        self.used = set()
        self.sessions = {}  # ticket_id -> AccreditationResult
        self.verify_calls = []  # (ticket_id, bit), for inspection

    def issue_ticket(self, now=None):
        now = self.transport.clock if now is None else now
        while True:
            tid = self.transport.rng.randbytes(TICKET_ID_BYTES)
            if tid not in self.issued:
                break
        ticket = Ticket(tid, self.verifier_id, now, self.sp.config.validity_window, self.service_terms)
        self.issued[tid] = ticket
        return ticket

    def broadcast_ticket(self, ticket):
        """Send the ticket to every detected device; returns their ids."""
        detected = self.transport.detect(self.verifier_id)
        for dev in detected:
            self.transport.send(self.verifier_id, dev, frame(MSG_TICKET, ticket.to_bytes()))
        return detected

    def _result(self, verdict, t, reason, tid, amount=0):
        res = AccreditationResult(verdict, t, amount, reason, tid)
        if verdict is Verdict.PENALIZED and self.penalty_hook:
            self.penalty_hook(self, res)
        return res

    def handle_accreditation(self, payload):
        """Process a Msg' = <Msg, sigma> payload and return the verdict."""
        try:
            msg_bytes, sigma = decode_fields(payload, WIRE_VERSION, 2)
            msg = canonical_decode(msg_bytes)
        except (SerializationError, ValueError) as exc:
            return self._result(Verdict.REJECTED, 0, f"malformed: {exc}", b"")
        tid = msg.ticket.ticket_id
        known = self.issued.get(tid)
        if known is None or known != msg.ticket:
            return self._result(Verdict.REJECTED, msg.t, "replay: unknown ticket", tid)
        if tid in self.used:
            return self._result(Verdict.REJECTED, msg.t, "replay: ticket already used", tid)
        self.used.add(tid)
        if known.expired(self.transport.clock):
            return self._result(Verdict.REJECTED, msg.t, "replay: ticket expired", tid)
        if len(set(msg.pseudonyms)) != len(msg.pseudonyms):
            return self._result(Verdict.REJECTED, msg.t, "duplicate pseudonyms", tid)
        if msg.t > self.sp.config.n_max:
            return self._result(Verdict.REJECTED, msg.t, "group exceeds n_max", tid)
        # t is never sent on its own: it is the length of the pseudonym list.
        policy = msg.policy()
        bit, why = ibdt.verify_detailed(self.sp.pms, self.sp.mpk, bytes(msg_bytes), bytes(sigma), policy)
        self.verify_calls.append((tid, bit))
        if not bit:
            res = self._result(Verdict.PENALIZED, msg.t, f"invalid signature ({why})", tid)
        else:
            res = self._result(Verdict.GRANTED, msg.t, "ok", tid, self.sp.config.prices[msg.t])
        self.sessions[tid] = res
        return res

    def settle_payments(self, ticket_id, ciphertexts):
        res = self.sessions.get(ticket_id)
        if res is None or not res.granted:
            return payment.Settlement(0, (), "declined", "not-granted")
        return payment.settle(self.sp.ledger, ticket_id, res.amount_due, ciphertexts, self.sp.pke.secret_key)

    def serve(self):
        """Handle every frame waiting in the device inbox."""
        out = []
        payments = {}
        for src, data in self.transport.drain(self.verifier_id):
            mtype, payload = unframe(data)
            if mtype == MSG_ACCREDIT:
                res = self.handle_accreditation(payload)
                self.transport.send(self.verifier_id, src, frame(MSG_VERDICT, res.to_bytes()))
                out.append(res)
            elif mtype == MSG_PAYMENT:
                tid, ct = decode_fields(payload, WIRE_VERSION, 2)
                payments.setdefault(bytes(tid), []).append((src, payment.PaymentCiphertext(bytes(ct))))
        for tid, items in payments.items():
            settlement = self.settle_payments(tid, [ct for _, ct in items])
            receipt = frame(MSG_RECEIPT, encode_fields(WIRE_VERSION, [tid, settlement.to_text().encode()]))
            for src, _ in items:
                self.transport.send(self.verifier_id, src, receipt)
            out.append(settlement)
        return out


def issue_ticket(verifier, now=None):
    return verifier.issue_ticket(now)


# ----------------------------------------------------------- accreditation

def _member_sign(group, member, ticket, rng):
    msg = AccreditationMessage(ticket, group.policy.members)
    return ibdt.fast_sign(group.sign_pre[member.device_id], canonical_encode(msg), rng)


def accredit(group, verifier, ticket, rng=None, delay=0):
    """Run the accreditation exchange for ``group`` over the verifier's transport.

    Members only sign if their device received the ticket.  A master short
    of partials still submits what it has, which the verifier penalizes.
    ``delay`` advances the logical clock between signing and submission.
    """
    tr = verifier.transport
    rng = rng or tr.rng
    detected = set(verifier.broadcast_ticket(ticket))
    master = group.master
    msg_bytes = canonical_encode(AccreditationMessage(ticket, group.policy.members))

    got_ticket = {}
    for m in group.members:
        for src, data in tr.drain(m.device_id):
            mtype, payload = unframe(data)
            if mtype == MSG_TICKET and src == verifier.verifier_id:
                got_ticket[m.device_id] = Ticket.from_bytes(payload)

    partials = []
    for m in group.members:
        t_seen = got_ticket.get(m.device_id)
        if t_seen is None or m.withhold or m.device_id not in detected:
            continue
        partial = _member_sign(group, m, t_seen, rng)
        if m is master:
            partials.append(partial)
        else:
            payload = encode_fields(WIRE_VERSION, [t_seen.ticket_id, partial.to_bytes()])
            tr.send(m.device_id, master.device_id, frame(MSG_PARTIAL, payload))
    for src, data in tr.drain(master.device_id):
        mtype, payload = unframe(data)
        if mtype == MSG_PARTIAL:
            tid, p = decode_fields(payload, WIRE_VERSION, 2)
            if bytes(tid) == ticket.ticket_id:
                partials.append(ibdt.PartialSignature.from_bytes(p))

    try:
        sigma = ibdt.fast_comb(group.comb_pre, msg_bytes, partials)
    except (ThresholdError, BindingError, PolicyError):
        sigma = ibdt.aggregate_unchecked(master.pms, master.key_at(group.agreement.j), group.policy,
                                         group.policy.members, partials)
    tr.advance(delay)
    submit(verifier, master.device_id, msg_bytes, sigma.to_bytes())
    return _await_verdict(verifier, master.device_id)


def submit(verifier, device_id, msg_bytes, sigma_bytes):
    """Send Msg' to the verifier; usable directly to replay old submissions."""
    payload = encode_fields(WIRE_VERSION, [msg_bytes, sigma_bytes])
    verifier.transport.send(device_id, verifier.verifier_id, frame(MSG_ACCREDIT, payload))
    return payload


def _await_verdict(verifier, device_id):
    verifier.serve()
    for src, data in verifier.transport.drain(device_id):
        mtype, payload = unframe(data)
        if mtype == MSG_VERDICT:
            return AccreditationResult.from_bytes(payload)
    raise GroupDiscountError("no verdict received")


def pay(group, verifier, ticket, payers=None, rng=None):
    """Members in ``payers`` (default: everyone holding a code) submit codes."""
    tr = verifier.transport
    rng = rng or tr.rng
    payers = [m for m in (payers if payers is not None else group.members) if m.pay_codes]
    if not payers:
        raise PolicyError("nobody in the paying subset holds a pay code")
    for m in payers:
        ct = payment.encrypt_paycode(m.pk_sp, ticket, m.pay_codes[0], rng)
        payload = encode_fields(WIRE_VERSION, [ticket.ticket_id, ct.data])
        tr.send(m.device_id, verifier.verifier_id, frame(MSG_PAYMENT, payload))
    verifier.serve()
    settlement = None
    for m in payers:
        for src, data in tr.drain(m.device_id):
            mtype, payload = unframe(data)
            if mtype == MSG_RECEIPT:
                settlement = payment.Settlement.from_text(decode_fields(payload, WIRE_VERSION, 2)[1].decode())
    return settlement
