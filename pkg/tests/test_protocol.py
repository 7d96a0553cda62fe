import random
import struct

import pytest

from groupdiscount import ibdt, protocol
from groupdiscount.errors import AuthError, ConfigurationError, PolicyError, ReplayError
from groupdiscount.protocol import Verdict
from groupdiscount.transport import MSG_ACCREDIT, MSG_TICKET, SimTransport, frame, unframe

PRICES = {t: 1000 * t - 50 * (t - 1) for t in range(1, 11)}


def make_world(ids, seed=1, cards=5000, in_range=None, l=4, d=1):
    rng = random.Random(seed)
    sp = protocol.system_setup(protocol.SystemConfig(l, d, 10, PRICES), rng)
    tr = SimTransport(seed)
    verifier = protocol.VerifyingDevice(sp, "v-1", tr)
    users = []
    for k, ident in enumerate(ids):
        pin = protocol.issue_pin(sp, ident)
        u = protocol.UserAppState.install(protocol.register_user(sp, pin, ident), ident, rng)
        if cards:
            protocol.credit_purchase(sp, u, cards, rng)
        tr.place("v-1", u.device_id, True if in_range is None else in_range[k])
        users.append(u)
    return sp, verifier, users, rng


IDS4 = ["5550001231", "5550004562", "5550007893", "5550002224"]


def test_group_of_four_end_to_end():
    sp, verifier, users, rng = make_world(IDS4)
    assert all(u.check() for u in users)
    group = protocol.group_setup(users)
    assert group.t == 4 and group.agreement.j == 1
    assert group.master.mode is protocol.Mode.MASTER
    ticket = verifier.issue_ticket()
    res = protocol.accredit(group, verifier, ticket, rng)
    assert res.verdict is Verdict.GRANTED and res.group_size == 4 and res.amount_due == PRICES[4]
    s = protocol.pay(group, verifier, ticket, rng=rng)
    assert s.settled and sum(a for _, a in s.shares) == PRICES[4]
    assert sp.ledger.conserved()


@pytest.mark.parametrize("master", range(4))
def test_any_member_can_be_master(master):
    _, verifier, users, rng = make_world(IDS4, seed=2)
    group = protocol.group_setup(users, master_index=master)
    assert group.master is users[master]
    res = protocol.accredit(group, verifier, verifier.issue_ticket(), rng)
    assert res.granted and res.group_size == 4


def test_free_rider_is_penalized():
    penalties = []
    sp, verifier, users, rng = make_world(IDS4, seed=3)
    verifier.penalty_hook = lambda v, r: penalties.append(r)
    users[2].withhold = True
    group = protocol.group_setup(users)
    res = protocol.accredit(group, verifier, verifier.issue_ticket(), rng)
    assert res.verdict is Verdict.PENALIZED and res.amount_due == 0
    assert penalties == [res]
    assert verifier.verify_calls[-1][1] == 0


def test_ticket_replay_rejected():
    _, verifier, users, rng = make_world(IDS4[:2], seed=4)
    group = protocol.group_setup(users)
    ticket = verifier.issue_ticket()
    assert protocol.accredit(group, verifier, ticket, rng).granted
    last = [r.frame for r in verifier.transport.trace if r.frame[0] == MSG_ACCREDIT][-1]
    msg_bytes, sigma = protocol.decode_fields(unframe(last)[1], protocol.WIRE_VERSION, 2)
    protocol.submit(verifier, group.master.device_id, msg_bytes, sigma)
    res = protocol._await_verdict(verifier, group.master.device_id)
    assert res.verdict is Verdict.REJECTED and res.reason.startswith("replay")


def test_unknown_ticket_rejected():
    _, verifier, users, rng = make_world(IDS4[:2], seed=5)
    group = protocol.group_setup(users)
    forged = protocol.Ticket(bytes(16), "v-1", 0, 60)
    verifier.transport.place("v-1", group.master.device_id)
    res = protocol.accredit(group, verifier, forged, rng)
    assert res.verdict is Verdict.REJECTED and "unknown" in res.reason


def test_expired_ticket_rejected():
    _, verifier, users, rng = make_world(IDS4[:3], seed=6)
    group = protocol.group_setup(users)
    res = protocol.accredit(group, verifier, verifier.issue_ticket(), rng, delay=61)
    assert res.verdict is Verdict.REJECTED and "expired" in res.reason
    res = protocol.accredit(group, verifier, verifier.issue_ticket(), rng, delay=60)
    assert res.granted


def test_out_of_range_devices_get_no_ticket():
    _, verifier, users, rng = make_world(IDS4[:3], seed=7, in_range=[True, True, False])
    group = protocol.group_setup(users)
    res = protocol.accredit(group, verifier, verifier.issue_ticket(), rng)
    assert res.verdict is Verdict.PENALIZED
    far = users[2].device_id
    assert not any(r.dst == far and r.frame[0] == MSG_TICKET for r in verifier.transport.trace)


def test_infeasible_group():
    _, _, users, _ = make_world(["5551234567", "7771234567"], seed=8)
    res = protocol.group_setup(users)
    assert isinstance(res, protocol.GroupInfeasible)


def test_group_too_large():
    _, _, users, _ = make_world([f"12345{k}{k}" for k in range(10)], seed=9, cards=0)
    extra = list(users)
    extra.append(users[0])
    with pytest.raises(PolicyError):
        protocol.group_setup(extra)


def test_pin_flow():
    rng = random.Random(10)
    sp = protocol.system_setup(protocol.SystemConfig(4, 1, 10, PRICES), rng)
    pin = protocol.issue_pin(sp, "5550001111")
    with pytest.raises(AuthError):
        protocol.register_user(sp, pin, "5550002222")
    with pytest.raises(AuthError):
        protocol.register_user(sp, "00000000" if pin != "00000000" else "11111111", "5550001111")
    reg = protocol.register_user(sp, pin, "5550001111")
    assert reg.key_vector.entries == ("11", "21", "31", "41")
    with pytest.raises(ReplayError):
        protocol.register_user(sp, pin, "5550001111")


def test_registry_keeps_no_plain_identifier():
    rng = random.Random(11)
    sp = protocol.system_setup(protocol.SystemConfig(4, 1, 10, PRICES), rng)
    protocol.issue_pin(sp, "5550009999")
    assert "5550009999" not in repr(sp.registry)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        protocol.SystemConfig(4, 1, 10, {t: 1 for t in range(1, 10)}).check()
    with pytest.raises(ConfigurationError):
        protocol.SystemConfig(4, 1, 11, {t: 1 for t in range(1, 12)}).check()
    with pytest.raises(ConfigurationError):
        protocol.SystemConfig(4, 1, 2, {1: 1, 2: -1}).check()


def test_golden_message_encoding():
    ticket = protocol.Ticket(bytes(16), "verifier-0", 0, 60, "")
    got = protocol.canonical_encode(protocol.AccreditationMessage(ticket, ["18", "27"]))

    # written out field by field from the layout rule
    def fields(*fs):
        return struct.pack(">H", 1) + b"".join(struct.pack(">I", len(f)) + f for f in fs)

    t_enc = fields(bytes(16), b"verifier-0", struct.pack(">Q", 0), struct.pack(">Q", 60), b"")
    expected = fields(t_enc, fields(b"18", b"27"))
    assert got == expected
    assert got.hex() == (
        "0001" "00000040"
        "0001" "00000010" + "00" * 16 + "0000000a" + b"verifier-0".hex()
        + "00000008" "0000000000000000" "00000008" "000000000000003c" "00000000"
        + "0000000e" "0001" "00000002" "3138" "00000002" "3237"
    )
    assert protocol.canonical_decode(got) == protocol.AccreditationMessage(ticket, ("18", "27"))


def test_message_encoding_rejects_duplicates():
    ticket = protocol.Ticket(bytes(16), "v", 0, 60)
    with pytest.raises(PolicyError):
        protocol.canonical_encode(protocol.AccreditationMessage(ticket, ["18", "18"]))


def test_result_round_trip():
    r = protocol.AccreditationResult(Verdict.GRANTED, 3, 2700, "ok", bytes(16))
    assert protocol.AccreditationResult.from_bytes(r.to_bytes()) == r


def test_malformed_submission_rejected():
    sp, verifier, users, rng = make_world(IDS4[:1], seed=12)
    payload = protocol.encode_fields(protocol.WIRE_VERSION, [b"junk", b"junk"])
    assert verifier.handle_accreditation(payload).verdict is Verdict.REJECTED


def test_payment_requires_granted_session():
    _, verifier, users, rng = make_world(IDS4[:2], seed=13)
    group = protocol.group_setup(users)
    users[1].withhold = True
    ticket = verifier.issue_ticket()
    assert protocol.accredit(group, verifier, ticket, rng).verdict is Verdict.PENALIZED
    s = protocol.pay(group, verifier, ticket, rng=rng)
    assert (s.status, s.reason) == ("declined", "not-granted")


def test_secrets_never_on_the_wire():
    sp, verifier, users, rng = make_world(IDS4, seed=14)
    group = protocol.group_setup(users)
    ticket = verifier.issue_ticket()
    protocol.accredit(group, verifier, ticket, rng)
    protocol.pay(group, verifier, ticket, rng=rng)
    blob = verifier.transport.trace_bytes()
    assert sp.pke.secret_key not in blob
    assert sp.keys.msk.alpha.to_bytes() not in blob and sp.keys.msk.gamma.to_bytes() not in blob
    for u in users:
        assert u.pay_codes[0].encode() not in blob
        assert u.identifier.digits.encode() not in blob


def test_dropped_frames_do_not_break_determinism():
    def run():
        tr = SimTransport(5, drop_probability=0.3)
        for k in range(50):
            tr.send("a", "b", frame(MSG_TICKET, bytes([k])))
        return tr.trace_digest(), len(tr.drain("b"))
    assert run() == run()
    assert run()[1] < 50


def test_transport_clock_monotone():
    tr = SimTransport()
    with pytest.raises(ValueError):
        tr.advance(-1)


def test_setup_seeds_give_different_keys():
    cfg = protocol.SystemConfig(4, 1, 10, PRICES)
    a = protocol.system_setup(cfg, random.Random(1))
    b = protocol.system_setup(cfg, random.Random(2))
    assert a.mpk.to_bytes() != b.mpk.to_bytes()
    assert a.pms.n_max == 10


def test_registration_example():
    rng = random.Random(15)
    sp = protocol.system_setup(protocol.SystemConfig(4, 1, 10, PRICES), rng)
    reg = protocol.register_user(sp, protocol.issue_pin(sp, "12345678"), "12345678")
    assert [sk.identity for sk in reg.secret_keys] == ["18", "27", "36", "45"]
    assert all(ibdt.key_is_consistent(sp.pms, sp.mpk, sk) for sk in reg.secret_keys)
    assert reg.pk_sp == sp.pk_sp


def test_group_setup_precomputes(monkeypatch):
    _, _, users, _ = make_world(["5550001231", "5550004562", "5550007893"], seed=16, cards=0)
    calls = {"sign": 0, "comb": 0}
    real_sign, real_comb = ibdt.sign_precompute, ibdt.comb_precompute

    def count(kind, fn):
        def wrapper(*a, **kw):
            calls[kind] += 1
            return fn(*a, **kw)
        return wrapper

    monkeypatch.setattr(ibdt, "sign_precompute", count("sign", real_sign))
    monkeypatch.setattr(ibdt, "comb_precompute", count("comb", real_comb))
    group = protocol.group_setup(users)
    assert group.agreement.j == 1 and calls == {"sign": 3, "comb": 1}


def test_singleton_group():
    _, verifier, users, rng = make_world(["4401982375"], seed=17)
    group = protocol.group_setup(users)
    assert group.agreement.j == 1 and group.t == 1
    res = protocol.accredit(group, verifier, verifier.issue_ticket(), rng)
    assert res.granted and res.amount_due == PRICES[1]


def test_tickets_unique():
    _, verifier, _, _ = make_world(IDS4[:1], seed=18)
    tickets = [verifier.issue_ticket() for _ in range(200)]
    assert len({t.ticket_id for t in tickets}) == 200
    assert all(len(t.ticket_id) == 16 for t in tickets)


def test_pseudonym_order_matters():
    ticket = protocol.Ticket(bytes(16), "v", 0, 60)
    a = protocol.canonical_encode(protocol.AccreditationMessage(ticket, ["18", "27"]))
    b = protocol.canonical_encode(protocol.AccreditationMessage(ticket, ["27", "18"]))
    assert a != b
    assert protocol.canonical_encode(protocol.canonical_decode(a)) == a


def test_granted_at_most_once_per_submission():
    _, verifier, users, rng = make_world(IDS4[:3], seed=19)
    group = protocol.group_setup(users)
    assert protocol.accredit(group, verifier, verifier.issue_ticket(), rng).granted
    last = [r.frame for r in verifier.transport.trace if r.frame[0] == MSG_ACCREDIT][-1]
    verdicts = [verifier.handle_accreditation(unframe(last)[1]).verdict for _ in range(3)]
    assert Verdict.GRANTED not in verdicts
