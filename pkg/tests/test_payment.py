import random
import threading

import pytest

from groupdiscount import payment
from groupdiscount.payment import CardLedger, Settlement, issue_card, settle, split_amount

TICKET = bytes(range(16))


@pytest.fixture
def provider():
    rng = random.Random(4)
    return payment.pke_keygen(rng), rng


def submit(kp, rng, ticket, *cards):
    return [payment.encrypt_paycode(kp.public_key, ticket, c.code, rng) for c in cards]


def test_split_amount():
    assert split_amount(1000, 4) == [250] * 4
    assert split_amount(1000, 3) == [334, 333, 333]
    assert split_amount(10000, 3) == [3334, 3333, 3333]
    assert split_amount(7, 5) == [2, 2, 1, 1, 1]
    for total in range(0, 50):
        for k in range(1, 8):
            parts = split_amount(total, k)
            assert sum(parts) == total and max(parts) - min(parts) <= 1


def test_even_settlement(provider):
    kp, rng = provider
    ledger = CardLedger()
    cards = [issue_card(ledger, 1000, rng) for _ in range(4)]
    s = settle(ledger, TICKET, 1000, submit(kp, rng, TICKET, *cards), kp.secret_key)
    assert s.settled and [a for _, a in s.shares] == [250] * 4
    assert all(ledger.balance(c.code) == 750 for c in cards)
    assert ledger.conserved()


def test_remainder_goes_to_first_arrivals(provider):
    kp, rng = provider
    ledger = CardLedger()
    cards = [issue_card(ledger, 500, rng) for _ in range(3)]
    s = settle(ledger, TICKET, 1000, submit(kp, rng, TICKET, *cards), kp.secret_key)
    assert [a for _, a in s.shares] == [334, 333, 333]
    assert [ledger.balance(c.code) for c in cards] == [166, 167, 167]


def test_insufficient_is_all_or_nothing(provider):
    kp, rng = provider
    ledger = CardLedger()
    rich, poor = issue_card(ledger, 1000, rng), issue_card(ledger, 100, rng)
    before = ledger.snapshot()
    s = settle(ledger, TICKET, 1000, submit(kp, rng, TICKET, rich, poor), kp.secret_key)
    assert (s.status, s.reason) == ("declined", "insufficient")
    assert ledger.snapshot() == before


def test_declines(provider):
    kp, rng = provider
    ledger = CardLedger()
    card = issue_card(ledger, 1000, rng)
    before = ledger.snapshot()
    other = bytes(16)
    assert settle(ledger, TICKET, 10, submit(kp, rng, other, card), kp.secret_key).reason == "session-mismatch"
    assert settle(ledger, TICKET, 10, submit(kp, rng, TICKET, card, card), kp.secret_key).reason == "duplicate-code"
    fake = payment.ScratchCard("AAAAAAAAAAAAAAAAAAAAAAAAAA", 5)
    assert settle(ledger, TICKET, 10, submit(kp, rng, TICKET, fake), kp.secret_key).reason == "unknown-code"
    junk = payment.PaymentCiphertext(b"\x00\x01" + bytes(60))
    assert settle(ledger, TICKET, 10, [junk], kp.secret_key).reason == "undecryptable"
    wrong_key = payment.pke_keygen(random.Random(99))
    assert settle(ledger, TICKET, 10, submit(wrong_key, rng, TICKET, card), kp.secret_key).reason == "undecryptable"
    assert ledger.snapshot() == before


def test_replayed_ciphertexts_declined(provider):
    kp, rng = provider
    ledger = CardLedger()
    card = issue_card(ledger, 1000, rng)
    cts = submit(kp, rng, TICKET, card)
    assert settle(ledger, TICKET, 100, cts, kp.secret_key).settled
    before = ledger.snapshot()
    again = settle(ledger, TICKET, 100, cts, kp.secret_key)
    assert (again.status, again.reason) == ("declined", "session-mismatch")
    assert ledger.snapshot() == before


def test_pke_round_trip_and_tamper(provider):
    kp, rng = provider
    ct = payment.pke_encrypt(kp.public_key, b"hello", rng)
    assert payment.pke_decrypt(kp.secret_key, ct) == b"hello"
    for pos in (0, 5, 40, len(ct) - 1):
        bad = bytearray(ct)
        bad[pos] ^= 0x80
        with pytest.raises(payment.DecryptionError):
            payment.pke_decrypt(kp.secret_key, bytes(bad))
    # fresh ephemeral key per message
    assert payment.pke_encrypt(kp.public_key, b"hello", rng) != ct


def test_codes_are_typeable(provider):
    _, rng = provider
    ledger = CardLedger()
    code = issue_card(ledger, 10, rng).code
    assert "=" not in code
    assert set(code) <= set("ABCDEFGHIJKLMNOPQRSTUVWXYZ234567")
    with pytest.raises(ValueError):
        issue_card(ledger, 0, rng)


def test_settlement_text_round_trip():
    s = Settlement(1000, (("ab", 500), ("cd", 500)), "settled")
    assert Settlement.from_text(s.to_text()) == s


def ledger_fuzz(ops, seed):
    """Random issue/settle sequence; returns the ledger and any violation."""
    rng = random.Random(seed)
    kp = payment.pke_keygen(rng)
    ledger = CardLedger()
    cards = []
    for k in range(ops):
        if not cards or rng.random() < 0.3:
            cards.append(issue_card(ledger, rng.randint(1, 2000), rng))
            continue
        payers = rng.sample(cards, rng.randint(1, min(4, len(cards))))
        ticket = rng.randbytes(16)
        cts = submit(kp, rng, ticket, *payers)
        if rng.random() < 0.1:
            cts.append(cts[0])  # duplicate code
        before = ledger.snapshot()
        s = settle(ledger, ticket, rng.randint(0, 3000), cts, kp.secret_key)
        if not s.settled and ledger.snapshot() != before:
            return ledger, f"declined op {k} changed the ledger"
        if not ledger.conserved():
            return ledger, f"conservation broken at op {k}"
        if any(b < 0 for b in ledger.balances.values()):
            return ledger, f"negative balance at op {k}"
    return ledger, None


def test_conservation_fuzz():
    for seed in range(3):
        ledger, problem = ledger_fuzz(1000, seed)
        assert problem is None
        assert sum(ledger.balances.values()) + ledger.settled_total == ledger.issued_total


def test_issue_and_balance(provider):
    _, rng = provider
    ledger = CardLedger()
    a, b = issue_card(ledger, 1000, rng), issue_card(ledger, 1000, rng)
    assert ledger.balance(a.code) == 1000 and a.code != b.code


def test_no_digest_collisions_at_scale():
    rng = random.Random(5)
    ledger = CardLedger()
    codes = {issue_card(ledger, 1, rng).code for _ in range(10 ** 4)}
    assert len(codes) == len(ledger.balances) == 10 ** 4
    assert all(len(c) >= 26 for c in codes)  # 128 bits in base32


def test_exact_division(provider):
    kp, rng = provider
    ledger = CardLedger()
    cards = [issue_card(ledger, 5000, rng) for _ in range(3)]
    s = settle(ledger, TICKET, 9000, submit(kp, rng, TICKET, *cards), kp.secret_key)
    assert [a for _, a in s.shares] == [3000] * 3 and sum(a for _, a in s.shares) == s.total


def test_encryption_randomized_and_keyed(provider):
    kp, rng = provider
    a = payment.encrypt_paycode(kp.public_key, TICKET, "CODE", rng)
    b = payment.encrypt_paycode(kp.public_key, TICKET, "CODE", rng)
    assert a.data != b.data
    assert payment.decrypt_paycode(kp.secret_key, a) == (TICKET, "CODE")
    with pytest.raises(payment.DecryptionError):
        payment.decrypt_paycode(payment.pke_keygen(random.Random(1)).secret_key, a)


def test_concurrent_settlements_serialize():
    rng = random.Random(6)
    kp = payment.pke_keygen(rng)
    ledger = CardLedger()
    card = issue_card(ledger, 1000, rng)
    batches = []
    for _ in range(20):
        t = rng.randbytes(16)
        batches.append((t, [payment.encrypt_paycode(kp.public_key, t, card.code, rng)]))
    results = []
    threads = [threading.Thread(target=lambda t=t, c=c: results.append(settle(ledger, t, 100, c, kp.secret_key)))
               for t, c in batches]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert sum(r.settled for r in results) == 10
    assert ledger.balance(card.code) == 0 and ledger.conserved()
