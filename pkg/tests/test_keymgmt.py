import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groupdiscount import keymgmt
from groupdiscount.errors import DomainError


def slice_oracle(identifier, l, d):
    """Independent reading of the chunking rule: reverse, cut, reverse back."""
    rev = identifier[::-1]
    return [str(j + 1) + rev[j * d:(j + 1) * d][::-1] for j in range(l)]


def test_worked_example():
    assert keymgmt.derive_key_vector("12345678", 4, 1).entries == ("18", "27", "36", "45")
    assert keymgmt.derive_key_vector("12345678", 1, 1).entries == ("18",)


def test_two_digit_chunks():
    got = keymgmt.derive_key_vector("12345678", 2, 2).entries
    assert list(got) == slice_oracle("12345678", 2, 2) == ["178", "256"]


@settings(max_examples=200)
@given(st.integers(1, 9), st.integers(1, 3), st.data())
def test_derivation_matches_oracle(l, d, data):
    ident = data.draw(st.from_regex(rf"[0-9]{{{l * d},{l * d + 6}}}", fullmatch=True))
    kv = keymgmt.derive_key_vector(ident, l, d)
    assert list(kv.entries) == slice_oracle(ident, l, d)
    for j, pk in enumerate(kv.entries, start=1):
        assert keymgmt.decode_pseudonym(pk, l, d) == (j, keymgmt.UserIdentifier(ident).chunk(j, d))


def test_short_or_bad_identifiers():
    with pytest.raises(DomainError):
        keymgmt.derive_key_vector("123", 4, 1)
    with pytest.raises(DomainError):
        keymgmt.UserIdentifier("12a4")
    with pytest.raises(DomainError):
        keymgmt.UserIdentifier("")
    with pytest.raises(DomainError):
        keymgmt.UserIdentifier("١٢٣")  # non-ASCII digits


@pytest.mark.parametrize("l,d", [(l, d) for l in range(1, 10) for d in range(1, 4)])
def test_encoding_injective(l, d):
    seen = set()
    for j in range(1, l + 1):
        for c in range(10 ** d):
            pk = keymgmt.encode_pseudonym(j, c, l, d)
            assert pk not in seen
            seen.add(pk)
    assert len(seen) == l * 10 ** d


def test_long_vectors_use_separator():
    ident = "".join(str(i % 10) for i in range(24))
    kv = keymgmt.derive_key_vector(ident, 12, 2)
    assert kv[11] == "11-" + keymgmt.UserIdentifier(ident).chunk(11, 2)
    assert len(set(kv.entries)) == 12


# -------------------------------------------------------------- probability

def test_failure_probability_values():
    assert keymgmt.failure_probability(4, 2, 1) == pytest.approx(1e-4, rel=1e-12)
    assert keymgmt.failure_probability_exact(4, 2, 1) == Fraction(1, 10 ** 4)
    for l in (1, 3, 7):
        assert keymgmt.failure_probability(l, 1, 1) == 0
        assert keymgmt.failure_probability(l, 11, 1) == 1
    assert keymgmt.failure_probability(2, 101, 2) == 1


def _brute_force(l, n, d):
    """Exact F by enumerating every chunk assignment of one position."""
    q = 10 ** d
    ok = sum(1 for combo in itertools.product(range(q), repeat=n) if len(set(combo)) == n)
    return (1 - Fraction(ok, q ** n)) ** l


@pytest.mark.parametrize("l,n", [(1, 2), (3, 3), (2, 4), (5, 5)])
def test_failure_probability_brute_force(l, n):
    assert keymgmt.failure_probability_exact(l, n, 1) == _brute_force(l, n, 1)


def test_single_digit_formula_consistent():
    for l in range(1, 9):
        for n in range(1, 13):
            assert keymgmt.failure_probability_single_digit(l, n) == keymgmt.failure_probability(l, n, 1)


def test_monotonicity_grid():
    F = keymgmt.failure_probability_exact
    for l in range(1, 9):
        for n in range(1, 13):
            for d in (1, 2):
                f = F(l, n, d)
                if l < 8:
                    assert F(l + 1, n, d) <= f
                if n < 12:
                    assert F(l, n + 1, d) >= f
                if d == 1:
                    assert F(l, n, 2) <= f


def test_domain_errors():
    with pytest.raises(DomainError):
        keymgmt.failure_probability(0, 2, 1)
    with pytest.raises(DomainError):
        keymgmt.anonymity_fraction(0)


def test_anonymity_fraction():
    assert keymgmt.anonymity_fraction(1) == pytest.approx(0.10)
    assert keymgmt.anonymity_fraction(2) == pytest.approx(0.01)
    assert keymgmt.anonymity_fraction(3) == pytest.approx(0.001)


# ---------------------------------------------------------------- agreement

def vec(*entries, l=None, d=1):
    return keymgmt.KeyVector(entries, l or len(entries), d)


def test_first_collision_free_position():
    res = keymgmt.agree_index([vec("18", "27"), vec("18", "21")])
    assert res.ok and res.j == 2 and res.pseudonyms == ("27", "21")


def test_identical_identifiers_fail():
    v = keymgmt.derive_key_vector("5551234", 4, 1)
    res = keymgmt.agree_index([v, v])
    assert not res.ok and isinstance(res, keymgmt.AgreementFailure)


def test_ten_distinct_last_digits():
    vs = [keymgmt.derive_key_vector(f"90000{k}", 4, 1) for k in range(10)]
    res = keymgmt.agree_index(vs)
    assert res.j == 1 and res.pseudonyms == tuple(f"1{k}" for k in range(10))


def test_mixed_parameters_rejected():
    with pytest.raises(DomainError):
        keymgmt.agree_index([keymgmt.derive_key_vector("1234", 4, 1), keymgmt.derive_key_vector("1234", 2, 2)])
    with pytest.raises(DomainError):
        keymgmt.agree_index([])


@settings(max_examples=200)
@given(st.lists(st.from_regex(r"[0-9]{3}", fullmatch=True), min_size=1, max_size=8), st.randoms())
def test_agreement_permutation_stable(ids, rnd):
    vs = [keymgmt.derive_key_vector(i, 3, 1) for i in ids]
    a = keymgmt.agree_index(vs)
    shuffled = vs[:]
    rnd.shuffle(shuffled)
    b = keymgmt.agree_index(shuffled)
    assert a.ok == b.ok
    if a.ok:
        assert a.j == b.j
        assert len(set(a.pseudonyms)) == len(a.pseudonyms)
        assert a.pseudonyms[0] == vs[0][a.j]  # master first


def test_batch_agrees_with_scalar_rule():
    rng = np.random.default_rng(3)
    for n, l, d in [(2, 4, 1), (4, 3, 1), (6, 2, 1), (3, 3, 2), (1, 2, 1)]:
        chunks = rng.integers(0, 10 ** d, size=(300, n, l))
        batch = keymgmt.agree_index_batch(chunks)
        for k in range(300):
            vs = [keymgmt.KeyVector([keymgmt.encode_pseudonym(j + 1, int(c), l, d)
                                     for j, c in enumerate(row)], l, d) for row in chunks[k]]
            res = keymgmt.agree_index(vs)
            assert batch[k] == (res.j if res.ok else 0)
