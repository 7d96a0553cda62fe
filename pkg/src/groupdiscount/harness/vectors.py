"""Frozen serialization test vectors.

``emit_vectors`` writes JSON files of hex-encoded objects produced from a
fixed seed, so two runs give identical files.  ``check_vectors`` decodes
every object again and checks it semantically: keys against the master
public key, signatures with ``verify``, frames and message encodings
against the plain fields stored next to them.  Any flipped byte shows up
as a decode error or a failed check.
"""

import json
import random
from pathlib import Path

from .. import ibdt, keymgmt, protocol
from ..codec import decode_fields, encode_fields
from ..errors import GroupDiscountError
from ..transport import MSG_ACCREDIT, MSG_TICKET, frame, unframe

FILES = ("params.json", "keys.json", "signatures.json", "frames.json", "messages.json")
VECTOR_SEED = 20240601
_IDENTITIES = ("18", "27", "36", "45", "11", "22", "33", "44", "55", "66")


def _dump(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _ticket_fields(ticket):
    return {"ticket_id": ticket.ticket_id.hex(), "verifier_id": ticket.verifier_id,
            "issued_at": ticket.issued_at, "validity_window": ticket.validity_window,
            "service_terms": ticket.service_terms}


def _ticket_from_fields(f):
    return protocol.Ticket(bytes.fromhex(f["ticket_id"]), f["verifier_id"], f["issued_at"],
                           f["validity_window"], f["service_terms"])


def emit_vectors(out_dir, seed=VECTOR_SEED):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    pms, kp = ibdt.setup(128, keymgmt.PSEUDONYM_PATTERN, n_max=10, rng=rng)
    _dump(out / "params.json", {"pms": pms.to_bytes().hex(), "mpk": kp.mpk.to_bytes().hex()})

    sks = {i: ibdt.keygen(pms, kp.mpk, kp.msk, i) for i in _IDENTITIES}
    _dump(out / "keys.json", [{"identity": i, "sk": sk.to_bytes().hex()} for i, sk in sks.items()])

    sigs = []
    frames = []
    messages = []
    for case, t in enumerate((1, 2, 4, 10)):
        members = _IDENTITIES[:t]
        ticket = protocol.Ticket(rng.randbytes(16), f"verifier-{case}", 1000 * case, 60, "")
        msg = protocol.canonical_encode(protocol.AccreditationMessage(ticket, members))
        gamma = ibdt.ThresholdPolicy.all_of(members)
        partials = [ibdt.sign(pms, kp.mpk, sks[i], msg, gamma, rng) for i in members]
        sigma = ibdt.comb(pms, kp.mpk, sks[members[0]], msg, gamma, partials)
        sigs.append({"members": list(members), "msg": msg.hex(), "policy": gamma.to_bytes().hex(),
                     "partials": [p.to_bytes().hex() for p in partials],
                     "sigma": sigma.to_bytes().hex(), "expected": 1})
        messages.append({"ticket": _ticket_fields(ticket), "pseudonyms": list(members), "encoding": msg.hex()})
        frames.append({"type": MSG_TICKET, "ticket": _ticket_fields(ticket),
                       "frame": frame(MSG_TICKET, ticket.to_bytes()).hex()})
        payload = encode_fields(protocol.WIRE_VERSION, [msg, sigma.to_bytes()])
        frames.append({"type": MSG_ACCREDIT, "members": list(members), "frame": frame(MSG_ACCREDIT, payload).hex()})

    # the golden example: all-zero ticket id, pseudonyms 18 and 27
    golden = protocol.Ticket(bytes(16), "verifier-0", 0, 60, "")
    messages.append({"ticket": _ticket_fields(golden), "pseudonyms": ["18", "27"],
                     "encoding": protocol.canonical_encode(
                         protocol.AccreditationMessage(golden, ["18", "27"])).hex()})
    _dump(out / "signatures.json", sigs)
    _dump(out / "frames.json", frames)
    _dump(out / "messages.json", messages)
    return [out / f for f in FILES]


def check_vectors(in_dir):
    """Returns a list of ``(vector name, ok, detail)``."""
    d = Path(in_dir)
    results = []

    def run(name, fn):
        try:
            ok, detail = fn()
        except (GroupDiscountError, ValueError, KeyError, TypeError) as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))

    load = lambda f: json.loads((d / f).read_text())
    try:
        params = load("params.json")
        pms = ibdt.PublicParams.from_bytes(bytes.fromhex(params["pms"]))
        mpk = ibdt.MasterPublicKey.from_bytes(bytes.fromhex(params["mpk"]))
    except (GroupDiscountError, ValueError, KeyError, OSError) as exc:
        return [("params", False, f"{type(exc).__name__}: {exc}")]
    results.append(("params", True, "decoded"))

    keys = {}
    for k, entry in enumerate(load("keys.json")):
        def check_key(entry=entry):
            sk = ibdt.IdentitySecretKey.from_bytes(bytes.fromhex(entry["sk"]))
            if sk.identity != entry["identity"]:
                return False, "identity mismatch"
            keys[sk.identity] = sk
            return ibdt.key_is_consistent(pms, mpk, sk), "pairing check"
        run(f"key[{k}]", check_key)

    for k, entry in enumerate(load("signatures.json")):
        def check_sig(entry=entry):
            gamma = ibdt.ThresholdPolicy.from_bytes(bytes.fromhex(entry["policy"]))
            if list(gamma.members) != entry["members"]:
                return False, "policy mismatch"
            msg = bytes.fromhex(entry["msg"])
            sigma = bytes.fromhex(entry["sigma"])
            bit, why = ibdt.verify_detailed(pms, mpk, msg, sigma, gamma)
            if bit != entry["expected"]:
                return False, why
            # the partials must recombine to the stored signature
            partials = [ibdt.PartialSignature.from_bytes(bytes.fromhex(p)) for p in entry["partials"]]
            again = ibdt.comb(pms, mpk, keys[entry["members"][0]], msg, gamma, partials)
            return again.to_bytes() == sigma, "verify=1, partials recombine"
        run(f"signature[{k}]", check_sig)

    for k, entry in enumerate(load("frames.json")):
        def check_frame(entry=entry):
            mtype, payload = unframe(bytes.fromhex(entry["frame"]))
            if mtype != entry["type"]:
                return False, "frame type mismatch"
            if mtype == MSG_TICKET:
                return protocol.Ticket.from_bytes(payload) == _ticket_from_fields(entry["ticket"]), "ticket fields"
            msg_bytes, sigma = decode_fields(payload, protocol.WIRE_VERSION, 2)
            msg = protocol.canonical_decode(msg_bytes)
            if list(msg.pseudonyms) != entry["members"]:
                return False, "pseudonym mismatch"
            bit, why = ibdt.verify_detailed(pms, mpk, bytes(msg_bytes), bytes(sigma), msg.policy())
            return bit == 1, why or "verify=1"
        run(f"frame[{k}]", check_frame)

    for k, entry in enumerate(load("messages.json")):
        def check_msg(entry=entry):
            m = protocol.AccreditationMessage(_ticket_from_fields(entry["ticket"]), entry["pseudonyms"])
            return protocol.canonical_encode(m).hex() == entry["encoding"], "re-encoding"
        run(f"message[{k}]", check_msg)
    return results
