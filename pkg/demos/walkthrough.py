"""A group of four buys a discounted ticket without saying who they are.

Runs every protocol step by hand over the simulated transport and prints
what each party sees.
"""

import random

from groupdiscount import protocol
from groupdiscount.transport import MESSAGE_TYPES, SimTransport

rng = random.Random(2024)
prices = {t: 1000 * t - 50 * (t - 1) for t in range(1, 11)}

# The provider publishes IBDT parameters and an encryption key.
sp = protocol.system_setup(protocol.SystemConfig(l=4, d=1, n_max=10, prices=prices), rng)
transport = SimTransport(seed=7)
gate = protocol.VerifyingDevice(sp, "museum-gate", transport)

# Registration happens face to face: PIN first, keys second.
phones = ["6045550171", "6045550282", "6045550393", "6045550404"]
users = []
for phone in phones:
    pin = protocol.issue_pin(sp, phone)
    app = protocol.UserAppState.install(protocol.register_user(sp, pin, phone), phone, rng)
    protocol.credit_purchase(sp, app, 2000, rng)
    transport.place("museum-gate", app.device_id)
    users.append(app)
    print(f"{phone} -> pseudonyms {list(app.key_vector.entries)}")

group = protocol.group_setup(users)
print(f"\nagreed on position j={group.agreement.j}: the gate will only see {list(group.policy.members)}")

ticket = gate.issue_ticket()
result = protocol.accredit(group, gate, ticket, rng)
print(f"verdict: {result.verdict.value}, group size {result.group_size}, due {result.amount_due}")

receipt = protocol.pay(group, gate, ticket, rng=rng)
print(f"settlement: {receipt.status}, shares {[a for _, a in receipt.shares]}")
print(f"ledger conserved: {sp.ledger.conserved()}")

print("\nwire trace:")
for rec in transport.trace:
    print(f"  t={rec.time:<3} {rec.src:>17} -> {rec.dst:<17} {MESSAGE_TYPES[rec.frame[0]]:<13} {len(rec.frame):>5} bytes")

# One member walks off with the group's discount but never signs.
users[3].withhold = True
cheat = protocol.accredit(group, gate, gate.issue_ticket(), rng)
print(f"\nwith a free-rider: {cheat.verdict.value} ({cheat.reason})")
