"""How a provider might pick the number of positions and digits per position.

More digits per position shrink the crowd sharing a pseudonym; more
positions make it likelier a group finds a usable one.
"""

from groupdiscount import keymgmt
from groupdiscount.harness.montecarlo import montecarlo_failure

print("failure probability F(l, n, d) for d = 1")
print("n\\l " + "".join(f"{l:>11}" for l in range(1, 9)))
for n in (2, 3, 4, 5, 6, 8, 10):
    print(f"{n:<4}" + "".join(f"{keymgmt.failure_probability(l, n, 1):>11.2e}" for l in range(1, 9)))

print("\nd = 2 trades anonymity for feasibility:")
for d in (1, 2, 3):
    print(f"  d={d}: pseudonym shared by {keymgmt.anonymity_fraction(d):.1%} of users, "
          f"F(4, 6, d) = {keymgmt.failure_probability(4, 6, d):.2e}")

est = montecarlo_failure(4, 2, 1, trials=10 ** 6, seed=1)
print(f"\nsimulated F(4, 2, 1): {est.empirical:.2e} over {est.trials} groups "
      f"(formula {est.formula:.1e}, z = {est.z:+.2f})")
