"""Operation-count benchmark for the IBDT algorithms.

Each algorithm runs inside its own counter scope.  The report lists, per
cell, the measured count, the value of the reference table formula and the
value of the formula this construction realizes.
"""

import random
from dataclasses import dataclass, field

from .. import ibdt
from ..bilinear import counter_scope

ALGORITHMS = ("Setup", "Keygen", "Sign", "Comb", "Verify", "SignPC", "FastSign", "CombPC", "FastComb")
COLUMNS = ("mult", "exp", "pair")
DEFAULT_PAIRS = ((5, 3), (10, 4), (10, 10))


@dataclass
class BenchRow:
    algorithm: str
    n: int
    t: int
    measured: tuple
    reference: tuple
    realized: tuple

    @property
    def matches_reference(self):
        return tuple(m == r for m, r in zip(self.measured, self.reference))

    @property
    def matches_realized(self):
        return self.measured == self.realized


@dataclass
class BenchReport:
    rows: list
    shape: dict = field(default_factory=dict)  # check name -> bool
    comb_sweep: dict = field(default_factory=dict)  # n -> [(t, counts)]

    def row(self, algorithm, n, t):
        return next(r for r in self.rows if (r.algorithm, r.n, r.t) == (algorithm, n, t))

    def to_records(self):
        recs = []
        for r in self.rows:
            recs.append({
                "algorithm": r.algorithm, "n": r.n, "t": r.t,
                "measured": dict(zip(COLUMNS, r.measured)),
                "reference": dict(zip(COLUMNS, r.reference)),
                "reference_formula": dict(zip(COLUMNS, ibdt.REFERENCE_COUNTS[r.algorithm])),
                "realized_formula": dict(zip(COLUMNS, ibdt.REALIZED_COUNTS[r.algorithm])),
                "match": dict(zip(COLUMNS, r.matches_reference)),
                "realized_match": r.matches_realized,
            })
        return recs

    def format(self):
        lines = [f"{'algorithm':<9} {'n':>3} {'t':>3}  {'measured (m,e,p)':<18} {'table (m,e,p)':<18} "
                 f"{'match':<7} realized formula (m, e, p)"]
        for r in self.rows:
            flags = "".join("Y" if ok else "n" for ok in r.matches_reference)
            realized = ", ".join(ibdt.REALIZED_COUNTS[r.algorithm])
            lines.append(f"{r.algorithm:<9} {r.n:>3} {r.t:>3}  {str(r.measured):<18} {str(r.reference):<18} "
                         f"{flags:<7} {realized}")
        lines.append("")
        for name, ok in self.shape.items():
            lines.append(f"shape {name}: {'PASS' if ok else 'FAIL'}")
        return "\n".join(lines)


def _formula(table, algorithm, n, t):
    return tuple(ibdt.evaluate_formula(e, n, t) for e in table[algorithm])


def _measure(n, t, rng):
    out = {}
    with counter_scope("Setup") as c:
        pms, kp = ibdt.setup(128, n_max=n, rng=rng)
    out["Setup"] = c.as_tuple()
    ids = [str(100 + i) for i in range(t)]
    with counter_scope("Keygen") as c:
        ibdt.keygen(pms, kp.mpk, kp.msk, ids[0])
    out["Keygen"] = c.as_tuple()
    sks = [ibdt.keygen(pms, kp.mpk, kp.msk, i) for i in ids]
    gamma = ibdt.ThresholdPolicy.all_of(ids)
    msg = b"bench message"
    with counter_scope("Sign") as c:
        ibdt.sign(pms, kp.mpk, sks[0], msg, gamma, rng)
    out["Sign"] = c.as_tuple()
    with counter_scope("SignPC") as c:
        pres = [ibdt.sign_precompute(pms, kp.mpk, sks[0], gamma)]
    out["SignPC"] = c.as_tuple()
    pres += [ibdt.sign_precompute(pms, kp.mpk, sk, gamma) for sk in sks[1:]]
    with counter_scope("FastSign") as c:
        ibdt.fast_sign(pres[0], msg, rng)
    out["FastSign"] = c.as_tuple()
    partials = [ibdt.fast_sign(p, msg, rng) for p in pres]
    with counter_scope("Comb") as c:
        sigma = ibdt.comb(pms, kp.mpk, sks[0], msg, gamma, partials)
    out["Comb"] = c.as_tuple()
    with counter_scope("CombPC") as c:
        cpre = ibdt.comb_precompute(pms, kp.mpk, sks[0], gamma)
    out["CombPC"] = c.as_tuple()
    with counter_scope("FastComb") as c:
        ibdt.fast_comb(cpre, msg, partials)
    out["FastComb"] = c.as_tuple()
    with counter_scope("Verify") as c:
        ok = ibdt.verify(pms, kp.mpk, msg, sigma, gamma)
    out["Verify"] = c.as_tuple()
    if ok != 1:
        raise AssertionError(f"benchmark signature failed to verify at n={n}, t={t}")
    return out


def comb_counts(n, rng=None):
    """Comb counts for every t in [1, n] at fixed n."""
    rng = rng or random.Random(n)
    pms, kp = ibdt.setup(128, n_max=n, rng=rng)
    sweep = []
    for t in range(1, n + 1):
        ids = [str(100 + i) for i in range(t)]
        sks = [ibdt.keygen(pms, kp.mpk, kp.msk, i) for i in ids]
        gamma = ibdt.ThresholdPolicy.all_of(ids)
        partials = [ibdt.sign(pms, kp.mpk, sk, b"sweep", gamma, rng) for sk in sks]
        with counter_scope("Comb") as c:
            ibdt.comb(pms, kp.mpk, sks[0], b"sweep", gamma, partials)
        sweep.append((t, c.as_tuple()))
    return sweep


def is_affine(points):
    """True if every column of ``[(x, (c1, c2, ...)), ...]`` is affine in x."""
    if len(points) < 3:
        return True
    (x0, y0), (x1, y1) = points[0], points[1]
    for x, y in points[2:]:
        for a, b, c in zip(y0, y1, y):
            # (c - a) * (x1 - x0) == (b - a) * (x - x0), integer-exact
            if (c - a) * (x1 - x0) != (b - a) * (x - x0):
                return False
    return True


def bench_opcounts(n_list=None, t_list=None, seed=0, sweep=True):
    """Measure every algorithm at each ``(n, t)`` pair of ``zip(n_list, t_list)``."""
    if n_list is None and t_list is None:
        pairs = list(DEFAULT_PAIRS)
    else:
        pairs = list(zip(n_list, t_list))
    for n, t in pairs:
        if not 1 <= t <= n:
            raise ValueError(f"need 1 <= t <= n, got n={n}, t={t}")
    rng = random.Random(seed)
    rows = []
    for n, t in pairs:
        measured = _measure(n, t, rng)
        for alg in ALGORITHMS:
            rows.append(BenchRow(alg, n, t, measured[alg],
                                 _formula(ibdt.REFERENCE_COUNTS, alg, n, t),
                                 _formula(ibdt.REALIZED_COUNTS, alg, n, t)))
    report = BenchReport(rows)
    verify_pairings = {r.measured[2] for r in rows if r.algorithm == "Verify"}
    fast_sign = {r.measured for r in rows if r.algorithm == "FastSign"}
    report.shape["verify-pairings-constant"] = len(verify_pairings) == 1
    report.shape["fastsign-identical"] = len(fast_sign) == 1
    by_n = {}
    for r in rows:
        if r.algorithm == "Comb":
            by_n.setdefault(r.n, []).append((r.t, r.measured))
    if sweep:
        for n in sorted(by_n):
            report.comb_sweep[n] = comb_counts(n, random.Random(seed + n))
        by_n = report.comb_sweep
    report.shape["comb-affine-in-t"] = all(is_affine(pts) for pts in by_n.values())
    report.shape["phase-split-consistent"] = all(
        all(abs(a + b - c) <= 2 for a, b, c in zip(
            report.row("SignPC", n, t).measured, report.row("FastSign", n, t).measured,
            report.row("Sign", n, t).measured))
        for n, t in pairs)
    return report
