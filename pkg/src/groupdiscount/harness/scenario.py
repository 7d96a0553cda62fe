"""Scenario files and the end-to-end scenario runner.

A scenario is a YAML document (schema version 1)::

    version: 1
    name: group4_happy
    config:
      l: 4            # key positions
      d: 1            # digits per position
      n_max: 10
      seed: 7
      validity_window: 60
      prices: {1: 900, 2: 1700, ...}   # one entry per t in [1, n_max]
    cast:             # listed in join order; the first one is master
      - id: "5550001234"
        card: 5000    # optional scratch-card denomination
        in_range: true
        withhold: false
        pays: true
    script:           # protocol events, in order
      - system_setup
      - register
      - credit_purchase
      - group_setup            # or {group_setup: {master: 2}}
      - accredit               # or {accredit: {delay: 120}}
      - replay                 # resubmit the last Msg' verbatim
      - payment
      - {advance: 30}
    expected:
      group_setup: ok          # or infeasible
      verdicts: [granted]
      group_size: 4
      settlements: [settled]

Structural errors are reported with the line they occur on.
"""

import hashlib
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .. import protocol
from ..codec import decode_fields
from ..errors import ScenarioError
from ..transport import MSG_ACCREDIT, SimTransport, unframe

SCHEMA_VERSION = 1
EVENTS = ("system_setup", "register", "credit_purchase", "group_setup", "accredit", "replay",
          "payment", "advance")
VERIFIER_ID = "verifier-0"


@dataclass
class Member:
    id: str
    card: int = 0
    in_range: bool = True
    withhold: bool = False
    pays: bool = True


@dataclass
class Scenario:
    name: str
    l: int
    d: int
    n_max: int
    seed: int
    prices: dict
    cast: list
    script: list  # (event, options)
    expected: dict = field(default_factory=dict)
    validity_window: int = 60
    source: str = ""


def _line(node):
    return node.start_mark.line + 1 if node is not None else None


def _mapping_get(node, key):
    if not isinstance(node, yaml.MappingNode):
        return None
    for k, v in node.value:
        if k.value == key:
            return v
    return None


def _require(cond, msg, node):
    if not cond:
        raise ScenarioError(msg, _line(node))


def parse_scenario(text, source="<string>"):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ScenarioError(f"YAML syntax: {exc.problem}", mark.line + 1 if mark else None) from exc
    _require(isinstance(data, dict), "scenario must be a mapping", root)
    _require(data.get("version") == SCHEMA_VERSION, f"version must be {SCHEMA_VERSION}",
             _mapping_get(root, "version") or root)

    cfg_node = _mapping_get(root, "config")
    cfg = data.get("config")
    _require(isinstance(cfg, dict), "missing 'config' mapping", cfg_node or root)
    for key in ("l", "d", "n_max", "seed"):
        _require(isinstance(cfg.get(key), int), f"config.{key} must be an integer",
                 _mapping_get(cfg_node, key) or cfg_node)
    prices = cfg.get("prices")
    prices_node = _mapping_get(cfg_node, "prices")
    _require(isinstance(prices, dict) and all(isinstance(k, int) and isinstance(v, int)
                                              for k, v in prices.items()),
             "config.prices must map integer t to integer amounts", prices_node or cfg_node)

    cast_node = _mapping_get(root, "cast")
    cast_data = data.get("cast")
    _require(isinstance(cast_data, list) and cast_data, "'cast' must be a non-empty list", cast_node or root)
    cast = []
    for entry, node in zip(cast_data, cast_node.value):
        _require(isinstance(entry, dict) and isinstance(entry.get("id"), str),
                 "cast entries need a quoted string 'id'", node)
        unknown = set(entry) - {"id", "card", "in_range", "withhold", "pays"}
        _require(not unknown, f"unknown cast keys {sorted(unknown)}", node)
        cast.append(Member(entry["id"], int(entry.get("card", 0)), bool(entry.get("in_range", True)),
                           bool(entry.get("withhold", False)), bool(entry.get("pays", True))))

    script_node = _mapping_get(root, "script")
    script_data = data.get("script")
    _require(isinstance(script_data, list) and script_data, "'script' must be a non-empty list",
             script_node or root)
    script = []
    for item, node in zip(script_data, script_node.value):
        if isinstance(item, str):
            name, opts = item, {}
        else:
            _require(isinstance(item, dict) and len(item) == 1, "script events are names or one-key mappings", node)
            (name, opts), = item.items()
            if name == "advance":
                opts = {"seconds": opts}
            opts = opts or {}
        _require(name in EVENTS, f"unknown script event {name!r}", node)
        script.append((name, opts))

    expected = data.get("expected") or {}
    _require(isinstance(expected, dict), "'expected' must be a mapping", _mapping_get(root, "expected"))
    return Scenario(
        name=str(data.get("name", Path(source).stem)), l=cfg["l"], d=cfg["d"], n_max=cfg["n_max"],
        seed=cfg["seed"], prices=dict(prices), cast=cast, script=script, expected=expected,
        validity_window=int(cfg.get("validity_window", 60)), source=source,
    )


def load_scenario(path):
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    root = resources.files("groupdiscount") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled(name):
    res = resources.files("groupdiscount") / "scenarios" / f"{name}.yaml"
    return parse_scenario(res.read_text(), f"{name}.yaml")


@dataclass
class ScenarioReport:
    name: str
    verdicts: list = field(default_factory=list)
    group_sizes: list = field(default_factory=list)
    amounts: list = field(default_factory=list)
    settlements: list = field(default_factory=list)  # payment.Settlement
    group_setup: str = ""
    trace_digest: str = ""
    mismatches: list = field(default_factory=list)
    transport: SimTransport = field(default=None, repr=False)
    identifiers: list = field(default_factory=list, repr=False)
    pseudonyms: list = field(default_factory=list, repr=False)

    @property
    def matched(self):
        return not self.mismatches

    def records(self):
        """Line-oriented ``key=value`` records."""
        out = [f"scenario={self.name}", f"group_setup={self.group_setup}"]
        for i, (v, t, a) in enumerate(zip(self.verdicts, self.group_sizes, self.amounts)):
            out.append(f"verdict[{i}]={v} group_size={t} amount_due={a}")
        for i, s in enumerate(self.settlements):
            out.append(f"settlement[{i}]={s.status} reason={s.reason or '-'} total={s.total} "
                       f"shares={','.join(str(a) for _, a in s.shares) or '-'}")
        out.append(f"trace_frames={len(self.transport.trace) if self.transport else 0}")
        out.append(f"trace_digest={self.trace_digest}")
        out.append(f"expected_matched={'yes' if self.matched else 'no'}")
        for m in self.mismatches:
            out.append(f"mismatch={m}")
        return out

    def to_dict(self):
        return {
            "scenario": self.name, "group_setup": self.group_setup, "verdicts": self.verdicts,
            "group_sizes": self.group_sizes, "amounts": self.amounts,
            "settlements": [s.to_dict() for s in self.settlements],
            "trace_digest": self.trace_digest, "matched": self.matched, "mismatches": self.mismatches,
        }


def _check_expected(sc, rep):
    exp = sc.expected
    if "group_setup" in exp and exp["group_setup"] != rep.group_setup:
        rep.mismatches.append(f"group_setup expected {exp['group_setup']} got {rep.group_setup}")
    if "verdicts" in exp and list(exp["verdicts"]) != rep.verdicts:
        rep.mismatches.append(f"verdicts expected {exp['verdicts']} got {rep.verdicts}")
    if "group_size" in exp and (not rep.group_sizes or rep.group_sizes[0] != exp["group_size"]):
        rep.mismatches.append(f"group_size expected {exp['group_size']} got {rep.group_sizes}")
    if "settlements" in exp:
        got = [s.status for s in rep.settlements]
        if list(exp["settlements"]) != got:
            rep.mismatches.append(f"settlements expected {exp['settlements']} got {got}")
    if "shares" in exp:
        got = [a for _, a in rep.settlements[0].shares] if rep.settlements else []
        if list(exp["shares"]) != got:
            rep.mismatches.append(f"shares expected {exp['shares']} got {got}")


def run_scenario(scenario, seed=None):
    """Execute a scenario (object, path or bundled name) and report."""
    if isinstance(scenario, (str, Path)):
        p = Path(scenario)
        scenario = load_scenario(p) if p.suffix in (".yaml", ".yml") or p.exists() else load_bundled(str(scenario))
    sc = scenario
    seed = sc.seed if seed is None else seed
    rng = random.Random(f"scenario/{seed}")
    tr = SimTransport(seed=seed)
    rep = ScenarioReport(sc.name, transport=tr, identifiers=[m.id for m in sc.cast])

    sp = verifier = group = ticket = None
    users = []
    for name, opts in sc.script:
        if name == "system_setup":
            cfg = protocol.SystemConfig(sc.l, sc.d, sc.n_max, sc.prices, sc.validity_window)
            sp = protocol.system_setup(cfg, rng)
            verifier = protocol.VerifyingDevice(sp, VERIFIER_ID, tr)
        elif name == "register":
            for m in sc.cast:
                pin = protocol.issue_pin(sp, m.id)
                reg = protocol.register_user(sp, pin, m.id)
                u = protocol.UserAppState.install(reg, m.id, rng)
                u.withhold = m.withhold
                tr.place(VERIFIER_ID, u.device_id, m.in_range)
                users.append(u)
                rep.pseudonyms.extend(reg.key_vector.entries)
        elif name == "credit_purchase":
            for m, u in zip(sc.cast, users):
                if m.card:
                    protocol.credit_purchase(sp, u, m.card, rng)
        elif name == "group_setup":
            result = protocol.group_setup(users, opts.get("master", 0))
            if isinstance(result, protocol.GroupInfeasible):
                rep.group_setup = "infeasible"
                break
            rep.group_setup = "ok"
            group = result
        elif name == "accredit":
            ticket = verifier.issue_ticket()
            res = protocol.accredit(group, verifier, ticket, rng, delay=int(opts.get("delay", 0)))
            rep.verdicts.append(res.verdict.value)
            rep.group_sizes.append(res.group_size)
            rep.amounts.append(res.amount_due)
        elif name == "replay":
            last = [r for r in tr.trace if r.frame and r.frame[0] == MSG_ACCREDIT][-1]
            _, payload = unframe(last.frame)
            msg_bytes, sigma = decode_fields(payload, protocol.WIRE_VERSION, 2)
            protocol.submit(verifier, group.master.device_id, msg_bytes, sigma)
            res = protocol._await_verdict(verifier, group.master.device_id)
            rep.verdicts.append(res.verdict.value)
            rep.group_sizes.append(res.group_size)
            rep.amounts.append(res.amount_due)
        elif name == "payment":
            payers = [u for m, u in zip(sc.cast, users) if m.pays and u in group.members]
            rep.settlements.append(protocol.pay(group, verifier, ticket, payers, rng))
        elif name == "advance":
            tr.advance(int(opts["seconds"]))
    rep.trace_digest = tr.trace_digest()
    _check_expected(sc, rep)
    return rep


# ----------------------------------------------------------- disclosure

def trace_disclosures(report, d):
    """Identifiers longer than ``d`` digits that appear verbatim in the trace."""
    blob = report.transport.trace_bytes()
    return [i for i in report.identifiers if len(i) > d and i.encode() in blob]


def _atoms(obj):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield str(k)
            yield from _atoms(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            yield from _atoms(v)
    else:
        yield str(obj)


def settlement_disclosures(settlement, pseudonyms, identifiers):
    """Pseudonyms or identifiers carried by a settlement record.

    Short pseudonyms are matched against whole field values, since any
    amount or hex digest contains two-digit substrings; identifiers are
    matched as substrings of the serialized record.
    """
    text = settlement.to_text()
    atoms = set(_atoms(json.loads(text)))
    hits = [p for p in set(pseudonyms) if p in atoms]
    hits += [i for i in set(identifiers) if i in text or i in atoms]
    return sorted(set(hits))


def digest_reports(reports):
    h = hashlib.sha256()
    for r in reports:
        h.update(r.trace_digest.encode())
    return h.hexdigest()
