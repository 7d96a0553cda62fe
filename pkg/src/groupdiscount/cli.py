"""Command-line entry point: ``groupdiscount <command> ...``.

Every command prints line-oriented ``key=value`` records followed by a
short human summary, and exits 0 only if everything it checked matched.

``--config`` takes a YAML file whose top-level keys are command names; the
values under a command fill in any option not given on the command line.
Under ``run``, a ``scenario`` mapping overrides fields of every scenario's
``config`` block.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import yaml

from .errors import GroupDiscountError, ScenarioError

DEFAULTS = {
    "run": {"scenarios": None},
    "bench": {"n": None, "t": None, "no_sweep": False},
    "mc-fail": {"l": 4, "n": 2, "d": 1, "trials": 10 ** 6},
    "mc-anon": {"d": 1, "population": 10 ** 5, "position": 1},
    "vectors": {},
    "vector-check": {"dir": None},
}
Z_LIMIT = 3.0


def _write(out, text):
    if out:
        Path(out).write_text(text)


def cmd_run(args, cfg):
    from .harness import scenario as sc

    names = args.scenarios or sc.bundled_scenarios()
    overrides = cfg.get("scenario", {})
    reports = []
    for name in names:
        p = Path(name)
        s = sc.load_scenario(p) if p.exists() else sc.load_bundled(name)
        if overrides:
            s = dataclasses.replace(s, **overrides)
        rep = sc.run_scenario(s, seed=args.seed)
        reports.append(rep)
        for line in rep.records():
            print(line)
        print()
    ok = sum(r.matched for r in reports)
    print(f"summary: {ok}/{len(reports)} scenarios matched their expected verdicts")
    _write(args.out, json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    return ok == len(reports)


def cmd_bench(args, cfg):
    from .harness.bench import bench_opcounts

    if (args.n is None) != (args.t is None) or (args.n and len(args.n) != len(args.t)):
        raise SystemExit("bench: --n and --t must be given together with equal lengths")
    report = bench_opcounts(args.n, args.t, seed=args.seed or 0, sweep=not args.no_sweep)
    for rec in report.to_records():
        m, r = rec["measured"], rec["reference"]
        print(f"algorithm={rec['algorithm']} n={rec['n']} t={rec['t']} "
              f"mult={m['mult']} exp={m['exp']} pair={m['pair']} "
              f"table_mult={r['mult']} table_exp={r['exp']} table_pair={r['pair']} "
              f"match={''.join('Y' if v else 'n' for v in rec['match'].values())} "
              f"realized_match={'yes' if rec['realized_match'] else 'no'}")
    for name, ok in report.shape.items():
        print(f"shape={name} result={'pass' if ok else 'fail'}")
    print()
    print(report.format())
    _write(args.out, json.dumps({"rows": report.to_records(), "shape": report.shape}, indent=2) + "\n")
    return all(report.shape.values()) and all(r.matches_realized for r in report.rows)


def _z_ok(z):
    return abs(z) <= Z_LIMIT


def cmd_mc_fail(args, cfg):
    from .harness.montecarlo import montecarlo_failure

    est = montecarlo_failure(args.l, args.n, args.d, args.trials, seed=args.seed or 0)
    rec = {"l": args.l, "n": args.n, "d": args.d, **dataclasses.asdict(est)}
    print(" ".join(f"{k}={v}" for k, v in rec.items()))
    ok = _z_ok(est.z)
    print(f"summary: empirical {est.empirical:.3e} vs formula {est.formula:.3e}, z={est.z:+.2f} "
          f"({'within' if ok else 'outside'} {Z_LIMIT:g} standard errors)")
    _write(args.out, json.dumps(rec, indent=2) + "\n")
    return ok


def cmd_mc_anon(args, cfg):
    from .harness.montecarlo import montecarlo_anonymity

    est = montecarlo_anonymity(args.d, args.population, seed=args.seed or 0, position=args.position)
    rec = {"d": args.d, "position": args.position, **dataclasses.asdict(est)}
    print(" ".join(f"{k}={v}" for k, v in rec.items()))
    ok = _z_ok(est.z)
    print(f"summary: {est.fraction:.4%} of {est.population} users share user 0's pseudonym "
          f"(expected {est.expected:.2%}, z={est.z:+.2f})")
    _write(args.out, json.dumps(rec, indent=2) + "\n")
    return ok


def cmd_vectors(args, cfg):
    from .harness.vectors import VECTOR_SEED, emit_vectors

    if not args.out:
        raise SystemExit("vectors: --out DIR is required")
    seed = VECTOR_SEED if args.seed is None else args.seed
    for path in emit_vectors(args.out, seed=seed):
        print(f"wrote={path}")
    return True


def cmd_vector_check(args, cfg):
    from .harness.vectors import check_vectors

    results = check_vectors(args.dir)
    for name, ok, detail in results:
        print(f"vector={name} result={'pass' if ok else 'fail'} detail={detail}")
    bad = [name for name, ok, _ in results if not ok]
    print(f"summary: {len(results) - len(bad)}/{len(results)} vectors verified")
    return not bad


COMMANDS = {
    "run": cmd_run, "bench": cmd_bench, "mc-fail": cmd_mc_fail, "mc-anon": cmd_mc_anon,
    "vectors": cmd_vectors, "vector-check": cmd_vector_check,
}


def build_parser():
    p = argparse.ArgumentParser(prog="groupdiscount", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="override the seed of every command")
    p.add_argument("--config", help="YAML file with per-command option defaults")
    p.add_argument("--out", help="write a JSON report (or, for vectors, the output directory)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run scenarios (default: all bundled ones)")
    s.add_argument("scenarios", nargs="*", default=None, help="scenario files or bundled names")

    s = sub.add_parser("bench", help="operation counts per algorithm")
    s.add_argument("--n", type=int, nargs="+", default=None)
    s.add_argument("--t", type=int, nargs="+", default=None)
    s.add_argument("--no-sweep", action="store_true", default=None, help="skip the Comb t-sweep")

    s = sub.add_parser("mc-fail", help="Monte Carlo estimate of the agreement failure probability")
    for name in ("l", "n", "d", "trials"):
        s.add_argument(f"--{name}", type=int, default=None)

    s = sub.add_parser("mc-anon", help="Monte Carlo estimate of the pseudonym sharing fraction")
    for name in ("d", "population", "position"):
        s.add_argument(f"--{name}", type=int, default=None)

    sub.add_parser("vectors", help="write serialization test vectors to --out")

    s = sub.add_parser("vector-check", help="re-verify a directory of test vectors")
    s.add_argument("dir")
    return p


def _resolve(args, cfg):
    """Command line, then config file, then built-in defaults."""
    section = cfg.get(args.command, {}) or {}
    for key, default in DEFAULTS[args.command].items():
        if getattr(args, key, None) is None:
            setattr(args, key, section.get(key.replace("_", "-"), section.get(key, default)))
    if args.seed is None:
        args.seed = cfg.get("seed")
    if args.out is None:
        args.out = cfg.get("out")
    return section


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = {}
    if args.config:
        cfg = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(cfg, dict):
            print("error: --config must hold a mapping", file=sys.stderr)
            return 2
    section = _resolve(args, cfg)
    try:
        ok = COMMANDS[args.command](args, section)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GroupDiscountError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
