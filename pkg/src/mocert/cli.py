"""Command-line front end.

Subcommands wire the full pipeline: model -> product -> MEC quotient ->
certificates -> witnesses.  Exit codes are a stable contract: 0 the query
holds, 1 it is violated (with a certificate for the negation), 2 unknown,
64 usage or parse errors.  Timings go to stderr; every artifact is
re-validated by the matching checker before it is written.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional

from . import mp_cert, reach_cert, witness_sched, witness_subsys
from .errors import MocertError, SolverUnknown
from .graph import mec_quotient
from .model import Mdp, parse_mdp, serialize_mdp
from .product import ReducedQuery, reduce_query
from .query import Query, op_holds, parse_query, serialize_query
from .reach_cert import ReachQuery

EXIT_HOLDS = 0
EXIT_VIOLATED = 1
EXIT_UNKNOWN = 2
EXIT_INCUMBENT = 3
EXIT_USAGE = 64


def _load_model(path: str) -> Mdp:
    with open(path) as handle:
        return parse_mdp(handle.read())


def _load_query(path: str) -> Query:
    with open(path) as handle:
        return parse_query(handle.read())


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as handle:
            handle.write(text)


def _timed(label: str, start: float) -> None:
    print("%s: %.3fs" % (label, time.monotonic() - start), file=sys.stderr)


def _reach_query(reduction: ReducedQuery) -> ReachQuery:
    return ReachQuery(
        reduction.query.quantifier,
        reduction.query.connective,
        reduction.ops,
        reduction.bounds,
    )


def cmd_certify(args) -> int:
    mdp = _load_model(args.model)
    query = _load_query(args.query)
    build_start = time.monotonic()
    if query.is_probability:
        reduction = reduce_query(mdp, query)
        rq = _reach_query(reduction)
        _timed("build", build_start)
        if args.dump_lp:
            _dump_reach_lp(reduction, rq, args.dump_lp)
        solve_start = time.monotonic()
        try:
            result = reach_cert.certify(reduction.rfm, rq, args.time_limit)
        except SolverUnknown as exc:
            print("unknown: %s" % exc, file=sys.stderr)
            return EXIT_UNKNOWN
        _timed("certify", solve_start)
        check = reach_cert.check_certificate(reduction.rfm, result.certificate)
        if not check.ok:
            print("internal: emitted certificate failed validation", file=sys.stderr)
            return EXIT_UNKNOWN
        doc = {
            "kind": "reach",
            "verdict": result.verdict,
            "query": json.loads(serialize_query(query)),
            "certificate": json.loads(
                reach_cert.certificate_to_json(result.certificate)
            ),
        }
    else:
        _timed("build", build_start)
        if args.dump_lp:
            _dump_mp_lp(mdp, query, args.dump_lp)
        solve_start = time.monotonic()
        try:
            result = mp_cert.certify_mp(mdp, query, args.time_limit)
        except SolverUnknown as exc:
            print("unknown: %s" % exc, file=sys.stderr)
            return EXIT_UNKNOWN
        _timed("certify", solve_start)
        check = mp_cert.check_mp_certificate(mdp, result.certificate)
        if not check.ok:
            print("internal: emitted certificate failed validation", file=sys.stderr)
            return EXIT_UNKNOWN
        doc = {
            "kind": "mean-payoff",
            "verdict": result.verdict,
            "query": json.loads(serialize_query(query)),
            "certificate": json.loads(
                mp_cert.mp_certificate_to_json(result.certificate)
            ),
        }
    _write(args.output, json.dumps(doc, indent=2) + "\n")
    return EXIT_HOLDS if result.verdict == "holds" else EXIT_VIOLATED


def _dump_reach_lp(reduction: ReducedQuery, rq: ReachQuery, path: str) -> None:
    systems = []
    tag = rq.type_tag
    if tag == "exists-and":
        systems.append(reach_cert.build_exists_and(reduction.rfm, rq.bounds, rq.ops))
    elif tag == "forall-or":
        systems.append(reach_cert.build_forall_or(reduction.rfm, rq.bounds, rq.ops))
    elif tag == "exists-or":
        systems.extend(reach_cert.build_exists_or(reduction.rfm, rq.bounds, rq.ops))
    else:
        systems.extend(reach_cert.build_forall_and(reduction.rfm, rq.bounds, rq.ops))
    _write(path, "\n".join(system.dump_lp() for system in systems))


def _dump_mp_lp(mdp: Mdp, query: Query, path: str) -> None:
    rewards = mp_cert.effective_rewards(mdp, query.predicates)
    bounds = [p.bound for p in query.predicates]
    tag = mp_cert._canonical_tag(query)
    if tag == "exists-and":
        system = mp_cert.build_Hmp(mdp, rewards, bounds)
    else:
        system = mp_cert.build_Fmp(mdp, rewards, bounds)
    _write(path, system.dump_lp())


def cmd_check(args) -> int:
    mdp = _load_model(args.model)
    with open(args.certificate) as handle:
        doc = json.load(handle)
    mode = "exact" if args.exact else "tol"
    query = parse_query(json.dumps(doc["query"]))
    cert_doc = json.dumps(doc["certificate"])
    if doc.get("kind") == "mean-payoff":
        cert = mp_cert.mp_certificate_from_json(cert_doc)
        result = mp_cert.check_mp_certificate(mdp, cert, mode, args.tolerance)
    else:
        cert = reach_cert.certificate_from_json(cert_doc)
        reduction = reduce_query(mdp, query)
        expected = (
            _reach_query(reduction)
            if doc.get("verdict") != "violated"
            else _reach_query(reduction).negated()
        )
        if (cert.query.ops, tuple(map(float, cert.query.bounds))) != (
            expected.ops,
            tuple(map(float, expected.bounds)),
        ):
            print("certificate does not echo the query's reduction", file=sys.stderr)
            return EXIT_VIOLATED
        result = reach_cert.check_certificate(reduction.rfm, cert, mode, args.tolerance)
    if result.ok:
        print("certificate accepted", file=sys.stderr)
        return EXIT_HOLDS
    for name, amount in result.violations:
        print("violated %s by %g" % (name, amount), file=sys.stderr)
    return EXIT_VIOLATED


def cmd_product(args) -> int:
    mdp = _load_model(args.model)
    query = _load_query(args.query)
    reduction = reduce_query(mdp, query)
    _write(args.output, serialize_mdp(reduction.product.mdp))
    return EXIT_HOLDS


def cmd_quotient(args) -> int:
    mdp = _load_model(args.model)
    quotient = mec_quotient(mdp)
    _write(args.output, serialize_mdp(quotient.mdp))
    return EXIT_HOLDS


def cmd_reduce(args) -> int:
    mdp = _load_model(args.model)
    query = _load_query(args.query)
    reduction = reduce_query(mdp, query)
    doc = {
        "model": serialize_mdp(reduction.rfm.inner),
        "frontier": sorted(reduction.rfm.targets),
        "objectives": [
            {"targets": sorted(t), "op": op, "bound": str(b)}
            for t, op, b in zip(reduction.targets, reduction.ops, reduction.bounds)
        ],
    }
    _write(args.output, json.dumps(doc, indent=2) + "\n")
    return EXIT_HOLDS


def cmd_witness_subsystem(args) -> int:
    mdp = _load_model(args.model)
    query = _load_query(args.query)
    start = time.monotonic()
    if query.is_probability:
        reduction = reduce_query(mdp, query)
        rq = _reach_query(reduction)
        weights = witness_subsys.quotient_weights(reduction) if args.weights else None
        try:
            witness = witness_subsys.milp_min_subsystem_reach(
                reduction.rfm, rq, weights, args.time_limit, level="quotient"
            )
        except SolverUnknown as exc:
            print("no subsystem: %s" % exc, file=sys.stderr)
            return EXIT_UNKNOWN
        total = len(reduction.rfm.inner.states)
        if args.level == "original":
            witness = witness_subsys.transfer_subsystem(witness, reduction)
            total = len(mdp.states)
            model_text = serialize_mdp(witness.subsystem.mdp)
        else:
            model_text = serialize_mdp(witness.subsystem.inner)
    else:
        try:
            witness = witness_subsys.milp_min_subsystem_mp(
                mdp, query, None, args.time_limit
            )
        except SolverUnknown as exc:
            print("no subsystem: %s" % exc, file=sys.stderr)
            return EXIT_UNKNOWN
        total = len(mdp.states)
        model_text = serialize_mdp(witness.subsystem.mdp)
    _timed("witness", start)
    ratio = 100.0 * len(witness.kept) / total
    print(
        "kept %d of %d states (%.1f%%), optimality %s"
        % (len(witness.kept), total, ratio, witness.optimality),
        file=sys.stderr,
    )
    _write(args.output, model_text)
    return EXIT_HOLDS if witness.optimality != "incumbent" else EXIT_INCUMBENT


def cmd_witness_scheduler(args) -> int:
    mdp = _load_model(args.model)
    query = _load_query(args.query)
    start = time.monotonic()
    if not query.is_probability:
        print("scheduler witnesses cover probability queries", file=sys.stderr)
        return EXIT_USAGE
    reduction = reduce_query(mdp, query)
    rq = _reach_query(reduction)
    if rq.type_tag != "exists-and":
        print("scheduler assembly covers (exists, and) queries", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = reach_cert.certify(reduction.rfm, rq, args.time_limit)
    except SolverUnknown as exc:
        print("unknown: %s" % exc, file=sys.stderr)
        return EXIT_UNKNOWN
    if result.verdict != "holds":
        print("query is violated; no witnessing scheduler", file=sys.stderr)
        return EXIT_VIOLATED
    sched_hat = witness_sched.scheduler_from_certificate(reduction.rfm, result.certificate)
    fmc = witness_sched.assemble_fmc_scheduler(
        reduction.product.mdp, reduction.quotient, sched_hat
    )
    # re-validate: each objective's probability is the chance of settling
    # into one of its accepting MECs
    pools = [
        [
            set(reduction.quotient.mec_of_bottom(b).states)
            for b in targets
        ]
        for targets in reduction.targets
    ]
    sets = [set().union(*pool) if pool else set() for pool in pools]
    values = witness_sched.confinement_probabilities(reduction.product.mdp, fmc, sets)
    for value, op, bound in zip(values, reduction.ops, reduction.bounds):
        if not op_holds(value + 1e-9, op, float(bound)):
            print(
                "internal: assembled scheduler achieves %.10g, needs %s %s"
                % (value, op, bound),
                file=sys.stderr,
            )
            return EXIT_UNKNOWN
    _timed("witness", start)
    print(
        "objective values: %s" % ", ".join("%.8f" % v for v in values),
        file=sys.stderr,
    )
    _write(args.output, witness_sched.scheduler_to_dot(fmc))
    return EXIT_HOLDS


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mocert",
        description="certifying multi-objective probabilistic model checker",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, query=True):
        p.add_argument("model", help="explicit-format model file")
        if query:
            p.add_argument("query", help="query JSON file")
        p.add_argument("-o", "--output", default=None, help="output path (default stdout)")
        p.add_argument("--time-limit", type=float, default=None)
        p.add_argument("--dump-lp", default=None, help="write the constraint system here")

    p = sub.add_parser("certify", help="decide a query and emit a certificate")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("check", help="validate a certificate file against a model")
    p.add_argument("model")
    p.add_argument("certificate")
    p.add_argument("--exact", action="store_true", help="zero-slack rational checking")
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("product", help="emit the visited-set tracking product")
    common(p)
    p.set_defaults(func=cmd_product)

    p = sub.add_parser("quotient", help="emit the MEC quotient")
    common(p, query=False)
    p.set_defaults(func=cmd_quotient)

    p = sub.add_parser("reduce", help="emit the reduced reachability-form query")
    common(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("witness-subsystem", help="emit a minimal witnessing subsystem")
    common(p)
    p.add_argument("--level", choices=("quotient", "original"), default="original")
    p.add_argument(
        "--weights",
        action="store_true",
        help="weight quotient states by how many original states they fold",
    )
    p.set_defaults(func=cmd_witness_subsystem)

    p = sub.add_parser("witness-scheduler", help="emit a witnessing scheduler (DOT)")
    common(p)
    p.set_defaults(func=cmd_witness_scheduler)

    return parser


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (MocertError, OSError, json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
