"""Command-line entry point: ``otclean {repair,metrics,apply,distortion,lift}``.

Exit status is 0 on success, 1 on invalid input and 2 when a solver stops
before converging (its artifacts are still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cost import CostSpec, build_cost_matrix
from .dist import CIConstraint, Distribution, Schema, cmi, marginalize
from .errors import OTCleanError, SizeCapError, ValidationError
from .fastotclean import CleanerConfig, TraceRecord, fast_otclean, nmf_init, write_trace
from .io import (
    bin_numeric,
    distribution_json,
    domain_json,
    dump_json,
    infer_schema,
    load_constraint,
    load_json,
    read_csv,
    table_distribution,
    write_csv,
)
from .ot import SolverParams, TransportPlan, transport_cost
from .qclp import build_qclp, solve_qclp_alternating
from .repair import apply_cleaner, cleaner_from_plan, distortion, rod
from .unsaturated import (
    LIFTS,
    SplitSchema,
    build_coupling_greedy,
    lift_product,
    repair_unsaturated,
)

EXIT_OK, EXIT_INVALID, EXIT_UNCONVERGED = 0, 1, 2
# dense d_V x d_V cost matrices; bounds memory
MAX_DOMAIN = 65536


@dataclass
class RunConfig:
    cost: str = "hamming"
    weights: dict | None = None
    frozen: list = field(default_factory=list)
    cost_matrix: str | None = None
    rho: float = 200.0
    lam: float = 1e3
    mu: float = 0.0
    tol: float = 1e-9
    max_iter: int = 10_000
    outer_tol: float = 1e-7
    outer_max: int = 200
    init: str = "nmf"
    warm_start: bool = True
    lift: str = "product"
    seed: int = 0
    backend: str = "fast"
    bins: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.backend not in ("fast", "qclp"):
            raise ValidationError(f"backend must be 'fast' or 'qclp', got {self.backend!r}")
        if self.lift not in LIFTS:
            raise ValidationError(f"lift must be one of {LIFTS}, got {self.lift!r}")
        if int(self.threads) < 1:
            raise ValidationError("threads must be at least 1")
        # validates the numeric ranges
        self.cleaner()
        self.cost_spec()

    @classmethod
    def from_file(cls, path) -> dict:
        obj = load_json(path)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        return obj

    def cost_spec(self) -> CostSpec:
        return CostSpec(self.cost, self.weights, tuple(self.frozen), self.cost_matrix)

    def cleaner(self) -> CleanerConfig:
        solver = SolverParams(self.rho, self.lam, self.tol, int(self.max_iter))
        return CleanerConfig(
            solver, self.mu, self.outer_tol, int(self.outer_max), self.init, int(self.seed), self.warm_start, int(self.threads)
        )


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _add_data_args(p, constraint=True):
    p.add_argument("--data", required=True, help="CSV with a header row")
    if constraint:
        p.add_argument("--constraint", required=True, help='JSON {"x": [...], "y": [...], "z": [...]}')
    p.add_argument("--domain", help="JSON {attribute: [ordered labels]}")
    p.add_argument("--bins", type=int, help="equi-width bins for numeric columns")


def _add_cost_args(p):
    p.add_argument("--cost", choices=["hamming", "euclidean", "weighted-hamming", "external-matrix"])
    p.add_argument("--weights", help="JSON {attribute: weight} for weighted-hamming")
    p.add_argument("--frozen", help="comma-separated attributes that may not change")
    p.add_argument("--cost-matrix", dest="cost_matrix", help="headerless CSV for external-matrix")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otclean", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("repair", help="repair a dataset towards a CI constraint")
    _add_data_args(p)
    _add_cost_args(p)
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--out", default="otclean_out", help="output directory")
    p.add_argument("--rho", type=float)
    p.add_argument("--lam", "--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--outer-tol", dest="outer_tol", type=float)
    p.add_argument("--outer-max", dest="outer_max", type=int)
    p.add_argument("--init", choices=["nmf", "random"])
    p.add_argument("--no-warm-start", dest="warm_start", action="store_const", const=False)
    p.add_argument("--lift", choices=list(LIFTS))
    p.add_argument("--backend", choices=["fast", "qclp"])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)

    p = sub.add_parser("metrics", help="CMI and optional ROD of a dataset or target")
    p.add_argument("--data", help="CSV with a header row")
    p.add_argument("--target", help="target.json written by repair")
    p.add_argument("--constraint", required=True)
    p.add_argument("--domain")
    p.add_argument("--bins", type=int)
    p.add_argument("--yhat", help="binary prediction column for ROD")
    p.add_argument("--s", help="binary sensitive column for ROD")
    p.add_argument("--a", help="comma-separated admissible columns for ROD")

    p = sub.add_parser("apply", help="resample a dataset through a plan")
    _add_data_args(p, constraint=False)
    p.add_argument("--plan", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="repaired CSV (stdout when omitted)")

    p = sub.add_parser("distortion", help="EMD between two datasets")
    _add_data_args(p, constraint=False)
    _add_cost_args(p)
    p.add_argument("--other", required=True, help="second CSV with the same header")

    p = sub.add_parser("lift", help="lift a plan over the constraint's attributes to the full space")
    _add_data_args(p)
    p.add_argument("--plan", required=True, help="plan over the constraint's attributes")
    p.add_argument("--lift", choices=list(LIFTS), default="product")
    p.add_argument("--out", help="full plan JSON (stdout when omitted)")
    return parser


def _load_table(args, extra=()):
    tables = [read_csv(args.data)] + [read_csv(x) for x in extra]
    if args.bins:
        tables = [bin_numeric(t, args.bins) for t in tables]
    domain = load_json(args.domain) if args.domain else None
    schema = infer_schema(tables, domain)
    if schema.size > MAX_DOMAIN:
        raise SizeCapError(f"joint domain has {schema.size} cells; the CLI allows at most {MAX_DOMAIN}")
    return tables, schema


def _threads(flag) -> int:
    if flag:
        return flag
    env = os.environ.get("OTCLEAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"OTCLEAN_THREADS must be an integer, got {env!r}") from None
    return 1


def _run_config(args) -> RunConfig:
    base = RunConfig.from_file(args.config) if args.config else {}
    for name in ("cost", "cost_matrix", "rho", "lam", "mu", "tol", "max_iter", "outer_tol", "outer_max",
                 "init", "warm_start", "lift", "backend", "seed", "bins"):
        val = getattr(args, name, None)
        if val is not None:
            base[name] = val
    if args.weights:
        base["weights"] = json.loads(args.weights)
    if args.frozen:
        base["frozen"] = [a.strip() for a in args.frozen.split(",") if a.strip()]
    base["threads"] = _threads(args.threads or base.get("threads"))
    try:
        return RunConfig(**base)
    except TypeError as exc:
        raise ValidationError(f"bad configuration: {exc}") from None


def _plan_to_trace(costs) -> list[TraceRecord]:
    return [TraceRecord(i, c, c, 0.0, 0) for i, c in enumerate(costs)]


def cmd_repair(args) -> int:
    cfg = _run_config(args)
    args.bins = cfg.bins
    (table,), schema = _load_table(args)
    P = table_distribution(table, schema, args.data)
    sigma = load_constraint(args.constraint, schema)
    spec = cfg.cost_spec()
    cleaner_cfg = cfg.cleaner()
    saturated = sigma.is_saturated(schema)
    if saturated:
        C = build_cost_matrix(schema, spec, reference=P)
        if cfg.backend == "fast":
            res = fast_otclean(P, C, sigma, cleaner_cfg)
            plan, target, trace, converged = res.plan, res.target, res.trace, res.converged
        else:
            out = solve_qclp_alternating(build_qclp(P, C, sigma), nmf_init(P, sigma, cfg.seed))
            plan, target, trace, converged = out.plan, out.target, _plan_to_trace(out.costs), out.converged
    else:
        if not spec.separable:
            raise ValidationError("unsaturated constraints need an attribute-separable cost, not external-matrix")
        split = SplitSchema.from_sigma(schema, sigma)
        PU = marginalize(P, split.u_attrs)
        CU = build_cost_matrix(PU.schema, spec.restrict(split.u_attrs), reference=PU)
        C = build_cost_matrix(schema, spec, reference=P)
        if cfg.backend == "fast":
            res = repair_unsaturated(P, sigma, CU, cleaner_cfg, cfg.lift)
            plan, trace, converged = res.plan, res.cleaner.trace, res.cleaner.converged
        else:
            out = solve_qclp_alternating(build_qclp(PU, CU, sigma), nmf_init(PU, sigma, cfg.seed))
            lift = lift_product if cfg.lift == "product" else build_coupling_greedy
            plan = lift(P, out.plan)
            trace, converged = _plan_to_trace(out.costs), out.converged
        target = plan.target()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    cleaner = cleaner_from_plan(plan)
    repaired = apply_cleaner(table.rows, cleaner, cfg.seed)
    dump_json(outdir / "plan.json", plan.to_json())
    dump_json(outdir / "target.json", dict(distribution_json(target), domains=domain_json(schema)))
    dump_json(outdir / "cleaner.json", cleaner.to_json())
    dump_json(outdir / "domain.json", domain_json(schema))
    dump_json(outdir / "config.json", asdict(cfg))
    write_trace(trace, outdir / "trace.jsonl")
    write_csv(outdir / "repaired.csv", schema.names, repaired)
    rep_dist = table_distribution(type(table)(schema.names, [tuple(map(str, r)) for r in repaired]), schema)
    report = {
        "converged": converged,
        "saturated": saturated,
        "backend": cfg.backend,
        "outer_iterations": len(trace),
        "cost": transport_cost(plan, C),
        "cmi_before": cmi(P, sigma),
        "cmi_target": cmi(target, sigma),
        "cmi_repaired": cmi(rep_dist, sigma),
        "schema_hash": schema.digest(),
    }
    dump_json(outdir / "report.json", report)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if converged else EXIT_UNCONVERGED


def _target_distribution(path) -> Distribution:
    obj = load_json(path)
    if "domains" not in obj:
        raise ValidationError(f"{path}: target file lacks its domains")
    schema = Schema(tuple(obj["domains"]), tuple(tuple(v) for v in obj["domains"].values()))
    if obj.get("schema_hash") and obj["schema_hash"] != schema.digest():
        raise ValidationError(f"{path}: schema hash does not match its domains")
    mass = np.zeros(schema.size)
    for e in obj["entries"]:
        mass[int(e["index"])] += float(e["mass"])
    return Distribution(schema, mass)


def cmd_metrics(args) -> int:
    if bool(args.data) == bool(args.target):
        raise ValidationError("metrics needs exactly one of --data or --target")
    if args.data:
        (table,), schema = _load_table(args)
        dist = table_distribution(table, schema, args.data)
    else:
        dist = _target_distribution(args.target)
    sigma = load_constraint(args.constraint, dist.schema)
    report = {"cmi": cmi(dist, sigma)}
    if args.yhat or args.s:
        if not (args.yhat and args.s):
            raise ValidationError("ROD needs both --yhat and --s")
        adm = [a.strip() for a in args.a.split(",")] if args.a else []
        report["rod"], report["log_rod"] = rod(dist, args.yhat, args.s, adm)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_apply(args) -> int:
    (table,), schema = _load_table(args)
    plan = TransportPlan.from_json(load_json(args.plan), schema)
    out = apply_cleaner(table.rows, cleaner_from_plan(plan), args.seed)
    if args.out:
        write_csv(args.out, schema.names, out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(schema.names)
        w.writerows(out)
    return EXIT_OK


def cmd_distortion(args) -> int:
    (a, b), schema = _load_table(args, extra=[args.other])
    spec = CostSpec(args.cost or "hamming", json.loads(args.weights) if args.weights else None,
                    tuple(x.strip() for x in args.frozen.split(",")) if args.frozen else (), args.cost_matrix)
    p = table_distribution(a, schema, args.data)
    q = table_distribution(b, schema, args.other)
    C = build_cost_matrix(schema, spec, reference=p)
    print(json.dumps({"distortion": distortion(p, q, C)}))
    return EXIT_OK


def cmd_lift(args) -> int:
    (table,), schema = _load_table(args)
    P = table_distribution(table, schema, args.data)
    sigma = load_constraint(args.constraint, schema)
    split = SplitSchema.from_sigma(schema, sigma)
    plan_s = TransportPlan.from_json(load_json(args.plan), split.u_schema)
    plan = (lift_product if args.lift == "product" else build_coupling_greedy)(P, plan_s)
    text = plan.dumps()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


COMMANDS = {
    "repair": cmd_repair,
    "metrics": cmd_metrics,
    "apply": cmd_apply,
    "distortion": cmd_distortion,
    "lift": cmd_lift,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (OTCleanError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
