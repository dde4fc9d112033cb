"""Command-line interface and experiment orchestration.

Subcommands: list-functions, sample, greedy, exact, run-plan, report.
Exit codes: 0 success, 1 usage error, 2 plan finished with failed jobs,
3 internal error.

run-plan executes the cross product function x dimension x sampler x
budget x batch size x seed.  Jobs are independent, get their own derived
RNG seed, may run in parallel (worker count from --workers or the
DIVBATCH_WORKERS environment variable), and write their outputs
atomically, so an interrupted plan can be resumed: completed jobs are
recognized by their config hash and never re-executed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from . import analysis, testbed
from .samplers import SAMPLER_IDS, SamplerConfig, sample_portfolio
from .samplers.cmaes import default_population_size
from .selection import (
    SelectionConfig,
    exact_select,
    greedy_sweep,
    verify_batch,
)

EXACT_SIZE_CAP = 20000
WORKERS_ENV_VAR = "DIVBATCH_WORKERS"


class UsageError(ValueError):
    """Bad flags, bad plan, bad file: reported on stderr, exit code 1."""


# ──────────────────────────────────────────────────────────────────────
#  Plans and jobs
# ──────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ExperimentPlan:
    """The benchmark matrix plus shared solver settings."""

    functions: tuple[str, ...] = ()
    dimensions: tuple[int, ...] = (2, 5, 10)
    samplers: tuple[str, ...] = SAMPLER_IDS
    budgets: tuple[int, ...] = (1000, 10000)
    batch_sizes: tuple[int, ...] = (5, 10)
    seeds: tuple[int, ...] = tuple(range(10))
    max_iterations: int = 1000
    epsilon: float = 0.0
    exact_dmins: tuple[float, ...] = ()
    exact_time_limit: float = 600.0
    output_dir: str = "runs"


def load_plan(path) -> ExperimentPlan:
    """Plan from a JSON file of plain keys matching the plan fields."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read plan file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"plan file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("plan file must contain a JSON object")
    known = {f.name for f in fields(ExperimentPlan)}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(
            f"unknown plan keys: {', '.join(sorted(unknown))}; "
            f"known keys: {', '.join(sorted(known))}"
        )
    coerced = {}
    for f in fields(ExperimentPlan):
        if f.name not in raw:
            continue
        value = raw[f.name]
        coerced[f.name] = tuple(value) if isinstance(value, list) else value
    return ExperimentPlan(**coerced)


def validate_plan(plan: ExperimentPlan) -> list[tuple[str, str]]:
    """(level, message) findings; levels are "error" and "warning"."""
    findings: list[tuple[str, str]] = []
    err = lambda msg: findings.append(("error", msg))
    warn = lambda msg: findings.append(("warning", msg))

    for name in ("functions", "dimensions", "samplers", "budgets", "batch_sizes", "seeds"):
        if not getattr(plan, name):
            err(f"plan selects no {name}: the job cross-product is empty")
    known_ids = {d.function_id: d for d in testbed.list_functions()}
    for fid in plan.functions:
        if fid not in known_ids:
            err(f"unknown function id {fid!r}")
    for dim in plan.dimensions:
        if dim < 1:
            err(f"dimension must be positive, got {dim}")
    for fid in plan.functions:
        desc = known_ids.get(fid)
        if desc is None:
            continue
        for dim in plan.dimensions:
            if dim >= 1 and dim < desc.min_dimension:
                err(f"{fid} requires dimension >= {desc.min_dimension}, plan has {dim}")
    for sampler in plan.samplers:
        if sampler not in SAMPLER_IDS:
            err(f"unknown sampler {sampler!r}")
    for budget in plan.budgets:
        if budget < 1:
            err(f"budget must be >= 1, got {budget}")
        for k in plan.batch_sizes:
            if k > budget:
                err(f"batch size k={k} exceeds budget T={budget}")
    for k in plan.batch_sizes:
        if k < 2:
            err(f"batch size must be >= 2, got {k}")
    for seed in plan.seeds:
        if not 0 <= seed < 2**64:
            err(f"seed must be an unsigned 64-bit integer, got {seed}")
    if "cmaes" in plan.samplers:
        for dim in plan.dimensions:
            if dim < 1:
                continue
            lam = default_population_size(dim)
            for budget in plan.budgets:
                if budget < lam:
                    err(
                        f"cmaes needs at least one population: T={budget} < "
                        f"lambda={lam} at D={dim}"
                    )
    for d in plan.exact_dmins:
        if not d > 0:
            err(f"exact d_min must be positive, got {d}")
            continue
        for dim in plan.dimensions:
            if dim >= 1:
                diameter = 10.0 * math.sqrt(dim)
                if d > diameter:
                    err(
                        f"exact d_min={d} exceeds the box diameter "
                        f"{diameter:.4f} at D={dim}: always infeasible"
                    )
    if plan.exact_dmins:
        for budget in plan.budgets:
            if budget > EXACT_SIZE_CAP:
                warn(
                    f"exact solves on T={budget} > {EXACT_SIZE_CAP} points can be "
                    f"very slow; they run under the {plan.exact_time_limit:.0f}s "
                    f"time limit and may return incumbents with a gap"
                )
    if plan.max_iterations < 0:
        err(f"greedy iteration budget must be >= 0, got {plan.max_iterations}")
    if plan.epsilon < 0:
        err(f"epsilon must be >= 0, got {plan.epsilon}")
    if not plan.exact_time_limit > 0:
        err(f"exact time limit must be positive, got {plan.exact_time_limit}")
    return findings


@dataclass(frozen=True)
class JobSpec:
    """One (function, dimension, sampler, budget, k, seed) cell of the plan."""

    function_id: str
    dimension: int
    sampler_id: str
    budget: int
    k: int
    seed: int
    max_iterations: int
    epsilon: float
    exact_dmins: tuple[float, ...]
    exact_time_limit: float

    @property
    def job_id(self) -> str:
        return (
            f"{self.function_id}__D{self.dimension}__{self.sampler_id}"
            f"__T{self.budget}__k{self.k}__s{self.seed}"
        )

    @property
    def group_id(self) -> str:
        return f"D{self.dimension}_T{self.budget}_k{self.k}"

    @property
    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @property
    def derived_seed(self) -> int:
        # per-job RNG stream: hash of the plan seed entry and the job identity
        digest = hashlib.sha256(f"{self.seed}|{self.job_id}".encode()).digest()
        return int.from_bytes(digest[:8], "big")


def plan_jobs(plan: ExperimentPlan) -> list[JobSpec]:
    jobs = []
    for fid in plan.functions:
        for dim in plan.dimensions:
            for sampler in plan.samplers:
                for budget in plan.budgets:
                    for k in plan.batch_sizes:
                        for seed in plan.seeds:
                            jobs.append(
                                JobSpec(
                                    function_id=fid,
                                    dimension=dim,
                                    sampler_id=sampler,
                                    budget=budget,
                                    k=k,
                                    seed=seed,
                                    max_iterations=plan.max_iterations,
                                    epsilon=plan.epsilon,
                                    exact_dmins=tuple(plan.exact_dmins),
                                    exact_time_limit=plan.exact_time_limit,
                                )
                            )
    return jobs


# ──────────────────────────────────────────────────────────────────────
#  Job execution
# ──────────────────────────────────────────────────────────────────────


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _records_csv_text(records, k: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "dmin", "loss"] + [f"idx_{i}" for i in range(1, k + 1)])
    for rec in records:
        writer.writerow(
            [rec.iteration, repr(rec.min_distance), repr(rec.loss)]
            + [str(i) for i in rec.batch.indices]
        )
    return buf.getvalue()


def _read_records_csv(path: Path) -> list[tuple[float, float]]:
    pairs = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        next(reader)  # header
        for row in reader:
            pairs.append((float(row[1]), float(row[2])))
    return pairs


def _checkpoint_name(d: float) -> str:
    return f"batch_dmin{d!r}.json"


def _execute_job(payload: dict) -> dict:
    """Run one job; returns its manifest entry.  Runs in worker processes."""
    job = JobSpec(
        **{
            **payload["job"],
            "exact_dmins": tuple(payload["job"]["exact_dmins"]),
        }
    )
    job_dir = Path(payload["out_dir"]) / "jobs" / job.job_id
    started = time.monotonic()
    entry = {
        "job_id": job.job_id,
        "config_hash": job.config_hash,
        "seed": job.seed,
        "derived_seed": job.derived_seed,
        "group": job.group_id,
        "status": "completed",
        "outputs": [],
        "error": None,
    }
    try:
        job_dir.mkdir(parents=True, exist_ok=True)
        fn = testbed.get_function(job.function_id, job.dimension)
        cfg = SamplerConfig(
            sampler_id=job.sampler_id,
            budget=job.budget,
            dimension=job.dimension,
            seed=job.derived_seed,
        )
        portfolio = sample_portfolio(fn, cfg)
        records = greedy_sweep(
            portfolio,
            SelectionConfig(
                k=job.k,
                max_iterations=job.max_iterations,
                epsilon=job.epsilon,
            ),
        )
        records_path = job_dir / "records.csv"
        _atomic_write(records_path, _records_csv_text(records, job.k))
        entry["outputs"].append(str(records_path))

        for d in job.exact_dmins:
            feasible = [r for r in records if r.min_distance >= d]
            warm = min(feasible, key=lambda r: r.loss).batch if feasible else None
            result = exact_select(
                portfolio,
                SelectionConfig(
                    k=job.k, min_distance=d, time_limit=job.exact_time_limit
                ),
                warm_start=warm,
            )
            checkpoint = {
                "d_min": d,
                "status": result.status,
                "nodes": result.nodes,
                "wall_time": result.wall_time,
                "lower_bound": result.lower_bound,
                "gap": result.gap,
            }
            if result.batch is not None:
                dist = analysis.pairwise_distance_stats(
                    portfolio, result.batch, enforced_min_distance=d
                )
                checkpoint.update(
                    indices=list(result.batch.indices),
                    min_pairwise_distance=result.batch.min_pairwise_distance,
                    loss=result.batch.loss,
                    verified=verify_batch(portfolio, result.batch, d),
                    distances=list(dist.distances),
                )
            path = job_dir / _checkpoint_name(d)
            _atomic_write(path, json.dumps(checkpoint, indent=2, sort_keys=True))
            entry["outputs"].append(str(path))
    except Exception as exc:  # job isolation: failures land in the manifest
        entry["status"] = "failed"
        entry["error"] = f"{type(exc).__name__}: {exc}"
    entry["wall_time"] = round(time.monotonic() - started, 6)
    if entry["status"] == "completed":
        _atomic_write(
            job_dir / "result.json", json.dumps(entry, indent=2, sort_keys=True)
        )
    return entry


def _curve_metadata(job: JobSpec) -> dict:
    return {
        "function_id": job.function_id,
        "sampler_id": job.sampler_id,
        "seed": job.seed,
        "T": job.budget,
        "k": job.k,
        "dimension": job.dimension,
    }


def _assemble_group_outputs(out: Path, jobs: list[JobSpec], entries: dict) -> None:
    """Rebuild per-group curves.csv and dist_stats.csv from job outputs."""
    groups: dict[str, list[JobSpec]] = {}
    for job in jobs:
        groups.setdefault(job.group_id, []).append(job)
    for group_id in sorted(groups):
        completed = [
            j for j in groups[group_id] if entries[j.job_id]["status"] == "completed"
        ]
        if not completed:
            continue
        group_dir = out / "groups" / group_id
        group_dir.mkdir(parents=True, exist_ok=True)
        curves = []
        dist_entries = []
        for job in sorted(completed, key=lambda j: j.job_id):
            job_dir = out / "jobs" / job.job_id
            pairs = _read_records_csv(job_dir / "records.csv")
            curves.append(analysis.lower_envelope(pairs, _curve_metadata(job)))
            for d in job.exact_dmins:
                path = job_dir / _checkpoint_name(d)
                if not path.exists():
                    continue
                checkpoint = json.loads(path.read_text())
                if "distances" not in checkpoint:
                    continue
                dist_entries.append(
                    (
                        _curve_metadata(job),
                        analysis.distance_distribution(
                            checkpoint["distances"], checkpoint["d_min"]
                        ),
                    )
                )
        tmp = group_dir / "curves.csv.tmp"
        analysis.write_curves_csv(tmp, curves)
        os.replace(tmp, group_dir / "curves.csv")
        if dist_entries:
            tmp = group_dir / "dist_stats.csv.tmp"
            analysis.write_distance_stats_csv(tmp, dist_entries)
            os.replace(tmp, group_dir / "dist_stats.csv")


def run_plan(plan: ExperimentPlan, workers: int = 1) -> dict:
    """Execute (or resume) a plan; returns the manifest."""
    findings = validate_plan(plan)
    problems = [msg for level, msg in findings if level == "error"]
    if problems:
        raise UsageError("invalid plan:\n  " + "\n  ".join(problems))
    for level, msg in findings:
        print(f"{level}: {msg}", file=sys.stderr)

    out = Path(plan.output_dir)
    (out / "jobs").mkdir(parents=True, exist_ok=True)
    jobs = plan_jobs(plan)

    entries: dict[str, dict] = {}
    pending: list[JobSpec] = []
    for job in jobs:
        result_path = out / "jobs" / job.job_id / "result.json"
        if result_path.exists():
            previous = json.loads(result_path.read_text())
            if (
                previous.get("config_hash") == job.config_hash
                and previous.get("status") == "completed"
            ):
                entries[job.job_id] = previous
                continue
        pending.append(job)

    payloads = [{"job": asdict(job), "out_dir": str(out)} for job in pending]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute_job, payloads))
    else:
        results = [_execute_job(p) for p in payloads]
    for result in results:
        entries[result["job_id"]] = result

    _assemble_group_outputs(out, jobs, entries)

    manifest = {
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "plan": asdict(plan),
        "executed": len(pending),
        "reused": len(jobs) - len(pending),
        "jobs": [entries[j.job_id] for j in sorted(jobs, key=lambda j: j.job_id)],
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


# ──────────────────────────────────────────────────────────────────────
#  Reporting
# ──────────────────────────────────────────────────────────────────────


def _read_curves_csv(path: Path) -> list[analysis.TradeoffCurve]:
    curves: dict[tuple[str, str, str], list[tuple[float, float]]] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        for function_id, sampler_id, seed, d, loss in reader:
            key = (function_id, sampler_id, seed)
            curves.setdefault(key, []).append((float(d), float(loss)))
    return [
        analysis.TradeoffCurve(
            points=tuple(points),
            metadata={"function_id": fid, "sampler_id": sid, "seed": seed},
        )
        for (fid, sid, seed), points in sorted(curves.items())
    ]


def report(out_dir, d_grid: tuple[float, ...] | None = None) -> int:
    """Aggregate a finished run directory; returns the exit code."""
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        print(f"no manifest found under {out}", file=sys.stderr)
        return 1
    manifest = json.loads(manifest_path.read_text())
    jobs = manifest.get("jobs", [])
    if not jobs:
        print("manifest lists no jobs: nothing to report", file=sys.stderr)
        return 1
    if d_grid is None:
        plan_dmins = manifest.get("plan", {}).get("exact_dmins") or ()
        d_grid = tuple(plan_dmins) or (1.0, 3.0, 5.0)

    by_status: dict[str, int] = {}
    for job in jobs:
        by_status[job["status"]] = by_status.get(job["status"], 0) + 1
    print(
        f"jobs: {len(jobs)} total, "
        + ", ".join(f"{n} {s}" for s, n in sorted(by_status.items()))
    )

    group_dirs = sorted(p for p in (out / "groups").glob("*") if p.is_dir())
    for group_dir in group_dirs:
        curves_path = group_dir / "curves.csv"
        if not curves_path.exists():
            continue
        curves = _read_curves_csv(curves_path)
        if not curves:
            continue
        rows = analysis.aggregate(curves, d_grid)
        tmp = group_dir / "aggregate.csv.tmp"
        analysis.write_aggregate_csv(tmp, rows)
        os.replace(tmp, group_dir / "aggregate.csv")
        print(f"\ngroup {group_dir.name} ({len(curves)} curves)")
        for row in rows:
            if row.median is None:
                summary = f"unreached by all {row.run_count} runs"
            else:
                summary = (
                    f"median {row.median:.6g} (q1 {row.q1:.6g}, q3 {row.q3:.6g}), "
                    f"{row.unreached} unreached"
                )
            print(
                f"  {row.function_id} / {row.sampler_id} @ d={row.d:g}: {summary}"
            )
    return 0


# ──────────────────────────────────────────────────────────────────────
#  Argument parsing
# ──────────────────────────────────────────────────────────────────────


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not 2
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated number list, got {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="divbatch",
        description="Diverse low-loss batches from black-box optimization portfolios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-functions", help="catalog as JSON lines")

    p = sub.add_parser("sample", help="draw a portfolio and save it as CSV")
    p.add_argument("--function", required=True, help="catalog function id")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sampler", required=True, choices=SAMPLER_IDS)
    p.add_argument("--budget", type=int, required=True, help="portfolio size T")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--population-size", type=int, default=None, help="cmaes lambda")
    p.add_argument("--sigma0", type=float, default=None, help="cmaes initial step size")
    p.add_argument("--out", required=True)

    p = sub.add_parser("greedy", help="trade-off sweep over a saved portfolio")
    p.add_argument("--portfolio", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--iters", type=int, default=1000, help="swap budget M")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--f-opt", type=float, default=None,
                   help="override the optimum used for losses")
    p.add_argument("--out", required=True, help="records CSV path")

    p = sub.add_parser("exact", help="provably optimal batch at one distance")
    p.add_argument("--portfolio", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--dmin", type=float, required=True)
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--f-opt", type=float, default=None,
                   help="override the optimum used for losses")
    p.add_argument("--out", required=True, help="batch JSON path")

    p = sub.add_parser("run-plan", help="execute a benchmark matrix")
    p.add_argument("--plan", default=None, help="JSON plan file")
    p.add_argument("--functions", type=_str_list, default=None)
    p.add_argument("--dims", type=_int_list, default=None)
    p.add_argument("--samplers", type=_str_list, default=None)
    p.add_argument("--budgets", type=_int_list, default=None)
    p.add_argument("--batch-sizes", type=_int_list, default=None)
    p.add_argument("--seeds", type=_int_list, default=None)
    p.add_argument("--iters", type=int, default=None, help="greedy swap budget M")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--exact-dmins", type=_float_list, default=None)
    p.add_argument("--exact-time-limit", type=float, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help=f"parallel jobs (default ${WORKERS_ENV_VAR} or 1)")
    p.add_argument("--validate-only", action="store_true",
                   help="check the plan and exit")

    p = sub.add_parser("report", help="aggregate a finished run directory")
    p.add_argument("--out", required=True, help="run-plan output directory")
    p.add_argument("--d-grid", type=_float_list, default=None,
                   help="distances to compare at (default: the plan's exact dmins)")

    return parser


# ──────────────────────────────────────────────────────────────────────
#  Subcommand handlers
# ──────────────────────────────────────────────────────────────────────


def _cmd_list_functions(_args) -> int:
    for desc in testbed.list_functions():
        print(
            json.dumps(
                {
                    "id": desc.function_id,
                    "group": desc.group,
                    "dimension_range": list(desc.dimension_range),
                    "f_opt_rule": desc.f_opt_rule,
                }
            )
        )
    return 0


def _cmd_sample(args) -> int:
    fn = testbed.get_function(args.function, args.dim)
    cfg = SamplerConfig(
        sampler_id=args.sampler,
        budget=args.budget,
        dimension=args.dim,
        seed=args.seed,
        population_size=args.population_size,
        initial_step_size=args.sigma0,
    )
    portfolio = sample_portfolio(fn, cfg)
    testbed.save_portfolio(args.out, portfolio)
    print(f"wrote {portfolio.size} points to {args.out}")
    return 0


def _load_portfolio_arg(path, f_opt_override):
    try:
        portfolio = testbed.load_portfolio(path)
    except (OSError, testbed.PortfolioFormatError) as exc:
        raise UsageError(f"cannot load portfolio {path}: {exc}") from None
    if f_opt_override is not None:
        portfolio = testbed.Portfolio(
            dimension=portfolio.dimension,
            points=portfolio.points,
            fitness=portfolio.fitness,
            f_opt=f_opt_override,
            provenance=portfolio.provenance,
        )
    return portfolio


def _cmd_greedy(args) -> int:
    portfolio = _load_portfolio_arg(args.portfolio, args.f_opt)
    config = SelectionConfig(k=args.k, max_iterations=args.iters, epsilon=args.eps)
    if args.k > portfolio.size:
        raise UsageError(f"k={args.k} exceeds portfolio size {portfolio.size}")
    records = greedy_sweep(portfolio, config)
    _atomic_write(Path(args.out), _records_csv_text(records, args.k))
    last = records[-1]
    print(
        f"{len(records)} records; final d_min {last.min_distance!r}, "
        f"loss {last.loss!r}"
        + (" (no feasible swap left)" if last.exhausted else "")
    )
    return 0


def _cmd_exact(args) -> int:
    portfolio = _load_portfolio_arg(args.portfolio, args.f_opt)
    if args.k > portfolio.size:
        raise UsageError(f"k={args.k} exceeds portfolio size {portfolio.size}")
    config = SelectionConfig(
        k=args.k, min_distance=args.dmin, time_limit=args.time_limit
    )
    result = exact_select(portfolio, config)
    payload = {
        "d_min": args.dmin,
        "status": result.status,
        "nodes": result.nodes,
        "wall_time": result.wall_time,
        "lower_bound": result.lower_bound,
        "gap": result.gap,
    }
    if result.batch is not None:
        payload.update(
            indices=list(result.batch.indices),
            min_pairwise_distance=result.batch.min_pairwise_distance,
            loss=result.batch.loss,
            verified=verify_batch(portfolio, result.batch, args.dmin),
        )
    _atomic_write(Path(args.out), json.dumps(payload, indent=2, sort_keys=True))
    if result.batch is None:
        print(f"{result.status}; no batch at d_min={args.dmin}")
    else:
        print(f"{result.status}; loss {result.batch.loss!r} at d_min={args.dmin}")
    return 0


def _plan_from_args(args) -> ExperimentPlan:
    plan = load_plan(args.plan) if args.plan else ExperimentPlan()
    overrides = {
        "functions": args.functions,
        "dimensions": args.dims,
        "samplers": args.samplers,
        "budgets": args.budgets,
        "batch_sizes": args.batch_sizes,
        "seeds": args.seeds,
        "max_iterations": args.iters,
        "epsilon": args.eps,
        "exact_dmins": args.exact_dmins,
        "exact_time_limit": args.exact_time_limit,
        "output_dir": args.out,
    }
    provided = {key: value for key, value in overrides.items() if value is not None}
    return replace(plan, **provided)


def _cmd_run_plan(args) -> int:
    plan = _plan_from_args(args)
    if args.validate_only:
        findings = validate_plan(plan)
        for level, msg in findings:
            print(f"{level}: {msg}")
        if any(level == "error" for level, _ in findings):
            return 1
        print(f"plan ok: {len(plan_jobs(plan))} jobs")
        return 0
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    if workers < 1:
        raise UsageError(f"worker count must be >= 1, got {workers}")
    manifest = run_plan(plan, workers=workers)
    failed = [j for j in manifest["jobs"] if j["status"] != "completed"]
    print(
        f"{len(manifest['jobs'])} jobs: {manifest['executed']} executed, "
        f"{manifest['reused']} reused, {len(failed)} failed"
    )
    for job in failed:
        print(f"  failed {job['job_id']}: {job['error']}", file=sys.stderr)
    return 2 if failed else 0


def _cmd_report(args) -> int:
    return report(args.out, d_grid=args.d_grid)


_HANDLERS = {
    "list-functions": _cmd_list_functions,
    "sample": _cmd_sample,
    "greedy": _cmd_greedy,
    "exact": _cmd_exact,
    "run-plan": _cmd_run_plan,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is an internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
