#!/usr/bin/env python3
import argparse
import importlib
import logging
import math
import os
import sys
import time
from collections.abc import Sequence
from datetime import datetime, timezone
from importlib.resources import files
from pathlib import Path
from typing import Any

import numpy as np
import orjson
from jinja2 import Environment, StrictUndefined

from gencol_mmot import engine
from gencol_mmot.baselines import sinkhorn_2m
from gencol_mmot.costs import COST_REGISTRY, CostEvaluator, get_cost
from gencol_mmot.engine import Certificate, GenColState
from gencol_mmot.errors import (
    InfeasibleError,
    InputFormatError,
    IterationLimitError,
    NumericalUnderflowError,
)
from gencol_mmot.extract import (
    GridSpec,
    barycenter_pushforward,
    rasterize,
    smooth_threshold,
    spline_path,
)
from gencol_mmot.init import nw_corner
from gencol_mmot.instances import (
    check_family,
    monotone_coupling_cost,
    reflected_pair,
    reflected_start,
)
from gencol_mmot.io import (
    ProgressWriter,
    read_csv_cloud,
    read_idx_images,
    read_pgm,
    read_plan,
    read_potentials,
    write_cloud,
    write_grid,
    write_history,
    write_mask,
    write_plan,
    write_potentials,
    write_run_record,
)
from gencol_mmot.lp import MAX_FULL_PRODUCT, solve_full_product
from gencol_mmot.measures import (
    Marginal,
    max_residual,
    product_size,
    shape_of,
    sparsity_bound,
    total_support,
)
from gencol_mmot.types import (
    BarycenterSpec,
    CostSpec,
    CustomSpec,
    GenColConfig,
    QuadraticSpec,
    RunRecord,
    SinkhornParams,
    SplineApproxSpec,
    SplineExactSpec,
    Tolerances,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_UNCERTIFIED = 4

DEFAULT_OUT_DIR = "gencol-out"

SUMMARY_ENVIRONMENT = Environment(
    autoescape=False,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)


def read_packaged_template(filename: str) -> str:
    return files("gencol_mmot").joinpath("templates", filename).read_text(encoding="utf-8")


def render_summary(**values: Any) -> str:
    return SUMMARY_ENVIRONMENT.from_string(read_packaged_template("run_summary.md")).render(**values)


# ---------------------------------------------------------------------------
# inputs


def load_marginals(
    paths: Sequence[Path],
    images: Sequence[int] | None = None,
    count: int | None = None,
    normalize: bool = False,
) -> list[Marginal]:
    """Read marginals by file type: ``.csv`` clouds, ``.pgm`` images, IDX3 image sets."""
    out: list[Marginal] = []
    for path in paths:
        name = path.name.lower()
        if not path.exists():
            raise FileNotFoundError(f"Input not found: {path}")
        if name.endswith(".csv"):
            out.append(read_csv_cloud(path, normalize=normalize))
        elif name.endswith(".pgm"):
            out.append(read_pgm(path))
        elif "idx3" in name or name.endswith((".idx", ".idx.gz")):
            out.extend(read_idx_images(path, count=count, indices=images))
        else:
            raise InputFormatError(str(path), "unknown input type (expected .csv, .pgm or an IDX3 image file)")
    return out


def load_callback(ref: str):
    module_name, sep, attr = ref.partition(":")
    if not sep or not module_name or not attr:
        raise ValueError(f"--cost-module must look like 'package.module:function', got {ref!r}")
    try:
        return getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ValueError(f"cannot load cost callback {ref!r}: {exc}") from exc


def equispaced(n: int) -> tuple[float, ...]:
    return tuple(float(t) for t in np.linspace(0.0, 1.0, n))


def build_cost(args: argparse.Namespace, n_marginals: int) -> CostSpec:
    kind = args.cost
    if kind == "quadratic":
        return QuadraticSpec()
    if kind == "barycenter":
        weights = tuple(args.weights) if args.weights else (1.0 / n_marginals,) * n_marginals
        return BarycenterSpec(weights=weights)
    if kind == "spline_exact":
        return SplineExactSpec(times=tuple(args.times) if args.times else equispaced(n_marginals))
    if kind == "spline_approx":
        if args.step is not None:
            return SplineApproxSpec(step=args.step)
        return SplineApproxSpec(times=tuple(args.times) if args.times else equispaced(n_marginals))
    if kind == "custom":
        if not args.cost_module:
            raise ValueError("--cost custom requires --cost-module package.module:function")
        return CustomSpec(callback=load_callback(args.cost_module), by_index=args.by_index, name=args.cost_module)
    raise ValueError(f"Unknown cost kind: {kind}. Available: {list(COST_REGISTRY.keys())}")


def build_config(args: argparse.Namespace) -> GenColConfig:
    return GenColConfig(
        beta=args.beta,
        seed=args.seed,
        max_stall=args.max_stall,
        max_iterations=args.max_iterations,
        locality_radius=args.locality_radius,
        parent_sampling=args.parent_sampling or "uniform",
        stall_scan_limit=args.stall_scan_limit,
        tolerances=Tolerances(optimality=args.tol),
    )


def out_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# running and reporting


def run_gencol(
    args: argparse.Namespace,
    marginals: Sequence[Marginal],
    cost: CostSpec,
    out: Path,
    init=None,
) -> tuple[GenColState, Certificate]:
    config = build_config(args)
    if args.progress:
        with ProgressWriter(out / "progress.csv") as progress:
            state = engine.run(marginals, cost, config, init=init, on_solve=progress)
    else:
        state = engine.run(marginals, cost, config, init=init)
    cert = engine.certify(state, budget=args.certify_budget, tol=args.tol)
    return state, cert


def write_solution(out: Path, state: GenColState) -> list[str]:
    write_plan(state.plan, out / "plan.csv")
    write_potentials(state.potentials, out / "potentials.csv")
    write_history(state.history, out / "history.csv")
    return ["plan.csv", "potentials.csv", "history.csv"]


def exit_code(state: GenColState, cert: Certificate) -> int:
    if cert.violations > 0:
        return EXIT_UNCERTIFIED
    if state.termination == "max-iterations" and not cert.exact_optimum:
        return EXIT_UNCERTIFIED
    return EXIT_OK


def _jsonable(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return repr(value)


def make_record(
    args: argparse.Namespace,
    started: datetime,
    wall_clock: float,
    state: GenColState | None = None,
    cert: Certificate | None = None,
    **extra: Any,
) -> RunRecord:
    arguments = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "handler"}
    record = RunRecord(
        command=args.command,
        arguments=arguments,
        wall_clock_s=wall_clock,
        started_at=started.isoformat(),
        certificate=cert.as_dict() if cert is not None else None,
        extra={k: _jsonable(v) for k, v in extra.items()},
    )
    if state is not None:
        record.config = state.config.model_dump(mode="json")
        record.cost_history = list(state.history)
        record.final_objective = state.objective
        record.support_size = len(state.plan)
        record.peak_omega = state.peak_omega
        record.iterations = state.iteration
        record.accepted = state.accepted
        record.rejected = state.rejected
        record.scans = state.scans
    return record


def summary_values(command: str, cost: str, shape: Sequence[int], state: GenColState | None, cert: Certificate | None) -> dict[str, Any]:
    values: dict[str, Any] = {
        "command": command,
        "cost": cost,
        "shape": list(shape),
        "objective": None,
        "support_size": None,
        "sparsity_bound": sparsity_bound(shape),
        "peak_omega": None,
        "capacity": None,
        "iterations": None,
        "accepted": None,
        "rejected": None,
        "termination": None,
        "certificate": cert.as_dict() if cert is not None else None,
        "notes": [],
        "files": [],
    }
    if state is not None:
        values.update(
            objective=state.objective,
            support_size=len(state.plan),
            peak_omega=state.peak_omega,
            capacity=state.capacity,
            iterations=state.iteration,
            accepted=state.accepted,
            rejected=state.rejected,
            termination=state.termination,
        )
    return values


def finish(out: Path, record: RunRecord, values: dict[str, Any], file_names: list[str]) -> None:
    write_run_record(record, out / "run.json")
    values["files"] = sorted(file_names + ["run.json", "summary.md"])
    (out / "summary.md").write_text(render_summary(**values), encoding="utf-8")


def format_console(
    command: str,
    marginals: Sequence[Marginal],
    state: GenColState,
    cert: Certificate,
    out: Path,
    notes: Sequence[str] = (),
) -> str:
    shape = shape_of(marginals)
    bound = sparsity_bound(shape)
    residual = max_residual(state.plan, marginals)
    lines = [f"\ngencol {command}: {' × '.join(map(str, shape))} (Σℓ = {total_support(shape)})"]
    lines.append("─" * 50)
    lines.append(f"Objective: {state.objective:.16e}")

    mark = "✓" if len(state.plan) <= bound else "✗"
    lines.append(f"{mark} Support {len(state.plan)} ≤ {bound}")
    mark = "✓" if residual <= state.config.tolerances.feasibility else "✗"
    lines.append(f"{mark} Plan feasible (max marginal residual {residual:.3e})")
    lines.append(f"  Peak |Ω|: {state.peak_omega} (capacity {state.capacity})")

    if cert.exact_optimum:
        lines.append(f"✓ Exact optimum: {cert.checked} configurations scanned")
    elif cert.violations:
        lines.append(
            f"✗ {cert.violations} dual violations (max {cert.max_violation:.3e} at {cert.worst})"
        )
    else:
        lines.append(f"⚠ No violations in {cert.checked} sampled of {cert.product_size} configurations")

    for note in notes:
        lines.append(f"  {note}")

    lines.append("")
    lines.append("─" * 50)
    lines.append(
        f"Result: {state.termination}, {state.iteration} solve(s), "
        f"{state.accepted} accepted, {state.rejected} rejected"
    )
    lines.append(f"Output: {out}")
    return "\n".join(lines)


def report(args: argparse.Namespace, text: str, short: str) -> None:
    print(short if args.quiet else text)


# ---------------------------------------------------------------------------
# subcommands


def _solve_and_write(args, marginals, spec: CostSpec, out: Path, init=None, notes=(), extra_files=(), **extra):
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    state, cert = run_gencol(args, marginals, spec, out, init=init)
    file_names = write_solution(out, state) + list(extra_files)
    if args.progress:
        file_names.append("progress.csv")
    return state, cert, started, t0, file_names


def cmd_solve(args: argparse.Namespace) -> int:
    marginals = load_marginals(args.inputs, args.images, args.count, args.normalize)
    check_family(marginals)
    spec = build_cost(args, len(marginals))
    out = out_dir(args)
    state, cert, started, t0, file_names = _solve_and_write(args, marginals, spec, out)
    record = make_record(args, started, time.perf_counter() - t0, state, cert, cost=spec.kind)
    finish(out, record, summary_values(args.command, spec.kind, shape_of(marginals), state, cert), file_names)
    report(args, format_console(args.command, marginals, state, cert, out), f"objective {state.objective:.16e}")
    return exit_code(state, cert)


def weight_grid(k: int) -> list[tuple[int, int, int]]:
    """All (a, b, c) with a + b + c = k, first weight descending."""
    return [(a, b, k - a - b) for a in range(k, -1, -1) for b in range(k - a, -1, -1)]


def _barycenter_once(args, marginals: list[Marginal], weights: tuple[float, ...], out: Path) -> int:
    spec = BarycenterSpec(weights=weights)
    state, cert, started, t0, file_names = _solve_and_write(args, marginals, spec, out)
    cloud = barycenter_pushforward(state.plan, marginals, weights)
    write_cloud(cloud, out / "barycenter.csv")
    file_names.append("barycenter.csv")
    notes = [f"Barycenter support: {cloud.size} points"]

    if args.raster:
        refinement = args.refinement or len(marginals)
        if cloud.dim == 2 and len(args.raster) == 2:
            grid = GridSpec.for_pixels(args.raster[0], args.raster[1], refinement)
        elif cloud.dim == 1 and len(args.raster) == 1:
            grid = GridSpec.for_interval(args.raster[0], refinement)
        else:
            raise ValueError(f"--raster needs {cloud.dim} size(s) for a {cloud.dim}-D barycenter")
        raster = rasterize(cloud, grid, method=args.splat)
        write_grid(raster, out / "barycenter.pgm")
        file_names += ["barycenter.pgm", "barycenter.scale.txt"]
        notes.append(f"Raster: {' × '.join(map(str, grid.shape))} at refinement {refinement}")
        if args.sigma is not None:
            write_mask(smooth_threshold(raster, args.sigma, args.level), out / "barycenter_mask.pgm")
            file_names.append("barycenter_mask.pgm")

    record = make_record(
        args, started, time.perf_counter() - t0, state, cert, weights=list(weights), barycenter_support=cloud.size
    )
    values = summary_values(args.command, f"barycenter {list(weights)}", shape_of(marginals), state, cert)
    values["notes"] = notes
    finish(out, record, values, file_names)
    report(
        args,
        format_console(args.command, marginals, state, cert, out, notes),
        f"weights {list(weights)}: objective {state.objective:.16e}, support {cloud.size}",
    )
    return exit_code(state, cert)


def cmd_barycenter(args: argparse.Namespace) -> int:
    marginals = load_marginals(args.inputs, args.images, args.count, args.normalize)
    check_family(marginals)
    if args.sigma is not None and args.level is None:
        raise ValueError("--sigma requires --level")
    out = out_dir(args)

    if args.sweep is None:
        n = len(marginals)
        weights = tuple(args.weights) if args.weights else (1.0 / n,) * n
        if len(weights) != n:
            raise ValueError(f"{len(weights)} weights for {n} marginals")
        return _barycenter_once(args, marginals, weights, out)

    if len(marginals) != 3:
        raise ValueError(f"--sweep needs exactly 3 input marginals, got {len(marginals)}")
    if args.sweep < 1:
        raise ValueError(f"--sweep must be at least 1, got {args.sweep}")
    codes = []
    for triple in weight_grid(args.sweep):
        sub = out / "w_{}_{}_{}".format(*triple)
        sub.mkdir(parents=True, exist_ok=True)
        weights = tuple(t / args.sweep for t in triple)
        codes.append(_barycenter_once(args, marginals, weights, sub))
    return max(codes)


def cmd_spline(args: argparse.Namespace) -> int:
    marginals = load_marginals(args.inputs, args.images, args.count, args.normalize)
    if len(marginals) < 3:
        raise ValueError(f"spline interpolation needs at least 3 marginals, got {len(marginals)}")
    times = tuple(args.times) if args.times else equispaced(len(marginals))
    if args.approx:
        spec: CostSpec = SplineApproxSpec(times=times)
    else:
        spec = SplineExactSpec(times=times)
    queries = list(args.query_times) if args.query_times else list(equispaced(args.frames))
    out = out_dir(args)

    state, cert, started, t0, file_names = _solve_and_write(args, marginals, spec, out)
    path = spline_path(state.plan, marginals, times, queries)
    for j, (t, cloud) in enumerate(path):
        name = f"frame_{j:03d}.csv"
        write_cloud(cloud, out / name)
        file_names.append(name)

    notes = [f"{len(queries)} frame(s) at t = {', '.join(f'{q:g}' for q in queries)}"]
    record = make_record(args, started, time.perf_counter() - t0, state, cert, times=list(times), query_times=queries)
    values = summary_values(args.command, spec.kind, shape_of(marginals), state, cert)
    values["notes"] = notes
    finish(out, record, values, file_names)
    report(args, format_console(args.command, marginals, state, cert, out, notes), f"objective {state.objective:.16e}")
    return exit_code(state, cert)


def cmd_nwcorner(args: argparse.Namespace) -> int:
    marginals = load_marginals(args.inputs, args.images, args.count, args.normalize)
    check_family(marginals)
    out = out_dir(args)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()

    init = nw_corner(marginals, order=args.order, beta=args.beta)
    shape = shape_of(marginals)
    residual = max_residual(init.plan, marginals)
    bound = sparsity_bound(shape)
    feasible = residual <= args.tol
    sparse = len(init.plan) <= bound
    write_plan(init.plan, out / "nwcorner.csv")

    notes = [
        f"max marginal residual {residual:.3e} (tolerance {args.tol:g})",
        f"{len(init.plan)} configurations, bound {bound}",
    ]
    record = make_record(
        args, started, time.perf_counter() - t0, residual=residual, support_size=len(init.plan), feasible=feasible
    )
    values = summary_values(args.command, "none", shape, None, None)
    values["support_size"] = len(init.plan)
    values["notes"] = notes
    finish(out, record, values, ["nwcorner.csv"])

    lines = [f"\ngencol nwcorner: {' × '.join(map(str, shape))}", "─" * 50]
    lines.append(f"{'✓' if feasible else '✗'} Feasible (max marginal residual {residual:.3e})")
    lines.append(f"{'✓' if sparse else '✗'} Support {len(init.plan)} ≤ {bound}")
    lines.append("─" * 50)
    lines.append(f"Output: {out}")
    report(args, "\n".join(lines), f"{'feasible' if feasible else 'infeasible'}, support {len(init.plan)}")
    return EXIT_OK if feasible and sparse else EXIT_INFEASIBLE


def exact_two_marginal_cost(first: Marginal, second: Marginal) -> float:
    """Exact quadratic cost: monotone rearrangement on the line, HiGHS otherwise."""
    if first.dim == 1 and second.dim == 1:
        return monotone_coupling_cost(first, second)
    if product_size((first.size, second.size)) > MAX_FULL_PRODUCT:
        raise ValueError("exact reference cost needs 1-D marginals or a product small enough for the full LP")
    result = solve_full_product(CostEvaluator(get_cost("quadratic"), [first, second]))
    return float(result.objective)


def sinkhorn_sweep(
    first: Marginal,
    second: Marginal,
    epsilons: Sequence[float],
    max_iter: int,
    tol: float,
    log_domain: bool,
    exact: float,
    scaling: bool = False,
) -> list[dict[str, Any]]:
    rows = []
    for eps in epsilons:
        params = SinkhornParams(
            epsilon=eps,
            max_iter=max_iter,
            tol=tol,
            log_domain=log_domain,
            epsilon_scaling=scaling and log_domain and eps < 1.0,
        )
        try:
            res = sinkhorn_2m(first, second, params)
        except NumericalUnderflowError as exc:
            logger.warning("epsilon %g: %s", eps, exc)
            rows.append({"epsilon": eps, "reg": math.nan, "iterations": 0, "converged": False,
                         "cost": math.nan, "error": math.nan})
            continue
        rows.append({
            "epsilon": eps,
            "reg": res.reg,
            "iterations": res.iterations,
            "converged": res.converged,
            "cost": res.cost,
            "error": abs(res.cost - exact),
        })
    return rows


def write_sweep(rows: list[dict[str, Any]], path: Path) -> Path:
    fields = ["epsilon", "reg", "iterations", "converged", "cost", "error"]
    lines = [",".join(fields)]
    for row in rows:
        lines.append(
            f"{row['epsilon']:.16e},{row['reg']:.16e},{row['iterations']},{int(row['converged'])},"
            f"{row['cost']:.16e},{row['error']:.16e}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def format_sweep(rows: list[dict[str, Any]], exact: float) -> list[str]:
    lines = [f"Exact cost: {exact:.16e}", f"  {'epsilon':>10} {'iterations':>10} {'cost':>14} {'error':>10}"]
    for row in rows:
        mark = "✓" if row["converged"] else "⚠"
        lines.append(
            f"{mark} {row['epsilon']:>10.3g} {row['iterations']:>10d} {row['cost']:>14.8f} {row['error']:>10.3e}"
        )
    return lines


def cmd_sinkhorn(args: argparse.Namespace) -> int:
    if args.inputs:
        marginals = load_marginals(args.inputs, args.images, args.count, args.normalize)
        if len(marginals) != 2:
            raise ValueError(f"sinkhorn compares exactly 2 marginals, got {len(marginals)}")
        first, second = marginals
    else:
        first, second = reflected_pair(args.ell)
    out = out_dir(args)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()

    exact = exact_two_marginal_cost(first, second)
    rows = sinkhorn_sweep(
        first, second, args.epsilon, args.max_iter, args.sinkhorn_tol, not args.plain, exact, args.epsilon_scaling
    )
    write_sweep(rows, out / "sinkhorn.csv")

    record = make_record(args, started, time.perf_counter() - t0, exact_cost=exact, sweep=[list(r.values()) for r in rows])
    values = summary_values(args.command, "quadratic", (first.size, second.size), None, None)
    values["notes"] = [
        f"epsilon {r['epsilon']:g}: {r['iterations']} iterations, cost error {r['error']:.3e}" for r in rows
    ]
    finish(out, record, values, ["sinkhorn.csv"])

    lines = [f"\ngencol sinkhorn: {first.size} × {second.size}", "─" * 50, *format_sweep(rows, exact), "─" * 50]
    lines.append(f"Output: {out}")
    best = min((r["error"] for r in rows), default=math.nan)
    report(args, "\n".join(lines), f"best cost error {best:.3e}")
    return EXIT_OK


def cmd_demo1d(args: argparse.Namespace) -> int:
    first, second = reflected_pair(args.ell)
    marginals = [first, second]
    if args.parent_sampling is None:
        args.parent_sampling = "mass"
    out = out_dir(args)
    init = reflected_start(first, second, beta=args.beta, seed=args.seed)

    state, cert, started, t0, file_names = _solve_and_write(args, marginals, QuadraticSpec(), out, init=init)
    exact = monotone_coupling_cost(first, second)
    gap = state.objective - exact
    notes = [f"Monotone-coupling cost {exact:.16e}, gap {gap:.3e}"]

    rows: list[dict[str, Any]] = []
    if args.epsilon:
        rows = sinkhorn_sweep(
            first, second, args.epsilon, args.max_iter, args.sinkhorn_tol, True, exact, args.epsilon_scaling
        )
        write_sweep(rows, out / "sinkhorn.csv")
        file_names.append("sinkhorn.csv")
        notes += format_sweep(rows, exact)[1:]

    record = make_record(args, started, time.perf_counter() - t0, state, cert, exact_cost=exact, gap=gap)
    values = summary_values(args.command, "quadratic", shape_of(marginals), state, cert)
    values["notes"] = notes[:1]
    finish(out, record, values, file_names)
    report(args, format_console(args.command, marginals, state, cert, out, notes), f"gap {gap:.3e}")

    code = exit_code(state, cert)
    if code == EXIT_OK and abs(gap) > args.gap_tol:
        return EXIT_UNCERTIFIED
    return code


def cmd_certify(args: argparse.Namespace) -> int:
    marginals = load_marginals(args.inputs, args.images, args.count, args.normalize)
    check_family(marginals)
    spec = build_cost(args, len(marginals))
    out = out_dir(args)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()

    evaluator = CostEvaluator(get_cost(spec), marginals)
    potentials = read_potentials(args.potentials)
    cert = engine.certify_potentials(potentials, evaluator, args.tol, budget=args.certify_budget, seed=args.seed)
    dual = potentials.dual_objective(marginals)
    notes = [f"Dual objective {dual:.16e}"]
    passed = cert.violations == 0
    extra: dict[str, Any] = {"dual_objective": dual}

    if args.plan is not None:
        plan = read_plan(args.plan, shape_of(marginals))
        primal = plan.cost(evaluator)
        residual = max_residual(plan, marginals)
        gap = primal - dual
        notes += [f"Plan cost {primal:.16e}, duality gap {gap:.3e}", f"Plan marginal residual {residual:.3e}"]
        extra.update(primal_objective=primal, duality_gap=gap, residual=residual)
        passed = passed and residual <= Tolerances().feasibility and abs(gap) <= args.tol * max(1.0, abs(primal))

    (out / "certificate.json").write_bytes(
        orjson.dumps(cert.as_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n"
    )
    record = make_record(args, started, time.perf_counter() - t0, None, cert, **extra)
    values = summary_values(args.command, spec.kind, shape_of(marginals), None, cert)
    values["notes"] = notes
    finish(out, record, values, ["certificate.json"])

    lines = [f"\ngencol certify: {' × '.join(map(str, shape_of(marginals)))}", "─" * 50]
    if cert.exact_optimum:
        lines.append(f"✓ Dual feasible on all {cert.product_size} configurations")
    elif cert.violations:
        lines.append(f"✗ {cert.violations} dual violations (max {cert.max_violation:.3e} at {cert.worst})")
    else:
        lines.append(f"⚠ No violations in {cert.checked} sampled configurations")
    lines += [f"  {n}" for n in notes]
    lines.append("─" * 50)
    verdict = "exact optimum" if passed and cert.exhaustive else "passed" if passed else "failed"
    lines.append(f"Result: {verdict}")
    report(args, "\n".join(lines), verdict)
    return EXIT_OK if passed else EXIT_UNCERTIFIED


# ---------------------------------------------------------------------------
# parser


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--beta", type=float, default=3.0, help="Working-set size factor: |Ω| ≤ β·Σℓ (default: 3)")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--tol", type=float, default=1e-9, help="Optimality / certification tolerance (default: 1e-9)")
    p.add_argument("--max-stall", type=int, default=None, help="Consecutive rejections before stopping (default: 10·Σℓ)")
    p.add_argument("--max-iterations", type=int, default=None, help="Hard cap on reduced-LP solves")
    p.add_argument("--locality-radius", type=int, default=None, help="Mutate indices only within this distance")
    p.add_argument(
        "--parent-sampling", choices=["uniform", "mass"], default=None,
        help="Parent draw over the support (default: uniform; mass for demo1d)",
    )
    p.add_argument(
        "--stall-scan-limit", type=int, default=1_000_000,
        help="Scan products up to this size for violated configurations at stall; 0 disables",
    )
    p.add_argument("--certify-budget", type=int, default=100_000, help="Sample size when the product is too large to scan")
    p.add_argument(
        "--out-dir",
        default=os.environ.get("GENCOL_OUT_DIR", DEFAULT_OUT_DIR),
        help=f"Output directory (default: $GENCOL_OUT_DIR or {DEFAULT_OUT_DIR})",
    )
    p.add_argument("--progress", action="store_true", help="Write per-solve progress to progress.csv")
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Quiet mode: one-line summary and exit code")
    return p


def _inputs_parser(required: bool = True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("inputs", type=Path, nargs="+" if required else "*", help="Marginal files (.csv, .pgm, IDX3)")
    p.add_argument("--images", type=int, nargs="+", default=None, help="Image indices to read from IDX3 files")
    p.add_argument("--count", type=int, default=None, help="Read the first COUNT images of IDX3 files")
    p.add_argument("--normalize", action="store_true", help="Normalize CSV masses instead of requiring unit sum")
    return p


def _cost_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--cost", choices=list(COST_REGISTRY.keys()), default="quadratic", help="Cost kind (default: quadratic)")
    p.add_argument("--weights", type=float, nargs="+", default=None, help="Barycenter weights (default: equal)")
    p.add_argument("--times", type=float, nargs="+", default=None, help="Spline knot times (default: equispaced)")
    p.add_argument("--step", type=float, default=None, help="Time step of the approximate spline cost")
    p.add_argument("--cost-module", default=None, help="Custom cost callback as package.module:function")
    p.add_argument("--by-index", action="store_true", help="Pass index tuples instead of coordinates to the callback")
    return p


def _sinkhorn_options(p: argparse.ArgumentParser, default_eps: list[float] | None) -> None:
    p.add_argument(
        "--epsilon",
        type=float,
        action="append",
        default=default_eps,
        help="Entropic regularization relative to the squared diameter (repeatable)",
    )
    p.add_argument("--max-iter", type=int, default=1000, help="Sinkhorn iterations per epsilon (default: 1000)")
    p.add_argument("--sinkhorn-tol", type=float, default=1e-8, help="Sinkhorn L1 marginal tolerance (default: 1e-8)")
    p.add_argument(
        "--epsilon-scaling", action="store_true", help="Warm-start each epsilon from a decreasing schedule (log domain only)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gencol",
        description="Sparse multi-marginal optimal transport by genetic column generation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  gencol demo1d                                   # 1-D reflected pair, exact optimum check
  gencol solve a.csv b.csv c.csv --cost custom --cost-module my.costs:c --by-index
  gencol barycenter train-images-idx3-ubyte --images 0 1 2 3 --raster 28 28
  gencol barycenter a.pgm b.pgm c.pgm --sweep 4    # weight sweep over 3 shapes
  gencol spline g0.csv g1.csv g2.csv g3.csv --frames 21
  gencol nwcorner a.csv b.csv c.csv
  gencol sinkhorn --epsilon 1e-3 --epsilon 1e-4    # on the 1-D reflected pair
  gencol certify a.csv b.csv --potentials out/potentials.csv --plan out/plan.csv

Exit codes:
  0  Success (requested checks passed)
  2  Input or format error
  3  Infeasible problem or plan
  4  Iteration limit, or stopped without an optimality certificate
""",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    inputs = _inputs_parser()
    costs = _cost_parser()

    p = sub.add_parser("solve", parents=[common, inputs, costs], help="Solve an MMOT problem with a named cost")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("barycenter", parents=[common, inputs], help="Mesh-free Wasserstein barycenter")
    p.add_argument("--weights", type=float, nargs="+", default=None, help="Barycenter weights (default: equal)")
    p.add_argument("--sweep", type=int, default=None, help="Weight grid resolution K over exactly 3 inputs")
    p.add_argument("--raster", type=int, nargs="+", default=None, help="Rasterize: W H of the input pixel grid (or N for 1-D)")
    p.add_argument("--refinement", type=int, default=None, help="Raster refinement factor (default: number of marginals)")
    p.add_argument("--splat", choices=["nearest", "bilinear"], default="nearest")
    p.add_argument("--sigma", type=float, default=None, help="Gaussian blur width in grid cells before thresholding")
    p.add_argument("--level", type=float, default=None, help="Threshold level after blurring")
    p.set_defaults(handler=cmd_barycenter)

    p = sub.add_parser("spline", parents=[common, inputs], help="Cubic spline interpolation in Wasserstein space")
    p.add_argument("--times", type=float, nargs="+", default=None, help="Knot times (default: equispaced in [0, 1])")
    p.add_argument("--approx", action="store_true", help="Use the second-difference approximate cost")
    p.add_argument("--query-times", type=float, nargs="+", default=None, help="Times of the output frames")
    p.add_argument("--frames", type=int, default=11, help="Equispaced frames when --query-times is absent (default: 11)")
    p.set_defaults(handler=cmd_spline)

    p = sub.add_parser("nwcorner", parents=[common, inputs], help="North-west corner feasible plan")
    p.add_argument("--order", choices=["stored", "lexicographic"], default="stored")
    p.set_defaults(handler=cmd_nwcorner)

    p = sub.add_parser("sinkhorn", parents=[common, _inputs_parser(required=False)], help="Entropic baseline sweep")
    p.add_argument("--ell", type=int, default=100, help="Grid size of the built-in instance (default: 100)")
    p.add_argument("--plain", action="store_true", help="Scaling iterations instead of log-domain updates")
    _sinkhorn_options(p, None)
    p.set_defaults(handler=cmd_sinkhorn)

    p = sub.add_parser("demo1d", parents=[common], help="Explanatory 1-D example with exact reference")
    p.add_argument("--ell", type=int, default=100, help="Grid size (default: 100)")
    p.add_argument("--gap-tol", type=float, default=1e-10, help="Allowed gap to the exact cost (default: 1e-10)")
    _sinkhorn_options(p, None)
    p.set_defaults(handler=cmd_demo1d)

    p = sub.add_parser("certify", parents=[common, inputs, costs], help="Check potentials (and a plan) for optimality")
    p.add_argument("--potentials", type=Path, required=True, help="Potentials CSV (k,index,value)")
    p.add_argument("--plan", type=Path, default=None, help="Plan CSV to check for feasibility and duality gap")
    p.set_defaults(handler=cmd_certify)

    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sinkhorn" and not args.epsilon:
        args.epsilon = [1e-2, 3e-3, 1e-3]
    configure_logging(args.verbose, args.quiet)

    try:
        code = args.handler(args)
    except InfeasibleError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        code = EXIT_INFEASIBLE
    except IterationLimitError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        code = EXIT_UNCERTIFIED
    except (ValueError, FileNotFoundError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
