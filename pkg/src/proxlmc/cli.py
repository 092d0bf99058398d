"""Command-line entry point.

Three subcommands share one configuration surface (see ``config.REGISTRY``):

``proxlmc run``         sample a target and write moment summaries, per-step
                        chain files, and (for imaging runs) result images;
``proxlmc theory``      evaluate the non-asymptotic constants and budgets;
``proxlmc prox-bench``  compare the inner proximal solvers on one potential.

Exit codes: 0 on success (a diverged chain is a reported result, not an
error), 2 for configuration problems, 3 for file-system problems, 1 for
anything else. All floats in CSV files are written with ``repr``, so a rerun
with the same configuration and seed produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import diagnostics, imaging, potentials, prox, theory
from .config import REGISTRY, ConfigError, ExperimentConfig, dump_toml, load_config
from .potentials import PotentialProfile, UnsupportedOperation
from .prox import ProxFailure, ProxRequest
from .samplers import ChainTrace, run_replicas
from .theory import TheoryInputs

__all__ = ["main"]

_ATTR_TO_NAME = {spec.attr: spec.name for spec in REGISTRY}


def _add_registry_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="FILE", help="TOML configuration file")
    for spec in REGISTRY:
        kwargs: dict = {
            "dest": spec.attr,
            "type": spec.type,
            "help": spec.help,
            "default": argparse.SUPPRESS,
        }
        if spec.choices:
            kwargs["choices"] = spec.choices
        parser.add_argument(spec.flag, **kwargs)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxlmc",
        description="Langevin sampling with inexact proximal steps",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("run", "run a sampling experiment"),
        ("theory", "evaluate constants and step/iteration budgets"),
        ("prox-bench", "compare proximal solvers on one potential"),
    ):
        _add_registry_flags(sub.add_parser(name, help=blurb))
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        _ATTR_TO_NAME[attr]: value
        for attr, value in vars(args).items()
        if attr in _ATTR_TO_NAME
    }
    return load_config(getattr(args, "config", None), overrides)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # plain repr even for numpy scalars
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _build_profile(cfg: ExperimentConfig) -> PotentialProfile:
    if cfg.potential == "gaussian":
        return potentials.gaussian(cfg.d)
    if cfg.potential == "quartic":
        return potentials.quartic(cfg.d)
    if cfg.potential == "ginzburg_landau":
        return potentials.ginzburg_landau(
            cfg.q, varkappa=cfg.varkappa, varsigma=cfg.varsigma, upsilon=cfg.upsilon
        )
    raise ConfigError(
        "deconvolution runs are driven by the imaging pipeline; "
        "this code path only serves the closed-form potentials"
    )


def _start_point(cfg: ExperimentConfig, p: PotentialProfile) -> np.ndarray:
    if cfg.scenario == "minimizer":
        return p.minimizer.copy()
    return np.full(p.dim, 7.0)


def _chain_rows(trace: ChainTrace) -> list[list]:
    rows = []
    last = len(trace.steps) - 1
    for i, step in enumerate(trace.steps):
        diverged = 1 if (trace.diverged_at is not None and i == last) else 0
        rows.append(
            [step, trace.x1[i], trace.norm_sq[i], trace.prox_iters[i], diverged]
        )
    return rows


def _write_traces(cfg: ExperimentConfig, out: Path, traces: list[ChainTrace]):
    for r, trace in enumerate(traces):
        if trace.steps is None:
            continue
        _write_csv(
            out / f"chain_{r}.csv",
            ["step", "x1", "norm_sq", "prox_iters", "diverged"],
            _chain_rows(trace),
        )


def _report_divergences(traces: list[ChainTrace]):
    for r, trace in enumerate(traces):
        if trace.diverged_at is not None:
            print(f"replica {r}: diverged at step {trace.diverged_at}")


def _summary_table(rows: list[list]):
    header = ["method", "scenario", "moment_order", "estimate", "re", "cv"]
    widths = [max(len(header[j]), max((len(f"{row[j]:.6g}" if isinstance(row[j], float) else str(row[j])) for row in rows), default=0)) for j in range(len(header))]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [
            (f"{v:.6g}" if isinstance(v, float) else str(v)).ljust(w)
            for v, w in zip(row, widths)
        ]
        print("  ".join(cells))


def _out_dir(cfg: ExperimentConfig) -> Path:
    """Resolve the output directory, honoring PROXLMC_OUTPUT_ROOT for
    relative paths so batch scripts can redirect every run at once."""
    out = Path(cfg.output_dir)
    root = os.environ.get("PROXLMC_OUTPUT_ROOT")
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _cmd_run(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_toml(cfg))
    if cfg.potential == "deconvolution":
        return _run_imaging(cfg, out)
    return _run_chains(cfg, out)


def _run_chains(cfg: ExperimentConfig, out: Path) -> int:
    p = _build_profile(cfg)
    x0 = _start_point(cfg, p)
    traces = run_replicas(
        cfg.sampler,
        p,
        x0,
        cfg.n_steps,
        tau=cfg.tau,
        base_seed=cfg.base_seed,
        n_replicas=cfg.replicas,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        kappa=cfg.kappa,
        alpha=cfg.alpha,
        solver=cfg.prox_solver,
        delta_abs=cfg.prox_delta_abs,
        prox_max_iterations=cfg.prox_max_iterations,
        taming=cfg.taming,
        proposal_std=cfg.proposal_std,
        workers=cfg.workers,
        trajectories=cfg.trajectories,
    )
    rows = []
    for m in (2, 4, 6):
        try:
            truth = diagnostics.oracle_moments(p, m)
        except ValueError:
            truth = None
        report = diagnostics.aggregate(traces, m, truth)
        rows.append(
            [cfg.sampler, cfg.scenario, m, report.estimate, report.re, report.cv]
        )
    _write_csv(
        out / "summary.csv",
        ["method", "scenario", "moment_order", "estimate", "re", "cv"],
        rows,
    )
    _write_traces(cfg, out, traces)
    _summary_table(rows)
    _report_divergences(traces)
    return 0


def _run_imaging(cfg: ExperimentConfig, out: Path) -> int:
    problem = imaging.make_problem(
        cfg.side, cfg.psf_depth, cfg.sigma, cfg.beta, seed=cfg.image_seed
    )
    results = []
    for r in range(cfg.replicas):
        results.append(
            imaging.deconvolve_sample(
                problem,
                n_steps=cfg.n_steps,
                burn_in=cfg.burn_in,
                tau=cfg.tau,
                delta_abs=cfg.prox_delta_abs,
                kappa=cfg.kappa,
                alpha=cfg.alpha,
                base_seed=cfg.base_seed,
                replica=r,
                thinning=cfg.thinning,
                start=cfg.scenario,
                prox_max_iterations=cfg.prox_max_iterations,
                max_failure_rate=cfg.prox_max_failure_rate,
            )
        )
    traces = [res.trace for res in results]
    rows = []
    for m in (2, 4, 6):
        report = diagnostics.aggregate(traces, m, truth=None)
        rows.append(
            [cfg.sampler, cfg.scenario, m, report.estimate, report.re, report.cv]
        )
    _write_csv(
        out / "summary.csv",
        ["method", "scenario", "moment_order", "estimate", "re", "cv"],
        rows,
    )
    if cfg.trajectories != "none":
        keep = traces if cfg.trajectories == "all" else traces[:1]
        _write_traces(cfg, out, keep)

    first = results[0]
    side = cfg.side
    images = {
        "truth": problem.truth,
        "observed": problem.observed,
        "mean": first.mean,
    }
    if first.trace.samples:
        stack = np.asarray(first.trace.samples)
        images["quantile_10"] = diagnostics.quantile_image(stack, 0.10)
        images["quantile_90"] = diagnostics.quantile_image(stack, 0.90)
    for name, img in images.items():
        imaging.write_pgm(out / f"{name}.pgm", img, side)
        imaging.write_raw(out / f"{name}.raw", img, side)
    rmse = float(np.sqrt(np.mean((first.mean - problem.truth) ** 2)))
    print(f"posterior mean rmse against truth: {rmse:.6g}")
    print(f"uncertified proximal steps: {first.trace.prox_failures}")
    _summary_table(rows)
    _report_divergences(traces)
    return 0


def _cmd_theory(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_toml(cfg))
    d = cfg.problem_dim
    ti = TheoryInputs(
        d=d,
        lambda_v=cfg.lambda_v,
        r_v=cfg.r_v,
        kappa=cfg.kappa,
        alpha=cfg.alpha,
        tau=cfg.tau,
        m0=cfg.m0,
    )
    w2_init = cfg.w2_init if cfg.w2_init is not None else float(d)
    rows: list[list] = [["d", d], ["tau", cfg.tau], ["eps", cfg.eps]]

    orders = sorted({1.0, 2.0, cfg.q_v - 1.0, cfg.q_v, cfg.q_v + 1.0})
    for m in orders:
        try:
            rows.append([f"moment_constant_{m:g}", theory.moment_constant(m, ti)])
        except ValueError as exc:
            rows.append([f"moment_constant_{m:g}", f"unavailable: {exc}"])
    try:
        kt = theory.k_tau(ti, cfg.q_v, cfg.l_q)
        rows.append(["k_tau", kt.value])
        rows.append(["k_tau_remark_bound", kt.remark_bound])
    except ValueError as exc:
        rows.append(["k_tau", f"unavailable: {exc}"])
    try:
        rows.append(["c_nu", theory.c_of_nu(ti, cfg.q_v, cfg.c_v)])
    except ValueError as exc:
        rows.append(["c_nu", f"unavailable: {exc}"])
    try:
        kl = theory.kl_budget(ti, cfg.q_v, cfg.c_v, cfg.l_q, w2_init, cfg.eps)
        rows.append(["kl_tau_eps", kl.tau_eps])
        rows.append(["kl_n_eps", kl.n_eps])
    except ValueError as exc:
        rows.append(["kl_budget", f"unavailable: {exc}"])
    try:
        w2 = theory.w2_budget(ti, cfg.q_v, cfg.l_q, w2_init, cfg.eps)
        rows.append(["w2_tau_eps", w2.tau_eps])
        rows.append(["w2_n_eps", w2.n_eps])
    except ValueError as exc:
        rows.append(["w2_budget", f"unavailable: {exc}"])

    _write_csv(out / "theory.csv", ["quantity", "value"], rows)
    width = max(len(str(r[0])) for r in rows)
    for name, value in rows:
        shown = f"{value:.6g}" if isinstance(value, float) else value
        print(f"{str(name).ljust(width)}  {shown}")
    return 0


_BENCH_SOLVERS = {
    "gaussian": ("exact", "gd", "newton"),
    "quartic": ("exact", "gd", "newton"),
    "ginzburg_landau": ("gd", "newton"),
    "deconvolution": ("pdhg",),
}


def _cmd_prox_bench(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_toml(cfg))
    if cfg.potential == "deconvolution":
        problem = imaging.make_problem(
            cfg.side, cfg.psf_depth, cfg.sigma, cfg.beta, seed=cfg.image_seed
        )
        p = problem.profile
        base = problem.observed
        spread = 0.1
    else:
        p = _build_profile(cfg)
        base = np.zeros(p.dim)
        spread = 2.0
    solvers = _BENCH_SOLVERS[cfg.potential]
    delta = (
        cfg.prox_delta_abs
        if cfg.prox_delta_abs is not None
        else cfg.kappa * cfg.tau ** (1.0 + cfg.alpha)
    )
    rng = np.random.default_rng(cfg.base_seed)
    points = [base + spread * rng.standard_normal(p.dim) for _ in range(cfg.replicas)]

    rows: list[list] = []
    reference: dict[int, np.ndarray] = {}
    for solver in solvers:
        for i, x in enumerate(points):
            req = ProxRequest(
                x=x, tau=cfg.tau, delta=delta,
                max_iterations=cfg.prox_max_iterations,
            )
            t0 = time.perf_counter()
            try:
                res = prox.solve(req, p, solver)
                status = "ok"
            except ProxFailure as fail:
                res = fail.best
                status = "failed"
            elapsed = time.perf_counter() - t0
            if i not in reference:
                reference[i] = res.point
            dist = float(np.linalg.norm(res.point - reference[i]))
            rows.append(
                [solver, i, status, res.iterations, res.error_bound, elapsed, dist]
            )
    _write_csv(
        out / "prox_bench.csv",
        ["solver", "point", "status", "iterations", "error_bound",
         "seconds", "dist_to_reference"],
        rows,
    )
    print(f"potential={cfg.potential} tau={cfg.tau} delta={delta:.3e}")
    for solver in solvers:
        own = [r for r in rows if r[0] == solver]
        iters = max(r[3] for r in own)
        err = max(r[4] for r in own)
        secs = sum(r[5] for r in own) / len(own)
        dist = max(r[6] for r in own)
        bad = sum(1 for r in own if r[2] != "ok")
        print(
            f"{solver:>7}: max_iters={iters:<5d} max_error_bound={err:.3e} "
            f"mean_seconds={secs:.4f} max_dist_to_reference={dist:.3e}"
            + (f"  FAILURES={bad}" if bad else "")
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "run":
            return _cmd_run(cfg)
        if args.command == "theory":
            return _cmd_theory(cfg)
        return _cmd_prox_bench(cfg)
    except (ConfigError, UnsupportedOperation) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
