"""Command line entry point: run experiments, validate configs.

Commands
    run <config-file>       execute the configured experiment
    validate <config-file>  parse + validate, report the experiment name
    list-experiments        print available experiment names

Exit codes: 0 success, 1 configuration error, 2 numerical failure (an
error.json record is left in the output directory).
"""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiments, vtkout
from .config import RunConfig, parse_config, render_flat
from .errors import ConfigError, LatinCutError

USAGE = """usage: latincut <command> [args]
commands:
  run <config-file>        run the configured experiment
  validate <config-file>   check a config file and exit
  list-experiments         list experiment names
"""


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _rate_to_previous(h: list[float], err: list[float]) -> list[float]:
    rates = [math.nan]
    for k in range(1, len(h)):
        rates.append(math.log(err[k - 1] / err[k]) / math.log(h[k - 1] / h[k]))
    return rates


def _write_profiles(
    outdir: Path, pdef, result: experiments.SolveResult
) -> None:
    if result.profile_pair is None or not result.checkpoint_traction:
        return
    iface = experiments.interface_for_pair(pdef, result.profile_pair)
    for it in sorted(result.checkpoint_traction):
        prof = analysis.traction_profile(iface, result.checkpoint_traction[it])
        write_csv(
            outdir / f"profile_{it}.csv",
            ["theta", "traction"],
            [tuple(row) for row in prof],
        )


def _write_fields(
    outdir: Path, pdef, checkpoint_u: dict[int, list[np.ndarray]]
) -> None:
    if not checkpoint_u:
        return
    outdir.mkdir(parents=True, exist_ok=True)
    _, _, _, spaces = experiments.problem_spaces(pdef)
    for it in sorted(checkpoint_u):
        for i, (space, u) in enumerate(zip(spaces, checkpoint_u[it])):
            vtkout.write_subdomain_vtk(
                outdir / f"sub{i}_it{it}.vtk", space, u, f"subdomain {i} at it {it}"
            )


def _run_convergence(cfg: RunConfig, outdir: Path, case: str) -> None:
    v = cfg.values
    monitors = set(v["study.monitor_iterations"]) | set(cfg.checkpoints)
    monitors.add(cfg.latin_params().it_max)
    study = experiments.run_convergence_study(
        case=case,
        levels=v["study.levels"],
        base_nx=v["study.base_nx"],
        nu=v["study.nu"],
        contrast=v["study.contrast"],
        params=cfg.latin_params(),
        reference_it_max=v["study.reference_it_max"],
        monitor_iterations=sorted(monitors),
        workers=cfg.workers,
    )
    rec = study.record
    rates = _rate_to_previous(rec.h, rec.energy)
    write_csv(
        outdir / "convergence.csv",
        ["h", "H1_error", "energy_error", "rate_to_previous"],
        list(zip(rec.h, rec.h1, rec.energy, rates)),
    )
    write_csv(
        outdir / "iterations.csv",
        ["it", "energy_error_vs_ref", "latin_indicator"],
        study.iteration_rows,
    )
    monitored = study.levels[-1]
    if cfg.export_profiles:
        # rerun the monitored level capturing interface tractions
        res = experiments.solve_problem(
            monitored.pdef, sorted(monitors), capture_traction=True
        )
        _write_profiles(outdir, res.pdef, res)
    if cfg.export_fields:
        keep = set(cfg.checkpoints) | {cfg.latin_params().it_max}
        snaps = {
            it: u for it, u in monitored.checkpoint_u.items() if it in keep
        }
        _write_fields(outdir / "fields", monitored.pdef, snaps)


def _run_condition_sweep(cfg: RunConfig, outdir: Path) -> None:
    v = cfg.values
    rows = experiments.run_condition_sweep(
        n=v["crack.n"],
        mode=v["crack.mode"],
        eps_values=v["crack.eps_values"],
        gamma_g_values=v["crack.gamma_g_values"],
        eps_x_fixed=v["crack.eps_x"],
        nu=v["study.nu"],
        workers=cfg.workers,
    )
    write_csv(outdir / "condition.csv", ["eps", "gamma_g", "kappa"], rows)
    # record the boundary conditions the sweep assumes
    exemplar = experiments.crack_problem(
        v["crack.eps_x"], v["crack.eps_values"][0], v["crack.n"],
        v["crack.gamma_g_values"][0], v["study.nu"],
    )
    (outdir / "crack_problem.cfg").write_text(
        render_flat(experiments.problem_to_flat(exemplar)), encoding="ascii"
    )


def _run_condition_scaling(cfg: RunConfig, outdir: Path) -> None:
    v = cfg.values
    rows = experiments.run_condition_scaling(
        base_n=v["scaling.base_n"],
        levels=v["scaling.levels"],
        eps=v["scaling.eps"],
        gamma_g=v["scaling.gamma_g"],
        nu=v["study.nu"],
        workers=cfg.workers,
    )
    write_csv(
        outdir / "condition_scaling.csv", ["h", "eps", "gamma_g", "kappa"], rows
    )


def _run_p1p0(cfg: RunConfig, outdir: Path) -> None:
    v = cfg.values
    results = experiments.run_p1p0_comparison(
        base_nx=v["study.base_nx"],
        nu=v["study.nu"],
        profile_iterations=v["profile.iterations"],
        params=cfg.latin_params(),
        workers=cfg.workers,
    )
    for scheme, res in results.items():
        sub = outdir / scheme
        sub.mkdir(parents=True, exist_ok=True)
        _write_profiles(sub, res.pdef, res)
        if cfg.export_fields:
            last = max(res.checkpoint_u)
            _write_fields(sub / "fields", res.pdef, {last: res.checkpoint_u[last]})


def run_experiment(cfg: RunConfig, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "resolved.cfg").write_text(render_flat(cfg.flat), encoding="ascii")
    name = cfg.experiment
    if name == "ellipse_convergence":
        _run_convergence(cfg, outdir, "ellipse")
    elif name == "two_inclusions_convergence":
        _run_convergence(cfg, outdir, "two_inclusions")
    elif name == "crack_condition_sweep":
        _run_condition_sweep(cfg, outdir)
    elif name == "crack_condition_scaling":
        _run_condition_scaling(cfg, outdir)
    elif name == "p1p0_comparison":
        _run_p1p0(cfg, outdir)
    else:  # unreachable: config validation restricts the choices
        raise ConfigError(f"unknown experiment {name!r}")


def _load(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    return parse_config(text, os.environ)


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    if not args:
        sys.stderr.write(USAGE)
        return 1
    command, rest = args[0], args[1:]
    if command == "list-experiments":
        for name in experiments.EXPERIMENTS:
            print(name)
        return 0
    if command not in ("run", "validate") or len(rest) != 1:
        sys.stderr.write(USAGE)
        return 1
    try:
        cfg = _load(rest[0])
    except ConfigError as err:
        sys.stderr.write(f"config error: {err}\n")
        return 1
    if command == "validate":
        print(f"ok: experiment {cfg.experiment}, output {cfg.output_dir}")
        return 0
    outdir = Path(cfg.output_dir)
    try:
        run_experiment(cfg, outdir)
    except ConfigError as err:
        sys.stderr.write(f"config error: {err}\n")
        return 1
    except (LatinCutError, np.linalg.LinAlgError, FloatingPointError) as err:
        outdir.mkdir(parents=True, exist_ok=True)
        record = {
            "error": type(err).__name__,
            "message": str(err),
            "experiment": cfg.experiment,
        }
        (outdir / "error.json").write_text(
            json.dumps(record, indent=2) + "\n", encoding="utf-8"
        )
        sys.stderr.write(f"numerical failure: {err}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
