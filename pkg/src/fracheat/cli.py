"""Batch front door: config parsing, run orchestration, artifact emission.

Commands: validate, simulate, extend, sweep, rate, report-data.  Exit 0 on
success, 1 on solver failure, 2 on validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import __version__, artifacts, lab
from .errors import InsufficientDataError
from .extension_solver import ExtGrid, extension_march, levine_check
from .grids import BoxGrid
from .kernels import KernelParams
from .memory import memory_from_dict
from .mild_solver import STEP_FAILURE, ProblemSpec, mild_march

COMMANDS = ("validate", "simulate", "extend", "sweep", "rate", "report-data")

_PROBLEM_KEYS = {
    "sigma": float, "dim": int, "p": float, "length": float, "n_x": int,
    "t_max": float, "dt_init": float, "dt_floor": float, "dt_max": float,
    "dt_growth": float, "rate_safety": float, "blowup_threshold": float,
    "picard_max_iter": int, "picard_tol": float, "containment_frac": float,
    "coarsen_age": float, "reaction": str, "store_slices": bool,
}
_EXT_KEYS = {
    "n_y": int, "height": float, "grading": float, "dt_init": float,
    "store_every": int, "kaplan_k": list, "jump_max": float,
    "bnd_safety": float,
}
_SWEEP_KEYS = {
    "sigma": list, "p": list, "data_scales": list, "near_crit_frac": float,
}
_RATE_KEYS = {"input": str, "min_points": int, "window_decades": float}
_REPORT_KEYS = {"input": str}
_VALIDATE_KEYS = {"resolution": str}
_TOP_KEYS = {"command": str, "output_dir": str, "seed": int, "threads": int}


@dataclass
class RunConfig:
    command: str | None
    output_dir: str | None
    seed: int
    threads: int
    problem: dict = dc_field(default_factory=dict)
    memory: dict = dc_field(default_factory=dict)
    ext: dict = dc_field(default_factory=dict)
    sweep: dict = dc_field(default_factory=dict)
    rate: dict = dc_field(default_factory=dict)
    report: dict = dc_field(default_factory=dict)
    validate: dict = dc_field(default_factory=dict)


def _check_section(name: str, section: dict, allowed: dict) -> dict:
    out = {}
    for key, val in section.items():
        if key not in allowed:
            raise ValueError(f"unknown key [{name}] {key}")
        want = allowed[key]
        if want is float and isinstance(val, int):
            val = float(val)
        if want is not list and not isinstance(val, want):
            raise ValueError(
                f"[{name}] {key} must be {want.__name__}, got {type(val).__name__}")
        out[key] = val
    return out


def _check_ranges(cfg: RunConfig) -> None:
    pr = cfg.problem
    if "sigma" in pr and not 0.0 < pr["sigma"] < 1.0:
        raise ValueError(f"[problem] sigma must lie in (0, 1), got {pr['sigma']}")
    if "dim" in pr and pr["dim"] < 1:
        raise ValueError("[problem] dim must be >= 1")
    if "p" in pr and pr["p"] <= 0.0:
        raise ValueError("[problem] p must be positive")
    for key in ("length", "t_max", "dt_init", "dt_floor", "dt_max",
                "blowup_threshold", "picard_tol"):
        if key in pr and pr[key] <= 0.0:
            raise ValueError(f"[problem] {key} must be positive")
    if "n_x" in pr and pr["n_x"] < 1:
        raise ValueError("[problem] n_x must be >= 1")
    if "reaction" in pr and pr["reaction"] not in ("power", "none"):
        raise ValueError("[problem] reaction must be 'power' or 'none'")
    ex = cfg.ext
    if "n_y" in ex and ex["n_y"] < 3:
        raise ValueError("[ext] n_y must be >= 3")
    if "height" in ex and ex["height"] <= 0.0:
        raise ValueError("[ext] height must be positive")
    sw = cfg.sweep
    for s in sw.get("sigma", []):
        if not 0.0 < s < 1.0:
            raise ValueError(f"[sweep] sigma entries must lie in (0, 1), got {s}")
    for p in sw.get("p", []):
        if p <= 0.0:
            raise ValueError("[sweep] p entries must be positive")
    if "data_scales" in sw:
        ds = sw["data_scales"]
        if len(ds) != 2 or min(ds) <= 0.0:
            raise ValueError("[sweep] data_scales must be two positive amplitudes")
    if cfg.seed < 0:
        raise ValueError("seed must be nonnegative")
    if cfg.threads < 1:
        raise ValueError("threads must be >= 1")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML config; unknown keys are hard errors."""
    doc = tomllib.loads(text)
    sections = {"problem", "memory", "ext", "sweep", "rate", "report-data",
                "validate"}
    top = {k: v for k, v in doc.items() if k not in sections}
    top = _check_section("top-level", top, _TOP_KEYS)
    command = top.get("command")
    if command is not None and command not in COMMANDS:
        raise ValueError(f"unknown command '{command}'")
    cfg = RunConfig(
        command=command,
        output_dir=top.get("output_dir"),
        seed=top.get("seed", 0),
        threads=top.get("threads", 1),
        problem=_check_section("problem", doc.get("problem", {}), _PROBLEM_KEYS),
        memory=dict(doc.get("memory", {})),
        ext=_check_section("ext", doc.get("ext", {}), _EXT_KEYS),
        sweep=_check_section("sweep", doc.get("sweep", {}), _SWEEP_KEYS),
        rate=_check_section("rate", doc.get("rate", {}), _RATE_KEYS),
        report=_check_section("report-data", doc.get("report-data", {}), _REPORT_KEYS),
        validate=_check_section("validate", doc.get("validate", {}), _VALIDATE_KEYS),
    )
    if cfg.memory:
        if "family" not in cfg.memory:
            raise ValueError("[memory] needs a 'family' key")
        memory_from_dict(cfg.memory)  # validates family name and fields
    _check_ranges(cfg)
    return cfg


def build_problem_spec(cfg: RunConfig, sigma=None, p=None, amp=None) -> ProblemSpec:
    pr = dict(cfg.problem)
    sigma = sigma if sigma is not None else pr.pop("sigma")
    p = p if p is not None else pr.pop("p")
    pr.pop("sigma", None)
    pr.pop("p", None)
    dim = pr.pop("dim", 1)
    params = KernelParams.create(sigma, dim)
    grid = BoxGrid(length=pr.pop("length"), n=pr.pop("n_x"), dim=dim)
    mem_dict = dict(cfg.memory)
    if amp is not None:
        mem_dict["amp"] = amp
    memory = memory_from_dict(mem_dict)
    kwargs = {k.replace("n_x", "n"): v for k, v in pr.items()}
    return ProblemSpec(params=params, p=p, memory=memory, grid=grid, **kwargs)


def _resolved_metadata(cfg: RunConfig) -> dict:
    return {
        "version": __version__,
        "seed": cfg.seed,
        "config": {
            "problem": cfg.problem, "memory": cfg.memory, "ext": cfg.ext,
            "sweep": cfg.sweep, "rate": cfg.rate,
        },
    }


def _run_validate(cfg: RunConfig, out_dir: str) -> int:
    report = lab.validation_battery(resolution=cfg.validate.get("resolution", "default"))
    artifacts.write_json(os.path.join(out_dir, "validation.json"), report.as_dict())
    return 0 if report.all_passed else 2


def _run_simulate(cfg: RunConfig, out_dir: str) -> int:
    spec = build_problem_spec(cfg)
    traj = mild_march(spec)
    artifacts.write_run_dir(out_dir, _resolved_metadata(cfg), traj, ext=False)
    return 1 if traj.status == STEP_FAILURE else 0


def _run_extend(cfg: RunConfig, out_dir: str) -> int:
    spec = build_problem_spec(cfg)
    ex = dict(cfg.ext)
    grid = ExtGrid.create(spec.grid, n_y=ex.pop("n_y"), height=ex.pop("height"),
                          params=spec.params, grading=ex.pop("grading", None))
    ks = tuple(float(k) for k in ex.pop("kaplan_k", [1.0]))
    traj = extension_march(spec, grid, kaplan_ks=ks, **ex)
    meta = _resolved_metadata(cfg)
    lev = levine_check(traj)
    meta["levine_first_negative"] = None if lev is None else lev[1]
    artifacts.write_run_dir(out_dir, meta, traj, ext=True)
    return 1 if traj.status == STEP_FAILURE else 0


def _sweep_jobs(cfg: RunConfig):
    sw = cfg.sweep
    scales = sorted(sw["data_scales"])
    jobs = []
    for sg in sw["sigma"]:
        for p in sw["p"]:
            for amp in scales:
                jobs.append((sg, p, amp))
    return jobs, scales


def _run_one_cell(args):
    cfg_dict, sg, p, amp = args
    cfg = RunConfig(**cfg_dict)
    spec = build_problem_spec(cfg, sigma=sg, p=p, amp=amp)
    traj = mild_march(spec)
    from .mild_solver import BLOWUP
    esc = traj.status == BLOWUP
    t_est = rate_exp = rate_ci = None
    if esc:
        try:
            rep = lab.fit_rate(traj)
            t_est, rate_exp, rate_ci = rep.t_est, rep.rate_exp, rep.rate_ci
        except InsufficientDataError:
            t_est = float(traj.times[-1])
    return lab.PhaseRow(sigma=sg, dim=spec.grid.dim, p=p, data_scale=amp,
                        status="blowup" if esc else traj.status,
                        t_est=t_est, rate_exp=rate_exp, rate_ci=rate_ci)


def _run_sweep(cfg: RunConfig, out_dir: str) -> int:
    jobs, scales = _sweep_jobs(cfg)
    cfg_dict = {k: getattr(cfg, k) for k in
                ("command", "output_dir", "seed", "threads", "problem",
                 "memory", "ext", "sweep", "rate", "report", "validate")}
    args = [(cfg_dict, sg, p, amp) for sg, p, amp in jobs]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(_run_one_cell, args))
    else:
        rows = [_run_one_cell(a) for a in args]

    cells = {}
    by_cell = {}
    for row in rows:
        by_cell.setdefault((row.sigma, row.p), {})[row.data_scale] = row
    near = cfg.sweep.get("near_crit_frac", 0.05)
    for (sg, p), runs in by_cell.items():
        small, large = runs[scales[0]], runs[scales[1]]
        if p <= 1.0 and (small.status == "blowup" or large.status == "blowup"):
            raise AssertionError(f"regime contradiction: escape at p={p} <= 1")
        cells[f"{sg:g},{p:g}"] = lab.classify_cell(
            small.status == "blowup", large.status == "blowup", p, sg,
            small.dim, near)

    artifacts.write_phase_csv(os.path.join(out_dir, "phase.csv"), rows)
    artifacts.write_json(os.path.join(out_dir, "cells.json"), cells)
    artifacts.write_json(os.path.join(out_dir, "metadata.json"),
                         _resolved_metadata(cfg))
    return 0


def _run_rate(cfg: RunConfig, out_dir: str) -> int:
    src = cfg.rate["input"]
    csv_path = src if src.endswith(".csv") else os.path.join(src, "supnorm.csv")
    cols = artifacts.read_csv(csv_path)
    kwargs = {}
    if "min_points" in cfg.rate:
        kwargs["min_points"] = cfg.rate["min_points"]
    if "window_decades" in cfg.rate:
        kwargs["window_decades"] = cfg.rate["window_decades"]
    try:
        rep = lab.fit_rate((cols["t"], cols["sup_norm"]), **kwargs)
    except InsufficientDataError as err:
        artifacts.write_json(os.path.join(out_dir, "rate.json"),
                             {"error": str(err)})
        return 1
    payload = {"T_est": rep.t_est, "rate_exp": rep.rate_exp,
               "rate_ci": rep.rate_ci, "window": list(rep.window),
               "residual": rep.residual, "n_points": rep.n_points}
    meta_path = os.path.join(os.path.dirname(csv_path), "metadata.json")
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        pr = meta.get("config", {}).get("problem", {})
        if "sigma" in pr and "p" in pr and pr["p"] > 1.0:
            payload["theory_exponent"] = pr["sigma"] / (pr["p"] - 1.0)
    artifacts.write_json(os.path.join(out_dir, "rate.json"), payload)
    return 0


def _run_report(cfg: RunConfig, out_dir: str) -> int:
    src = cfg.report["input"]
    cols = artifacts.read_csv(os.path.join(src, "supnorm.csv"))
    with open(os.path.join(src, "metadata.json")) as fh:
        meta = json.load(fh)
    sup = cols["sup_norm"]
    payload = {
        "status": meta.get("status"),
        "final_t": float(cols["t"][-1]),
        "final_sup": float(sup[-1]),
        "peak_sup": float(np.max(sup)),
        "decayed": bool(sup[-1] < 0.5 * np.max(sup)),
        "n_steps": int(len(sup) - 1),
    }
    energy_path = os.path.join(src, "energy.csv")
    if os.path.exists(energy_path):
        ecols = artifacts.read_csv(energy_path)
        payload["energy_min"] = float(np.min(ecols["I_U"]))
        payload["energy_final"] = float(ecols["I_U"][-1])
    artifacts.write_json(os.path.join(out_dir, "report.json"), payload)
    return 0


_RUNNERS = {
    "validate": _run_validate,
    "simulate": _run_simulate,
    "extend": _run_extend,
    "sweep": _run_sweep,
    "rate": _run_rate,
    "report-data": _run_report,
}


def run(cfg: RunConfig, command: str | None = None,
        out_dir: str | None = None) -> int:
    command = command or cfg.command
    if command is None:
        raise ValueError("no command given (set it in the config or on the CLI)")
    if cfg.command is not None and command != cfg.command:
        raise ValueError(
            f"config names command '{cfg.command}' but '{command}' was requested")
    out_dir = out_dir or cfg.output_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    try:
        return _RUNNERS[command](cfg, out_dir)
    except OSError as err:
        print(f"fracheat: I/O failure: {err}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracheat",
        description="fully fractional heat equation laboratory")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    if args.threads is not None:
        cfg.threads = args.threads
    return run(cfg, command=args.command, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
