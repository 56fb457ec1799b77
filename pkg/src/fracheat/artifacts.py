"""Flat-file run artifacts: metadata, CSV tables, per-slice binary arrays.

Float cells are written with shortest round-trip repr so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, cell in zip(header, ln.split(",")):
            cols[h].append(float(cell) if cell else np.nan)
    return {h: np.asarray(v) for h, v in cols.items()}


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_dir(out_dir: str, metadata: dict, traj, ext: bool = False) -> None:
    """Run directory: metadata.json, times.csv, supnorm.csv, slices.npz,
    and for extension runs energy.csv with the monitor columns."""
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "metadata.json"),
               {**metadata, "status": traj.status})
    write_csv(os.path.join(out_dir, "times.csv"), ["index", "t"],
              [(i, t) for i, t in enumerate(traj.times)])
    if ext:
        iters = np.zeros(len(traj.times), dtype=int)
    else:
        iters = traj.picard_iters
    write_csv(os.path.join(out_dir, "supnorm.csv"),
              ["t", "sup_norm", "dt", "picard_iters"],
              [(t, s, d, int(i)) for t, s, d, i in
               zip(traj.times, traj.sup_norms, traj.dts, iters)])
    if ext:
        ks = sorted(traj.kaplan)
        header = ["t", "I_U"] + [f"J_{k:g}" for k in ks]
        rows = []
        for i, t in enumerate(traj.times):
            rows.append((t, traj.energies[i], *[traj.kaplan[k][i] for k in ks]))
        write_csv(os.path.join(out_dir, "energy.csv"), header, rows)
        arrays = {f"slice_{i:06d}": arr for i, arr in sorted(traj.stored_slices.items())}
        arrays["traces"] = traj.traces
    else:
        arrays = {}
        if traj.slices is not None:
            arrays = {f"slice_{i:06d}": traj.slices[i]
                      for i in range(len(traj.times))}
    np.savez(os.path.join(out_dir, "slices.npz"), **arrays)


def write_phase_csv(path: str, rows) -> None:
    write_csv(path,
              ["sigma", "N", "p", "data_scale", "status", "T_est", "rate_exp",
               "rate_ci"],
              [(r.sigma, r.dim, r.p, r.data_scale, r.status, r.t_est,
                r.rate_exp, r.rate_ci) for r in rows])


def read_phase_csv(path: str) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        row = {}
        for h, c in zip(header, cells):
            if h == "status":
                row[h] = c
            elif c == "":
                row[h] = None
            else:
                row[h] = float(c)
        out.append(row)
    return out
