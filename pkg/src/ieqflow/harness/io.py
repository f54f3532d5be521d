"""Time-series CSV, snapshots, wall profiles and checkpoints."""
from __future__ import annotations

import json
import os
import zipfile

import numpy as np

from ..diagnostics import DiagnosticsRecord
from ..spectral import BoundaryField, Grid
from ..stepper import State

CHECKPOINT_FORMAT = "ieqflow-checkpoint"
CHECKPOINT_VERSION = 1
SNAPSHOT_FORMAT = "ieqflow-snapshot 1"

_STATE_ARRAYS = ("phi", "u", "p", "U", "W", "phi_prev", "u_prev", "p_prev", "U_prev",
                 "W_prev", "mu")


class CheckpointFormatError(ValueError):
    """The checkpoint header is missing, unreadable or of the wrong version."""


def _num(v) -> str:
    # repr round-trips float64 and is stable across runs
    return repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))


def write_timeseries(path, records) -> None:
    cols = DiagnosticsRecord.columns()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in records:
            fh.write(",".join(_num(getattr(r, c)) for c in cols) + "\n")


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        cols = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {c: data[:, i] for i, c in enumerate(cols)}


def write_grid_sidecar(outdir, grid: Grid) -> None:
    np.savetxt(os.path.join(outdir, "grid_x.txt"), grid.x, fmt="%.17g")
    np.savetxt(os.path.join(outdir, "grid_y.txt"), grid.y, fmt="%.17g")


def write_snapshot(path, grid: Grid, t: float, fields: dict[str, np.ndarray]) -> None:
    """Text snapshot: header lines, then one row per node with x varying fastest."""
    names = list(fields)
    cols = np.stack([np.asarray(fields[k]).T.ravel() for k in names], axis=1)
    header = (f"{SNAPSHOT_FORMAT}\nnx = {grid.nx}\nny = {grid.ny}\nL_x = {grid.L_x!r}\n"
              f"t = {float(t)!r}\nfields = {','.join(names)}")
    np.savetxt(path, cols, fmt="%.17g", header=header)


def read_snapshot(path):
    """Returns (header dict, {name: (nx, ny) array})."""
    hdr = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                k, v = (s.strip() for s in body.split("=", 1))
                hdr[k] = v
    nx, ny = int(hdr["nx"]), int(hdr["ny"])
    names = hdr["fields"].split(",")
    data = np.loadtxt(path, ndmin=2)
    return hdr, {k: data[:, i].reshape(ny, nx).T for i, k in enumerate(names)}


def snapshot_fields(state: State) -> dict[str, np.ndarray]:
    return {"phi": state.phi, "u_x": state.u[0], "u_y": state.u[1], "p": state.p}


def write_boundary_field(path, grid: Grid, bf: BoundaryField, name="u_x") -> None:
    """Two-column CSV (x, value) of a wall quantity."""
    with open(path, "w") as fh:
        fh.write(f"x,{name}\n")
        for x, v in zip(grid.x, np.asarray(bf.values)):
            fh.write(f"{float(x)!r},{float(v)!r}\n")


def checkpoint_write(path, state: State, grid: Grid | None = None, extra: dict | None = None) -> None:
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
              "t": float(state.t).hex(), "step": int(state.step),
              "present": [k for k in _STATE_ARRAYS if getattr(state, k) is not None]}
    if grid is not None:
        header["grid"] = {"nx": grid.nx, "ny": grid.ny, "L_x": float(grid.L_x).hex()}
    if extra:
        header["extra"] = extra
    arrays = {k: getattr(state, k) for k in header["present"]}
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    os.replace(tmp, path)


def checkpoint_read(path):
    """Returns (state, header).  Raises CheckpointFormatError on a bad header."""
    try:
        with np.load(path, allow_pickle=False) as z:
            if "header" not in z.files:
                raise CheckpointFormatError(f"{path}: no header record")
            try:
                header = json.loads(str(z["header"]))
            except (json.JSONDecodeError, ValueError) as e:
                raise CheckpointFormatError(f"{path}: unreadable header ({e})") from e
            if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointFormatError(f"{path}: not an {CHECKPOINT_FORMAT} file")
            if header.get("version") != CHECKPOINT_VERSION:
                raise CheckpointFormatError(
                    f"{path}: format version {header.get('version')!r}, "
                    f"expected {CHECKPOINT_VERSION}")
            arrays = {k: z[k] for k in header["present"]}
    except CheckpointFormatError:
        raise
    except (zipfile.BadZipFile, EOFError, ValueError) as e:
        # np.load reports a file that is not an archive at all as ValueError
        raise CheckpointFormatError(f"{path}: corrupt archive ({e})") from e
    except KeyError as e:
        raise CheckpointFormatError(f"{path}: missing entry {e}") from e
    state = State(float.fromhex(header["t"]), *(arrays.get(k) for k in _STATE_ARRAYS),
                  step=header["step"])
    return state, header
