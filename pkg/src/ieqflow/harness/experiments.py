"""Single runs and the parameter sweeps of the numerical study."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import diagnostics as diag
from ..model import initial_phi_drop, initial_phi_stripe, initial_velocity_couette
from ..solver import ConvergenceError
from ..spectral import BoundaryField, Grid, grid_from_counts, interpolate
from ..stepper import State, initial_record, initial_state, march
from . import io
from .config import RunConfig

log = logging.getLogger(__name__)


class RunError(RuntimeError):
    """A run failed; ``record`` is a JSON-serialisable description."""

    def __init__(self, msg, record=None):
        super().__init__(msg)
        self.record = record or {"error": type(self).__name__, "message": msg}


@dataclass
class RunResult:
    grid: Grid
    state: State
    records: list = field(default_factory=list)
    outdir: str | None = None


def build_grid(cfg: RunConfig) -> Grid:
    return grid_from_counts(cfg.nx, cfg.ny, cfg.params.L_x)


def build_initial_state(cfg: RunConfig, grid: Grid) -> State:
    if cfg.init == "drop":
        phi0 = initial_phi_drop(grid, cfg.params, radius=cfg.drop_radius)
    else:
        phi0 = initial_phi_stripe(grid, cfg.params)
    return initial_state(grid, cfg.params, phi0, initial_velocity_couette(grid, cfg.params))


def run(cfg: RunConfig, outdir: str | None = None, resume: str | None = None,
        write: bool = True, callback=None) -> RunResult:
    """Initialise (or resume), march to t_max and write artifacts.

    With write=False nothing touches the disk.  Solver failures dump the
    offending state next to an ``error.json`` record and raise RunError.
    """
    outdir = outdir or cfg.out
    grid = build_grid(cfg)
    if write:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "config.txt"), "w") as fh:
            fh.write(cfg.dump())
        io.write_grid_sidecar(outdir, grid)

    if resume is not None:
        state, header = io.checkpoint_read(resume)
        g = header.get("grid")
        if g and (g["nx"], g["ny"]) != (grid.nx, grid.ny):
            raise RunError(f"checkpoint grid {g['nx']}x{g['ny']} does not match config")
        records = []
    else:
        state = build_initial_state(cfg, grid)
        records = [initial_record(grid, cfg.params, state, cfg.scheme.scheme, cfg.scheme.dt)]
        if write:
            _snapshot(outdir, grid, state)

    def on_step(st, rec):
        if write:
            if cfg.snapshot_every and st.step % cfg.snapshot_every == 0:
                _snapshot(outdir, grid, st)
            if cfg.checkpoint_every and st.step % cfg.checkpoint_every == 0:
                io.checkpoint_write(os.path.join(outdir, f"checkpoint_{st.step:06d}.npz"),
                                    st, grid)
        if callback is not None:
            callback(st, rec)

    try:
        state, recs = march(grid, cfg.params, state, cfg.scheme, callback=on_step)
    except ConvergenceError as e:
        rec = {"error": "ConvergenceError", "message": str(e), "residual": e.residual,
               "iterations": e.iterations}
        if write:
            with open(os.path.join(outdir, "error.json"), "w") as fh:
                json.dump(rec, fh, indent=1)
        raise RunError(str(e), rec) from e
    records.extend(recs)

    if write:
        _write_series(outdir, records, None if resume is None else state.step - len(recs))
        if not (cfg.snapshot_every and state.step % cfg.snapshot_every == 0):
            _snapshot(outdir, grid, state)
        io.checkpoint_write(os.path.join(outdir, "checkpoint.npz"), state, grid)
        bf = BoundaryField(grid, grid.wall_trace(state.u[0], "bottom"), "bottom")
        io.write_boundary_field(os.path.join(outdir, "wall_ux_bottom.csv"), grid, bf)
    return RunResult(grid, state, records, outdir if write else None)


def _snapshot(outdir, grid, state):
    io.write_snapshot(os.path.join(outdir, f"snapshot_{state.step:06d}.txt"), grid, state.t,
                      io.snapshot_fields(state))


def _write_series(outdir, records, resumed_from):
    """Write timeseries.csv; a resumed run keeps earlier rows up to its start step."""
    path = os.path.join(outdir, "timeseries.csv")
    if resumed_from is None or not os.path.exists(path):
        io.write_timeseries(path, records)
        return
    with open(path) as fh:
        lines = fh.readlines()
    col = io.DiagnosticsRecord.columns().index("step")
    keep = [ln for ln in lines[1:] if int(ln.split(",")[col]) <= resumed_from]
    tmp = path + ".new"
    io.write_timeseries(tmp, records)
    with open(tmp) as fh:
        new = fh.readlines()
    with open(path, "w") as fh:
        fh.writelines(lines[:1] + keep + new[1:])
    os.remove(tmp)


# -- sweeps -------------------------------------------------------------------

def fit_slope(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(err, float)), 1)[0])


def _final(cfg: RunConfig) -> RunResult:
    return run(cfg, write=False)


def experiment_temporal_convergence(base: RunConfig, dts=None, t_end=0.4, dt_ref=2.5e-4,
                                    schemes=("cn", "bdf2")) -> dict:
    """dt ladder for each scheme against a fine BDF2 reference.

    Returns {"rows": [...], "slopes": {scheme: {"phi": s, "u": s}}}.
    """
    dts = [0.016 / 2**k for k in range(5)] if dts is None else list(dts)
    ref = _final(base.with_updates(scheme="bdf2", dt=dt_ref, t_max=t_end))
    g = ref.grid
    rows = []
    for scheme in schemes:
        for dt in dts:
            res = _final(base.with_updates(scheme=scheme, dt=dt, t_max=t_end))
            rows.append(dict(scheme=scheme, dt=dt,
                             err_phi=diag.l2_error(g, res.state.phi, ref.state.phi),
                             err_u=diag.l2_error(g, res.state.u, ref.state.u),
                             iterations=float(np.mean([r.iterations for r in res.records[1:]]))))
            log.info("temporal %s dt=%g: %s", scheme, dt, rows[-1])
    slopes = {}
    for scheme in schemes:
        sub = [r for r in rows if r["scheme"] == scheme]
        slopes[scheme] = {v: fit_slope([r["dt"] for r in sub], [r[f"err_{v}"] for r in sub])
                          for v in ("phi", "u")}
    return {"rows": rows, "slopes": slopes, "t_end": t_end, "dt_ref": dt_ref}


def experiment_spatial_convergence(base: RunConfig, nx_list=(129, 161, 193, 225),
                                   ny_list=(12, 16, 20, 24), ref=(257, 32), dt=5e-4,
                                   t_end=0.2, scheme="bdf2") -> dict:
    """x-sweep at the reference n_y and y-sweep at the reference n_x.

    Errors are measured on the reference grid after spectral interpolation.
    The temporal floor is the change of the reference solution when dt is
    halved; spatial errors below it are not meaningful.
    """
    mk = lambda nx, ny, step=dt: base.with_updates(nx=nx, ny=ny, dt=step,  # noqa: E731
                                                   t_max=t_end, scheme=scheme)
    r = _final(mk(*ref))
    G = r.grid
    half = _final(mk(*ref, step=dt / 2))
    floor = {"phi": diag.l2_error(G, half.state.phi, r.state.phi),
             "u": diag.l2_error(G, half.state.u, r.state.u)}

    def err(nx, ny):
        if (nx, ny) == tuple(ref):
            res = r
        else:
            res = _final(mk(nx, ny))
        phi = interpolate(res.grid, res.state.phi, G)
        u = np.stack([interpolate(res.grid, c, G) for c in res.state.u])
        return dict(nx=nx, ny=ny, err_phi=diag.l2_error(G, phi, r.state.phi),
                    err_u=diag.l2_error(G, u, r.state.u))

    x_rows = [err(nx, ref[1]) for nx in nx_list]
    y_rows = [err(ref[0], ny) for ny in ny_list]
    return {"x": x_rows, "y": y_rows, "ref": tuple(ref), "floor": floor,
            "dt": dt, "t_end": t_end}


def local_orders(ns, errs) -> list[float]:
    """Algebraic orders between successive resolutions, -dlog(err)/dlog(n)."""
    ns, errs = np.asarray(ns, float), np.asarray(errs, float)
    return list(-np.diff(np.log(errs)) / np.diff(np.log(ns)))


def is_super_algebraic(ns, errs, floor=0.0) -> bool:
    """Errors decrease and the local algebraic order strictly grows until the floor.

    Points at or below ``floor`` count as saturated and end the check.
    """
    errs = list(errs)
    cut = next((i for i, e in enumerate(errs) if e <= floor), len(errs))
    ns, errs = list(ns)[:cut], errs[:cut]
    if len(errs) < 3:
        return False
    p = local_orders(ns, errs)
    return all(q > 0 for q in p) and all(b > a for a, b in zip(p, p[1:]))


def mean_iterations(cfg: RunConfig, nsteps: int) -> float:
    """Mean BiCGSTAB iterations over nsteps steps after the startup step."""
    cfg = cfg.with_updates(t_max=(nsteps + 1) * cfg.scheme.dt)
    res = _final(cfg)
    its = [r.iterations for r in res.records[2:]]
    return float(np.mean(its))


def experiment_iterations(base: RunConfig, nsteps=10, schemes=("cn", "bdf2"),
                          grids=((129, 16), (257, 32)), gammas=(100.0, 10.0, 1.0),
                          dts=(0.001, 0.1, 1.0), lams=(1.0, 60.0, 144.0)) -> list[dict]:
    """One-at-a-time sweeps around the base (efficiency-table) configuration."""
    rows = []
    for scheme in schemes:
        b = base.with_updates(scheme=scheme)
        sweeps = ([("grid", f"{nx}x{ny}", dict(nx=nx, ny=ny)) for nx, ny in grids]
                  + [("gamma", g, dict(gamma=g)) for g in gammas]
                  + [("dt", d, dict(dt=d)) for d in dts]
                  + [("lam", v, dict(lam=v)) for v in lams])
        for name, value, kw in sweeps:
            its = mean_iterations(b.with_updates(**kw), nsteps)
            rows.append(dict(scheme=scheme, sweep=name, value=value, mean_iterations=its))
            log.info("iterations %s %s=%s: %.2f", scheme, name, value, its)
    return rows


def experiment_drop_shear(cfg: RunConfig, outdir=None, write=True) -> dict:
    """March the drop preset; detachment is the first time the bottom trace of
    phi is negative everywhere."""
    hit = {}

    def cb(st, rec):
        if "t" not in hit and np.all(st.phi[:, 0] < 0.0):
            hit["t"] = st.t

    res = run(cfg, outdir=outdir, write=write, callback=cb)
    v = np.array([r.volume for r in res.records])
    return {"theta_s": cfg.params.theta_s, "detach_time": hit.get("t", math.inf),
            "volume_drift": float(np.max(np.abs(v - v[0])) / res.grid.area),
            "t_end": res.state.t, "result": res}
