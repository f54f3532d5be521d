import json
import math
import os

import numpy as np
import pytest

from ieqflow.harness import (PRESETS, CheckpointFormatError, ConfigError, checkpoint_read,
                             checkpoint_write, load_config, preset_config, run)
from ieqflow.harness.cli import main
from ieqflow.harness.config import parse_text
from ieqflow.harness.experiments import fit_slope, is_super_algebraic, local_orders
from ieqflow.harness.io import read_snapshot, read_timeseries

SMALL = dict(nx=33, ny=12, dt=0.05, t_max=0.25, epsilon=0.2)


def small(preset="relaxation", **kw):
    return preset_config(preset, **dict(SMALL, **kw))


def test_parse_and_presets(tmp_path):
    d = parse_text("# comment\nscheme = bdf2  # trailing\n\ndt=0.02\n")
    assert d == {"scheme": "bdf2", "dt": "0.02"}
    for bad in ("dt 0.1", "colour = red", "dt = 1\ndt = 2"):
        with pytest.raises(ConfigError):
            parse_text(bad)
    f = tmp_path / "c.txt"
    f.write_text("preset = case2\nnx = 65\ntheta_s_deg = 90\n")
    cfg = load_config(str(f), {"dt": 0.005, "ny": None})
    assert cfg.nx == 65 and cfg.ny == PRESETS["case2"]["ny"] and cfg.scheme.dt == 0.005
    assert cfg.params.theta_s == pytest.approx(math.pi / 2)
    c1 = preset_config("case1")
    assert c1.params.u_w_top == 0.7 and c1.params.u_w_bottom == -0.7
    assert c1.params.theta_s == pytest.approx(math.radians(64))
    for bad in (dict(scheme="foo"), dict(nx=64), dict(epsilon=-1.0), dict(dt="abc")):
        with pytest.raises(ConfigError):
            preset_config("case2", **bad)
    with pytest.raises(ConfigError):
        preset_config("nonexistent")
    # dump is parseable and reproduces the config
    again = load_config(None, {k: v for k, v in parse_text(c1.dump()).items()})
    assert again.dump() == c1.dump()


def test_cli_errors_and_success(tmp_path, capsys):
    assert main(["run", "--preset", "relaxation", "--scheme", "foo"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "error" and err["error"] == "ConfigError"
    assert main(["frobnicate"]) == 2
    capsys.readouterr()
    cfgf = tmp_path / "c.txt"
    cfgf.write_text("".join(f"{k} = {v}\n" for k, v in SMALL.items()) + "preset = relaxation\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfgf), "--out", str(out)]) == 0
    ok = json.loads(capsys.readouterr().out)
    assert ok["status"] == "ok" and ok["steps"] == 5
    assert main(["run", "--config", str(cfgf), "--out", str(out),
                 "--resume", str(tmp_path / "missing.npz")]) == 4
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip")
    assert main(["run", "--config", str(cfgf), "--out", str(out), "--resume", str(bad)]) == 4
    assert json.loads(capsys.readouterr().err.splitlines()[-1])["error"] == "CheckpointFormatError"


def test_artifacts_are_deterministic(tmp_path):
    cfg = small()
    a, b = run(cfg, str(tmp_path / "a")), run(cfg, str(tmp_path / "b"))
    for name in ("timeseries.csv", "wall_ux_bottom.csv", "grid_x.txt", "grid_y.txt",
                 "config.txt", "snapshot_000005.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ts = read_timeseries(tmp_path / "a" / "timeseries.csv")
    assert list(ts["step"]) == list(range(6))
    # relaxation: the discrete energy never increases
    assert np.all(np.diff(ts["E_ieq"]) <= 0)
    hdr, snap = read_snapshot(tmp_path / "a" / "snapshot_000005.txt")
    np.testing.assert_array_equal(snap["phi"], a.state.phi)
    np.testing.assert_array_equal(snap["u_x"], a.state.u[0])
    assert float(hdr["t"]) == a.state.t
    np.testing.assert_allclose(np.loadtxt(tmp_path / "a" / "grid_y.txt"), a.grid.y)
    wall = np.loadtxt(tmp_path / "a" / "wall_ux_bottom.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(wall[:, 1], a.state.u[0][:, 0])
    assert run(cfg, write=False).outdir is None and b.records[-1].t == pytest.approx(0.25)


def test_checkpoint_round_trip_and_errors(tmp_path):
    res = run(small(), write=False)
    path = tmp_path / "c.npz"
    checkpoint_write(str(path), res.state, res.grid)
    st, header = checkpoint_read(str(path))
    assert header["step"] == res.state.step and st.t == res.state.t
    for name in ("phi", "u", "p", "U", "W", "phi_prev", "u_prev", "U_prev", "W_prev", "mu"):
        np.testing.assert_array_equal(getattr(st, name), getattr(res.state, name))
    # wrong format tag, wrong version, truncated archive, not an archive
    z = dict(np.load(path))
    for change in ({"format": "something-else"}, {"version": 99}):
        hdr = dict(header, **change)
        bad = tmp_path / "bad.npz"
        np.savez(bad, **dict(z, header=np.array(json.dumps(hdr))))
        with pytest.raises(CheckpointFormatError):
            checkpoint_read(str(bad))
    raw = path.read_bytes()
    for name, data in (("trunc.npz", raw[: len(raw) // 2]), ("junk.npz", b"junk")):
        (tmp_path / name).write_bytes(data)
        with pytest.raises(CheckpointFormatError):
            checkpoint_read(str(tmp_path / name))


@pytest.mark.parametrize("scheme", ["cn", "bdf2"])
def test_resume_replays_uninterrupted_run(tmp_path, scheme):
    cfg = small(scheme=scheme, t_max=0.4, checkpoint_every=3)
    full = run(cfg, str(tmp_path / "full"))
    part = run(cfg.with_updates(t_max=0.4), str(tmp_path / "part"),
               resume=str(tmp_path / "full" / "checkpoint_000003.npz"))
    np.testing.assert_array_equal(part.state.phi, full.state.phi)
    np.testing.assert_array_equal(part.state.u, full.state.u)
    a = read_timeseries(tmp_path / "full" / "timeseries.csv")
    b = read_timeseries(tmp_path / "part" / "timeseries.csv")
    for k in ("E_ieq", "volume", "iterations"):
        np.testing.assert_array_equal(b[k], a[k][4:])


def test_analysis_helpers():
    h = np.array([0.1, 0.05, 0.025])
    assert fit_slope(h, 3 * h**2) == pytest.approx(2.0)
    ns = [8, 12, 16, 20]
    assert is_super_algebraic(ns, [math.exp(-n) for n in ns])
    assert not is_super_algebraic(ns, [n**-2.0 for n in ns])
    assert local_orders([10, 20], [1e-2, 1e-4]) == [pytest.approx(6.64385619, rel=1e-6)]
