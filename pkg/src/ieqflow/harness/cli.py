"""Command-line entry point.

    ieqflow run --preset case2 --out out/case2
    ieqflow convergence-time --nx 129 --ny 32
    ieqflow iterations --preset iterations
    ieqflow drop --preset drop-obtuse

Exit status 0 on success.  Failures print one JSON object on stderr and exit
2 (configuration), 3 (solver) or 4 (I/O).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from .config import ConfigError, load_config
from .experiments import (RunError, experiment_drop_shear, experiment_iterations,
                          experiment_spatial_convergence, experiment_temporal_convergence,
                          run)
from .io import CheckpointFormatError

DEFAULT_PRESET = {"run": "case2", "convergence-time": "case2", "convergence-space": "case2",
                  "iterations": "iterations", "drop": "drop"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ieqflow", description="Phase-field moving contact line solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in DEFAULT_PRESET:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key = value config file")
        s.add_argument("--preset")
        s.add_argument("--scheme")
        s.add_argument("--dt", type=float)
        s.add_argument("--nx", type=int)
        s.add_argument("--ny", type=int)
        s.add_argument("--tmax", type=float)
        s.add_argument("--out")
        s.add_argument("--rotational-pressure", action="store_const", const=True)
        s.add_argument("--dealias", action="store_const", const=True)
        if name == "run":
            s.add_argument("--resume", help="checkpoint to continue from")
    return p


def _config(args):
    over = {"scheme": args.scheme, "dt": args.dt, "nx": args.nx, "ny": args.ny,
            "t_max": args.tmax, "out": args.out, "rotational_pressure": args.rotational_pressure,
            "dealias": args.dealias, "preset": args.preset}
    if args.config is None and args.preset is None:
        over["preset"] = DEFAULT_PRESET[args.command]
    return load_config(args.config, over)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _emit(outdir, name, payload):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, default=_jsonable)
    print(json.dumps(payload, default=_jsonable))


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        if args.command == "run":
            res = run(cfg, resume=args.resume)
            last = res.records[-1]
            print(json.dumps({"status": "ok", "out": res.outdir, "t": res.state.t,
                              "steps": res.state.step, "E_ieq": last.E_ieq}))
        elif args.command == "convergence-time":
            tab = experiment_temporal_convergence(cfg, t_end=cfg.scheme.t_max
                                                  if args.tmax is not None else 0.4)
            _emit(cfg.out, "convergence_time.json", tab)
        elif args.command == "convergence-space":
            _emit(cfg.out, "convergence_space.json", experiment_spatial_convergence(cfg))
        elif args.command == "iterations":
            _emit(cfg.out, "iterations.json", {"rows": experiment_iterations(cfg)})
        elif args.command == "drop":
            rep = experiment_drop_shear(cfg)
            rep.pop("result")
            _emit(cfg.out, "drop.json", rep)
        return 0
    except ConfigError as e:
        return _fail(2, "ConfigError", str(e))
    except RunError as e:
        return _fail(3, "RunError", str(e), e.record)
    except CheckpointFormatError as e:
        return _fail(4, "CheckpointFormatError", str(e))
    except OSError as e:
        return _fail(4, type(e).__name__, str(e))


def _fail(code, kind, msg, detail=None) -> int:
    rec = {"status": "error", "error": kind, "message": msg}
    if detail:
        rec["detail"] = detail
    print(json.dumps(rec, default=_jsonable), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
