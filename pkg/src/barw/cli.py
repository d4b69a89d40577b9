"""Command-line entry point: `barw <subcommand> [flags]`.

Every experiment subcommand takes the same core flags (--mu, --radius,
--dim, --side, --generations, --replicas, --seed, --init, --boundary,
--out, --format) plus a few of its own, writes a manifest-first output
directory, and can be driven from a JSON config file via --config; flags
given on the command line override config values, which override the
built-in defaults.  Exit codes: 0 success, 1 invalid arguments or
parameters, 2 violated internal invariant.
"""

from __future__ import annotations

import argparse
import json
import sys

from ._version import __version__
from .errors import InvariantError
from .experiments import (
    RUNNERS,
    rows_to_text,
)
from .thresholds import band_table_rows


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems as ValueError (exit 1)."""

    def error(self, message):
        raise ValueError(message)


def _comma_floats(text: str) -> list[float]:
    return [float(p) for p in str(text).split(",") if p != ""]


def _comma_ints(text: str) -> list[int]:
    return [int(p) for p in str(text).split(",") if p != ""]


def _probe_list(text: str) -> list[list[int]]:
    """Parse probe sites 'x1:x2,y1:y2' into coordinate lists."""

    return [[int(c) for c in site.split(":")] for site in str(text).split(",") if site]


#: flag name -> (argparse kwargs, value converter applied to config values)
_FLAGS = {
    "mu": (dict(type=float, help="branching mean"), float),
    "radius": (dict(type=int, help="interaction radius R"), int),
    "dim": (dict(type=int, help="lattice dimension"), int),
    "side": (dict(type=int, help="window side length"), int),
    "generations": (dict(type=int, help="number of generations to run"), int),
    "replicas": (dict(type=int, help="independent replicas"), int),
    "seed": (dict(type=int, help="base seed for the keyed uniform field"), int),
    "init": (
        dict(type=str, help="initial condition: single | ones | bernoulli:p"),
        str,
    ),
    "boundary": (
        dict(type=str, choices=["torus", "zero"], help="boundary rule"),
        str,
    ),
    "out": (dict(type=str, help="output directory (manifest + tables)"), str),
    "format": (
        dict(type=str, choices=["csv", "ndjson"], help="table format"),
        str,
    ),
    "mus": (
        dict(type=_comma_floats, help="comma-separated branching means"),
        lambda v: [float(x) for x in (v if isinstance(v, list) else _comma_floats(v))],
    ),
    "radii": (
        dict(type=_comma_ints, help="comma-separated radii"),
        lambda v: [int(x) for x in (v if isinstance(v, list) else _comma_ints(v))],
    ),
    "init-a": (dict(type=str, help="initial condition of the first member"), str),
    "init-b": (dict(type=str, help="initial condition of the second member"), str),
    "window": (dict(type=int, help="agreement / observation window radius"), int),
    "probes": (
        dict(type=_probe_list, help="probe sites, e.g. '0,40' or '0:0,5:5'"),
        lambda v: [list(map(int, p)) for p in (v if isinstance(v, list) else _probe_list(v))],
    ),
    "eps": (dict(type=float, help="density tolerance around the fixed point"), float),
    "steps": (dict(type=int, help="iteration steps"), int),
    "tol": (dict(type=float, help="front tolerance"), float),
    "init-value": (dict(type=float, help="seed value of the coupled-map run"), float),
    "slope": (dict(type=float, help="wave slope a > 1"), float),
    "cap-slope": (dict(type=float, help="capped-linear comparison slope"), float),
    "layers": (dict(type=int, help="number of block layers to census"), int),
    "p-grid": (
        dict(type=_comma_floats, help="comma-separated percolation probabilities"),
        lambda v: [float(x) for x in (v if isinstance(v, list) else _comma_floats(v))],
    ),
    "exact": (
        dict(action="store_true", help="redo the check in rational arithmetic"),
        bool,
    ),
}

#: subcommand -> (flags it accepts, defaults, maps flag->runner kwarg)
_COMMANDS = {
    "simulate": dict(
        flags=["mu", "radius", "dim", "side", "generations", "seed", "init",
               "boundary", "out", "format"],
        defaults={"dim": 1, "side": 200, "generations": 100, "seed": 0,
                  "init": "single", "boundary": "torus", "format": "csv"},
        required=["mu", "radius", "out"],
        runner="simulate",
        rename={"radius": "R", "format": "fmt"},
        help="one trajectory: particle counts, densities, final snapshot",
    ),
    "phase-diagram": dict(
        flags=["mus", "radii", "dim", "side", "generations", "replicas",
               "seed", "init", "boundary", "out", "format"],
        defaults={"dim": 1, "side": 1000, "generations": 250, "replicas": 200,
                  "seed": 0, "init": "single", "boundary": "torus",
                  "format": "csv"},
        required=["mus", "radii", "out"],
        runner="phase-diagram",
        rename={"radii": "Rs", "format": "fmt"},
        help="survival proportion over a (mu, R) grid plus the Lambert band",
    ),
    "survival": dict(
        flags=["mu", "radius", "dim", "side", "generations", "replicas",
               "seed", "init", "boundary", "out", "format"],
        defaults={"dim": 1, "side": 1000, "generations": 250, "replicas": 200,
                  "seed": 0, "init": "single", "boundary": "torus",
                  "format": "csv"},
        required=["mu", "radius", "out"],
        runner="survival",
        rename={"radius": "R", "format": "fmt"},
        help="replicated survival estimate with a Wilson interval",
    ),
    "couple": dict(
        flags=["mu", "radius", "dim", "side", "generations", "replicas",
               "seed", "init-a", "init-b", "window", "boundary", "out",
               "format"],
        defaults={"dim": 1, "side": 1000, "generations": 500, "replicas": 100,
                  "seed": 0, "init-a": "single", "init-b": "ones",
                  "window": 50, "boundary": "torus", "format": "csv"},
        required=["mu", "radius", "out"],
        runner="coupling",
        rename={"radius": "R", "format": "fmt", "generations": "horizon",
                "init-a": "init_a", "init-b": "init_b"},
        help="pairs on a shared field: agreement radii and coupling times",
    ),
    "density": dict(
        flags=["mu", "radius", "dim", "side", "generations", "seed", "init",
               "probes", "eps", "boundary", "out", "format"],
        defaults={"dim": 1, "side": 1000, "generations": 500, "seed": 0,
                  "init": "ones", "eps": 0.1, "boundary": "torus",
                  "format": "csv"},
        required=["mu", "radius", "out"],
        runner="density",
        rename={"radius": "R", "format": "fmt", "generations": "horizon"},
        help="window-density time series at probe sites",
    ),
    "cml": dict(
        flags=["mu", "radius", "window", "steps", "tol", "init-value",
               "slope", "out", "format"],
        defaults={"window": 200, "steps": 2000, "tol": 0.05,
                  "init-value": 0.01, "slope": 1.1, "format": "csv"},
        required=["mu", "radius", "out"],
        runner="cml-front",
        rename={"radius": "R", "format": "fmt", "init-value": "init_value",
                "slope": "a"},
        help="deterministic coupled-map front: radius series and speed",
    ),
    "thresholds": dict(
        flags=["radii", "dim"],
        defaults={"dim": 1},
        required=["radii"],
        runner=None,
        rename={},
        help="print the Lambert survival band per radius as CSV",
    ),
    "profiles-verify": dict(
        flags=["slope", "radius", "exact", "out", "format"],
        defaults={"exact": False, "format": "csv"},
        required=["slope", "radius", "out"],
        runner="profiles-verify",
        rename={"radius": "R", "format": "fmt", "slope": "a"},
        help="check the wave-shape advance inequality at one (a, R)",
    ),
    "blocks-census": dict(
        flags=["mu", "radius", "slope", "cap-slope", "layers", "side",
               "seed", "init", "out", "format"],
        defaults={"slope": 1.1, "cap-slope": 1.5, "layers": 2, "seed": 0,
                  "init": "ones", "format": "csv"},
        required=["mu", "radius", "out"],
        runner="blocks-census",
        rename={"radius": "R", "format": "fmt", "slope": "a",
                "cap-slope": "a_tilde"},
        help="survival block census over a comparison run",
    ),
    "percolation": dict(
        flags=["radius", "dim", "side", "generations", "replicas", "seed",
               "p-grid", "boundary", "out", "format"],
        defaults={"dim": 1, "side": 400, "generations": 100, "replicas": 200,
                  "seed": 0, "boundary": "torus", "format": "csv"},
        required=["radius", "out"],
        runner="percolation",
        rename={"radius": "R", "format": "fmt", "p-grid": "p_grid"},
        help="oriented percolation crossing curve and p_c estimate",
    ),
}


def build_parser() -> _Parser:
    parser = _Parser(
        prog="barw",
        description="branching annihilating walk simulator and verifier",
    )
    parser.add_argument("--version", action="version", version=f"barw {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    for name, spec in _COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"], description=spec["help"])
        p.add_argument(
            "--config",
            type=str,
            default=None,
            help="JSON file of parameters (flags given here win)",
        )
        for flag in spec["flags"]:
            kwargs, _ = _FLAGS[flag]
            p.add_argument(f"--{flag}", default=argparse.SUPPRESS, **kwargs)
    return parser


def _load_config(path: str, allowed: list[str]) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    out = {}
    for key, value in raw.items():
        flag = key.replace("_", "-")
        if flag not in allowed:
            raise ValueError(f"config key {key!r} is not a flag of this subcommand")
        _, convert = _FLAGS[flag]
        out[flag] = convert(value)
    return out


def _merged_params(ns: argparse.Namespace, spec: dict) -> dict:
    params = dict(spec["defaults"])
    if ns.config is not None:
        params.update(_load_config(ns.config, spec["flags"]))
    for flag in spec["flags"]:
        attr = flag.replace("-", "_")
        if hasattr(ns, attr):
            params[flag] = getattr(ns, attr)
    missing = [f for f in spec["required"] if f not in params]
    if missing:
        raise ValueError(
            "missing required parameters: " + ", ".join(f"--{f}" for f in missing)
        )
    return params


def _runner_kwargs(params: dict, spec: dict) -> dict:
    out = {}
    for flag, value in params.items():
        if flag == "out":
            continue
        key = spec["rename"].get(flag, flag.replace("-", "_"))
        out[key] = value
    return out


def _run_thresholds(params: dict) -> int:
    rows = band_table_rows(params["radii"], d=params["dim"])
    dicts = [
        dict(R=R, dim=d, volume=V, mu1=mu1, mu2=mu2, series_error=err)
        for (R, d, V, mu1, mu2, err) in rows
    ]
    sys.stdout.write(
        rows_to_text(["R", "dim", "volume", "mu1", "mu2", "series_error"], dicts, "csv")
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help()
            return 1
        spec = _COMMANDS[ns.command]
        params = _merged_params(ns, spec)
        if ns.command == "thresholds":
            return _run_thresholds(params)
        runner = RUNNERS[spec["runner"]]
        manifest = runner(params["out"], **_runner_kwargs(params, spec))
        sys.stdout.write(
            f"{ns.command}: wrote {len(manifest.outputs)} outputs to "
            f"{params['out']} (seed {manifest.seed})\n"
        )
        return 0
    except InvariantError as exc:
        sys.stderr.write(f"invariant violated: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
