"""Command-line interface.

Every command takes model parameters as flags or from a flat JSON file
(``--config``), flags winning. Outputs go to ``--out`` or, failing that,
to the directory named by ``$SWEEPWAVE_OUT`` (default: current directory).

Exit codes: 0 success, 1 usage or configuration error, 2 non-generic
parameters, 3 runtime failure (overflow, event budget, I/O).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from . import io
from .errors import (ConfigError, ConflictingStop, InvalidParams, MissingField,
                     NonGenericParameters, ParseError, SweepwaveError)
from .harness import compare, rescale, type_distribution_snapshot
from .limit import birth_times, run_limit
from .moran import SimConfig, run_ensemble, run_sim
from .params import ModelParams, log_scale
from .regimes import (blowup_certificate, regime1_closed_form, regime2_recursion,
                      regime_thresholds)

COMMANDS = ("limit", "simulate", "ensemble", "compare", "regimes", "blowup", "snapshot")
PARAM_KEYS = ("gamma", "alpha", "rho", "mu")
DEFAULTS = {"rho": 0.0, "mu": 1e-3, "seed": 0, "replicates": 10, "workers": 1,
            "epsilon": 0.05, "max_types": 8, "svg": False}

EXIT_OK, EXIT_USAGE, EXIT_NONGENERIC, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _windows(text: str) -> list:
    out = []
    for item in text.split(","):
        a, _, b = item.partition(":")
        try:
            out.append((float(a), float(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad window {item!r}; use a:b") from None
    return out


# (type, help) per option; shared between argparse and the file loader
OPTIONS = {
    "gamma": (float, "selective advantage per mutation"),
    "alpha": (float, "initial population exponent"),
    "rho": (float, "population growth rate"),
    "mu": (float, "mutation rate"),
    "horizon": (float, "scaled time horizon of the limit path"),
    "max_waves": (int, "maximum number of waves"),
    "seed": (int, "master random seed"),
    "replicate": (int, "replicate index (stream selector)"),
    "n0": (int, "explicit initial population size"),
    "t_end": (float, "stop at this raw model time"),
    "first_type": (int, "stop at the first appearance of this type"),
    "max_events": (int, "event budget"),
    "record_dt": (float, "sampling grid spacing (raw time)"),
    "replicates": (int, "number of replicates"),
    "workers": (int, "worker processes"),
    "mu_list": (_float_list, "comma-separated decreasing mutation rates"),
    "windows": (_windows, "scaled-time windows a:b,c:d"),
    "epsilon": (float, "exclusion radius around t=0 and event times"),
    "types": (_int_list, "types tracked in deviations"),
    "birth_types": (_int_list, "types tracked in birth-time errors"),
    "times": (_float_list, "comma-separated snapshot times (scaled)"),
    "max_types": (int, "per-type columns in trajectory CSV"),
    "j_max": (int, "last regime-2 coefficient"),
}

COMMAND_OPTIONS = {
    "limit": ["horizon", "max_waves"],
    "simulate": ["seed", "replicate", "n0", "t_end", "first_type", "max_events",
                 "record_dt", "max_types"],
    "ensemble": ["seed", "n0", "t_end", "first_type", "max_events", "record_dt",
                 "replicates", "workers"],
    "compare": ["seed", "replicates", "workers", "mu_list", "windows", "epsilon",
                "types", "birth_types", "horizon", "record_dt"],
    "regimes": ["j_max"],
    "blowup": [],
    "snapshot": ["horizon", "times"],
}

REQUIRED = {
    "limit": [],
    "simulate": [],
    "ensemble": [],
    "compare": ["mu_list", "windows"],
    "regimes": [],
    "blowup": [],
    "snapshot": ["times"],
}


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    options: dict = field(default_factory=dict)
    out_dir: str = "."
    svg: bool = False
    thin: bool = True

    def resolved(self) -> dict:
        opts = {}
        for k, v in self.options.items():
            opts[k] = [list(w) if isinstance(w, tuple) else w for w in v] if isinstance(v, list) else v
        return {"command": self.command, "params": self.params.as_dict(), **opts,
                "svg": self.svg, "thin_selfreplacement": self.thin}

    def get(self, key, default=None):
        v = self.options.get(key)
        return default if v is None else v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sweepwave", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="JSON file with default values")
        sp.add_argument("--out", help=f"output directory (default ${io.OUT_DIR_ENV} or .)")
        sp.add_argument("--svg", action="store_true", default=None, help="also write an SVG chart")
        for key in PARAM_KEYS + tuple(COMMAND_OPTIONS[cmd]):
            typ, help_ = OPTIONS[key]
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=help_)
        if cmd in ("simulate", "ensemble", "compare"):
            sp.add_argument("--no-thin", dest="thin", action="store_false", default=True,
                            help="simulate self-replacements explicitly")
    return parser


def _read_config_file(path: str, allowed) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ParseError("config file must hold a JSON object", line=1)
    out = {}
    for key, value in data.items():
        if key in ("command", "svg", "thin_selfreplacement"):
            out[key] = value
            continue
        if key not in allowed:
            raise ParseError("unknown key", key=key, line=_line_of(text, key))
        typ = OPTIONS[key][0]
        try:
            if typ is _windows:
                value = [tuple(float(x) for x in w) for w in value]
                if any(len(w) != 2 for w in value):
                    raise ValueError("windows are pairs")
            elif typ in (_float_list, _int_list):
                value = [(float if typ is _float_list else int)(x) for x in value]
            elif typ is int:
                if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                    raise ValueError(f"{value!r} is not an integer")
                value = int(value)
            else:
                if isinstance(value, bool):
                    raise ValueError(f"{value!r} is not a number")
                value = float(value)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad value: {exc}", key=key, line=_line_of(text, key)) from None
        out[key] = value
    return out


def _line_of(text: str, key: str):
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def load_config(argv=None) -> RunConfig:
    """Parse flags (and the optional JSON file) into a :class:`RunConfig`."""
    args = build_parser().parse_args(argv)
    cmd = args.command
    allowed = set(PARAM_KEYS) | set(COMMAND_OPTIONS[cmd])
    values = {}
    if args.config:
        values.update(_read_config_file(args.config, allowed))
        if values.pop("command", cmd) != cmd:
            raise ConfigError(f"config file is for a different command than {cmd!r}")
    for key in allowed:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    for key in ("gamma", "alpha"):
        if key not in values:
            raise MissingField(key)
    for key in REQUIRED[cmd]:
        if key not in values:
            raise MissingField(key)
    params = ModelParams(gamma=values.pop("gamma"), alpha=values.pop("alpha"),
                         rho=values.pop("rho", DEFAULTS["rho"]), mu=values.pop("mu", DEFAULTS["mu"]))
    svg = bool(values.pop("svg", False)) if args.svg is None else True
    thin = values.pop("thin_selfreplacement", True) and getattr(args, "thin", True)
    options = {k: values.get(k, DEFAULTS.get(k)) for k in COMMAND_OPTIONS[cmd]}
    if cmd in ("simulate", "ensemble"):
        primary = [k for k in ("t_end", "first_type") if options.get(k) is not None]
        if len(primary) > 1:
            raise ConflictingStop("give exactly one of --t-end and --first-type "
                                  "(--max-events is a safety cap)")
        if not primary and options.get("max_events") is None:
            raise MissingField("t_end|first_type|max_events")
    if cmd in ("limit", "snapshot") and options.get("horizon") is None and options.get("max_waves") is None:
        if cmd == "snapshot" and options.get("times"):
            options["horizon"] = max(options["times"])
        else:
            raise MissingField("horizon")
    if cmd == "compare" and options.get("horizon") is None:
        options["horizon"] = max(b for _, b in options["windows"]) + 1.0
    return RunConfig(cmd, params, options, io.output_dir(args.out), svg, bool(thin))


def _sim_config(cfg: RunConfig, **over) -> SimConfig:
    o = cfg.options
    kw = dict(params=cfg.params, n0=o.get("n0"), seed=cfg.get("seed", 0),
              replicate=cfg.get("replicate", 0), t_end=o.get("t_end"),
              first_type=o.get("first_type"), max_events=o.get("max_events"),
              record_dt=o.get("record_dt"), thin_selfreplacement=cfg.thin)
    kw.update(over)
    return SimConfig(**kw)


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def cmd_limit(cfg: RunConfig) -> dict:
    o = cfg.options
    path = run_limit(cfg.params, horizon=o.get("horizon"), max_waves=o.get("max_waves"))
    io.write_limit_csv(path, _out(cfg, "limit_path.csv"))
    io.write_birth_times_csv(path, _out(cfg, "birth_times.csv"))
    if cfg.svg:
        io.write_svg(io.limit_series(path), _out(cfg, "limit_path.svg"))
    return {
        "waves": len(path.events),
        "end_time": path.end_time,
        "truncation": path.truncation,
        "tstar_estimate": path.tstar_estimate,
        "birth_times": [[b.k, b.b, b.gap] for b in birth_times(path)],
    }


def cmd_simulate(cfg: RunConfig) -> dict:
    traj = run_sim(_sim_config(cfg))
    io.write_trajectory_csv(traj, _out(cfg, "trajectory.csv"), cfg.get("max_types", 8))
    if cfg.svg:
        rt = rescale(traj, cfg.params)
        io.write_svg({f"Y_{j}": (rt.t, y) for j, y in rt.Y.items()}, _out(cfg, "trajectory.svg"))
    return {"status": traj.status, "event_count": traj.event_count,
            "first_appearance": traj.first_appearance, "final_t": traj.final.t,
            "final_counts": traj.final.count_map}


def cmd_ensemble(cfg: RunConfig) -> dict:
    res = run_ensemble(_sim_config(cfg), cfg.get("replicates"), workers=cfg.get("workers", 1))
    types = sorted({k for r in res for k in r.first_appearance})
    io.write_ensemble_csv(res, _out(cfg, "ensemble.csv"), types)
    return {"replicates": [{"replicate": r.replicate, "status": r.status, "error": r.error,
                            "first_appearance": r.first_appearance, "N_at_T": r.N_at_T,
                            "event_count": r.event_count, "final_t": r.final_t}
                           for r in res]}


def cmd_compare(cfg: RunConfig) -> dict:
    o = cfg.options
    path = run_limit(cfg.params, horizon=o["horizon"])
    births = [b.k for b in birth_times(path) if b.b > 0]
    birth_types = o.get("birth_types") or births[:2]
    types = o.get("types") or [1]
    stop_type = max(birth_types)
    cells = []
    for mu in o["mu_list"]:
        p = cfg.params.replace(mu=mu)
        unit = log_scale(p).time_unit
        sc = SimConfig(p, seed=cfg.get("seed", 0), t_end=o["horizon"] * unit,
                       record_dt=o.get("record_dt") or unit / 200, thin_selfreplacement=cfg.thin)
        res = run_ensemble(sc, o["replicates"], workers=o.get("workers", 1), keep_trajectories=True)
        cells.append((mu, [rescale(r.trajectory, p) for r in res if r.trajectory is not None]))
        if not any(stop_type in r.first_appearance for r in res):
            raise InvalidParams(f"no replicate reached type {stop_type} at mu={mu}")
    report = compare(cells, path, o["windows"], o["epsilon"], types=types, birth_types=birth_types)
    return report.to_dict()


def cmd_regimes(cfg: RunConfig) -> dict:
    p = cfg.params
    rep = regime_thresholds(p)
    out = {"thresholds": rep.thresholds, "r_inf": rep.r_inf, "regime_index": rep.regime_index,
           "conjectural": rep.conjectural, "notes": rep.notes}
    if rep.regime_index == 1:
        first, beta = regime1_closed_form(p)
        out["regime1"] = {"first_gap": first, "beta": beta}
    elif rep.regime_index == 2:
        r2 = regime2_recursion(p, cfg.get("j_max") or 50)
        out["regime2"] = {"betas": r2.betas, "r_star": r2.r_star, "beta_inf": r2.beta_inf,
                          "conditions_ok": r2.conditions_ok}
    return out


def cmd_blowup(cfg: RunConfig) -> dict:
    c = blowup_certificate(cfg.params)
    return {"certified": c.certified, "S": c.S, "a": c.a, "condition_alpha": c.condition_alpha,
            "condition_ratio": c.condition_ratio, "tstar_bound": c.tstar_bound, "note": c.note}


def cmd_snapshot(cfg: RunConfig) -> dict:
    o = cfg.options
    path = run_limit(cfg.params, horizon=o["horizon"])
    snaps = type_distribution_snapshot(path, o["times"])
    io.write_snapshot_csv(o["times"], snaps, _out(cfg, "snapshot.csv"))
    return {"times": o["times"], "distributions": snaps}


HANDLERS = {"limit": cmd_limit, "simulate": cmd_simulate, "ensemble": cmd_ensemble,
            "compare": cmd_compare, "regimes": cmd_regimes, "blowup": cmd_blowup,
            "snapshot": cmd_snapshot}


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
    except (ConfigError, InvalidParams) as exc:
        print(f"sweepwave: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"sweepwave: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report_path = _out(cfg, "report.json")
    seed = cfg.get("seed")
    try:
        payload = HANDLERS[cfg.command](cfg)
    except NonGenericParameters as exc:
        io.write_report(report_path, cfg.command, cfg.params.as_dict(), seed,
                        {"error": "NonGenericParameters", "wave_index": exc.wave_index,
                         "candidates": exc.candidates}, cfg.resolved())
        print(f"sweepwave: {exc}", file=sys.stderr)
        return EXIT_NONGENERIC
    except InvalidParams as exc:
        print(f"sweepwave: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SweepwaveError, OSError, OverflowError) as exc:
        print(f"sweepwave: {type(exc).__name__}: {exc}", file=sys.stderr)
        try:
            io.write_report(report_path, cfg.command, cfg.params.as_dict(), seed,
                            {"error": type(exc).__name__, "message": str(exc)}, cfg.resolved())
        except OSError:
            pass
        return EXIT_RUNTIME
    io.write_report(report_path, cfg.command, cfg.params.as_dict(), seed, payload, cfg.resolved())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
