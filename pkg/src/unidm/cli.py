"""Command-line frontend: ``unidm <subcommand> [options]``.

Every subcommand writes CSV (or JSON with ``--format json``) to ``--output``
or stdout. With a CSV ``--output`` file a JSON mirror carrying full
diagnostics is written beside it.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .channel import (GaussianChannelParams, expected_stats, gm_baseline_skr, pure_loss_holevo)
from .constellation import Constellation, modulation_variance
from .engine import (ProtocolConfig, SweepPoint, optimize_variance, shaping_study, skr_point, sweep)
from .errors import ConfigError, EmptyRegionError, QBlockUnphysicalError, UnidmError
from .gaussian_info import holevo_max_over_cp
from .physicality import cp_interval, cq_transitions
from .sdp import SolverConfig, convergence_sweep

log = logging.getLogger(__name__)

POINT_COLUMNS = ("var", "value", "cq_star", "cp_star", "nu1", "nu2", "nu3", "chi",
                 "mutual_info", "key_rate", "key_rate_clamped", "status", "cutoff")


def _floats(text: str) -> list[float]:
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    return [float(p) for p in parts]


def _ints(text: str) -> list[int]:
    out = []
    for p in str(text).split(","):
        if p.strip():
            f = float(p)
            if f != int(f):
                raise ValueError(f"{p!r} is not an integer")
            out.append(int(f))
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0.0 <= x <= 1.0


# key -> (section, parser, check, bound description, default)
SCHEMA = {
    "states": ("constellation", _ints, lambda v: all(s >= 2 and s % 2 == 0 for s in v),
               "even and >= 2", [2]),
    "alpha0": ("constellation", float, _positive, "> 0", 0.1),
    "ratios": ("constellation", _floats, lambda v: len(v) > 0, "non-empty", None),
    "probs": ("constellation", _floats, lambda v: len(v) > 0 and min(v) >= 0, "non-negative", None),
    "distance": ("channel", float, _nonneg, ">= 0", 10.0),
    "atten_db_km": ("channel", float, _nonneg, ">= 0", 0.2),
    "xi": ("channel", float, _nonneg, ">= 0", 0.0),
    "xi_p": ("channel", float, _nonneg, ">= 0", None),
    "t_q": ("channel", float, _unit, "in [0, 1]", None),
    "t_p": ("channel", float, _unit, "in [0, 1]", None),
    "beta": ("protocol", float, _unit, "in [0, 1]", 1.0),
    "cutoff": ("protocol", int, lambda v: v >= 1, ">= 1", None),
    "max_cutoff": ("protocol", int, lambda v: v >= 1, ">= 1", 40),
    "convergence_tol": ("protocol", float, _positive, "> 0", 1e-6),
    "cp_grid": ("protocol", int, lambda v: v >= 2, ">= 2", 2001),
    "wp_max": ("protocol", float, lambda v: v >= 1, ">= 1", 20.0),
    "no_p_variant": ("protocol", _bool, lambda v: True, "", True),
    "solver_tol": ("solver", float, _positive, "> 0", 1e-8),
    "solver_max_tol": ("solver", float, _positive, "> 0", 1e-7),
    "backend": ("solver", str, lambda v: v in ("cvxopt", "cvxpy"), "cvxopt or cvxpy", "cvxopt"),
    "slack": ("solver", float, _nonneg, ">= 0", 0.0),
}
SECTIONS = {s for s, *_ in SCHEMA.values()}


@dataclass
class RunConfig:
    """Effective settings: defaults, then config file, then flags."""

    values: dict
    sources: dict
    file_path: str | None = None
    file_text: str | None = None
    extras: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def constellation(self, n_states: int | None = None) -> Constellation:
        v = self.values
        if n_states is None:
            if len(v["states"]) != 1:
                raise ConfigError("this subcommand takes a single value for 'states'")
            n_states = v["states"][0]
        try:
            if v["ratios"] is None and v["probs"] is None:
                return Constellation.uniform(n_states, v["alpha0"])
            ratios = v["ratios"] or [float(k + 1) for k in range(n_states // 2)]
            probs = v["probs"] or [1.0 / len(ratios)] * len(ratios)
            if self.sources["states"] != "default" and 2 * len(ratios) != n_states:
                raise ConfigError(f"'ratios' has {len(ratios)} levels but states = {n_states}")
            return Constellation(v["alpha0"], tuple(ratios), tuple(probs))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid constellation: {exc}") from None

    def solver(self) -> SolverConfig:
        v = self.values
        try:
            return SolverConfig(backend=v["backend"], tol=v["solver_tol"],
                                max_tol=max(v["solver_max_tol"], v["solver_tol"]), slack=v["slack"])
        except ValueError as exc:
            raise ConfigError(f"solver settings: {exc}") from None

    def protocol(self, n_states: int | None = None) -> ProtocolConfig:
        v = self.values
        try:
            return ProtocolConfig(
                constellation=self.constellation(n_states), distance_km=v["distance"],
                atten_db_km=v["atten_db_km"], xi_q=v["xi"], xi_p=v["xi_p"], t_q=v["t_q"],
                t_p=v["t_p"], beta=v["beta"], cutoff=v["cutoff"], solver=self.solver(),
                cp_grid=v["cp_grid"], convergence_tol=v["convergence_tol"],
                max_cutoff=v["max_cutoff"], no_p_variant=v["no_p_variant"], wp_max=v["wp_max"])
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def echo(self) -> list[str]:
        return [f"{k} = {_fmt_value(self.values[k])}  ({self.sources[k]})" for k in SCHEMA]


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _coerce(key: str, raw, where: str):
    _, parse, check, bound, _ = SCHEMA[key]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() == "none"):
        return None
    try:
        val = raw if (parse is float and isinstance(raw, (int, float)) and not isinstance(raw, bool)) \
            else parse(raw if not isinstance(raw, list) else ",".join(map(str, raw)))
        if parse is float:
            val = float(val)
            if not math.isfinite(val):
                raise ValueError("not finite")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value for '{key}': {exc}") from None
    if not check(val):
        raise ConfigError(f"{where}: '{key}' = {raw!r} must be {bound}")
    return val


def _parse_text_config(text: str, path: str) -> dict:
    out, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        where = f"{path}:{lineno}"
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line.strip()!r}")
            section = s[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        key, sep, value = s.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{where}: expected 'key = value', got {line.strip()!r}")
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key '{key}'")
        if section is not None and SCHEMA[key][0] != section:
            raise ConfigError(f"{where}: key '{key}' belongs in [{SCHEMA[key][0]}], not [{section}]")
        if key in out:
            raise ConfigError(f"{where}: duplicate key '{key}'")
        out[key] = (value.strip(), where)
    return out


def _parse_json_config(text: str, path: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    out = {}
    for key, value in data.items():
        if key in SECTIONS and isinstance(value, dict):
            for k, v in value.items():
                k2 = k.replace("-", "_")
                if k2 not in SCHEMA or SCHEMA[k2][0] != key:
                    raise ConfigError(f"{path}: unknown key '{key}.{k}'")
                out[k2] = (v, f"{path}:{key}.{k}")
        else:
            k2 = key.replace("-", "_")
            if k2 not in SCHEMA:
                raise ConfigError(f"{path}: unknown key '{key}'")
            out[k2] = (value, f"{path}:{key}")
    return out


def parse_config(path: str | None = None, flags: dict | None = None) -> RunConfig:
    """Merge defaults, an optional config file and flag overrides; validate everything."""
    values = {k: spec[4] for k, spec in SCHEMA.items()}
    sources = {k: "default" for k in SCHEMA}
    text = None
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = p.read_text()
        raw = _parse_json_config(text, path) if text.lstrip().startswith("{") \
            else _parse_text_config(text, path)
        for key, (value, where) in raw.items():
            values[key] = _coerce(key, value, where)
            sources[key] = where
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown setting '{key}'")
        flag = "--" + key.replace("_", "-")
        values[key] = _coerce(key, value, flag)
        sources[key] = flag
    return RunConfig(values, sources, path, text)


def _f(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if obj is None or isinstance(obj, (str, int, bool)):
        return obj
    return str(obj)


def point_row(var: str, p: SweepPoint) -> dict:
    if p.report is None:
        row = {k: None for k in POINT_COLUMNS}
        row.update(var=var, value=p.value, status="failed")
        return row
    r = p.report
    return {"var": var, "value": p.value, "cq_star": r.C_q_star, "cp_star": r.C_p_star,
            "nu1": r.spectrum.nu1, "nu2": r.spectrum.nu2, "nu3": r.spectrum.nu3,
            "chi": r.holevo, "mutual_info": r.mutual_info, "key_rate": r.key_rate,
            "key_rate_clamped": r.key_rate_clamped,
            "status": r.diagnostics.get("status", "ok"), "cutoff": r.diagnostics.get("cutoff")}


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)
    details: list = field(default_factory=list)
    failed: int = 0
    notes: list = field(default_factory=list)


def _grid(args) -> list[float]:
    if getattr(args, "values", None):
        return _floats(args.values)
    if args.start is None or args.stop is None or args.step is None:
        raise ConfigError("give --values or all of --from/--to/--step")
    if args.step <= 0 or args.stop < args.start:
        raise ConfigError("--step must be > 0 and --to >= --from")
    n = int(math.floor((args.stop - args.start) / args.step + 1e-9)) + 1
    return [round(args.start + i * args.step, 12) for i in range(n)]


def _points_table(var: str, points: list[SweepPoint]) -> Table:
    t = Table(POINT_COLUMNS)
    for p in points:
        t.rows.append(point_row(var, p))
        d = {"value": p.value, "error": p.error}
        if p.report is not None:
            d.update(p.report.as_dict())
        t.details.append(d)
        t.failed += 0 if p.ok else 1
    return t


def cmd_skr(rc: RunConfig, args) -> Table:
    cfg = rc.protocol()
    try:
        pt = SweepPoint(cfg.distance_km, skr_point(cfg))
    except (UnidmError, ValueError, ArithmeticError) as exc:
        pt = SweepPoint(cfg.distance_km, None, f"{type(exc).__name__}: {exc}")
    return _points_table("distance", [pt])


def cmd_sweep(rc: RunConfig, args) -> Table:
    variable = {"distance": "distance", "alpha": "alpha0_squared"}[args.variable]
    res = sweep(rc.protocol(), variable, _grid(args))
    t = _points_table(variable, res.points)
    t.notes.append(f"config_hash={res.metadata['config_hash']}")
    return t


def cmd_shaping(rc: RunConfig, args) -> Table:
    res = shaping_study(rc.protocol(), _grid(args))
    t = _points_table("nu", res.points)
    t.notes.append(f"argmax_nu={_f(res.metadata['argmax'])}")
    return t


def cmd_optimize_variance(rc: RunConfig, args) -> Table:
    cfg = rc.protocol()
    distances = _floats(args.distances) if args.distances else [cfg.distance_km]
    t = Table(POINT_COLUMNS + ("alpha0_opt", "all_negative"))
    for d in distances:
        try:
            opt = optimize_variance(replace(cfg, distance_km=d), (args.alpha_min, args.alpha_max),
                                    n_grid=args.grid)
            row = point_row("distance", SweepPoint(d, opt.report))
            row.update(alpha0_opt=opt.alpha0, all_negative=opt.all_negative)
            t.details.append({"distance": d, "alpha0": opt.alpha0, "grid": opt.grid,
                              "all_negative": opt.all_negative, **opt.report.as_dict()})
        except (UnidmError, ValueError, ArithmeticError) as exc:
            row = point_row("distance", SweepPoint(d, None))
            row.update(alpha0_opt=None, all_negative=None)
            t.details.append({"distance": d, "error": f"{type(exc).__name__}: {exc}"})
            t.failed += 1
        t.rows.append(row)
    return t


def cmd_region(rc: RunConfig, args) -> Table:
    c = rc.constellation()
    cfg = rc.protocol()
    stats = expected_stats(c, cfg.channel())
    V, W, W_p = modulation_variance(c), stats.v_q, stats.v_p
    # Largest |C_q| with a nonempty interval, shrunk so the endpoints stay inside.
    lim = min(math.sqrt(V * W - V / W_p), math.sqrt(W * (V - 1.0))) * (1.0 - 1e-9)
    t = Table(("cq", "cp_minus", "cp_plus", "center"))
    for cq in np.linspace(-lim, lim, args.points):
        try:
            iv = cp_interval(V, W, W_p, float(cq))
        except (EmptyRegionError, QBlockUnphysicalError):
            continue
        t.rows.append({"cq": cq, "cp_minus": iv.cp_minus, "cp_plus": iv.cp_plus, "center": 0.0 - iv.c0})
    trans = cq_transitions(V, W, W_p)
    t.details.append({"V": V, "W": W, "W_p": W_p, "cq_transitions": trans})
    t.notes.append(f"V={_f(V)} W={_f(W)} W_p={_f(W_p)}")
    return t


def cmd_holevo_curve(rc: RunConfig, args) -> Table:
    cfg = rc.protocol(rc["states"][0])
    t = Table(("states", "cq", "chi_max", "cp_argmax", "chi_shortcut"))
    for n in rc["states"]:
        c = rc.constellation(n)
        stats = expected_stats(c, cfg.channel())
        V, W, W_p = modulation_variance(c), stats.v_q, stats.v_p
        lim = math.sqrt(W * (V - 1.0)) if args.cq_max is None else args.cq_max
        for cq in np.linspace(-lim, lim, args.points):
            try:
                hm = holevo_max_over_cp(V, W, W_p, float(cq), grid=cfg.cp_grid)
            except (EmptyRegionError, QBlockUnphysicalError, UnidmError):
                continue
            t.rows.append({"states": n, "cq": cq, "chi_max": hm.chi_max,
                           "cp_argmax": hm.cp_argmax, "chi_shortcut": hm.chi_shortcut})
        t.details.append({"states": n, "V": V, "W": W, "W_p": W_p})
    return t


def cmd_baseline(rc: RunConfig, args) -> Table:
    cfg = rc.protocol()
    c = cfg.constellation
    distances = _grid(args) if (args.values or args.start is not None) else [cfg.distance_km]
    if args.mode == "pure-loss":
        t = Table(("var", "value", "chi", "status"))
        for d in distances:
            T = replace(cfg, distance_km=d).channel().T_q
            try:
                chi, status = pure_loss_holevo(c, T), "ok"
            except UnidmError as exc:
                chi, status = None, type(exc).__name__
                t.failed += 1
            t.rows.append({"var": "distance", "value": d, "chi": chi, "status": status})
        return t
    vm = args.vm if args.vm is not None else modulation_variance(c) - 1.0
    pts = []
    for d in distances:
        ch = replace(cfg, distance_km=d).channel()
        try:
            r = gm_baseline_skr(vm, GaussianChannelParams.phase_insensitive(ch.T_q, ch.xi_q), cfg.beta)
            r.diagnostics["status"] = "ok"
            pts.append(SweepPoint(d, r))
        except (UnidmError, ValueError) as exc:
            pts.append(SweepPoint(d, None, f"{type(exc).__name__}: {exc}"))
    return _points_table("distance", pts)


def cmd_convergence(rc: RunConfig, args) -> Table:
    cfg = rc.protocol()
    cutoffs = _ints(args.cutoffs)
    if len(cutoffs) < 2:
        raise ConfigError("--cutoffs needs at least two values")
    stats = expected_stats(cfg.constellation, cfg.channel())
    rows = convergence_sweep(cfg.constellation, stats, cutoffs, cfg.solver)
    t = Table(("n_c", "cq_star", "status", "delta"))
    for r in rows:
        t.rows.append({"n_c": r.n_c, "cq_star": r.cq_star, "status": r.status, "delta": r.delta})
        t.failed += r.status != "optimal"
    return t


COMMANDS = {"skr": cmd_skr, "sweep": cmd_sweep, "region": cmd_region,
            "holevo-curve": cmd_holevo_curve, "baseline": cmd_baseline,
            "optimize-variance": cmd_optimize_variance, "shaping": cmd_shaping,
            "convergence": cmd_convergence}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="key = value (with [sections]) or JSON config file")
    g.add_argument("--cutoff", help="working Fock cutoff n_c")
    g.add_argument("--solver-tol", help="conic solver tolerance")
    g.add_argument("--beta", help="reconciliation efficiency in [0, 1]")
    g.add_argument("--atten-db-km", help="fiber attenuation in dB/km")
    g.add_argument("--output", help="output file (default: stdout)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--no-meta", action="store_true", help="omit the '#' metadata header")
    g.add_argument("--slack", help="debug only: relax statistic constraints by this amount")
    g.add_argument("--backend", help="SDP backend: cvxopt or cvxpy")
    g.add_argument("--states", help="number of states (comma list for holevo-curve)")
    g.add_argument("--alpha0", help="base amplitude")
    g.add_argument("--ratios", help="amplitude ratios, comma separated")
    g.add_argument("--probs", help="level probabilities, comma separated")
    g.add_argument("--distance", help="distance in km")
    g.add_argument("--xi", help="excess noise (shot-noise units)")
    g.add_argument("--xi-p", help="excess noise in p, if different")
    g.add_argument("--t-q", help="q transmittance (overrides distance)")
    g.add_argument("--t-p", help="p transmittance")
    g.add_argument("--no-p-variant", help="also compute the variant without p estimation (true/false)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _add_grid(p):
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--values", help="explicit comma-separated grid")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="unidm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("skr", parents=[common], help="key rate at one point")
    p = sub.add_parser("sweep", parents=[common], help="key rate over distance or alpha0^2")
    p.add_argument("variable", choices=("distance", "alpha"))
    _add_grid(p)
    p = sub.add_parser("region", parents=[common], help="physical C_p interval versus C_q")
    p.add_argument("--points", type=int, default=201)
    p = sub.add_parser("holevo-curve", parents=[common], help="max Holevo bound versus C_q")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--cq-max", type=float, help="common C_q range for all curves")
    p = sub.add_parser("baseline", parents=[common], help="pure-loss or Gaussian baselines")
    p.add_argument("mode", choices=("pure-loss", "gaussian"))
    p.add_argument("--vm", type=float, help="Gaussian modulation variance (default: matched)")
    _add_grid(p)
    p = sub.add_parser("optimize-variance", parents=[common], help="maximize K over alpha0")
    p.add_argument("--alpha-min", type=float, default=0.01)
    p.add_argument("--alpha-max", type=float, default=0.5)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--distances", help="comma-separated distances (default: --distance)")
    p = sub.add_parser("shaping", parents=[common], help="key rate versus Gaussian shaping nu")
    _add_grid(p)
    p = sub.add_parser("convergence", parents=[common], help="C_q* versus Fock cutoff")
    p.add_argument("--cutoffs", default="15,20,25")
    return parser


FLAG_KEYS = ("cutoff", "solver_tol", "beta", "atten_db_km", "slack", "backend", "states",
             "alpha0", "ratios", "probs", "distance", "xi", "xi_p", "t_q", "t_p", "no_p_variant")


def _meta_lines(rc: RunConfig, argv: list[str], table: Table) -> list[str]:
    lines = ["unidm " + " ".join(argv)]
    if rc.values["slack"]:
        lines.append(f"WARNING: slack {rc.values['slack']:g} relaxes the constraints; "
                     "results are NOT certified key rates")
    lines += ["config: " + e for e in rc.echo()]
    if rc.file_text is not None:
        lines.append(f"config-file: {rc.file_path}")
        lines += ["| " + ln for ln in rc.file_text.splitlines()]
    lines += table.notes
    lines.append("generated: " + datetime.now(timezone.utc).isoformat(timespec="seconds"))
    return lines


def _render_csv(table: Table, meta: list[str] | None) -> str:
    out = [f"# {m}" for m in meta] if meta else []
    out.append(",".join(table.columns))
    for row in table.rows:
        out.append(",".join(_f(row.get(c)) for c in table.columns))
    return "\n".join(out) + "\n"


def _render_json(table: Table, rc: RunConfig, argv, meta: bool) -> str:
    doc = {"command": argv, "config": rc.values, "config_sources": rc.sources,
           "config_file": rc.file_text, "columns": list(table.columns), "rows": table.rows,
           "details": table.details, "failed": table.failed}
    if meta:
        doc["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = parse_config(args.config, {k: getattr(args, k) for k in FLAG_KEYS})
        table = COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    meta = None if args.no_meta else _meta_lines(rc, argv, table)
    if args.format == "json":
        text = _render_json(table, rc, argv, not args.no_meta)
    else:
        text = _render_csv(table, meta)
    if args.output:
        path = Path(args.output)
        path.write_text(text)
        if args.format == "csv":
            path.with_suffix(path.suffix + ".json").write_text(
                _render_json(table, rc, argv, not args.no_meta))
    else:
        sys.stdout.write(text)
    if table.failed:
        print(f"error: {table.failed} point(s) failed; partial results written", file=sys.stderr)
        return 2
    return 0
