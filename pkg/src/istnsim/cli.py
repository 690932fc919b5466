"""Command-line runner: ``istnsim run|validate|oracle``."""

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .baselines import METHODS
from .oracles import ORACLES, run_oracle
from .scenario import ParamError, SystemParams, coerce_field, validate_params

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

_EXPERIMENT_KEYS = ("name", "sweep_var", "values", "min", "max", "points", "scale", "seeds",
                    "master_seed", "methods", "workers")


@dataclass
class RunConfig:
    params: SystemParams
    experiment: str
    sweep_var: str
    values: tuple
    seeds: int
    master_seed: int = 0
    methods: tuple = None
    workers: int = 1


def _sweep_values(sec, var):
    if "values" in sec:
        raw = [v for v in sec["values"].replace(",", " ").split() if v]
        return tuple(coerce_field(var, v) for v in raw)
    try:
        lo, hi = float(sec["min"]), float(sec["max"])
        points = int(sec.get("points", "1"))
    except KeyError as e:
        raise ParamError([f"sweep needs 'values' or 'min'/'max' (missing {e.args[0]})"]) from None
    except ValueError as e:
        raise ParamError([f"bad sweep bound: {e}"]) from None
    if points < 1:
        raise ParamError(["points must be at least 1"])
    scale = sec.get("scale", "linear")
    if scale == "linear":
        pts = np.linspace(lo, hi, points)
    elif scale == "log":
        if lo <= 0 or hi <= 0:
            raise ParamError(["log sweep needs positive min and max"])
        pts = np.geomspace(lo, hi, points)
    else:
        raise ParamError([f"scale must be linear or log, not {scale!r}"])
    return tuple(coerce_field(var, repr(float(v))) for v in pts)


def parse_config(text, overrides=()):
    """Build a RunConfig from INI ``text`` plus ``key=value`` overrides."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ParamError([f"config syntax: {e}"]) from None
    params = dict(cp["params"]) if cp.has_section("params") else {}
    exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep:
            raise ParamError([f"override {item!r} is not key=value"])
        if key in SystemParams.__dataclass_fields__:
            params[key] = value.strip()
        elif key in _EXPERIMENT_KEYS:
            exp[key] = value.strip()
        else:
            raise ParamError([f"unknown override field {key}"])
    bad = [k for k in exp if k not in _EXPERIMENT_KEYS]
    if bad:
        raise ParamError([f"unknown experiment field {k}" for k in bad])
    kw = {k: coerce_field(k, v) for k, v in params.items()}
    sp = validate_params(SystemParams(**kw))
    name = exp.get("name")
    if name not in pipeline.EXPERIMENTS:
        raise ParamError([f"unknown experiment {name!r}"])
    var = exp.get("sweep_var")
    if var not in SystemParams.__dataclass_fields__:
        raise ParamError([f"sweep_var {var!r} is not a parameter"])
    values = _sweep_values(exp, var)
    for v in values:
        validate_params(sp.replace(**{var: v}))
    try:
        seeds = int(exp.get("seeds", "1"))
        master = int(exp.get("master_seed", str(sp.rng_seed)))
        workers = int(exp.get("workers", "1"))
    except ValueError as e:
        raise ParamError([f"bad integer: {e}"]) from None
    if seeds < 1:
        raise ParamError(["seeds must be at least 1"])
    if workers < 1:
        raise ParamError(["workers must be at least 1"])
    methods = None
    if exp.get("methods"):
        methods = tuple(m for m in exp["methods"].replace(",", " ").split() if m)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ParamError([f"unknown method {m!r}" for m in unknown])
    return RunConfig(sp, name, var, values, seeds, master, methods, workers)


def source_digest():
    """Hash of the package sources, recorded as the code version."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for path in sorted(root.rglob("*")):
        if path.suffix in (".py", ".pyx"):
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()[:16]


def manifest_text(cfg):
    """Resolved configuration; itself a valid config for ``run``."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["params"] = {f.name: repr(getattr(cfg.params, f.name))
                    for f in dataclasses.fields(SystemParams)}
    cp["experiment"] = {
        "name": cfg.experiment, "sweep_var": cfg.sweep_var,
        "values": ", ".join(repr(v) for v in cfg.values), "seeds": str(cfg.seeds),
        "master_seed": str(cfg.master_seed), "workers": str(cfg.workers),
    }
    if cfg.methods:
        cp["experiment"]["methods"] = ", ".join(cfg.methods)
    buf = io.StringIO()
    buf.write(f"# istnsim {__version__} source {source_digest()}\n")
    cp.write(buf)
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def run(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    res = pipeline.run_experiment(cfg.experiment, cfg.params, cfg.sweep_var, cfg.values,
                                  cfg.seeds, cfg.methods, cfg.master_seed, cfg.workers)
    write_csv(out / "results.csv", res.rows, pipeline.COLUMNS)
    if res.diagnostics:
        write_csv(out / "diagnostics.csv", res.diagnostics, tuple(res.diagnostics[0]))
    (out / "manifest").write_text(manifest_text(cfg))
    return res


def _parser():
    ap = argparse.ArgumentParser(prog="istnsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config_path", nargs="?")
        p.add_argument("--config", dest="config_opt")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seeds", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", default="runs/latest")
    p = sub.add_parser("oracle")
    p.add_argument("name", choices=["all", *ORACLES])
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "oracle":
        results = run_oracle(args.name)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.ok for r in results) else EXIT_RUNTIME
    path = args.config_opt or args.config_path
    try:
        if not path:
            raise ParamError(["no config given"])
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ParamError([f"cannot read {path}: {e.strerror}"]) from None
        extra = list(args.override)
        if args.seeds is not None:
            extra.append(f"seeds={args.seeds}")
        if args.workers is not None:
            extra.append(f"workers={args.workers}")
        cfg = parse_config(text, extra)
    except ParamError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {cfg.experiment} over {cfg.sweep_var} ({len(cfg.values)} points, "
              f"{cfg.seeds} seeds)")
        return EXIT_OK
    try:
        run(cfg, args.out)
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error in {cfg.experiment}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {Path(args.out) / 'results.csv'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
