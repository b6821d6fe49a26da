"""Command-line entry point wiring measures, seeds, budgets and reports.

Subcommands:

  verify-bounds         run the inequality battery on a measure
  simulate-follmer      bridge ensemble + martingale/localization diagnostics
  decompose             constructive decompositions (--theorem dim|uncor)
  transport             Wasserstein distance between two inputs
  counterexample-sweep  family sweeps with analytic and measured columns
  probe-question1       exploratory discrete-mixture fit

Common flags: --config FILE, --seed N, --threads N, --strict, --out PATH,
--format json|csv|both, --figures.  Outputs are written atomically; the
only nondeterministic byte in any output is the timestamp header, so two
runs with the same seed produce identical content otherwise.

Exit codes: 0 success, 1 configuration/validation error, 2 when --strict
is set and some inequality with satisfied preconditions fails to hold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import counterex as counterex_mod
from . import decompose as decompose_mod
from . import follmer as follmer_mod
from . import gaussmix
from . import transport as transport_mod
from .errors import ConfigError, LsiLabError
from .functionals import Budget
from .rng import DEFAULT_SEED, stream


@dataclass
class ExperimentConfig:
    command: str
    measure: dict | None = None
    seed: int = DEFAULT_SEED
    threads: int = 0
    strict: bool = False
    out: str | None = None
    format: str = "both"
    figures: bool = False
    paths: int = 10_000
    steps: int = 512
    epsilon: float = 1e-3
    quad_tol: float = 1e-8
    samples: int = 1_000_000
    extra: dict = field(default_factory=dict)

    def budget(self) -> Budget:
        return Budget(quad_tol=self.quad_tol, mc_samples=self.samples, seed=self.seed)


# ----------------------------------------------------------------------
# parsing helpers
# ----------------------------------------------------------------------

def _load_json_arg(text: str):
    """Interpret an argument as inline JSON or as a path to a JSON file."""
    text = text.strip()
    if text.startswith("{") or text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid inline JSON (line {exc.lineno}, col {exc.colno}): "
                              f"{exc.msg}") from exc
    path = Path(text)
    if not path.exists():
        raise ConfigError(f"measure file not found: {text}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{text}: invalid JSON at line {exc.lineno}, col {exc.colno}: "
                          f"{exc.msg}") from exc


def parse_measure(obj) -> gaussmix.GaussianMixture:
    if not isinstance(obj, dict):
        raise ConfigError("measure must be a JSON object")
    try:
        if "family" in obj:
            return counterex_mod.expand_measure_json(obj)
        return gaussmix.from_json_obj(obj)
    except LsiLabError as exc:
        raise ConfigError(f"invalid measure: {exc}") from exc


# ----------------------------------------------------------------------
# output writers (atomic, timestamp isolated)
# ----------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _atomic_write(path: Path, data: str | bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with tempfile.NamedTemporaryFile(mode, dir=path.parent, delete=False,
                                     suffix=".tmp") as tmp:
        tmp.write(data)
        tmp_name = tmp.name
    os.replace(tmp_name, path)


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_json_output(path: Path, payload: dict):
    body = {"timestamp": _timestamp()}
    body.update(_jsonable(payload))
    _atomic_write(path, json.dumps(body, indent=2) + "\n")


def write_csv_output(path: Path, columns, rows, meta: dict | None = None):
    buf = io.StringIO()
    header = {"timestamp": _timestamp()}
    header.update(_jsonable(meta or {}))
    buf.write("# " + json.dumps(header) + "\n")
    writer = csv.writer(buf)
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else v for v in _jsonable(list(row))])
    _atomic_write(path, buf.getvalue())


# ----------------------------------------------------------------------
# command implementations
# ----------------------------------------------------------------------

def _emit(config: ExperimentConfig, payload: dict, columns=None, rows=None,
          meta=None, figure_fn=None):
    wrote = []
    if config.out:
        base = Path(config.out)
        if config.format in ("json", "both"):
            write_json_output(base.with_suffix(".json"), payload)
            wrote.append(str(base.with_suffix(".json")))
        if config.format in ("csv", "both") and columns is not None:
            write_csv_output(base.with_suffix(".csv"), columns, rows or [], meta)
            wrote.append(str(base.with_suffix(".csv")))
        if config.figures and figure_fn is not None:
            wrote.append(figure_fn(base.with_suffix(".png")))
    else:
        print(json.dumps(_jsonable(payload), indent=2))
    return wrote


def cmd_verify_bounds(config: ExperimentConfig) -> int:
    mix = parse_measure(config.measure)
    reports = bounds_mod.standard_battery(mix, config.budget())
    payload = {"command": "verify-bounds", "seed": config.seed,
               "measure": mix.to_json_obj(),
               "reports": [r.to_json_obj() for r in reports]}
    rows = [r.to_csv_row() for r in reports]

    def fig(path):
        from .report import render_bound_reports
        return render_bound_reports(reports, path)

    wrote = _emit(config, payload, bounds_mod.CSV_COLUMNS, rows,
                  {"command": "verify-bounds", "seed": config.seed}, fig)
    failures = [r.name for r in reports if r.preconditions_met and not r.holds]
    print(f"verify-bounds: {len(reports)} checks, "
          f"{len(failures)} failed{': ' + ','.join(failures) if failures else ''}"
          f"{' -> ' + ', '.join(wrote) if wrote else ''}")
    if config.strict and failures:
        return 2
    return 0


def cmd_simulate_follmer(config: ExperimentConfig) -> int:
    mix = parse_measure(config.measure)
    ens = follmer_mod.simulate_ensemble(mix, config.paths, config.steps,
                                        config.epsilon, config.seed,
                                        config.extra.get("scheme", "uniform"))
    energy = follmer_mod.energy_identities(ens)
    diag = follmer_mod.martingale_diagnostics(ens, mix)
    loc = None
    if ens.A is not None:
        loc = follmer_mod.localization_checks(ens, mix, direct_times=0)
    payload = {
        "command": "simulate-follmer", "seed": config.seed,
        "paths": config.paths, "steps": config.steps, "epsilon": config.epsilon,
        "entropy_path": energy.entropy_path.to_json_obj(),
        "deficit_path": energy.deficit_path.to_json_obj(),
        "monotonicity_violations": diag.monotonicity_violations,
        "max_z_mean_drift": float(np.max(diag.z_mean_drift)),
        "dat_residual_median": loc.dat_residual_median if loc else None,
        "defrep_lhs": loc.defrep_lhs.to_json_obj() if loc else None,
        "defrep_rhs": loc.defrep_rhs.to_json_obj() if loc else None,
        "defrep_holds": loc.defrep_holds if loc else None,
    }

    def fig(path):
        from .report import render_follmer_diagnostics
        return render_follmer_diagnostics(diag, path)

    wrote = _emit(config, payload, follmer_mod.DIAGNOSTIC_COLUMNS, diag.to_rows(),
                  {"command": "simulate-follmer", "seed": config.seed}, fig)
    print(f"simulate-follmer: entropy_path={energy.entropy_path.value:.6g} "
          f"deficit_path={energy.deficit_path.value:.6g}"
          f"{' -> ' + ', '.join(wrote) if wrote else ''}")
    return 0


def cmd_decompose(config: ExperimentConfig) -> int:
    mix = parse_measure(config.measure)
    theorem = config.extra.get("theorem", "dim")
    ens = follmer_mod.simulate_ensemble(mix, config.paths, config.steps,
                                        config.epsilon, config.seed)
    budget = config.budget()
    if theorem == "dim":
        res = decompose_mod.theorem_dim(mix, ens, budget)
        payload = {
            "command": "decompose", "theorem": "dim", "seed": config.seed,
            "t_star": res.t_star,
            "w2_estimate": res.w2_estimate.to_json_obj(),
            "bound_report": res.bound_report.to_json_obj(),
            "chain_report": res.chain_report.to_json_obj() if res.chain_report else None,
        }
        samples = {"nu": res.nu_samples.points}
        holds = res.bound_report.holds
    elif theorem == "uncor":
        res = decompose_mod.theorem_uncor(mix, ens, budget)
        payload = {"command": "decompose", "theorem": "uncor", "seed": config.seed}
        payload.update(res.to_json_obj())
        samples = {"y": res.y_samples.points, "w": res.w_samples.points,
                   "z": res.z_samples.points}
        holds = res.w2_report.holds
    else:
        raise ConfigError(f"unknown theorem {theorem!r} (want dim or uncor)")

    rows = None
    columns = None
    if config.extra.get("dump_samples"):
        names = sorted(samples)
        columns = [f"{n}{i}" for n in names for i in range(mix.dim)]
        blocks = [samples[n] for n in names]
        count = min(len(b) for b in blocks)
        rows = np.hstack([b[:count] for b in blocks]).tolist()

    def fig(path):
        from .report import render_decomposition_samples
        return render_decomposition_samples(samples, path)

    wrote = _emit(config, payload, columns, rows,
                  {"command": "decompose", "theorem": theorem, "seed": config.seed}, fig)
    print(f"decompose --theorem {theorem}: holds={holds}"
          f"{' -> ' + ', '.join(wrote) if wrote else ''}")
    if config.strict and not holds:
        return 2
    return 0


def _load_point_cloud(spec_text: str, count: int, seed: int, tag: str):
    path = Path(spec_text)
    if path.exists() and path.suffix == ".csv":
        pts = np.loadtxt(path, delimiter=",", ndmin=2)
        return transport_mod.EmpiricalMeasure(pts)
    obj = _load_json_arg(spec_text)
    mix = parse_measure(obj)
    return transport_mod.EmpiricalMeasure(mix.sample(count, stream(seed, tag)))


def cmd_transport(config: ExperimentConfig) -> int:
    a = _load_point_cloud(config.extra["input_a"], config.extra.get("points", 4096),
                          config.seed, "transport_a")
    b = _load_point_cloud(config.extra["input_b"], config.extra.get("points", 4096),
                          config.seed, "transport_b")
    p = config.extra.get("p", 2.0)
    method = config.extra.get("method", "auto")
    if a.count != b.count:
        raise ConfigError(f"sample counts differ: {a.count} vs {b.count}")
    if method == "sliced":
        est = transport_mod.w2_sliced(a, b, config.extra.get("projections", 64),
                                      stream(config.seed, "sliced"))
        result = {"method": "sliced", "value": est.value, "abs_error": est.abs_error}
    else:
        if method == "auto":
            method = "1d_exact" if a.dim == 1 else "assignment"
        if method == "1d_exact":
            val = transport_mod.wp_1d_exact(a, b, p)
        elif method == "assignment":
            val = transport_mod.wp_assignment(a, b, p)
        else:
            raise ConfigError(f"unknown transport method {method!r}")
        result = {"method": method, "value": val, "abs_error": 0.0}
    payload = {"command": "transport", "p": p, "seed": config.seed, **result}
    wrote = _emit(config, payload, ["method", "value", "abs_error"],
                  [[result["method"], result["value"], result["abs_error"]]],
                  {"command": "transport", "seed": config.seed})
    print(f"transport: W_{p:g} = {result['value']:.6g} ({result['method']})"
          f"{' -> ' + ', '.join(wrote) if wrote else ''}")
    return 0


def cmd_counterexample_sweep(config: ExperimentConfig) -> int:
    family = config.extra["family"]
    k_list = config.extra["k_list"]
    options = counterex_mod.SweepOptions(
        measure_deficit=config.extra.get("measure_deficit", False),
        measure_transport=config.extra.get("measure_transport", False),
        points=config.extra.get("points", 2048),
        reps=config.extra.get("reps", 5),
        seed=config.seed,
        budget=config.budget(),
    )
    if config.threads and config.threads > 1 and len(k_list) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = [pool.submit(counterex_mod.sweep, family, [k], options)
                       for k in sorted(k_list)]
            rows = [f.result()[0] for f in futures]
    else:
        rows = counterex_mod.sweep(family, k_list, options)
    payload = {"command": "counterexample-sweep", "family": family,
               "seed": config.seed, "rows": rows}
    csv_rows = [[row[c] for c in counterex_mod.SWEEP_COLUMNS] for row in rows]

    def fig(path):
        from .report import render_sweep
        return render_sweep(rows, family, path)

    wrote = _emit(config, payload, counterex_mod.SWEEP_COLUMNS, csv_rows,
                  {"command": "counterexample-sweep", "family": family,
                   "seed": config.seed}, fig)
    print(f"counterexample-sweep: {family}, {len(rows)} rows"
          f"{' -> ' + ', '.join(wrote) if wrote else ''}")
    return 0


def cmd_probe_question1(config: ExperimentConfig) -> int:
    mix = parse_measure(config.measure)
    res = counterex_mod.question1_probe(
        mix, config.extra.get("support", 2), config.budget(),
        n_samples=config.extra.get("points", 2048), seed=config.seed)
    payload = {
        "command": "probe-question1", "seed": config.seed, "exploratory": True,
        "locations": res.locations, "weights": res.weights,
        "shannon_entropy": res.shannon_entropy, "w2_squared": res.w2_squared,
        "deficit": res.deficit.to_json_obj(),
        "implied_constant": res.implied_constant,
    }
    wrote = _emit(config, payload,
                  ["shannon_entropy", "w2_squared", "deficit", "implied_constant"],
                  [[res.shannon_entropy, res.w2_squared, res.deficit.value,
                    res.implied_constant]],
                  {"command": "probe-question1", "seed": config.seed})
    print(f"probe-question1: S={res.shannon_entropy:.6g} W2^2={res.w2_squared:.6g} "
          f"implied constant {res.implied_constant:.4g} (exploratory)"
          f"{' -> ' + ', '.join(wrote) if wrote else ''}")
    return 0


COMMANDS = {
    "verify-bounds": cmd_verify_bounds,
    "simulate-follmer": cmd_simulate_follmer,
    "decompose": cmd_decompose,
    "transport": cmd_transport,
    "counterexample-sweep": cmd_counterexample_sweep,
    "probe-question1": cmd_probe_question1,
}


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit code."""
    if config.command not in COMMANDS:
        raise ConfigError(f"unknown command {config.command!r}")
    if config.format not in ("json", "csv", "both"):
        raise ConfigError(f"unknown format {config.format!r}")
    for name in ("paths", "steps", "samples"):
        if getattr(config, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if config.quad_tol <= 0:
        raise ConfigError("quad_tol must be positive")
    return COMMANDS[config.command](config)


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsilab",
                                     description="log-Sobolev deficit laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=None,
                       help=f"RNG seed (default {DEFAULT_SEED})")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--strict", action="store_true", default=None)
        p.add_argument("--out", default=None, help="output base path (no extension)")
        p.add_argument("--format", choices=["json", "csv", "both"], default=None)
        p.add_argument("--figures", action="store_true", default=None)
        p.add_argument("--quad-tol", type=float, default=None)
        p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("verify-bounds", help="run the inequality battery")
    common(p)
    p.add_argument("--measure", required=False, help="mixture JSON (inline or file)")

    p = sub.add_parser("simulate-follmer", help="bridge ensemble diagnostics")
    common(p)
    p.add_argument("--measure", required=False)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--scheme", choices=["uniform", "geometric"], default="uniform")

    p = sub.add_parser("decompose", help="constructive decompositions")
    common(p)
    p.add_argument("--measure", required=False)
    p.add_argument("--theorem", choices=["dim", "uncor"], required=True)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--dump-samples", action="store_true")

    p = sub.add_parser("transport", help="Wasserstein distance of two inputs")
    common(p)
    p.add_argument("--input-a", required=True, help="measure JSON or sample CSV")
    p.add_argument("--input-b", required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--points", type=int, default=4096)
    p.add_argument("--method", choices=["auto", "1d_exact", "assignment", "sliced"],
                   default="auto")
    p.add_argument("--projections", type=int, default=64)

    p = sub.add_parser("counterexample-sweep", help="family scaling sweeps")
    common(p)
    p.add_argument("--family", choices=sorted(counterex_mod.FAMILIES), required=True)
    p.add_argument("--k", type=float, nargs="+", required=True, dest="k_list")
    p.add_argument("--measure-deficit", action="store_true")
    p.add_argument("--measure-transport", action="store_true")
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--reps", type=int, default=5)

    p = sub.add_parser("probe-question1", help="exploratory discrete fit")
    common(p)
    p.add_argument("--measure", required=False)
    p.add_argument("--support", type=int, default=2)
    p.add_argument("--points", type=int, default=2048)

    return parser


_CONFIG_KEYS = ("measure", "seed", "threads", "strict", "out", "format", "figures",
                "paths", "steps", "epsilon", "quad_tol", "samples")
_DEFAULTS = {"seed": DEFAULT_SEED, "threads": 0, "strict": False, "format": "both",
             "figures": False, "paths": 10_000, "steps": 512, "epsilon": 1e-3,
             "quad_tol": 1e-8, "samples": 1_000_000}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg = {}
    if getattr(args, "config", None):
        loaded = _load_json_arg(args.config)
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = loaded

    def pick(name, fallback):
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            return cli_val
        if name in file_cfg:
            return file_cfg[name]
        return fallback

    measure = pick("measure", None)
    if isinstance(measure, str):
        measure = _load_json_arg(measure)

    extra = {}
    for key in ("theorem", "dump_samples", "input_a", "input_b", "p", "points",
                "method", "projections", "family", "k_list", "measure_deficit",
                "measure_transport", "reps", "support", "scheme"):
        if hasattr(args, key):
            val = getattr(args, key)
            if val is not None:
                extra[key] = val
        elif key in file_cfg:
            extra[key] = file_cfg[key]

    cfg = ExperimentConfig(
        command=args.command,
        measure=measure,
        seed=int(pick("seed", _DEFAULTS["seed"])),
        threads=int(pick("threads", _DEFAULTS["threads"])),
        strict=bool(pick("strict", _DEFAULTS["strict"])),
        out=pick("out", None),
        format=pick("format", _DEFAULTS["format"]),
        figures=bool(pick("figures", _DEFAULTS["figures"])),
        paths=int(pick("paths", _DEFAULTS["paths"])),
        steps=int(pick("steps", _DEFAULTS["steps"])),
        epsilon=float(pick("epsilon", _DEFAULTS["epsilon"])),
        quad_tol=float(pick("quad_tol", _DEFAULTS["quad_tol"])),
        samples=int(pick("samples", _DEFAULTS["samples"])),
        extra=extra,
    )
    needs_measure = args.command in ("verify-bounds", "simulate-follmer",
                                     "decompose", "probe-question1")
    if needs_measure and cfg.measure is None:
        raise ConfigError(f"{args.command} requires --measure (flag or config file)")
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        return run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LsiLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
