"""Command-line entry point.

Every subcommand reads an experiment config (``--config``, plus ``--set`` or
positional ``key=value`` overrides) and writes CSV/JSON to ``--out`` when
given.  Exit codes: 0 success, 1 stage failure, 2 usage, 3 validation."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import (apply_overrides, as_list, config_hash, load_config, n_schedule, stages_of,
                     validate)
from .errors import ArgumentError, CapabilityError, ConfigError

EXIT_OK, EXIT_STAGE, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3


@dataclass
class StageOutput:
    name: str
    header: list
    rows: list
    payload: dict
    text: str
    ok: bool = True
    extra: dict = field(default_factory=dict)     # file suffix -> text


@dataclass
class RunManifest:
    config_hash: str
    version: str
    status: str
    stages: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _system(cfg):
    from .systems import system_from_config
    return system_from_config(cfg)


def _measure(cfg, sys_):
    from .measures import measure_from_config
    return measure_from_config(cfg, sys_)


def _potential(cfg, sys_, prefix="potential"):
    from .potentials import potential_from_config
    return potential_from_config(cfg, sys_, prefix)


def _mistakes(cfg):
    from .mistake import mistake_from_config
    return mistake_from_config(cfg)


def _seed(cfg) -> int:
    return int(cfg.get("schedule.seed", 0))


def _samples(cfg, default):
    return int(cfg.get("schedule.samples", default))


def _eps_list(cfg, default):
    return [float(e) for e in as_list(cfg.get("schedule.eps", default))]


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("-inf" if x < 0 else ("inf" if x > 0 else "nan"))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_pressure(cfg, jobs):
    from .cocycle import cocycle_pressure, spec_from_config
    from .systems import IntervalMap, ShiftSpace
    from .thermo import cylinder_pressure, separated_pressure
    nmax = int(cfg.get("schedule.nmax", max(n_schedule(cfg, 12))))
    if "cocycle.matrices" in cfg and cfg.get("potential.kind", "cocycle_norm") == "cocycle_norm":
        spec = spec_from_config(cfg)
        rows, curves = [], []
        for q in as_list(cfg.get("cocycle.q", 1.0)):
            curve = cocycle_pressure(spec, float(q), nmax)
            curves.append({"q": float(q), "method": curve.method, "flags": curve.flags,
                           "extrapolated": curve.extrapolated, "P_n": curve.values.tolist()})
            rows += [[_num(v) for v in r] for r in curve.csv_rows()]
        text = "\n".join(f"q={c['q']:g}  P_{nmax}={c['P_n'][-1]:.10f}  extrapolated={c['extrapolated']}  [{c['method']}]"
                         for c in curves)
        return StageOutput("pressure", ["q", "n", "P_n", "extrapolated"], rows,
                           {"engine": "exact", "curves": curves}, text)
    sys_ = _system(cfg)
    phi = _potential(cfg, sys_)
    if isinstance(sys_, ShiftSpace):
        est = cylinder_pressure(sys_, phi, nmax)
    elif isinstance(sys_, IntervalMap):
        est = separated_pressure(sys_, phi, nmax, _eps_list(cfg, 0.125)[0])
    else:
        raise CapabilityError(f"no pressure engine for {sys_.name}")
    payload = {k: v for k, v in asdict(est).items() if k != "error_bounds"}
    text = f"{est.method} pressure: P_n[{est.ns[-1]}]={est.values[-1]:.10f}  extrapolated={est.extrapolated}"
    if est.drift is not None:
        text += f"  drift={est.drift:.3g}"
    if est.flags:
        text += f"  flags={est.flags}"
    return StageOutput("pressure", ["n", "logZ_over_n", "drift"], [[_num(v) for v in r] for r in est.csv_rows()],
                       payload, text)


def stage_entropy(cfg, jobs):
    from .mistake import katok_entropy
    sys_ = _system(cfg)
    mu = _measure(cfg, sys_)
    g = _mistakes(cfg)
    ns = n_schedule(cfg, 20)
    eps = sorted(_eps_list(cfg, [0.5, 0.25, 0.125]), reverse=True)
    est = katok_entropy(sys_, mu, g, eps, ns, mode=cfg.get("entropy.mode", "ball_mass"),
                        samples=_samples(cfg, 200), seed=_seed(cfg))
    rows = [[_num(v) for v in r] for r in est.table]
    lines = ["eps         n     covering_rate   ball_rate"]
    lines += [f"{e:<10.6g}  {n:<5d} {c:<15.6f} {b:.6f}" for e, n, c, b in est.table]
    lines.append(f"limits: [{est.lower_limit:.6f}, {est.upper_limit:.6f}]  trend={est.trend}  target={est.target}")
    payload = {"engine": "mc", "samples": est.samples, "seed": est.seed, "geometry": est.geometry,
               "lower_limit": est.lower_limit, "upper_limit": est.upper_limit, "target": est.target,
               "trend": est.trend, "per_eps": {str(k): v for k, v in est.per_eps.items()}}
    return StageOutput("entropy", ["epsilon", "n", "covering_slope", "ball_rate"], rows, payload, "\n".join(lines))


def _pressure_value(cfg, sys_, phi, key):
    if key in cfg:
        return float(cfg[key])
    from .systems import IntervalMap, ShiftSpace
    from .thermo import cylinder_pressure, separated_pressure
    if isinstance(sys_, ShiftSpace):
        est = cylinder_pressure(sys_, phi, 12)
    elif isinstance(sys_, IntervalMap):
        est = separated_pressure(sys_, phi, 8, 0.125)
    else:
        raise ConfigError(key, "required for this system")
    return est.extrapolated if est.extrapolated is not None else est.values[-1]


def stage_gibbs(cfg, jobs):
    from .thermo import weak_gibbs_check
    sys_ = _system(cfg)
    mu = _measure(cfg, sys_)
    phi = _potential(cfg, sys_)
    P = _pressure_value(cfg, sys_, phi, "gibbs.pressure")
    rep = weak_gibbs_check(sys_, phi, mu, P, _samples(cfg, 200), n_schedule(cfg, 25),
                           _eps_list(cfg, 0.1)[0], seed=_seed(cfg), g=_mistakes(cfg))
    rows = [[n, _num(k), _num(s)] for n, k, s in rep.csv_rows()]
    payload = {"engine": "mc", "P": P, "verdict": rep.verdict, "growth": rep.growth, "trend": rep.trend,
               "K_bound": rep.K_bound, "K_n": rep.K, "samples": rep.samples, "seed": rep.seed,
               "coverage": rep.coverage, "excluded": rep.excluded}
    text = (f"verdict: {rep.verdict}  slope(log K_n)={rep.growth:.4g}  slope((1/n) log K_n)={rep.trend:.4g}\n"
            f"{rep.coverage}")
    return StageOutput("gibbs", ["n", "K_n", "slope"], rows, payload, text)


def stage_lyapunov(cfg, jobs):
    from .cocycle import lyapunov, spec_from_config
    from .measures import Bernoulli, measure_from_config
    spec = spec_from_config(cfg)
    if "measure.kind" in cfg:
        mu = measure_from_config(cfg, None)
    else:
        mu = Bernoulli(np.full(spec.symbols, 1.0 / spec.symbols))
    mode = cfg.get("lyapunov.mode", "cylinder_exact")
    n = int(cfg.get("schedule.nmax", 16))
    est = lyapunov(spec, mu, mode, n, _samples(cfg, 10_000), _seed(cfg))
    tag = "exact" if mode == "cylinder_exact" else "mc"
    return StageOutput("lyapunov", ["n", "value", "stderr", "engine"], [[est.n, _num(est.value), _num(est.stderr), tag]],
                       {"engine": tag, **asdict(est)}, str(est))


def _query(cfg, sys_=None):
    from .deviation import DeviationQuery
    sys_ = sys_ or _system(cfg)
    mu = _measure(cfg, sys_)
    prefix = "observable" if "observable.kind" in cfg else "potential"
    obs = _potential(cfg, sys_, prefix)
    if "deviation.c" not in cfg:
        raise ConfigError("deviation.c", "missing threshold")
    return DeviationQuery(sys_, obs, mu, float(cfg["deviation.c"]), cfg.get("deviation.mode", "at_least"),
                          n_schedule(cfg), cfg.get("deviation.center"), cfg.get("deviation.center_provenance"),
                          bool(cfg.get("deviation.strict", False)))


def stage_deviate(cfg, jobs):
    from .deviation import deviation_measure
    q = _query(cfg)
    engine = cfg.get("deviation.engine", "exact")
    samples, seed = _samples(cfg, 100_000), _seed(cfg)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        series = list(pool.map(lambda n: deviation_measure(q, n, engine, samples, seed), q.ns))
    rows = [[s.n, _num(s.value), _num(s.ci_low), _num(s.ci_high), s.engine] for s in series]
    plot = io.StringIO()
    w = csv.writer(plot, lineterminator="\n")
    w.writerow(["n", "log_measure"])
    for s in series:
        w.writerow([s.n, _num(s.log_measure)])
    text = "\n".join(f"n={s.n:<5d} m(U_n)={s.value:.6e}  [{s.ci_low:.3e}, {s.ci_high:.3e}]  ({s.engine})"
                     + (f"  {s.flags}" if s.flags else "") for s in series)
    return StageOutput("deviate", ["n", "measure", "ci_low", "ci_high", "engine"], rows,
                       {"query": q.describe(), "series": [asdict(s) for s in series]}, text,
                       extra={"_plot.csv": plot.getvalue()})


def stage_rate(cfg, jobs):
    from .deviation import INCOMPLETE, ldp_sandwich
    from .measures import coding_symbols
    from .thermo import BernoulliFamily
    sys_ = _system(cfg)
    q = _query(cfg, sys_)
    gibbs = _potential(cfg, sys_, "potential")
    P = float(cfg.get("deviation.pressure", 0.0))
    fam = BernoulliFamily(coding_symbols(sys_))
    kappa = cfg.get("deviation.kappa")
    rep = ldp_sandwich(q, gibbs, P, fam, cfg.get("deviation.engine", "exact"), _samples(cfg, 100_000), _seed(cfg),
                       None if kappa is None else float(kappa), float(cfg.get("deviation.tolerance", 0.015)))
    rows = [r.split(",") for r in rep.to_csv().strip().splitlines()[1:]]
    return StageOutput("rate", ["n", "measure", "ci_low", "ci_high", "engine"], rows, rep.to_dict(),
                       rep.summary(), ok=rep.verdict != INCOMPLETE, extra={"_plot.csv": rep.plot_data()})


STAGE_FUNCS = {
    "pressure": stage_pressure,
    "entropy": stage_entropy,
    "gibbs": stage_gibbs,
    "lyapunov": stage_lyapunov,
    "deviate": stage_deviate,
    "rate": stage_rate,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _csv_text(out: StageOutput) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.header)
    w.writerows(out.rows)
    return buf.getvalue()


def write_stage(out: StageOutput, directory: Path, fmt: str) -> list:
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    if fmt in ("csv", "both"):
        p = directory / f"{out.name}.csv"
        p.write_text(_csv_text(out), encoding="utf-8")
        files.append(p.name)
        for suffix, text in out.extra.items():
            p = directory / f"{out.name}{suffix}"
            p.write_text(text, encoding="utf-8")
            files.append(p.name)
    if fmt in ("json", "both"):
        p = directory / f"{out.name}.json"
        p.write_text(json.dumps(_jsonable(out.payload), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        files.append(p.name)
    return files


def run_stages(cfg: dict, stages, out_dir: Path | None, fmt: str, jobs: int, echo=print) -> RunManifest:
    """Execute stages in order; failures are recorded and later stages still run."""
    manifest = RunManifest(config_hash(cfg), __version__, "complete")
    for name in stages:
        t = time.perf_counter()
        entry = {"name": name, "status": "ok", "seconds": None, "files": [], "error": None}
        try:
            out = STAGE_FUNCS[name](cfg, jobs)
            echo(out.text)
            if out_dir is not None:
                entry["files"] = write_stage(out, out_dir, fmt)
            elif fmt == "json":
                echo(json.dumps(_jsonable(out.payload), indent=2, ensure_ascii=False))
            elif fmt == "csv":
                echo(_csv_text(out), end="")
            if not out.ok:
                entry["status"] = "incomplete"
                manifest.status = "incomplete"
        except (ConfigError, ArgumentError):
            raise
        except Exception as exc:          # any other failure ends this stage only
            entry["status"] = "failed"
            entry["error"] = f"{type(exc).__name__}: {exc}"
            manifest.status = "incomplete"
            echo(f"stage {name} failed: {entry['error']}", file=sys.stderr)
        entry["seconds"] = round(time.perf_counter() - t, 3)
        manifest.stages.append(entry)
        manifest.files += entry["files"]
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
        manifest.files.append("manifest.json")
    return manifest


def run(config_path, overrides=(), out_dir=None, fmt="both", jobs=None) -> RunManifest:
    """Run the pipeline declared by ``pipeline.stages`` in a config file."""
    cfg = apply_overrides(load_config(config_path), overrides)
    stages = stages_of(cfg)
    if not stages:
        raise ConfigError("pipeline.stages", "no stages requested")
    validate(cfg, stages)
    out = Path(out_dir or cfg.get("output.dir", "out"))
    return run_stages(cfg, stages, out, cfg.get("output.format", fmt), jobs or os.cpu_count() or 1,
                      echo=lambda *a, **k: None)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file (key = value lines)")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--samples", type=int, metavar="N")
    common.add_argument("--nmax", type=int, metavar="N")
    common.add_argument("--eps", type=float, metavar="F")
    common.add_argument("--out", metavar="DIR", help="write CSV/JSON outputs and a manifest here")
    common.add_argument("--jobs", type=int, metavar="N", default=None)
    common.add_argument("--format", choices=("csv", "json", "both"), default=None)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("assignments", nargs="*", metavar="KEY=VALUE", help="more config overrides")

    parser = argparse.ArgumentParser(prog="nonadditive", description="Non-additive thermodynamic formalism toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "pressure": "pressure curves (cocycles, shifts, interval maps)",
        "entropy": "mistake Brin-Katok / Katok entropy table",
        "gibbs": "weak-Gibbs constants K_n",
        "lyapunov": "top Lyapunov exponent of a cocycle",
        "deviate": "deviation-set measures over the n schedule",
        "rate": "fitted rate with variational bounds and verdict",
        "verify": "run the invariant suite",
        "run": "run the stages listed in pipeline.stages",
    }
    for name, h in helps.items():
        sub.add_parser(name, parents=[common], help=h)
    return parser


def _config_from_args(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    cfg = apply_overrides(cfg, list(args.set) + list(args.assignments))
    if args.seed is not None:
        cfg["schedule.seed"] = args.seed
    if args.samples is not None:
        cfg["schedule.samples"] = args.samples
    if args.nmax is not None:
        cfg["schedule.nmax"] = args.nmax
        if "schedule.n" in cfg:
            cfg["schedule.n"] = [n for n in as_list(cfg["schedule.n"]) if int(n) <= args.nmax]
    if args.eps is not None:
        cfg["schedule.eps"] = args.eps
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    jobs = args.jobs or os.cpu_count() or 1
    try:
        cfg = _config_from_args(args)
        if args.command == "verify":
            from .verify import run_suite
            results = run_suite()
            for r in results:
                print(r.line())
            failed = sum(not r.passed for r in results)
            print(f"{len(results) - failed}/{len(results)} checks passed")
            return EXIT_OK if failed == 0 else EXIT_STAGE
        if args.command == "run":
            if not args.config:
                raise ConfigError("--config", "run needs a config file")
            stages = stages_of(cfg)
            if not stages:
                raise ConfigError("pipeline.stages", "no stages requested")
        else:
            stages = [args.command]
        validate(cfg, stages)
        out_dir = Path(args.out or cfg["output.dir"]) if (args.out or "output.dir" in cfg) else None
        fmt = args.format or cfg.get("output.format", "both" if out_dir else "text")
        manifest = run_stages(cfg, stages, out_dir, fmt, jobs)
    except (ConfigError, ArgumentError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK if manifest.status == "complete" else EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
