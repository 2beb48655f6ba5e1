"""Experiment configuration: a flat ``key = value`` file with dotted keys.

Grammar, one entry per line::

    # comment
    [schedule]                # optional section header, prefixes later keys
    seed = 7                  # values are JSON: numbers, true/false, lists, "strings"
    system.kind = doubling    # bare words are read as strings

Keys are unique; ``--set key=value`` overrides use the same value syntax."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable

from .errors import ConfigError

STAGES = ("pressure", "entropy", "gibbs", "lyapunov", "deviate", "rate")
MC_ENGINES = ("monte_carlo", "importance")


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(text: str) -> dict:
    cfg: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if section and not key.startswith(section + "."):
            key = f"{section}.{key}"
        if key in cfg:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        cfg[key] = parse_value(value)
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError("--config", f"no such file {p}")
    return parse_config(p.read_text(encoding="utf-8"))


def apply_overrides(cfg: dict, overrides: Iterable[str]) -> dict:
    out = dict(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "overrides take the form key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def n_schedule(cfg: dict, default_max: int | None = None) -> list:
    if "schedule.n" in cfg:
        ns = [int(n) for n in as_list(cfg["schedule.n"])]
    elif "schedule.nmax" in cfg or default_max is not None:
        top = int(cfg.get("schedule.nmax", default_max))
        lo = int(cfg.get("schedule.nmin", 1))
        ns = list(range(lo, top + 1, int(cfg.get("schedule.nstep", 1))))
    else:
        raise ConfigError("schedule.n", "missing n schedule")
    if not ns:
        raise ConfigError("schedule.n", "schedule is empty")
    return ns


def stages_of(cfg: dict) -> list:
    stages = as_list(cfg.get("pipeline.stages", []))
    for s in stages:
        if s not in STAGES:
            raise ConfigError("pipeline.stages", f"unknown stage {s!r}; known: {', '.join(STAGES)}")
    return stages


def validate(cfg: dict, stages: Iterable[str]) -> None:
    """Checks that do not need to build any object: seeds for Monte Carlo
    stages and nonempty schedules."""
    stages = list(stages)
    mc = any(s in ("entropy", "gibbs") for s in stages)
    mc = mc or ("lyapunov" in stages and cfg.get("lyapunov.mode") == "monte_carlo")
    mc = mc or (any(s in ("deviate", "rate") for s in stages) and cfg.get("deviation.engine") in MC_ENGINES)
    if mc and cfg.get("schedule.seed") is None:
        raise ConfigError("schedule.seed", "a seed is required for Monte Carlo stages")
    seed = cfg.get("schedule.seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("schedule.seed", f"expected a non-negative integer, got {seed!r}")
    if "schedule.n" in cfg and not as_list(cfg["schedule.n"]):
        raise ConfigError("schedule.n", "schedule is empty")
    needs_system = [s for s in stages if s in ("entropy", "gibbs", "deviate", "rate")]
    if "pressure" in stages and "cocycle.matrices" not in cfg:
        needs_system.append("pressure")
    if needs_system and "system.kind" not in cfg:
        raise ConfigError("system.kind", f"missing (needed by {', '.join(needs_system)})")
    if "lyapunov" in stages and "cocycle.matrices" not in cfg:
        raise ConfigError("cocycle.matrices", "missing (needed by lyapunov)")
