"""Command-line experiment harness.

    sysbath run <config.json> [--output DIR]
    sysbath validate <config.json>
    sysbath list-experiments

The config is a JSON object; see README for the schema.  The thread count
for sweep points comes from the SYSBATH_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .errors import ConfigError, SysbathError
from .experiments import EXPERIMENTS
from .models import HamiltonianModel, model_from_spec

THREADS_ENV = "SYSBATH_THREADS"


class ParamsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: Optional[float] = Field(None, gt=0)
    alpha_sigma: Optional[float] = Field(None, gt=0)
    sigma: float = Field(2.0, gt=0)
    T: Optional[float] = Field(None, gt=0)
    beta: Union[Literal["inf"], float] = 1.0
    omega_max: Optional[float] = Field(None, gt=0)
    freq: Literal["uniform", "gaussian_x"] = "uniform"
    trotter_tau: float = Field(0.05, gt=0)
    sampling: Literal["full_average", "monte_carlo"] = "full_average"
    n_samples: int = Field(256, ge=1)
    variant: Literal["exact", "trotter"] = "exact"
    epsilon: float = Field(0.01, gt=0, lt=2)
    steps: int = Field(200, ge=1)
    max_steps: int = Field(10**6, ge=1)

    @field_validator("beta")
    @classmethod
    def _beta(cls, v):
        if v != "inf" and (not math.isfinite(v) or v < 0):
            raise ValueError("beta must be >= 0 or \"inf\"")
        return v

    @model_validator(mode="after")
    def _coupling(self):
        if self.alpha is None and self.alpha_sigma is None:
            raise ValueError("one of alpha or alpha_sigma is required")
        if self.alpha is not None and self.alpha_sigma is not None:
            raise ValueError("give alpha or alpha_sigma, not both")
        return self


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: str
    model: Optional[Union[dict, str]] = None
    params: dict = Field(default_factory=dict)
    sweep: Optional[dict[str, list]] = None
    output: Optional[str] = None
    seed: int = Field(0, ge=0)

    @field_validator("experiment")
    @classmethod
    def _known(cls, v):
        if v not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {v!r}; see list-experiments")
        return v


def _pydantic_to_config_error(exc: ValidationError, prefix: str = "") -> ConfigError:
    err = exc.errors()[0]
    loc = ".".join(str(x) for x in err["loc"] if not str(x).startswith("function-after"))
    path = ".".join(p for p in (prefix, loc) if p) or prefix or "config"
    return ConfigError(path, err["msg"])


def _merge(defaults: dict, override: dict) -> dict:
    out = dict(defaults)
    if "alpha" in override or "alpha_sigma" in override:
        out.pop("alpha", None)
        out.pop("alpha_sigma", None)
    out.update(override)
    return out


def _validate_params(d: dict, path: str) -> dict:
    try:
        return ParamsConfig(**d).model_dump()
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = [str(x) for x in err["loc"]]
        # model-level errors have no field location; attribute them to alpha
        field = loc[0] if loc else "alpha"
        raise ConfigError(f"{path}.{field}" if path else field, err["msg"]) from None


class ResolvedConfig:
    """A validated config with experiment defaults filled in."""

    def __init__(self, cfg: ExperimentConfig, model_spec: dict, model: HamiltonianModel,
                 params: dict, sweep: dict[str, list], points: list[dict]):
        self.cfg = cfg
        self.model_spec = model_spec
        self.model = model
        self.params = params
        self.sweep = sweep
        self.points = points

    @property
    def experiment(self):
        return EXPERIMENTS[self.cfg.experiment]

    @property
    def prefix(self) -> str:
        return self.cfg.output or self.cfg.experiment

    @property
    def sweep_name(self) -> str:
        return "-".join(self.sweep) if self.sweep else "single"

    def echo(self) -> dict:
        return {"experiment": self.cfg.experiment, "model": self.model_spec, "params": self.params,
                "sweep": self.sweep, "output": self.prefix, "seed": self.cfg.seed}


def load_config(source: Union[str, os.PathLike, dict]) -> ResolvedConfig:
    """Parse and validate a config file (or an already-loaded dict)."""
    base = Path(".")
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        base = path.parent
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a JSON object")
    try:
        cfg = ExperimentConfig(**raw)
    except ValidationError as exc:
        raise _pydantic_to_config_error(exc) from None
    exp = EXPERIMENTS[cfg.experiment]

    spec = cfg.model if cfg.model is not None else exp.model
    if isinstance(spec, str):
        mpath = Path(spec) if Path(spec).is_absolute() else base / spec
        try:
            spec = json.loads(mpath.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("model", f"cannot load model file {mpath}: {exc}") from None
    model = model_from_spec(spec, "model")

    base_params = _merge(exp.params, cfg.params)
    sweep = cfg.sweep if cfg.sweep is not None else exp.sweep
    for name, values in sweep.items():
        if name not in ParamsConfig.model_fields:
            raise ConfigError(f"sweep.{name}", "unknown parameter")
        if not values:
            raise ConfigError(f"sweep.{name}", "empty value list")
    names = list(sweep)
    points = []
    for combo in itertools.product(*(sweep[n] for n in names)) if names else [()]:
        over = dict(zip(names, combo))
        try:
            points.append(_validate_params(_merge(base_params, over), ""))
        except ConfigError as exc:
            where = f"sweep.{exc.path}" if exc.path in over else f"params.{exc.path}"
            raise ConfigError(where, str(exc).split(": ", 1)[-1]) from None
    params = {k: v for k, v in points[0].items() if k not in sweep}
    return ResolvedConfig(cfg, spec, model, params, dict(sweep), points)


def build_id() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"sysbath-{__version__}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"sysbath-{__version__}"


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (list, dict)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _run_point(rc: ResolvedConfig, p: dict) -> dict:
    try:
        return {"status": "ok", "metrics": _jsonable(rc.experiment.run(rc.model, p, rc.cfg.seed))}
    except (SysbathError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return {"status": "error", "error": f"{type(exc).__name__}: {exc}", "metrics": {}}


def run(rc: ResolvedConfig, out_dir: Union[str, os.PathLike] = ".") -> dict:
    """Run every sweep point; write the JSON record and the CSV table; return the record."""
    t0 = time.perf_counter()
    threads = max(1, int(os.environ.get(THREADS_ENV, "1")))
    if threads > 1 and len(rc.points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda p: _run_point(rc, p), rc.points))
    else:
        results = [_run_point(rc, p) for p in rc.points]

    rows = []
    for p, r in zip(rc.points, results):
        row = {k: p[k] for k in rc.sweep}
        row.update({k: v for k, v in r["metrics"].items() if not isinstance(v, list)})
        rows.append(row)
    ok_rows = [dict({k: p[k] for k in rc.sweep}, **r["metrics"])
               for p, r in zip(rc.points, results) if r["status"] == "ok"]
    summary = _jsonable(rc.experiment.summarize(ok_rows)) if len(ok_rows) == len(rows) else {}

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{rc.prefix}.{rc.sweep_name}.csv"
    header: list[str] = list(rc.sweep) + ["status"]
    for row in rows:
        for k in row:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row, r in zip(rows, results):
        row = dict(row, status=r["status"])
        w.writerow([_fmt(row.get(k)) for k in header])
    csv_path.write_bytes(buf.getvalue().encode("utf-8"))

    record = {
        "experiment": rc.cfg.experiment,
        "build_id": build_id(),
        "config": _jsonable(rc.echo()),
        "seed": rc.cfg.seed,
        "points": [{"params": {k: p[k] for k in rc.sweep}, **r} for p, r in zip(rc.points, results)],
        "summary": summary,
        "csv": csv_path.name,
        "wall_clock_s": time.perf_counter() - t0,
    }
    (out_dir / f"{rc.prefix}.record.json").write_text(json.dumps(record, indent=2) + "\n")
    return record


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="sysbath", description="System-bath thermal state preparation experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=".", help="output directory")
    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config")
    sub.add_parser("list-experiments", help="list the named experiments")
    args = ap.parse_args(argv)

    if args.cmd == "list-experiments":
        for e in EXPERIMENTS.values():
            print(f"{e.name:18s} {e.description}")
        return 0
    try:
        rc = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.cmd == "validate":
        print(f"ok: {rc.cfg.experiment}, {len(rc.points)} point(s)")
        return 0
    record = run(rc, args.output)
    n_err = sum(p["status"] != "ok" for p in record["points"])
    print(f"{rc.cfg.experiment}: {len(record['points'])} point(s), {n_err} error(s), "
          f"{record['wall_clock_s']:.1f} s -> {Path(args.output) / (rc.prefix + '.record.json')}")
    return 1 if n_err else 0


if __name__ == "__main__":
    sys.exit(main())
