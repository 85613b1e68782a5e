"""Command-line experiment runner.

Usage::

    scalebridge KIND [--config FILE] [--out DIR] [--seed N] [--workers N] [--set SECTION.KEY=VALUE ...]
    scalebridge rerun MANIFEST [--out DIR]

``KIND`` is one of sample, committee, validity, abtest, mix, upscale, mdcheck.
The config file is JSON with top-level keys ``kind``, ``seed``,
``output_dir``, ``workers`` and one object per section used by the kind;
unknown keys are rejected before any work starts.  Flags win over the file
and ``SCALEBRIDGE_OUTPUT_DIR`` wins over the file's ``output_dir``.

Exit codes: 0 success, 1 config error, 2 component error, 3 check failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bridge.orchestrator import OrchestratorConfig, run_mixing_experiment
from .committee import CommitteeConfig, build_committee, save_committee
from .core import Dataset, Domain, ScaleBridgeError
from .experiments import (
    ABConfig,
    MdCheckConfig,
    ValidityExperimentConfig,
    ab_experiment,
    md_checks,
    validity_experiment,
)
from .samplers.designs import latin_hypercube, sparsity_sample, uniform_random
from .samplers.directed import OptimizerDirectedSampler
from .samplers.neldermead import NelderMeadConfig
from .surrogates.mlp import TrainConfig
from .surrogates.training import MlpTrainer, RbfTrainer
from .truth.analytic import RosenbrockTruth, SyntheticClosureTruth, icf_domain
from .truth.md import MdConfig
from .upscaler import AdsorptionConfig, synthetic_adsorption_demo

log = logging.getLogger("scalebridge")

EXIT_OK, EXIT_CONFIG, EXIT_COMPONENT, EXIT_CHECK = 0, 1, 2, 3
ENV_OUTPUT_DIR = "SCALEBRIDGE_OUTPUT_DIR"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class SampleConfig:
    truth: str = "rosenbrock"        # rosenbrock | closure
    dims: int = 2
    lo: float = -2.0
    hi: float = 2.0
    n: int = 100
    method: str = "lhs"              # lhs | uniform | sparsity | directed
    k_solvers: int = 4
    candidates_per_point: int = 20
    seed: int = 0


@dataclass(frozen=True)
class CommitteeRunConfig:
    truth: str = "rosenbrock"        # rosenbrock | closure | noise
    dims: int = 2
    lo: float = -2.0
    hi: float = 2.0
    n: int = 200
    trainer: str = "mlp"             # mlp | rbf
    epochs: int = 1500
    hidden: tuple[int, ...] = (32, 32)
    n_ensemble: int = 5
    r2_threshold: float = 0.7
    calibration_fraction: float = 0.10
    subset_fraction: float = 0.8
    max_attempts: int = 50
    seed: int = 0


@dataclass(frozen=True)
class MixRunConfig:
    scenarios: tuple[str, ...] = ("uniform", "heated")


SECTIONS: dict[str, dict[str, type]] = {
    "sample": {"sample": SampleConfig},
    "committee": {"committee": CommitteeRunConfig},
    "abtest": {"abtest": ABConfig},
    "validity": {"abtest": ABConfig, "validity": ValidityExperimentConfig},
    "mix": {"mix": OrchestratorConfig, "run": MixRunConfig},
    "upscale": {"upscale": AdsorptionConfig},
    "mdcheck": {"mdcheck": MdCheckConfig, "md": MdConfig},
}
TOP_LEVEL = {"kind", "seed", "output_dir", "workers"}


# -- configuration -----------------------------------------------------------

def _coerce(name: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        if default and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in default):
            kind = float if any(isinstance(v, float) for v in default) else int
            return tuple(_coerce(f"{name}[]", kind(0), v) for v in value)
        return tuple(value)
    return value


def build_section(cls, name: str, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[key] = _coerce(f"{name}.{key}", default, value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {name!r}: {exc}") from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(kind: str, raw: dict, *, seed=None, workers=None, output_dir=None, overrides=()) -> dict:
    """Validate ``raw`` and apply flag overrides; returns a plain, fully populated dict."""
    if kind not in SECTIONS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = json.loads(json.dumps(raw))
    sections = SECTIONS[kind]
    unknown = sorted(set(raw) - TOP_LEVEL - set(sections))
    if unknown:
        raise ConfigError(f"unknown keys for {kind!r}: {', '.join(unknown)}")
    if raw.get("kind", kind) != kind:
        raise ConfigError(f"config is for {raw['kind']!r}, not {kind!r}")
    for item in overrides:
        path, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        parts = path.split(".")
        if len(parts) == 1 and parts[0] in TOP_LEVEL - {"kind"}:
            raw[parts[0]] = _parse_value(value)
        elif len(parts) == 2 and parts[0] in sections:
            raw.setdefault(parts[0], {})[parts[1]] = _parse_value(value)
        else:
            raise ConfigError(f"override {path!r} does not name a config key")
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    top_seed = raw.get("seed", 0)
    if isinstance(top_seed, bool) or not isinstance(top_seed, int):
        raise ConfigError("seed must be an integer")
    n_workers = raw.get("workers", 1)
    if isinstance(n_workers, bool) or not isinstance(n_workers, int) or n_workers < 1:
        raise ConfigError("workers must be a positive integer")

    resolved = {"kind": kind, "seed": top_seed, "workers": n_workers}
    for name, cls in sections.items():
        sec = dict(raw.get(name, {})) if isinstance(raw.get(name, {}), dict) else raw.get(name)
        names = {f.name for f in dataclasses.fields(cls)}
        if isinstance(sec, dict):
            if "seed" in names and ("seed" not in sec or seed is not None):
                sec["seed"] = top_seed
            if "workers" in names and ("workers" not in sec or "workers" in raw):
                sec["workers"] = n_workers
        obj = build_section(cls, name, sec)
        resolved[name] = dataclasses.asdict(obj)
    out = output_dir or os.environ.get(ENV_OUTPUT_DIR) or raw.get("output_dir") or f"runs/{kind}"
    if not isinstance(out, str):
        raise ConfigError("output_dir must be a string")
    resolved["output_dir"] = out
    return resolved


def section(resolved: dict, name: str):
    return build_section(SECTIONS[resolved["kind"]][name], name, resolved[name])


# -- commands ----------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _truth_and_domain(name: str, dims: int, lo: float, hi: float):
    if name == "rosenbrock":
        return RosenbrockTruth(dims), Domain.box(lo, hi, dims)
    if name == "closure":
        return SyntheticClosureTruth(), icf_domain()
    raise ConfigError(f"unknown truth model {name!r}")


def cmd_sample(cfg: dict, out: Path) -> bool:
    c = section(cfg, "sample")
    truth, domain = _truth_and_domain(c.truth, c.dims, c.lo, c.hi)
    if c.method == "lhs":
        X = latin_hypercube(domain, c.n, c.seed)
    elif c.method == "uniform":
        X = uniform_random(domain, c.n, c.seed)
    elif c.method == "sparsity":
        X = sparsity_sample(domain, np.empty((0, domain.dims)), c.n, c.candidates_per_point * c.n, c.seed)
    elif c.method == "directed":
        pts = OptimizerDirectedSampler(domain, truth, c.k_solvers, NelderMeadConfig(), seed=c.seed).draw(c.n)
        Dataset(domain, tuple(pts)).to_csv(out / "samples.csv")
        return True
    else:
        raise ConfigError(f"unknown sampling method {c.method!r}")
    Dataset.from_arrays(domain, X, truth.evaluate_many(X)).to_csv(out / "samples.csv")
    return True


def cmd_committee(cfg: dict, out: Path) -> bool:
    c = section(cfg, "committee")
    if c.truth == "noise":
        domain = Domain.box(c.lo, c.hi, c.dims)
        X = latin_hypercube(domain, c.n, c.seed)
        Y = np.random.default_rng(c.seed + 1).standard_normal((c.n, 1))
    else:
        truth, domain = _truth_and_domain(c.truth, c.dims, c.lo, c.hi)
        X = latin_hypercube(domain, c.n, c.seed)
        Y = truth.evaluate_many(X)
        if c.truth == "closure":
            Y = np.log10(Y)
    if c.trainer == "mlp":
        trainer = MlpTrainer(TrainConfig(epochs=c.epochs, hidden=c.hidden), domain=domain)
    elif c.trainer == "rbf":
        trainer = RbfTrainer(domain=domain)
    else:
        raise ConfigError(f"unknown trainer {c.trainer!r}")
    cc = CommitteeConfig(n_ensemble=c.n_ensemble, r2_threshold=c.r2_threshold,
                         calibration_fraction=c.calibration_fraction, subset_fraction=c.subset_fraction,
                         max_attempts=c.max_attempts, seed=c.seed)
    committee = build_committee((X, Y), trainer, cc)
    save_committee(committee, out / "committee")
    _write_json(out / "committee_summary.json", {
        "members": len(committee.members),
        "calibration_scores": list(committee.calibration_scores),
        "rejected_attempts": committee.rejected_attempts,
        "trained_on_count": committee.trained_on_count,
    })
    return True


def _abtest(cfg: dict, out: Path) -> dict:
    res = ab_experiment(section(cfg, "abtest"))
    for run in res.runs:
        run.to_csv(out / f"ab_{run.strategy}_seed{run.seed}.csv")
    summary = res.summary()
    summary["pass"] = bool(summary["near_min_directed_better"] and 0.5 <= summary["global_ratio"] <= 2.0)
    _write_json(out / "ab_summary.json", summary)
    return summary


def cmd_abtest(cfg: dict, out: Path) -> bool:
    return _abtest(cfg, out)["pass"]


def cmd_validity(cfg: dict, out: Path) -> bool:
    ab = _abtest(cfg, out)
    vc = section(cfg, "validity")
    summary = {}
    for strategy in ("directed", "uniform"):
        r = validity_experiment(vc, strategy)
        r.history.to_csv(out / f"validity_{strategy}.csv")
        summary[strategy] = {"converged": r.converged, "test_score": r.test_score, "iterations": len(r.history),
                             "non_increasing_fraction": r.history.non_increasing_fraction(), "evaluations": len(r.X)}
    d = summary["directed"]
    summary["pass"] = bool(d["converged"] and d["test_score"] <= vc.tol and d["non_increasing_fraction"] >= 0.8)
    _write_json(out / "validity_summary.json", summary)
    return bool(summary["pass"] and ab["pass"])


def cmd_mix(cfg: dict, out: Path) -> bool:
    oc = section(cfg, "mix")
    scenarios = section(cfg, "run").scenarios
    truth_counts = {}
    for sc in scenarios:
        r = run_mixing_experiment(sc, oc)
        r.callmap.to_csv(out / f"callmap_{sc}.csv")
        r.callmap.to_pgm(out / f"callmap_{sc}.pgm")
        r.to_json(out / f"accounting_{sc}.json")
        r.states_csv(out / f"states_{sc}.csv")
        r.store.to_csv(out / f"store_{sc}.csv")
        truth_counts[sc] = r.callmap.counts()["truth"]
    ok = True
    if "uniform" in truth_counts and "heated" in truth_counts:
        ok = truth_counts["heated"] > truth_counts["uniform"]
    _write_json(out / "mix_summary.json", {"truth_counts": truth_counts, "pass": ok})
    return ok


def cmd_upscale(cfg: dict, out: Path) -> bool:
    rep = synthetic_adsorption_demo(section(cfg, "upscale"))
    rep.to_csv(out / "upscale.csv")
    d = rep.to_dict()
    d["pass"] = rep.relative_rmse < 0.05
    _write_json(out / "upscale_report.json", d)
    return d["pass"]


def cmd_mdcheck(cfg: dict, out: Path) -> bool:
    res = md_checks(section(cfg, "mdcheck"), section(cfg, "md"))
    _write_json(out / "mdcheck.json", res)
    return bool(res["all_pass"])


COMMANDS = {
    "sample": cmd_sample, "committee": cmd_committee, "abtest": cmd_abtest, "validity": cmd_validity,
    "mix": cmd_mix, "upscale": cmd_upscale, "mdcheck": cmd_mdcheck,
}


# -- driver ------------------------------------------------------------------

def _hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def output_hashes(out: Path) -> dict[str, str]:
    return {str(p.relative_to(out)): _hash(p) for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def execute(cfg: dict) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        ok = COMMANDS[cfg["kind"]](cfg, out)
        code = EXIT_OK if ok else EXIT_CHECK
    except ConfigError:
        raise
    except (ScaleBridgeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("%s failed: %s", cfg["kind"], exc)
        code = EXIT_COMPONENT
    manifest = {
        "kind": cfg["kind"],
        "config": cfg,
        "seed": cfg["seed"],
        "versions": {"scalebridge": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "wall_time_s": time.perf_counter() - start,
        "exit_code": code,
        "outputs": output_hashes(out),
    }
    _write_json(out / "manifest.json", manifest)
    return code


def rerun(manifest_path: str, output_dir: str | None) -> int:
    """Repeat a recorded run and compare every output byte for byte."""
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text())
        cfg = dict(manifest["config"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    cfg["output_dir"] = output_dir or str(path.parent / "rerun")
    raw = {k: v for k, v in cfg.items() if k != "output_dir"}
    cfg = resolve_config(cfg["kind"], raw, output_dir=cfg["output_dir"])
    code = execute(cfg)
    fresh = output_hashes(Path(cfg["output_dir"]))
    expected = manifest["outputs"]
    diff = sorted(k for k in set(fresh) | set(expected) if fresh.get(k) != expected.get(k))
    if diff:
        print("rerun differs in: " + ", ".join(diff))
        return EXIT_CHECK
    print(f"rerun reproduced {len(expected)} files byte-identically")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scalebridge", description="Run surrogate scale-bridging experiments.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in COMMANDS:
        s = sub.add_parser(kind)
        s.add_argument("-c", "--config", help="JSON config file")
        s.add_argument("-o", "--out", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int, help="truth-model worker pool size")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    r = sub.add_parser("rerun")
    r.add_argument("manifest")
    r.add_argument("-o", "--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.kind == "rerun":
            return rerun(args.manifest, args.out)
        raw = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = resolve_config(args.kind, raw, seed=args.seed, workers=args.workers,
                             output_dir=args.out, overrides=args.set)
        code = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.kind}: exit {code}, outputs in {cfg['output_dir']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
