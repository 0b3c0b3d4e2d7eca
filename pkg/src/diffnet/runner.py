"""Experiment orchestration: config parsing, Monte-Carlo execution, outputs.

Configs are flat text files with dotted keys::

    topology.kind = grid
    topology.K = 9
    problem.family = ls
    problem.M = 10
    problem.seed = 7
    methods = diffusion exact_diffusion
    mu = 0.005
    iterations = 20000
    runs = 50
    seed = 123

Outputs are a CSV of per-iteration MSD trajectories (dB) and a JSON summary
with the spectral/theory provenance. Both are byte-deterministic functions
of (config, seed): per-run sample streams are derived from
``SeedSequence((seed, run_index))`` independently of the method, so every
method within a run index sees the identical data stream.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import metrics, theory
from .algorithms import METHODS, AlgorithmConfig, run_batch
from .errors import ConfigError, DivergenceError
from .metrics import MsdTrajectory, SteadyState
from .problems import ProblemInstance, make_logistic_problem, make_ls_problem
from .topology import CombinationMatrix, Graph, build_graph, metropolis_weights, uniform_weights

PARALLELISM_ENV = "DIFFNET_PARALLELISM"


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _as_int(raw: dict, key: str, default=None) -> int:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return int(raw[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: expected integer, got {raw[key]!r}") from exc


def _as_float(raw: dict, key: str, default=None) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return float(raw[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: expected number, got {raw[key]!r}") from exc


def _as_bool(raw: dict, key: str, default: bool) -> bool:
    if key not in raw:
        return default
    val = raw[key].lower()
    if val in ("true", "yes", "1", "on"):
        return True
    if val in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"config key {key!r}: expected boolean, got {raw[key]!r}")


@dataclass
class ExperimentConfig:
    topology_kind: str
    K: int
    weights: str
    family: str
    M: int
    methods: list[str]
    mus: dict[str, float]
    iterations: int
    runs: int
    seed: int
    edge_probability: float | None = None
    topology_seed: int = 0
    problem_seed: int = 0
    lambda_range: tuple[float, float] = (1.0, 2.0)
    noise_var: float = 0.1
    zero_bias: bool = False
    rho: float = 0.001
    eval_samples: int = 200_000
    noise_samples: int | None = None
    deterministic: bool = False
    emit_theory: bool = True
    window_fraction: float = 0.1
    output: str | None = None
    raw_text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def config_from_mapping(raw: dict[str, str], raw_text: str = "") -> ExperimentConfig:
    kind = raw.get("topology.kind")
    if kind is None:
        raise ConfigError("missing required config key 'topology.kind'")
    family = raw.get("problem.family")
    if family is None:
        raise ConfigError("missing required config key 'problem.family'")
    if family not in ("ls", "logistic"):
        raise ConfigError(f"config key 'problem.family': expected 'ls' or 'logistic', got {family!r}")

    if "methods" not in raw:
        raise ConfigError("missing required config key 'methods'")
    methods = raw["methods"].replace(",", " ").split()
    if not methods:
        raise ConfigError("config key 'methods' lists no methods")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"config key 'methods': unknown method {m!r}; expected one of {METHODS}")
    if len(set(methods)) != len(methods):
        raise ConfigError("config key 'methods' contains duplicates")

    default_mu = _as_float(raw, "mu", default=float("nan"))
    mus = {}
    for m in methods:
        mus[m] = _as_float(raw, f"method.{m}.mu", default=default_mu)
        if math.isnan(mus[m]):
            raise ConfigError(f"no step size for method {m!r}: set 'mu' or 'method.{m}.mu'")

    weights_default = "uniform" if kind == "complete" else "metropolis"
    weights = raw.get("topology.weights", weights_default)
    if weights not in ("metropolis", "uniform"):
        raise ConfigError(f"config key 'topology.weights': expected metropolis|uniform, got {weights!r}")

    lam_range = (1.0, 2.0)
    if "problem.lambda_range" in raw:
        parts = raw["problem.lambda_range"].replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigError("config key 'problem.lambda_range': expected two numbers 'lo hi'")
        lam_range = (float(parts[0]), float(parts[1]))

    edge_p = None
    if "topology.edge_probability" in raw:
        edge_p = _as_float(raw, "topology.edge_probability")

    known_flat = {
        "methods", "mu", "iterations", "runs", "seed", "deterministic",
        "emit_theory", "window_fraction", "output",
    }
    known_dotted = {
        "topology.kind", "topology.K", "topology.weights", "topology.edge_probability",
        "topology.seed", "problem.family", "problem.M", "problem.seed",
        "problem.lambda_range", "problem.noise_var", "problem.zero_bias", "problem.rho",
        "problem.eval_sample_count", "problem.noise_samples",
    }
    for key in raw:
        if key in known_flat or key in known_dotted:
            continue
        if key.startswith("method.") and key.endswith(".mu") and key.split(".")[1] in METHODS:
            continue
        raise ConfigError(f"unknown config key {key!r}")

    noise_samples = None
    if "problem.noise_samples" in raw:
        noise_samples = _as_int(raw, "problem.noise_samples")

    return ExperimentConfig(
        topology_kind=kind,
        K=_as_int(raw, "topology.K"),
        weights=weights,
        edge_probability=edge_p,
        topology_seed=_as_int(raw, "topology.seed", default=0),
        family=family,
        M=_as_int(raw, "problem.M"),
        problem_seed=_as_int(raw, "problem.seed", default=0),
        lambda_range=lam_range,
        noise_var=_as_float(raw, "problem.noise_var", default=0.1),
        zero_bias=_as_bool(raw, "problem.zero_bias", default=False),
        rho=_as_float(raw, "problem.rho", default=0.001),
        eval_samples=_as_int(raw, "problem.eval_sample_count", default=200_000),
        noise_samples=noise_samples,
        methods=methods,
        mus=mus,
        deterministic=_as_bool(raw, "deterministic", default=False),
        iterations=_as_int(raw, "iterations"),
        runs=_as_int(raw, "runs"),
        seed=_as_int(raw, "seed"),
        emit_theory=_as_bool(raw, "emit_theory", default=True),
        window_fraction=_as_float(raw, "window_fraction", default=0.1),
        output=raw.get("output"),
        raw_text=raw_text,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    return config_from_mapping(parse_config_text(text), raw_text=text)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def build_topology(config: ExperimentConfig) -> tuple[Graph, CombinationMatrix]:
    graph = build_graph(
        config.topology_kind, config.K, config.edge_probability, config.topology_seed
    )
    if config.weights == "uniform":
        comb = uniform_weights(graph)
    else:
        comb = metropolis_weights(graph)
    return graph, comb


def build_problem(config: ExperimentConfig) -> ProblemInstance:
    if config.family == "ls":
        return make_ls_problem(
            config.K, config.M, config.problem_seed,
            lambda_range=config.lambda_range,
            noise_var=config.noise_var,
            zero_bias=config.zero_bias,
            noise_samples=config.noise_samples or 1_000_000,
            deterministic=config.deterministic,
        )
    return make_logistic_problem(
        config.K, config.M, config.problem_seed,
        rho=config.rho,
        eval_sample_count=config.eval_samples,
        noise_samples=config.noise_samples or 100_000,
        zero_bias=config.zero_bias,
    )


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

_FORK_PAYLOAD = None


def _fork_worker(job):
    start, count = job
    configs, problem, comb, master_seed = _FORK_PAYLOAD
    seeds = [np.random.SeedSequence((master_seed, r)) for r in range(start, start + count)]
    out = {}
    for cfg in configs:
        try:
            out[cfg.method] = ("ok", run_batch(cfg, problem, comb, seeds).msd)
        except DivergenceError as exc:
            out[cfg.method] = ("diverged", (str(exc), exc.iteration))
    return start, out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    comb: CombinationMatrix
    problem: ProblemInstance
    trajectories: dict[str, MsdTrajectory]
    steady: dict[str, SteadyState]
    failures: dict[str, str]
    report: theory.TheoryReport | None
    summary: dict
    csv_path: str | None = None
    json_path: str | None = None


def execute(config: ExperimentConfig, output_prefix: str | None = None) -> ExperimentResult:
    """Run every configured method over shared per-run data streams.

    Per-run seeds are ``SeedSequence((seed, run_index))``; each method replays
    the same per-run streams, so comparisons are paired. A diverging method is
    recorded in ``failures`` without aborting the others. With
    ``output_prefix`` (or ``config.output``), writes ``<prefix>.csv`` and
    ``<prefix>.json``.
    """
    graph, comb = build_topology(config)
    problem = build_problem(config)

    method_cfgs = [
        AlgorithmConfig(
            method=m, mu=config.mus[m], iterations=config.iterations,
            deterministic=config.deterministic,
        )
        for m in config.methods
    ]

    try:
        width = max(1, int(os.environ.get(PARALLELISM_ENV, "1")))
    except ValueError as exc:
        raise ConfigError(f"{PARALLELISM_ENV} must be an integer") from exc
    R = config.runs
    if R < 1:
        raise ConfigError("config key 'runs' must be >= 1")

    series: dict[str, list] = {m: [] for m in config.methods}
    failures: dict[str, str] = {}
    if width == 1:
        seeds = [np.random.SeedSequence((config.seed, r)) for r in range(R)]
        for cfg in method_cfgs:
            try:
                series[cfg.method].append(run_batch(cfg, problem, comb, seeds).msd)
            except DivergenceError as exc:
                failures[cfg.method] = str(exc)
    else:
        global _FORK_PAYLOAD
        block = math.ceil(R / width)
        jobs = [(start, min(block, R - start)) for start in range(0, R, block)]
        _FORK_PAYLOAD = (method_cfgs, problem, comb, config.seed)
        try:
            import multiprocessing

            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=width, mp_context=ctx) as pool:
                results = sorted(pool.map(_fork_worker, jobs), key=lambda t: t[0])
        finally:
            _FORK_PAYLOAD = None
        for _, per_method in results:
            for m, (status, payload) in per_method.items():
                if status == "ok":
                    series[m].append(payload)
                else:
                    failures[m] = payload[0]

    trajectories: dict[str, MsdTrajectory] = {}
    steady: dict[str, SteadyState] = {}
    for m in config.methods:
        if m in failures:
            continue
        msd = np.concatenate(series[m], axis=0)
        traj = metrics.aggregate(msd)
        trajectories[m] = traj
        steady[m] = metrics.steady_state(traj, config.window_fraction)

    report = None
    if config.emit_theory:
        theory_mu = config.mus[config.methods[0]]
        report = theory.build_report(problem, comb, theory_mu)

    summary = {
        "config_digest": config.digest,
        "topology": {"kind": config.topology_kind, "K": config.K,
                     "edges": len(graph.edges), "weights": config.weights},
        "family": config.family,
        "iterations": config.iterations,
        "runs": config.runs,
        "seed": config.seed,
        "lambda": comb.lam,
        "gap": comb.gap,
        "nu": problem.nu,
        "delta": problem.delta,
        "b_sq": problem.b_sq,
        "sigma_sq": problem.sigma_sq,
        "msd_theory_db": report.msd_theory_db if report else None,
        "regime": report.regime.winner if report else None,
        "methods": {
            m: (
                {"error": failures[m]}
                if m in failures
                else {
                    "mu": config.mus[m],
                    "steady_state_db": steady[m].mean_db,
                    "stderr_db": steady[m].std_error_db,
                    "stationary": steady[m].stationary,
                }
            )
            for m in config.methods
        },
    }
    if config.family == "logistic":
        summary["proxy_grad_norm"] = problem.proxy_grad_norm

    result = ExperimentResult(
        config=config, comb=comb, problem=problem, trajectories=trajectories,
        steady=steady, failures=failures, report=report, summary=summary,
    )

    prefix = output_prefix or config.output
    if prefix:
        os.makedirs(os.path.dirname(os.path.abspath(prefix)), exist_ok=True)
        result.json_path = f"{prefix}.json"
        if trajectories:
            result.csv_path = f"{prefix}.csv"
            metrics.write_csv(result.csv_path, trajectories)
        with open(result.json_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


def sweep(
    config: ExperimentConfig,
    vary: str,
    values: list[str],
    output_prefix: str | None = None,
) -> list[ExperimentResult]:
    """Repeat :func:`execute` across a parameter grid.

    ``vary`` is ``mu`` (overrides every method's step size) or ``K``
    (rebuilds topology and problem at each size, reusing the master seed so
    sizes are comparable). One CSV per point plus a combined summary JSON.
    """
    if vary not in ("mu", "K"):
        raise ConfigError(f"--vary must be 'mu' or 'K', got {vary!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")

    results = []
    table = []
    for raw_value in values:
        if vary == "mu":
            mu = float(raw_value)
            point = replace(config, mus={m: mu for m in config.methods})
        else:
            point = replace(config, K=int(raw_value))
        prefix = None
        base = output_prefix or config.output
        if base:
            prefix = f"{base}_{vary}_{raw_value}"
        res = execute(point, output_prefix=prefix)
        results.append(res)
        row = {"value": raw_value}
        for m in point.methods:
            row[m] = None if m in res.failures else res.steady[m].mean_db
        table.append(row)

    base = output_prefix or config.output
    if base:
        with open(f"{base}_sweep.json", "w") as fh:
            json.dump({"vary": vary, "points": table}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return results
