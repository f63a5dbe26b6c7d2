"""Seeded Monte Carlo benchmarks: simulate, sample, fit, reconstruct, score."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BlochIdError
from .estimation import SignalTemplate, fit_signal
from .lindblad import BlochModel
from .measurement import OBSERVABLES, derive_seed, lds_times, sample_record
from .models import BUILTINS, builtin, resolve_model
from .propagation import eigenstructure, propagate
from .recon_full import reconstruct_full, relative_error
from .recon_partial import aligned_error, solve_signal

log = logging.getLogger(__name__)

METHODS = ("full", "single_trace", "two_trace")
THRESHOLDS = (0.005, 0.01, 0.015, 0.02, 0.03, 0.05, 0.1)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "Model1"
    r0: tuple | None = None  # defaults to the builtin's preparation, else +z
    observables: tuple = ("x", "y", "z")
    T: float = 50.0
    N: int = 1000
    N_e: int | None = 1000  # None: noiseless expectation values
    trials: int = 100
    seed: int = 0
    method: str = "full"
    prior: str | None = None
    out: str | None = None
    workers: int = 1
    label: str | None = None

    def __post_init__(self):
        obs = self.observables
        if isinstance(obs, str):
            obs = tuple(obs)
        object.__setattr__(self, "observables", tuple(obs))
        if self.r0 is not None:
            object.__setattr__(self, "r0", tuple(float(v) for v in self.r0))
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.observables:
            raise ValueError("at least one observable is required")
        if any(o not in OBSERVABLES for o in self.observables):
            raise ValueError(f"observables must be drawn from {OBSERVABLES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method == "full" and set(self.observables) != set(OBSERVABLES):
            raise ValueError("full reconstruction needs the x, y and z traces")
        if self.method == "single_trace" and len(self.observables) != 1:
            raise ValueError("single_trace reconstruction uses exactly one observable")
        if self.method == "two_trace" and len(self.observables) != 2:
            raise ValueError("two_trace reconstruction uses exactly two observables")
        if self.method != "full" and self.prior is None:
            raise ValueError("partial-trace reconstruction needs a prior")
        if self.N < 1 or not self.T > 0:
            raise ValueError("N >= 1 and T > 0 are required")

    @property
    def name(self):
        if self.label:
            return self.label
        ne = "inf" if self.N_e is None else self.N_e
        return f"{self.model}-{''.join(self.observables)}-T{self.T:g}-N{self.N}-Ne{ne}"

    def initial_state(self):
        if self.r0 is not None:
            return np.array(self.r0)
        if self.model in BUILTINS:
            return np.array(builtin(self.model).r0)
        return np.array([0.0, 0.0, 1.0])

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict):
        data = dict(data)
        if "Ne" in data:
            data["N_e"] = data.pop("Ne")
        if data.get("N_e") in ("inf", "Infinity", float("inf")):
            data["N_e"] = None
        return cls(**data)

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ErrorDistribution:
    raw: np.ndarray  # per-trial errors in trial order (inf for failures)
    failures: tuple = field(default=())  # (trial, reason)
    label: str = ""

    @property
    def errors(self):
        """Sorted ascending."""
        return np.sort(self.raw)

    @property
    def median(self):
        return float(np.median(self.raw))

    def quantile(self, q):
        # interpolating between two failed (infinite) trials gives inf - inf
        with np.errstate(invalid="ignore"):
            v = float(np.quantile(self.raw, q))
        return np.inf if np.isnan(v) else v

    def fraction_below(self, threshold):
        return float(np.mean(self.raw < threshold))

    def cumulative(self):
        """``(error, probability)`` pairs of the empirical distribution."""
        e = self.errors
        return e, np.arange(1, e.size + 1) / e.size

    def summary(self):
        return {
            "trials": int(self.raw.size),
            "median": self.median,
            "p90": self.quantile(0.9),
            "failed": len(self.failures),
            "fraction_below": {f"{t:g}": self.fraction_below(t) for t in THRESHOLDS},
        }

    def write(self, out, config: ExperimentConfig | None = None):
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "error"])
            for k, e in enumerate(self.raw):
                w.writerow([k, repr(float(e))])
        with open(out / "cumulative.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["error", "probability"])
            for e, p in zip(*self.cumulative()):
                w.writerow([repr(float(e)), repr(float(p))])
        summary = self.summary()
        summary["failures"] = [{"trial": k, "reason": r} for k, r in self.failures]
        if config is not None:
            summary["config"] = config.to_json()
        (out / "summary.json").write_text(json.dumps(summary, indent=2))


def _template(model: BlochModel, r0):
    es = eigenstructure(model)
    return SignalTemplate(pairs=len(es.pairs), exponentials=len(es.reals), constant=True)


def sample_trial(truth: BlochModel, r0, observables, T, N, N_e, seed, trial=0):
    """Records of one trial: an LDS grid with a per-trial shift, independent shot noise."""
    shift = np.random.default_rng(derive_seed(seed, trial, 0)).random()
    times = lds_times(N, T, shift)
    traj = propagate(truth, r0, times)
    records = []
    for obs in observables:
        j = OBSERVABLES.index(obs)
        records.append(sample_record(traj.values[j], times, N_e, obs,
                                     seed=derive_seed(seed, trial, 1 + j)))
    return records


def simulate_records(config: ExperimentConfig, trial: int, truth: BlochModel | None = None):
    truth = truth or resolve_model(config.model)
    return sample_trial(truth, config.initial_state(), config.observables, config.T,
                        config.N, config.N_e, config.seed, trial)


def run_trial(config: ExperimentConfig, trial: int):
    """Relative reconstruction error of one trial, ``(error, failure reason or None)``."""
    truth = resolve_model(config.model)
    r0 = config.initial_state()
    try:
        records = simulate_records(config, trial, truth)
        fit = fit_signal(records, _template(truth, r0))
        if config.method == "full":
            result = reconstruct_full(fit.select(OBSERVABLES), r0)
            return relative_error(result.model, truth), None
        sol = solve_signal(fit, config.prior, r0, config.observables)
        return aligned_error(sol, truth), None
    except (BlochIdError, np.linalg.LinAlgError, ValueError) as exc:
        log.info("trial %d failed: %s", trial, exc)
        return float("inf"), f"{type(exc).__name__}: {exc}"


def _run_one(args):
    return run_trial(*args)


def run_experiment(config: ExperimentConfig) -> ErrorDistribution:
    """All trials of ``config``; failures become infinite errors, never dropped."""
    jobs = [(config, k) for k in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    raw = np.array([e for e, _ in results], dtype=float)
    failures = tuple((k, r) for k, (_, r) in enumerate(results) if r is not None)
    dist = ErrorDistribution(raw, failures, config.name)
    if config.out:
        dist.write(config.out, config)
    return dist


def compare_settings(configs, out=None):
    """Median and 90th percentile per configuration; optional CSV table."""
    configs = list(configs)
    models = {c.model for c in configs}
    if len(models) > 1:
        raise ValueError(f"configurations must share the model, got {sorted(models)}")
    rows = []
    for cfg in configs:
        dist = run_experiment(cfg)
        rows.append({"config": cfg.name, "median": dist.median, "p90": dist.quantile(0.9),
                     "failed": len(dist.failures), "trials": cfg.trials})
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["config", "median", "p90", "failed", "trials"])
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **kw)
