"""``blochid`` command-line interface."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import ExperimentConfig, compare_settings, run_experiment, sample_trial
from .errors import BlochIdError
from .estimation import SignalModel, SignalTemplate, fit_signal
from .lindblad import (
    build_bloch, is_physical, model_to_json, spec_from_json, steady_state,
    to_pauli_frame,
)
from .measurement import MeasurementRecord, lds_times
from .models import BUILTINS, builtin, resolve_model
from .propagation import eigenstructure, propagate
from .recon_full import reconstruct
from .recon_partial import solve_signal

log = logging.getLogger("blochid")


def _load_config(path):
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _pick(args, cfg, key, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _r0(value, model_name, dim):
    if value is not None:
        return np.array([float(v) for v in (value.split(",") if isinstance(value, str) else value)])
    if isinstance(model_name, str) and model_name in BUILTINS:
        return np.array(builtin(model_name).r0)
    r0 = np.zeros(dim)
    r0[-1] = 1.0
    return r0


def _write_json(data, out):
    text = json.dumps(data, indent=2)
    if out is None:
        print(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")


# -- model subcommands ------------------------------------------------------------

def cmd_model_build(args):
    spec = spec_from_json(json.loads(Path(args.spec).read_text()))
    model = build_bloch(spec)
    if args.frame == "pauli":
        model = to_pauli_frame(model)
    _write_json(model_to_json(model), args.out)


def cmd_model_check(args):
    spec = spec_from_json(json.loads(Path(args.spec).read_text()))
    ok, min_eig = is_physical(spec)
    model = build_bloch(spec)
    es = eigenstructure(model)
    _write_json({
        "physical": ok,
        "min_f_eigenvalue": min_eig,
        "classification": es.classification,
        "eigenvalues": [[z.real, z.imag] for z in es.eigenvalues],
    }, args.out)
    return 0 if ok else 1


def cmd_model_steady(args):
    model = resolve_model(args.model)
    ss = steady_state(model)
    _write_json({"r_ss": ss.point.tolist(), "unique": ss.unique}, args.out)


# -- pipeline subcommands ---------------------------------------------------------

def cmd_simulate(args):
    cfg = _load_config(args.config)
    name = _pick(args, cfg, "model", "Model1")
    model = resolve_model(name)
    r0 = _r0(_pick(args, cfg, "r0"), name, model.dim)
    T = float(_pick(args, cfg, "T", 50.0))
    N = int(_pick(args, cfg, "N", 1000))
    times = lds_times(N, T) if _pick(args, cfg, "grid", "lds") == "lds" else np.linspace(0, T, N)
    traj = propagate(model, r0, times)
    out = Path(_pick(args, cfg, "out", "trajectory.csv"))
    if out.suffix != ".csv":
        out = out / "trajectory.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out)
    print(out)


def _experiment(args, cfg):
    keys = ("model", "r0", "observables", "T", "N", "N_e", "trials", "seed", "method",
            "prior", "workers", "label")
    data = {k: cfg[k] for k in keys if k in cfg}
    if "Ne" in cfg:
        data["N_e"] = cfg["Ne"]
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            data[k] = v
    if isinstance(data.get("r0"), str):
        data["r0"] = [float(v) for v in data["r0"].split(",")]
    if data.get("N_e") in (0, "inf"):
        data["N_e"] = None
    return ExperimentConfig.from_json(data)


def cmd_measure(args):
    cfg = _load_config(args.config)
    name = _pick(args, cfg, "model", "Model1")
    model = resolve_model(name)
    r0 = _r0(_pick(args, cfg, "r0"), name, model.dim)
    T = float(_pick(args, cfg, "T", 50.0))
    n_e = _pick(args, cfg, "N_e", cfg.get("Ne", 1000))
    seed = int(_pick(args, cfg, "seed", 0))
    observables = tuple(_pick(args, cfg, "observables", "xyz"))
    records = sample_trial(model, r0, observables, T, int(_pick(args, cfg, "N", 1000)),
                           None if n_e in (0, "inf", None) else int(n_e), seed)
    out = Path(_pick(args, cfg, "out", "records"))
    for rec in records:
        rec = MeasurementRecord(rec.observable, rec.times, rec.estimates, rec.n_repeats,
                                seed, T)
        rec.save(out / rec.observable)
        print(out / f"{rec.observable}.csv")


def cmd_estimate(args):
    records = [MeasurementRecord.load(p) for p in args.records]
    template = SignalTemplate(args.pairs, args.exponentials, True)
    fit = fit_signal(records, template)
    _write_json(fit.to_json(), args.out)


def cmd_reconstruct(args):
    signal = SignalModel.load(args.signal)
    r0 = _r0(args.r0, None, 3 if signal.n_channels < 3 else signal.n_channels)
    if args.prior is None:
        result = reconstruct(signal, r0)
        _write_json(result.to_json(), args.out)
        return
    traces = tuple(args.traces) if args.traces else signal.channels
    sol = solve_signal(signal, args.prior, r0, traces)
    _write_json(sol.to_json(), args.out)


def cmd_bench(args):
    cfg = _load_config(args.config)
    conf = _experiment(args, cfg)
    out = _pick(args, cfg, "out", "bench")
    conf = ExperimentConfig.from_json({**conf.to_json(), "out": str(out)})
    dist = run_experiment(conf)
    print(json.dumps(dist.summary(), indent=2))


def cmd_compare(args):
    cfg = _load_config(args.config)
    entries = cfg["configs"] if isinstance(cfg, dict) else cfg
    base = cfg.get("base", {}) if isinstance(cfg, dict) else {}
    seed = args.seed
    configs = []
    for entry in entries:
        data = {**base, **entry}
        if seed is not None:
            data["seed"] = seed
        data.pop("out", None)
        configs.append(ExperimentConfig.from_json(data))
    out = Path(args.out or "compare")
    rows = compare_settings(configs, out / "compare.csv" if out.suffix != ".csv" else out)
    for row in rows:
        print(f"{row['config']}: median {row['median']:.4%}, p90 {row['p90']:.4%}, "
              f"failed {row['failed']}/{row['trials']}")


# -- parser -----------------------------------------------------------------------

def _add_experiment_options(p):
    p.add_argument("--model", help="builtin name (Model1/2/3) or JSON model file")
    p.add_argument("--r0", help="initial Bloch vector, comma separated")
    p.add_argument("--observables", help="subset of xyz, e.g. z or xy")
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--N", type=int, help="number of sample times")
    p.add_argument("--Ne", dest="N_e", type=int, help="repetitions per time (0: noiseless)")


def build_parser():
    parser = argparse.ArgumentParser(prog="blochid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("simulate", help="propagate a model and write a trajectory CSV")
    common(p)
    _add_experiment_options(p)
    p.add_argument("--grid", choices=["lds", "uniform"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("measure", help="sample shot-noise records")
    common(p)
    _add_experiment_options(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("estimate", help="fit records to the damped-signal template")
    common(p)
    p.add_argument("records", nargs="+", help="record CSV/JSON stems")
    p.add_argument("--pairs", type=int, default=1)
    p.add_argument("--exponentials", type=int, default=1)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("reconstruct", help="recover (A, c) from a fitted signal")
    common(p)
    p.add_argument("signal", help="SignalModel JSON")
    p.add_argument("--r0", help="initial Bloch vector, comma separated (default +z)")
    p.add_argument("--prior", choices=["dephasing", "relaxation", "generic"])
    p.add_argument("--traces", choices=["x", "y", "z", "xy", "yz", "xz"])
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("bench", help="Monte Carlo reconstruction benchmark")
    common(p)
    _add_experiment_options(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--method", choices=["full", "single_trace", "two_trace"])
    p.add_argument("--prior", choices=["dephasing", "relaxation"])
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="run several benchmark settings and tabulate")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("model", help="Lindblad model utilities")
    msub = p.add_subparsers(dest="model_command", required=True)
    q = msub.add_parser("build", help="compile a Lindblad spec into (A, c)")
    q.add_argument("spec")
    q.add_argument("--frame", choices=["normalized", "pauli"], default="normalized")
    q.add_argument("--out")
    q.set_defaults(func=cmd_model_build)
    q = msub.add_parser("check", help="positivity and eigenstructure of a spec")
    q.add_argument("spec")
    q.add_argument("--out")
    q.set_defaults(func=cmd_model_check)
    q = msub.add_parser("steady-state", help="steady state of a model")
    q.add_argument("model", help="builtin name or JSON file")
    q.add_argument("--out")
    q.set_defaults(func=cmd_model_steady)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (BlochIdError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"blochid: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
