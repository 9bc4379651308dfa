"""Command line entry point: ``nbrgds <command> ...``.

Commands: synth, fit, predict, score, graph, simulate, experiment.
Exit codes: 0 success, 2 configuration error, 3 data/format or I/O error,
4 numerical or structural failure inside the sampler.
"""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .chains import ChainConfig, simulate_realizations
from .errors import ConfigError, DataFormatError, NbrgdsError
from .evaluation import ExperimentSpec, compute_metrics, predict_heldout, run_experiment
from .inference import Schedule, run_gibbs
from .model import ModelConfig, generate_counts, sample_prior
from .rng import generator
from .tracefile import RunManifest, file_digest, read_trace, write_diagnostics, write_trace
from .transition import ACTIVE_THRESHOLD, extract_graph

CONFIG_SCHEMA = "nbrgds.config/v1"
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

# display names accepted by --models
MODEL_PRESETS = {
    "NBRGDS": {"variant": "PLAIN", "chain": "NBRGMP"},
    "FS-NBRGDS": {"variant": "FS", "chain": "NBRGMP"},
    "GS-NBRGDS": {"variant": "GS", "chain": "NBRGMP"},
    "PRGDS": {"variant": "PLAIN", "chain": "PRGMC"},
}


def default_K(V):
    return 100 if V >= 1000 else 25


def load_config_file(path):
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    version = d.get("schema_version", CONFIG_SCHEMA)
    if version != CONFIG_SCHEMA:
        raise ConfigError(f"{path}: unsupported schema_version {version!r}")
    return d


def build_config(args, V, T):
    """Config file values, then command line overrides, then size defaults."""
    d = load_config_file(args.config) if getattr(args, "config", None) else {}
    d.pop("schema_version", None)
    for key in ("K", "C", "variant", "chain", "psi", "tau", "eps0", "eps0_theta"):
        v = getattr(args, key.lower(), None)
        if v is not None:
            d[key] = v
    if getattr(args, "sample_psi", False):
        d["sample_psi"] = True
    if getattr(args, "stationary_delta", False):
        d["stationary_delta"] = True
    d.setdefault("K", default_K(V))
    d["V"], d["T"] = V, T
    try:
        return ModelConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def _write_rows(path, header, rows, manifest_hash):
    with open(path, "w", newline="") as f:
        f.write(f"# manifest: {manifest_hash}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path):
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(D._data_lines(f)))
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    return rows[0], rows[1:]


def _schedule(args):
    return Schedule(args.iters, args.burnin, args.thin)


# --------------------------------------------------------------------------
# commands


def cmd_synth(args):
    rng = generator(args.seed, "data")
    if args.model_config:
        args.config = args.model_config
        cfg = build_config(args, args.V, args.T)
        man = RunManifest("synth", cfg.to_dict(), args.seed,
                          {args.model_config: file_digest(args.model_config)})
        state = sample_prior(cfg, rng)
        counts = generate_counts(cfg, state, rng)
        meta = {"source": "model", "config": cfg.to_dict()}
    else:
        if args.zinb_config:
            base = D.ZINB_PRESETS.get(args.zinb_config)
            if base is None:
                raise ConfigError(f"--zinb-config must be one of {sorted(D.ZINB_PRESETS)}")
            p0, r, p = base.p0, base.r, base.p
        else:
            p0, r, p = args.p0, args.r, args.p
        zc = D.ZinbConfig(p0, r, p, V=args.V, T=args.T, n_groups=args.groups)
        man = RunManifest("synth", zc.to_dict(), args.seed)
        counts, groups = D.generate_zinb(zc, rng)
        meta = {"source": "zinb", "config": zc.to_dict(), "ve_ratio": zc.ve_ratio,
                "groups": groups.tolist()}
    D.save_counts(args.out, counts, man.hash)
    meta["manifest"] = man.hash
    Path(args.out + ".meta.json").write_text(json.dumps(meta, indent=2))
    man.outputs = [args.out, args.out + ".meta.json"]
    man.write(args.out + ".manifest.json")
    return 0


def cmd_fit(args):
    counts = D.load_counts(args.data)
    V, T = counts.shape
    if args.mask_file:
        mask = D.load_mask(args.mask_file)
    else:
        mask = D.parse_mask_arg(args.mask, (V, T), generator(args.seed, "mask"))
    T_fit = T - mask.S if mask.mode == "FORECAST" else T
    cfg = build_config(args, V, T_fit)
    if mask.mode == "FORECAST":
        cfg = cfg.with_(S=mask.S)
    schedule = _schedule(args)
    inputs = {args.data: file_digest(args.data)}
    if args.config:
        inputs[args.config] = file_digest(args.config)
    man = RunManifest("fit", {"model": cfg.to_dict(), "mask": mask.to_dict(),
                              "schedule": vars(schedule)}, args.seed, inputs)

    def progress(it, sampler):
        if args.verbose and it % max(1, schedule.total // 20) == 0:
            print(f"iter {it}/{schedule.total}  loglik {sampler.loglik():.1f}", file=sys.stderr)

    trace = run_gibbs(counts, mask, cfg, schedule, generator(args.seed, "gibbs"),
                      callback=progress)
    write_trace(args.out_trace, trace, man.hash)
    diag = args.out_diagnostics or str(Path(args.out_trace).with_suffix(".diagnostics.csv"))
    write_diagnostics(diag, trace, man.hash)
    man.outputs = [args.out_trace, diag]
    if args.out_mask:
        D.save_mask(args.out_mask, mask)
        man.outputs.append(args.out_mask)
    man.write(args.out_trace + ".manifest.json")
    return 0


def cmd_predict(args):
    trace = read_trace(args.trace)
    mask = D.load_mask(args.mask) if args.mask else trace.mask
    if mask.n_cells == 0:
        raise ConfigError("mask selects no cells")
    man = RunManifest("predict", {"rollouts": args.rollouts}, args.seed,
                      {args.trace: file_digest(args.trace)})
    est = predict_heldout(trace, mask, trace.config, generator(args.seed, "predict"),
                          n_rollouts=args.rollouts)
    if args.round:
        est = np.round(est)
    rows = [(int(v), int(t), repr(float(est[v, t]))) for v, t in np.argwhere(mask.held_out)]
    _write_rows(args.out, ["v", "t", "estimate"], rows, man.hash)
    return 0


def cmd_score(args):
    truth = D.load_counts(args.truth)
    mask = D.load_mask(args.mask)
    if mask.n_cells == 0:
        raise ConfigError("mask selects no cells")
    header, rows = _read_rows(args.pred)
    est = np.full(truth.shape, np.nan)
    try:
        for v, t, x in rows:
            est[int(v), int(t)] = float(x)
    except (ValueError, IndexError) as e:
        raise DataFormatError(f"{args.pred}: bad prediction row ({e})") from e
    if np.any(np.isnan(est[mask.held_out])):
        raise DataFormatError(f"{args.pred}: missing predictions for masked cells")
    m = compute_metrics(truth, np.nan_to_num(est), mask)
    text = json.dumps(m.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_graph(args):
    trace = read_trace(args.trace)
    if trace.config.variant != "GS":
        raise ConfigError(f"graph export needs a GS fit, trace has variant {trace.config.variant}")
    if not trace.samples:
        raise ConfigError("trace holds no retained samples")
    s = trace.samples
    Z = (np.mean([x.Z for x in s], axis=0) >= 0.5).astype(int)
    Dm = np.mean([x.D for x in s], axis=0)
    M = np.mean([x.M for x in s], axis=0)
    r = np.mean([x.r for x in s], axis=0)
    g = extract_graph(Z, Dm, M, r, args.threshold)
    man = RunManifest("graph", {"threshold": args.threshold}, 0,
                      {args.trace: file_digest(args.trace)})
    _write_rows(args.out_edges, ["source", "target", "d"],
                [(a, b, repr(d)) for a, b, d in g.edges], man.hash)
    _write_rows(args.out_communities, ["vertex", "community", "membership"],
                [(k, int(c), repr(float(w))) for k, (c, w) in
                 enumerate(zip(g.community, g.membership))], man.hash)
    if args.out_factors:
        _write_rows(args.out_factors, ["row", *[f"c{c}" for c in range(M.shape[1])]],
                    [["r", *map(repr, r.tolist())]] +
                    [[f"m{k}", *map(repr, M[k].tolist())] for k in range(M.shape[0])], man.hash)
    print(json.dumps({"edges": len(g.edges), "active_communities": g.active.tolist()}))
    return 0


def cmd_simulate(args):
    rng = generator(args.seed, "simulate")
    K = args.K
    if args.pi == "identity":
        Pi = np.eye(K)
    else:
        Pi = rng.dirichlet(np.ones(K), size=K).T
    cfg = ChainConfig(args.family, K=K, tau=args.tau, tau0=args.tau0, psi=args.psi,
                      eps0_theta=args.eps0_theta)
    out = simulate_realizations(cfg, Pi, args.theta0, args.T, args.chains, rng)
    man = RunManifest("simulate", {**vars(cfg), "pi": args.pi, "theta0": args.theta0}, args.seed)
    rows = [(c, k, *map(repr, out[c, k].tolist())) for c in range(args.chains) for k in range(K)]
    _write_rows(args.out, ["chain", "k", *[f"t{t + 1}" for t in range(args.T)]], rows, man.hash)
    return 0


def cmd_experiment(args):
    if args.data:
        counts = D.load_counts(args.data)
        inputs = {args.data: file_digest(args.data)}
    else:
        base = D.ZINB_PRESETS.get(args.zinb_config)
        if base is None:
            raise ConfigError("experiment needs --data or a valid --zinb-config")
        zc = D.ZinbConfig(base.p0, base.r, base.p, V=args.V, T=args.T, n_groups=args.groups)
        counts = D.generate_zinb(zc, generator(args.seed, "data"))[0]
        inputs = {}
    V, T = counts.shape
    models = {}
    for name in args.models.split(","):
        if name not in MODEL_PRESETS:
            raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODEL_PRESETS)}")
        args_ = argparse.Namespace(**{**vars(args), **{k.lower(): v for k, v in
                                                     MODEL_PRESETS[name].items()}})
        models[name] = build_config(args_, V, T)
    tasks = {}
    for t in args.task:
        mode, _, value = t.partition(":")
        if mode not in ("smoothing", "forecast") or not value:
            raise ConfigError(f"bad task {t!r}; use smoothing:FRACTION or forecast:S")
        tasks[mode] = float(value) if mode == "smoothing" else int(value)
    spec = ExperimentSpec(counts, models, tasks, _schedule(args), args.repeats, args.seed,
                          args.jobs)
    man = RunManifest("experiment", {"models": {k: v.to_dict() for k, v in models.items()},
                                     "tasks": tasks, "schedule": vars(spec.schedule),
                                     "repeats": args.repeats}, args.seed, inputs)
    summary, raw = run_experiment(spec)
    _write_rows(args.out, ["model", "task", "metric", "mean", "std"],
                [(r["model"], r["task"], r["metric"], repr(r["mean"]), repr(r["std"]))
                 for r in summary], man.hash)
    man.outputs = [args.out]
    man_path = args.manifest or args.out + ".manifest.json"
    d = man.to_dict()
    d["runs"] = raw
    Path(man_path).write_text(json.dumps(d, indent=2, default=str))
    return 0


# --------------------------------------------------------------------------
# parser


def _model_flags(p):
    p.add_argument("--config", help="JSON model config (schema_version %s)" % CONFIG_SCHEMA)
    p.add_argument("--K", type=int, dest="k")
    p.add_argument("--C", type=int, dest="c")
    p.add_argument("--variant", choices=["PLAIN", "FS", "GS"])
    p.add_argument("--chain", choices=["NBRGMP", "PRGMC"])
    p.add_argument("--psi", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--eps0", type=float)
    p.add_argument("--eps0-theta", type=float, dest="eps0_theta")
    p.add_argument("--sample-psi", action="store_true")
    p.add_argument("--stationary-delta", action="store_true")


def _schedule_flags(p, total=5000, burn=3000, thin=10):
    p.add_argument("--iters", type=int, default=total)
    p.add_argument("--burnin", type=int, default=burn)
    p.add_argument("--thin", type=int, default=thin)


def build_parser():
    ap = argparse.ArgumentParser(prog="nbrgds", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic count matrix")
    p.add_argument("--zinb-config", type=int, help="preset 1..5 (V/E 1.6 to 6.5)")
    p.add_argument("--p0", type=float, default=0.9)
    p.add_argument("--r", type=float, default=5.0)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--groups", type=int, default=1)
    p.add_argument("--model-config", help="draw from the model prior with this JSON config")
    p.add_argument("--V", type=int, default=10)
    p.add_argument("--T", type=int, default=365)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth, config=None)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", default="smoothing:0.1", help="smoothing:FRACTION or forecast:S")
    p.add_argument("--mask-file")
    p.add_argument("--out-mask")
    p.add_argument("--out-trace", required=True)
    p.add_argument("--out-diagnostics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    _model_flags(p)
    _schedule_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior-mean predictions for held-out cells")
    p.add_argument("--trace", required=True)
    p.add_argument("--mask", help="mask JSON (defaults to the mask stored in the trace)")
    p.add_argument("--out", required=True)
    p.add_argument("--rollouts", type=int, default=10)
    p.add_argument("--round", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="MAE/MRE of predictions on the masked cells")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("graph", help="export the latent graph of a GS fit")
    p.add_argument("--trace", required=True)
    p.add_argument("--threshold", type=float, default=ACTIVE_THRESHOLD)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-communities", required=True)
    p.add_argument("--out-factors")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("simulate", help="forward realizations of a gamma chain")
    p.add_argument("--family", choices=["GMC", "PRGMC", "NBRGMP"], default="NBRGMP")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--chains", type=int, default=10)
    p.add_argument("--psi", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--tau0", type=float, default=1.0)
    p.add_argument("--eps0-theta", type=float, default=0.0, dest="eps0_theta")
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--pi", choices=["identity", "random"], default="identity")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="compare models over repeated held-out splits")
    p.add_argument("--data")
    p.add_argument("--zinb-config", type=int, default=5)
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("--V", type=int, default=10)
    p.add_argument("--T", type=int, default=365)
    p.add_argument("--models", default="NBRGDS,PRGDS")
    p.add_argument("--task", nargs="+", default=["smoothing:0.1"])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--seed", type=int, default=0)
    _model_flags(p)
    _schedule_flags(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NbrgdsError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
