"""Command-line surface: synth, train, impute, eval and bench subcommands.

Option precedence: built-in defaults < config file (--config) < explicit
flags. The fully resolved configuration is echoed to ``config_echo.txt`` in
every output directory so a run can be reproduced from its outputs alone.
The output directory may be overridden with the MNARKIT_OUTDIR env var.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import baselines, evaluate, io, model as core, synth
from .errors import MnarkitError
from .masking import IncompleteMatrix, compose_observed, feature_stats, standardize_complete

MODEL_KEYS = {f.name for f in core.ModelConfig.__dataclass_fields__.values()}

METHOD_CHOICES = ("conjunction", "mar_alpha0", "serial_selection", "mean")


def _out_dir(args) -> str:
    out = os.environ.get("MNARKIT_OUTDIR", args.out)
    os.makedirs(out, exist_ok=True)
    return out


def _load_file_config(args) -> dict:
    if getattr(args, "config", None):
        return io.parse_config_file(args.config)
    return {}


def _model_config(args, file_cfg: dict) -> core.ModelConfig:
    cfg = {}
    for key, value in file_cfg.items():
        if key.startswith("model."):
            cfg[key[len("model."):]] = value
    unknown = set(cfg) - MODEL_KEYS
    if unknown:
        raise MnarkitError(f"unknown model config keys: {sorted(unknown)}")
    parsed = {}
    defaults = core.ModelConfig()
    for key, raw in cfg.items():
        current = getattr(defaults, key)
        if key == "hidden_sizes":
            parsed[key] = tuple(int(t) for t in raw.split(",") if t.strip())
        elif isinstance(current, bool):
            parsed[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            parsed[key] = int(raw)
        elif isinstance(current, float):
            parsed[key] = float(raw)
        else:
            parsed[key] = raw
    config = core.ModelConfig(**parsed)
    # explicit flags win over the file
    for key in MODEL_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            if key == "hidden_sizes":
                flag = tuple(int(t) for t in flag.split(","))
            config = replace(config, **{key: flag})
    return config


def _missing_spec(args, file_cfg: dict) -> synth.MissingSpec:
    kind = getattr(args, "missing_kind", None) or file_cfg.get("missing.kind", "self_mask")
    k = getattr(args, "missing_k", None)
    if k is None:
        k = float(file_cfg.get("missing.k", 0.8))
    mcar = getattr(args, "mcar_prob", None)
    if mcar is None:
        mcar = float(file_cfg.get("missing.mcar_probability", 0.0))
    subset = file_cfg.get("missing.feature_subset", "")
    features = tuple(int(t) for t in subset.split(",") if t.strip())
    return synth.MissingSpec(kind=kind, k=k, feature_subset=features, mcar_probability=mcar)


def _echo(out_dir: str, sections: dict) -> None:
    flat = {}
    for prefix, mapping in sections.items():
        for key, value in mapping.items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            flat[f"{prefix}.{key}"] = value
    with open(os.path.join(out_dir, "config_echo.txt"), "w") as f:
        f.write(io.format_config(flat))


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--hidden-sizes", dest="hidden_sizes", help="comma list, e.g. 128,128")
    p.add_argument("--k-train", dest="k_train", type=int)
    p.add_argument("--l-impute", dest="l_impute", type=int)
    p.add_argument("--alpha", dest="alpha", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--iterations", dest="iterations", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--encoder", dest="encoder", choices=core.ENCODER_VARIANTS)
    p.add_argument("--seed", dest="seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnarkit",
                                     description="Tabular imputation under MNAR missingness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate complete data plus a missing mask")
    p.add_argument("--out", default="out_synth")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-kind", dest="missing_kind", choices=synth.SELF_MASK_KINDS)
    p.add_argument("--missing-k", dest="missing_k", type=float)
    p.add_argument("--mcar-prob", dest="mcar_prob", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit the imputer or a baseline, write a checkpoint")
    p.add_argument("--data", required=True, help="observed-matrix CSV")
    p.add_argument("--out", default="out_train")
    p.add_argument("--method", choices=("conjunction", "mar_alpha0", "serial_selection"),
                   default="conjunction")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("impute", help="load a checkpoint and write the completed matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="out_impute")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("eval", help="score a completed CSV against the truth")
    p.add_argument("--truth", required=True, help="complete-matrix CSV")
    p.add_argument("--observed", required=True, help="observed-matrix CSV (defines the mask)")
    p.add_argument("--completed", required=True)
    p.add_argument("--prob-mask", dest="prob_mask")
    p.add_argument("--out", default="out_eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="multi-seed experiment; writes a report CSV")
    p.add_argument("--out", default="out_bench")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--n-runs", dest="n_runs", type=int, default=5)
    p.add_argument("--seeds", help="comma list; defaults to 0..n_runs-1")
    p.add_argument("--methods", default="conjunction,mar_alpha0,serial_selection,mean")
    p.add_argument("--missing-kind", dest="missing_kind", choices=synth.SELF_MASK_KINDS)
    p.add_argument("--missing-k", dest="missing_k", type=float)
    p.add_argument("--mcar-prob", dest="mcar_prob", type=float)
    _add_model_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def cmd_synth(args) -> int:
    out = _out_dir(args)
    file_cfg = _load_file_config(args)
    spec = _missing_spec(args, file_cfg)
    rng = synth.make_rng(args.seed)
    x = synth.gaussian_synth(args.n, args.d, np.zeros(args.d),
                             synth.equicorrelated_cov(args.d, args.rho), rng)
    stats = feature_stats(x)
    x_std = standardize_complete(x, stats)
    mask = synth.apply_missing(x_std, spec, rng)
    observed = compose_observed(x_std, mask)
    io.write_complete_csv(os.path.join(out, "truth.csv"), x_std)
    io.write_matrix_csv(os.path.join(out, "observed.csv"), observed)
    _echo(out, {"data": {"n": args.n, "d": args.d, "rho": args.rho, "seed": args.seed},
                "missing": asdict(spec)})
    print(f"wrote truth.csv and observed.csv to {out} "
          f"(missing fraction {1 - observed.observed_fraction():.3f})")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    file_cfg = _load_file_config(args)
    config = _model_config(args, file_cfg)
    if args.method == "mar_alpha0":
        config = replace(config, alpha=0.0)
    elif args.method == "serial_selection":
        config = replace(config, structure="serial", alpha=1.0)
    data, _ = io.load_matrix_csv(args.data)
    params, trace = core.train(data, config)
    ckpt = os.path.join(out, "model.npz")
    core.save_checkpoint(ckpt, params, config)
    with open(os.path.join(out, "bound_trace.csv"), "w") as f:
        f.write("iteration,bound\n")
        f.writelines(f"{it},{repr(v)}\n" for it, v in trace)
    _echo(out, {"model": asdict(config), "run": {"method": args.method, "data": args.data}})
    print(f"checkpoint written to {ckpt}; final traced bound "
          f"{trace[-1][1]:.4f}" if trace else f"checkpoint written to {ckpt}")
    return 0


def cmd_impute(args) -> int:
    out = _out_dir(args)
    params, config = core.load_checkpoint(args.checkpoint)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    data, names = io.load_matrix_csv(args.data)
    result = core.impute(data, params, config)
    io.write_complete_csv(os.path.join(out, "completed.csv"), result.completed, names)
    io.write_complete_csv(os.path.join(out, "prob_mask.csv"), result.prob_mask, names)
    _echo(out, {"model": asdict(config), "run": {"data": args.data,
                                                 "checkpoint": args.checkpoint}})
    print(f"wrote completed.csv and prob_mask.csv to {out}")
    return 0


def cmd_eval(args) -> int:
    out = _out_dir(args)
    truth, _ = io.load_complete_csv(args.truth)
    observed, _ = io.load_matrix_csv(args.observed)
    completed, _ = io.load_complete_csv(args.completed)
    metrics = evaluate.score_external(truth, completed, observed.mask)
    if args.prob_mask:
        prob, _ = io.load_complete_csv(args.prob_mask)
        metrics["mask_accuracy"] = evaluate.mask_accuracy(observed.mask, prob)
    with open(os.path.join(out, "metrics.csv"), "w") as f:
        f.write("metric,value\n")
        f.writelines(f"{k},{repr(v)}\n" for k, v in metrics.items())
    _echo(out, {"run": {"truth": args.truth, "observed": args.observed,
                        "completed": args.completed}})
    for k, v in metrics.items():
        print(f"{k} = {v:.6f}")
    return 0


def cmd_bench(args) -> int:
    out = _out_dir(args)
    file_cfg = _load_file_config(args)
    config = _model_config(args, file_cfg)
    spec = _missing_spec(args, file_cfg)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHOD_CHOICES:
            raise MnarkitError(f"unknown method {m!r}")
    seeds = ([int(s) for s in args.seeds.split(",")] if args.seeds
             else list(range(args.n_runs)))
    dataset = evaluate.GaussianDatasetSpec(n=args.n, d=args.d, rho=args.rho)
    report = evaluate.run_experiment(dataset, spec, methods, config,
                                     n_runs=len(seeds), seeds=seeds)
    path = os.path.join(out, "report.csv")
    report.write_csv(path)
    _echo(out, {"model": asdict(config), "missing": asdict(spec),
                "data": asdict(dataset), "run": {"seeds": tuple(seeds),
                                                 "methods": tuple(methods)}})
    for row in report.rows:
        print(f"{row['method']:>18} {row['metric']:<22} "
              f"{row['mean']:.4f} +- {row['stderr']:.4f}")
    print(f"report written to {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MnarkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
