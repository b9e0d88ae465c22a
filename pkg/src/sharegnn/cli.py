"""Command-line front door: generate, train, evaluate, predict, verify.

Config values come from an optional flat `key = value` file; command-line
flags override file values; defaults match the model's standard settings.
The effective configuration is echoed into every output manifest.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import get_type_hints

import numpy as np

from .autodiff import backward, no_recording
from .checkpoint import CheckpointError, restore_model, save_checkpoint
from .data import (
    CitySpec,
    ParkingDataset,
    SeriesSpec,
    WindowSample,
    build_features,
    generate_city,
    generate_observations,
    load_dataset,
    save_dataset,
)
from .gradcheck import finite_difference_oracle, max_relative_error
from .graph import build_city_graph
from .manifest import parse_bool, read_kv, write_kv
from .model import ModelParams, Variant, compute_losses, forward_window, predictions_to_counts
from .training import TrainConfig, evaluate, train
from .validation import ensure_variant


@dataclass
class RunConfig:
    """Model and training settings; defaults are the standard values."""

    window: int = 12
    horizon: int = 3
    eps_km: float = 1.0
    k_nn: int = 10
    hidden: int = 32
    p_bins: int = 50
    latent_ratio: float = 0.1
    beta: float = 0.5
    lr: float = 0.001
    epochs: int = 200
    patience: int = 10
    windows_per_epoch: int = 0
    val_windows: int = 0
    all_steps_losses: bool = False
    train_frac: float = 0.6
    val_frac: float = 0.2
    variant: str = "share"
    seed: int = 0


@dataclass
class GenConfig:
    """Synthetic-city generator settings."""

    n_lots: int = 200
    width_km: float = 6.0
    height_km: float = 3.0
    spacing_km: float = 0.2
    cap_min: int = 30
    cap_max: int = 300
    labeled_frac: float = 0.3
    n_steps: int = 2880
    steps_per_day: int = 96
    zone_rho: float = 0.97
    zone_std: float = 0.08
    diffusion: float = 0.5
    noise_std: float = 0.03
    eps_km: float = 1.0
    seed: int = 0


def _coerce(typ, raw):
    if typ is bool:
        return parse_bool(raw) if isinstance(raw, str) else bool(raw)
    return typ(raw)


def load_config(cls, path=None, overrides=None):
    cfg = cls()
    hints = get_type_hints(cls)
    if path:
        for key, raw in read_kv(path).items():
            if key not in hints:
                raise ValueError(f"unknown config key {key!r} in {path}")
            setattr(cfg, key, _coerce(hints[key], raw))
    for key, value in (overrides or {}).items():
        if value is not None and key in hints:
            setattr(cfg, key, _coerce(hints[key], value))
    return cfg


def config_pairs(cfg, prefix="config"):
    return {f"{prefix}.{f.name}": getattr(cfg, f.name) for f in fields(cfg)}


def add_config_flags(parser, cls):
    hints = get_type_hints(cls)
    for f in fields(cls):
        flag = "--" + f.name.replace("_", "-")
        if hints[f.name] is bool:
            parser.add_argument(flag, default=None, metavar="BOOL")
        else:
            parser.add_argument(flag, type=hints[f.name], default=None)


def overrides_from_args(args, cls):
    return {f.name: getattr(args, f.name, None) for f in fields(cls)}


def split_fractions(cfg: RunConfig):
    test = 1.0 - cfg.train_frac - cfg.val_frac
    if cfg.train_frac <= 0 or cfg.val_frac < 0 or test < -1e-9:
        raise ValueError(
            f"invalid split: train={cfg.train_frac}, val={cfg.val_frac}"
        )
    return (cfg.train_frac, cfg.val_frac, max(0.0, test))


def build_dataset(data_dir, cfg: RunConfig):
    city, series = load_dataset(data_dir)
    dataset = ParkingDataset.build(
        city, series, cfg.window, cfg.horizon, fractions=split_fractions(cfg)
    )
    graph = build_city_graph(city.lots, city.net, eps_km=cfg.eps_km, k_nn=cfg.k_nn)
    return city, dataset, graph


def init_params(cfg: RunConfig, n_lots, n_features, variant=None):
    latent = max(1, round(cfg.latent_ratio * n_lots))
    return ModelParams.init(
        cfg.seed,
        variant if variant is not None else ensure_variant(cfg.variant),
        n_features,
        hidden=cfg.hidden,
        p_bins=cfg.p_bins,
        latent=latent,
        horizons=cfg.horizon,
        slope=0.2,
    )


def train_config(cfg: RunConfig):
    return TrainConfig(
        epochs=cfg.epochs,
        patience=cfg.patience,
        lr=cfg.lr,
        beta=cfg.beta,
        windows_per_epoch=cfg.windows_per_epoch,
        val_windows=cfg.val_windows,
        all_steps_losses=cfg.all_steps_losses,
        seed=cfg.seed,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args):
    cfg = load_config(GenConfig, args.config, overrides_from_args(args, GenConfig))
    city_spec = CitySpec(
        n_lots=cfg.n_lots, width_km=cfg.width_km, height_km=cfg.height_km,
        spacing_km=cfg.spacing_km, cap_min=cfg.cap_min, cap_max=cfg.cap_max,
        labeled_frac=cfg.labeled_frac, seed=cfg.seed,
    )
    series_spec = SeriesSpec(
        n_steps=cfg.n_steps, steps_per_day=cfg.steps_per_day, zone_rho=cfg.zone_rho,
        zone_std=cfg.zone_std, diffusion=cfg.diffusion, noise_std=cfg.noise_std,
        eps_km=cfg.eps_km,
    )
    city = generate_city(city_spec)
    series = generate_observations(city, series_spec)
    save_dataset(args.out, city, series, extra=config_pairs(cfg))
    n_labeled = int(city.labeled_flags.sum())
    print(
        f"wrote {cfg.n_lots} lots ({n_labeled} labeled), {cfg.n_steps} steps to {args.out}"
    )
    return 0


def cmd_train(args):
    cfg = load_config(RunConfig, args.config, overrides_from_args(args, RunConfig))
    _city, dataset, graph = build_dataset(args.data, cfg)
    params = init_params(cfg, graph.n_lots, dataset.features.shape[2])
    log = None if args.quiet else print
    result = train(params, dataset, graph, train_config(cfg), log=log)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    echo = config_pairs(cfg)
    save_checkpoint(outdir / "model.ckpt", params, extra=echo)
    (outdir / "metrics.csv").write_text(result.metrics_text())
    summary = dict(echo)
    summary.update(
        {
            "result.epochs_run": result.epochs_run,
            "result.best_epoch": result.best_epoch,
            "result.best_val_o1": result.best_val_o1,
        }
    )
    write_kv(outdir / "run_manifest.txt", summary)
    print(
        f"trained {cfg.variant} for {result.epochs_run} epochs "
        f"(best epoch {result.best_epoch}); wrote {outdir / 'model.ckpt'}"
    )
    return 0


def _config_from_manifest(manifest):
    hints = get_type_hints(RunConfig)
    cfg = RunConfig()
    for key, raw in manifest.items():
        if key.startswith("config."):
            name = key[len("config."):]
            if name in hints:
                setattr(cfg, name, _coerce(hints[name], raw))
    return cfg


def _format_eval_table(report, split):
    lines = [f"split: {split}  windows: {report.n_windows}"]
    lines.append(f"{'horizon':>7}  {'lots':<9}  {'mae':>10}  {'rmse':>10}")
    rows = []
    for cls_name, tally in (("labeled", report.labeled), ("unlabeled", report.unlabeled)):
        if tally.count.sum() == 0:
            continue
        for h in range(report.horizons):
            rows.append((str(h + 1), cls_name, tally.mae(h), tally.rmse(h)))
        rows.append(("all", cls_name, tally.mae(), tally.rmse()))
    for horizon, cls_name, mae, rmse in rows:
        lines.append(f"{horizon:>7}  {cls_name:<9}  {mae:>10.4f}  {rmse:>10.4f}")
    csv_lines = ["horizon,lot_class,mae,rmse"]
    for horizon, cls_name, mae, rmse in rows:
        csv_lines.append(f"{horizon},{cls_name},{mae:.17g},{rmse:.17g}")
    return "\n".join(lines), "\n".join(csv_lines) + "\n"


def cmd_evaluate(args):
    params, manifest = restore_model(args.checkpoint)
    cfg = _config_from_manifest(manifest)
    _city, dataset, graph = build_dataset(args.data, cfg)
    report, losses = evaluate(
        params, dataset, graph, args.split, beta=cfg.beta,
        max_windows=args.max_windows, all_steps_losses=cfg.all_steps_losses,
    )
    table, csv_text = _format_eval_table(report, args.split)
    print(table)
    print(f"mean losses: o1 {losses['o1']:.6f}, o2 {losses['o2']:.6f}, o3 {losses['o3']:.6f}")
    outdir = Path(args.out) if args.out else Path(args.checkpoint).parent
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"evaluation_{args.split}.csv").write_text(csv_text)
    pairs = dict(config_pairs(cfg))
    pairs["evaluate.split"] = args.split
    pairs["evaluate.windows"] = report.n_windows
    write_kv(outdir / f"evaluation_{args.split}_manifest.txt", pairs)
    return 0


def cmd_predict(args):
    params, manifest = restore_model(args.checkpoint)
    cfg = _config_from_manifest(manifest)
    city, series = load_dataset(args.data)
    graph = build_city_graph(city.lots, city.net, eps_km=cfg.eps_km, k_nn=cfg.k_nn)
    features = build_features(city, series)
    n_steps = series.pa.shape[0]
    start = args.start if args.start is not None else n_steps - cfg.window
    if not 0 <= start <= n_steps - cfg.window:
        raise ValueError(
            f"start must be in [0, {n_steps - cfg.window}], got {start}"
        )
    sample = WindowSample(
        start=start,
        features=features[start : start + cfg.window],
        pa=series.pa[start : start + cfg.window],
        targets=np.zeros((0, city.n_lots), dtype=np.int64),
    )
    with no_recording():
        result = forward_window(params, sample, graph)
    counts = predictions_to_counts(result.predictions, graph.capacities)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["step,lot_id,pa_pred"]
    for h in range(counts.shape[0]):
        for i in range(city.n_lots):
            lines.append(f"{start + cfg.window + h},{i},{counts[h, i]:.17g}")
    out.write_text("\n".join(lines) + "\n")
    pairs = dict(config_pairs(cfg))
    pairs["predict.start"] = start
    write_kv(out.with_suffix(out.suffix + ".manifest.txt"), pairs)
    print(f"wrote {counts.shape[0]} x {city.n_lots} forecasts to {out}")
    return 0


def gradient_check_report(seed=0, window=4, hidden=8, p_bins=8, latent=2,
                          horizon=2, h_step=1e-5):
    """Max relative error per parameter group on a small toy city."""
    city = generate_city(
        CitySpec(n_lots=6, width_km=2.0, height_km=1.0, spacing_km=0.1,
                 cap_min=20, cap_max=60, labeled_frac=0.5, seed=seed)
    )
    series = generate_observations(
        city, SeriesSpec(n_steps=window + horizon + 4, zone_std=0.02, noise_std=0.02)
    )
    dataset = ParkingDataset.build(city, series, window, horizon, fractions=(1.0, 0.0, 0.0))
    graph = build_city_graph(city.lots, city.net, eps_km=1.0, k_nn=2)
    params = ModelParams.init(
        seed, Variant.SHARE, dataset.features.shape[2], hidden=hidden,
        p_bins=p_bins, latent=latent, horizons=horizon,
    )
    sample = dataset.sample("train", 0)

    def objective():
        result = forward_window(params, sample, graph)
        return compute_losses(result, sample, graph, beta=0.5, p_bins=p_bins).total

    named = params.named_parameters()
    backward(objective())
    analytic = {name: t.grad.copy() for name, t in named}
    with no_recording():
        numeric = finite_difference_oracle(
            lambda: objective().values, [t for _n, t in named], h=h_step
        )
    per_param = {
        name: max_relative_error(analytic[name], num)
        for (name, _t), num in zip(named, numeric)
    }
    report = {}
    for group, names in params.parameter_groups().items():
        report[group] = max(per_param[n] for n in names)
    return report


def cmd_grad_check(args):
    report = gradient_check_report(
        seed=args.seed, window=args.window, hidden=args.hidden,
        p_bins=args.p_bins, latent=args.latent, horizon=args.horizon,
    )
    worst = max(report.values())
    for group in sorted(report):
        print(f"{group:<8} {report[group]:.3e}")
    status = "OK" if worst < args.tolerance else "FAIL"
    print(f"max relative error: {worst:.3e} (tolerance {args.tolerance:g}) {status}")
    return 0 if worst < args.tolerance else 1


def cmd_ablation(args):
    cfg = load_config(RunConfig, args.config, overrides_from_args(args, RunConfig))
    _city, dataset, graph = build_dataset(args.data, cfg)
    seeds = [int(s) for s in args.seeds.split(",")]
    variant_names = args.variants.split(",")
    results = []
    for name in variant_names:
        variant = ensure_variant(name.strip())
        unlab, lab = [], []
        for seed in seeds:
            run_cfg = RunConfig(**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)})
            run_cfg.seed = seed
            run_cfg.variant = variant.value
            params = init_params(run_cfg, graph.n_lots, dataset.features.shape[2], variant)
            train(params, dataset, graph, train_config(run_cfg))
            report, _losses = evaluate(
                params, dataset, graph, "test", beta=run_cfg.beta,
                max_windows=args.max_windows,
            )
            if report.unlabeled.count.sum() > 0:
                unlab.append(report.unlabeled.mae())
            lab.append(report.labeled.mae())
            if not args.quiet:
                print(f"{variant.value} seed {seed}: labeled {lab[-1]:.4f}"
                      + (f", unlabeled {unlab[-1]:.4f}" if unlab else ""))
        results.append(
            (variant.value,
             float(np.median(unlab)) if unlab else float("nan"),
             float(np.median(lab)))
        )

    print(f"{'variant':<10} {'unlabeled mae':>14} {'labeled mae':>12}")
    for name, u, l in results:
        print(f"{name:<10} {u:>14.4f} {l:>12.4f}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        csv_lines = ["variant,unlabeled_mae,labeled_mae"]
        for name, u, l in results:
            csv_lines.append(f"{name},{u:.17g},{l:.17g}")
        (outdir / "ablation.csv").write_text("\n".join(csv_lines) + "\n")
        pairs = dict(config_pairs(cfg))
        pairs["ablation.seeds"] = args.seeds
        pairs["ablation.variants"] = ",".join(v for v, _u, _l in results)
        write_kv(outdir / "ablation_manifest.txt", pairs)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sharegnn",
        description="semi-supervised parking availability prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic city and series")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="key = value config file")
    add_config_flags(p, GenConfig)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None)
    p.add_argument("--quiet", action="store_true")
    add_config_flags(p, RunConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--max-windows", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="forecast the next horizons for all lots")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=None,
                   help="window start step (default: end of series)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grad-check", help="compare gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--p-bins", type=int, default=8)
    p.add_argument("--latent", type=int, default=2)
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("ablation", help="train and compare model variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--variants", default="share,cagnn,cxtgnn,gru-only")
    p.add_argument("--seeds", default="0")
    p.add_argument("--max-windows", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    add_config_flags(p, RunConfig)
    p.set_defaults(func=cmd_ablation)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except (ValueError, TypeError, OSError, CheckpointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
