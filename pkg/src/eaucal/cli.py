"""Command-line entry point.

Subcommands: generate-data, train, warmup-scan, grid-search, evaluate,
retention-report.  Every config key is exposed as a --section.key flag
that overrides the config file; EAUCAL_OUTPUT_DIR is the only environment
override.  Exit codes: 0 success, 1 user error (bad flags, bad files,
bad config), 2 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback

from . import config as cfg_mod
from . import datasets, evaluation, metrics, training
from .checkpoint import load_checkpoint, save_checkpoint


class UserError(Exception):
    """Anything the operator can fix: flags, files, config values."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; bad usage is a user error
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser):
    parser.add_argument("--config", metavar="PATH", help="config file (sections of key = value)")
    for section, key, ftype, default in cfg_mod.iter_schema():
        name = f"--{section}.{key}"
        parser.add_argument(name, dest=name[2:], metavar=str(default),
                            help=argparse.SUPPRESS)


def _load_config(args):
    overrides = []
    for section, key, _, _ in cfg_mod.iter_schema():
        raw = getattr(args, f"{section}.{key}", None)
        if raw is not None:
            overrides.append((f"{section}.{key}", raw))
    return cfg_mod.load_config(args.config, overrides)


def _outdir(config):
    path = config.experiment.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _load_dataset(config):
    cfg_mod.require_data_path(config)
    if config.experiment.task == "trajectory":
        scenes, _ = datasets.load_scenes(config.data.path)
        return scenes
    if not config.data.target_column:
        raise UserError("data.target_column is required for the regression task")
    return datasets.load_regression_table(
        config.data.path, config.data.target_column, config.data.split_seed,
        (config.data.train_ratio, config.data.val_ratio, config.data.test_ratio))


def _write_train_outputs(config, result, outdir):
    save_checkpoint(os.path.join(outdir, "best.ckpt"), result.best_params, result.model_meta)
    save_checkpoint(os.path.join(outdir, "final.ckpt"), result.final_params, result.model_meta)
    result.log.save(os.path.join(outdir, "training_log.csv"))
    result.log.save_timing(os.path.join(outdir, "timing.txt"))
    with open(os.path.join(outdir, "config_used.txt"), "w") as fh:
        fh.write(cfg_mod.dump_config(config))


def cmd_generate_data(args):
    config = _load_config(args)
    synth = config.synth
    scenes = datasets.generate_scenes(synth)
    datasets.save_scenes(args.out, scenes, synth)
    print(f"wrote {len(scenes)} scenes ({synth.n_scenes} in-distribution, "
          f"{synth.n_shifted} shifted) to {args.out}")


def cmd_train(args):
    config = _load_config(args)
    dataset = _load_dataset(config)
    trainer = (training.train_trajectory if config.experiment.task == "trajectory"
               else training.train_regression)
    result = trainer(config, dataset)
    outdir = _outdir(config)
    _write_train_outputs(config, result, outdir)
    last = result.log.entries[-1]
    print(f"trained {len(result.log.entries)} epochs; "
          f"final primary={last.primary_loss!r} val={last.val_loss!r}; outputs in {outdir}")


def cmd_warmup_scan(args):
    config = _load_config(args)
    dataset = _load_dataset(config)
    scan = training.warmup_threshold_scan(config, dataset, args.epochs,
                                          args.ade_percentile, args.cert_percentile)
    text = training.render_scan(scan)
    outdir = _outdir(config)
    with open(os.path.join(outdir, "warmup_scan.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")


def _parse_grid(raw, name):
    try:
        values = tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise UserError(f"--{name}: expected comma-separated numbers, got {raw!r}") from None
    if not values:
        raise UserError(f"--{name}: empty grid")
    return values


GRID_COLUMNS = ("ade_th", "c_th", "beta", "r_auc", "headline_error")


def cmd_grid_search(args):
    config = _load_config(args)
    dataset = _load_dataset(config)
    ade_grid = _parse_grid(args.ade_grid, "ade-grid")
    c_grid = _parse_grid(args.c_grid, "c-grid")
    beta_grid = _parse_grid(args.beta_grid, "beta-grid")

    def evaluate_cell(cell_cfg, cell_dataset, params):
        if cell_cfg.experiment.task == "trajectory":
            _, val, _ = training.split_scenes(cell_dataset, cell_cfg.data)
            records = evaluation.evaluate_trajectory(cell_cfg, [params], val)
            bundle = metrics.evaluation_report(records, cell_cfg.evaluation.eval_config())["full"]
            return {"r_auc": bundle["r_auc"], "headline_error": bundle["weighted_ade"]}
        records, summary = evaluation.evaluate_regression(cell_cfg, params, cell_dataset, "val")
        bundle = metrics.evaluation_report(records, cell_cfg.evaluation.eval_config())["full"]
        return {"r_auc": bundle["r_auc"], "headline_error": summary["rmse"]}

    rows = training.grid_search(config, dataset, ade_grid, c_grid, beta_grid, evaluate_cell)
    lines = [",".join(GRID_COLUMNS)]
    lines += [",".join(repr(float(row[c])) for c in GRID_COLUMNS) for row in rows]
    table = "\n".join(lines) + "\n"
    outdir = _outdir(config)
    with open(os.path.join(outdir, "grid_search.csv"), "w") as fh:
        fh.write(table)
    print(table, end="")


def _check_meta(meta, expected_task, config):
    if meta.get("task") != expected_task:
        raise UserError(f"checkpoint task {meta.get('task')!r} does not match "
                        f"configured task {expected_task!r}")
    if meta.get("hidden") != config.model.hidden:
        raise UserError(f"checkpoint hidden size {meta.get('hidden')} does not match "
                        f"model.hidden {config.model.hidden}")


def cmd_evaluate(args):
    config = _load_config(args)
    dataset = _load_dataset(config)
    task = config.experiment.task
    loaded = []
    for path in args.checkpoint:
        try:
            arrays, meta = load_checkpoint(path)
        except (OSError, ValueError) as exc:
            raise UserError(str(exc)) from None
        _check_meta(meta, task, config)
        loaded.append((arrays, meta))

    if task == "trajectory":
        _, _, test = training.split_scenes(dataset, config.data)
        sample = test[0]
        for _, meta in loaded:
            if (meta["context_dim"] != sample.context.shape[0]
                    or meta["horizon"] != sample.target.horizon):
                raise UserError(
                    f"checkpoint geometry (context_dim={meta['context_dim']}, "
                    f"horizon={meta['horizon']}) does not match dataset "
                    f"({sample.context.shape[0]}, {sample.target.horizon})")
        records = evaluation.evaluate_trajectory(config, [a for a, _ in loaded], test)
        extras = None
    else:
        if len(loaded) != 1:
            raise UserError("regression evaluation takes exactly one checkpoint")
        arrays, meta = loaded[0]
        if meta["in_dim"] != dataset.features.shape[1]:
            raise UserError(f"checkpoint in_dim {meta['in_dim']} does not match "
                            f"dataset feature count {dataset.features.shape[1]}")
        if meta["dropout"] != config.model.dropout:
            raise UserError(f"checkpoint dropout {meta['dropout']} does not match "
                            f"model.dropout {config.model.dropout}")
        records, extras = evaluation.evaluate_regression(config, arrays, dataset)

    eval_cfg = config.evaluation.eval_config()
    report = metrics.evaluation_report(records, eval_cfg)
    text = evaluation.render_report(report, extras)
    outdir = _outdir(config)
    evaluation.save_records(os.path.join(outdir, "records.csv"), records)
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write(text)
    for name, curve in evaluation.build_curves(records, eval_cfg).items():
        evaluation.write_curve(os.path.join(outdir, f"{name}.csv"), curve)
    print(text, end="")


def cmd_retention_report(args):
    config = _load_config(args)
    records = evaluation.load_records(args.records)
    eval_cfg = config.evaluation.eval_config()
    report = metrics.evaluation_report(records, eval_cfg)
    text = evaluation.render_report(report)
    outdir = _outdir(config)
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write(text)
    for name, curve in evaluation.build_curves(records, eval_cfg).items():
        evaluation.write_curve(os.path.join(outdir, f"{name}.csv"), curve)
    print(text, end="")


def build_parser():
    parser = _Parser(prog="eaucal", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic trajectory scene file")
    p.add_argument("--out", required=True, metavar="PATH")
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train one model and write checkpoints plus logs")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("warmup-scan", help="short beta=0 run, then threshold suggestions")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--ade-percentile", type=float, default=50.0)
    p.add_argument("--cert-percentile", type=float, default=50.0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_warmup_scan)

    p = sub.add_parser("grid-search", help="train per grid cell, rank by validation R-AUC")
    p.add_argument("--ade-grid", required=True, metavar="A,B,...")
    p.add_argument("--c-grid", required=True, metavar="A,B,...")
    p.add_argument("--beta-grid", required=True, metavar="A,B,...")
    _add_config_flags(p)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("evaluate", help="score checkpoints on the held-out split")
    p.add_argument("--checkpoint", action="append", required=True, metavar="PATH",
                   help="repeat for an ensemble")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("retention-report", help="rebuild curves from a records file")
    p.add_argument("--records", required=True, metavar="PATH")
    _add_config_flags(p)
    p.set_defaults(func=cmd_retention_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (UserError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
