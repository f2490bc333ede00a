"""Command-line entry point: ``asymcity citygen|featurize|train|analyze|pipeline``.

Every command reads the experiment config (``--config``, YAML or JSON);
``--seed`` and ``--out`` override ``seed`` and ``output_dir``. Stages
exchange files inside the output directory::

    citygen    -> city.json
    featurize  city.json -> dataset.jsonl
    train      dataset.jsonl -> checkpoint.json, training_log.csv
    analyze    city.json, dataset.jsonl, checkpoint.json -> report.json,
               projection.csv, distance_matrix.svg, embedding.svg,
               exposure_map.csv, exposure_map.svg
    pipeline   all of the above for the six standard cities

Training always starts from a fresh initialisation.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import pipeline as pl
from .encoder import load_checkpoint, save_checkpoint
from .errors import AsymCityError, NumericError
from .morphology import load_city, save_city
from .trajectories import load_dataset, save_dataset

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"required file not found: {path}")
    return path


def _load(args) -> pl.ExperimentConfig:
    cfg = pl.load_config(_require(args.config)) if args.config else pl.ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    cfg.validate()
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg


def _path(cfg, name):
    return os.path.join(cfg.output_dir, name)


def cmd_citygen(cfg):
    city = pl.make_city(cfg)
    save_city(city, _path(cfg, "city.json"))
    print(_path(cfg, "city.json"))


def cmd_featurize(cfg):
    city = load_city(_require(_path(cfg, "city.json")))
    dataset = pl.make_dataset(cfg, city)
    save_dataset(dataset, _path(cfg, "dataset.jsonl"))
    print(_path(cfg, "dataset.jsonl"))


def _check_dataset(cfg, dataset):
    seq_len = len(dataset.trajectories[0].features)
    enc = cfg.encoder_config()
    if dataset.K != enc.n_origins or seq_len != enc.seq_len:
        raise AsymCityError(f"dataset has K={dataset.K}, seq_len={seq_len}; config expects "
                            f"K={enc.n_origins}, seq_len={enc.seq_len}")


def cmd_train(cfg):
    dataset = load_dataset(_require(_path(cfg, "dataset.jsonl")))
    _check_dataset(cfg, dataset)
    params, tlog, enc_cfg = pl.fit(cfg, dataset)
    save_checkpoint(params, enc_cfg, _path(cfg, "checkpoint.json"),
                    {"shared_dim": enc_cfg.shared_dim, "config_digest": pl.config_digest(cfg)})
    with open(_path(cfg, "training_log.csv"), "w") as fh:
        fh.write(tlog.to_csv())
    print(f"epochs={tlog.stopping_epoch} best_epoch={tlog.best_epoch} "
          f"normalized_recon_error={tlog.normalized_recon_error:.4f}")


def cmd_analyze(cfg):
    city = load_city(_require(_path(cfg, "city.json")))
    dataset = load_dataset(_require(_path(cfg, "dataset.jsonl")))
    params, enc_cfg, _ = load_checkpoint(_require(_path(cfg, "checkpoint.json")))
    summary, report = pl.summarize(cfg, params, enc_cfg, dataset)
    pl.write_analysis(cfg, city, summary, report, cfg.output_dir)
    print(f"origin_divergence={report.origin_divergence:.6f} "
          f"global_asymmetry={report.global_asymmetry:.6f}")


def cmd_pipeline(cfg):
    report = pl.run_pipeline(cfg)
    for row in report["table"]:
        print(f"{row['layout']:>6} {row['height_mode']:>8}  D_origin={row['origin_divergence']:.6f}  "
              f"A_global={row['global_asymmetry']:.6f}")
    for layout, s in report["spread"].items():
        print(f"{layout} spread of D_origin: {s['origin_divergence']:.4%}")


COMMANDS = {
    "citygen": cmd_citygen,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
}


def build_parser():
    parser = _Parser(prog="asymcity", description="Origin-conditioned trajectory encoding experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (YAML or JSON)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](_load(args))
    except NumericError as exc:
        print(f"asymcity: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AsymCityError, FileNotFoundError) as exc:
        print(f"asymcity: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
