"""Experiment configuration and end-to-end orchestration.

Seeds for every stage are derived from the master seed with
:func:`asymcity.trajectories.sub_seed` (``master XOR crc32(tag)``):

=============  ==========================
stage          tag
=============  ==========================
heights        ``heights/<layout>/<mode>``
dataset        ``data/<layout>``
training       ``train/<layout>``
=============  ==========================

Dataset and training seeds depend on the layout only, so the three height
variants of a layout share walks and initial weights and differ only in
their building heights.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import yaml

from . import svg
from .asymmetry import analyze, nearest_centroid_accuracy, shared_dispersion
from .encoder import EncoderConfig, init_params, save_checkpoint
from .errors import ParameterError, SchemaError
from .morphology import (GridParams, RadialParams, assign_heights, generate_grid_city,
                         generate_radial_city, load_city, save_city)
from .perception import PerceptionConfig, exposure_csv, exposure_map
from .trajectories import DatasetConfig, build_dataset, save_dataset, select_origins, sub_seed
from .training import TrainConfig, train

log = logging.getLogger(__name__)

STANDARD_CITIES = [(layout, mode) for layout in ("grid", "radial")
                   for mode in ("uniform", "gradient", "random")]


@dataclass
class CitySpec:
    layout: str = "grid"
    height_mode: str = "uniform"
    import_path: str | None = None
    grid: GridParams = field(default_factory=GridParams)
    radial: RadialParams = field(default_factory=RadialParams)


@dataclass
class TrajectorySpec:
    K: int = 8
    N_k: int = 64
    L: int = 20
    train_fraction: float = 0.9


@dataclass
class EncoderSpec:
    lstm_hidden: int = 32
    origin_embed_dim: int = 64
    latent_dim: int = 64
    shared_dim: int = 32
    fusion_hidden: int = 128
    decoder_hidden: int = 128


@dataclass
class TrainSpec:
    epochs: int = 80
    batch_size: int = 16
    learning_rate: float = 0.002
    margin: float = 1.0
    lambda_recon: float = 1.0
    lambda_contrast: float = 0.5
    lambda_shared: float = 0.1
    lambda_ortho: float = 0.01
    clip_norm: float = 1.0
    early_stop_patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    contrastive_form: str = "standard"


@dataclass
class AnalysisSpec:
    grid_step: float = 10.0


@dataclass
class ExperimentConfig:
    city: CitySpec = field(default_factory=CitySpec)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    trajectories: TrajectorySpec = field(default_factory=TrajectorySpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output_dir: str = "runs/default"
    seed: int = 0

    # derived sub-configs

    def dataset_config(self) -> DatasetConfig:
        t = self.trajectories
        return DatasetConfig(t.K, t.N_k, t.L, t.train_fraction,
                             sub_seed(self.seed, f"data/{self.city.layout}"))

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(n_origins=self.trajectories.K, seq_len=self.trajectories.L + 1,
                             **dataclasses.asdict(self.encoder))

    def train_config(self) -> TrainConfig:
        return TrainConfig(**dataclasses.asdict(self.train),
                           seed=sub_seed(self.seed, f"train/{self.city.layout}"))

    def heights_seed(self) -> int:
        return sub_seed(self.seed, f"heights/{self.city.layout}/{self.city.height_mode}")

    def validate(self):
        if self.city.import_path is None:
            if self.city.layout not in ("grid", "radial"):
                raise ParameterError("city.layout", f"unknown layout {self.city.layout!r}; "
                                     "valid layouts: grid, radial (or set city.import_path)")
            if self.city.height_mode not in ("uniform", "gradient", "random"):
                raise ParameterError("city.height_mode", f"unknown height mode {self.city.height_mode!r}; "
                                     "valid modes: uniform, gradient, random")
            (self.city.grid if self.city.layout == "grid" else self.city.radial).validate()
        self.perception.validate()
        self.dataset_config().validate()
        self.encoder_config().validate()
        self.train_config().validate()
        if not self.analysis.grid_step > 0:
            raise ParameterError("analysis.grid_step", "must be > 0")


_SECTIONS = {
    "city": CitySpec, "perception": PerceptionConfig, "trajectories": TrajectorySpec,
    "encoder": EncoderSpec, "train": TrainSpec, "analysis": AnalysisSpec,
}


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise SchemaError(path, "expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise SchemaError(f"{path}.{unknown[0]}", f"unknown field; expected one of {sorted(names)}")
    kwargs = {}
    for key, value in data.items():
        if cls is CitySpec and key in ("grid", "radial"):
            value = _build(GridParams if key == "grid" else RadialParams, value, f"{path}.{key}")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise SchemaError(f"$.{unknown[0]}", f"unknown field; expected one of {sorted(top)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build(cls, data.get(name), f"$.{name}")
    if "output_dir" in data:
        kwargs["output_dir"] = str(data["output_dir"])
    if "seed" in data:
        if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
            raise SchemaError("$.seed", "expected an integer")
        kwargs["seed"] = data["seed"]
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SchemaError("$", f"cannot parse config: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_digest(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical config, excluding the output directory."""
    data = config_to_dict(cfg)
    data.pop("output_dir")
    blob = json.dumps(data, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def with_city(cfg: ExperimentConfig, layout: str, height_mode: str) -> ExperimentConfig:
    return dataclasses.replace(cfg, city=dataclasses.replace(cfg.city, layout=layout, height_mode=height_mode))


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# --- stages ---

def make_city(cfg: ExperimentConfig):
    c = cfg.city
    if c.import_path is not None:
        return load_city(c.import_path)
    if c.layout == "grid":
        city = generate_grid_city(c.grid, cfg.seed)
        hp = c.grid
    else:
        city = generate_radial_city(c.radial, cfg.seed)
        hp = c.radial
    return assign_heights(city, c.height_mode, cfg.heights_seed(),
                          h_uniform=hp.h_uniform, h_min=hp.h_min, h_max=hp.h_max)


def make_dataset(cfg: ExperimentConfig, city):
    dcfg = cfg.dataset_config()
    origins = select_origins(city.network, dcfg.K, dcfg.seed)
    return build_dataset(city, origins, dcfg, cfg.perception)


def fit(cfg: ExperimentConfig, dataset):
    enc_cfg = cfg.encoder_config()
    params, tlog = train(dataset, enc_cfg, cfg.train_config())
    return params, tlog, enc_cfg


def summarize(cfg: ExperimentConfig, params, enc_cfg, dataset, tlog=None) -> dict:
    """Asymmetry report plus the diagnostics used to judge a trained city."""
    ds = enc_cfg.shared_dim
    meta = {"layout": cfg.city.layout, "height_mode": cfg.city.height_mode,
            "seed": cfg.seed, "config_digest": config_digest(cfg)}
    report = analyze(params, dataset, ds, meta)
    init = init_params(enc_cfg, sub_seed(cfg.train_config().seed, "init"))
    summary = {
        "asymmetry": report.to_dict(),
        "nearest_centroid_accuracy": nearest_centroid_accuracy(params, dataset, ds),
        "shared_dispersion_initial": shared_dispersion(init, dataset, ds),
        "shared_dispersion_final": shared_dispersion(params, dataset, ds),
    }
    if tlog is not None:
        summary["training"] = {
            "epochs_run": tlog.stopping_epoch,
            "best_epoch": tlog.best_epoch,
            "initial_total": tlog.initial_total,
            "final_total": tlog.epochs[-1]["total"],
            "best_val_total": min(r["val_total"] for r in tlog.epochs),
            "normalized_recon_error": tlog.normalized_recon_error,
        }
    return summary, report


def write_analysis(cfg: ExperimentConfig, city, summary, report, out_dir, render=True):
    _write(os.path.join(out_dir, "report.json"), _dump_json(summary))
    _write(os.path.join(out_dir, "projection.csv"), report.projection_csv())
    if not render:
        return
    _write(os.path.join(out_dir, "distance_matrix.svg"), svg.matrix_heatmap(report.distance_matrix))
    _write(os.path.join(out_dir, "embedding.svg"),
           svg.scatter(report.projection, report.projection_origins))
    emap = exposure_map(city, cfg.perception, cfg.analysis.grid_step)
    _write(os.path.join(out_dir, "exposure_map.csv"), exposure_csv(emap))
    _write(os.path.join(out_dir, "exposure_map.svg"), svg.grid_heatmap(emap.values))


def run_city(cfg: ExperimentConfig, out_dir, render=True) -> dict:
    """citygen -> featurize -> train -> analyze for one city, writing every artifact."""
    os.makedirs(out_dir, exist_ok=True)
    city = make_city(cfg)
    save_city(city, os.path.join(out_dir, "city.json"))
    dataset = make_dataset(cfg, city)
    save_dataset(dataset, os.path.join(out_dir, "dataset.jsonl"))
    params, tlog, enc_cfg = fit(cfg, dataset)
    save_checkpoint(params, enc_cfg, os.path.join(out_dir, "checkpoint.json"),
                    {"shared_dim": enc_cfg.shared_dim, "config_digest": config_digest(cfg)})
    _write(os.path.join(out_dir, "training_log.csv"), tlog.to_csv())
    summary, report = summarize(cfg, params, enc_cfg, dataset, tlog)
    write_analysis(cfg, city, summary, report, out_dir, render)
    return summary


def spread(values) -> float:
    lo, hi = min(values), max(values)
    return (hi - lo) / lo if lo > 0 else float("inf")


def run_pipeline(cfg: ExperimentConfig, out_dir=None, render=True) -> dict:
    """Run the six standard cities and write the cross-city comparison."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    cities = {}
    for layout, mode in STANDARD_CITIES:
        name = f"{layout}_{mode}"
        log.info("running %s", name)
        cities[name] = run_city(with_city(cfg, layout, mode), os.path.join(out_dir, name), render)

    table = []
    for layout, mode in STANDARD_CITIES:
        a = cities[f"{layout}_{mode}"]["asymmetry"]
        table.append({"layout": layout, "height_mode": mode,
                      "origin_divergence": a["origin_divergence"],
                      "origin_divergence_across_origins": a["origin_divergence_across_origins"],
                      "global_asymmetry": a["global_asymmetry"]})
    spreads = {}
    for layout in ("grid", "radial"):
        rows = [r for r in table if r["layout"] == layout]
        spreads[layout] = {
            "origin_divergence": spread([r["origin_divergence"] for r in rows]),
            "origin_divergence_across_origins": spread([r["origin_divergence_across_origins"] for r in rows]),
        }
    report = {"seed": cfg.seed, "config_digest": config_digest(cfg),
              "cities": cities, "table": table, "spread": spreads}
    _write(os.path.join(out_dir, "experiment_report.json"), _dump_json(report))
    lines = ["layout,height_mode,origin_divergence,origin_divergence_across_origins,global_asymmetry"]
    for r in table:
        lines.append(f"{r['layout']},{r['height_mode']},{r['origin_divergence']!r},"
                     f"{r['origin_divergence_across_origins']!r},{r['global_asymmetry']!r}")
    _write(os.path.join(out_dir, "cross_city.csv"), "\n".join(lines) + "\n")
    return report
