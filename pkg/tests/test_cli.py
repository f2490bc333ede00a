import csv
import json
import math
import os
import xml.etree.ElementTree as ET

import pytest
import yaml

from asymcity.cli import main
from asymcity.morphology import load_city, validate_city
from asymcity.pipeline import config_from_dict, run_pipeline, spread

TINY = {
    "city": {"layout": "grid", "height_mode": "uniform",
             "grid": {"blocks_per_side": 3, "block_pitch": 50.0, "building_inset": 5.0},
             "radial": {"rings": 2, "avenues": 5, "ring_spacing": 40.0, "building_inset": 4.0}},
    "trajectories": {"K": 3, "N_k": 6, "L": 4, "train_fraction": 0.7},
    "encoder": {"lstm_hidden": 3, "origin_embed_dim": 6, "latent_dim": 6, "shared_dim": 3,
                "fusion_hidden": 8, "decoder_hidden": 8},
    "train": {"epochs": 3, "batch_size": 6, "early_stop_patience": 2},
    "analysis": {"grid_step": 20.0},
    "seed": 1,
}

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return str(path)


def run(config, out, *extra):
    return main([extra[0], "--config", config, "--out", str(out), *extra[1:]])


def stages(config, out):
    for cmd in ("citygen", "featurize", "train", "analyze"):
        assert run(config, out, cmd) == 0


def test_citygen_writes_valid_city(config, tmp_path):
    assert run(config, tmp_path / "a", "citygen") == 0
    city = load_city(tmp_path / "a" / "city.json")
    validate_city(city)
    assert city.meta.layout == "grid"
    assert len(city.buildings) == 9


def test_citygen_seed_repeat_identical(config, tmp_path):
    for d in ("a", "b"):
        assert run(config, tmp_path / d, "citygen", "--seed", "7") == 0
    assert (tmp_path / "a/city.json").read_bytes() == (tmp_path / "b/city.json").read_bytes()


def test_unknown_layout_lists_valid(tmp_path, capsys):
    bad = json.loads(json.dumps(TINY))
    bad["city"]["layout"] = "hexagonal"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["citygen", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "grid" in err and "radial" in err and "hexagonal" in err


def test_unknown_config_field(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("train:\n  epochz: 3\n")
    assert main(["citygen", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "$.train.epochz" in capsys.readouterr().err


def test_missing_dataset_names_path(config, tmp_path, capsys):
    out = tmp_path / "empty"
    assert run(config, out, "train") == 2
    assert str(out / "dataset.jsonl") in capsys.readouterr().err


def test_usage_errors(config):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", "--resume", "x.json", "--config", config])
    assert exc.value.code == 1


def test_stages_produce_artifacts(config, tmp_path):
    out = tmp_path / "run"
    stages(config, out)
    for name in ("city.json", "dataset.jsonl", "checkpoint.json", "training_log.csv", "report.json",
                 "projection.csv", "distance_matrix.svg", "embedding.svg", "exposure_map.csv",
                 "exposure_map.svg"):
        assert (out / name).exists(), name
    with open(out / "training_log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert 1 <= len(rows) <= TINY["train"]["epochs"]
    report = json.loads((out / "report.json").read_text())
    assert report["asymmetry"]["K"] == 3

    cells = ET.parse(out / "distance_matrix.svg").getroot().findall(f"{SVG}rect")
    assert len(cells) == 3 * 3
    points = ET.parse(out / "embedding.svg").getroot().findall(f"{SVG}circle")
    assert len(points) == 3 * 6
    # grid city spans 0..150 in both axes
    n = math.ceil(150 / TINY["analysis"]["grid_step"])
    cells = ET.parse(out / "exposure_map.svg").getroot().findall(f"{SVG}rect")
    assert len(cells) == n * n
    with open(out / "exposure_map.csv") as fh:
        assert len(list(csv.DictReader(fh))) == n * n


def test_stages_idempotent(config, tmp_path):
    stages(config, tmp_path / "a")
    stages(config, tmp_path / "b")
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_train_rejects_mismatched_dataset(config, tmp_path, capsys):
    out = tmp_path / "m"
    assert run(config, out, "citygen") == 0
    assert run(config, out, "featurize") == 0
    other = json.loads(json.dumps(TINY))
    other["trajectories"]["K"] = 4
    path = tmp_path / "other.json"
    path.write_text(json.dumps(other))
    assert main(["train", "--config", str(path), "--out", str(out)]) == 2
    assert "K=3" in capsys.readouterr().err


def test_pipeline_tiny(config, tmp_path):
    out = tmp_path / "pipe"
    assert run(config, out, "pipeline") == 0
    report = json.loads((out / "experiment_report.json").read_text())
    assert sorted(report["cities"]) == sorted(f"{a}_{b}" for a in ("grid", "radial")
                                              for b in ("uniform", "gradient", "random"))
    for name in report["cities"]:
        assert (out / name / "report.json").exists()
    with open(out / "cross_city.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 6
    for layout in ("grid", "radial"):
        d = [r["origin_divergence"] for r in report["table"] if r["layout"] == layout]
        assert report["spread"][layout]["origin_divergence"] == pytest.approx((max(d) - min(d)) / min(d),
                                                                              abs=1e-15)


def test_pipeline_function_repeatable(tmp_path):
    cfg = config_from_dict(TINY)
    a = run_pipeline(cfg, tmp_path / "a", render=False)
    b = run_pipeline(cfg, tmp_path / "b", render=False)
    assert a == b
    assert ((tmp_path / "a/experiment_report.json").read_bytes()
            == (tmp_path / "b/experiment_report.json").read_bytes())


def test_spread_definition():
    assert spread([2.0, 3.0, 2.5]) == 0.5
    assert spread([1.0, 1.0]) == 0.0
