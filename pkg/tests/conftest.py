import json
import os
import shutil
from pathlib import Path

import pytest

import featmimic.harness as harness
from featmimic.fixtures import bundled_config_path, bundled_network, data_dir

TESTS_DATA = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def tests_data():
    return TESTS_DATA


@pytest.fixture(scope="session")
def bundled_cfg():
    return harness.load_config(bundled_config_path())


@pytest.fixture(scope="session")
def bundled_net():
    return bundled_network()


@pytest.fixture(scope="session")
def sweep_dir(bundled_cfg, tmp_path_factory):
    """One full four-scenario harness run with exported reports.

    Expensive (tens of seconds), so it is shared by the harness tests and
    the acceptance suite.
    """
    out = tmp_path_factory.mktemp("sweep")
    all_records = []
    for scenario in harness.SCENARIOS:
        result = harness.run_scenario(bundled_cfg, scenario, out_dir=str(out), jobs=2)
        harness.export_records(result.records, str(out / f"records_{scenario}.csv"), "csv")
        harness.export_records(
            result.records, str(out / f"records_{scenario}.jsonl"), "jsonl"
        )
        all_records.extend(result.records)
    rows = harness.aggregate(all_records)
    harness.export_summary(rows, str(out / "summary.csv"), "csv")
    harness.export_summary(rows, str(out / "summary.jsonl"), "jsonl")
    return out


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory):
    """Two-identity config over bundled images, small enough for repeated runs.

    far_target is loosened to 0.5 because two probes against two templates
    only yield two impostor scores.
    """
    root = tmp_path_factory.mktemp("tiny")
    images = root / "images"
    images.mkdir()
    src = Path(data_dir()) / "images"
    wanted = []
    for identity in ("p00", "p01"):
        wanted += [f"{identity}_e0{i}.pgm" for i in range(3)]
        wanted += [f"{identity}_q00.pgm", f"{identity}_a00.pgm"]
    wanted.append("x00_a00.pgm")
    for name in wanted:
        shutil.copy(src / name, images / name)

    enrollment = [
        f"{identity} images/{identity}_e0{i}.pgm"
        for identity in ("p00", "p01")
        for i in range(3)
    ]
    probes = [f"{identity} images/{identity}_q00.pgm" for identity in ("p00", "p01")]
    adversaries = [
        "int_p00 internal p00 images/p00_a00.pgm",
        "ext_x00 external - images/x00_a00.pgm",
    ]
    (root / "enrollment.tsv").write_text("\n".join(enrollment) + "\n")
    (root / "probes.tsv").write_text("\n".join(probes) + "\n")
    (root / "adversaries.tsv").write_text("\n".join(adversaries) + "\n")
    config = {
        "network": {"description": "net.txt", "weights": "net.weights"},
        "descriptor_tap": "descriptor",
        "score_tap": "scores",
        "class_labels": [f"p{i:02d}" for i in range(10)],
        "enrollment": "enrollment.tsv",
        "probes": "probes.tsv",
        "adversaries": "adversaries.tsv",
        "attack": {"max_steps": 500, "step_linf": 1.0},
        "scenarios": {
            "end_to_end_softmax": {},
            "end_to_end_descriptor": {},
            "euclidean_system": {"far_target": 0.5},
            "cosine_system": {"far_target": 0.5},
        },
    }
    shutil.copy(Path(data_dir()) / "net.txt", root / "net.txt")
    shutil.copy(Path(data_dir()) / "net.weights", root / "net.weights")
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return root / "config.json"
