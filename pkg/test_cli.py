"""
Command-line tests: gen-data, train, eval, visualize and the error exit codes
"""

from dataclasses import replace
import numpy as np
import pandas as pd
import pytest
from PIL import Image

from main import main
from src.data.dataset import FrameDataset
from src.model.network import DsuNetwork
from src.model.policy import ModelPolicy
from src.optimization.trainer import Trainer, artifact_paths
from src.simulation.collection import read_manifest
from src.simulation.runner import RouteRunner
from src.simulation.scenario import generate_scenario
from src.utils.config import ExperimentConfig, load_config
from src.utils.metrics import read_report
from src.visualization.renderer import EGO_COLOR, WAYPOINT_COLOR, render_bev_panel

TINY_CONFIG = """
[model]
width_factor = 0.0625
R = 64
gru_hidden = 8
attention_heads = 2
input_size = 64
token_grid = 2
planning_mlp = 16, 16, 8
decoder_channels = 8 8 8 8 8
precision = float64

[train]
batch = 2
steps = 3
log_every = 1
checkpoint_every = 0
lr = 0.001
lambda_O = 0.4
"""


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "train"
    assert main(["gen-data", "--out", str(out), "--frames", "2", "--seed", "1", "--difficulty", "0"]) == 0
    return out


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


def test_gen_data_writes_frames_and_manifest(dataset_dir, tmp_path):
    frames = sorted(p.name for p in dataset_dir.iterdir() if p.is_dir())
    assert frames == ["frame_000000", "frame_000001"]
    manifest = read_manifest(dataset_dir / "manifest.tsv")
    assert int(manifest["frames"]) == 2 and int(manifest["seed"]) == 1

    again = tmp_path / "again"
    assert main(["gen-data", "--out", str(again), "--frames", "2", "--seed", "1", "--difficulty", "0"]) == 0
    assert (again / "frames.tsv").read_bytes() == (dataset_dir / "frames.tsv").read_bytes()
    assert (again / "frame_000001" / "labels.txt").read_text() == \
        (dataset_dir / "frame_000001" / "labels.txt").read_text()


def test_train_log_is_weighted_sum_and_resumes(dataset_dir, tiny_config_file, tmp_path):
    first = tmp_path / "first.ckpt"
    assert main(["train", "--config", str(tiny_config_file), "--data", str(dataset_dir), "--out", str(first)]) == 0
    log_path, plot_path = artifact_paths(first)
    assert first.is_file() and plot_path.is_file()
    log = pd.read_csv(log_path, sep="\t")
    assert list(log["step"]) == [1, 2, 3]
    weighted = log["wp"] + 0.4 * log["O"] + 0.4 * log["M"] + 0.2 * log["tf"] + 0.2 * log["wc"]
    assert np.all(np.abs(log["total"] - weighted) <= 1e-9 * np.maximum(1.0, log["total"].abs()))

    longer = tmp_path / "longer.cfg"
    longer.write_text(TINY_CONFIG.replace("steps = 3", "steps = 5"))
    second = tmp_path / "second.ckpt"
    assert main(["train", "--config", str(longer), "--data", str(dataset_dir), "--out", str(second),
                 "--resume", str(first)]) == 0
    resumed = pd.read_csv(artifact_paths(second)[0], sep="\t")
    assert list(resumed["step"]) == [1, 2, 3, 4, 5]
    assert np.allclose(resumed["total"].to_numpy()[:3], log["total"].to_numpy(), rtol=1e-15, atol=0.0)


def test_resumed_training_matches_uninterrupted_run(dataset_dir, tiny_config_file, tmp_path):
    config = load_config(str(tiny_config_file))
    config = replace(config, train=replace(config.train, steps=4))

    straight = Trainer(DsuNetwork(config.model), FrameDataset(dataset_dir, config.model), config,
                       tmp_path / "straight.ckpt")
    full = straight.fit()

    halted = Trainer(DsuNetwork(config.model), FrameDataset(dataset_dir, config.model), config,
                     tmp_path / "halted.ckpt")
    halted.fit(2)
    resumed = Trainer.resume(tmp_path / "halted.ckpt", DsuNetwork(config.model),
                             FrameDataset(dataset_dir, config.model), config, tmp_path / "halted.ckpt")
    assert resumed.step == 2
    log = resumed.fit()
    assert np.allclose(log["total"], full["total"], rtol=1e-12, atol=0.0)
    assert np.allclose(log["lr"], full["lr"], rtol=1e-15, atol=0.0)


def test_eval_expert_scores_full_marks(tmp_path):
    report = tmp_path / "eval.tsv"
    assert main(["eval", "--policy", "expert", "--routes", "2", "--difficulty", "0",
                 "--report", str(report)]) == 0
    frame = read_report(report)
    assert list(frame["DS"]) == [100.0, 100.0]
    assert report.read_text().splitlines()[-1].startswith("aggregate")
    rerun = tmp_path / "rerun.tsv"
    assert main(["eval", "--policy", "expert", "--routes", "2", "--difficulty", "0",
                 "--report", str(rerun)]) == 0
    assert rerun.read_bytes() == report.read_bytes()


def test_zero_weight_model_stands_still_and_is_blocked(tiny_config_file):
    config = load_config(str(tiny_config_file))
    network = DsuNetwork(config.model)
    for _, param in network.named_parameters():
        param.data[...] = 0.0
    result = RouteRunner(config).evaluate(generate_scenario(0, 0), ModelPolicy(network, config))
    assert [e.kind for e in result.events] == ["Block"]
    assert result.rc == 0.0 and result.ds == 0.0


def test_eval_width_mismatch_is_contract_error(tiny_config_file, tmp_path, capsys):
    config = load_config(str(tiny_config_file))
    ckpt = DsuNetwork(config.model).save(tmp_path / "tiny.ckpt")
    wider = tmp_path / "wider.cfg"
    wider.write_text(TINY_CONFIG.replace("width_factor = 0.0625", "width_factor = 0.125"))
    code = main(["eval", "--config", str(wider), "--ckpt", str(ckpt), "--routes", "1",
                 "--report", str(tmp_path / "r.tsv")])
    assert code == 3
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: contract:") and "width_factor" in err


def test_visualize_writes_panels(dataset_dir, tiny_config_file, tmp_path):
    config = load_config(str(tiny_config_file))
    ckpt = DsuNetwork(config.model).save(tmp_path / "tiny.ckpt")
    out = tmp_path / "vis"
    assert main(["visualize", "--ckpt", str(ckpt), "--frame", str(dataset_dir / "frame_000000"),
                 "--out", str(out)]) == 0
    for name in ("pred_bev", "pred_t1", "pred_t2", "pred_t3", "label_bev"):
        with Image.open(out / f"{name}.ppm") as img:
            panel = np.asarray(img.convert("RGB"))
        assert panel.shape == (64, 64, 3)
        assert np.any(np.all(panel == EGO_COLOR, axis=-1))
    with Image.open(out / "input_camera.ppm") as img:
        assert img.size == (256, 256)
    assert (out / "predictions.txt").read_text().startswith("traffic_light_stop")


def test_bev_panel_colors():
    waypoints = np.array([[4.0, 0.0], [8.0, 0.0], [12.0, 0.0], [16.0, 0.0]])
    panel = render_bev_panel(np.zeros((256, 256), dtype=np.int64), waypoints=waypoints)
    assert tuple(panel[250, 128]) == EGO_COLOR
    assert tuple(panel[255 - 32, 128]) == WAYPOINT_COLOR
    assert tuple(panel[10, 10]) == (123, 123, 123)


def test_missing_frame_is_io_error(tiny_config_file, tmp_path, capsys):
    config = load_config(str(tiny_config_file))
    ckpt = DsuNetwork(config.model).save(tmp_path / "tiny.ckpt")
    code = main(["visualize", "--ckpt", str(ckpt), "--frame", str(tmp_path / "frame_missing"),
                 "--out", str(tmp_path / "vis")])
    assert code == 5
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("error: io:")


def test_missing_config_and_bad_route_spec(tmp_path, capsys):
    assert main(["eval", "--policy", "expert", "--config", str(tmp_path / "absent.cfg"), "--routes", "1",
                 "--report", str(tmp_path / "r.tsv")]) == 5
    assert main(["eval", "--policy", "expert", "--routes", "zero", "--report", str(tmp_path / "r.tsv")]) == 5
    assert main(["eval", "--policy", "model", "--routes", "1", "--report", str(tmp_path / "r.tsv")]) == 3


def test_default_config_round_trip():
    assert load_config(None) == ExperimentConfig()
