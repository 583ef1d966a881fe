"""Command-line behavior: artifacts, determinism, and the exit-code contract."""

import json
import socket

import pytest

from navcontrast.cli import main

SMALL = [
    "--set", "render.width=32", "--set", "render.height=32",
    "--set", "arch.conv_channels=4,6", "--set", "arch.hidden_dim=12",
    "--set", "arch.feat_dim=8", "--set", "arch.input_size=16",
    "--set", "train.epochs=2", "--set", "train.batch_size=8",
    "--set", "train.queue_capacity=32", "--set", "train.mode=time",
    "--set", "probe.epochs=5",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """scene -> walk -> rendered train/test datasets, all through the CLI."""
    root = tmp_path_factory.mktemp("pipeline")
    scene_dir = root / "scene"
    assert main(["gen-scene", "--seed", "5", "--out", str(scene_dir)]) == 0
    scene = scene_dir / "scene.json"
    out = {"scene": scene, "root": root}
    for split, seed, steps in (("train", "7", "300"), ("test", "8", "60")):
        walk = root / f"walk_{split}"
        assert main(["record", "--scene", str(scene), "--steps", steps,
                     "--seed", seed, "--out", str(walk)]) == 0
        ds = root / f"ds_{split}"
        assert main(["render-dataset", "--scene", str(scene),
                     "--trajectory", str(walk / "trajectory.jsonl"),
                     "--out", str(ds), *SMALL]) == 0
        out[split] = ds
    return out


def test_gen_scene_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-scene", "--seed", "3", "--out", str(a)]) == 0
    assert main(["gen-scene", "--seed", "3", "--out", str(b)]) == 0
    assert (a / "scene.json").read_bytes() == (b / "scene.json").read_bytes()
    assert (a / "config.ini").exists()  # resolved config rides along


def test_gen_scene_config_error_exits_2(tmp_path):
    code = main(["gen-scene", "--seed", "3", "--out", str(tmp_path / "x"),
                 "--set", "scene.category_count=1"])
    assert code == 2


def test_gen_scene_placement_failure_exits_3(tmp_path):
    code = main(["gen-scene", "--seed", "3", "--out", str(tmp_path / "x"),
                 "--set", "scene.bounds_w=3.0", "--set", "scene.bounds_d=3.0",
                 "--set", "scene.object_count_min=40",
                 "--set", "scene.object_count_max=40"])
    assert code == 3


def test_missing_required_flag_exits_64(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-scene", "--out", str(tmp_path / "x")])
    assert exc.value.code == 64
    assert "--seed" in capsys.readouterr().err


def test_unknown_subcommand_exits_64():
    with pytest.raises(SystemExit) as exc:
        main(["make-it-go"])
    assert exc.value.code == 64


def test_record_line_count_and_determinism(pipeline, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["record", "--scene", str(pipeline["scene"]),
                     "--steps", "100", "--seed", "4", "--out", str(out)]) == 0
    lines = (a / "trajectory.jsonl").read_text().strip().split("\n")
    assert len(lines) == 100
    assert (a / "trajectory.jsonl").read_bytes() == \
        (b / "trajectory.jsonl").read_bytes()


def test_missing_input_exits_2(pipeline, tmp_path, capsys):
    missing = str(tmp_path / "nowhere.jsonl")
    code = main(["render-dataset", "--scene", str(pipeline["scene"]),
                 "--trajectory", missing, "--out", str(tmp_path / "x")])
    assert code == 2
    assert missing in capsys.readouterr().err


def test_render_dataset_layout(pipeline):
    ds = pipeline["train"]
    manifest = json.loads((ds / "manifest.json").read_text())
    assert manifest["width"] == 32
    assert (ds / "frames" / "frame_000000.png").exists()
    assert (ds / "labels" / "label_000000.png").exists()
    assert (ds / "config.ini").exists()


def test_pretrain_and_probe(pipeline, tmp_path):
    run = tmp_path / "run"
    assert main(["pretrain", "--dataset", str(pipeline["train"]),
                 "--out", str(run), *SMALL]) == 0
    assert (run / "metrics.jsonl").exists()
    assert (run / "encoder_q.ckpt").exists()
    state = json.loads((run / "state.json").read_text())
    assert state["config"]["pairing_mode"] == "time"
    assert state["config"]["d_max"] == 0.2  # thresholds echoed in metadata

    res = tmp_path / "probe"
    assert main(["probe", "--run", str(run),
                 "--train-dataset", str(pipeline["train"]),
                 "--test-dataset", str(pipeline["test"]),
                 "--out", str(res), *SMALL]) == 0
    rows = json.loads((res / "results.json").read_text())["rows"]
    assert [r["model"] for r in rows] == ["Time MoCo"]
    assert rows[0]["N"] == 1


def test_compare_shape_and_idempotence(pipeline, tmp_path):
    out = tmp_path / "cmp"
    args = ["compare", "--train-dataset", str(pipeline["train"]),
            "--test-dataset", str(pipeline["test"]),
            "--modes", "standard,time", "--runs", "2",
            "--out", str(out), *SMALL]
    assert main(args) == 0
    rows = json.loads((out / "results.json").read_text())["rows"]
    assert [r["model"] for r in rows] == ["Standard MoCo", "Time MoCo"]
    assert all(r["N"] == 2 for r in rows)
    first = (out / "results.json").read_bytes()
    assert main(args) == 0  # rerun resumes the finished runs untouched
    assert (out / "results.json").read_bytes() == first


def test_serve_port_busy_exits_4(pipeline):
    with socket.socket() as taken:
        taken.bind(("127.0.0.1", 0))
        taken.listen(1)
        port = taken.getsockname()[1]
        code = main(["serve", "--scene", str(pipeline["scene"]),
                     "--port", str(port), "--out", str(pipeline["root"])])
    assert code == 4
