import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from conftest import SRC, micro_run_config
from fakefill.config import dump_config, parse_config
from fakefill.data import write_toy_dataset

STEPS = 4


def run_cli(*args, cwd=None):
    env = dict(os.environ, PYTHONPATH=str(SRC))
    return subprocess.run(
        [sys.executable, "-m", "fakefill", *map(str, args)],
        capture_output=True,
        text=True,
        cwd=cwd,
        env=env,
    )


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset + config + one finished training run, shared by the module."""
    ws = tmp_path_factory.mktemp("cli_ws")
    data_root = ws / "images"
    write_toy_dataset(data_root, 12, resolution=32, seed=2)

    cfg = micro_run_config(data_root, ws / "run", steps=STEPS, batch_size=2, checkpoint_every=2)
    cfg.paths.manifest = str(ws / "manifest.tsv")
    config_path = ws / "run.cfg"
    config_path.write_text(dump_config(cfg))

    prepare = run_cli(
        "prepare", "--data-root", data_root, "--val-fraction", 0.25, "--seed", 0,
        "--out", cfg.paths.manifest,
    )
    assert prepare.returncode == 0, prepare.stderr
    train = run_cli("train", "--config", config_path)
    assert train.returncode == 0, train.stderr

    return {
        "root": ws,
        "data_root": data_root,
        "config": config_path,
        "manifest": Path(cfg.paths.manifest),
        "out_dir": ws / "run",
        "checkpoint": ws / "run" / f"ckpt_{STEPS:06d}.ckpt",
        "prepare_stdout": prepare.stdout,
    }


def test_prepare_summary_line(workspace):
    assert "train=9 val=3" in workspace["prepare_stdout"]
    lines = workspace["manifest"].read_text().strip().splitlines()
    assert len(lines) == 12
    assert all(line.split("\t")[1] in ("train", "val") for line in lines)


def test_prepare_deterministic_bytes(workspace, tmp_path):
    out_a, out_b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    for out in (out_a, out_b):
        r = run_cli(
            "prepare", "--data-root", workspace["data_root"], "--val-fraction", 0.25,
            "--seed", 0, "--out", out,
        )
        assert r.returncode == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    assert out_a.read_bytes() == workspace["manifest"].read_bytes()


def test_prepare_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    r = run_cli("prepare", "--data-root", tmp_path / "empty", "--val-fraction", 0.1,
                "--seed", 0, "--out", tmp_path / "m.tsv")
    assert r.returncode == 2
    assert "no images found" in r.stderr


def test_train_wrote_log_and_checkpoints(workspace):
    log = (workspace["out_dir"] / "train_log.csv").read_text().strip().splitlines()
    assert log[0] == "step,l_re,l_adv_d,l_adv_g,l_dam,l_total"
    assert len(log) == STEPS + 1
    assert workspace["checkpoint"].exists()
    assert (workspace["out_dir"] / "ckpt_000002.ckpt").exists()


def test_train_missing_manifest(workspace, tmp_path):
    cfg = parse_config(workspace["config"].read_text())
    cfg.paths.manifest = str(tmp_path / "nope.tsv")
    cfg_path = tmp_path / "cfg.cfg"
    cfg_path.write_text(dump_config(cfg))
    r = run_cli("train", "--config", cfg_path)
    assert r.returncode == 2
    assert "manifest" in r.stderr


def test_train_unknown_key(tmp_path, workspace):
    cfg_path = tmp_path / "bad.cfg"
    text = workspace["config"].read_text().replace("[train]", "[train]\nbogus_key = 1", 1)
    cfg_path.write_text(text)
    r = run_cli("train", "--config", cfg_path)
    assert r.returncode == 2
    assert "bogus_key" in r.stderr


def test_print_config_roundtrip(workspace):
    r = run_cli("train", "--config", workspace["config"], "--print-config")
    assert r.returncode == 0
    assert dump_config(parse_config(r.stdout)) == r.stdout
    r2 = run_cli("train", "--config", workspace["config"], "--print-config",
                 "--set", "train.steps=99")
    assert "steps = 99" in r2.stdout


def test_resume_finished_run_adds_no_steps(workspace):
    log_before = (workspace["out_dir"] / "train_log.csv").read_text()
    r = run_cli("train", "--config", workspace["config"], "--resume", workspace["checkpoint"])
    assert r.returncode == 0
    assert (workspace["out_dir"] / "train_log.csv").read_text() == log_before


def test_nan_abort_exits_3(workspace, tmp_path):
    cfg = parse_config(workspace["config"].read_text())
    cfg.paths.out_dir = str(tmp_path / "nan_run")
    cfg.train.lr_g = 1e30
    cfg.train.steps = 3
    cfg_path = tmp_path / "nan.cfg"
    cfg_path.write_text(dump_config(cfg))
    r = run_cli("train", "--config", cfg_path)
    assert r.returncode == 3
    assert "non-finite" in r.stderr


def test_eval_reports_and_determinism(workspace, tmp_path):
    out_a = tmp_path / "report_a.csv"
    out_b = tmp_path / "report_b.csv"
    for out in (out_a, out_b):
        r = run_cli("eval", "--config", workspace["config"], "--checkpoint",
                    workspace["checkpoint"], "--mask", "center", "--out", out)
        assert r.returncode == 0, r.stderr
    assert out_a.read_bytes() == out_b.read_bytes()
    raw = tmp_path / "report_a_raw.csv"
    assert raw.exists()
    lines = out_a.read_text().strip().splitlines()
    assert lines[0] == "id,psnr_db,ssim"
    assert len(lines) == 3 + 2  # 3 val rows + header + mean
    assert lines[-1].startswith("mean,")


def test_eval_free_mask_deterministic(workspace, tmp_path):
    out_a, out_b = tmp_path / "f1.csv", tmp_path / "f2.csv"
    for out in (out_a, out_b):
        r = run_cli("eval", "--config", workspace["config"], "--checkpoint",
                    workspace["checkpoint"], "--mask", "free", "--out", out,
                    "--set", "mask.coverage=0.05, 0.6")
        assert r.returncode == 0, r.stderr
    assert out_a.read_bytes() == out_b.read_bytes()


def test_eval_corrupt_checkpoint(workspace, tmp_path):
    blob = bytearray(workspace["checkpoint"].read_bytes())
    blob[-7] ^= 0x55
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(blob))
    r = run_cli("eval", "--config", workspace["config"], "--checkpoint", bad,
                "--mask", "center", "--out", tmp_path / "r.csv")
    assert r.returncode == 2
    assert "corrupt" in r.stderr or "sha256" in r.stderr


def test_inpaint_writes_triplet(workspace, tmp_path):
    image = next(workspace["data_root"].glob("*.png"))
    prefix = tmp_path / "out" / "sample"
    r = run_cli("inpaint", "--checkpoint", workspace["checkpoint"], "--image", image,
                "--out", prefix)
    assert r.returncode == 0, r.stderr
    for tag in ("input", "raw", "composited"):
        p = prefix.with_name(f"sample_{tag}.png")
        assert p.exists()
        with Image.open(p) as img:
            assert img.size == (32, 32)
            assert img.mode == "RGB"


def test_inpaint_mask_file_roundtrip(workspace, tmp_path):
    image = next(workspace["data_root"].glob("*.png"))
    mask = np.zeros((32, 32), np.uint8)
    mask[8:24, 8:24] = 255
    mask_path = tmp_path / "mask.png"
    Image.fromarray(mask, mode="L").save(mask_path)
    r = run_cli("inpaint", "--checkpoint", workspace["checkpoint"], "--image", image,
                "--mask-file", mask_path, "--out", tmp_path / "m")
    assert r.returncode == 0, r.stderr
    # pixels outside the hole must be identical to the source after quantization
    with Image.open(tmp_path / "m_composited.png") as img:
        comp = np.asarray(img)
    with Image.open(image) as img:
        src = np.asarray(img.convert("RGB"))
    outside = mask == 0
    assert (comp[outside] == src[outside]).all()


def test_inpaint_wrong_mask_size(workspace, tmp_path):
    image = next(workspace["data_root"].glob("*.png"))
    mask_path = tmp_path / "mask64.png"
    Image.fromarray(np.zeros((64, 64), np.uint8), mode="L").save(mask_path)
    r = run_cli("inpaint", "--checkpoint", workspace["checkpoint"], "--image", image,
                "--mask-file", mask_path, "--out", tmp_path / "x")
    assert r.returncode == 2
    assert "64x64" in r.stderr


def test_grid_three_ids(workspace, tmp_path):
    ids = [line.split("\t")[0] for line in workspace["manifest"].read_text().splitlines()[:3]]
    out = tmp_path / "grid.png"
    r = run_cli("grid", "--config", workspace["config"], "--checkpoint",
                workspace["checkpoint"], "--ids", ",".join(ids), "--out", out)
    assert r.returncode == 0, r.stderr
    with Image.open(out) as img:
        w, h = img.size
    assert w == 3 * 32 + 2 * 2
    assert h == 3 * 32 + 2 * 2


def test_grid_single_id(workspace, tmp_path):
    image_id = workspace["manifest"].read_text().splitlines()[0].split("\t")[0]
    out = tmp_path / "grid1.png"
    r = run_cli("grid", "--config", workspace["config"], "--checkpoint",
                workspace["checkpoint"], "--ids", image_id, "--out", out)
    assert r.returncode == 0, r.stderr
    with Image.open(out) as img:
        assert img.size == (3 * 32 + 4, 32)


def test_grid_unknown_id(workspace, tmp_path):
    r = run_cli("grid", "--config", workspace["config"], "--checkpoint",
                workspace["checkpoint"], "--ids", "ghost.png", "--out", tmp_path / "g.png")
    assert r.returncode == 2
    assert "ghost.png" in r.stderr
