import numpy as np
import pytest
from PIL import Image

from stainedit.cli import main
from stainedit.corpus import CorpusManifest
from conftest import micro_trainer


def test_synth_and_train_and_edit_pipeline(tmp_path, capsys):
    corpus_dir = tmp_path / "corpus"
    assert main(["synth", "--out", str(corpus_dir), "--n", "4", "--size", "32", "--seed", "3"]) == 0
    manifest = CorpusManifest.load(corpus_dir / "manifest.txt")
    assert len(manifest.entries) == 8

    train_dir = tmp_path / "train"
    rc = main([
        "train", "--corpus", str(corpus_dir / "manifest.txt"), "--out", str(train_dir),
        "--steps", "2", "--seed", "1", "--batch", "1",
        "--base-channels", "4", "--d-base-channels", "8", "--n-res", "1",
        "--lambda-identity", "0",
    ])
    assert rc == 0
    ckpt = train_dir / "step_000002.ckpt"
    assert ckpt.exists()

    tile = corpus_dir / manifest.entries[0].path
    out_png = tmp_path / "edited.png"
    rc = main([
        "edit", "--ckpt", str(ckpt), "--in", str(tile), "--direction", "he2p63",
        "--range", "1:8", "--m", "2.5", "--out", str(out_png),
    ])
    assert rc == 0
    assert Image.open(out_png).size == (32, 32)


def test_prepare_builds_corpus_from_slide_dirs(tmp_path):
    rng = np.random.default_rng(5)
    for domain in ("HE", "P63"):
        d = tmp_path / "slides" / domain
        d.mkdir(parents=True)
        arr = rng.integers(30, 220, size=(2048, 2048, 3), dtype=np.uint8)
        Image.fromarray(arr).save(d / "slide1.png")
    out = tmp_path / "corpus"
    rc = main(["prepare", "--in", str(tmp_path / "slides"), "--out", str(out), "--seed", "2"])
    assert rc == 0
    manifest = CorpusManifest.load(out / "manifest.txt")
    assert len(manifest.entries) == 8  # 2x2 grid per slide, all textured tiles pass


def test_prepare_missing_domain_dir_errors(tmp_path):
    (tmp_path / "slides" / "HE").mkdir(parents=True)
    rc = main(["prepare", "--in", str(tmp_path / "slides"), "--out", str(tmp_path / "c"), "--seed", "0"])
    assert rc == 2


def test_survey_pairs_command(tmp_path):
    rng = np.random.default_rng(6)
    for name in ("real", "fake"):
        d = tmp_path / name
        d.mkdir()
        for i in range(4):
            Image.fromarray(rng.integers(0, 255, size=(16, 16, 3), dtype=np.uint8)).save(d / f"t{i}.png")
    rc = main([
        "survey-pairs", "--real", str(tmp_path / "real"), "--fake", str(tmp_path / "fake"),
        "--n", "3", "--seed", "4", "--out", str(tmp_path / "packet"),
    ])
    assert rc == 0
    assert len(list((tmp_path / "packet" / "pages").glob("*.png"))) == 3
    assert (tmp_path / "packet" / "answer_key.json").exists()


def test_edit_rejects_wrong_tile_size(tmp_path):
    ckpt = tmp_path / "m.ckpt"
    micro_trainer(seed=8).save(ckpt)
    bad_tile = tmp_path / "tile.png"
    Image.fromarray(np.zeros((16, 16, 3), dtype=np.uint8)).save(bad_tile)
    rc = main([
        "edit", "--ckpt", str(ckpt), "--in", str(bad_tile), "--direction", "he2p63",
        "--range", "1:4", "--m", "1.0", "--out", str(tmp_path / "o.png"),
    ])
    assert rc == 2
