import hashlib
import json
import shutil
from dataclasses import asdict
from pathlib import Path

import pytest

from stainedit.corpus import synth_corpus
from stainedit.losses import LossWeights
from stainedit.networks import NetConfig
from stainedit.training import TrainConfig, Trainer

# Micro scale: fast enough for per-test training, C=16 so a full 16-vector
# basis still exists.
MICRO_NET = dict(base_channels=4, n_down=2, n_res=1, image_px=32, d_base_channels=8)

# Toy scale: the bundled desk-scale run used by the acceptance suite and the
# service behavioral tests. ~17 min on a 2-thread CPU.
TOY_SEED = 2024
TOY_STEPS = 2000
TOY_NET = dict(base_channels=8, n_down=2, n_res=2, image_px=64, d_base_channels=32)
TOY_TRAIN = dict(total_steps=TOY_STEPS, seed=TOY_SEED, batch_size=4, checkpoint_interval=1000)
TOY_LOSS = dict(identity=0.0)

CACHE_DIR = Path(__file__).parent / ".cache"


def micro_net_cfg(**overrides) -> NetConfig:
    return NetConfig(**{**MICRO_NET, **overrides})


def micro_trainer(seed=0, weights=None, **cfg_overrides) -> Trainer:
    kwargs = {"total_steps": 0, "seed": seed, "batch_size": 2, **cfg_overrides}
    return Trainer(micro_net_cfg(), TrainConfig(**kwargs), weights or LossWeights())


@pytest.fixture(scope="session")
def micro_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro_corpus")
    return synth_corpus(8, out, size_px=32, seed=101)


def _toy_cache_key() -> str:
    blob = json.dumps({"net": TOY_NET, "train": TOY_TRAIN, "loss": TOY_LOSS}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """Deterministic toy training run: (checkpoint path, metrics log path).

    The run is cached on disk keyed by its full configuration; determinism
    makes the cached artifact identical to a fresh one.
    """
    key = _toy_cache_key()
    cached_ckpt = CACHE_DIR / f"toy_{key}.ckpt"
    cached_log = CACHE_DIR / f"toy_{key}.metrics.log"
    if cached_ckpt.exists() and cached_log.exists():
        return cached_ckpt, cached_log

    work = tmp_path_factory.mktemp("toy_run")
    corpus = synth_corpus(512, work / "corpus", size_px=64, seed=TOY_SEED)
    trainer = Trainer(NetConfig(**TOY_NET), TrainConfig(**TOY_TRAIN), LossWeights(**TOY_LOSS))
    trainer.fit(corpus, work / "train")

    CACHE_DIR.mkdir(exist_ok=True)
    shutil.copy(work / "train" / f"step_{TOY_STEPS:06d}.ckpt", cached_ckpt)
    shutil.copy(work / "train" / "metrics.log", cached_log)
    return cached_ckpt, cached_log


@pytest.fixture(scope="session")
def toy_checkpoint(toy_run):
    return toy_run[0]


@pytest.fixture(scope="session")
def toy_heldout_corpus(tmp_path_factory):
    """Evaluation tiles drawn from the same procedural distribution but a
    different seed, so they were never sampled during toy training."""
    out = tmp_path_factory.mktemp("toy_heldout")
    return synth_corpus(32, out, size_px=64, seed=TOY_SEED + 1)
