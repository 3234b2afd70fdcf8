"""Training loop for the dual-generator translation model.

One step updates both discriminators from real/fake pairs, then both
generators from the weighted adversarial + cycle + identity + context
objective. When saliency masking is on, the adversarial gradient arriving at
each generator's output is scaled elementwise by the discriminator's
input-gradient saliency of the fake image (with a small floor so no pixel's
gradient dies completely); all other loss paths see unscaled gradients unless
mask_scope widens them.

Every source of randomness (init, batch sampling, input mask sampling) runs
off seeded generators whose states are checkpointed, so a resumed run is
bit-identical to an uninterrupted one.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint
from .corpus import CorpusError, CorpusManifest, Domain
from .losses import (
    DivergenceError,
    LossWeights,
    adversarial_losses,
    context_loss,
    cycle_loss,
    generator_adversarial,
    total_generator_objective,
)
from .networks import NetConfig, build_discriminators, build_generators, saliency_map


@dataclass
class TrainConfig:
    total_steps: int = 2000
    seed: int = 0
    lr: float = 2e-4
    betas: tuple = (0.5, 0.999)
    batch_size: int = 4
    saliency_masking: bool = True
    mask_epsilon: float = 0.05
    mask_scope: str = "adv"  # "adv": adversarial path only; "all": every path
    input_mask_prob: float = 0.3
    input_mask_area: tuple = (0.1, 0.5)
    checkpoint_interval: int = 1000
    context_pairing: str = "literal"

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("lr must be > 0, batch_size >= 1, total_steps >= 0")
        if not 0.0 <= self.mask_epsilon <= 1.0:
            raise ValueError("mask_epsilon must lie in [0, 1]")
        if self.mask_scope not in ("adv", "all"):
            raise ValueError(f"unknown mask_scope {self.mask_scope!r}")


@dataclass
class MetricsRecord:
    step: int
    loss_d: float
    loss_g_adv: float
    loss_cycle: float
    loss_identity: float
    loss_context: float
    loss_g_total: float
    g_grad_norm: float
    d_grad_norm: float
    wall_ms: float

    _FIELDS = ("step", "loss_d", "loss_g_adv", "loss_cycle", "loss_identity",
               "loss_context", "loss_g_total", "g_grad_norm", "d_grad_norm", "wall_ms")

    def core(self) -> tuple:
        """Deterministic fields only (everything except wall-clock time)."""
        return tuple(getattr(self, f) for f in self._FIELDS[:-1])

    def to_line(self) -> str:
        return " ".join(f"{f}={getattr(self, f)!r}" for f in self._FIELDS)

    @classmethod
    def from_line(cls, line: str) -> "MetricsRecord":
        parts = dict(kv.split("=", 1) for kv in line.split())
        return cls(step=int(parts["step"]), **{f: float(parts[f]) for f in cls._FIELDS[1:]})


def apply_saliency_mask(grad_output: torch.Tensor, saliency: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Scale a gradient by a saliency map with floor epsilon.

    Elementwise grad * (saliency * (1 - epsilon) + epsilon); with saliency at 1
    the gradient passes through unchanged, and the floor keeps regions the
    discriminator ignores from going fully dead.
    """
    if grad_output.shape != saliency.shape:
        raise ValueError(f"shape mismatch: {tuple(grad_output.shape)} vs {tuple(saliency.shape)}")
    return grad_output * (saliency * (1.0 - epsilon) + epsilon)


class _ScaleGrad(torch.autograd.Function):
    """Identity in the forward pass; multiplies the gradient by a fixed map."""

    @staticmethod
    def forward(ctx, x, scale):
        ctx.save_for_backward(scale)
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_out):
        (scale,) = ctx.saved_tensors
        return grad_out * scale, None


def scale_gradient(x: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return _ScaleGrad.apply(x, scale)


def sample_input_masks(
    n: int, px: int, cfg: TrainConfig, rng: torch.Generator
) -> torch.Tensor:
    """Per-sample hard input masks: mostly all-ones, sometimes a zeroed box."""
    masks = torch.ones(n, 1, px, px)
    lo, hi = cfg.input_mask_area
    for i in range(n):
        if float(torch.rand((), generator=rng)) >= cfg.input_mask_prob:
            continue
        area = lo + (hi - lo) * float(torch.rand((), generator=rng))
        aspect = 0.5 + 1.5 * float(torch.rand((), generator=rng))
        mh = min(px, max(1, round(px * (area * aspect) ** 0.5)))
        mw = min(px, max(1, round(px * (area / aspect) ** 0.5)))
        top = int(torch.randint(0, px - mh + 1, (1,), generator=rng))
        left = int(torch.randint(0, px - mw + 1, (1,), generator=rng))
        masks[i, 0, top : top + mh, left : left + mw] = 0.0
    return masks


def _set_requires_grad(modules, flag: bool) -> None:
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def _grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.pow(2).sum())
    return total**0.5


def tiles_to_tensor(manifest: CorpusManifest, domain: Domain) -> torch.Tensor:
    """Stack one domain's tiles into an N x 3 x P x P float32 tensor."""
    entries = manifest.entries_for(domain)
    if not entries:
        raise CorpusError(f"corpus has no tiles for domain {domain.value}")
    arrs = [manifest.load_tile(e).pixels.transpose(2, 0, 1) for e in entries]
    return torch.from_numpy(np.stack(arrs).astype(np.float32))


class Trainer:
    """Owns the four networks, their optimizers, and all RNG state."""

    def __init__(self, net_cfg: NetConfig, cfg: TrainConfig, weights: LossWeights):
        self.net_cfg = net_cfg
        self.cfg = cfg
        self.weights = weights
        self.step = 0

        torch.manual_seed(cfg.seed)
        self.g_ab, self.g_ba = build_generators(net_cfg)
        self.d_he, self.d_p63 = build_discriminators(net_cfg)
        self.g_opt = torch.optim.Adam(
            itertools.chain(self.g_ab.parameters(), self.g_ba.parameters()),
            lr=cfg.lr, betas=tuple(cfg.betas),
        )
        self.d_opt = torch.optim.Adam(
            itertools.chain(self.d_he.parameters(), self.d_p63.parameters()),
            lr=cfg.lr, betas=tuple(cfg.betas),
        )
        self.mask_rng = torch.Generator().manual_seed(cfg.seed + 1)
        self.data_rng = torch.Generator().manual_seed(cfg.seed + 2)

    # ------------------------------------------------------------- stepping

    def _adv_scaled(self, fake: torch.Tensor, d) -> torch.Tensor:
        """Interpose the gradient-scaling node on a generator output.

        The node is always inserted so masked and unmasked steps build the
        same graph; with masking off the scale is exactly one.
        """
        if self.cfg.saliency_masking:
            sal = saliency_map(d, fake.detach())
            scale = sal * (1.0 - self.cfg.mask_epsilon) + self.cfg.mask_epsilon
        else:
            scale = torch.ones_like(fake)
        return scale_gradient(fake, scale)

    def train_step(self, real_a: torch.Tensor, real_b: torch.Tensor) -> MetricsRecord:
        """One full update from a batch of domain-A and domain-B tiles."""
        t0 = time.perf_counter()
        cfg, w = self.cfg, self.weights
        px = self.net_cfg.image_px

        mask_a = sample_input_masks(real_a.shape[0], px, cfg, self.mask_rng)
        mask_b = sample_input_masks(real_b.shape[0], px, cfg, self.mask_rng)
        fake_b = self.g_ab(real_a, mask_a)
        fake_a = self.g_ba(real_b, mask_b)

        # Discriminators learn from detached fakes only.
        self.d_opt.zero_grad(set_to_none=True)
        loss_d_p63, _ = adversarial_losses(self.d_p63(real_b), self.d_p63(fake_b.detach()))
        loss_d_he, _ = adversarial_losses(self.d_he(real_a), self.d_he(fake_a.detach()))
        loss_d = loss_d_p63 + loss_d_he
        if not torch.isfinite(loss_d):
            raise DivergenceError(f"discriminator loss diverged at step {self.step}", {"loss_d": float(loss_d.detach())})
        loss_d.backward()
        d_grad = _grad_norm(itertools.chain(self.d_he.parameters(), self.d_p63.parameters()))
        self.d_opt.step()

        # Generators: discriminator weights are frozen spectators here.
        _set_requires_grad([self.d_he, self.d_p63], False)
        self.g_opt.zero_grad(set_to_none=True)

        fake_b_adv = self._adv_scaled(fake_b, self.d_p63)
        fake_a_adv = self._adv_scaled(fake_a, self.d_he)
        loss_adv = generator_adversarial(self.d_p63(fake_b_adv)) + generator_adversarial(self.d_he(fake_a_adv))

        cyc_src_b = fake_b_adv if cfg.mask_scope == "all" else fake_b
        cyc_src_a = fake_a_adv if cfg.mask_scope == "all" else fake_a
        rec_a = self.g_ba(cyc_src_b)
        rec_b = self.g_ab(cyc_src_a)
        loss_cyc = cycle_loss(real_a, rec_a) + cycle_loss(real_b, rec_b)

        if w.identity > 0:
            loss_id = cycle_loss(real_b, self.g_ab(real_b)) + cycle_loss(real_a, self.g_ba(real_a))
        else:
            loss_id = torch.zeros(())
        if w.context > 0:
            loss_ctx = context_loss(
                self.g_ab.encode, self.g_ba.encode,
                real_a, real_b, fake_b, fake_a,
                gamma=w.huber_gamma, pairing=cfg.context_pairing,
            )
        else:
            loss_ctx = torch.zeros(())

        total, report = total_generator_objective(loss_adv, loss_cyc, loss_id, loss_ctx, w)
        total.backward()
        g_grad = _grad_norm(itertools.chain(self.g_ab.parameters(), self.g_ba.parameters()))
        self.g_opt.step()
        _set_requires_grad([self.d_he, self.d_p63], True)

        self.step += 1
        return MetricsRecord(
            step=self.step,
            loss_d=float(loss_d.detach()),
            loss_g_adv=report.adv,
            loss_cycle=report.cycle,
            loss_identity=report.identity,
            loss_context=report.context,
            loss_g_total=report.total,
            g_grad_norm=g_grad,
            d_grad_norm=d_grad,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        )

    # ----------------------------------------------------------- fit/resume

    def fit(self, manifest: CorpusManifest, out_dir: Path | str) -> Checkpoint:
        """Run to cfg.total_steps with shuffled unpaired sampling.

        Writes checkpoints every cfg.checkpoint_interval steps plus a final
        one, and appends one metrics line per step to metrics.log. Returns the
        final checkpoint.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        tiles_a = tiles_to_tensor(manifest, Domain.HE)
        tiles_b = tiles_to_tensor(manifest, Domain.P63)

        log_path = out_dir / "metrics.log"
        saved_at = -1
        with log_path.open("a") as log:
            while self.step < self.cfg.total_steps:
                idx_a = torch.randint(0, tiles_a.shape[0], (self.cfg.batch_size,), generator=self.data_rng)
                idx_b = torch.randint(0, tiles_b.shape[0], (self.cfg.batch_size,), generator=self.data_rng)
                record = self.train_step(tiles_a[idx_a], tiles_b[idx_b])
                log.write(record.to_line() + "\n")
                if self.step % self.cfg.checkpoint_interval == 0:
                    self.save(out_dir / f"step_{self.step:06d}.ckpt")
                    saved_at = self.step
        if saved_at != self.step:
            self.save(out_dir / f"step_{self.step:06d}.ckpt")
        return self.state()

    # -------------------------------------------------------------- state

    def state(self) -> Checkpoint:
        return Checkpoint(
            step=self.step,
            models={
                "g_ab": self.g_ab.state_dict(),
                "g_ba": self.g_ba.state_dict(),
                "d_he": self.d_he.state_dict(),
                "d_p63": self.d_p63.state_dict(),
            },
            optimizers={"g": self.g_opt.state_dict(), "d": self.d_opt.state_dict()},
            rng={"mask": self.mask_rng.get_state(), "data": self.data_rng.get_state()},
            config={
                "net": asdict(self.net_cfg),
                "train": asdict(self.cfg),
                "loss": asdict(self.weights),
            },
        )

    def save(self, path: Path | str) -> None:
        self.state().save(path)

    @classmethod
    def from_checkpoint(cls, source: Checkpoint | Path | str) -> "Trainer":
        ckpt = source if isinstance(source, Checkpoint) else Checkpoint.load(source)
        net_cfg = NetConfig(**ckpt.config["net"])
        cfg = TrainConfig(**ckpt.config["train"])
        weights = LossWeights(**ckpt.config["loss"])
        trainer = cls(net_cfg, cfg, weights)
        trainer.g_ab.load_state_dict(ckpt.models["g_ab"])
        trainer.g_ba.load_state_dict(ckpt.models["g_ba"])
        trainer.d_he.load_state_dict(ckpt.models["d_he"])
        trainer.d_p63.load_state_dict(ckpt.models["d_p63"])
        trainer.g_opt.load_state_dict(ckpt.optimizers["g"])
        trainer.d_opt.load_state_dict(ckpt.optimizers["d"])
        trainer.mask_rng.set_state(ckpt.rng["mask"])
        trainer.data_rng.set_state(ckpt.rng["data"])
        trainer.step = ckpt.step
        return trainer


def fit(
    manifest: CorpusManifest,
    net_cfg: NetConfig,
    cfg: TrainConfig,
    weights: LossWeights,
    out_dir: Path | str,
    resume_from: Path | str | None = None,
) -> Checkpoint:
    """Convenience wrapper: build (or resume) a trainer and run it."""
    if resume_from is not None:
        trainer = Trainer.from_checkpoint(resume_from)
        trainer.cfg.total_steps = cfg.total_steps
    else:
        trainer = Trainer(net_cfg, cfg, weights)
    return trainer.fit(manifest, out_dir)
