"""Training objectives: adversarial, cycle, identity, and the context loss.

The context loss drives both generators' encoders toward identical structural
encodings of the same content, so style changes are forced into the bottleneck
rather than the encoder/decoder. Its core is a Huber comparison between
encoder outputs taken across the two generators.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

PAIRING_MODES = ("literal", "self")


class DivergenceError(RuntimeError):
    """A loss became non-finite; carries the offending component values."""

    def __init__(self, message: str, components: dict | None = None):
        super().__init__(message)
        self.components = components or {}


@dataclass
class LossWeights:
    adv: float = 1.0
    cycle: float = 10.0
    identity: float | None = None  # defaults to 0.5 * cycle
    context: float = 1.0
    huber_gamma: float = 1.0

    def __post_init__(self):
        if self.identity is None:
            self.identity = 0.5 * self.cycle
        for name in ("adv", "cycle", "identity", "context"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")
        if self.huber_gamma <= 0:
            raise ValueError("huber_gamma must be > 0")


@dataclass
class LossReport:
    adv: float
    cycle: float
    identity: float
    context: float
    total: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("adv", "cycle", "identity", "context", "total")}


def huber(a: torch.Tensor, b: torch.Tensor, gamma: float = 1.0) -> torch.Tensor:
    """Mean Huber distance: 0.5*d^2 inside |d| <= gamma, linear outside."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    d = a - b
    abs_d = d.abs()
    quad = 0.5 * d * d
    lin = gamma * (abs_d - 0.5 * gamma)
    return torch.where(abs_d <= gamma, quad, lin).mean()


def context_loss(
    enc_x,
    enc_y,
    a: torch.Tensor,
    b: torch.Tensor,
    a_fake: torch.Tensor,
    b_fake: torch.Tensor,
    gamma: float = 1.0,
    pairing: str = "literal",
) -> torch.Tensor:
    """Cross-encoder structural consistency loss.

    enc_x / enc_y are the two generators' encoders, called as enc(images);
    a and b are real tiles from the two domains, a_fake / b_fake their
    generated counterparts. Writing h(p, q) = huber(enc_x(p), enc_y(q)), the
    loss is

        [h(a, a) + h(b, b)] / 2  +  second term,

    where the second term pairs each fake against the opposite real domain
    (``literal``: [h(a_fake, b) + h(b_fake, a)] / 2) or against itself
    (``self``: [h(a_fake, a_fake) + h(b_fake, b_fake)] / 2).
    """
    if pairing not in PAIRING_MODES:
        raise ValueError(f"unknown pairing mode {pairing!r}, expected one of {PAIRING_MODES}")

    def h(p, q):
        return huber(enc_x(p), enc_y(q), gamma)

    first = (h(a, a) + h(b, b)) / 2
    if pairing == "literal":
        second = (h(a_fake, b) + h(b_fake, a)) / 2
    else:
        second = (h(a_fake, a_fake) + h(b_fake, b_fake)) / 2
    return first + second


def generator_adversarial(d_scores_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares generator objective: fakes should score as real (1)."""
    return ((d_scores_fake - 1.0) ** 2).mean()


def adversarial_losses(d_scores_real: torch.Tensor, d_scores_fake: torch.Tensor):
    """Least-squares GAN objectives; returns (discriminator loss, generator loss)."""
    loss_d = 0.5 * ((d_scores_real - 1.0) ** 2).mean() + 0.5 * (d_scores_fake**2).mean()
    return loss_d, generator_adversarial(d_scores_fake)


def cycle_loss(original: torch.Tensor, reconstructed: torch.Tensor) -> torch.Tensor:
    if original.shape != reconstructed.shape:
        raise ValueError(f"shape mismatch: {tuple(original.shape)} vs {tuple(reconstructed.shape)}")
    return (original - reconstructed).abs().mean()


def total_generator_objective(
    adv: torch.Tensor,
    cyc: torch.Tensor,
    identity: torch.Tensor,
    context: torch.Tensor,
    w: LossWeights,
) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum of the generator loss components, with a finiteness check."""
    components = {"adv": adv, "cycle": cyc, "identity": identity, "context": context}
    values = {k: float(v.detach()) for k, v in components.items()}
    if not all(torch.isfinite(v) for v in components.values()):
        raise DivergenceError(f"non-finite loss component: {values}", values)
    total = w.adv * adv + w.cycle * cyc + w.identity * identity + w.context * context
    report = LossReport(values["adv"], values["cycle"], values["identity"], values["context"], float(total.detach()))
    return total, report
