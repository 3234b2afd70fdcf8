"""Editable unpaired stain transformation for histology tiles."""

from .color import lab_to_rgb, rgb_to_lab
from .corpus import CorpusManifest, Domain, SlideImage, Tile, build_manifest, slice_slide, synth_corpus, tissue_filter
from .editing import EditParams, EigenBasis, compose_weights, edited_generate, extract_basis
from .losses import LossWeights, adversarial_losses, context_loss, cycle_loss, huber, total_generator_objective
from .networks import Discriminator, Generator, NetConfig, saliency_map
from .training import MetricsRecord, TrainConfig, Trainer, apply_saliency_mask, fit

__version__ = "0.1.0"

__all__ = [
    "CorpusManifest", "Domain", "SlideImage", "Tile",
    "build_manifest", "slice_slide", "synth_corpus", "tissue_filter",
    "rgb_to_lab", "lab_to_rgb",
    "NetConfig", "Generator", "Discriminator", "saliency_map",
    "LossWeights", "huber", "context_loss", "adversarial_losses", "cycle_loss", "total_generator_objective",
    "TrainConfig", "Trainer", "MetricsRecord", "apply_saliency_mask", "fit",
    "EditParams", "EigenBasis", "extract_basis", "compose_weights", "edited_generate",
    "__version__",
]
