"""Corpus preparation: slide tiling, tissue filtering, and manifest handling.

Raster slides are cut into a fixed grid, downscaled by area averaging,
LAB-encoded, and kept only when a luminosity/entropy check says they contain
tissue rather than background. A procedural two-domain corpus generator
provides desk-scale training data when real slides are unavailable.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .color import lab_to_rgb, rgb_to_lab

MANIFEST_VERSION = "stainedit-manifest v1"

DEFAULT_TAU_BG = 0.80
DEFAULT_L_WHITE = 0.90
DEFAULT_TAU_ENT = 3.0
ENTROPY_BINS = 64


class CorpusError(RuntimeError):
    """A corpus cannot be built or loaded (e.g. a domain ended up empty)."""


class Domain(str, enum.Enum):
    HE = "HE"
    P63 = "P63"


@dataclass
class SlideImage:
    """A plain raster slide. Needs H, W >= tile size to yield any tiles."""

    pixels: np.ndarray  # H x W x 3 uint8 sRGB
    slide_id: str
    domain: Domain

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"slide must be HxWx3, got {self.pixels.shape!r}")
        self.domain = Domain(self.domain)


@dataclass
class Tile:
    """One LAB-encoded training patch with its grid position of origin."""

    pixels: np.ndarray  # out_px x out_px x 3 float in [0, 1]
    slide_id: str
    grid_row: int
    grid_col: int
    domain: Domain

    def validate(self, expected_px: int | None = None) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] != px.shape[1]:
            raise ValueError(f"tile must be square PxPx3, got {px.shape!r}")
        if expected_px is not None and px.shape[0] != expected_px:
            raise ValueError(f"tile is {px.shape[0]}px, expected {expected_px}px")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("tile channels must lie in [0, 1]")


@dataclass
class TissueFilterReport:
    background_fraction: float
    entropy_bits: float
    accepted: bool


@dataclass
class ManifestEntry:
    path: str  # relative to the manifest's directory
    domain: Domain
    slide_id: str
    grid_row: int
    grid_col: int


@dataclass
class CorpusManifest:
    """Line-oriented index of persisted tiles, one file per tile."""

    root: Path
    entries: list[ManifestEntry]
    seed: int
    tile_px: int
    thresholds: dict = field(default_factory=dict)

    def count(self, domain: Domain) -> int:
        return sum(1 for e in self.entries if e.domain == domain)

    def entries_for(self, domain: Domain) -> list[ManifestEntry]:
        return [e for e in self.entries if e.domain == domain]

    def save(self, path: Path | str) -> None:
        path = Path(path)
        lines = [MANIFEST_VERSION]
        lines.append(f"seed={self.seed}")
        lines.append(f"tile_px={self.tile_px}")
        thr = " ".join(f"{k}={self.thresholds[k]:g}" for k in sorted(self.thresholds))
        lines.append(f"thresholds {thr}".rstrip())
        for domain in Domain:
            lines.append(f"count {domain.value}={self.count(domain)}")
        for e in self.entries:
            lines.append(
                f"tile\t{e.path}\t{e.domain.value}\t{e.slide_id}\t{e.grid_row}\t{e.grid_col}"
            )
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "CorpusManifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0] != MANIFEST_VERSION:
            raise CorpusError(f"unrecognized manifest header in {path}")
        seed = tile_px = None
        thresholds: dict = {}
        counts: dict = {}
        entries: list[ManifestEntry] = []
        for line in lines[1:]:
            if not line.strip():
                continue
            if line.startswith("seed="):
                seed = int(line.split("=", 1)[1])
            elif line.startswith("tile_px="):
                tile_px = int(line.split("=", 1)[1])
            elif line.startswith("thresholds"):
                for kv in line.split()[1:]:
                    k, v = kv.split("=")
                    thresholds[k] = float(v)
            elif line.startswith("count "):
                k, v = line.split()[1].split("=")
                counts[k] = int(v)
            elif line.startswith("tile\t"):
                _, rel, dom, sid, row, col = line.split("\t")
                entries.append(ManifestEntry(rel, Domain(dom), sid, int(row), int(col)))
            else:
                raise CorpusError(f"unrecognized manifest line: {line!r}")
        if seed is None or tile_px is None:
            raise CorpusError(f"manifest {path} is missing seed/tile_px fields")
        manifest = cls(path.parent, entries, seed, tile_px, thresholds)
        for domain in Domain:
            if counts.get(domain.value, -1) != manifest.count(domain):
                raise CorpusError(f"manifest count mismatch for domain {domain.value}")
        for e in entries:
            if not (manifest.root / e.path).exists():
                raise CorpusError(f"manifest references missing tile {e.path}")
        return manifest

    def load_tile(self, entry: ManifestEntry) -> Tile:
        rgb = np.asarray(Image.open(self.root / entry.path).convert("RGB"))
        tile = Tile(rgb_to_lab(rgb), entry.slide_id, entry.grid_row, entry.grid_col, entry.domain)
        tile.validate(self.tile_px)
        return tile


def slice_slide(slide: SlideImage, tile_px: int = 1024, out_px: int = 256) -> list[Tile]:
    """Cut a slide into floor(H/tile_px) x floor(W/tile_px) LAB tiles.

    Each tile_px square is reduced to out_px by box averaging, so tile_px must
    be a multiple of out_px. Partial edge tiles are discarded; a slide smaller
    than tile_px in either dimension yields an empty list.
    """
    if tile_px % out_px != 0:
        raise ValueError(f"tile_px={tile_px} must be a multiple of out_px={out_px}")
    h, w = slide.pixels.shape[:2]
    rows, cols = h // tile_px, w // tile_px
    factor = tile_px // out_px
    tiles = []
    for r in range(rows):
        for c in range(cols):
            crop = slide.pixels[r * tile_px : (r + 1) * tile_px, c * tile_px : (c + 1) * tile_px]
            box = crop.reshape(out_px, factor, out_px, factor, 3).astype(np.float64)
            small = box.mean(axis=(1, 3))
            tiles.append(Tile(rgb_to_lab(small), slide.slide_id, r, c, slide.domain))
    return tiles


def tissue_filter(
    tile: Tile,
    tau_bg: float = DEFAULT_TAU_BG,
    l_white: float = DEFAULT_L_WHITE,
    tau_ent: float = DEFAULT_TAU_ENT,
) -> TissueFilterReport:
    """Score a tile's tissue content from its luminosity channel.

    background_fraction is the share of pixels brighter than l_white;
    entropy is Shannon entropy over 64 equal-width luminosity bins. A tile is
    accepted iff background_fraction <= tau_bg and entropy >= tau_ent.
    """
    lum = tile.pixels[..., 0]
    bg_fraction = float(np.mean(lum > l_white))
    hist, _ = np.histogram(lum, bins=ENTROPY_BINS, range=(0.0, 1.0))
    p = hist / hist.sum()
    p = p[p > 0]
    entropy = float(-(p * np.log2(p)).sum())
    accepted = bg_fraction <= tau_bg and entropy >= tau_ent
    return TissueFilterReport(bg_fraction, entropy, accepted)


def _persist_tiles(
    tiles_by_domain: dict[Domain, list[Tile]],
    out_dir: Path,
    seed: int,
    tile_px: int,
    thresholds: dict,
) -> CorpusManifest:
    out_dir = Path(out_dir)
    entries = []
    for domain, tiles in tiles_by_domain.items():
        (out_dir / domain.value).mkdir(parents=True, exist_ok=True)
        for tile in tiles:
            rel = f"{domain.value}/{tile.slide_id}_r{tile.grid_row:03d}_c{tile.grid_col:03d}.png"
            Image.fromarray(lab_to_rgb(tile.pixels)).save(out_dir / rel)
            entries.append(ManifestEntry(rel, domain, tile.slide_id, tile.grid_row, tile.grid_col))
    manifest = CorpusManifest(out_dir, entries, seed, tile_px, thresholds)
    manifest.save(out_dir / "manifest.txt")
    return manifest


def build_manifest(
    slides: list[SlideImage],
    out_dir: Path | str,
    seed: int = 0,
    tile_px: int = 1024,
    out_px: int = 256,
    tau_bg: float = DEFAULT_TAU_BG,
    l_white: float = DEFAULT_L_WHITE,
    tau_ent: float = DEFAULT_TAU_ENT,
) -> CorpusManifest:
    """Slice, filter and persist all slides; write manifest.txt in out_dir."""
    domains = {s.domain for s in slides}
    if domains != set(Domain):
        raise CorpusError(f"need at least one slide per domain, got {sorted(d.value for d in domains)}")
    accepted: dict[Domain, list[Tile]] = {d: [] for d in Domain}
    for slide in slides:
        for tile in slice_slide(slide, tile_px, out_px):
            if tissue_filter(tile, tau_bg, l_white, tau_ent).accepted:
                accepted[slide.domain].append(tile)
    for domain, tiles in accepted.items():
        if not tiles:
            raise CorpusError(f"no tiles passed the tissue filter in domain {domain.value}")
    thresholds = {"tau_bg": tau_bg, "l_white": l_white, "tau_ent": tau_ent}
    return _persist_tiles(accepted, Path(out_dir), seed, out_px, thresholds)


# Stain palettes for the procedural corpus: (background, light stain, dark stain)
# per domain. Chosen to loosely echo pink/purple vs blue/brown staining; they
# exist to exercise the pipeline, not to be biologically faithful.
_PALETTES = {
    Domain.HE: ((243, 238, 242), (224, 160, 192), (96, 48, 118)),
    Domain.P63: ((240, 242, 245), (150, 170, 205), (104, 66, 36)),
}


def _render_synth_tile(rng: np.random.Generator, size_px: int, domain: Domain) -> np.ndarray:
    """Draw random soft ellipses over a lightly textured background."""
    bg, light, dark = (np.array(c, dtype=np.float64) for c in _PALETTES[domain])
    yy, xx = np.mgrid[0:size_px, 0:size_px].astype(np.float64)

    density = np.zeros((size_px, size_px))
    n_blobs = int(rng.integers(8, 16))
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, size_px, size=2)
        ry, rx = rng.uniform(0.10, 0.32, size=2) * size_px
        theta = rng.uniform(0, np.pi)
        strength = rng.uniform(0.45, 1.0)
        dy, dx = yy - cy, xx - cx
        u = (np.cos(theta) * dx + np.sin(theta) * dy) / rx
        v = (-np.sin(theta) * dx + np.cos(theta) * dy) / ry
        d2 = u * u + v * v
        density = np.maximum(density, strength * np.exp(-2.5 * d2))

    # Map density through the palette: background -> light stain -> dark stain.
    t = np.clip(density, 0.0, 1.0)[..., None]
    color = np.where(t < 0.5, bg + (light - bg) * (t / 0.5), light + (dark - light) * ((t - 0.5) / 0.5))
    color += rng.normal(0.0, 2.5, size=color.shape)  # paper-like texture
    return np.clip(np.round(color), 0, 255).astype(np.uint8)


def synth_corpus(
    n_per_domain: int,
    out_dir: Path | str,
    size_px: int = 64,
    seed: int = 0,
) -> CorpusManifest:
    """Generate an unpaired two-domain procedural corpus and persist it.

    Both domains draw from the same structural recipe distribution but with
    independent samples, rendered under domain-specific palettes.
    """
    if n_per_domain < 2:
        raise ValueError("n_per_domain must be >= 2")
    rng = np.random.default_rng(seed)
    tiles: dict[Domain, list[Tile]] = {}
    for domain in Domain:
        tiles[domain] = [
            Tile(
                rgb_to_lab(_render_synth_tile(rng, size_px, domain)),
                f"synth-{domain.value}",
                0,
                i,
                domain,
            )
            for i in range(n_per_domain)
        ]
    thresholds = {"tau_bg": DEFAULT_TAU_BG, "l_white": DEFAULT_L_WHITE, "tau_ent": DEFAULT_TAU_ENT}
    return _persist_tiles(tiles, Path(out_dir), seed, size_px, thresholds)
