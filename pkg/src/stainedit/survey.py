"""Blind comparison packet export for realism surveys.

Matched real/generated tiles are composed into side-by-side pages with the
real image on a randomized side; the answer key goes to a separate file so the
pages can be shown blind. Reviewers are asked to pick the real image and rate
the one they believe is generated on a 1 (not realistic) to 6 (very realistic)
scale.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

PAGE_GAP_PX = 8
RATING_MIN = 1
RATING_MAX = 6

_INSTRUCTIONS = """\
Blind realism survey
====================

Each page shows two images side by side: one is a real stained-tissue tile,
the other was generated. For every page:

  1. Decide which side (left or right) shows the REAL image.
  2. Rate how realistic the image you believe is GENERATED looks,
     from {rmin} (not realistic) to {rmax} (very realistic).

Do not consult the answer key until all pages are scored.
"""


@dataclass
class SurveyPacket:
    pages: list[Path]
    key_path: Path
    instructions_path: Path


def _list_images(directory: Path) -> list[Path]:
    exts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in exts)


def export_survey_pairs(
    real_dir: Path | str,
    fake_dir: Path | str,
    n_pairs: int,
    seed: int,
    out_dir: Path | str,
) -> SurveyPacket:
    """Write n_pairs side-by-side pages plus a separate answer key.

    Real and generated tiles are matched by sorted filename order and the two
    directories must hold equal counts. Page composition and side choice are
    fully determined by the seed.
    """
    real_files = _list_images(Path(real_dir))
    fake_files = _list_images(Path(fake_dir))
    if len(real_files) != len(fake_files):
        raise ValueError(f"matched tile count mismatch: {len(real_files)} real vs {len(fake_files)} generated")
    if not 1 <= n_pairs <= len(real_files):
        raise ValueError(f"n_pairs must lie in [1, {len(real_files)}], got {n_pairs}")

    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(real_files), size=n_pairs, replace=False).tolist())
    sides = rng.integers(0, 2, size=n_pairs)  # 0: real on the left

    out_dir = Path(out_dir)
    pages_dir = out_dir / "pages"
    pages_dir.mkdir(parents=True, exist_ok=True)

    pages: list[Path] = []
    key_entries = []
    for pair_no, (idx, side) in enumerate(zip(chosen, sides), start=1):
        real = np.asarray(Image.open(real_files[idx]).convert("RGB"))
        fake = np.asarray(Image.open(fake_files[idx]).convert("RGB"))
        if real.shape != fake.shape:
            raise ValueError(f"pair {pair_no}: image shapes differ ({real.shape} vs {fake.shape})")
        gap = np.full((real.shape[0], PAGE_GAP_PX, 3), 255, dtype=np.uint8)
        left, right = (real, fake) if side == 0 else (fake, real)
        page = np.concatenate([left, gap, right], axis=1)
        page_path = pages_dir / f"pair_{pair_no:03d}.png"
        Image.fromarray(page).save(page_path)
        pages.append(page_path)
        key_entries.append(
            {
                "page": page_path.name,
                "real_side": "left" if side == 0 else "right",
                "real_file": real_files[idx].name,
                "generated_file": fake_files[idx].name,
            }
        )

    key_path = out_dir / "answer_key.json"
    key_path.write_text(
        json.dumps(
            {
                "seed": seed,
                "rating_scale": {"min": RATING_MIN, "max": RATING_MAX},
                "pairs": key_entries,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    instructions_path = out_dir / "instructions.txt"
    instructions_path.write_text(_INSTRUCTIONS.format(rmin=RATING_MIN, rmax=RATING_MAX))
    return SurveyPacket(pages, key_path, instructions_path)


def split_page(page_path: Path | str) -> tuple[np.ndarray, np.ndarray]:
    """Recover the (left, right) halves of a survey page."""
    page = np.asarray(Image.open(page_path).convert("RGB"))
    half = (page.shape[1] - PAGE_GAP_PX) // 2
    return page[:, :half], page[:, half + PAGE_GAP_PX :]
