"""HTTP service exposing model loading, tile upload, and edited transforms.

One model per process. Weights are loaded read-only; every transform runs the
requested edit against an override matrix, so identical requests produce
byte-identical image payloads and the stored weights never change. Uploads are
keyed by content hash, making them idempotent.
"""
from __future__ import annotations

import base64
import hashlib
import io
import math
import threading
import time
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException, Request
from PIL import Image
from pydantic import BaseModel

from .checkpoint import Checkpoint
from .color import lab_to_rgb, rgb_to_lab
from .editing import EditParams, EigenBasis, edited_generate, extract_basis
from .networks import Generator, NetConfig

DIRECTIONS = ("he2p63", "p632he")


class NoModelError(RuntimeError):
    """A request needs a loaded model and none is present."""


class BusyError(RuntimeError):
    """Model (re)load attempted while transforms are in flight."""


class UnknownImageError(KeyError):
    """The referenced image id was never uploaded."""


class SessionState:
    """Loaded model, cached eigenbases, and the upload store."""

    def __init__(self):
        self._lock = threading.Lock()
        self._active = 0
        self.checkpoint_path: Path | None = None
        self.step: int | None = None
        self.net_cfg: NetConfig | None = None
        self.generators: dict[str, Generator] = {}
        self.bases: dict[str, EigenBasis] = {}
        self.images: dict[str, np.ndarray] = {}

    @property
    def loaded(self) -> bool:
        return bool(self.generators)

    def load_model(self, path: Path | str) -> dict:
        """Load a checkpoint read-only and cache both editing bases."""
        with self._lock:
            if self._active > 0:
                raise BusyError("cannot load a model while transforms are in flight")
            ckpt = Checkpoint.load(path)
            net_cfg = NetConfig(**ckpt.config["net"])
            generators = {}
            for direction, key in (("he2p63", "g_ab"), ("p632he", "g_ba")):
                gen = Generator(net_cfg, direction)
                gen.load_state_dict(ckpt.models[key])
                gen.eval()
                gen.requires_grad_(False)
                generators[direction] = gen
            self.checkpoint_path = Path(path)
            self.step = ckpt.step
            self.net_cfg = net_cfg
            self.generators = generators
            self.bases = {d: extract_basis(g.mixer.weight) for d, g in generators.items()}
            return self.summary()

    def summary(self) -> dict:
        return {
            "checkpoint": str(self.checkpoint_path),
            "step": self.step,
            "image_px": self.net_cfg.image_px,
            "n_vectors": {d: len(b) for d, b in self.bases.items()},
            "significances": {d: [float(s) for s in b.significances] for d, b in self.bases.items()},
        }

    def add_image(self, png_bytes: bytes) -> str:
        if not self.loaded:
            raise NoModelError("load a model before uploading tiles")
        image_id = hashlib.sha256(png_bytes).hexdigest()
        with self._lock:
            if image_id in self.images:
                return image_id
        try:
            rgb = np.asarray(Image.open(io.BytesIO(png_bytes)).convert("RGB"))
        except Exception as exc:
            raise ValueError(f"payload is not a decodable image: {exc}") from exc
        px = self.net_cfg.image_px
        if rgb.shape[:2] != (px, px):
            raise ValueError(f"tile must be {px}x{px}, got {rgb.shape[1]}x{rgb.shape[0]}")
        lab = rgb_to_lab(rgb)
        with self._lock:
            self.images[image_id] = lab
        return image_id

    def begin_transform(self) -> None:
        with self._lock:
            if not self.loaded:
                raise NoModelError("no model loaded")
            self._active += 1

    def end_transform(self) -> None:
        with self._lock:
            self._active -= 1

    def transform(self, image_id: str, direction: str, j: int | None, k: int | None, m: float | None) -> bytes:
        """Run one (possibly edited) translation; returns PNG bytes."""
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {direction!r}, expected one of {DIRECTIONS}")
        edit_args = (j, k, m)
        if any(v is None for v in edit_args) and not all(v is None for v in edit_args):
            raise ValueError("j, k, m must be supplied together (or all omitted for the unedited transform)")
        with self._lock:
            if image_id not in self.images:
                raise UnknownImageError(image_id)
            lab = self.images[image_id]

        gen = self.generators[direction]
        tensor = torch.from_numpy(lab.transpose(2, 0, 1).astype(np.float32))[None]
        if m is None:
            with torch.no_grad():
                out = gen(tensor)
        else:
            if not math.isfinite(m):
                raise ValueError(f"multiplier must be finite, got {m!r}")
            params = EditParams(j=j, k=k, m=m)
            params.validate(len(self.bases[direction]))
            out = edited_generate(gen, tensor, params, self.bases[direction])

        rgb = lab_to_rgb(out[0].numpy().transpose(1, 2, 0))
        buf = io.BytesIO()
        Image.fromarray(rgb).save(buf, format="PNG")
        return buf.getvalue()


class ModelRequest(BaseModel):
    path: str


class TransformRequest(BaseModel):
    image_id: str
    direction: str
    j: int | None = None
    k: int | None = None
    m: float | None = None


def _error(status: int, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"error": message})


def create_app(state: SessionState | None = None) -> FastAPI:
    state = state or SessionState()
    app = FastAPI(title="stainedit")
    app.state.session = state

    @app.get("/health")
    def health():
        return {"status": "ok", "model_loaded": state.loaded}

    @app.post("/model")
    def load_model(req: ModelRequest):
        try:
            return state.load_model(req.path)
        except BusyError as exc:
            raise _error(409, str(exc))
        except FileNotFoundError as exc:
            raise _error(404, str(exc))
        except Exception as exc:
            raise _error(400, f"failed to load checkpoint: {exc}")

    @app.post("/images")
    async def upload_image(request: Request):
        payload = await request.body()
        try:
            return {"image_id": state.add_image(payload)}
        except NoModelError as exc:
            raise _error(409, str(exc))
        except ValueError as exc:
            raise _error(400, str(exc))

    @app.get("/basis")
    def basis():
        if not state.loaded:
            raise _error(409, "no model loaded")
        return state.summary()["significances"]

    @app.post("/transform")
    def transform(req: TransformRequest):
        try:
            state.begin_transform()
        except NoModelError as exc:
            raise _error(409, str(exc))
        t0 = time.perf_counter()
        try:
            png = state.transform(req.image_id, req.direction, req.j, req.k, req.m)
        except UnknownImageError:
            raise _error(404, f"unknown image id {req.image_id!r}")
        except ValueError as exc:
            raise _error(400, str(exc))
        finally:
            state.end_transform()
        return {
            "png_base64": base64.b64encode(png).decode("ascii"),
            "ms": (time.perf_counter() - t0) * 1000.0,
            "applied": {"image_id": req.image_id, "direction": req.direction, "j": req.j, "k": req.k, "m": req.m},
        }

    return app
