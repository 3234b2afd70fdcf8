"""Closed-form editing of the bottleneck weight matrix.

The editing handles are the top-ranked right singular vectors of the square
bottleneck weight W (equivalently, unit eigenvectors of W^T W: W itself may be
non-symmetric with complex eigenvalues, so the PSD Gram form is factorized
instead). An edit adds rank-1 outer products of a chosen rank range of these
vectors, scaled by a single shared multiplier, to W at forward time; stored
model weights are never mutated.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch

from .networks import Generator

MAX_BASIS_VECTORS = 16

# UI multiplier range; wide enough to visibly saturate edits at toy scale.
MULTIPLIER_RANGE = (-10.0, 10.0)
MULTIPLIER_STEP = 0.1


class StaleBasisError(RuntimeError):
    """The basis was extracted from different weights than those supplied."""


def weight_fingerprint(w) -> str:
    """Content hash of a weight matrix, stable across torch/numpy handoffs."""
    if isinstance(w, torch.Tensor):
        arr = w.detach().cpu().contiguous().numpy()
    else:
        arr = np.ascontiguousarray(w)
    digest = hashlib.sha256()
    digest.update(str(arr.dtype).encode())
    digest.update(str(arr.shape).encode())
    digest.update(arr.tobytes())
    return digest.hexdigest()


@dataclass
class EditParams:
    """Inclusive 1-based rank range [j, k] and the shared multiplier m."""

    j: int
    k: int
    m: float

    def validate(self, n_vectors: int) -> None:
        if not (1 <= self.j <= self.k <= n_vectors):
            raise ValueError(f"need 1 <= j <= k <= {n_vectors}, got j={self.j}, k={self.k}")
        if not np.isfinite(self.m):
            raise ValueError(f"multiplier must be finite, got {self.m!r}")


@dataclass
class EigenBasis:
    """Ranked unit direction vectors (rows) with their significance scores."""

    vectors: np.ndarray  # n x C float64, rows unit-norm, orthogonal
    significances: np.ndarray  # non-increasing, >= 0
    fingerprint: str
    truncated: bool = False  # true when C < MAX_BASIS_VECTORS limited the count

    def __len__(self) -> int:
        return self.vectors.shape[0]


def extract_basis(w, n_vectors: int = MAX_BASIS_VECTORS) -> EigenBasis:
    """Top singular directions of a square weight matrix.

    Rows of the result are the leading right singular vectors of w, ranked by
    singular value; each row's sign is fixed so its first nonzero component is
    positive, making extraction reproducible. Matrices smaller than n_vectors
    yield a truncated basis.
    """
    fingerprint = weight_fingerprint(w)  # hash the weights exactly as stored
    if isinstance(w, torch.Tensor):
        w = w.detach().cpu().numpy()
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight must be square, got shape {w.shape!r}")
    if not np.isfinite(w).all():
        raise ValueError("weight matrix contains non-finite entries")
    c = w.shape[0]
    n = min(n_vectors, c)

    _, sigma, vt = np.linalg.svd(w)
    vectors = vt[:n].copy()
    for row in vectors:
        nz = np.nonzero(row)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return EigenBasis(vectors, sigma[:n].copy(), fingerprint, truncated=n < n_vectors)


def basis_projector(basis: EigenBasis, j: int, k: int) -> np.ndarray:
    """Orthogonal projector onto the span of ranks j..k (inclusive, 1-based)."""
    rows = basis.vectors[j - 1 : k]
    return rows.T @ rows


def compose_weights(w, basis: EigenBasis, p: EditParams):
    """Edited weight matrix: w plus m times the rank-1 sum over ranks j..k.

    Pure function of its inputs; m == 0 returns an untouched copy of w so the
    unedited forward pass is reproduced exactly. Rejects a basis extracted
    from different weights.
    """
    p.validate(len(basis))
    if weight_fingerprint(w) != basis.fingerprint:
        raise StaleBasisError("basis fingerprint does not match the supplied weights")
    is_torch = isinstance(w, torch.Tensor)
    w_np = w.detach().cpu().numpy() if is_torch else np.asarray(w)
    if p.m == 0.0:
        out = w_np.copy()
    else:
        delta = p.m * basis_projector(basis, p.j, p.k)
        out = (w_np.astype(np.float64) + delta).astype(w_np.dtype)
    return torch.from_numpy(out) if is_torch else out


def edited_generate(
    gen: Generator,
    image: torch.Tensor,
    p: EditParams,
    basis: EigenBasis,
) -> torch.Tensor:
    """Run a generator with an edited bottleneck; model weights stay untouched."""
    w_star = compose_weights(gen.mixer.weight, basis, p)
    with torch.no_grad():
        out, _, _ = gen.generate(image, mask=None, w_override=w_star)
    return out
