"""Image-collection loading, augmentation, and synthetic domain pairs.

Real domains are directories of images, decoded to [N,3,R,R] float arrays
normalized to [-1,1]. Synthetic domains come in pairs with a known exact
map T between them (and its inverse), which makes translation quality
directly measurable; the map is returned separately and is never part of
the training data.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .streams import STREAM_SYNTH, stream_rng

log = logging.getLogger("cyclegan")

ORACLE_KINDS = ("invert", "channel_perm", "affine_intensity", "shift")


@dataclass
class DomainDataset:
    samples: np.ndarray  # [N, 3, R, R] float32 in [-1, 1]
    source: str
    resolution: int
    skipped: int = 0  # undecodable files passed over during loading

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SyntheticOracle:
    """The exact domain map T and its inverse, for scoring only."""

    kind: str
    params: dict = field(default_factory=dict)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "invert":
            return -x
        if self.kind == "channel_perm":
            return np.take(x, (1, 2, 0), axis=-3)  # (r,g,b) -> (g,b,r)
        if self.kind == "affine_intensity":
            return self.params["a"] * x + self.params["b"]
        if self.kind == "shift":
            k = self.params["pixels"]
            return np.roll(x, (k, k), axis=(-2, -1))
        raise ValueError(f"unknown oracle kind {self.kind!r}")

    def invert(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "invert":
            return -y
        if self.kind == "channel_perm":
            return np.take(y, (2, 0, 1), axis=-3)
        if self.kind == "affine_intensity":
            return (y - self.params["b"]) / self.params["a"]
        if self.kind == "shift":
            k = self.params["pixels"]
            return np.roll(y, (-k, -k), axis=(-2, -1))
        raise ValueError(f"unknown oracle kind {self.kind!r}")


def bytes_to_unit(arr: np.ndarray) -> np.ndarray:
    """uint8 pixel values to [-1, 1] floats: 0 -> -1, 255 -> 1."""
    return (arr.astype(np.float32) / 127.5) - 1.0


def unit_to_bytes(img: np.ndarray) -> np.ndarray:
    """Exact inverse of bytes_to_unit on byte-valued inputs, clipped otherwise."""
    return np.clip(np.rint((np.asarray(img, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def load_domain(directory: str, resolution: int, seed: int) -> DomainDataset:
    """Decode every image in a directory into one normalized sample array.

    Files are taken in lexicographic order, then shuffled by the seed.
    Undecodable files are skipped with a warning; an empty result is an error.
    """
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"domain directory not found: {directory}")
    images = []
    skipped = 0
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            continue
        try:
            with Image.open(path) as im:
                rgb = im.convert("RGB").resize((resolution, resolution), Image.BILINEAR)
                arr = np.asarray(rgb, dtype=np.uint8)
        except Exception as e:
            log.warning("skipping undecodable file %s: %s", path, e)
            skipped += 1
            continue
        images.append(bytes_to_unit(arr).transpose(2, 0, 1))
    if not images:
        raise ValueError(f"no decodable images in {directory} ({skipped} skipped)")
    samples = np.stack(images)
    rng = np.random.Generator(np.random.PCG64(seed))
    rng.shuffle(samples, axis=0)
    return DomainDataset(samples, source=directory, resolution=resolution, skipped=skipped)


def save_domain(dataset: DomainDataset, directory: str, prefix: str = "img"):
    """Write samples back out as 8-bit RGB PNGs (inverse of load_domain's mapping)."""
    os.makedirs(directory, exist_ok=True)
    for i, img in enumerate(dataset.samples):
        arr = unit_to_bytes(img).transpose(1, 2, 0)
        Image.fromarray(arr, mode="RGB").save(os.path.join(directory, f"{prefix}_{i:04d}.png"))


def random_square_crop(image: np.ndarray, crop: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly positioned crop x crop window from a [C,H,W] image."""
    c, h, w = image.shape
    if crop > min(h, w) or crop < 1:
        raise ValueError(f"crop {crop} invalid for image {h}x{w}")
    top = int(rng.integers(h - crop + 1))
    left = int(rng.integers(w - crop + 1))
    return image[:, top : top + crop, left : left + crop]


def _paint_shapes(rng: np.random.Generator, resolution: int) -> np.ndarray:
    """One synthetic image: 2..5 colored rectangles/ellipses on a constant
    per-channel background drawn from a moderately bright band."""
    r = resolution
    img = np.empty((3, r, r), dtype=np.float32)
    img[:] = rng.uniform(0.25, 0.75, size=3).astype(np.float32)[:, None, None]
    yy, xx = np.mgrid[0:r, 0:r]
    for _ in range(int(rng.integers(2, 6))):
        color = rng.uniform(-0.9, 0.9, size=3).astype(np.float32)
        cy, cx = rng.integers(0, r, size=2)
        hy = int(rng.integers(r // 8 + 1, max(r // 3, r // 8 + 2)))
        hx = int(rng.integers(r // 8 + 1, max(r // 3, r // 8 + 2)))
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        else:
            mask = ((yy - cy) / hy) ** 2 + ((xx - cx) / hx) ** 2 <= 1.0
        img[:, mask] = color[:, None]
    return img


def make_oracle(kind: str, resolution: int) -> SyntheticOracle:
    if kind == "invert":
        return SyntheticOracle("invert")
    if kind == "channel_perm":
        return SyntheticOracle("channel_perm")
    if kind == "affine_intensity":
        return SyntheticOracle("affine_intensity", {"a": 0.5, "b": 0.2})
    if kind == "shift":
        return SyntheticOracle("shift", {"pixels": max(1, resolution // 4)})
    raise ValueError(f"unknown synthetic kind {kind!r}; choose from {ORACLE_KINDS}")


def make_synthetic_pair(kind: str, n_per_domain: int, resolution: int, seed: int):
    """Two unpaired domains plus the exact map between them.

    X holds n fresh images; Y holds T applied to a disjoint fresh set, so no
    element of Y corresponds to any element of X.
    """
    if n_per_domain < 1:
        raise ValueError(f"n_per_domain must be >= 1, got {n_per_domain}")
    oracle = make_oracle(kind, resolution)
    rng = stream_rng(seed, STREAM_SYNTH)
    xs = np.stack([_paint_shapes(rng, resolution) for _ in range(n_per_domain)])
    ys_source = np.stack([_paint_shapes(rng, resolution) for _ in range(n_per_domain)])
    ys = oracle.apply(ys_source).astype(np.float32)
    dx = DomainDataset(xs, source=f"synthetic:{kind}:x", resolution=resolution)
    dy = DomainDataset(ys, source=f"synthetic:{kind}:y", resolution=resolution)
    return dx, dy, oracle


def sample_pair(dx: DomainDataset, dy: DomainDataset, rng: np.random.Generator):
    """One independent draw from each domain; no pairing information."""
    if len(dx) == 0 or len(dy) == 0:
        raise ValueError("both domains must be non-empty")
    ix = int(rng.integers(len(dx)))
    iy = int(rng.integers(len(dy)))
    return dx.samples[ix], dy.samples[iy]


def epoch_order(n_x: int, n_y: int, rng: np.random.Generator):
    """Index sequences for one exhaustive epoch: min(n_x, n_y) steps, the
    smaller domain visited exactly once, the larger contributing a
    permutation prefix."""
    steps = min(n_x, n_y)
    return rng.permutation(n_x)[:steps], rng.permutation(n_y)[:steps]
