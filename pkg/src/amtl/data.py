"""Procedural 10-class shape dataset: grayscale 32x32 images in [-1, 1].

Classes are simple geometric primitives with strong orientation cues, so that
flips and rotations of an image are semantically nontrivial. Rendering is
pure: every image is a deterministic function of its jitter parameters, which
are drawn from an explicit numpy Generator.

Jitter bounds (documented contract):
    center offset  uniform in [-2.5, 2.5] pixels per axis
    scale          uniform in [0.75, 1.05]
    rotation       uniform in [-0.15, 0.15] radians

Occupancy is evaluated on a 4x supersampled grid and box-filtered down, which
anti-aliases edges; background is -1, foreground +1.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

__all__ = ["CLASS_NAMES", "ShapeDataset", "render_shape", "make_dataset",
           "save_dataset", "load_dataset", "image_to_png_bytes"]

CLASS_NAMES = ("circle", "square", "triangle", "cross", "ring",
               "star", "crescent", "bar", "diamond", "spiral")

IMAGE_SIZE = 32
_SS = 4  # supersampling factor


@dataclasses.dataclass
class ShapeDataset:
    """Balanced labeled dataset; images (n, 1, H, W) float32 in [-1, 1]."""

    images: torch.Tensor
    labels: np.ndarray           # int64 indices into class_names
    class_names: tuple
    seed: int
    jitter: list                 # per-item dict of the sampled jitter

    def __len__(self) -> int:
        return self.images.shape[0]

    def label_name(self, i: int) -> str:
        return self.class_names[int(self.labels[i])]


def _sample_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    # Subsample centers in pixel units, origin at the image center.
    n = size * _SS
    coords = (np.arange(n) + 0.5) / _SS - size / 2.0
    ys, xs = np.meshgrid(coords, coords, indexing="ij")
    return xs, ys


def _occupancy(kind: str, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Boolean occupancy of the unit-pose shape at the given sample coords."""
    r = np.hypot(xs, ys)
    if kind == "circle":
        return r <= 9.0
    if kind == "square":
        return np.maximum(np.abs(xs), np.abs(ys)) <= 7.5
    if kind == "triangle":
        # apex up: vertices (0, -9), (-8, 7), (8, 7); three half-plane tests
        return (ys <= 7.0) & (2.0 * xs + ys >= -9.0) & (2.0 * xs - ys <= 9.0)
    if kind == "cross":
        return ((np.abs(xs) <= 2.6) & (np.abs(ys) <= 9.0)) | \
               ((np.abs(ys) <= 2.6) & (np.abs(xs) <= 9.0))
    if kind == "ring":
        return (r <= 9.0) & (r >= 5.5)
    if kind == "star":
        # 5-point star, one point up: polar radius threshold interpolating
        # outer radius at the points, inner radius at the notches.
        theta = np.arctan2(xs, -ys)  # 0 at "up", increasing clockwise
        sector = np.mod(theta, 2.0 * np.pi / 5.0)
        frac = np.abs(sector - np.pi / 5.0) / (np.pi / 5.0)  # 1 at point, 0 at notch
        r_out, r_in = 10.0, 4.2
        limit = r_in * r_out / (r_out - (r_out - r_in) * frac)
        return r <= limit
    if kind == "crescent":
        return (r <= 9.0) & (np.hypot(xs, ys + 3.0) >= 6.5)
    if kind == "bar":
        return (np.abs(xs) <= 10.0) & (np.abs(ys) <= 3.0)
    if kind == "diamond":
        return np.abs(xs) + np.abs(ys) <= 9.5
    if kind == "spiral":
        theta = np.mod(np.arctan2(ys, xs), 2.0 * np.pi)
        theta_max = 2.0 * np.pi * 2.75
        b = 9.5 / theta_max
        hit = np.zeros_like(xs, dtype=bool)
        for k in range(4):
            phi = theta + 2.0 * np.pi * k
            ok = phi <= theta_max
            hit |= ok & (np.abs(r - b * phi) <= 1.3)
        return hit
    raise ValueError(f"unknown shape class {kind!r}")


def render_shape(c: str, rng: np.random.Generator,
                 size: int = IMAGE_SIZE) -> tuple[torch.Tensor, dict]:
    """Render one jittered instance of class ``c``.

    Returns (image (1, size, size) float32 in [-1, 1], jitter dict). Draw
    order from ``rng`` is fixed: cx, cy, scale, rotation.
    """
    if c not in CLASS_NAMES:
        raise ValueError(f"unknown shape class {c!r}")
    cx = float(rng.uniform(-2.5, 2.5))
    cy = float(rng.uniform(-2.5, 2.5))
    scale = float(rng.uniform(0.75, 1.05))
    rot = float(rng.uniform(-0.15, 0.15))
    jitter = {"cx": cx, "cy": cy, "scale": scale, "rot": rot}

    xs, ys = _sample_grid(size)
    # inverse pose: translate, rotate by -rot, unscale
    xs0 = (xs - cx)
    ys0 = (ys - cy)
    cos_r, sin_r = np.cos(rot), np.sin(rot)
    xr = (cos_r * xs0 + sin_r * ys0) / scale
    yr = (-sin_r * xs0 + cos_r * ys0) / scale

    occ = _occupancy(c, xr, yr).astype(np.float64)
    coverage = occ.reshape(size, _SS, size, _SS).mean(axis=(1, 3))
    img = (2.0 * coverage - 1.0).astype(np.float32)
    return torch.from_numpy(img).unsqueeze(0), jitter


def make_dataset(n_per_class: int, seed: int,
                 size: int = IMAGE_SIZE) -> ShapeDataset:
    """Balanced dataset: n_per_class instances of each class, seeded shuffle."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    images, labels, jitters = [], [], []
    for idx, name in enumerate(CLASS_NAMES):
        for _ in range(n_per_class):
            img, jit = render_shape(name, rng, size)
            images.append(img)
            labels.append(idx)
            jitters.append(jit)
    order = rng.permutation(len(images))
    images = torch.stack([images[i] for i in order])
    labels = np.array([labels[i] for i in order], dtype=np.int64)
    jitters = [jitters[i] for i in order]
    return ShapeDataset(images=images, labels=labels, class_names=CLASS_NAMES,
                        seed=seed, jitter=jitters)


def image_to_png_bytes(img: torch.Tensor) -> bytes:
    """Encode a (1, H, W) or (H, W) tensor in [-1, 1] as 8-bit grayscale PNG."""
    arr = img.detach().squeeze().numpy()
    arr = np.clip((arr + 1.0) * 127.5, 0.0, 255.0)
    pil = Image.fromarray(np.round(arr).astype(np.uint8), mode="L")
    import io
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def save_dataset(ds: ShapeDataset, out_dir) -> None:
    """Dump as PNG files plus a JSON manifest (label, seed, jitter per item)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for i in range(len(ds)):
        fname = f"{i:05d}_{ds.label_name(i)}.png"
        (out / fname).write_bytes(image_to_png_bytes(ds.images[i]))
        items.append({"index": i, "file": fname, "label": ds.label_name(i),
                      "jitter": ds.jitter[i]})
    manifest = {
        "seed": ds.seed,
        "image_size": int(ds.images.shape[-1]),
        "class_names": list(ds.class_names),
        "items": items,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(in_dir) -> ShapeDataset:
    """Inverse of :func:`save_dataset` (images re-quantized to 8-bit levels)."""
    root = Path(in_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    names = tuple(manifest["class_names"])
    images, labels, jitters = [], [], []
    for item in manifest["items"]:
        arr = np.asarray(Image.open(root / item["file"]), dtype=np.float32)
        images.append(torch.from_numpy(arr / 127.5 - 1.0).unsqueeze(0))
        labels.append(names.index(item["label"]))
        jitters.append(item["jitter"])
    return ShapeDataset(images=torch.stack(images),
                        labels=np.array(labels, dtype=np.int64),
                        class_names=names, seed=manifest["seed"], jitter=jitters)
