"""Dataset ingestion and the procedural glass-scene generator.

Dataset directory layout::

    root/
      images/<id>.png      8-bit RGB
      masks/<id>.png       8-bit single channel, one class id per pixel
      classes.txt          one line per class: "<id> <name> <reflective_flag>"

The generator paints convex polygon objects over a textured background. Glass
objects are alpha-blended with the background, ringed by a bright 1-2 px rim,
and carry a few white specular blobs; opaque objects are solid fills. These
are exactly the cues the enhancement modules are built to pick up, which is
what makes the desk-scale ablations meaningful. Generation is a pure function
of the seed: per-scene RNGs are spawned as (seed, scene_index).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, DataError, IngestionError


@dataclass(frozen=True)
class ClassEntry:
    id: int
    name: str
    reflective: bool


@dataclass(frozen=True)
class ClassTable:
    entries: tuple[ClassEntry, ...]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if ids != list(range(len(ids))):
            raise DataError(f"class ids must be dense from 0, got {ids}")
        if not self.entries or self.entries[0].reflective:
            raise DataError("class id 0 must be the non-reflective background")

    @property
    def n_class(self) -> int:
        return len(self.entries)

    @property
    def reflective_ids(self) -> frozenset[int]:
        return frozenset(e.id for e in self.entries if e.reflective)

    def write(self, path: Path | str) -> None:
        lines = [f"{e.id} {e.name} {int(e.reflective)}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def parse(cls, path: Path | str) -> "ClassTable":
        entries = []
        for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path}:{ln}: expected 'id name reflective_flag', got {raw!r}")
            entries.append(ClassEntry(id=int(parts[0]), name=parts[1],
                                      reflective=bool(int(parts[2]))))
        return cls(entries=tuple(sorted(entries, key=lambda e: e.id)))


# the generator's fixed class vocabulary
SYNTH_CLASSES = ClassTable(entries=(
    ClassEntry(0, "background", False),
    ClassEntry(1, "block", False),
    ClassEntry(2, "pane", True),
))
OPAQUE_CLASS = 1
GLASS_CLASS = 2


@dataclass
class SampleRecord:
    image: np.ndarray       # float32 (3, H, W) in [0, 1]
    semantic_gt: np.ndarray  # int64 (H, W)
    id: str

    def __post_init__(self):
        if self.image.shape[1:] != self.semantic_gt.shape:
            raise DataError(
                f"record {self.id}: image {self.image.shape[1:]} vs mask {self.semantic_gt.shape}"
            )


@dataclass(frozen=True)
class SynthParams:
    n_images: int = 100
    image_size: int = 64
    n_objects: tuple[int, int] = (2, 4)
    translucency_alpha: tuple[float, float] = (0.55, 0.85)
    specular_blobs: tuple[int, int] = (1, 3)
    boundary_contrast: tuple[float, float] = (0.45, 0.85)
    seed: int = 0

    def __post_init__(self):
        if self.image_size % 32 != 0:
            raise ConfigurationError(f"image_size must be divisible by 32, got {self.image_size}")
        if self.n_images < 1:
            raise ConfigurationError("n_images must be positive")


def _textured_background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.empty((3, size, size))
    for c in range(3):
        base = rng.uniform(0.25, 0.65)
        tex = np.zeros((size, size))
        for _ in range(3):
            fx, fy = rng.uniform(1.0, 5.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            tex += rng.uniform(0.05, 0.12) * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
        grad = rng.uniform(-0.12, 0.12) * (xx - 0.5) + rng.uniform(-0.12, 0.12) * (yy - 0.5)
        img[c] = base + tex + grad + rng.normal(0.0, 0.01, size=(size, size))
    return np.clip(img, 0.02, 0.98)


def _convex_polygon_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    """Rasterize a random convex polygon inscribed in a rotated ellipse."""
    cx = rng.uniform(0.2 * size, 0.8 * size)
    cy = rng.uniform(0.2 * size, 0.8 * size)
    rx = rng.uniform(0.12 * size, 0.3 * size)
    ry = rng.uniform(0.12 * size, 0.3 * size)
    theta = rng.uniform(0, np.pi)
    n_pts = int(rng.integers(5, 10))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n_pts))
    px = rx * np.cos(angles)
    py = ry * np.sin(angles)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    xs = cx + cos_t * px - sin_t * py
    ys = cy + sin_t * px + cos_t * py
    xs = np.clip(xs, 0, size - 1)
    ys = np.clip(ys, 0, size - 1)

    from PIL import ImageDraw
    canvas = Image.new("L", (size, size), 0)
    ImageDraw.Draw(canvas).polygon(list(zip(xs.tolist(), ys.tolist())), fill=1)
    return np.asarray(canvas, dtype=bool)


def _render_scene(rng: np.random.Generator, params: SynthParams) -> tuple[np.ndarray, np.ndarray]:
    size = params.image_size
    img = _textured_background(rng, size)
    background = img.copy()
    label = np.zeros((size, size), dtype=np.int64)

    lo, hi = params.n_objects
    n_obj = int(rng.integers(lo, hi + 1))
    for k in range(n_obj):
        mask = _convex_polygon_mask(rng, size)
        if mask.sum() < 12:
            continue
        is_glass = (k == n_obj - 1) or rng.random() < 0.5  # last object is always glass
        if not is_glass:
            color = rng.uniform(0.1, 0.9, size=3)
            for c in range(3):
                img[c][mask] = color[c] + rng.normal(0, 0.01, size=int(mask.sum()))
            label[mask] = OPAQUE_CLASS
            continue

        alpha = rng.uniform(*params.translucency_alpha)
        tint = rng.uniform(0.45, 0.8, size=3)
        for c in range(3):
            blended = alpha * background[c][mask] + (1 - alpha) * tint[c]
            img[c][mask] = blended + rng.normal(0, 0.008, size=int(mask.sum()))

        rim_width = int(rng.integers(1, 3))
        interior = ndimage.binary_erosion(mask, iterations=rim_width)
        rim = mask & ~interior
        contrast = rng.uniform(*params.boundary_contrast)
        for c in range(3):
            img[c][rim] = (1 - contrast) * img[c][rim] + contrast

        blob_pool = np.argwhere(ndimage.binary_erosion(mask, iterations=2))
        if len(blob_pool):
            n_blobs = int(rng.integers(params.specular_blobs[0], params.specular_blobs[1] + 1))
            yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
            for _ in range(n_blobs):
                by, bx = blob_pool[rng.integers(0, len(blob_pool))]
                sig = rng.uniform(0.8, 2.0)
                strength = rng.uniform(0.7, 1.0)
                splat = strength * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * sig ** 2))
                splat *= mask
                for c in range(3):
                    img[c] = img[c] + splat * (1.0 - img[c])
        label[mask] = GLASS_CLASS

    return np.clip(img, 0.0, 1.0).astype(np.float32), label


def generate_synthetic(params: SynthParams, out_dir: Path | str) -> list[SampleRecord]:
    """Render the dataset to disk in the ingestion layout and return the
    in-memory records (images in [0,1] quantized to 8 bits, like the files)."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    SYNTH_CLASSES.write(out / "classes.txt")

    records = []
    for i in range(params.n_images):
        rng = np.random.default_rng([params.seed, i])
        img, label = _render_scene(rng, params)
        scene_id = f"scene_{i:05d}"
        img_u8 = np.round(img * 255.0).astype(np.uint8)
        Image.fromarray(img_u8.transpose(1, 2, 0), mode="RGB").save(out / "images" / f"{scene_id}.png")
        Image.fromarray(label.astype(np.uint8), mode="L").save(out / "masks" / f"{scene_id}.png")
        records.append(SampleRecord(image=(img_u8.astype(np.float32) / 255.0),
                                    semantic_gt=label, id=scene_id))
    return records


def load_dataset(root: Path | str) -> tuple[list[SampleRecord], ClassTable]:
    root = Path(root)
    classes_path = root / "classes.txt"
    img_dir = root / "images"
    mask_dir = root / "masks"
    for p in (classes_path, img_dir, mask_dir):
        if not p.exists():
            raise IngestionError(f"dataset at {root} is missing {p.name}")
    table = ClassTable.parse(classes_path)

    image_ids = sorted(p.stem for p in img_dir.glob("*.png"))
    mask_ids = {p.stem for p in mask_dir.glob("*.png")}
    orphans = [i for i in image_ids if i not in mask_ids]
    if orphans:
        raise IngestionError(f"images without mask partner: {', '.join(orphans)}")

    records = []
    for scene_id in image_ids:
        img = np.asarray(Image.open(img_dir / f"{scene_id}.png").convert("RGB"))
        mask = np.asarray(Image.open(mask_dir / f"{scene_id}.png"), dtype=np.int64)
        if mask.size and mask.max() >= table.n_class:
            raise DataError(
                f"mask {scene_id} contains class id {int(mask.max())} >= n_class {table.n_class}"
            )
        records.append(SampleRecord(
            image=img.transpose(2, 0, 1).astype(np.float32) / 255.0,
            semantic_gt=mask,
            id=scene_id,
        ))
    return records, table


def augment(record: SampleRecord, seed: int, out_size: int | None = None,
            flip_prob: float = 0.5) -> SampleRecord:
    """Seeded horizontal flip plus resize to the training resolution.

    Masks are resized with nearest-neighbor so labels stay integral.
    """
    rng = np.random.default_rng(seed)
    img = record.image
    mask = record.semantic_gt
    if rng.random() < flip_prob:
        img = img[:, :, ::-1].copy()
        mask = mask[:, ::-1].copy()
    if out_size is not None and img.shape[1:] != (out_size, out_size):
        pil = Image.fromarray(np.round(img.transpose(1, 2, 0) * 255.0).astype(np.uint8))
        pil = pil.resize((out_size, out_size), Image.BILINEAR)
        img = np.asarray(pil).transpose(2, 0, 1).astype(np.float32) / 255.0
        mpil = Image.fromarray(mask.astype(np.uint8), mode="L")
        mpil = mpil.resize((out_size, out_size), Image.NEAREST)
        mask = np.asarray(mpil, dtype=np.int64)
    return replace(record, image=img, semantic_gt=mask)
