"""Datasets: procedural texture scenes, palette-coded raster tiles, augmentation.

The synthetic generator is the desk-scale verification vehicle: scenes of
overlapping rectangles and ellipses where class pairs share identical shape
statistics and differ only in procedural texture (stripe orientation, checker
frequency, noise variance).  Masks are exact by construction and every sample
is a pure function of (seed, index).

The tile loader cuts paired image/label rasters into fixed windows, shifting
the final window per axis to touch the raster edge instead of padding.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ISPRS_PALETTE
from .errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) int64
    id: str

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ConfigurationError(
                f"image {self.image.shape[:2]} and mask {self.mask.shape} sizes differ for '{self.id}'"
            )


@dataclass
class Palette:
    """Bijective class-id to RGB mapping used by label rasters."""

    colors: list[tuple[int, int, int]]
    ignore_index: int = 255
    ignore_color: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        self.colors = [tuple(int(v) for v in c) for c in self.colors]
        if len(set(self.colors)) != len(self.colors):
            raise ConfigurationError("palette colors must be distinct per class")
        if tuple(self.ignore_color) in self.colors:
            raise ConfigurationError("ignore_color collides with a class color")

    @property
    def num_classes(self) -> int:
        return len(self.colors)

    def encode(self, ids: np.ndarray) -> np.ndarray:
        """Class ids -> (H, W, 3) uint8 color raster."""
        table = np.zeros((256, 3), dtype=np.uint8)
        for cid, color in enumerate(self.colors):
            table[cid] = color
        table[self.ignore_index] = self.ignore_color
        return table[ids.astype(np.int64)]

    def decode(self, rgb: np.ndarray) -> tuple[np.ndarray, int]:
        """Color raster -> (ids, count of unknown-color pixels mapped to ignore)."""
        key = (rgb[..., 0].astype(np.int64) * 256 + rgb[..., 1]) * 256 + rgb[..., 2]
        lut = np.full(256 ** 3, -1, dtype=np.int64)
        for cid, (r, g, b) in enumerate(self.colors):
            lut[(r * 256 + g) * 256 + b] = cid
        r, g, b = self.ignore_color
        lut[(r * 256 + g) * 256 + b] = self.ignore_index
        ids = lut[key]
        unknown = int((ids < 0).sum())
        if unknown:
            logger.warning("palette decode: %d pixels of unknown color -> ignore", unknown)
            ids = np.where(ids < 0, self.ignore_index, ids)
        return ids, unknown


def default_palette(num_classes: int, ignore_index: int = 255) -> Palette:
    if num_classes <= len(ISPRS_PALETTE):
        return Palette(list(ISPRS_PALETTE[:num_classes]), ignore_index=ignore_index)
    rng = np.random.default_rng(num_classes)
    colors = list(ISPRS_PALETTE)
    seen = set(colors) | {(0, 0, 0)}
    while len(colors) < num_classes:
        c = tuple(int(v) for v in rng.integers(10, 246, size=3))
        if c not in seen:
            colors.append(c)
            seen.add(c)
    return Palette(colors, ignore_index=ignore_index)


# ---------------------------------------------------------------------------
# synthetic texture scenes
# ---------------------------------------------------------------------------

# per-class procedural recipes; classes are discriminable by texture only
_RECIPES = ("flat", "stripes_h", "stripes_v", "checker_fine", "checker_coarse", "noise_hi", "stripes_diag")


def texture_recipe(class_id: int) -> str:
    if class_id == 0:
        return "flat"
    return _RECIPES[1 + (class_id - 1) % (len(_RECIPES) - 1)]


def render_texture(class_id: int, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Grayscale texture field in [0, 1] for one class over an (h, w) canvas."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    recipe = texture_recipe(class_id)
    base = 0.45 + 0.1 * rng.random()
    if recipe == "flat":
        field = base + 0.02 * rng.standard_normal((h, w))
    elif recipe == "stripes_h":
        field = base + 0.35 * np.sin(2 * np.pi * yy / 4.0)
    elif recipe == "stripes_v":
        field = base + 0.35 * np.sin(2 * np.pi * xx / 4.0)
    elif recipe == "stripes_diag":
        field = base + 0.35 * np.sin(2 * np.pi * (xx + yy) / 6.0)
    elif recipe == "checker_fine":
        field = base + 0.35 * np.sign(np.sin(2 * np.pi * xx / 4.0) * np.sin(2 * np.pi * yy / 4.0))
    elif recipe == "checker_coarse":
        field = base + 0.35 * np.sign(np.sin(2 * np.pi * xx / 12.0) * np.sin(2 * np.pi * yy / 12.0))
    else:  # noise_hi
        field = base + 0.3 * rng.standard_normal((h, w))
    field = field + 0.02 * rng.standard_normal((h, w))
    return np.clip(field, 0.0, 1.0)


def _shape_mask(kind: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.integers(h // 6, 5 * h // 6), rng.integers(w // 6, 5 * w // 6)
    ry, rx = rng.integers(h // 8, h // 3), rng.integers(w // 8, w // 3)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "rect":
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return ((yy - cy) / max(ry, 1)) ** 2 + ((xx - cx) / max(rx, 1)) ** 2 <= 1.0


def make_scene(size: int, num_classes: int, rng: np.random.Generator) -> Sample:
    """One scene: textured background plus overlapping textured shapes."""
    mask = np.zeros((size, size), dtype=np.int64)
    gray = render_texture(0, size, size, rng)
    n_shapes = int(rng.integers(3, 8))
    for _ in range(n_shapes):
        kind = "rect" if rng.random() < 0.5 else "ellipse"
        # shape geometry is drawn independently of the class, so classes share shapes
        region = _shape_mask(kind, size, size, rng)
        cid = int(rng.integers(1, num_classes)) if num_classes > 1 else 0
        mask[region] = cid
        gray[region] = render_texture(cid, size, size, rng)[region]
    image = np.clip(gray * 255.0, 0, 255).astype(np.uint8)
    image = np.repeat(image[..., None], 3, axis=2)
    return Sample(image=image, mask=mask, id="")


def gen_synthetic(count: int, size: int, num_classes: int, seed: int) -> list[Sample]:
    """Deterministic texture-discrimination dataset; every mask has >= 2 classes."""
    if size % 64:
        raise ConfigurationError("synthetic size must be divisible by 64")
    if num_classes < 2:
        raise ConfigurationError("synthetic scenes need at least 2 classes")
    samples = []
    for index in range(count):
        for attempt in range(16):
            rng = np.random.default_rng([seed, index, attempt])
            sample = make_scene(size, num_classes, rng)
            if len(np.unique(sample.mask)) >= 2:
                break
        sample.id = f"syn{seed}_{index:05d}"
        samples.append(sample)
    return samples


# ---------------------------------------------------------------------------
# geometric augmentation
# ---------------------------------------------------------------------------


def flip_horizontal(sample: Sample) -> Sample:
    return Sample(sample.image[:, ::-1].copy(), sample.mask[:, ::-1].copy(), sample.id)


def flip_vertical(sample: Sample) -> Sample:
    return Sample(sample.image[::-1].copy(), sample.mask[::-1].copy(), sample.id)


def rotate90(sample: Sample, k: int = 1) -> Sample:
    return Sample(
        np.rot90(sample.image, k, axes=(0, 1)).copy(),
        np.rot90(sample.mask, k, axes=(0, 1)).copy(),
        sample.id,
    )


def augment(sample: Sample, seed: int) -> Sample:
    """One of the 8 axis-aligned flips/rotations, chosen deterministically per seed."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, 4))
    flip = bool(rng.integers(0, 2))
    out = rotate90(sample, k) if k else sample
    return flip_horizontal(out) if flip else out


# ---------------------------------------------------------------------------
# raster tiling
# ---------------------------------------------------------------------------


def tile_positions(length: int, tile: int, stride: int) -> list[int]:
    """Window starts along one axis; the final window is shifted to touch the edge."""
    if tile > length:
        raise ConfigurationError(f"tile {tile} larger than raster extent {length}")
    if tile == length:
        return [0]
    positions = list(range(0, length - tile + 1, stride))
    if positions[-1] != length - tile:
        positions.append(length - tile)
    return positions


def tile_windows(h: int, w: int, tile: int, stride: int) -> list[tuple[int, int]]:
    return [(y, x) for y in tile_positions(h, tile, stride) for x in tile_positions(w, tile, stride)]


_RASTER_EXTS = (".png", ".tif", ".tiff", ".jpg", ".jpeg")


def _find_rasters(directory: Path) -> dict[str, Path]:
    files = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in _RASTER_EXTS:
            files[path.stem] = path
    return files


def load_tiles(image_dir: str | Path, label_dir: str | Path, tile: int, stride: int,
               palette: Palette) -> list[Sample]:
    """Cut paired rasters into tiles; labels decoded through the palette."""
    images = _find_rasters(Path(image_dir))
    labels = _find_rasters(Path(label_dir))
    if not images:
        raise ConfigurationError(f"no rasters found in {image_dir}")
    if set(images) != set(labels):
        missing = sorted(set(images) ^ set(labels))
        raise ConfigurationError(f"image/label pairing failed for: {missing[:5]}")
    samples = []
    for stem in sorted(images):
        img = np.asarray(Image.open(images[stem]).convert("RGB"))
        lab_rgb = np.asarray(Image.open(labels[stem]).convert("RGB"))
        if img.shape[:2] != lab_rgb.shape[:2]:
            raise ConfigurationError(f"size mismatch between image and label '{stem}'")
        ids, unknown = palette.decode(lab_rgb)
        if unknown > ids.size // 2:
            raise ConfigurationError(f"label '{stem}' is mostly undecodable through the palette")
        for y, x in tile_windows(*ids.shape, tile, stride):
            samples.append(
                Sample(
                    image=img[y : y + tile, x : x + tile].copy(),
                    mask=ids[y : y + tile, x : x + tile].copy(),
                    id=f"{stem}_y{y}_x{x}",
                )
            )
    return samples


# ---------------------------------------------------------------------------
# on-disk dataset layout: images/, labels/, split manifests, palette.json
# ---------------------------------------------------------------------------


def write_manifest(path: str | Path, ids: list[str]):
    Path(path).write_text("".join(f"{i}\n" for i in ids))


def read_manifest(path: str | Path) -> list[str]:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


def split_ids(ids: list[str], ratios=(7, 1, 2), seed: int = 0) -> dict[str, list[str]]:
    """Deterministic train/val/test split at the given ratio."""
    order = list(ids)
    np.random.default_rng(seed).shuffle(order)
    total = sum(ratios)
    n_train = round(len(order) * ratios[0] / total)
    n_val = round(len(order) * ratios[1] / total)
    return {
        "train": sorted(order[:n_train]),
        "val": sorted(order[n_train : n_train + n_val]),
        "test": sorted(order[n_train + n_val :]),
    }


def save_dataset(samples: list[Sample], out_dir: str | Path, palette: Palette, seed: int = 0):
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    for s in samples:
        Image.fromarray(s.image).save(out / "images" / f"{s.id}.png")
        Image.fromarray(palette.encode(s.mask)).save(out / "labels" / f"{s.id}.png")
    splits = split_ids([s.id for s in samples], seed=seed)
    for name, ids in splits.items():
        write_manifest(out / f"{name}.txt", ids)
    (out / "palette.json").write_text(
        json.dumps({"colors": [list(c) for c in palette.colors], "ignore_index": palette.ignore_index})
    )


def load_dataset(root: str | Path, split: str = "train") -> tuple[list[Sample], Palette]:
    root = Path(root)
    meta = json.loads((root / "palette.json").read_text())
    palette = Palette([tuple(c) for c in meta["colors"]], ignore_index=meta["ignore_index"])
    ids = read_manifest(root / f"{split}.txt")
    samples = []
    for sid in ids:
        image = np.asarray(Image.open(root / "images" / f"{sid}.png").convert("RGB"))
        rgb = np.asarray(Image.open(root / "labels" / f"{sid}.png").convert("RGB"))
        mask, _ = palette.decode(rgb)
        samples.append(Sample(image=image, mask=mask, id=sid))
    return samples, palette
