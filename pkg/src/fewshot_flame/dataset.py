"""Image datasets, the synthetic flame generator and the transform pipeline.

Images are kept as ``uint8`` arrays internally so that a dataset written to
PNG and read back is bit-identical; :attr:`ImageSample.pixels` exposes the
float view in ``[0, 1]`` that the rest of the package consumes.
"""
from __future__ import annotations

import colorsys
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import CapacityError, ConfigurationError, StructureError

SPLITS = ("train", "validation", "test")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
MANIFEST_NAME = "manifest.json"

# Zero-based class pairs the `hard` generator makes overlap (flame states 1/2 and 5/6).
HARD_CONFUSED_PAIRS = ((0, 1), (4, 5))


class SplitSpec(NamedTuple):
    """Per-class sample counts for each split."""

    train: int = 20
    validation: int = 20
    test: int = 400

    @property
    def total(self) -> int:
        return self.train + self.validation + self.test


@dataclass(frozen=True)
class ImageSample:
    data: np.ndarray  # (H, W, 3) uint8
    class_id: int
    split: str
    source_id: str

    def __post_init__(self):
        if self.data.dtype != np.uint8 or self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"{self.source_id}: expected (H, W, 3) uint8 image, got "
                             f"{self.data.dtype} {self.data.shape}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def pixels(self) -> np.ndarray:
        """Float32 view of the image, values in [0, 1]."""
        return self.data.astype(np.float32) / 255.0


@dataclass(frozen=True)
class Dataset:
    classes: tuple[str, ...]
    samples: tuple[ImageSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "samples", tuple(self.samples))
        m = len(self.classes)
        for s in self.samples:
            if not 0 <= s.class_id < m:
                raise ValueError(f"{s.source_id}: class_id {s.class_id} outside [0, {m})")
        for split, counts in self.split_counts.items():
            missing = [self.classes[c] for c in range(m) if counts.get(c, 0) == 0]
            if missing:
                raise StructureError(f"split {split!r} has no samples of {missing}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def split_counts(self) -> dict[str, dict[int, int]]:
        out: dict[str, Counter] = {}
        for s in self.samples:
            out.setdefault(s.split, Counter())[s.class_id] += 1
        return {k: dict(sorted(out[k].items())) for k in SPLITS if k in out}

    def split(self, name: str) -> "Dataset":
        """Subset holding only the samples of split ``name``."""
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return Dataset(self.classes, tuple(s for s in self.samples if s.split == name))

    def by_class(self) -> dict[int, list[int]]:
        """Sample indices grouped by class id (classes in ascending order)."""
        groups: dict[int, list[int]] = {c: [] for c in range(self.n_classes)}
        for i, s in enumerate(self.samples):
            groups[s.class_id].append(i)
        return groups

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([s.class_id for s in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class TransformConfig:
    input_size: int = 84
    scale_range: tuple[float, float] = (1.1, 1.5)
    flip_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if self.input_size <= 0:
            raise ConfigurationError("input_size must be positive")
        if lo < 1.0 or hi < lo:
            raise ConfigurationError(f"invalid scale_range {self.scale_range}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigurationError("flip_probability must lie in [0, 1]")
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))


# ---------------------------------------------------------------- transforms

def _as_float_image(image) -> np.ndarray:
    if isinstance(image, ImageSample):
        return image.pixels
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    return arr.astype(np.float32, copy=False)


def center_crop_square(image: np.ndarray) -> np.ndarray:
    """Crop the central square whose side is the shorter image side."""
    h, w = image.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top:top + side, left:left + side]


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an (H, W, 3) float image to ``size x size``."""
    if image.shape[0] == size and image.shape[1] == size:
        return image.copy()
    t = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None]
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False,
                        antialias=size < min(image.shape[:2]))
    return np.clip(out[0].permute(1, 2, 0).numpy(), 0.0, 1.0)


def transform_train(sample, rng: np.random.Generator,
                    cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    """Center crop, random rescale, random crop and random horizontal flip.

    ``sample`` may be an :class:`ImageSample` or an (H, W, 3) array. Random
    draws are taken from ``rng`` in a fixed order (scale, crop row, crop
    column, flip) so a seeded stream yields a reproducible image.
    """
    img = center_crop_square(_as_float_image(sample))
    lo, hi = cfg.scale_range
    scaled = max(cfg.input_size, int(round(rng.uniform(lo, hi) * cfg.input_size)))
    img = resize_bilinear(img, scaled)
    slack = scaled - cfg.input_size
    top = int(rng.integers(0, slack + 1))
    left = int(rng.integers(0, slack + 1))
    img = img[top:top + cfg.input_size, left:left + cfg.input_size]
    if rng.random() < cfg.flip_probability:
        img = img[:, ::-1]
    return np.ascontiguousarray(img, dtype=np.float32)


def transform_eval(sample, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    """Deterministic counterpart: center crop and resize to ``input_size``."""
    img = center_crop_square(_as_float_image(sample))
    return np.ascontiguousarray(resize_bilinear(img, cfg.input_size), dtype=np.float32)


def transform_eval_batch(samples: Iterable, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    return np.stack([transform_eval(s, cfg) for s in samples])


# ------------------------------------------------------------ directory I/O

def _read_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _list_class_dirs(root: Path) -> list[str]:
    if not root.is_dir():
        raise StructureError(f"dataset root {root} is not a directory")
    names = sorted(p.name for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not names:
        raise StructureError(f"no class directories under {root}")
    return names


def _list_images(class_dir: Path) -> list[str]:
    return sorted(p.name for p in class_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def load_dataset(root, split_spec: SplitSpec = SplitSpec(), seed: int = 0,
                 classes: Sequence[str] | None = None) -> Dataset:
    """Read ``<root>/<class>/*.{png,jpg,bmp}`` and randomly partition into splits.

    Class ids follow the lexicographic order of the directory names. When
    ``classes`` is given, each of them must exist as a directory.
    """
    root = Path(root)
    split_spec = SplitSpec(*split_spec)
    names = _list_class_dirs(root)
    if classes is not None:
        for name in classes:
            if name not in names:
                raise StructureError(f"missing class directory {name!r} under {root}")
        names = sorted(classes)
    rng = np.random.default_rng(seed)
    samples = []
    for cid, name in enumerate(names):
        files = _list_images(root / name)
        if len(files) < split_spec.total:
            raise CapacityError(f"class {name!r} has {len(files)} images, needs {split_spec.total} "
                                f"(short by {split_spec.total - len(files)})")
        order = rng.permutation(len(files))
        bounds = np.cumsum([0, *split_spec])
        for split, a, b in zip(SPLITS, bounds[:-1], bounds[1:]):
            for j in sorted(order[a:b]):
                samples.append(ImageSample(_read_image(root / name / files[j]), cid, split,
                                           f"{name}/{files[j]}"))
    return Dataset(tuple(names), tuple(samples))


def export_dataset(ds: Dataset, root, overwrite: bool = False) -> Path:
    """Write ``ds`` in the canonical class-directory layout plus a split manifest."""
    root = Path(root)
    if root.exists() and any(root.iterdir()) and not overwrite:
        raise FileExistsError(f"{root} exists and is not empty (pass overwrite=True)")
    root.mkdir(parents=True, exist_ok=True)
    for name in ds.classes:
        (root / name).mkdir(exist_ok=True)
    entries = []
    for s in ds.samples:
        rel = f"{ds.classes[s.class_id]}/{Path(s.source_id).stem}.png"
        Image.fromarray(s.data).save(root / rel)
        entries.append({"source_id": rel, "class_id": s.class_id, "split": s.split})
    write_manifest(root, ds.classes, entries)
    return root


def write_manifest(root, classes: Sequence[str], entries: list[dict], **extra) -> None:
    manifest = {"classes": list(classes), "samples": entries, **extra}
    with open(Path(root) / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_prepared(root) -> Dataset:
    """Reload a dataset using the split assignment recorded in its manifest."""
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise StructureError(f"no {MANIFEST_NAME} in {root}")
    with open(path) as fh:
        manifest = json.load(fh)
    classes = tuple(manifest["classes"])
    for name in classes:
        if not (root / name).is_dir():
            raise StructureError(f"missing class directory {name!r} under {root}")
    samples = [ImageSample(_read_image(root / e["source_id"]), int(e["class_id"]), e["split"],
                           e["source_id"]) for e in manifest["samples"]]
    return Dataset(classes, tuple(samples))


# ------------------------------------------------------- synthetic flames

@dataclass(frozen=True)
class _FlameStyle:
    hue: float          # base hue in [0, 1)
    height: float       # flame height as a fraction of image height
    width: float        # flame half-width as a fraction of image width
    lift: float         # flame base position above the bottom edge (fraction of height)
    texture: float      # amplitude of the flicker texture
    hue_jitter: float = 0.02
    shape_jitter: float = 0.04


# Six hues x two silhouettes; classes sharing a hue differ in shape and vice versa.
_EASY_STYLES = (
    _FlameStyle(0.02, 0.70, 0.16, 0.08, 0.10),
    _FlameStyle(0.02, 0.40, 0.30, 0.30, 0.35),
    _FlameStyle(0.14, 0.70, 0.16, 0.08, 0.35),
    _FlameStyle(0.14, 0.40, 0.30, 0.30, 0.10),
    _FlameStyle(0.58, 0.70, 0.16, 0.08, 0.10),
    _FlameStyle(0.58, 0.40, 0.30, 0.30, 0.35),
)


def _class_styles(n_classes: int, difficulty: str) -> list[_FlameStyle]:
    styles = []
    for c in range(n_classes):
        base = _EASY_STYLES[c % len(_EASY_STYLES)]
        if c >= len(_EASY_STYLES):
            base = _FlameStyle((base.hue + 0.37 * (c // len(_EASY_STYLES))) % 1.0, base.height,
                               base.width, base.lift, base.texture)
        styles.append(base)
    if difficulty == "hard":
        for a, b in HARD_CONFUSED_PAIRS:
            if b >= n_classes:
                continue
            ref = styles[a]
            styles[a] = _FlameStyle(ref.hue, 0.58, 0.22, 0.15, 0.2, 0.03, 0.10)
            styles[b] = _FlameStyle(ref.hue + 0.03, 0.66, 0.22, 0.15, 0.2, 0.03, 0.10)
    return styles


def _render_flame(style: _FlameStyle, rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    y = 1.0 - yy / (height - 1)                 # 0 at bottom, 1 at top
    x = xx / (width - 1) - 0.5
    j = style.shape_jitter
    h = style.height * (1 + j * rng.standard_normal())
    w = style.width * (1 + j * rng.standard_normal())
    lift = style.lift + 0.03 * rng.standard_normal()
    cx = 0.06 * rng.standard_normal()
    hue = (style.hue + style.hue_jitter * rng.standard_normal()) % 1.0

    t = np.clip((y - lift) / max(h, 1e-3), 0.0, 1.0)
    # teardrop silhouette: widest near the base, tapering to the tip
    half_width = w * np.sqrt(np.clip(t, 0, 1)) * (1.0 - t) * 2.6 + 1e-3
    inside = (y >= lift) & (y <= lift + h)
    core = np.exp(-((x - cx) / half_width) ** 2) * inside
    phase = rng.uniform(0, 2 * np.pi)
    flicker = 1.0 + style.texture * np.sin(18.0 * y + phase) * np.cos(9.0 * x + phase)
    intensity = np.clip(core * flicker, 0.0, 1.0)

    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    core_rgb = np.array(colorsys.hsv_to_rgb(hue, 0.25, 1.0), dtype=np.float32)
    rim_rgb = np.array([r, g, b], dtype=np.float32)
    mix = intensity[..., None] ** 2
    rgb = intensity[..., None] * (rim_rgb * (1 - mix) + core_rgb * mix)
    rgb += 0.04 + 0.03 * rng.standard_normal((height, width, 1)).astype(np.float32)
    rgb += 0.02 * rng.standard_normal((height, width, 3)).astype(np.float32)
    return (np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def generate_synthetic_dataset(n_classes: int = 6, split_spec: SplitSpec = SplitSpec(),
                               difficulty: str = "easy", seed: int = 0,
                               image_size: tuple[int, int] = (104, 80)) -> Dataset:
    """Render a flame-like few-shot dataset.

    Every class is a parameterised flame silhouette (size, base height, hue,
    flicker texture) with per-image jitter. ``hard`` makes the class pairs in
    :data:`HARD_CONFUSED_PAIRS` overlap so they are only partly separable.
    ``image_size`` is (height, width); portrait by default.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    if difficulty not in ("easy", "hard"):
        raise ValueError(f"difficulty must be 'easy' or 'hard', got {difficulty!r}")
    split_spec = SplitSpec(*split_spec)
    height, width = image_size
    styles = _class_styles(n_classes, difficulty)
    digits = len(str(n_classes))
    names = tuple(f"class_{c + 1:0{digits}d}" for c in range(n_classes))
    rng = np.random.default_rng(seed)
    samples = []
    for cid, (name, style) in enumerate(zip(names, styles)):
        idx = 0
        for split, count in zip(SPLITS, split_spec):
            for _ in range(count):
                samples.append(ImageSample(_render_flame(style, rng, height, width), cid, split,
                                           f"{name}/{idx:05d}.png"))
                idx += 1
    return Dataset(names, tuple(samples))


def nearest_centroid_accuracy(ds: Dataset, cfg: TransformConfig = TransformConfig(input_size=32)) -> float:
    """Test accuracy of a raw-pixel nearest-centroid classifier fit on the train split."""
    train, test = ds.split("train"), ds.split("test")
    xtr = transform_eval_batch(train.samples, cfg).reshape(len(train), -1)
    xte = transform_eval_batch(test.samples, cfg).reshape(len(test), -1)
    ytr, yte = train.class_ids, test.class_ids
    centroids = np.stack([xtr[ytr == c].mean(axis=0) for c in range(ds.n_classes)])
    d = ((xte[:, None, :] - centroids[None]) ** 2).sum(-1)
    return float((d.argmin(axis=1) == yte).mean())
