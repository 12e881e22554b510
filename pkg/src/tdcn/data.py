"""Dataset loading, stratified folds, synthetic patterns and pixel histograms."""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

#: default square input sides per search
ACO_SIDES = (32, 64)
PSO_SIDE = 128


class DataError(ValueError):
    pass


@dataclass
class LabeledImageSet:
    images: np.ndarray          # (N, H, W, C) float64 in [0, 1]
    labels: np.ndarray          # (N,) int64
    class_names: list[str]
    sources: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.ndim != 4:
            raise DataError("images must be stacked as (N, H, W, C)")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataError("label outside the class list")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> "LabeledImageSet":
        idx = np.asarray(idx, dtype=np.int64)
        sources = [self.sources[i] for i in idx] if self.sources else []
        return LabeledImageSet(self.images[idx], self.labels[idx], list(self.class_names), sources)

    def as_pair(self) -> tuple[np.ndarray, np.ndarray]:
        return self.images, self.labels


_RESAMPLE = {"bilinear": Image.BILINEAR, "nearest": Image.NEAREST}


def load_image(path, side: int, resample: str = "bilinear") -> np.ndarray:
    with Image.open(path) as img:
        img = img.convert("RGB").resize((side, side), _RESAMPLE[resample])
        return np.asarray(img, dtype=np.float64) / 255.0


def _find_image(directory: Path, stem: str) -> Path | None:
    for ext in (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"):
        candidate = directory / f"{stem}{ext}"
        if candidate.exists():
            return candidate
    return None


def load_dataset(image_dir, labels_csv, side: int, *, num_classes: int | None = None,
                 resample: str = "bilinear", strict: bool = True, jobs: int = 1) -> LabeledImageSet:
    """Read an ``id_code,diagnosis`` manifest and decode/resize every image.

    With ``strict`` any missing file, unreadable image or bad label raises
    :class:`DataError`; otherwise the row is skipped and the problem is
    recorded in ``errors`` on the returned set.
    """
    image_dir = Path(image_dir)
    if resample not in _RESAMPLE:
        raise DataError(f"resample must be one of {sorted(_RESAMPLE)}")
    with open(labels_csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"id_code", "diagnosis"} <= set(reader.fieldnames):
            raise DataError(f"{labels_csv}: header must contain id_code,diagnosis")
        rows = [(r["id_code"].strip(), r["diagnosis"].strip()) for r in reader]

    errors: list[str] = []

    def fail(message: str):
        if strict:
            raise DataError(message)
        errors.append(message)

    parsed = []
    for code, diag in rows:
        try:
            label = int(diag)
        except ValueError:
            fail(f"{code}: diagnosis {diag!r} is not an integer")
            continue
        if label < 0 or (num_classes is not None and label >= num_classes):
            fail(f"{code}: label {label} outside [0, {num_classes})")
            continue
        path = _find_image(image_dir, code)
        if path is None:
            fail(f"{code}: no image file in {image_dir}")
            continue
        parsed.append((code, label, path))

    def decode(item):
        code, label, path = item
        try:
            return code, label, path, load_image(path, side, resample), None
        except (OSError, UnidentifiedImageError) as exc:
            return code, label, path, None, f"{code}: unreadable image {path.name} ({exc})"

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            decoded = list(pool.map(decode, parsed))
    else:
        decoded = [decode(p) for p in parsed]

    images, labels, sources = [], [], []
    for code, label, path, img, err in decoded:
        if err:
            fail(err)
            continue
        images.append(img)
        labels.append(label)
        sources.append(str(path))
    if not images:
        raise DataError(f"no usable images in {labels_csv}")
    k = num_classes if num_classes is not None else max(labels) + 1
    out = LabeledImageSet(np.stack(images), np.array(labels), [str(c) for c in range(k)], sources, errors)
    for e in errors:
        log.warning("skipped %s", e)
    return out


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    warnings: tuple[str, ...] = ()

    def val_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.assignments != fold)

    def counts(self, labels, num_classes: int) -> np.ndarray:
        """``(k, num_classes)`` table of per-fold class counts."""
        table = np.zeros((self.k, num_classes), dtype=np.int64)
        np.add.at(table, (self.assignments, np.asarray(labels)), 1)
        return table

    def _check(self, fold: int):
        if not 0 <= fold < self.k:
            raise DataError(f"fold {fold} outside [0, {self.k})")


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal its samples round-robin.

    Every class continues dealing where the previous one stopped, so fold
    totals stay balanced too. The per-fold class counts depend only on the
    class sizes, never on the seed.
    """
    if isinstance(labels, LabeledImageSet):
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise DataError("k must be >= 2")
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(labels), dtype=np.int64)
    notes = []
    cursor = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            notes.append(f"class {c} has {len(idx)} samples for {k} folds")
        idx = rng.permutation(idx)
        assignments[idx] = (cursor + np.arange(len(idx))) % k
        cursor = (cursor + len(idx)) % k
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return FoldPlan(k, assignments, seed, tuple(notes))


def _pattern(kind: int, side: int) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side]
    period = 4
    if kind == 0:
        band = yy
    elif kind == 1:
        band = xx
    elif kind == 2:
        band = xx + yy
    elif kind == 3:
        band = xx - yy + side
    else:
        return np.where(((yy // 2) + (xx // 2)) % 2 == 0, 0.8, 0.2)
    return np.where((band // (period // 2)) % 2 == 0, 0.8, 0.2)


def synth_patterns(n_per_class: int, side: int = 16, classes: int = 2, seed: int = 0,
                   noise: float = 0.15) -> LabeledImageSet:
    """Stripe-orientation images: horizontal, vertical, two diagonals, checkerboard.

    Gaussian pixel noise with standard deviation ``noise`` is added and the
    result clipped to ``[0, 1]``; ``noise=0`` yields identical images within
    a class.
    """
    if side < 8:
        raise DataError("side must be >= 8")
    if not 2 <= classes <= 5:
        raise DataError("classes must be between 2 and 5")
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for c in range(classes):
        base = np.repeat(_pattern(c, side)[:, :, None], 3, axis=2)
        for _ in range(n_per_class):
            img = base + noise * rng.standard_normal(base.shape) if noise else base.copy()
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(c)
    order = rng.permutation(len(labels))
    return LabeledImageSet(np.stack(images)[order], np.array(labels)[order],
                           [str(c) for c in range(classes)])


def pixel_histogram(image) -> np.ndarray:
    """``(256, C + 1)`` bin counts: one column per channel plus their sum.

    Values are binned as ``round(v * 255)``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if not np.all(np.isfinite(img)):
        raise DataError("image has non-finite pixels")
    if img.min() < 0 or img.max() > 1:
        raise DataError("pixel values must lie in [0, 1]")
    bins = np.rint(img * 255).astype(np.int64)
    cols = [np.bincount(bins[:, :, c].ravel(), minlength=256) for c in range(img.shape[2])]
    table = np.stack(cols, axis=1)
    return np.concatenate([table, table.sum(axis=1, keepdims=True)], axis=1)


def histogram_csv(table: np.ndarray) -> str:
    names = ["count_r", "count_g", "count_b"] if table.shape[1] == 4 else \
        [f"count_{i}" for i in range(table.shape[1] - 1)]
    lines = [",".join(["bin", *names, "count_all"])]
    lines += [",".join(str(v) for v in (b, *row)) for b, row in enumerate(table)]
    return "\n".join(lines) + "\n"
