"""Task streams and auxiliary pools.

Builds the three benchmark ingredients: labeled datasets (synthetic
Gaussian clusters, synthetic digit glyphs, IDX or CSV files), ordered task
streams over them (disjoint-class or rotated-domain), and unlabeled
auxiliary pools drawn from outside the stream's distribution.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, ShapeError
from .linalg import Matrix, Rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature rows with integer class labels."""

    x: Matrix
    y: np.ndarray
    class_count: int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.intp)
        if self.x.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.x.shape}")
        if self.y.shape != (self.x.shape[0],):
            raise ShapeError(
                f"{self.x.shape[0]} rows but {self.y.shape[0]} labels"
            )
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.class_count):
            raise DomainError(
                f"labels must lie in [0, {self.class_count}), "
                f"got range [{self.y.min()}, {self.y.max()}]"
            )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass
class Task:
    train: Dataset
    test: Dataset
    class_subset: frozenset[int]


@dataclass
class TaskStream:
    """Ordered tasks plus the scenario tag the evaluator needs.

    class_il streams have pairwise-disjoint class subsets; domain_il
    streams repeat the full label set in every task.
    """

    scenario: str  # "class_il" | "domain_il"
    tasks: list[Task]
    total_classes: int

    def __post_init__(self):
        if self.scenario not in ("class_il", "domain_il"):
            raise DomainError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "class_il":
            seen: set[int] = set()
            for t in self.tasks:
                if t.class_subset & seen:
                    raise DomainError("class subsets of a class_il stream must be disjoint")
                seen |= t.class_subset
            if seen and (min(seen) < 0 or max(seen) >= self.total_classes):
                raise DomainError("class subset outside [0, total_classes)")
        else:
            full = frozenset(range(self.total_classes))
            for t in self.tasks:
                if t.class_subset != full:
                    raise DomainError("domain_il tasks must keep the full label set")

    def __len__(self) -> int:
        return len(self.tasks)


@dataclass
class AuxiliaryPool:
    """Unlabeled samples; labels never exist anywhere on this path."""

    x: Matrix
    source_tag: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


# ---------------------------------------------------------------------------
# synthetic generators

def _unit(rng: Rng, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def make_gaussian_dataset(class_count: int, dim: int, separation: float,
                          per_class: int, rng: Rng,
                          pair_spread: float | None = None) -> Dataset:
    """Isotropic unit-variance Gaussian blobs, one per class.

    Each class mean is a random unit direction scaled by ``separation``, so
    separation 0 collapses all classes onto one cloud and large separation
    makes them trivially linearly separable.

    With ``pair_spread`` set, consecutive classes (2j, 2j+1) instead share
    one such direction and sit ``pair_spread`` apart across it. Telling a
    pair apart then takes a fine decision boundary while different pairs
    stay coarsely separated, which is what makes the split benchmarks
    actually forgettable for a fine-tuned model. A sequence of spreads
    (one per pair) grades the difficulty across pairs.
    """
    if class_count < 2:
        raise DomainError(f"need at least 2 classes, got {class_count}")
    if dim < 2:
        raise DomainError(f"need dim >= 2, got {dim}")
    if per_class < 2:
        raise DomainError(f"need at least 2 samples per class, got {per_class}")
    if pair_spread is not None and class_count % 2 != 0:
        raise DomainError("pair_spread needs an even class count")
    if pair_spread is None:
        means = [separation * _unit(rng, dim) for _ in range(class_count)]
    else:
        spreads = (np.full(class_count // 2, float(pair_spread))
                   if np.isscalar(pair_spread)
                   else np.asarray(pair_spread, dtype=np.float64))
        if spreads.shape != (class_count // 2,):
            raise DomainError(
                f"need one spread per pair ({class_count // 2}), got {spreads.shape}"
            )
        means = []
        for sp in spreads:
            center = separation * _unit(rng, dim)
            offset = (sp / 2.0) * _unit(rng, dim)
            means.extend([center - offset, center + offset])
    xs, ys = [], []
    for c, mean in enumerate(means):
        xs.append(mean + rng.normal(size=(per_class, dim)))
        ys.append(np.full(per_class, c, dtype=np.intp))
    return Dataset(x=np.vstack(xs), y=np.concatenate(ys), class_count=class_count)


# 8x8 digit-shaped glyphs: a self-contained stand-in for small digit image
# files, used by the rotated domain-shift benchmark.
_DIGIT_GLYPHS = [
    ("..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####..", "........"),
    ("...##...", "..###...", "...##...", "...##...", "...##...", "...##...", ".######.", "........"),
    ("..####..", ".#....#.", "......#.", ".....#..", "...##...", "..#.....", ".######.", "........"),
    ("..####..", ".#....#.", "......#.", "...###..", "......#.", ".#....#.", "..####..", "........"),
    ("....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#..", "........"),
    (".######.", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####..", "........"),
    ("..####..", ".#......", ".#......", ".#####..", ".#....#.", ".#....#.", "..####..", "........"),
    (".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "........"),
    ("..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", "..####..", "........"),
    ("..####..", ".#....#.", ".#....#.", "..#####.", "......#.", "......#.", "..####..", "........"),
]

# Non-digit symbols for out-of-distribution auxiliary pools.
_SYMBOL_GLYPHS = [
    ("........", "...##...", "...##...", ".######.", ".######.", "...##...", "...##...", "........"),
    ("#......#", ".#....#.", "..#..#..", "...##...", "...##...", "..#..#..", ".#....#.", "#......#"),
    ("########", "#......#", "#......#", "#......#", "#......#", "#......#", "#......#", "########"),
    ("...##...", "..#..#..", ".#....#.", "#......#", "#......#", ".#....#.", "..#..#..", "...##..."),
    ("########", "........", "########", "........", "########", "........", "########", "........"),
    (".......#", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".#......", "#......."),
]


def _glyph_array(pattern) -> np.ndarray:
    return np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in pattern])


def _jitter(img: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """Shift by whole pixels, filling vacated cells with zeros."""
    out = np.zeros_like(img)
    h, w = img.shape
    src_r = slice(max(0, -dr), min(h, h - dr))
    dst_r = slice(max(0, dr), min(h, h + dr))
    src_c = slice(max(0, -dc), min(w, w - dc))
    dst_c = slice(max(0, dc), min(w, w + dc))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def _glyph_samples(glyphs, per_glyph: int, noise: float, rng: Rng,
                   rotate: bool) -> list[np.ndarray]:
    rows = []
    for g in glyphs:
        base = _glyph_array(g)
        for _ in range(per_glyph):
            img = _jitter(base, int(rng.integers(-1, 2)), int(rng.integers(-1, 2)))
            if rotate:
                img = rotate_image(img, float(rng.uniform(0.0, np.pi)))
            img = np.clip(img + rng.normal(scale=noise, size=img.shape), 0.0, 1.0)
            rows.append(img.reshape(-1))
    return rows


def make_glyph_dataset(per_class: int, noise: float, rng: Rng) -> Dataset:
    """10-class dataset of noisy, jittered 8x8 digit glyphs in [0, 1]."""
    if per_class < 2:
        raise DomainError(f"need at least 2 samples per class, got {per_class}")
    rows = _glyph_samples(_DIGIT_GLYPHS, per_class, noise, rng, rotate=False)
    y = np.repeat(np.arange(10, dtype=np.intp), per_class)
    return Dataset(x=np.array(rows), y=y, class_count=10)


def make_glyph_pool(per_glyph: int, noise: float, rng: Rng,
                    rotate: bool = True) -> AuxiliaryPool:
    """Unlabeled pool of non-digit symbol glyphs, randomly rotated for
    distributional spread."""
    if per_glyph < 1:
        raise DomainError(f"need at least 1 sample per glyph, got {per_glyph}")
    rows = _glyph_samples(_SYMBOL_GLYPHS, per_glyph, noise, rng, rotate=rotate)
    return AuxiliaryPool(x=np.array(rows), source_tag="symbol-glyphs")


def pool_from_dataset(ds: Dataset, tag: str) -> AuxiliaryPool:
    """Drop the labels; the regularization path never sees them."""
    return AuxiliaryPool(x=ds.x.copy(), source_tag=tag)


# ---------------------------------------------------------------------------
# stream construction

def _stratified_split(ds: Dataset, train_frac: float = 0.8) -> tuple[Dataset, Dataset]:
    """Deterministic per-class 80/20 split, both halves nonempty per class."""
    tr_idx, te_idx = [], []
    for c in np.unique(ds.y):
        idx = np.flatnonzero(ds.y == c)
        n_tr = int(round(train_frac * idx.size))
        n_tr = min(idx.size - 1, max(1, n_tr))
        tr_idx.append(idx[:n_tr])
        te_idx.append(idx[n_tr:])
    tr = np.concatenate(tr_idx)
    te = np.concatenate(te_idx)
    return (
        Dataset(x=ds.x[tr], y=ds.y[tr], class_count=ds.class_count),
        Dataset(x=ds.x[te], y=ds.y[te], class_count=ds.class_count),
    )


def split_class_stream(base: Dataset, t_count: int) -> TaskStream:
    """Split a dataset into t_count tasks of consecutive disjoint classes.

    Labels stay global (single-head models keep one output per class), and
    each task gets its own stratified 80/20 train/test split.
    """
    if t_count < 1:
        raise DomainError(f"need at least 1 task, got {t_count}")
    if base.class_count % t_count != 0:
        raise DomainError(
            f"class count {base.class_count} not divisible by {t_count} tasks"
        )
    per_task = base.class_count // t_count
    tasks = []
    for i in range(t_count):
        subset = frozenset(range(i * per_task, (i + 1) * per_task))
        mask = np.isin(base.y, sorted(subset))
        if not mask.any():
            raise DomainError(f"no samples for task {i} classes {sorted(subset)}")
        part = Dataset(x=base.x[mask], y=base.y[mask], class_count=base.class_count)
        train, test = _stratified_split(part)
        tasks.append(Task(train=train, test=test, class_subset=subset))
    return TaskStream(scenario="class_il", tasks=tasks, total_classes=base.class_count)


def rotate_image(img: Matrix, theta: float) -> Matrix:
    """Rotate counterclockwise about the image center.

    Each input pixel's mass is distributed bilinearly over the four output
    pixels around its rotated position, so total intensity is conserved
    except for mass rotated out of the frame (which is dropped, i.e. reads
    as zero). theta = 0 returns a bitwise copy.
    """
    h, w = img.shape
    if h < 2 or w < 2:
        raise ShapeError(f"image must be at least 2x2, got {h}x{w}")
    if theta == 0.0:
        return img.copy()
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    x_i = cols - cc
    y_i = cr - rr
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    x_d = cos_t * x_i - sin_t * y_i
    y_d = sin_t * x_i + cos_t * y_i
    r_d = cr - y_d
    c_d = cc + x_d
    r0 = np.floor(r_d).astype(np.intp)
    c0 = np.floor(c_d).astype(np.intp)
    fr = r_d - r0
    fc = c_d - c0
    out = np.zeros_like(img)
    for dr, dc, wgt in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        r, c = r0 + dr, c0 + dc
        valid = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        np.add.at(out, (r[valid], c[valid]), (wgt * img)[valid])
    return out


def _image_side(dim: int) -> int:
    side = int(round(np.sqrt(dim)))
    if side * side != dim:
        raise DomainError(f"feature dim {dim} is not a square image")
    return side


def _rotate_dataset(ds: Dataset, theta: float, side: int) -> Dataset:
    x = np.array([rotate_image(row.reshape(side, side), theta).reshape(-1)
                  for row in ds.x])
    return Dataset(x=x, y=ds.y.copy(), class_count=ds.class_count)


def rotated_stream(base: Dataset, t_count: int, rng: Rng,
                   angles=None) -> TaskStream:
    """Domain-shift stream: task i shows the whole base dataset rotated by
    one fixed angle drawn from [0, pi).

    The base is split 80/20 once; each task rotates both halves by its own
    angle, so labels and class structure repeat verbatim across tasks.
    ``angles`` overrides the random draws (tests force theta = 0 with it).
    """
    if t_count < 1:
        raise DomainError(f"need at least 1 task, got {t_count}")
    side = _image_side(base.dim)
    if angles is None:
        angles = [float(rng.uniform(0.0, np.pi)) for _ in range(t_count)]
    else:
        angles = [float(a) for a in angles]
        if len(angles) != t_count:
            raise DomainError(f"{len(angles)} angles for {t_count} tasks")
    train, test = _stratified_split(base)
    full = frozenset(range(base.class_count))
    tasks = [
        Task(train=_rotate_dataset(train, a, side),
             test=_rotate_dataset(test, a, side),
             class_subset=full)
        for a in angles
    ]
    return TaskStream(scenario="domain_il", tasks=tasks, total_classes=base.class_count)


def concat_datasets(parts: list[Dataset]) -> Dataset:
    """Union of datasets sharing a class space (joint-training input)."""
    if not parts:
        raise DomainError("cannot concatenate zero datasets")
    cc = parts[0].class_count
    if any(p.class_count != cc for p in parts):
        raise DomainError("datasets disagree on class count")
    return Dataset(
        x=np.vstack([p.x for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        class_count=cc,
    )


# ---------------------------------------------------------------------------
# file loaders

def _be32(blob: bytes, off: int, path) -> int:
    if off + 4 > len(blob):
        raise FormatError(f"truncated file at byte offset {off} in {path}")
    return struct.unpack_from(">I", blob, off)[0]


def load_idx(path_images, path_labels) -> Dataset:
    """Load an IDX image/label file pair (big-endian, magic-typed).

    Pixels are scaled to [0, 1]; labels must be digits 0-9 and the two
    files must agree on the sample count.
    """
    with open(path_images, "rb") as f:
        img_blob = f.read()
    magic = _be32(img_blob, 0, path_images)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"bad image magic 0x{magic:08x} at byte offset 0 in {path_images}"
        )
    n = _be32(img_blob, 4, path_images)
    rows = _be32(img_blob, 8, path_images)
    cols = _be32(img_blob, 12, path_images)
    need = 16 + n * rows * cols
    if len(img_blob) < need:
        raise FormatError(
            f"truncated image data at byte offset {len(img_blob)} in {path_images}"
            f" (expected {need} bytes)"
        )
    pixels = np.frombuffer(img_blob, dtype=np.uint8, count=n * rows * cols, offset=16)

    with open(path_labels, "rb") as f:
        lbl_blob = f.read()
    magic = _be32(lbl_blob, 0, path_labels)
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(
            f"bad label magic 0x{magic:08x} at byte offset 0 in {path_labels}"
        )
    n_lbl = _be32(lbl_blob, 4, path_labels)
    if n_lbl != n:
        raise FormatError(
            f"label count {n_lbl} != image count {n} at byte offset 4 in {path_labels}"
        )
    if len(lbl_blob) < 8 + n:
        raise FormatError(
            f"truncated label data at byte offset {len(lbl_blob)} in {path_labels}"
        )
    labels = np.frombuffer(lbl_blob, dtype=np.uint8, count=n, offset=8)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(
            f"label value {labels[bad[0]]} out of range at byte offset "
            f"{8 + int(bad[0])} in {path_labels}"
        )
    x = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(x=x, y=labels.astype(np.intp), class_count=10)


def load_csv_dataset(path) -> Dataset:
    """CSV with header ``label,f0,f1,...``; one sample per row."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("label"):
            raise FormatError(f"expected 'label,...' header in {path}, got {header!r}")
        raw = np.loadtxt(f, delimiter=",", ndmin=2)
    if raw.size == 0:
        raise FormatError(f"no data rows in {path}")
    y = raw[:, 0]
    if np.any(y != np.round(y)) or y.min() < 0:
        raise FormatError(f"non-integer or negative label in {path}")
    y = y.astype(np.intp)
    return Dataset(x=raw[:, 1:], y=y, class_count=int(y.max()) + 1)


def load_csv_pool(path, tag: str = "") -> AuxiliaryPool:
    """CSV of feature rows only (no label column), header ``f0,f1,...``."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header.startswith("label"):
            raise FormatError(f"auxiliary pool {path} must not carry labels")
        raw = np.loadtxt(f, delimiter=",", ndmin=2)
    if raw.size == 0:
        raise FormatError(f"no data rows in {path}")
    return AuxiliaryPool(x=raw, source_tag=tag or str(path))


# ---------------------------------------------------------------------------
# auxiliary sampling and plumbing

class AuxiliarySampler:
    """Without-replacement pool sampler: one shuffled pass per epoch,
    reshuffling whenever the pool is exhausted."""

    def __init__(self, pool: AuxiliaryPool, rng: Rng):
        if pool.n == 0:
            raise DomainError("auxiliary pool is empty")
        self.pool = pool
        self.rng = rng
        self._order = rng.permutation(pool.n)
        self._pos = 0

    def next_batch(self, n: int) -> Matrix:
        if n < 1:
            raise DomainError(f"batch size must be >= 1, got {n}")
        taken = []
        remaining = n
        while remaining > 0:
            avail = self._order.size - self._pos
            if avail == 0:
                self._order = self.rng.permutation(self.pool.n)
                self._pos = 0
                avail = self._order.size
            step = min(remaining, avail)
            taken.append(self._order[self._pos:self._pos + step])
            self._pos += step
            remaining -= step
        return self.pool.x[np.concatenate(taken)]


def sample_auxiliary(sampler: AuxiliarySampler, n: int) -> Matrix:
    """Draw n unlabeled rows from a stateful pool sampler."""
    return sampler.next_batch(n)


def match_dimension(x: Matrix, target_dim: int) -> Matrix:
    """Adapt pool features to a stream's dimension.

    Square images resize by nearest neighbor; anything else is truncated or
    zero-padded on the right.
    """
    d = x.shape[1]
    if d == target_dim:
        return x
    try:
        src = _image_side(d)
        dst = _image_side(target_dim)
    except DomainError:
        src = dst = 0
    if src and dst:
        scale = src / dst
        idx = np.minimum((np.arange(dst) * scale).astype(np.intp), src - 1)
        imgs = x.reshape(-1, src, src)
        return imgs[:, idx][:, :, idx].reshape(x.shape[0], target_dim)
    if d > target_dim:
        return x[:, :target_dim].copy()
    out = np.zeros((x.shape[0], target_dim))
    out[:, :d] = x
    return out


def dataset_digest(ds: Dataset) -> str:
    """Stable content hash for run manifests."""
    h = hashlib.sha256()
    h.update(struct.pack("<IIQ", ds.n, ds.dim, ds.class_count))
    h.update(np.ascontiguousarray(ds.x, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(ds.y, dtype="<i8").tobytes())
    return h.hexdigest()


def pool_digest(pool: AuxiliaryPool) -> str:
    h = hashlib.sha256()
    h.update(struct.pack("<II", pool.n, pool.dim))
    h.update(np.ascontiguousarray(pool.x, dtype="<f8").tobytes())
    return h.hexdigest()
