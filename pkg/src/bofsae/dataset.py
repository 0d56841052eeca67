"""Labeled grayscale character images: PGM ingest, resizing, splits, synthesis."""

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError, DecodeError, SplitError
from .rng import SplitMix64, generator

PGM_SUFFIX = ".pgm"


@dataclass(frozen=True, eq=False)
class LabeledImage:
    pixels: np.ndarray
    label: int
    source_id: str = ""

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ContractError(f"image must be a non-empty 2-D grid, got shape {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ContractError("image intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "label", int(self.label))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LabeledImage):
            return NotImplemented
        return (
            self.label == other.label
            and self.source_id == other.source_id
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    images: tuple
    class_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if len(set(self.class_names)) != len(self.class_names):
            raise ContractError("class names must be unique")
        for img in self.images:
            if not 0 <= img.label < self.num_classes:
                raise ContractError(
                    f"label {img.label} of {img.source_id!r} out of range for "
                    f"{self.num_classes} classes"
                )

    @property
    def num_classes(self):
        return len(self.class_names)

    def __len__(self):
        return len(self.images)

    def labels(self):
        return np.array([img.label for img in self.images], dtype=np.int64)

    def class_counts(self):
        return np.bincount(self.labels(), minlength=self.num_classes)


@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int = 15
    test_per_class: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ContractError("train_per_class and test_per_class must be >= 1")


# --------------------------------------------------------------------------
# PGM


def _pgm_header(data, name):
    """Parse a binary P5 header; return (width, height, maxval, payload offset)."""
    if data[:2] != b"P5":
        raise DecodeError(f"{name}: not a binary PGM (P5) file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise DecodeError(f"{name}: truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            token = data[start:pos]
            if not token.isdigit():
                raise DecodeError(f"{name}: malformed PGM header token {token!r}")
            tokens.append(int(token))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise DecodeError(f"{name}: missing whitespace after PGM header")
    width, height, maxval = tokens
    if width < 1 or height < 1:
        raise DecodeError(f"{name}: invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise DecodeError(f"{name}: unsupported PGM maxval {maxval} (need 255)")
    return width, height, maxval, pos + 1


def read_pgm(path):
    """Decode an 8-bit binary PGM file into a uint8 array of shape (height, width)."""
    path = Path(path)
    data = path.read_bytes()
    width, height, _, offset = _pgm_header(data, str(path))
    payload = data[offset:offset + width * height]
    if len(payload) != width * height:
        raise DecodeError(
            f"{path}: truncated PGM payload ({len(payload)} of {width * height} bytes)"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def pgm_bytes(pixels):
    px = np.asarray(pixels, dtype=np.float64)
    levels = np.clip(np.rint(px * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii")
    return header + levels.tobytes()


def write_pgm(path, pixels):
    Path(path).write_bytes(pgm_bytes(pixels))


def load_dataset(root_path):
    """Read ``root/<class>/<file>.pgm``; classes and files are taken in sorted order."""
    root = Path(root_path)
    if not root.is_dir():
        raise ConfigurationError(f"dataset directory not found: {root}")
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if not class_dirs:
        raise ConfigurationError(f"dataset directory {root} has no class subdirectories")
    images = []
    for label, cdir in enumerate(class_dirs):
        files = sorted(
            (p for p in cdir.iterdir() if p.is_file() and p.suffix.lower() == PGM_SUFFIX),
            key=lambda p: p.name,
        )
        if not files:
            raise DecodeError(f"class '{cdir.name}' has no images")
        for f in files:
            pixels = read_pgm(f) / 255.0
            images.append(LabeledImage(pixels, label, f"{cdir.name}/{f.name}"))
    return Dataset(images, [p.name for p in class_dirs])


def write_dataset(ds, root_path):
    """Write a dataset as a PGM directory tree readable by :func:`load_dataset`."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    counters = [0] * ds.num_classes
    for img in ds.images:
        cdir = root / ds.class_names[img.label]
        cdir.mkdir(exist_ok=True)
        name = img.source_id.rsplit("/", 1)[-1] if img.source_id else ""
        if not name.endswith(PGM_SUFFIX):
            name = f"{counters[img.label]:05d}{PGM_SUFFIX}"
        counters[img.label] += 1
        write_pgm(cdir / name, img.pixels)
    return root


# --------------------------------------------------------------------------
# Resizing and splitting


def _bilinear_taps(n_in, n_out):
    # Half-pixel centre alignment, source coordinate clamped to the grid.
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_pixels(pixels, size):
    px = np.asarray(pixels, dtype=np.float64)
    r0, r1, fr = _bilinear_taps(px.shape[0], size)
    c0, c1, fc = _bilinear_taps(px.shape[1], size)
    rows = px[r0] * (1.0 - fr)[:, None] + px[r1] * fr[:, None]
    out = rows[:, c0] * (1.0 - fc)[None, :] + rows[:, c1] * fc[None, :]
    return np.clip(out, 0.0, 1.0)


def resize_image(img, size):
    """Bilinear resize to ``size`` x ``size`` with edge clamping."""
    if size < 2:
        raise ContractError(f"target size must be >= 2, got {size}")
    if img.width == size and img.height == size:
        return img
    return LabeledImage(resize_pixels(img.pixels, size), img.label, img.source_id)


def resize_dataset(ds, size):
    return Dataset([resize_image(img, size) for img in ds.images], ds.class_names)


def make_split(ds, spec):
    """Seeded per-class shuffle; first ``train_per_class`` to train, next to test.

    Classes are visited in label order with a single SplitMix64 stream, each
    class's images in dataset order before shuffling.
    """
    need = spec.train_per_class + spec.test_per_class
    per_class = [[] for _ in range(ds.num_classes)]
    for img in ds.images:
        per_class[img.label].append(img)
    for label, members in enumerate(per_class):
        if len(members) < need:
            raise SplitError(
                f"class '{ds.class_names[label]}' has {len(members)} images, "
                f"split needs {need}"
            )
    rng = SplitMix64(spec.seed)
    train, test = [], []
    for members in per_class:
        order = rng.shuffle(list(range(len(members))))
        train.extend(members[i] for i in order[:spec.train_per_class])
        test.extend(members[i] for i in order[spec.train_per_class:need])
    return Dataset(train, ds.class_names), Dataset(test, ds.class_names)


# --------------------------------------------------------------------------
# Synthetic glyphs

_L, _R, _T, _B, _M = 0.2, 0.8, 0.2, 0.8, 0.5


def _arc(cx, cy, r, start_deg, stop_deg, pieces=24):
    t = np.radians(np.linspace(start_deg, stop_deg, pieces + 1))
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


# Glyph-space coordinates: x to the right, y downward, unit square.
STROKES = (
    np.array([[_L, _T], [_R, _T]]),
    np.array([[_L, _B], [_R, _B]]),
    np.array([[_L, _M], [_R, _M]]),
    np.array([[_L, _T], [_L, _B]]),
    np.array([[_R, _T], [_R, _B]]),
    np.array([[_M, _T], [_M, _B]]),
    np.array([[_L, _T], [_R, _B]]),
    np.array([[_R, _T], [_L, _B]]),
    _arc(_M, _M, 0.3, 180, 360),
    _arc(_M, _M, 0.3, 0, 180),
    _arc(_M, _M, 0.3, 90, 270),
    _arc(_M, _M, 0.3, -90, 90),
    _arc(_M, 0.35, 0.15, 0, 360),
    _arc(_M, 0.65, 0.15, 0, 360),
)


def _glyph_table(limit=36, min_difference=4):
    """Stroke subsets, pairwise differing in at least ``min_difference`` strokes."""
    candidates = [c for size in (3, 4) for c in itertools.combinations(range(len(STROKES)), size)]
    SplitMix64(0x61796C7067).shuffle(candidates)
    chosen = []
    for combo in candidates:
        s = set(combo)
        if all(len(s ^ set(other)) >= min_difference for other in chosen):
            chosen.append(combo)
            if len(chosen) == limit:
                break
    return tuple(chosen)


GLYPHS = _glyph_table()


@dataclass(frozen=True)
class SynthJitter:
    rotation_deg: float = 15.0
    scale: tuple = (0.85, 1.15)
    translate: float = 0.05
    noise_sigma: float = 0.05
    contrast: tuple = (0.7, 1.0)
    stroke_width: float = 0.1

    @classmethod
    def none(cls):
        return cls(rotation_deg=0.0, scale=(1.0, 1.0), translate=0.0,
                   noise_sigma=0.0, contrast=(1.0, 1.0))


def _segment_distance(px, py, a, b):
    ab = b - a
    denom = float(ab @ ab)
    t = ((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))


def render_glyph(class_index, side, angle=0.0, scale=1.0, shift=(0.0, 0.0), stroke_width=0.1):
    """Anti-aliased ink coverage in [0, 1] for one class's stroke pattern."""
    centres = (np.arange(side) + 0.5) / side
    u, v = np.meshgrid(centres, centres)
    # Map each output pixel back into glyph space (inverse similarity).
    du, dv = u - 0.5 - shift[0], v - 0.5 - shift[1]
    cos, sin = np.cos(-angle), np.sin(-angle)
    gx = 0.5 + (cos * du - sin * dv) / scale
    gy = 0.5 + (sin * du + cos * dv) / scale
    dist = np.full(u.shape, np.inf)
    for stroke in GLYPHS[class_index]:
        pts = STROKES[stroke]
        for a, b in zip(pts[:-1], pts[1:]):
            dist = np.minimum(dist, _segment_distance(gx, gy, a, b))
    # Distances are in glyph units; one output pixel spans scale/side of them.
    aa = 1.0 / (side * scale)
    return np.clip((stroke_width / 2 + aa / 2 - dist) / aa, 0.0, 1.0)


def synth_glyphs(num_classes, per_class, side, seed, jitter=None):
    """Procedural stroke-pattern dataset, quantised to 8-bit grey levels.

    Class ``k`` draws the fixed stroke combination ``GLYPHS[k]``; each sample
    gets a seeded rotation, scale, translation, contrast and noise draw.
    Source ids are ``<class>/<index>.pgm`` so the set round-trips through
    :func:`write_dataset` / :func:`load_dataset` unchanged.
    """
    if not 2 <= num_classes <= len(GLYPHS):
        raise ContractError(f"num_classes must be in [2, {len(GLYPHS)}], got {num_classes}")
    if per_class < 1:
        raise ContractError("per_class must be >= 1")
    if side < 32:
        raise ContractError("side must be >= 32")
    jitter = SynthJitter() if jitter is None else jitter
    rng = generator(seed)
    names = [f"c{k:02d}" for k in range(num_classes)]
    images = []
    for k in range(num_classes):
        for i in range(per_class):
            angle = np.radians(rng.uniform(-jitter.rotation_deg, jitter.rotation_deg))
            scale = rng.uniform(*jitter.scale)
            shift = rng.uniform(-jitter.translate, jitter.translate, size=2)
            contrast = rng.uniform(*jitter.contrast)
            noise = rng.normal(0.0, 1.0, size=(side, side)) * jitter.noise_sigma
            ink = render_glyph(k, side, angle, scale, shift, jitter.stroke_width)
            px = np.clip(0.5 + contrast * (ink - 0.5) + noise, 0.0, 1.0)
            px = np.rint(px * 255.0) / 255.0
            images.append(LabeledImage(px, k, f"{names[k]}/{i:05d}{PGM_SUFFIX}"))
    return Dataset(images, names)
