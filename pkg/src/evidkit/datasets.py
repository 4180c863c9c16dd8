"""Synthetic multi-label datasets with held-out unknown classes, plus file I/O.

Geometry of the generator: each known class owns a prototype vector of
length separation * noise; prototypes are mutually orthogonal directions
obtained by orthonormalizing a seeded Gaussian matrix (QR), which needs
dim >= k_known. A sample's features are the mean of its label-class
prototypes plus isotropic noise drawn uniformly from the ball of radius
2 * noise, so every point lies within 2 sigma of its cluster center and
clusters whose centers are at least 4 sigma apart are linearly separable
by construction. At separation 6 the closest pair of distinct known
clusters (singles, pairwise co-occurrence mixtures, and the label-free
cluster at the origin) is 6 / sqrt(2) =~ 4.24 sigma apart.

Unknown classes are placed on the ray through the midpoint of a random
pair of known prototypes, scaled by unknown_scale; the default 2.0 puts
them at the sum of the pair, clear of every known cluster, and only the
validation split contains them.

Dataset files are line-oriented text. Header:

    #edlset v1 D=<d> K=<k> classes=<c1,c2,...>

where K is the number of known classes and the class list is known
classes first, unknowns after. Records are tab-separated: id,
comma-separated features (repr precision, so round trips are bit-exact),
comma-separated label indices (empty allowed), unknown flag 0/1.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .base_rates import CIWTable
from .errors import ConfigError, DataFormatError

DATASET_MAGIC = "#edlset"
DATASET_VERSION = "v1"
TRAIN_FILENAME = "train.edlset"
VAL_FILENAME = "val.edlset"

# hard cap on the noise norm, in units of the noise scale
NOISE_RADIUS = 2.0

_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class Sample:
    id: str
    features: tuple[float, ...]
    labels: tuple[int, ...]
    is_unknown: bool = False

    def __post_init__(self):
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if any(not math.isfinite(v) for v in self.features):
            raise ValueError(f"sample {self.id!r}: non-finite feature")
        if list(self.labels) != sorted(set(self.labels)):
            raise ValueError(f"sample {self.id!r}: labels must be sorted and unique")
        if any(l < 0 for l in self.labels):
            raise ValueError(f"sample {self.id!r}: negative label index")


@dataclass(frozen=True)
class DatasetSplit:
    """A full dataset: train and validation samples plus the class lists."""

    train: tuple[Sample, ...]
    validation: tuple[Sample, ...]
    known_classes: tuple[str, ...]
    unknown_classes: tuple[str, ...]
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for name in self.classes:
            if not _NAME_RE.match(name):
                raise ValueError(f"class name {name!r} is not file-format safe")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("known and unknown class lists must be disjoint")
        k_known, k_total = self.k_known, len(self.classes)
        for where, samples in (("train", self.train), ("validation", self.validation)):
            for s in samples:
                if len(s.features) != self.dim:
                    raise ValueError(f"{where} sample {s.id!r}: expected {self.dim} features")
                if any(l >= k_total for l in s.labels):
                    raise ValueError(f"{where} sample {s.id!r}: label index out of range")
                has_unknown = any(l >= k_known for l in s.labels)
                if s.is_unknown != has_unknown:
                    raise ValueError(
                        f"{where} sample {s.id!r}: unknown flag does not match labels"
                    )
        if any(s.is_unknown for s in self.train):
            raise ValueError("train split must not contain unknown samples")

    @property
    def classes(self) -> tuple[str, ...]:
        return self.known_classes + self.unknown_classes

    @property
    def k_known(self) -> int:
        return len(self.known_classes)


@dataclass(frozen=True)
class GenConfig:
    k_known: int = 6
    k_unknown: int = 2
    dim: int = 8
    n_train: int = 2000
    n_val: int = 600
    separation: float = 6.0
    cooccurrence: float = 0.2
    noise: float = 1.0
    normal_rate: float = 0.25
    unknown_rate: float = 0.25
    unknown_scale: float = 2.0
    seed: int = 7

    def __post_init__(self):
        if self.k_unknown < 0:
            raise ConfigError(f"k_unknown must be >= 0, got {self.k_unknown}")
        if self.k_unknown > 0 and self.k_unknown >= self.k_known + self.k_unknown:
            raise ConfigError(
                f"k_unknown={self.k_unknown} must be less than the total class count "
                f"{self.k_known + self.k_unknown} (at least one class must stay known)"
            )
        if self.k_known < 1:
            raise ConfigError(f"k_known must be >= 1, got {self.k_known}")
        if self.k_unknown > 0 and self.k_known < 2:
            raise ConfigError("unknown prototypes need at least 2 known classes to pair")
        n_pairs = self.k_known * (self.k_known - 1) // 2
        if self.k_unknown > n_pairs:
            raise ConfigError(
                f"k_unknown={self.k_unknown} exceeds the {n_pairs} distinct known-class pairs"
            )
        if self.dim < self.k_known:
            raise ConfigError(
                f"dim must be >= k_known ({self.k_known}) so prototypes can be orthogonal"
            )
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigError("samples per split must be >= 1")
        if not (self.separation > 0 and math.isfinite(self.separation)):
            raise ConfigError(f"separation must be > 0, got {self.separation}")
        if not (self.noise >= 0 and math.isfinite(self.noise)):
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if not (self.unknown_scale > 0 and math.isfinite(self.unknown_scale)):
            raise ConfigError(f"unknown_scale must be > 0, got {self.unknown_scale}")
        for field_name in ("cooccurrence", "normal_rate", "unknown_rate"):
            v = getattr(self, field_name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{field_name} must be in [0, 1], got {v}")


def _ball_noise(rng: np.random.Generator, dim: int, scale: float) -> np.ndarray:
    """Isotropic noise, uniform in the ball of radius NOISE_RADIUS * scale."""
    direction = rng.standard_normal(dim)
    norm = float(np.linalg.norm(direction))
    while norm == 0.0:
        direction = rng.standard_normal(dim)
        norm = float(np.linalg.norm(direction))
    radius = NOISE_RADIUS * scale * rng.random() ** (1.0 / dim)
    return (radius / norm) * direction


def _known_prototypes(rng: np.random.Generator, cfg: GenConfig) -> np.ndarray:
    gaussian = rng.standard_normal((cfg.dim, cfg.k_known))
    q, _ = np.linalg.qr(gaussian)
    return (cfg.separation * cfg.noise) * q.T


def _unknown_prototypes(rng, cfg, known_protos):
    pairs = list(combinations(range(cfg.k_known), 2))
    picked = rng.choice(len(pairs), size=cfg.k_unknown, replace=False)
    protos = []
    for p in picked:
        a, b = pairs[int(p)]
        protos.append(cfg.unknown_scale * 0.5 * (known_protos[a] + known_protos[b]))
    return np.array(protos) if protos else np.zeros((0, cfg.dim))


def _draw_known_labels(rng, cfg) -> tuple[int, ...]:
    k = int(rng.integers(cfg.k_known))
    if cfg.k_known > 1 and rng.random() < cfg.cooccurrence:
        j = int(rng.integers(cfg.k_known - 1))
        if j >= k:
            j += 1
        return tuple(sorted((k, j)))
    return (k,)


def _make_sample(sample_id, labels, is_unknown, center, rng, cfg) -> Sample:
    features = center + _ball_noise(rng, cfg.dim, cfg.noise)
    return Sample(
        id=sample_id,
        features=tuple(float(v) for v in features),
        labels=labels,
        is_unknown=is_unknown,
    )


def generate_dataset(cfg: GenConfig) -> DatasetSplit:
    """Deterministic synthetic dataset; same config -> identical samples."""
    rng = np.random.default_rng(cfg.seed)
    known_protos = _known_prototypes(rng, cfg)
    unknown_protos = _unknown_prototypes(rng, cfg, known_protos)
    origin = np.zeros(cfg.dim)

    train = []
    for i in range(cfg.n_train):
        if rng.random() < cfg.normal_rate:
            train.append(_make_sample(f"tr-{i:05d}", (), False, origin, rng, cfg))
        else:
            labels = _draw_known_labels(rng, cfg)
            center = known_protos[list(labels)].mean(axis=0)
            train.append(_make_sample(f"tr-{i:05d}", labels, False, center, rng, cfg))

    validation = []
    for i in range(cfg.n_val):
        sample_id = f"va-{i:05d}"
        if cfg.k_unknown > 0 and rng.random() < cfg.unknown_rate:
            m = int(rng.integers(cfg.k_unknown))
            validation.append(
                _make_sample(sample_id, (cfg.k_known + m,), True, unknown_protos[m], rng, cfg)
            )
        elif rng.random() < cfg.normal_rate:
            validation.append(_make_sample(sample_id, (), False, origin, rng, cfg))
        else:
            labels = _draw_known_labels(rng, cfg)
            center = known_protos[list(labels)].mean(axis=0)
            validation.append(_make_sample(sample_id, labels, False, center, rng, cfg))

    known_names = tuple(f"known_{i + 1:02d}" for i in range(cfg.k_known))
    unknown_names = tuple(f"unknown_{i + 1:02d}" for i in range(cfg.k_unknown))
    return DatasetSplit(
        train=tuple(train),
        validation=tuple(validation),
        known_classes=known_names,
        unknown_classes=unknown_names,
        dim=cfg.dim,
    )


def _format_record(sample: Sample) -> str:
    features = ",".join(repr(v) for v in sample.features)
    labels = ",".join(str(l) for l in sample.labels)
    flag = "1" if sample.is_unknown else "0"
    return f"{sample.id}\t{features}\t{labels}\t{flag}"


def _write_split_file(path: Path, samples, split: DatasetSplit) -> None:
    header = (
        f"{DATASET_MAGIC} {DATASET_VERSION} D={split.dim} K={split.k_known} "
        f"classes={','.join(split.classes)}"
    )
    lines = [header] + [_format_record(s) for s in samples]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def save_dataset(split: DatasetSplit, path) -> None:
    """Write a dataset directory containing train.edlset and val.edlset."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    _write_split_file(directory / TRAIN_FILENAME, split.train, split)
    _write_split_file(directory / VAL_FILENAME, split.validation, split)


_HEADER_RE = re.compile(
    rf"^{DATASET_MAGIC} (?P<version>\S+) D=(?P<dim>\d+) K=(?P<k>\d+) classes=(?P<classes>\S+)$"
)


def _parse_header(line: str, path):
    m = _HEADER_RE.match(line)
    if not m:
        raise DataFormatError("malformed dataset header", path=path, line=1)
    if m.group("version") != DATASET_VERSION:
        raise DataFormatError(
            f"unsupported dataset version {m.group('version')!r} "
            f"(expected {DATASET_VERSION})",
            path=path, line=1,
        )
    dim = int(m.group("dim"))
    k_known = int(m.group("k"))
    classes = tuple(m.group("classes").split(","))
    if dim < 1:
        raise DataFormatError("D must be >= 1", path=path, line=1)
    if any(not _NAME_RE.match(c) for c in classes):
        raise DataFormatError("empty or malformed class name", path=path, line=1)
    if len(set(classes)) != len(classes):
        raise DataFormatError("duplicate class name", path=path, line=1)
    if k_known > len(classes):
        raise DataFormatError("K exceeds the number of classes", path=path, line=1)
    return dim, k_known, classes


def _parse_record(line: str, lineno: int, dim: int, k_known: int, k_total: int, path) -> Sample:
    fields = line.split("\t")
    if len(fields) != 4:
        raise DataFormatError(
            f"expected 4 tab-separated fields, got {len(fields)}", path=path, line=lineno
        )
    sample_id, feat_field, label_field, flag_field = fields
    if not sample_id:
        raise DataFormatError("empty sample id", path=path, line=lineno)
    try:
        features = tuple(float(v) for v in feat_field.split(","))
    except ValueError as exc:
        raise DataFormatError(f"bad feature value: {exc}", path=path, line=lineno) from exc
    if len(features) != dim:
        raise DataFormatError(
            f"expected {dim} features, got {len(features)}", path=path, line=lineno
        )
    if label_field:
        try:
            labels = tuple(int(v) for v in label_field.split(","))
        except ValueError as exc:
            raise DataFormatError(f"bad label index: {exc}", path=path, line=lineno) from exc
    else:
        labels = ()
    if len(set(labels)) != len(labels):
        raise DataFormatError("duplicate label index", path=path, line=lineno)
    labels = tuple(sorted(labels))
    if labels and (labels[0] < 0 or labels[-1] >= k_total):
        raise DataFormatError("label index out of range", path=path, line=lineno)
    if flag_field not in ("0", "1"):
        raise DataFormatError(
            f"unknown flag must be 0 or 1, got {flag_field!r}", path=path, line=lineno
        )
    is_unknown = flag_field == "1"
    if is_unknown != any(l >= k_known for l in labels):
        raise DataFormatError("unknown flag does not match labels", path=path, line=lineno)
    return Sample(id=sample_id, features=features, labels=labels, is_unknown=is_unknown)


def _load_split_file(path: Path, forbid_unknown: bool):
    if not path.is_file():
        raise DataFormatError("missing dataset file", path=path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty dataset file", path=path, line=1)
    dim, k_known, classes = _parse_header(lines[0], path)
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        sample = _parse_record(line, lineno, dim, k_known, len(classes), path)
        if forbid_unknown and sample.is_unknown:
            raise DataFormatError(
                "train split must not contain unknown samples", path=path, line=lineno
            )
        samples.append(sample)
    return dim, k_known, classes, tuple(samples)


def load_dataset(path) -> DatasetSplit:
    """Read a dataset directory written by save_dataset."""
    directory = Path(path)
    train_meta = _load_split_file(directory / TRAIN_FILENAME, forbid_unknown=True)
    val_meta = _load_split_file(directory / VAL_FILENAME, forbid_unknown=False)
    if train_meta[:3] != val_meta[:3]:
        raise DataFormatError(
            "train and validation headers disagree", path=directory / VAL_FILENAME, line=1
        )
    dim, k_known, classes = train_meta[:3]
    return DatasetSplit(
        train=train_meta[3],
        validation=val_meta[3],
        known_classes=classes[:k_known],
        unknown_classes=classes[k_known:],
        dim=dim,
    )


def load_ciw_config(path) -> CIWTable:
    """Parse a class-importance-weight file: one `name<TAB>weight` per line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise ConfigError(f"{path}: line {lineno}: expected `class_name<TAB>weight`")
        try:
            weight = float(fields[1])
        except ValueError:
            raise ConfigError(
                f"{path}: line {lineno}: non-numeric weight {fields[1]!r}"
            ) from None
        pairs.append((fields[0], weight))
    try:
        return CIWTable.from_pairs(pairs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_ciw_config(table: CIWTable, path) -> None:
    lines = [f"{name}\t{repr(weight)}" for name, weight in table.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def random_ciw_table(class_names, seed: int, low: float = 0.1, high: float = 1.0) -> CIWTable:
    """Seeded uniform weights in [low, high], one per class name."""
    if not (0 <= low <= high):
        raise ConfigError(f"need 0 <= low <= high, got low={low}, high={high}")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(low, high, size=len(tuple(class_names)))
    return CIWTable.from_pairs(zip(class_names, (float(w) for w in weights)))


def samples_to_arrays(samples, k_known: int, dim: int):
    """Stack samples into (ids, features (N,D), known multi-hot (N,K), unknown flags)."""
    n = len(samples)
    ids = [s.id for s in samples]
    x = np.zeros((n, dim), dtype=np.float64)
    y = np.zeros((n, k_known), dtype=np.float64)
    flags = np.zeros(n, dtype=bool)
    for i, s in enumerate(samples):
        if len(s.features) != dim:
            raise ValueError(f"sample {s.id!r}: expected {dim} features")
        x[i] = s.features
        for l in s.labels:
            if l < k_known:
                y[i, l] = 1.0
        flags[i] = s.is_unknown
    return ids, x, y, flags


def load_annotation_csv(path, features_by_id) -> tuple[tuple[Sample, ...], tuple[str, ...]]:
    """Adapter for an annotation CSV: id column then per-class binary columns.

    Feature vectors come from features_by_id (a mapping id -> sequence of
    reals), since this package does not decode images. Returns the samples
    and the class names from the header. All rows are known-class samples.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise DataFormatError(
            "annotation CSV needs a header with an id column and class columns",
            path=path, line=1,
        )
    class_names = tuple(rows[0][1:])
    if len(set(class_names)) != len(class_names):
        raise DataFormatError("duplicate class column", path=path, line=1)
    samples = []
    dim = None
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(class_names) + 1:
            raise DataFormatError(
                f"expected {len(class_names) + 1} columns, got {len(row)}",
                path=path, line=lineno,
            )
        sample_id = row[0]
        if sample_id not in features_by_id:
            raise DataFormatError(
                f"no feature vector supplied for id {sample_id!r}", path=path, line=lineno
            )
        labels = []
        for k, cell in enumerate(row[1:]):
            if cell not in ("0", "1"):
                raise DataFormatError(
                    f"class column value must be 0 or 1, got {cell!r}", path=path, line=lineno
                )
            if cell == "1":
                labels.append(k)
        features = tuple(float(v) for v in features_by_id[sample_id])
        if dim is None:
            dim = len(features)
        elif len(features) != dim:
            raise DataFormatError(
                f"feature vector for {sample_id!r} has length {len(features)}, expected {dim}",
                path=path, line=lineno,
            )
        samples.append(Sample(id=sample_id, features=features, labels=tuple(labels)))
    return tuple(samples), class_names
