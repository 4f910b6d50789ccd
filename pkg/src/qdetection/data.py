"""Synthetic datasets and the CSV / QDS1 file formats.

QDS1 layout (little-endian)::

    b"QDS1" | u32 n | u32 d | u32 classes | u8 has_flags
    n*d f32 features (row-major) | n u16 labels | [n u8 flags]

CSV layout: a header row, the feature columns, ``label``, then an optional
``poison_flag`` column.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import PoisonedDataset

__all__ = ["DataError", "SyntheticSpec", "synth", "synth_split", "ingest", "export",
           "QDS1_MAGIC"]

QDS1_MAGIC = b"QDS1"
_HEADER = struct.Struct("<4sIIIB")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class clusters around centres drawn in ``[0.25, 0.75]^d``."""

    n: int = 600
    d: int = 16
    classes: int = 3
    spread: float = 0.05
    seed: int = 0
    test_n: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.classes < 2 or self.test_n < 0:
            raise ValueError("need n >= 1, d >= 1, classes >= 2 and test_n >= 0")
        if self.spread < 0:
            raise ValueError("spread must be non-negative")


def _draw(spec: SyntheticSpec, n: int, stream: int, centers: np.ndarray) -> PoisonedDataset:
    rng = np.random.default_rng([spec.seed, stream])
    labels = rng.permutation(np.arange(n) % spec.classes)
    X = centers[labels] + spec.spread * rng.standard_normal((n, spec.d))
    return PoisonedDataset(np.clip(X, 0.0, 1.0), labels,
                           meta={"n_classes": spec.classes, "source": "synthetic"})


def synth_split(spec: SyntheticSpec) -> tuple[PoisonedDataset, PoisonedDataset | None]:
    """Training set and (when ``test_n > 0``) a test set sharing the same centres."""
    centers = np.random.default_rng([spec.seed, 0]).uniform(0.25, 0.75, (spec.classes, spec.d))
    train = _draw(spec, spec.n, 1, centers)
    test = _draw(spec, spec.test_n, 2, centers) if spec.test_n else None
    return train, test


def synth(spec: SyntheticSpec) -> PoisonedDataset:
    return synth_split(spec)[0]


def _dense_labels(raw: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, dense = np.unique(raw, return_inverse=True)
    return dense.astype(np.int64), len(uniq)


def _check_features(X: np.ndarray, locate) -> None:
    """``locate(row, col)`` renders the position of the first bad value."""
    bad = ~np.isfinite(X) | (X < 0.0) | (X > 1.0)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(f"{locate(int(row), int(col))}: feature value {float(X[row, col])!r} "
                        "is outside [0, 1]")


def _read_csv(path: Path) -> PoisonedDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if "label" not in header:
        raise DataError(f"{path}: line 1: header has no 'label' column")
    li = header.index("label")
    has_flags = "poison_flag" in header
    expected = li + 1 + int(has_flags)
    if len(header) != expected or (has_flags and header[li + 1] != "poison_flag"):
        raise DataError(f"{path}: line 1: expected feature columns, 'label', "
                        "then optional 'poison_flag'")
    feats, labels, flags = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != expected:
            raise DataError(f"{path}: line {lineno}: expected {expected} fields, got {len(row)}")
        try:
            feats.append([float(c) for c in row[:li]])
            if has_flags:
                flag = int(row[li + 1])
                if flag not in (0, 1):
                    raise ValueError("poison_flag must be 0 or 1")
                flags.append(bool(flag))
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
        labels.append(row[li].strip())
    if not labels:
        raise DataError(f"{path}: no data rows")
    X = np.array(feats, dtype=np.float64).reshape(len(labels), li)
    lines = [n for n, row in enumerate(rows[1:], start=2)
             if row and any(c.strip() for c in row)]
    _check_features(X, lambda r, c: f"{path}: line {lines[r]}, column {header[c]!r}")
    raw = np.array(labels)
    try:
        raw = raw.astype(np.int64)
    except ValueError:
        pass
    y, classes = _dense_labels(raw)
    return PoisonedDataset(X, y, np.array(flags, dtype=bool) if has_flags else None,
                           meta={"n_classes": classes, "source": str(path)})


def _read_qds1(path: Path) -> PoisonedDataset:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise DataError(f"{path}: offset 0: file too short for a QDS1 header")
    magic, n, d, classes, has_flags = _HEADER.unpack_from(buf, 0)
    if magic != QDS1_MAGIC:
        raise DataError(f"{path}: offset 0: bad magic {magic!r}, expected {QDS1_MAGIC!r}")
    if has_flags not in (0, 1):
        raise DataError(f"{path}: offset 16: has_flags must be 0 or 1, got {has_flags}")
    off = _HEADER.size
    need = off + 4 * n * d + 2 * n + (n if has_flags else 0)
    if len(buf) != need:
        raise DataError(f"{path}: offset {len(buf)}: expected {need} bytes for n={n}, d={d}")
    X = np.frombuffer(buf, "<f4", n * d, off).reshape(n, d).astype(np.float64)
    off += 4 * n * d
    labels = np.frombuffer(buf, "<u2", n, off).astype(np.int64)
    off += 2 * n
    flags = np.frombuffer(buf, "u1", n, off).astype(bool) if has_flags else None
    if n and labels.max() >= classes:
        bad = int(np.argmax(labels >= classes))
        raise DataError(f"{path}: offset {_HEADER.size + 4 * n * d + 2 * bad}: label "
                        f"{labels[bad]} not below class count {classes}")
    _check_features(X, lambda r, c: f"{path}: offset {_HEADER.size + 4 * (r * d + c)}")
    if n and not np.array_equal(np.unique(labels), np.arange(classes)):
        labels, classes = _dense_labels(labels)
    return PoisonedDataset(X, labels, flags, meta={"n_classes": classes, "source": str(path)})


def ingest(path, fmt: str | None = None) -> PoisonedDataset:
    """Read a dataset; labels are re-indexed to ``0..classes-1``.

    Original labels of flagged samples are unknown on disk and are set to the
    stored labels.
    """
    path = Path(path)
    fmt = fmt or ("qds1" if path.suffix.lower() in (".qds1", ".qds", ".bin") else "csv")
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    if fmt == "csv":
        d = _read_csv(path)
    elif fmt == "qds1":
        d = _read_qds1(path)
    else:
        raise DataError(f"unknown format {fmt!r}; expected 'csv' or 'qds1'")
    d.original_labels = d.labels.copy()
    return d


def _qds1_bytes(d: PoisonedDataset, with_flags: bool) -> bytes:
    if d.labels.size and d.labels.max() > 0xFFFF:
        raise DataError("QDS1 stores labels as u16")
    out = io.BytesIO()
    out.write(_HEADER.pack(QDS1_MAGIC, len(d), d.n_features, d.n_classes, int(with_flags)))
    out.write(d.features.astype("<f4").tobytes())
    out.write(d.labels.astype("<u2").tobytes())
    if with_flags:
        out.write(d.flags.astype("u1").tobytes())
    return out.getvalue()


def export(d: PoisonedDataset, path, fmt: str = "csv", with_flags: bool = True) -> Path:
    path = Path(path)
    if fmt == "qds1":
        path.write_bytes(_qds1_bytes(d, with_flags))
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{j}" for j in range(d.n_features)] + ["label"]
                       + (["poison_flag"] if with_flags else []))
            for i in range(len(d)):
                row = [repr(float(v)) for v in d.features[i]] + [int(d.labels[i])]
                w.writerow(row + ([int(d.flags[i])] if with_flags else []))
    else:
        raise DataError(f"unknown format {fmt!r}; expected 'csv' or 'qds1'")
    return path
