"""Reader for the IDX container format used by the MNIST distribution.

Big-endian headers: magic, then one 32-bit count per dimension, then the
payload as unsigned bytes. Image files carry magic 0x00000803 (3-d) and
label files 0x00000801 (1-d).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .datasets import Dataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Base class for malformed dataset files."""


class BadMagicError(DataFormatError):
    """File does not start with the expected IDX magic number."""


class TruncatedFileError(DataFormatError):
    """File ends before the declared payload."""


class CountMismatchError(DataFormatError):
    """Image and label files disagree on the number of examples."""


def _read_header(data: bytes, n_dims: int, path: Path, expected_magic: int, kind: str) -> tuple[int, ...]:
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: too short to hold an IDX magic number")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise BadMagicError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x} for {kind} data"
        )
    header_len = 4 * (1 + n_dims)
    if len(data) < header_len:
        raise TruncatedFileError(f"{path}: too short for an IDX {kind} header")
    return struct.unpack(f">{n_dims}I", data[4:header_len])


def read_idx_images(path) -> np.ndarray:
    """Raw image bytes as a (count, rows, cols) uint8 array."""
    path = Path(path)
    data = path.read_bytes()
    count, rows, cols = _read_header(data, 3, path, IMAGE_MAGIC, "image")
    payload = data[16:]
    expected = count * rows * cols
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{path}: payload holds {len(payload)} bytes, header declares {expected}"
        )
    return np.frombuffer(payload[:expected], dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    (count,) = _read_header(data, 1, path, LABEL_MAGIC, "label")
    payload = data[8:]
    if len(payload) < count:
        raise TruncatedFileError(f"{path}: payload holds {len(payload)} bytes, header declares {count}")
    return np.frombuffer(payload[:count], dtype=np.uint8).copy()


def load_idx(images_path, labels_path, origin: str = "train", num_classes: int = 10) -> Dataset:
    """Paired image/label IDX files as a Dataset with pixels scaled into [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds "
            f"{labels.shape[0]} labels"
        )
    features = (images.astype(np.float32) / 255.0)[..., np.newaxis]
    return Dataset(
        features=features,
        labels=labels.astype(np.int64),
        poisoned=np.zeros(labels.shape[0], dtype=bool),
        origin=origin,
        num_classes=num_classes,
    )


def write_idx_images(path, images: np.ndarray) -> None:
    """Inverse of read_idx_images, for fixtures and synthetic exports."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())
