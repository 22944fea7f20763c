"""IDX image/label files and input encoding.

Standard IDX layout, big-endian: magic (2 zero bytes, dtype byte 0x08
for unsigned byte, dimension count byte), one uint32 per dimension,
then the raw payload. Images use magic 2051 (3 dims), labels 2049
(1 dim). Pixels come back scaled to [0, 1].
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import BadMagic, CountMismatch, DatasetError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CountMismatch(f"truncated {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def read_idx_images(path: str) -> np.ndarray:
    """Load an IDX image file as uint8 (n, rows, cols)."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc
    with fh:
        magic, = struct.unpack(">i", _read_exact(fh, 4, "magic"))
        if magic != IMAGE_MAGIC:
            raise BadMagic(f"{path}: magic {magic}, expected {IMAGE_MAGIC}")
        n, rows, cols = struct.unpack(">iii", _read_exact(fh, 12, "header"))
        if min(n, rows, cols) < 0:
            raise DatasetError(f"{path}: negative dimension in header")
        payload = _read_exact(fh, n * rows * cols, "image payload")
        if fh.read(1):
            raise CountMismatch(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    """Load an IDX label file as uint8 (n,)."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc
    with fh:
        magic, = struct.unpack(">i", _read_exact(fh, 4, "magic"))
        if magic != LABEL_MAGIC:
            raise BadMagic(f"{path}: magic {magic}, expected {LABEL_MAGIC}")
        n, = struct.unpack(">i", _read_exact(fh, 4, "header"))
        if n < 0:
            raise DatasetError(f"{path}: negative count in header")
        payload = _read_exact(fh, n, "label payload")
        if fh.read(1):
            raise CountMismatch(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8)


def write_idx_images(path: str, images: np.ndarray) -> None:
    arr = np.ascontiguousarray(images, dtype=np.uint8)
    if arr.ndim != 3:
        raise DatasetError("images must be (n, rows, cols)")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGE_MAGIC, *arr.shape))
        fh.write(arr.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    arr = np.ascontiguousarray(labels, dtype=np.uint8)
    if arr.ndim != 1:
        raise DatasetError("labels must be one-dimensional")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", LABEL_MAGIC, arr.shape[0]))
        fh.write(arr.tobytes())


def load_dataset(images_path: str, labels_path: str) -> tuple[np.ndarray, np.ndarray]:
    """Images scaled to [0, 1] float64 plus labels, lengths checked."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(
            f"{images.shape[0]} images vs {labels.shape[0]} labels")
    return images.astype(np.float64) / 255.0, labels
