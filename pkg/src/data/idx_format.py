import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from src.errors import ConsistencyError, FormatError, LengthError
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class RawImages:
    images: np.ndarray
    labels: np.ndarray

    @property
    def count(self) -> int:
        return self.labels.shape[0]


def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as file:
        return file.read()


def _check_magic(payload: bytes, expected: int, path) -> None:
    if len(payload) < 4:
        raise LengthError(f"{path} is shorter than its 4-byte magic.")
    magic, = struct.unpack(">I", payload[:4])
    if magic != expected:
        raise FormatError(f"{path} has magic 0x{magic:08x}, expected 0x{expected:08x}.")


def decode_images(payload: bytes, path="images") -> np.ndarray:
    _check_magic(payload, IMAGES_MAGIC, path)
    if len(payload) < 16:
        raise LengthError(f"{path} is shorter than its 16-byte header.")
    count, rows, columns = struct.unpack(">III", payload[4:16])
    expected = count * rows * columns
    if len(payload) - 16 < expected:
        raise LengthError(f"{path} holds {len(payload) - 16} pixel bytes, expected {expected}.")
    return np.frombuffer(payload[16:16 + expected], dtype=np.uint8).reshape(count, rows, columns)


def decode_labels(payload: bytes, path="labels") -> np.ndarray:
    _check_magic(payload, LABELS_MAGIC, path)
    if len(payload) < 8:
        raise LengthError(f"{path} is shorter than its 8-byte header.")
    count, = struct.unpack(">I", payload[4:8])
    if len(payload) - 8 < count:
        raise LengthError(f"{path} holds {len(payload) - 8} label bytes, expected {count}.")
    return np.frombuffer(payload[8:8 + count], dtype=np.uint8)


def parse_idx(images_path: Union[str, Path], labels_path: Union[str, Path]) -> RawImages:
    """
    Reads an IDX image file (magic 0x803, u32 count, rows, cols, u8 pixels) and its label file (magic 0x801, u32
    count, u8 labels). Files ending in .gz are decompressed on the fly.
    :param images_path: images file.
    :param labels_path: labels file.
    :return:
    """
    images = decode_images(_read_bytes(images_path), images_path)
    labels = decode_labels(_read_bytes(labels_path), labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images_path} has {images.shape[0]} images but {labels_path} has "
                               f"{labels.shape[0]} labels.")
    logger.info("Parsed %d images of %dx%d", images.shape[0], *images.shape[1:])
    return RawImages(images=images, labels=labels)


def encode_images(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, columns = images.shape
    return struct.pack(">IIII", IMAGES_MAGIC, count, rows, columns) + images.tobytes()


def encode_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    return struct.pack(">II", LABELS_MAGIC, labels.shape[0]) + labels.tobytes()


def write_idx(raw: RawImages, images_path: Union[str, Path], labels_path: Union[str, Path]):
    return (TaskRunner.write_atomically(images_path, encode_images(raw.images)),
            TaskRunner.write_atomically(labels_path, encode_labels(raw.labels)))
