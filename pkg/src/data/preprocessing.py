"""
Binary-class dataset preparation: class filtering, seeded split, standardization and PCA fitted on the training split.
"""
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from sklearn.decomposition import PCA
from sklearn.preprocessing import StandardScaler

from src.data.idx_format import RawImages
from src.errors import DataError, InputError
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PreprocessingRecord:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray
    class_pair: Tuple[int, int]
    seed: int

    def transform(self, raw_features: np.ndarray) -> np.ndarray:
        standardized = (np.asarray(raw_features, dtype=float) - self.mean) / self.scale
        return standardized @ self.components

    def hash(self) -> str:
        digest = hashlib.sha256()
        for array in (self.mean, self.scale, self.components):
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        digest.update(f"{self.class_pair[0]},{self.class_pair[1]},{self.seed}".encode())
        return digest.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    record: PreprocessingRecord
    split: str

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise InputError(f"{self.features.shape[0]} feature rows for {self.labels.shape[0]} labels.")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise InputError("Dataset labels must be -1 or +1.")

    @property
    def size(self) -> int:
        return self.labels.shape[0]


def fit_preprocessing(train_raw: np.ndarray, pca_dim: int, class_pair: Tuple[int, int],
                      seed: int) -> PreprocessingRecord:
    """
    StandardScaler (unit scale where the deviation is 0) followed by PCA, both fitted on the training split. The
    principal axes keep sklearn's descending-variance order; each axis is then flipped so that its first nonzero
    coefficient is positive.
    """
    train_raw = np.asarray(train_raw, dtype=float)
    if train_raw.shape[0] < 2:
        raise InputError("At least two training points are needed to fit the preprocessing.")
    if not 1 <= pca_dim <= min(train_raw.shape):
        raise InputError(f"pca_dim must lie in 1..{min(train_raw.shape)}, got {pca_dim}.")
    scaler = StandardScaler().fit(train_raw)
    pca = PCA(n_components=pca_dim, svd_solver="full").fit(scaler.transform(train_raw))
    # standardized training data is centered, so the PCA offset is dropped from the record
    components = pca.components_.T.copy()
    for column in range(pca_dim):
        nonzero = np.flatnonzero(np.abs(components[:, column]) > 1e-12)
        if nonzero.size and components[nonzero[0], column] < 0:
            components[:, column] = -components[:, column]
    return PreprocessingRecord(mean=scaler.mean_.copy(), scale=scaler.scale_.copy(), components=components,
                               class_pair=tuple(class_pair), seed=seed)


def _interleave(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    common = min(first.size, second.size)
    head = np.column_stack([first[:common], second[:common]]).reshape(-1)
    return np.concatenate([head, first[common:], second[common:]])


def prepare(raw: RawImages, class_pair: Tuple[int, int] = (0, 3), n_train: int = 100, n_test: int = 20,
            pca_dim: int = 8, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """
    :param raw: parsed images and labels.
    :param class_pair: (positive class, negative class).
    :param n_train: training points.
    :param n_test: test points.
    :param pca_dim: reduced dimension.
    :param seed: shuffle seed.
    :return: train and test datasets sharing one preprocessing record fitted on the training split.

    Each class is shuffled on its own and the two are interleaved before splitting, so both splits are as balanced as
    the class counts allow.
    """
    positive, negative = class_pair
    if positive == negative:
        raise InputError("The class pair must name two different classes.")
    rng = np.random.default_rng(seed)
    pools = []
    for label in class_pair:
        members = np.flatnonzero(raw.labels == label)
        if members.size == 0:
            raise DataError(f"Class {label} has no samples.")
        pools.append(rng.permutation(members))
    available = pools[0].size + pools[1].size
    if available < n_train + n_test:
        raise InputError(f"Classes {class_pair} have {available} samples, {n_train + n_test} requested.")
    order = _interleave(*pools)
    train_index = rng.permutation(order[:n_train])
    test_index = rng.permutation(order[n_train:n_train + n_test])
    flat = raw.images.reshape(raw.images.shape[0], -1).astype(float)
    record = fit_preprocessing(flat[train_index], pca_dim, class_pair, seed)

    def build(index: np.ndarray, split: str) -> Dataset:
        labels = np.where(raw.labels[index] == positive, 1, -1)
        features = record.transform(flat[index]) if index.size else np.zeros((0, pca_dim))
        return Dataset(features=features, labels=labels, record=record, split=split)

    train, test = build(train_index, "train"), build(test_index, "test")
    for split in (train, test):
        # one-point test splits are exempt
        if (split is train or split.size > 1) and np.unique(split.labels).size < 2:
            raise DataError(f"The {split.split} split holds only one of the classes {class_pair}.")
    logger.info("Prepared %d train and %d test points (classes %s, pca %d, hash %s)", train.size, test.size,
                class_pair, pca_dim, record.hash())
    return train, test


class DatasetRepository:
    """
    Prepared splits are stored together in one .npz archive.
    """

    @classmethod
    def save(cls, train: Dataset, test: Dataset, path: Union[str, Path]) -> Path:
        record = train.record
        buffer = io.BytesIO()
        np.savez(buffer, train_features=train.features, train_labels=train.labels,
                 test_features=test.features, test_labels=test.labels, mean=record.mean, scale=record.scale,
                 components=record.components, class_pair=np.array(record.class_pair), seed=np.array(record.seed))
        return TaskRunner.write_atomically(path, buffer.getvalue())

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple[Dataset, Dataset]:
        with np.load(path) as archive:
            record = PreprocessingRecord(mean=archive["mean"], scale=archive["scale"],
                                         components=archive["components"],
                                         class_pair=tuple(int(value) for value in archive["class_pair"]),
                                         seed=int(archive["seed"]))
            train = Dataset(archive["train_features"], archive["train_labels"], record, "train")
            test = Dataset(archive["test_features"], archive["test_labels"], record, "test")
        return train, test
