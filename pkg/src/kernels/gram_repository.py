import hashlib
import json
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.errors import FormatError, InputError
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)

PSD_RELATIVE_TOLERANCE = 1e-8


class Estimator(str, Enum):
    EXACT = "exact"
    SHADOWS = "shadows"
    SHOT_NOISY = "shot-noisy"


def dataset_hash(dataset) -> str:
    data = np.ascontiguousarray(np.atleast_2d(np.asarray(dataset, dtype=np.float64)))
    digest = hashlib.sha256(str(data.shape).encode())
    digest.update(data.tobytes())
    return digest.hexdigest()[:16]


def spec_hash(description) -> str:
    canonical = json.dumps(description, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """
    N x N kernel matrix with provenance. Exact Grams must be symmetric; sampled ones are exempt from the PSD check.
    """
    values: np.ndarray
    kernel_hash: str = ""
    dataset_hash: str = ""
    estimator: Estimator = Estimator.EXACT
    seed: Optional[int] = None
    clipped: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InputError(f"A Gram matrix must be square, got shape {values.shape}.")
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if self.estimator == Estimator.EXACT:
            finite = values[np.isfinite(values)]
            scale = max(1.0, float(np.max(np.abs(finite)))) if finite.size else 1.0
            asymmetry = np.nanmax(np.abs(values - values.T)) if values.size else 0.0
            if asymmetry > 1e-12 * scale:
                raise InputError(f"Exact Gram matrix is not symmetric (max asymmetry {asymmetry:.3g}).")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh((self.values + self.values.T) / 2)

    def is_psd(self, relative_tolerance: float = PSD_RELATIVE_TOLERANCE) -> bool:
        eigenvalues = self.eigenvalues()
        return bool(eigenvalues[0] >= -relative_tolerance * max(eigenvalues[-1], 0.0))

    def clip_to_psd(self) -> "GramMatrix":
        """
        Symmetrizes and sets negative eigenvalues to zero.
        """
        symmetric = (self.values + self.values.T) / 2
        eigenvalues, vectors = linalg.eigh(symmetric)
        repaired = (vectors * np.clip(eigenvalues, 0.0, None)) @ vectors.T
        return replace(self, values=(repaired + repaired.T) / 2, clipped=True)

    def submatrix(self, rows: Sequence[int], columns: Optional[Sequence[int]] = None) -> np.ndarray:
        columns = rows if columns is None else columns
        return self.values[np.ix_(rows, columns)]

    def header(self) -> str:
        seed = "" if self.seed is None else self.seed
        return f"# kernel={self.kernel_hash} estimator={self.estimator.value} seed={seed}"


def gram(dataset,
         kernel: Callable,
         pairs: Optional[Sequence[Tuple[int, int]]] = None,
         kernel_hash: str = "",
         estimator: Estimator = Estimator.EXACT,
         seed: Optional[int] = None) -> GramMatrix:
    """
    Pairwise kernel evaluations over a dataset. Evaluators with a `matrix` method are evaluated feature-first;
    other callables pair by pair. With `pairs`, only those entries (and their mirrors) are filled, the rest are NaN.
    :param dataset: sequence of input vectors.
    :param kernel: evaluator k(x, x').
    :param pairs: optional subset of (i, j) index pairs.
    :return:
    """
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    if data.shape[0] == 0:
        raise InputError("The dataset is empty.")
    size = data.shape[0]
    if pairs is None and hasattr(kernel, "matrix"):
        values = np.asarray(kernel.matrix(data), dtype=float)
        values = (values + values.T) / 2
    else:
        values = np.full((size, size), np.nan)
        index_pairs = pairs if pairs is not None else [(i, j) for i in range(size) for j in range(i, size)]
        for i, j in index_pairs:
            if not (0 <= i < size and 0 <= j < size):
                raise InputError(f"Pair ({i}, {j}) is outside the dataset.")
            values[i, j] = values[j, i] = float(kernel(data[i], data[j]))
    if not kernel_hash and getattr(kernel, "spec", None) is not None:
        kernel_hash = spec_hash(kernel.spec.to_dict())
    elif not kernel_hash and hasattr(kernel, "description"):
        kernel_hash = spec_hash(kernel.description())
    logger.debug("Built %dx%d %s Gram matrix", size, size, Estimator(estimator).value)
    return GramMatrix(values, kernel_hash=kernel_hash, dataset_hash=dataset_hash(data),
                      estimator=estimator, seed=seed)


def center_gram(K: GramMatrix) -> GramMatrix:
    """
    K_c = K - (1/N) 1K - (1/N) K1 + (1/N^2) 1K1.
    """
    values = K.values
    row_means = values.mean(axis=1, keepdims=True)
    column_means = values.mean(axis=0, keepdims=True)
    centered = values - row_means - column_means + values.mean()
    return replace(K, values=(centered + centered.T) / 2)


class GramMatrixRepository:
    """
    Reads and writes Gram matrices as CSV (provenance header, 17 significant digits) and JSON.
    """

    @classmethod
    def to_csv(cls, K: GramMatrix) -> str:
        lines = [K.header()]
        lines.extend(",".join(repr(float(value)) for value in row) for row in K.values)
        return "\n".join(lines) + "\n"

    @classmethod
    def save_csv(cls, K: GramMatrix, path: Union[str, Path]) -> Path:
        return TaskRunner.write_atomically(path, cls.to_csv(K))

    @classmethod
    def load_csv(cls, path: Union[str, Path]) -> GramMatrix:
        """
        :param path: CSV written by save_csv.
        :return:
        """
        with open(path) as file:
            lines = [line.strip() for line in file if line.strip()]
        if not lines or not lines[0].startswith("#"):
            raise FormatError(f"{path} does not start with a '# kernel=... estimator=... seed=...' header.")
        fields = dict(token.split("=", 1) for token in lines[0][1:].split() if "=" in token)
        try:
            values = np.array([[float(entry) for entry in line.split(",")] for line in lines[1:]])
        except ValueError as error:
            raise FormatError(f"{path} contains a non-numeric entry: {error}") from error
        seed = fields.get("seed", "")
        return GramMatrix(values.reshape(len(lines) - 1, -1) if len(lines) > 1 else np.zeros((0, 0)),
                          kernel_hash=fields.get("kernel", ""),
                          estimator=Estimator(fields.get("estimator", Estimator.EXACT.value)),
                          seed=int(seed) if seed not in ("", "None") else None)

    @classmethod
    def to_json(cls, K: GramMatrix) -> str:
        return json.dumps({"kernel_hash": K.kernel_hash,
                           "dataset_hash": K.dataset_hash,
                           "estimator": K.estimator.value,
                           "seed": K.seed,
                           "clipped": K.clipped,
                           "values": K.values.tolist()}, indent=2)

    @classmethod
    def save_json(cls, K: GramMatrix, path: Union[str, Path]) -> Path:
        return TaskRunner.write_atomically(path, cls.to_json(K))

    @classmethod
    def from_json(cls, text: str) -> GramMatrix:
        data = json.loads(text)
        return GramMatrix(np.array(data["values"], dtype=float),
                          kernel_hash=data.get("kernel_hash", ""),
                          dataset_hash=data.get("dataset_hash", ""),
                          estimator=Estimator(data.get("estimator", Estimator.EXACT.value)),
                          seed=data.get("seed"),
                          clipped=bool(data.get("clipped", False)))
