import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import yaml

from src.errors import InputError
from src.kernels.gram_repository import spec_hash
from src.quantum_utils.pauli_algebra import KernelSpec
from src.quantum_utils.state_simulation import EmbeddingConfig


class DefaultValues:
    """
    Default experiment parameters: the fashion-mnist protocol of the bandwidth and generalization-gap runs and the
    20-qubit shot-budget comparison.
    """
    CGrid = (0.006, 0.015, 0.03, 0.0625, 0.125, 0.25, 0.5, 1, 2, 5, 8, 16, 32, 64, 128, 256, 512, 1024)
    Folds = 10
    ShadowSnapshots = 4000
    ShotsPerElement = 100
    ShadowMaxWeight = 3
    ClassPair = (0, 3)
    TrainSize = 100
    TestSize = 20
    PcaDimension = 8
    Layers = 2
    Bandwidths = (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0)
    SweepFeatureCounts = (20, 50, 150, 252)
    GapFeatureCounts = (10, 20, 50, 100, 150, 200, 252)
    GapBandwidth = 0.2
    GapC = 5.0
    GapTrainSizes = (8, 40, 80)
    Seeds = 10
    Margin = 1.0
    Delta = 0.05
    BudgetQubits = 20
    BudgetBodies = (1, 2, 3)
    BudgetEpsilon = 1.0
    BudgetMaxN = 400


class EstimatorKind(str, Enum):
    EXACT = "exact"
    SHADOWS = "shadows"
    SHOT_NOISY = "shot-noisy"
    # shadows for Pauli features, shot noise for the fidelity kernel
    FINITE = "finite"


def get_project_root_path() -> Path:
    path = Path(os.path.dirname(__file__))
    return path.parent.parent


def load_config(path: Optional[Union[str, Path]] = None) -> dict:
    """
    Reads a YAML (or JSON) experiment file; config.yml in the project root when no path is given.
    """
    config_location = Path(path) if path is not None else get_project_root_path() / "config.yml"
    if not config_location.exists():
        raise InputError(f"Config file {config_location} does not exist.")
    with open(config_location) as file:
        try:
            data = yaml.safe_load(file)
        except yaml.YAMLError as error:
            raise InputError(f"{config_location} is not valid YAML or JSON: {error}") from error
    if not isinstance(data, dict):
        raise InputError(f"{config_location} must contain a mapping at the top level.")
    return data


@dataclass(frozen=True)
class EstimatorConfig:
    kind: EstimatorKind = EstimatorKind.EXACT
    T: int = DefaultValues.ShadowSnapshots
    m: int = DefaultValues.ShotsPerElement
    max_weight: int = DefaultValues.ShadowMaxWeight
    groups: Optional[int] = None

    @classmethod
    def from_dict(cls, data) -> "EstimatorConfig":
        data = data or {}
        try:
            kind = EstimatorKind(data.get("kind", EstimatorKind.EXACT.value))
        except ValueError:
            raise InputError(f"Unknown estimator kind {data.get('kind')!r}.") from None
        return cls(kind=kind,
                   T=int(data.get("T", DefaultValues.ShadowSnapshots)),
                   m=int(data.get("m", DefaultValues.ShotsPerElement)),
                   max_weight=int(data.get("max_weight", DefaultValues.ShadowMaxWeight)),
                   groups=data.get("groups"))


@dataclass(frozen=True)
class LearnerConfig:
    C: Optional[float] = None
    c_grid: Tuple[float, ...] = DefaultValues.CGrid
    folds: int = DefaultValues.Folds
    margin: float = DefaultValues.Margin
    delta: float = DefaultValues.Delta

    @classmethod
    def from_dict(cls, data) -> "LearnerConfig":
        data = data or {}
        C = data.get("C")
        return cls(C=None if C is None else float(C),
                   c_grid=tuple(float(value) for value in data.get("c_grid", DefaultValues.CGrid)),
                   folds=int(data.get("folds", DefaultValues.Folds)),
                   margin=float(data.get("margin", DefaultValues.Margin)),
                   delta=float(data.get("delta", DefaultValues.Delta)))


@dataclass(frozen=True)
class DatasetConfig:
    """
    Either a prepared .npz archive or a pair of IDX files prepared on the fly.
    """
    prepared: Optional[str] = None
    images: Optional[str] = None
    labels: Optional[str] = None
    class_pair: Tuple[int, int] = DefaultValues.ClassPair
    n_train: int = DefaultValues.TrainSize
    n_test: int = DefaultValues.TestSize
    pca_dim: int = DefaultValues.PcaDimension
    seed: int = 0

    @classmethod
    def from_dict(cls, data, seed: int) -> "DatasetConfig":
        data = data or {}
        class_pair = tuple(int(value) for value in data.get("class_pair", DefaultValues.ClassPair))
        if len(class_pair) != 2:
            raise InputError(f"The class pair must have two entries, got {class_pair}.")
        config = cls(prepared=data.get("prepared"),
                     images=data.get("images"),
                     labels=data.get("labels"),
                     class_pair=class_pair,
                     n_train=int(data.get("n_train", DefaultValues.TrainSize)),
                     n_test=int(data.get("n_test", DefaultValues.TestSize)),
                     pca_dim=int(data.get("pca_dim", DefaultValues.PcaDimension)),
                     seed=int(data.get("seed", seed)))
        if config.prepared is None and (config.images is None or config.labels is None):
            raise InputError("The dataset section needs 'prepared' or both 'images' and 'labels'.")
        return config


@dataclass(frozen=True)
class SweepConfig:
    bandwidths: Tuple[float, ...] = DefaultValues.Bandwidths
    p_list: Tuple[int, ...] = DefaultValues.SweepFeatureCounts
    n_list: Tuple[int, ...] = DefaultValues.GapTrainSizes
    seeds: int = DefaultValues.Seeds
    include_gfqk: bool = True

    @classmethod
    def from_dict(cls, data) -> "SweepConfig":
        data = data or {}
        return cls(bandwidths=tuple(float(value) for value in data.get("bandwidths", DefaultValues.Bandwidths)),
                   p_list=tuple(int(value) for value in data.get("p_list", DefaultValues.SweepFeatureCounts)),
                   n_list=tuple(int(value) for value in data.get("n_list", DefaultValues.GapTrainSizes)),
                   seeds=int(data.get("seeds", DefaultValues.Seeds)),
                   include_gfqk=bool(data.get("include_gfqk", True)))


@dataclass(frozen=True)
class ExperimentConfig:
    embedding: EmbeddingConfig
    kernel: KernelSpec
    estimator: EstimatorConfig
    learner: LearnerConfig
    dataset: Optional[DatasetConfig]
    sweep: SweepConfig
    seed: Optional[int]
    raw: Dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if "embedding" not in data:
            raise InputError("The config needs an 'embedding' section.")
        seed = data.get("seed")
        embedding = EmbeddingConfig.from_dict(data["embedding"])
        kernel_section = data.get("kernel") or {"preset": "h-body", "H": 2}
        try:
            kernel = KernelSpec.from_dict(kernel_section, embedding.n)
        except ValueError as error:
            raise InputError(f"Cannot resolve kernel {kernel_section}: {error}") from error
        estimator = EstimatorConfig.from_dict(data.get("estimator"))
        if estimator.kind != EstimatorKind.EXACT and seed is None:
            raise InputError(f"The {estimator.kind.value} estimator needs a seed.")
        dataset = None
        if data.get("dataset") is not None:
            dataset = DatasetConfig.from_dict(data["dataset"], seed or 0)
        return cls(embedding=embedding,
                   kernel=kernel,
                   estimator=estimator,
                   learner=LearnerConfig.from_dict(data.get("learner")),
                   dataset=dataset,
                   sweep=SweepConfig.from_dict(data.get("sweep")),
                   seed=None if seed is None else int(seed),
                   raw=data)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "ExperimentConfig":
        return cls.from_dict(load_config(path))

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        if seed is None:
            return self
        return ExperimentConfig.from_dict({**self.raw, "seed": seed})

    def config_hash(self) -> str:
        return spec_hash(self.raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2, default=str)
