import csv
import hashlib
import io
import json
import logging
import math
import platform
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy
import sklearn

import src
from src.data.idx_format import parse_idx
from src.data.preprocessing import Dataset, DatasetRepository, prepare
from src.errors import InputError, QKernError
from src.kernels.gram_repository import GramMatrix, GramMatrixRepository, gram, spec_hash
from src.kernels.mercer import (MAX_MERCER_LPQK_QUBITS, MercerRepository, decompose, eigenfunctions,
                                integral_operator, lego_rkhs_orthogonality, mercer_gram, mercer_lpqk_gram)
from src.kernels.trace_kernels import FeatureTable, FidelityKernel, make_kernel
from src.learning.model_selection import (GAP_TABLE_HEADER, cross_validate, feature_kernel,
                                          generalization_gap_experiment, subsample_columns)
from src.learning.svm import accuracy, svm_train
from src.measurement.classical_shadows import collect_dataset_shadows, estimate_feature_table, shadow_gram
from src.measurement.shot_noise import BudgetQuery, budget_table, noisy_gfqk_cross, noisy_gfqk_gram, shot_budget
from src.quantum_utils.configuration import DefaultValues, EstimatorKind, ExperimentConfig
from src.quantum_utils.pauli_algebra import Preset, preset_weights
from src.services.task_runner import TaskRunner

logger = logging.getLogger(__name__)

SWEEP_TABLE_HEADER = ("bandwidth", "p", "mean_accuracy", "stderr")


@contextmanager
def stage(name: str):
    """
    Tags errors escaping the block with the pipeline stage, unless an inner stage already did.
    """
    try:
        yield
    except QKernError as error:
        if error.stage is None:
            error.stage = name
        raise


def format_value(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def to_csv(header: Sequence[str], rows: Sequence[Dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(row[column]) for column in header])
    return buffer.getvalue()


def versions() -> Dict[str, str]:
    return {"qkern": src.__version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def manifest_path(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def labels_path(out: Union[str, Path]) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".labels")


class ExperimentService:
    """
    Runs the workbench pipelines described by an ExperimentConfig and writes their CSV/JSON results together with a
    manifest (config hash, seeds, library versions) that reproduces them.
    """

    def __init__(self, config: Optional[ExperimentConfig] = None):
        self.config = config
        self.train: Optional[Dataset] = None
        self.test: Optional[Dataset] = None

    def _require_config(self) -> ExperimentConfig:
        if self.config is None:
            raise InputError("This command needs an experiment config.")
        return self.config

    def _require_data(self) -> Tuple[Dataset, Dataset]:
        if self.train is None or self.test is None:
            raise InputError("The dataset has not been loaded.")
        return self.train, self.test

    @property
    def seed(self) -> int:
        config = self._require_config()
        return 0 if config.seed is None else config.seed

    def load_data(self) -> Tuple[Dataset, Dataset]:
        """
        Loads the prepared archive, or parses and prepares the IDX files named in the config.
        :return:
        """
        config = self._require_config()
        if config.dataset is None:
            raise InputError("The config has no dataset section.", stage="config")
        dataset = config.dataset
        with stage("ingest"):
            if dataset.prepared is not None:
                self.train, self.test = DatasetRepository.load(dataset.prepared)
            else:
                raw = parse_idx(dataset.images, dataset.labels)
                self.train, self.test = prepare(raw, dataset.class_pair, dataset.n_train, dataset.n_test,
                                                dataset.pca_dim, dataset.seed)
            if self.train.features.shape[1] != config.embedding.n:
                raise InputError(f"Features have dimension {self.train.features.shape[1]} but the embedding uses "
                                 f"{config.embedding.n} qubits.")
        logger.info("Loaded %d train and %d test points", self.train.size, self.test.size)
        return self.train, self.test

    def write_manifest(self, command: str, out: Union[str, Path], outputs: Dict[str, Union[str, bytes]],
                       extra: Optional[Dict] = None) -> Path:
        """
        Writes every output atomically, then the manifest listing their sha256 digests.
        """
        digests = {}
        for path, content in outputs.items():
            TaskRunner.write_atomically(path, content)
            payload = content.encode() if isinstance(content, str) else content
            digests[Path(path).name] = hashlib.sha256(payload).hexdigest()
        manifest = {"command": command,
                    "config_hash": None if self.config is None else self.config.config_hash(),
                    "config": None if self.config is None else self.config.raw,
                    "seed": None if self.config is None else self.config.seed,
                    "versions": versions(),
                    "outputs": digests}
        if self.train is not None:
            manifest["preprocessing_hash"] = self.train.record.hash()
        manifest.update(extra or {})
        return TaskRunner.write_atomically(manifest_path(out),
                                           json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n")

    @staticmethod
    def ingest(images: Union[str, Path], labels: Union[str, Path], class_pair: Tuple[int, int], n_train: int,
               n_test: int, pca_dim: int, seed: int, out: Union[str, Path]) -> str:
        with stage("ingest"):
            train, test = prepare(parse_idx(images, labels), class_pair, n_train, n_test, pca_dim, seed)
            DatasetRepository.save(train, test, out)
        summary = f"Prepared {train.size} train and {test.size} test points with preprocessing hash " \
                  f"{train.record.hash()} into {out}"
        logger.info(summary)
        return summary

    def compute_gram(self, features: np.ndarray) -> GramMatrix:
        """
        Gram of the configured kernel with the configured estimator.
        """
        config = self._require_config()
        spec, cfg, estimator = config.kernel, config.embedding, config.estimator
        with stage("gram"):
            if estimator.kind == EstimatorKind.FINITE:
                if spec.preset == Preset.GFQK:
                    return noisy_gfqk_gram(features, estimator.m, self.seed, cfg)
                return shadow_gram(features, spec, estimator.T, self.seed, cfg, estimator.max_weight,
                                   estimator.groups)
            if estimator.kind == EstimatorKind.SHADOWS:
                return shadow_gram(features, spec, estimator.T, self.seed, cfg, estimator.max_weight,
                                   estimator.groups)
            if estimator.kind == EstimatorKind.SHOT_NOISY:
                if spec.preset != Preset.GFQK:
                    raise InputError("The shot-noisy estimator simulates the inversion test and needs the gfqk "
                                     "preset.")
                return noisy_gfqk_gram(features, estimator.m, self.seed, cfg)
            return gram(features, make_kernel(spec, cfg), kernel_hash=spec_hash(spec.to_dict()))

    def run_gram(self, out: Union[str, Path]) -> GramMatrix:
        train, _ = self._require_data()
        K = self.compute_gram(train.features)
        labels = "\n".join(str(int(label)) for label in train.labels) + "\n"
        self.write_manifest("gram", out, {out: GramMatrixRepository.to_csv(K), labels_path(out): labels},
                            {"estimator": K.estimator.value, "kernel_hash": K.kernel_hash})
        logger.info("Wrote %dx%d Gram matrix to %s", K.size, K.size, out)
        return K

    @staticmethod
    def train_model(gram_file: Union[str, Path], labels_file: Union[str, Path], C: Optional[float],
                    c_grid: Optional[Sequence[float]] = None, folds: int = DefaultValues.Folds, seed: int = 0,
                    out: Optional[Union[str, Path]] = None) -> str:
        """
        Trains on a saved Gram; with a C grid the box parameter is chosen by cross-validation first.
        :return: model JSON.
        """
        with stage("train"):
            K = GramMatrixRepository.load_csv(gram_file)
            y = np.loadtxt(labels_file, dtype=float, ndmin=1)
            report = {}
            if c_grid:
                with stage("cv"):
                    result = cross_validate(K, y, c_grid, folds, seed)
                C = result.best_C
                report = {"cv_accuracies": {format_value(key): value for key, value in result.accuracies.items()}}
            if C is None:
                raise InputError("Give --C or a --cv grid.")
            model = svm_train(K, y, C)
            payload = json.loads(model.to_json())
            payload.update(report)
            payload["train_accuracy"] = accuracy(model, K.values, y)
            text = json.dumps(payload, indent=2) + "\n"
            if out is not None:
                TaskRunner.write_atomically(out, text)
        return text

    def feature_tables(self, bandwidth: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Train and test Pauli feature tables of the configured kernel at one bandwidth. The shadows and finite
        estimators replace the exact expectation values with shadow estimates; test point i draws its snapshots from
        the stream (seed, N + i).
        """
        config = self._require_config()
        train, test = self._require_data()
        cfg = config.embedding.with_bandwidth(bandwidth)
        estimator = config.estimator
        paulis = config.kernel.paulis()
        if estimator.kind not in (EstimatorKind.SHADOWS, EstimatorKind.FINITE):
            with stage("embedding"):
                return (FeatureTable.from_dataset(train.features, paulis, cfg).values,
                        FeatureTable.from_dataset(test.features, paulis, cfg).values)
        with stage("shadows"):
            if config.kernel.max_weight > estimator.max_weight:
                raise InputError(f"Kernel spec contains a Pauli of weight {config.kernel.max_weight} above the "
                                 f"configured maximum {estimator.max_weight}.")
            tables = []
            for data, offset in ((train.features, 0), (test.features, train.size)):
                shadow_sets = collect_dataset_shadows(data, cfg, estimator.T, self.seed, offset)
                tables.append(estimate_feature_table(shadow_sets, paulis, estimator.groups))
        logger.debug("Estimated %d Pauli features from %d snapshots per point", len(paulis), estimator.T)
        return tables[0].reshape(train.size, len(paulis)), tables[1].reshape(test.size, len(paulis))

    def gfqk_blocks(self, bandwidth: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Fidelity-kernel train Gram and test-by-train block, shot-noisy under the shot-noisy and finite estimators.
        """
        config = self._require_config()
        train, test = self._require_data()
        cfg = config.embedding.with_bandwidth(bandwidth)
        estimator = config.estimator
        if estimator.kind in (EstimatorKind.SHOT_NOISY, EstimatorKind.FINITE):
            with stage("gram"):
                return (noisy_gfqk_gram(train.features, estimator.m, self.seed, cfg).values,
                        noisy_gfqk_cross(test.features, train.features, estimator.m, self.seed, cfg))
        kernel = FidelityKernel(cfg)
        return kernel.matrix(train.features), kernel.matrix(test.features, train.features)

    def _sweep_cell(self, K: GramMatrix, cross: np.ndarray, seed: int) -> float:
        config = self._require_config()
        train, test = self._require_data()
        learner = config.learner
        C = learner.C
        if C is None:
            C = cross_validate(K, train.labels, learner.c_grid, learner.folds, seed).best_C
        model = svm_train(K, train.labels, C)
        return accuracy(model, cross, test.labels)

    def sweep_bandwidth(self, out: Union[str, Path]) -> List[Dict]:
        """
        Mean test accuracy and its standard error over seeds for every (bandwidth, p), plus the GFQK per bandwidth.
        :param out: CSV path.
        :return: table rows.
        """
        config = self._require_config()
        self._require_data()
        seeds = [self.seed + offset for offset in range(config.sweep.seeds)]
        rows = []
        for bandwidth in config.sweep.bandwidths:
            with stage("sweep"):
                train_features, test_features = self.feature_tables(bandwidth)
                total = train_features.shape[1]

                def run(task):
                    p, seed = task
                    K, cross = feature_kernel(train_features, test_features, subsample_columns(total, p, seed))
                    return self._sweep_cell(K, cross, seed)

                scores = TaskRunner.map_ordered(run, [(p, seed) for p in config.sweep.p_list for seed in seeds])
                for index, p in enumerate(config.sweep.p_list):
                    rows.append(self._summary_row(bandwidth, p, scores[index * len(seeds):(index + 1) * len(seeds)]))
                if config.sweep.include_gfqk:
                    gram_train, gram_cross = self.gfqk_blocks(bandwidth)
                    K = GramMatrix(gram_train)
                    gfqk_scores = [self._sweep_cell(K, gram_cross, seed) for seed in seeds]
                    rows.append(self._summary_row(bandwidth, "gfqk", gfqk_scores))
            logger.info("Finished bandwidth %g", bandwidth)
        self.write_manifest("sweep-bandwidth", out, {out: to_csv(SWEEP_TABLE_HEADER, rows)},
                            {"seeds": seeds, "estimator": config.estimator.kind.value})
        return rows

    @staticmethod
    def _summary_row(bandwidth: float, p, scores: Sequence[float]) -> Dict:
        spread = float(np.std(scores, ddof=1)) / math.sqrt(len(scores)) if len(scores) > 1 else 0.0
        return {"bandwidth": bandwidth, "p": p, "mean_accuracy": float(np.mean(scores)), "stderr": spread}

    def gen_gap(self, out: Union[str, Path]) -> List[Dict]:
        """
        Train and test risk against the feature count p for every training size in the sweep.
        :param out: CSV path.
        :return: table rows.
        """
        config = self._require_config()
        train, test = self._require_data()
        bandwidth = config.embedding.bandwidth
        C = config.learner.C if config.learner.C is not None else DefaultValues.GapC
        seeds = [self.seed + offset for offset in range(config.sweep.seeds)]
        train_features, test_features = self.feature_tables(bandwidth)
        gfqk = self.gfqk_blocks(bandwidth) if config.sweep.include_gfqk else None
        rows, bounds, trends = [], {}, {}
        for N in config.sweep.n_list:
            with stage("gen-gap"):
                result = generalization_gap_experiment(train_features, test_features, train.labels, test.labels,
                                                       C, config.sweep.p_list, seeds, N=N,
                                                       margin=config.learner.margin, delta=config.learner.delta,
                                                       gfqk_grams=gfqk)
            rows.extend(result.rows)
            bounds[str(N)] = {str(p): value for p, value in result.bounds.items()}
            trends[str(N)] = result.gap_trend()
        self.write_manifest("gen-gap", out, {out: to_csv(GAP_TABLE_HEADER, rows)},
                            {"seeds": seeds, "C": C, "bandwidth": bandwidth, "estimator": config.estimator.kind.value,
                             "bound_gap_terms": bounds, "gap_spearman": trends})
        return rows

    def shots(self, n: int, bodies: Sequence[int], epsilon: float, n_max: int, out: Union[str, Path],
              **options) -> List[Dict]:
        """
        Measurement budgets for N = 1..n_max; the crossover per body count goes to the manifest.
        """
        with stage("shots"):
            if n_max < 1:
                raise InputError(f"--N-max must be at least 1, got {n_max}.")
            rows = budget_table(n, range(1, n_max + 1), bodies, epsilon, **options)
            crossovers = {str(H): shot_budget(BudgetQuery(n=n, N=1, H=H, epsilon=epsilon, **options)).crossover_N
                          for H in bodies}
        header = ["N", "M_gfqk"] + [f"M_lpqk_H{H}" for H in bodies]
        self.write_manifest("shots", out, {out: to_csv(header, rows)},
                            {"n": n, "H": list(bodies), "epsilon": epsilon, "crossover_N": crossovers})
        return rows

    def mercer(self, out: Union[str, Path]) -> Dict[str, float]:
        """
        Decomposes the training set's covariance operator and reports the empirical Mercer checks.
        :param out: output directory for the spectrum, the basis file and the report.
        """
        config = self._require_config()
        train, _ = self._require_data()
        cfg = config.embedding
        with stage("mercer"):
            md = decompose(train.features, cfg)
            modes = md.nonzero_modes()
            phi = eigenfunctions(md, train.features, cfg, modes=modes)
            orthonormality = float(np.max(np.abs(phi.T @ phi / phi.shape[0] - np.eye(modes.size))))
            uniform = np.full(md.eigenvalues.shape[0], 1.0 / 2 ** md.n)
            K = mercer_gram(train.features, uniform, md, cfg)
            overlap_error = float(np.max(np.abs(K - FidelityKernel(cfg).matrix(train.features))))
            # uniform weights rescale mode j by 2^n w_j = 1
            rescaled = integral_operator(K, phi) - phi * md.eigenvalues[modes]
            report = {"n": md.n,
                      "modes": int(modes.size),
                      "eigenvalue_sum": float(np.sum(md.eigenvalues)),
                      "orthonormality_error": orthonormality,
                      "lego_rkhs_orthogonality": lego_rkhs_orthogonality(md, train.features, cfg),
                      "uniform_weight_overlap_error": overlap_error,
                      "integral_operator_residual": float(np.max(np.abs(rescaled)))}
            if md.n <= MAX_MERCER_LPQK_QUBITS:
                report["mercer_s_lpqk_mean_diagonal"] = {
                    str(qubit): float(np.mean(np.diag(mercer_lpqk_gram(
                        train.features, preset_weights("s-lpqk", md.n, s=[qubit]), md, cfg))))
                    for qubit in range(md.n)}
        directory = Path(out)
        outputs = {directory / "mercer.json": MercerRepository.to_json(md),
                   directory / "mercer_basis.bin": MercerRepository.to_bytes(md),
                   directory / "mercer_report.json": json.dumps(report, indent=2) + "\n"}
        self.write_manifest("mercer", directory / "mercer", outputs, {"report": report})
        return report
