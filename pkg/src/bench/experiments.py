"""
Benchmark sweeps over the synthetic-data grid.

Every trial draws one dataset from a counter-based seed and runs each method
on it, so methods are compared on paired data. Results are collected in
submission order, which makes the output independent of the number of jobs.
"""
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..baselines.methods import BaselineConfig
from ..baselines.regression import KernelRidgeConfig
from ..data.simulator import (
    MixingMode, ScaleScheme, SourceFamily, gen_sources, linear_mixture, make_dataset, permute_variables,
)
from ..engine import smica
from ..engine.graph import Dag, dag_metrics
from ..engine.pipeline import NonsensConfig
from ..engine.stats import HsicConfig, NullMethod
from ..engine.tcl import TclConfig
from ..engine.verdict import Decision
from ..errors import ParameterError
from .registry import BIVARIATE_METHODS, ICA_METHODS, MULTIVARIATE_METHODS, run_method

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "method", "mode", "E", "n_e", "depth", "trial", "seed", "flipped",
    "decision", "correct", "inconclusive", "f1", "hamming", "recovery", "error",
]
SUMMARY_COLUMNS = ["method", "E", "n_e", "depth", "metric", "mean", "stderr", "trials", "reference"]
FLOAT_FORMAT = "%.17g"
ICA_DIMENSION = 2


class ExperimentMode(str, Enum):
    BIVARIATE_4TEST = "bivariate-4test"
    BIVARIATE_ASSUME_CAUSE = "assume-cause"
    NO_EFFECT = "no-effect"
    MULTIVARIATE = "multivariate"
    LINEAR_ICA_BENCH = "linear-ica-bench"


DEFAULT_METHODS = {
    ExperimentMode.BIVARIATE_4TEST: ["nonsens", "linear-ica", "lingam", "resit", "icp"],
    ExperimentMode.BIVARIATE_ASSUME_CAUSE: ["nonsens-lr", "linear-ica-lr", "lingam", "resit", "reci"],
    ExperimentMode.NO_EFFECT: ["nonsens", "linear-ica", "lingam", "resit", "icp"],
    ExperimentMode.MULTIVARIATE: ["pc", "pc-hybrid", "pc-hybrid-lr"],
    ExperimentMode.LINEAR_ICA_BENCH: ["smica", "fastica", "joint-diag"],
}

MODE_METRICS = {
    ExperimentMode.BIVARIATE_4TEST: ["accuracy", "decided_accuracy", "inconclusive_rate"],
    ExperimentMode.BIVARIATE_ASSUME_CAUSE: ["accuracy", "decided_accuracy", "inconclusive_rate"],
    ExperimentMode.NO_EFFECT: ["true_negative_rate"],
    ExperimentMode.MULTIVARIATE: ["f1", "hamming"],
    ExperimentMode.LINEAR_ICA_BENCH: ["recovery"],
}


@dataclass
class ExperimentConfig:
    mode: ExperimentMode = ExperimentMode.BIVARIATE_4TEST
    segments: List[int] = field(default_factory=lambda: [5, 10, 20])
    samples_per_segment: List[int] = field(default_factory=lambda: [128, 512])
    depths: List[int] = field(default_factory=lambda: [1, 2, 3])
    seeds: int = 20
    base_seed: int = 0
    methods: Optional[List[str]] = None
    alpha: float = 0.05
    ci_alpha: float = 0.05
    d: int = 6                                  # multivariate mode only
    edge_prob: Optional[float] = None           # defaults to 2 / (d - 1)
    family: SourceFamily = SourceFamily.LAPLACE_VARIANCE
    scheme: Optional[ScaleScheme] = None        # monotone for the ICA bench, random otherwise
    tcl_depth: Optional[int] = None             # defaults to the mixing depth
    hidden_width: Optional[int] = None
    epochs: int = 300
    learning_rate: float = 0.1
    batch_size: int = 128
    hsic_method: NullMethod = NullMethod.GAMMA
    permutations: int = 500
    smica_restarts: int = 5
    reuse_tcl: bool = False
    strict_tcl: bool = False                    # near-chance TCL fits fail the method run
    jobs: int = 1
    output: str = "results.csv"

    def __post_init__(self):
        self.mode = ExperimentMode(self.mode)
        self.family = SourceFamily(self.family)
        self.hsic_method = NullMethod(self.hsic_method)
        if self.scheme is not None:
            self.scheme = ScaleScheme(self.scheme)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        """Read a JSON object of field overrides; unknown keys are rejected."""
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ParameterError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(payload, dict):
            raise ParameterError(f"config file {path} must hold a JSON object")
        return cls().apply_overrides(payload)

    def apply_overrides(self, overrides: Dict) -> "ExperimentConfig":
        """New config with every non-None override applied."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return replace(self, **{k: v for k, v in overrides.items() if v is not None})
        except ValueError as exc:
            raise ParameterError(str(exc))

    @property
    def method_list(self) -> List[str]:
        return list(self.methods) if self.methods else list(DEFAULT_METHODS[self.mode])

    @property
    def source_scheme(self) -> ScaleScheme:
        if self.scheme is not None:
            return self.scheme
        return ScaleScheme.MONOTONE if self.mode is ExperimentMode.LINEAR_ICA_BENCH else ScaleScheme.RANDOM

    def validate(self):
        for name in ("segments", "samples_per_segment", "depths"):
            if not getattr(self, name):
                raise ParameterError(f"grid {name} must be nonempty")
        if self.seeds < 1:
            raise ParameterError(f"seeds must be >= 1, got {self.seeds}")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if min(self.segments) < 3:
            raise ParameterError("every grid E must be >= 3: identifiability needs three distinct segments")
        if self.jobs == 0:
            raise ParameterError("jobs must be nonzero")
        if self.mode is ExperimentMode.MULTIVARIATE and self.d < 3:
            raise ParameterError(f"multivariate mode needs d >= 3, got {self.d}")
        if self.mode is ExperimentMode.MULTIVARIATE:
            allowed = MULTIVARIATE_METHODS
        elif self.mode is ExperimentMode.LINEAR_ICA_BENCH:
            allowed = ICA_METHODS
        else:
            allowed = BIVARIATE_METHODS
        bad = [m for m in self.method_list if m not in allowed]
        if bad:
            raise ParameterError(f"methods {bad} not available in {self.mode.value} mode; choose from {list(allowed)}")

    def cells(self) -> List[Tuple[int, int, int]]:
        return list(itertools.product(self.segments, self.samples_per_segment, self.depths))

    def nonsens_config(self, depth: int, seed: int) -> NonsensConfig:
        tcl = TclConfig(
            depth=self.tcl_depth or depth, hidden_width=self.hidden_width, learning_rate=self.learning_rate,
            batch_size=self.batch_size, epochs=self.epochs, seed=seed, strict_chance=self.strict_tcl,
        )
        return NonsensConfig(
            alpha=self.alpha,
            tcl=tcl,
            smica=smica.SmicaConfig(restarts=self.smica_restarts, seed=seed),
            hsic=self.hsic_config(seed),
            ci_alpha=self.ci_alpha,
            reuse_tcl=self.reuse_tcl,
            assume_cause=self.mode is ExperimentMode.BIVARIATE_ASSUME_CAUSE,
        )

    def baseline_config(self, seed: int) -> BaselineConfig:
        return BaselineConfig(
            alpha=self.alpha,
            hsic=self.hsic_config(seed),
            kernel_ridge=KernelRidgeConfig(seed=seed),
            smica=smica.SmicaConfig(restarts=self.smica_restarts, seed=seed),
            assume_cause=self.mode is ExperimentMode.BIVARIATE_ASSUME_CAUSE,
        )

    def hsic_config(self, seed: int) -> HsicConfig:
        return HsicConfig(method=self.hsic_method, permutations=self.permutations, seed=seed)

    def to_dict(self) -> Dict:
        payload = asdict(self)
        for key, value in payload.items():
            if isinstance(value, Enum):
                payload[key] = value.value
        return payload


def trial_seed(base_seed: int, cell_index: int, trial: int) -> int:
    """Counter-based seed: depends only on the grid position, never on scheduling."""
    return int(np.random.SeedSequence([base_seed, cell_index, trial]).generate_state(1)[0])


@dataclass
class _TrialData:
    data: object
    flipped: bool = False
    cause: Optional[int] = None
    truth_dag: Optional[Dag] = None
    sources: Optional[np.ndarray] = None


def _draw_trial(config: ExperimentConfig, E: int, n_e: int, depth: int, seed: int) -> _TrialData:
    mode = config.mode
    if mode is ExperimentMode.LINEAR_ICA_BENCH:
        source_seed, mixing_seed = np.random.SeedSequence(seed).generate_state(2)
        panel = gen_sources(ICA_DIMENSION, E, n_e, config.family, config.source_scheme, seed=int(source_seed))
        data, _ = linear_mixture(panel, seed=int(mixing_seed))
        return _TrialData(data, sources=panel.S)
    if mode is ExperimentMode.MULTIVARIATE:
        data, truth = make_dataset(
            d=config.d, E=E, n_e=n_e, depth=depth, seed=seed, family=config.family,
            scheme=config.source_scheme, edge_prob=config.edge_prob,
        )
        return _TrialData(data, truth_dag=Dag(truth.dag))
    if mode is ExperimentMode.NO_EFFECT:
        data, _ = make_dataset(
            d=2, E=E, n_e=n_e, depth=depth, seed=seed, mode=MixingMode.CYCLIC,
            family=config.family, scheme=config.source_scheme,
        )
        return _TrialData(data)

    data, truth = make_dataset(d=2, E=E, n_e=n_e, depth=depth, seed=seed, family=config.family,
                               scheme=config.source_scheme)
    flipped = bool(np.random.default_rng([seed, 1]).random() < 0.5)
    if flipped:
        data, truth = permute_variables(data, truth, [1, 0])
    cause = int(np.argmax(truth.dag.any(axis=1)))
    return _TrialData(data, flipped=flipped, cause=cause)


def _recover_sources(method: str, data, config: ExperimentConfig, seed: int) -> np.ndarray:
    if method == "smica":
        model = smica.fit(data.X, data.labels, smica.SmicaConfig(restarts=config.smica_restarts, seed=seed))
        return model.transform(data.X)
    if method == "fastica":
        return smica.fit_fastica(data.X, seed=seed)
    return smica.fit_joint_diagonalization(data.X, data.labels)


def _evaluate(method: str, trial: _TrialData, row: Dict, config: ExperimentConfig, depth: int, seed: int):
    if config.mode is ExperimentMode.LINEAR_ICA_BENCH:
        row["recovery"] = smica.recovery_score(_recover_sources(method, trial.data, config, seed), trial.sources)
        return
    outcome = run_method(method, trial.data, config.nonsens_config(depth, seed), config.baseline_config(seed))
    if config.mode is ExperimentMode.MULTIVARIATE:
        metrics = dag_metrics(outcome.dag, trial.truth_dag)
        row["f1"] = metrics.f1
        row["hamming"] = float(metrics.hamming)
        return
    decision = outcome.decision
    row["decision"] = decision.value
    row["inconclusive"] = float(decision is Decision.INCONCLUSIVE)
    if config.mode is ExperimentMode.NO_EFFECT:
        row["correct"] = row["inconclusive"]
    else:
        row["correct"] = float(decision.cause == trial.cause)


def run_trial(config: ExperimentConfig, cell_index: int, E: int, n_e: int, depth: int, trial: int) -> List[Dict]:
    """One dataset, every method; failures become rows with an error message."""
    seed = trial_seed(config.base_seed, cell_index, trial)
    base = {column: np.nan for column in RESULT_COLUMNS}
    base.update(mode=config.mode.value, E=E, n_e=n_e, depth=depth, trial=trial, seed=seed,
                flipped=False, decision="", error="")
    try:
        drawn = _draw_trial(config, E, n_e, depth, seed)
    except Exception as exc:
        logger.warning("trial %d of cell %d: data generation failed: %s", trial, cell_index, exc)
        return [dict(base, method=method, error=f"{type(exc).__name__}: {exc}") for method in config.method_list]

    rows = []
    for method in config.method_list:
        row = dict(base, method=method, flipped=drawn.flipped)
        try:
            _evaluate(method, drawn, row, config, depth, seed)
        except Exception as exc:
            logger.warning("trial %d of cell %d: %s failed: %s", trial, cell_index, method, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def run_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """Full grid cross-product; one row per method, cell and trial."""
    config.validate()
    tasks = [
        (cell_index, E, n_e, depth, trial)
        for cell_index, (E, n_e, depth) in enumerate(config.cells())
        for trial in range(config.seeds)
    ]
    logger.info("sweep: %s mode, %d trials, methods %s", config.mode.value, len(tasks), config.method_list)
    batches = Parallel(n_jobs=config.jobs)(delayed(run_trial)(config, *task) for task in tasks)
    rows = [row for batch in batches for row in batch]
    frame = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    failures = int((frame["error"] != "").sum())
    if failures:
        logger.warning("sweep finished with %d failed method runs", failures)
    return frame


def _mean_stderr(values: pd.Series) -> Tuple[float, float, int]:
    values = values.dropna().astype(float)
    n = len(values)
    if n == 0:
        return float("nan"), float("nan"), 0
    stderr = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(values.mean()), stderr, n


def _metric_values(group: pd.DataFrame, metric: str) -> pd.Series:
    ok = group[group["error"] == ""]
    if metric == "failure_rate":
        return (group["error"] != "").astype(float)
    if metric in ("accuracy", "true_negative_rate"):
        return ok["correct"]
    if metric == "decided_accuracy":
        return ok.loc[ok["inconclusive"] == 0.0, "correct"]
    if metric == "inconclusive_rate":
        return ok["inconclusive"]
    return ok[metric]


def summarize(results: pd.DataFrame, mode: ExperimentMode, alpha: float) -> pd.DataFrame:
    """Mean and standard error per method, cell and metric."""
    mode = ExperimentMode(mode)
    metrics = MODE_METRICS[mode] + ["failure_rate"]
    results = results.copy()
    results["error"] = results["error"].fillna("")
    rows = []
    for (method, E, n_e, depth), group in results.groupby(["method", "E", "n_e", "depth"], sort=True):
        for metric in metrics:
            mean, stderr, n = _mean_stderr(_metric_values(group, metric))
            reference = 1.0 - alpha if metric == "true_negative_rate" else np.nan
            rows.append([method, E, n_e, depth, metric, mean, stderr, n, reference])
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def summary_path(output) -> Path:
    output = Path(output)
    return output.with_name(f"{output.stem}.summary.csv")


def write_results(results: pd.DataFrame, summary: pd.DataFrame, output) -> Tuple[Path, Path]:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    results.to_csv(output, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    target = summary_path(output)
    summary.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return output, target


def run_benchmark(config: ExperimentConfig) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Sweep, summarize and write both CSV files to config.output."""
    results = run_sweep(config)
    summary = summarize(results, config.mode, config.alpha)
    paths = write_results(results, summary, config.output)
    logger.info("wrote %s and %s", *paths)
    return results, summary
