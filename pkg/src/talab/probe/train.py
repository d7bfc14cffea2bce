"""Training and evaluation of probe models on labeled datasets."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from talab import depthlog
from talab.backends import ScalarBackend
from talab.errors import ConfigError, DataFormatError, EmptyDataset, ShapeMismatch
from talab.exporters.csv import METRICS_HEADER, rows_to_csv
from talab.exporters.json import load_dataset, weights_to_json
from talab.hardlang import Example
from talab.probe.model import (
    ModelSpec,
    Params,
    backward,
    classify_forward,
    cross_entropy,
    init_params,
    predict,
    predict_backend,
    to_tf_config,
)

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    """Optimizer choice and hyperparameters."""

    kind: str = "adam"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        """Validate hyperparameters."""
        if self.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")
        if not self.lr >= 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError("adam eps must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """One training run.

    Attributes:
        model: Architecture to train.
        train_path: JSON-lines training set.
        out_dir: Directory receiving ``metrics.csv`` and ``weights.json``.
        eval_path: Optional held-out set, scored every ``eval_every`` steps.
        wall_clock: Record step times; when false ``wall_ms`` is 0 so the
            metrics file depends only on the seed.
    """

    model: ModelSpec
    train_path: Path
    out_dir: Path
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    steps: int = 100
    batch_size: int = 16
    eval_path: Path | None = None
    seed: int = 0
    log_every: int = 100
    eval_every: int = 100
    wall_clock: bool = True

    def __post_init__(self) -> None:
        """Validate counts."""
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.log_every < 1 or self.eval_every < 1:
            raise ConfigError("log_every and eval_every must be >= 1")

    @classmethod
    def from_dict(cls, data: dict[str, Any], base: Path = Path(".")) -> TrainConfig:
        """Build from a config document; relative paths resolve against ``base``.

        Raises:
            ConfigError: For missing keys or invalid values
        """
        try:
            model = ModelSpec.from_dict(data["model"])
            train_path = base / str(data["train"])
        except (KeyError, TypeError) as error:
            raise ConfigError(f"train config is missing {error}") from error
        eval_path = data.get("eval")
        try:
            return cls(
                model=model,
                train_path=train_path,
                out_dir=base / str(data.get("out", "run")),
                optimizer=OptimizerConfig(**data.get("optimizer", {})),
                steps=int(data.get("steps", 100)),
                batch_size=int(data.get("batch_size", 16)),
                eval_path=None if eval_path is None else base / str(eval_path),
                seed=int(data.get("seed", 0)),
                log_every=int(data.get("log_every", 100)),
                eval_every=int(data.get("eval_every", 100)),
                wall_clock=bool(data.get("wall_clock", True)),
            )
        except (TypeError, ValueError) as error:
            raise ConfigError(f"invalid train config: {error}") from error


@dataclass(frozen=True)
class MetricRow:
    """One optimizer step."""

    step: int
    loss: float
    train_acc: float
    eval_acc: float | None
    wall_ms: float

    def as_dict(self) -> dict[str, object]:
        """Row keyed by the metrics CSV header."""
        return asdict(self)


@dataclass
class Metrics:
    """Per-step records plus end-of-run scores.

    ``depth_reference`` is the symbolic depth the architecture's forward pass
    is audited against.
    """

    rows: list[MetricRow] = field(default_factory=list)
    depth_reference: str | None = None
    final_train_acc: float | None = None
    final_eval_acc: float | None = None
    diverged: bool = False

    def to_csv(self) -> str:
        """``step,loss,train_acc,eval_acc,wall_ms`` table."""
        return rows_to_csv([row.as_dict() for row in self.rows], METRICS_HEADER)


class Optimizer:
    """SGD or Adam updating a parameter dict in place, in key order."""

    def __init__(self, cfg: OptimizerConfig, params: Params) -> None:
        """Zero the moment estimates."""
        self.cfg = cfg
        self.t = 0
        self.first = {name: np.zeros_like(value) for name, value in params.items()}
        self.second = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        """Apply one update."""
        cfg = self.cfg
        self.t += 1
        for name in params:
            grad = grads[name]
            if cfg.kind == "sgd":
                params[name] -= cfg.lr * grad
                continue
            self.first[name] = cfg.beta1 * self.first[name] + (1 - cfg.beta1) * grad
            self.second[name] = cfg.beta2 * self.second[name] + (1 - cfg.beta2) * grad**2
            m_hat = self.first[name] / (1 - cfg.beta1**self.t)
            v_hat = self.second[name] / (1 - cfg.beta2**self.t)
            params[name] -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def batch_gradients(
    spec: ModelSpec, params: Params, batch: Sequence[Example]
) -> tuple[float, Params, int]:
    """Mean loss, mean gradients and correct-prediction count over ``batch``.

    Per-example gradients are summed in batch order.
    """
    total = {name: np.zeros_like(value) for name, value in params.items()}
    loss_sum, correct = 0.0, 0
    for example in batch:
        logits, cache = classify_forward(example.tokens, spec, params)
        loss_sum += cross_entropy(logits, example.label)
        correct += int(np.argmax(logits)) == example.label
        for name, grad in backward(cache, example.label, spec, params).items():
            total[name] += grad
    scale = 1.0 / len(batch)
    return loss_sum * scale, {name: grad * scale for name, grad in total.items()}, correct


def _check_examples(spec: ModelSpec, examples: Sequence[Example]) -> None:
    for index, example in enumerate(examples):
        if not example.tokens or len(example.tokens) > spec.n or max(example.tokens) >= spec.vocab:
            raise DataFormatError(
                f"example {index} does not fit the model (n = {spec.n}, vocab = {spec.vocab})"
            )


def evaluate(spec: ModelSpec, params: Params, examples: Sequence[Example]) -> float:
    """Fraction of examples whose argmax class equals the label.

    Raises:
        EmptyDataset: If ``examples`` is empty
        DataFormatError: If an example does not fit the model
    """
    if not examples:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    try:
        correct = sum(predict(example.tokens, spec, params) == example.label for example in examples)
    except ShapeMismatch as error:
        raise DataFormatError(error.message) from error
    return correct / len(examples)


def evaluate_backend(
    spec: ModelSpec, params: Params, examples: Sequence[Example], backend: ScalarBackend[Any]
) -> float:
    """``evaluate`` with the forward pass in ``backend`` arithmetic.

    Raises:
        EmptyDataset: If ``examples`` is empty
        DataFormatError: If an example does not fit the model
    """
    if not examples:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    _check_examples(spec, examples)
    cfg = to_tf_config(spec, params, backend)
    correct = sum(
        predict_backend(example.tokens, spec, params, backend, cfg) == example.label
        for example in examples
    )
    return correct / len(examples)


def depth_reference(spec: ModelSpec) -> str | None:
    """Depth formula of the whole forward pass, for uniform layer stacks."""
    kinds = set(spec.layers)
    if kinds == {"rope"}:
        return str(depthlog.proved_formula("tf", spec.m))
    if kinds <= {"plain"}:
        return str(depthlog.proved_formula("tf-plain", spec.m))
    return None


def run_training(
    cfg: TrainConfig,
    train_set: Sequence[Example],
    eval_set: Sequence[Example] = (),
) -> tuple[Metrics, Params]:
    """Optimize from seeded initial weights; no files are touched.

    Stops early, with ``Metrics.diverged`` set, if the loss stops being finite.

    Raises:
        EmptyDataset: If ``train_set`` is empty
        DataFormatError: If an example does not fit the model
    """
    if not train_set:
        raise EmptyDataset("training set is empty")
    spec = cfg.model
    _check_examples(spec, train_set)
    _check_examples(spec, eval_set)
    params = init_params(spec, cfg.seed)
    optimizer = Optimizer(cfg.optimizer, params)
    rng = np.random.default_rng([cfg.seed, 1])
    metrics = Metrics(depth_reference=depth_reference(spec))
    size = min(cfg.batch_size, len(train_set))
    for step in range(1, cfg.steps + 1):
        started = time.perf_counter()
        batch = [train_set[i] for i in rng.choice(len(train_set), size=size, replace=False)]
        batch_loss, grads, correct = batch_gradients(spec, params, batch)
        if not math.isfinite(batch_loss):
            logger.warning("loss became non-finite at step %d; stopping", step)
            metrics.diverged = True
            metrics.rows.append(MetricRow(step, batch_loss, correct / size, None, 0.0))
            break
        optimizer.step(params, grads)
        eval_acc = None
        if eval_set and (step % cfg.eval_every == 0 or step == cfg.steps):
            eval_acc = evaluate(spec, params, eval_set)
        wall_ms = (time.perf_counter() - started) * 1000 if cfg.wall_clock else 0.0
        metrics.rows.append(MetricRow(step, batch_loss, correct / size, eval_acc, wall_ms))
        if step % cfg.log_every == 0 or step == cfg.steps:
            logger.info("step %d loss %.4f batch acc %.3f", step, batch_loss, correct / size)
    metrics.final_train_acc = evaluate(spec, params, train_set)
    if eval_set:
        metrics.final_eval_acc = evaluate(spec, params, eval_set)
    return metrics, params


def train(cfg: TrainConfig) -> Metrics:
    """Load the datasets, train, and write ``metrics.csv`` and ``weights.json``.

    Raises:
        DataFormatError: If a dataset is missing or malformed
        EmptyDataset: If the training set is empty
    """
    train_set = load_dataset(cfg.train_path)
    eval_set = load_dataset(cfg.eval_path) if cfg.eval_path is not None else []
    metrics, params = run_training(cfg, train_set, eval_set)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "metrics.csv").write_text(metrics.to_csv(), encoding="utf-8")
    (cfg.out_dir / "weights.json").write_text(
        weights_to_json(cfg.model, params, metrics.depth_reference), encoding="utf-8"
    )
    logger.info("wrote %s", cfg.out_dir)
    return metrics
