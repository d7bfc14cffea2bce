"""Talab - entry points behind the command-line tool.

Each function takes plain arguments (paths, names, numbers), does the work
through the library modules and returns a result object; printing is left to
``talab.cli``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from talab import depthlog, fpaudit, hardlang, tensora
from talab.backends import ExactRationalBackend, backend_from_tag
from talab.config import get_settings
from talab.errors import ConfigError, DivergenceError, EmptyDataset, TalabError
from talab.exporters.json import load_dataset, load_monoid, load_weights
from talab.exporters.yaml import load_document
from talab.hardlang import Example, GenParams, Morphism, Pair
from talab.probe import gradcheck
from talab.probe.model import ModelSpec, init_params
from talab.probe.train import Metrics, TrainConfig, evaluate, evaluate_backend, train
from talab.utils import type_check

logger = logging.getLogger(__name__)


def run_fp_audit(p: int = 3) -> fpaudit.FpAuditReport:
    """Exhaustive float-semantics audit at precision ``p``."""
    type_check(p, int, "p")
    if not 1 <= p <= 4:
        raise ConfigError(f"exhaustive audit supports 1 <= p <= 4, got {p}")
    return fpaudit.fp_audit(p)


def run_depth_audit(component: str | None = None, m: int | None = None) -> list[depthlog.AuditRow]:
    """Depth-audit rows for one component or all of them.

    ``m`` fixes the layer count for TF stacks; by default 1, 2 and 3 are audited.
    """
    if component is not None and component not in depthlog.COMPONENTS:
        raise ConfigError(f"unknown component {component!r}; expected one of {depthlog.COMPONENTS}")
    components = depthlog.COMPONENTS if component is None else (component,)
    ms = (1, 2, 3) if m is None else (m,)
    return depthlog.audit_table(components, ms)


@dataclass
class SwapReport:
    """Outcome of random swap-rule trials."""

    trials: int
    failures: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Every trial held exactly."""
        return not self.failures


def _random_rational_matrix(rng: np.random.Generator, rows: int, cols: int) -> tensora.Matrix[Fraction]:
    numerators = rng.integers(-9, 10, size=(rows, cols))
    denominators = rng.integers(1, 10, size=(rows, cols))
    return tensora.Matrix.from_rows(
        [
            [Fraction(int(a), int(b)) for a, b in zip(nums, dens, strict=True)]
            for nums, dens in zip(numerators, denominators, strict=True)
        ]
    )


def swap_trial(seed: int, index: int) -> bool:
    """One exact check of (A1 ⊗ A2)(W1 ⊘ W2) = (A1 W1) ⊘ (A2 W2) on random shapes up to 3."""
    rng = np.random.default_rng([seed, index])
    n1, n2, d1, d2, k = (int(v) for v in rng.integers(1, 4, size=5))
    backend = ExactRationalBackend()
    a1, a2 = _random_rational_matrix(rng, n1, d1), _random_rational_matrix(rng, n2, d2)
    w1, w2 = _random_rational_matrix(rng, d1, k), _random_rational_matrix(rng, d2, k)
    expanded = tensora.swap_rule_unfused(a1, a2, w1, w2, backend)
    fused = tensora.fused_project(a1, a2, w1, w2, backend)
    return expanded == fused


def run_swap_check(trials: int = 1000, seed: int = 0) -> SwapReport:
    """Run ``trials`` independent swap-rule checks across the worker pool."""
    type_check(trials, int, "trials")
    type_check(seed, int, "seed")
    with ThreadPoolExecutor(max_workers=get_settings().threads) as pool:
        outcomes = list(pool.map(lambda index: swap_trial(seed, index), range(trials)))
    return SwapReport(trials, [index for index, held in enumerate(outcomes) if not held])


def resolve_monoid(name: str) -> Morphism:
    """A builtin monoid by name, or a JSON monoid file by path.

    Raises:
        ConfigError: If ``name`` is neither
    """
    builtins = hardlang.builtin_monoids()
    if name in builtins:
        return builtins[name]
    path = Path(name)
    if path.suffix == ".json" or path.exists():
        return load_monoid(path)
    raise ConfigError(f"unknown monoid {name!r}; expected one of {sorted(builtins)} or a JSON file")


def parse_elements(text: str) -> frozenset[int]:
    """``"0,2"`` to {0, 2}."""
    try:
        return frozenset(int(part) for part in text.split(",") if part.strip())
    except ValueError as error:
        raise ConfigError(f"bad element list {text!r}") from error


def parse_pairs(text: str) -> frozenset[Pair]:
    """``"1:0,3:0"`` to {(1, 0), (3, 0)}."""
    pairs = set()
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            s, e = part.split(":")
            pairs.add((int(s), int(e)))
        except ValueError as error:
            raise ConfigError(f"bad pair {part!r}; expected s:e") from error
    return frozenset(pairs)


def default_pairs(morphism: Morphism) -> frozenset[Pair]:
    """The linked pair (h(first letter), identity)."""
    monoid = morphism.target
    first = morphism.image(morphism.alphabet[0])
    return frozenset({(first, monoid.identity)})


def generate(
    task: str,
    monoid: str,
    count: int,
    seed: int,
    *,
    r: int = 2,
    length: int = 8,
    min_length: int = 1,
    accept: str | None = None,
    pairs: str | None = None,
    saturate: bool = True,
    balance: float = 0.5,
    tolerance: float = 0.1,
) -> list[Example]:
    """Labeled dataset for ``task`` over a builtin or file monoid.

    Closure accepts the identity by default. Membership accepts the linked
    pair of the first letter's image with the identity; both default and
    explicit pair sets are closed under conjugacy unless ``saturate`` is off.
    """
    morphism = resolve_monoid(monoid)
    target = morphism.target
    accepted = parse_elements(accept) if accept else frozenset({target.identity})
    pair_set = parse_pairs(pairs) if pairs else default_pairs(morphism)
    if task == "membership" and saturate:
        pair_set = hardlang.saturate_pairs(target, pair_set)
    params = GenParams(
        morphism=morphism,
        accept=accepted,
        r=r,
        min_len=min_length,
        max_len=length,
        pairs=pair_set,
        balance=balance,
        tolerance=tolerance,
    )
    return hardlang.gen_dataset(task, params, count, seed)


def load_train_config(path: Path) -> TrainConfig:
    """Train config from a YAML or JSON document.

    ``vocab`` and ``n`` may be omitted from the model section; they are then
    read off the training set.
    """
    document = load_document(path)
    model = document.get("model")
    if not isinstance(model, dict):
        raise ConfigError(f"{path}: missing model section")
    if "vocab" not in model or "n" not in model:
        if "train" not in document:
            raise ConfigError(f"{path}: missing train dataset")
        examples = load_dataset(path.parent / str(document["train"]))
        if not examples:
            raise EmptyDataset(f"{path}: training set is empty")
        model = {
            "vocab": max(max(e.tokens) for e in examples) + 1,
            "n": max(len(e.tokens) for e in examples),
            **model,
        }
        document = {**document, "model": model}
    return TrainConfig.from_dict(document, base=path.parent)


def run_train(config_path: Path) -> Metrics:
    """Train per the config file and write its outputs.

    Raises:
        DivergenceError: If the loss stopped being finite; outputs are still written
    """
    cfg = load_train_config(config_path)
    metrics = train(cfg)
    if metrics.diverged:
        raise DivergenceError(f"training diverged at step {metrics.rows[-1].step}")
    return metrics


def run_eval(model_path: Path, data_path: Path, backend: str = "real64", precision: int | None = None) -> float:
    """Accuracy of saved weights on a dataset, in the chosen arithmetic."""
    spec, params = load_weights(model_path)
    examples = load_dataset(data_path)
    if backend == "real64":
        return evaluate(spec, params, examples)
    return evaluate_backend(spec, params, examples, backend_from_tag(backend, precision))


def run_grad_check(
    config_path: Path,
    h: float = gradcheck.DEFAULT_H,
    tolerance: float = gradcheck.DEFAULT_TOLERANCE,
) -> gradcheck.GradCheckReport:
    """Gradient check of a seeded model on a few random sequences.

    The config holds a ``model`` section, a ``seed`` and optionally the
    number of ``examples`` to draw.
    """
    document = load_document(config_path)
    try:
        spec = ModelSpec.from_dict(document["model"])
    except (KeyError, TypeError) as error:
        raise ConfigError(f"{config_path}: missing model section") from error
    seed = int(document.get("seed", 0))
    rng = np.random.default_rng([seed, 2])
    examples: Sequence[tuple[tuple[int, ...], int]] = [
        (tuple(int(t) for t in rng.integers(spec.vocab, size=spec.n)), int(rng.integers(2)))
        for _ in range(int(document.get("examples", 2)))
    ]
    return gradcheck.grad_check(spec, init_params(spec, seed), examples, h, tolerance)


__all__ = [
    "SwapReport",
    "TalabError",
    "generate",
    "load_train_config",
    "resolve_monoid",
    "run_depth_audit",
    "run_eval",
    "run_fp_audit",
    "run_grad_check",
    "run_swap_check",
    "run_train",
    "swap_trial",
]
