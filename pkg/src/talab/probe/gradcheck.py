"""Analytic gradients against central finite differences."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from talab.probe.model import Array, ModelSpec, Params, backward, classify_forward, loss

logger = logging.getLogger(__name__)

DEFAULT_H = 1e-5
DEFAULT_TOLERANCE = 1e-5


def relative_error(analytic: float, numeric: float) -> float:
    """|analytic − numeric| / max(1, |numeric|)."""
    return abs(analytic - numeric) / max(1.0, abs(numeric))


def central_difference(function: Callable[[Array], float], x: Array, h: float = DEFAULT_H) -> Array:
    """Entrywise (f(x + h·e_i) − f(x − h·e_i)) / 2h; ``x`` is restored afterwards."""
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        upper = function(x)
        flat[i] = saved - h
        lower = function(x)
        flat[i] = saved
        out[i] = (upper - lower) / (2 * h)
    return grad


@dataclass(frozen=True)
class GradCheckReport:
    """Worst relative error per parameter."""

    errors: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        """Worst error over all parameters."""
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        """Every parameter within tolerance."""
        return self.max_error <= self.tolerance

    def rows(self) -> list[dict[str, object]]:
        """One row per parameter for table output."""
        return [
            {"parameter": name, "max_rel_error": error, "pass": error <= self.tolerance}
            for name, error in self.errors.items()
        ]


def grad_check(
    spec: ModelSpec,
    params: Params,
    examples: Sequence[tuple[Sequence[int], int]],
    h: float = DEFAULT_H,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckReport:
    """Compare ``backward`` with central differences of the summed loss.

    Parameters are perturbed in place on a copy; ``params`` is left untouched.
    """
    work = {name: value.copy() for name, value in params.items()}
    analytic = {name: np.zeros_like(value) for name, value in work.items()}
    for tokens, label in examples:
        _, cache = classify_forward(tokens, spec, work)
        for name, grad in backward(cache, label, spec, work).items():
            analytic[name] += grad

    def total_loss(_: Array) -> float:
        return sum(loss(tokens, label, spec, work) for tokens, label in examples)

    errors: dict[str, float] = {}
    for name, value in work.items():
        numeric = central_difference(total_loss, value, h)
        errors[name] = max(
            (relative_error(a, c) for a, c in zip(analytic[name].ravel(), numeric.ravel(), strict=True)),
            default=0.0,
        )
        logger.debug("%s: max relative error %.3e", name, errors[name])
    report = GradCheckReport(errors, tolerance)
    if not report.passed:
        logger.warning("gradient check failed: max relative error %.3e", report.max_error)
    return report
