"""Real64 classifier over tensor attention, with an analytic backward pass.

Tokens are embedded, passed through g_0 and m attention layers each followed
by a block g, and the final position's vector is read out into two logits.
Attention logits are indexed [j1, j2, j3] for query j1 and key pair (j2, j3),
the same scores ``attncore`` lays out at column j2 + j3·n.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import NDArray

from talab import attncore, tensora
from talab.attncore import AttnParams, GSpec, LayerSpec, TFConfig
from talab.backends import ScalarBackend
from talab.config import N_CAP, REAL64_LAYERNORM_EPS, ROPE_BASE
from talab.errors import ConfigError, ShapeMismatch
from talab.ropeenc import ThetaSchedule, rotation_table, theta_schedule

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
Params = dict[str, Array]

CLASSES = 2
ATTN_WEIGHTS = ("w_q", "w_k1", "w_k2", "w_v1", "w_v2")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a probe model.

    Attributes:
        vocab: Number of token ids.
        d: Embedding dimension.
        n: Longest accepted sequence.
        layers: Kind of each attention layer, ``plain`` or ``rope``.
        g0: Block applied to the embeddings.
        g: Block applied after every attention layer.
        position_embedding: Add a learned per-position vector to the embeddings.
        rope_base: Base of the RoPE frequency schedule.
    """

    vocab: int
    d: int
    n: int
    layers: tuple[str, ...] = ("plain",)
    g0: str = "identity"
    g: str = "identity"
    position_embedding: bool = False
    rope_base: float = ROPE_BASE

    def __post_init__(self) -> None:
        """Validate dimensions and kinds."""
        if self.vocab < 1 or self.d < 1:
            raise ConfigError(f"vocab and d must be positive, got {self.vocab}, {self.d}")
        if not 1 <= self.n <= N_CAP:
            raise ConfigError(f"n must be in [1, {N_CAP}], got {self.n}")
        for kind in self.layers:
            if kind not in attncore.LAYER_KINDS:
                raise ConfigError(f"unknown layer kind {kind!r}")
        for kind in (self.g0, self.g):
            if kind not in attncore.G_KINDS:
                raise ConfigError(f"unknown block kind {kind!r}")
        if "rope" in self.layers and self.d % 2:
            raise ConfigError(f"rope layers need even d, got {self.d}")
        if self.d < 2 and "layernorm" in self.g0 + self.g:
            raise ConfigError("layer norm needs d >= 2")

    @property
    def m(self) -> int:
        """Number of attention layers."""
        return len(self.layers)

    @property
    def theta(self) -> ThetaSchedule | None:
        """RoPE schedule, when some layer needs one."""
        return theta_schedule(self.d, self.rope_base) if "rope" in self.layers else None

    def block_kind(self, index: int) -> str:
        """Kind of g_index."""
        return self.g0 if index == 0 else self.g

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready form."""
        return {
            "vocab": self.vocab,
            "d": self.d,
            "n": self.n,
            "layers": list(self.layers),
            "g0": self.g0,
            "g": self.g,
            "position_embedding": self.position_embedding,
            "rope_base": self.rope_base,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelSpec:
        """Inverse of ``to_dict``; missing keys take defaults."""
        try:
            return cls(
                vocab=int(data["vocab"]),
                d=int(data["d"]),
                n=int(data["n"]),
                layers=tuple(data.get("layers", ("plain",))),
                g0=str(data.get("g0", "identity")),
                g=str(data.get("g", "identity")),
                position_embedding=bool(data.get("position_embedding", False)),
                rope_base=float(data.get("rope_base", ROPE_BASE)),
            )
        except KeyError as error:
            raise ConfigError(f"model spec is missing {error}") from error


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes, in a fixed order."""
    d = spec.d
    shapes: dict[str, tuple[int, ...]] = {"embedding": (spec.vocab, d)}
    if spec.position_embedding:
        shapes["position"] = (spec.n, d)
    for index in range(spec.m + 1):
        if spec.block_kind(index).startswith("mlp"):
            shapes[f"g{index}.weight"] = (d, d)
            shapes[f"g{index}.bias"] = (d,)
    for layer in range(spec.m):
        for name in ATTN_WEIGHTS:
            shapes[f"layer{layer}.{name}"] = (d, d)
    shapes["readout"] = (d, CLASSES)
    shapes["readout_bias"] = (CLASSES,)
    return shapes


def init_params(spec: ModelSpec, seed: int) -> Params:
    """Weights uniform in [−1/√d, 1/√d], biases zero."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(spec.d)
    params: Params = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith("bias"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def check_params(spec: ModelSpec, params: Params) -> None:
    """Raise ShapeMismatch unless ``params`` fits ``spec`` exactly."""
    shapes = param_shapes(spec)
    if set(shapes) != set(params):
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        raise ShapeMismatch(f"parameter names differ: missing {missing}, unexpected {extra}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name} has shape {params[name].shape}, expected {shape}")


@lru_cache(maxsize=64)
def _rotations(n: int, sched: ThetaSchedule) -> Array:
    return rotation_table(n, sched)


@dataclass
class _Step:
    kind: str
    prefix: str
    saved: dict[str, Array]


@dataclass
class ForwardCache:
    """Intermediates kept by ``classify_forward`` for ``backward``."""

    tokens: tuple[int, ...]
    hidden: Array
    logits: Array
    steps: list[_Step] = field(default_factory=list)


def _attn_forward(x: Array, prefix: str, kind: str, params: Params, sched: ThetaSchedule | None) -> tuple[Array, _Step]:
    n, d = x.shape
    q, k1, k2, v1, v2 = (x @ params[f"{prefix}.{name}"] for name in ATTN_WEIGHTS)
    saved = {"x": x, "q": q, "k1": k1, "k2": k2, "v1": v1, "v2": v2}
    if kind == "rope":
        assert sched is not None
        table = _rotations(n, sched)
        rk1 = np.einsum("abic,bc->abi", table, k1)
        rk2 = np.einsum("aeic,ec->aei", table, k2)
        logits = np.einsum("ai,abi,aei->abe", q, rk1, rk2) / d
        saved.update(table=table, rk1=rk1, rk2=rk2)
    else:
        logits = np.einsum("ac,bc,ec->abe", q, k1, k2) / d
    scores = np.exp(logits - logits.max(axis=(1, 2), keepdims=True))
    probs = scores / scores.sum(axis=(1, 2), keepdims=True)
    saved["probs"] = probs
    out = np.einsum("abe,bc,ec->ac", probs, v1, v2)
    return out, _Step(kind, prefix, saved)


def _attn_backward(dout: Array, step: _Step, params: Params, grads: Params) -> Array:
    s = step.saved
    x, q, k1, k2, v1, v2, probs = (s[key] for key in ("x", "q", "k1", "k2", "v1", "v2", "probs"))
    d = x.shape[1]
    dprobs = np.einsum("ac,bc,ec->abe", dout, v1, v2)
    dv1 = np.einsum("ac,abe,ec->bc", dout, probs, v2)
    dv2 = np.einsum("ac,abe,bc->ec", dout, probs, v1)
    dlogits = probs * (dprobs - np.sum(probs * dprobs, axis=(1, 2), keepdims=True)) / d
    if step.kind == "rope":
        rk1, rk2, table = s["rk1"], s["rk2"], s["table"]
        dq = np.einsum("abe,abi,aei->ai", dlogits, rk1, rk2)
        drk1 = np.einsum("abe,ai,aei->abi", dlogits, q, rk2)
        drk2 = np.einsum("abe,ai,abi->aei", dlogits, q, rk1)
        dk1 = np.einsum("abi,abic->bc", drk1, table)
        dk2 = np.einsum("aei,aeic->ec", drk2, table)
    else:
        dq = np.einsum("abe,bc,ec->ac", dlogits, k1, k2)
        dk1 = np.einsum("abe,ac,ec->bc", dlogits, q, k2)
        dk2 = np.einsum("abe,ac,bc->ec", dlogits, q, k1)
    dx = np.zeros_like(x)
    for name, dproj in zip(ATTN_WEIGHTS, (dq, dk1, dk2, dv1, dv2), strict=True):
        key = f"{step.prefix}.{name}"
        grads[key] += x.T @ dproj
        dx += dproj @ params[key].T
    return dx


def _block_forward(x: Array, index: int, kind: str, params: Params, steps: list[_Step]) -> Array:
    prefix = f"g{index}"
    if kind.startswith("mlp"):
        steps.append(_Step("mlp", prefix, {"x": x}))
        x = x @ params[f"{prefix}.weight"].T + params[f"{prefix}.bias"]
    if kind.endswith("layernorm"):
        centered = x - x.mean(axis=1, keepdims=True)
        sigma = np.sqrt((centered**2).mean(axis=1, keepdims=True) + REAL64_LAYERNORM_EPS)
        x = centered / sigma
        steps.append(_Step("layernorm", prefix, {"y": x, "sigma": sigma}))
    return x


def _block_backward(dy: Array, step: _Step, params: Params, grads: Params) -> Array:
    if step.kind == "mlp":
        x = step.saved["x"]
        grads[f"{step.prefix}.weight"] += dy.T @ x
        grads[f"{step.prefix}.bias"] += dy.sum(axis=0)
        return dy @ params[f"{step.prefix}.weight"]
    y, sigma = step.saved["y"], step.saved["sigma"]
    return (
        dy - dy.mean(axis=1, keepdims=True) - y * (dy * y).mean(axis=1, keepdims=True)
    ) / sigma


def _check_tokens(tokens: Sequence[int], spec: ModelSpec) -> tuple[int, ...]:
    ids = tuple(int(t) for t in tokens)
    if not ids:
        raise ShapeMismatch("empty token sequence")
    if len(ids) > spec.n:
        raise ShapeMismatch(f"{len(ids)} tokens for a model with n = {spec.n}")
    if any(not 0 <= t < spec.vocab for t in ids):
        raise ShapeMismatch(f"token id outside [0, {spec.vocab})")
    return ids


def embed(tokens: Sequence[int], spec: ModelSpec, params: Params) -> Array:
    """Embedding rows, plus position vectors when enabled."""
    ids = _check_tokens(tokens, spec)
    x = params["embedding"][list(ids)]
    if spec.position_embedding:
        x = x + params["position"][: len(ids)]
    return x


def classify_forward(tokens: Sequence[int], spec: ModelSpec, params: Params) -> tuple[Array, ForwardCache]:
    """Two class logits for one sequence, with the cache for ``backward``.

    Raises:
        ShapeMismatch: For an empty, too long or out-of-vocabulary sequence
    """
    ids = _check_tokens(tokens, spec)
    sched = spec.theta
    steps: list[_Step] = []
    x = _block_forward(embed(ids, spec, params), 0, spec.g0, params, steps)
    for layer, kind in enumerate(spec.layers):
        x, step = _attn_forward(x, f"layer{layer}", kind, params, sched)
        steps.append(step)
        x = _block_forward(x, layer + 1, spec.g, params, steps)
    logits = x[-1] @ params["readout"] + params["readout_bias"]
    return logits, ForwardCache(ids, x, logits, steps)


def cross_entropy(logits: Array, label: int) -> float:
    """−log softmax(logits)[label]."""
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def softmax(logits: Array) -> Array:
    """Probabilities from logits."""
    scores = np.exp(logits - logits.max())
    return scores / scores.sum()


def backward(cache: ForwardCache, label: int, spec: ModelSpec, params: Params) -> Params:
    """Gradients of the cross-entropy loss for every parameter."""
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    dlogits = softmax(cache.logits)
    dlogits[label] -= 1.0
    grads["readout"] += np.outer(cache.hidden[-1], dlogits)
    grads["readout_bias"] += dlogits
    dx = np.zeros_like(cache.hidden)
    dx[-1] = params["readout"] @ dlogits
    for step in reversed(cache.steps):
        if step.kind in attncore.LAYER_KINDS:
            dx = _attn_backward(dx, step, params, grads)
        else:
            dx = _block_backward(dx, step, params, grads)
    np.add.at(grads["embedding"], list(cache.tokens), dx)
    if spec.position_embedding:
        grads["position"][: len(cache.tokens)] += dx
    return grads


def loss(tokens: Sequence[int], label: int, spec: ModelSpec, params: Params) -> float:
    """Cross-entropy of one labeled sequence."""
    logits, _ = classify_forward(tokens, spec, params)
    return cross_entropy(logits, label)


def predict(tokens: Sequence[int], spec: ModelSpec, params: Params) -> int:
    """Argmax class, ties to class 0."""
    logits, _ = classify_forward(tokens, spec, params)
    return int(np.argmax(logits))


# Backend inference through attncore.


def _matrix(values: Array, backend: ScalarBackend[Any]) -> tensora.Matrix[Any]:
    return tensora.from_values(np.atleast_2d(values).tolist(), backend)


def _gspec(index: int, kind: str, params: Params, backend: ScalarBackend[Any]) -> GSpec:
    if not kind.startswith("mlp"):
        return GSpec(kind)
    bias = tuple(backend.const(float(v)) for v in params[f"g{index}.bias"])
    return GSpec(kind, _matrix(params[f"g{index}.weight"], backend), bias)


def to_tf_config(spec: ModelSpec, params: Params, backend: ScalarBackend[Any]) -> TFConfig:
    """The model body as an ``attncore`` config with weights embedded in ``backend``."""
    layers = tuple(
        LayerSpec(
            kind,
            AttnParams(*(_matrix(params[f"layer{layer}.{name}"], backend) for name in ATTN_WEIGHTS)),
            _gspec(layer + 1, spec.g, params, backend),
        )
        for layer, kind in enumerate(spec.layers)
    )
    return TFConfig(
        n=spec.n,
        d=spec.d,
        layers=layers,
        g0=_gspec(0, spec.g0, params, backend),
        theta=spec.theta,
        backend=backend.name,
    )


def predict_backend(
    tokens: Sequence[int],
    spec: ModelSpec,
    params: Params,
    backend: ScalarBackend[Any],
    cfg: TFConfig | None = None,
) -> int:
    """Argmax class computed entirely in ``backend`` arithmetic.

    Raises:
        RangeError: If an attention logit leaves the exp domain
    """
    config = cfg if cfg is not None else to_tf_config(spec, params, backend)
    x = _matrix(embed(tokens, spec, params), backend)
    hidden = attncore.tf_forward(x, config, backend)
    last = tensora.Matrix(1, spec.d, hidden.row(hidden.rows - 1))
    readout = _matrix(params["readout"], backend)
    bias = [backend.const(float(v)) for v in params["readout_bias"]]
    logits = tensora.add_row_vector(tensora.matmul(last, readout, backend), bias, backend).row(0)
    return 1 if backend.compare(logits[1], logits[0]) > 0 else 0
