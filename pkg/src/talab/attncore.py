"""Tensor attention layers and the blocks between them.

Plain tensor attention scores every query against every pair of keys:
A = exp(Q·(K1 ⊘ K2)ᵀ / d), an n×n² matrix, and the layer output is
D⁻¹·A·(V1 ⊘ V2) with D the diagonal of row sums of A. The RoPE variant
rotates each key of the pair by its offset to the query before scoring.

Column index of A for the key pair (j2, j3) is j2 + j3·n. Each function takes
the scalar backend explicitly; stages opened here give the depth accounting
its schedule and cost nothing on plain backends.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, TypeVar

from talab import tensora
from talab.backends import ScalarBackend
from talab.config import EXP_DOMAIN, N_CAP
from talab.errors import BadDimension, ConfigError, DegenerateRow, RangeError, ShapeMismatch
from talab.ropeenc import RotationCache, ThetaSchedule
from talab.tensora import Matrix

logger = logging.getLogger(__name__)

S = TypeVar("S")

LAYER_KINDS = ("plain", "rope")
G_KINDS = ("identity", "mlp", "layernorm", "mlp-then-layernorm")
ROPE_N_CAP = 32


@dataclass(frozen=True)
class AttnParams:
    """Query, key-pair and value-pair projections, all d×d."""

    w_q: Matrix[Any]
    w_k1: Matrix[Any]
    w_k2: Matrix[Any]
    w_v1: Matrix[Any]
    w_v2: Matrix[Any]

    def __post_init__(self) -> None:
        """All five weights must be square with one shared d."""
        shapes = {w.shape for w in self.matrices()}
        if len(shapes) != 1:
            raise ShapeMismatch(f"attention weights disagree in shape: {sorted(shapes)}")
        rows, cols = shapes.pop()
        if rows != cols:
            raise ShapeMismatch(f"attention weights must be square, got {rows}x{cols}")

    @property
    def d(self) -> int:
        """Embedding dimension."""
        return self.w_q.rows

    def matrices(self) -> tuple[Matrix[Any], ...]:
        """Weights in declaration order."""
        return (self.w_q, self.w_k1, self.w_k2, self.w_v1, self.w_v2)


@dataclass(frozen=True)
class GSpec:
    """A non-attention block: identity, MLP, layer norm, or MLP then layer norm."""

    kind: str = "identity"
    weight: Matrix[Any] | None = None
    bias: tuple[Any, ...] | None = None

    def __post_init__(self) -> None:
        """MLP kinds need a square weight and a matching bias."""
        if self.kind not in G_KINDS:
            raise ConfigError(f"unknown block kind {self.kind!r}; expected one of {G_KINDS}")
        if self.kind.startswith("mlp"):
            if self.weight is None or self.bias is None:
                raise ConfigError(f"{self.kind} block needs weight and bias")
            if self.weight.rows != self.weight.cols or len(self.bias) != self.weight.cols:
                raise ShapeMismatch(
                    f"MLP weight {self.weight.shape} with bias of length {len(self.bias)}"
                )


@dataclass(frozen=True)
class LayerSpec:
    """One attention layer followed by its block g."""

    kind: str
    attn: AttnParams
    g: GSpec = field(default_factory=GSpec)

    def __post_init__(self) -> None:
        """Validate the layer kind and dimensions."""
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")
        if self.kind == "rope" and self.attn.d % 2:
            raise BadDimension(f"rope layers need even d, got {self.attn.d}")
        if self.g.weight is not None and self.g.weight.rows != self.attn.d:
            raise ShapeMismatch(f"block weight {self.g.weight.shape} for d={self.attn.d}")


@dataclass(frozen=True)
class TFConfig:
    """An m-layer tensor attention transformer g_m ∘ Attn_m ∘ … ∘ g_1 ∘ Attn_1 ∘ g_0.

    ``n`` is the longest sequence the model accepts.
    """

    n: int
    d: int
    layers: tuple[LayerSpec, ...] = ()
    g0: GSpec = field(default_factory=GSpec)
    theta: ThetaSchedule | None = None
    backend: str = "real64"
    precision: int | None = None

    def __post_init__(self) -> None:
        """Check shape caps and that RoPE layers have a schedule."""
        if not 1 <= self.n <= N_CAP:
            raise ConfigError(f"sequence length must be in [1, {N_CAP}], got {self.n}")
        if self.d < 1:
            raise ConfigError(f"embedding dimension must be positive, got {self.d}")
        for index, layer in enumerate(self.layers):
            if layer.attn.d != self.d:
                raise ShapeMismatch(f"layer {index} has d={layer.attn.d}, model d={self.d}")
            if layer.kind == "rope" and (self.theta is None or self.theta.d != self.d):
                raise ConfigError(f"layer {index} is rope but no schedule for d={self.d}")

    @property
    def m(self) -> int:
        """Number of attention layers."""
        return len(self.layers)


def _check_input(x: Matrix[Any], d: int, cap: int = N_CAP) -> None:
    if x.cols != d:
        raise ShapeMismatch(f"input has {x.cols} columns, weights expect {d}")
    if x.rows > cap:
        raise ShapeMismatch(f"sequence length {x.rows} exceeds {cap}")


def _check_logits(logits: Matrix[S], backend: ScalarBackend[S]) -> None:
    for value in logits.entries:
        logit = backend.to_float(value)
        if abs(logit) > EXP_DOMAIN:
            raise RangeError(f"attention logit {logit:.3f} outside [-{EXP_DOMAIN}, {EXP_DOMAIN}]")


def _exponentiate(logits: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    _check_logits(logits, backend)
    with backend.stage("exp"):
        return logits.map(backend.exp)


def _plain_scores(q: Matrix[S], k: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    scale = backend.const(q.cols)
    with backend.stage("logits"):
        logits = tensora.scale(tensora.matmul(q, k.transpose(), backend), scale, backend)
    return _exponentiate(logits, backend)


def attn_matrix_plain(x: Matrix[S], params: AttnParams, backend: ScalarBackend[S]) -> Matrix[S]:
    """A = exp(Q·Kᵀ/d) with Q = X·W_Q and K = (X·W_K1) ⊘ (X·W_K2).

    Raises:
        ShapeMismatch: If X does not have d columns or more than 64 rows
        RangeError: If a logit leaves the exp domain
    """
    _check_input(x, params.d)
    with backend.parallel():
        q = tensora.matmul(x, params.w_q, backend)
        k = tensora.fused_project(x, x, params.w_k1, params.w_k2, backend)
    return _plain_scores(q, k, backend)


def _positions(n: int, positions: Sequence[int] | None) -> tuple[int, ...]:
    if positions is None:
        return tuple(range(n))
    if len(positions) != n:
        raise ShapeMismatch(f"{len(positions)} positions for {n} tokens")
    return tuple(int(position) for position in positions)


def attn_matrix_rope(
    x: Matrix[S],
    params: AttnParams,
    sched: ThetaSchedule,
    backend: ScalarBackend[S],
    positions: Sequence[int] | None = None,
) -> Matrix[S]:
    """RoPE tensor attention matrix.

    Entry (j1, j2 + j3·n) is exp(Q[j1]·(R_{j1−j2} ⊖ R_{j1−j3})·K[j2 + j3·n]ᵀ / d)
    with K = K1 ⊗ K2. Only position differences enter, so shifting every
    position by the same amount leaves A unchanged.

    Raises:
        BadDimension: If d is odd or does not match the schedule
        ShapeMismatch: If X does not have d columns or more than 32 rows
        RangeError: If a logit leaves the exp domain
    """
    d, n = params.d, x.rows
    if d % 2 or sched.d != d:
        raise BadDimension(f"rope needs even d matching the schedule, got d={d}, schedule d={sched.d}")
    _check_input(x, d, ROPE_N_CAP)
    pos = _positions(n, positions)

    q = tensora.matmul(x, params.w_q, backend)
    with backend.parallel():
        k1 = tensora.matmul(x, params.w_k1, backend)
        k2 = tensora.matmul(x, params.w_k2, backend)

    offsets = sorted({a - b for a in pos for b in pos})
    rotations = RotationCache(sched, backend)
    with backend.stage("rotation"):
        rotations.prefetch(offsets)
    pair_rotations: dict[tuple[int, int], Matrix[S]] = {}
    with backend.stage("row_kron"):
        for j1 in range(n):
            for j2 in range(n):
                for j3 in range(n):
                    key = (pos[j1] - pos[j2], pos[j1] - pos[j3])
                    if key not in pair_rotations:
                        pair_rotations[key] = tensora.row_kron(
                            rotations[key[0]], rotations[key[1]], backend
                        )
    k = tensora.kron(k1, k2, backend)

    scale = backend.const(d)
    query_rotated: dict[tuple[int, int, int], Matrix[S]] = {}

    def logit(j1: int, col: int) -> S:
        j2, j3 = col % n, col // n
        key = (j1, pos[j1] - pos[j2], pos[j1] - pos[j3])
        if key not in query_rotated:
            query_rotated[key] = tensora.matmul(
                Matrix(1, d, q.row(j1)), pair_rotations[key[1:]], backend
            )
        rotated = query_rotated[key].row(0)
        dot = backend.iter_add(
            [backend.mul(a, b) for a, b in zip(rotated, k.row(col), strict=True)]
        )
        return backend.div(dot, scale)

    with backend.stage("logits"):
        logits = Matrix.build(n, n * n, logit)
    return _exponentiate(logits, backend)


def row_sums(a: Matrix[S], backend: ScalarBackend[S]) -> tuple[S, ...]:
    """Diagonal of D = diag(A·1).

    Raises:
        DegenerateRow: If a row sums to zero
    """
    with backend.stage("row_sums"):
        sums = tuple(backend.iter_add(a.row(i)) for i in range(a.rows))
    for index, value in enumerate(sums):
        if backend.is_zero(value):
            raise DegenerateRow(f"attention row {index} sums to zero")
    return sums


def attention_weights(a: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Row-normalized D⁻¹·A."""
    return tensora.diag_inverse_product(row_sums(a, backend), a, backend)


def attn_layer(
    x: Matrix[S],
    spec: LayerSpec,
    backend: ScalarBackend[S],
    sched: ThetaSchedule | None = None,
    positions: Sequence[int] | None = None,
) -> Matrix[S]:
    """D⁻¹·A·V with V = (X·W_V1) ⊘ (X·W_V2).

    Each output row is a convex combination of the rows of V.

    Raises:
        ConfigError: If a rope layer has no schedule
        DegenerateRow: If an attention row sums to zero
    """
    params = spec.attn
    if spec.kind == "plain":
        _check_input(x, params.d)
        with backend.parallel():
            q = tensora.matmul(x, params.w_q, backend)
            k = tensora.fused_project(x, x, params.w_k1, params.w_k2, backend)
            v = tensora.fused_project(x, x, params.w_v1, params.w_v2, backend)
        a = _plain_scores(q, k, backend)
        d_diag = row_sums(a, backend)
    else:
        if sched is None:
            raise ConfigError("rope layer needs a theta schedule")
        a = attn_matrix_rope(x, params, sched, backend, positions)
        d_diag = row_sums(a, backend)
        v = tensora.fused_project(x, x, params.w_v1, params.w_v2, backend)
    weighted = tensora.matmul(a, v, backend)
    return tensora.diag_inverse_product(d_diag, weighted, backend)


def layer_norm(x: Matrix[S], backend: ScalarBackend[S], eps: S | None = None) -> Matrix[S]:
    """Per row: (x − μ) / √(σ² + ε).

    Raises:
        BadDimension: If d < 2
    """
    d = x.cols
    if d < 2:
        raise BadDimension(f"layer norm needs d >= 2, got {d}")
    epsilon = backend.layernorm_eps() if eps is None else eps
    width = backend.const(d)
    with backend.stage("mean"):
        means = [backend.div(backend.iter_add(x.row(i)), width) for i in range(x.rows)]
    with backend.stage("variance"):
        centered = Matrix.build(x.rows, d, lambda i, j: backend.sub(x[i, j], means[i]))
        variances = [
            backend.div(backend.iter_add([backend.mul(c, c) for c in centered.row(i)]), width)
            for i in range(x.rows)
        ]
    with backend.stage("normalize"):
        scales = [backend.sqrt(backend.add(v, epsilon)) for v in variances]
        return Matrix.build(x.rows, d, lambda i, j: backend.div(centered[i, j], scales[i]))


def mlp(x: Matrix[S], weight: Matrix[S], bias: Sequence[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Row i ↦ W·X[i] + b.

    Raises:
        ShapeMismatch: If W is not d×d or b is not length d
    """
    if weight.cols != x.cols:
        raise ShapeMismatch(f"MLP weight {weight.shape} for input {x.shape}")
    with backend.stage("mlp"):
        projected = tensora.matmul(x, weight.transpose(), backend)
        return tensora.add_row_vector(projected, bias, backend)


def apply_g(x: Matrix[S], g: GSpec, backend: ScalarBackend[S], *, opaque: bool = False) -> Matrix[S]:
    """Apply a non-attention block.

    With ``opaque`` the whole block is one stage of depth d_g.
    """
    if opaque and g.kind != "identity":
        with backend.stage(f"g:{g.kind}", opaque=True):
            return apply_g(x, g, backend)
    if g.kind == "identity":
        return x
    out = x
    if g.kind.startswith("mlp"):
        assert g.weight is not None and g.bias is not None
        out = mlp(out, g.weight, g.bias, backend)
    if g.kind.endswith("layernorm"):
        out = layer_norm(out, backend)
    return out


def tf_forward(
    x: Matrix[S],
    cfg: TFConfig,
    backend: ScalarBackend[S],
    *,
    opaque_g: bool = False,
) -> Matrix[S]:
    """g_m(Attn_m(… g_1(Attn_1(g_0(X))) …)).

    Raises:
        ShapeMismatch: If X is not n×d for the config
    """
    if x.cols != cfg.d or x.rows > cfg.n:
        raise ShapeMismatch(f"input {x.shape} for a model with n <= {cfg.n}, d = {cfg.d}")
    out = apply_g(x, cfg.g0, backend, opaque=opaque_g)
    for index, layer in enumerate(cfg.layers):
        out = attn_layer(out, layer, backend, cfg.theta)
        out = apply_g(out, layer.g, backend, opaque=opaque_g)
        logger.debug("layer %d done, output %s", index, out.shape)
    return out
