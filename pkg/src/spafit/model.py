"""Transformer encoder over a named parameter store.

Parameters live in a flat ``ParamStore`` keyed by dotted paths mirroring the
classic BERT layout (``encoder.layer.{i}.attention.self.query.weight`` and
friends, with 0-based layer indices in paths). Each encoder layer runs the
sub-layer chain: self-attention -> dropout -> dense + residual + LayerNorm ->
dropout -> GELU feed-forward -> dense + residual + LayerNorm -> dropout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import InputError, ShapeError
from .tensor import Tensor

LAYER_NORM_EPS = 1e-12
INIT_STD = 0.02
ATTENTION_MASK_BIAS = -1e9


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions plus the low-rank adapter hyperparameters."""

    num_layers: int
    hidden_size: int
    num_heads: int
    ffn_size: int
    vocab_size: int
    max_positions: int
    type_vocab_size: int = 2
    num_labels: int = 2
    lora_rank: int = 8
    lora_alpha: int = 16
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError(f"num_layers must be >= 0, got {self.num_layers}")
        for name in ("hidden_size", "num_heads", "ffn_size", "vocab_size",
                     "max_positions", "type_vocab_size", "num_labels",
                     "lora_rank", "lora_alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.hidden_size % self.num_heads != 0:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")
        if self.lora_rank > min(self.hidden_size, self.ffn_size):
            raise ValueError(
                f"lora_rank {self.lora_rank} exceeds min(hidden_size, ffn_size) "
                f"= {min(self.hidden_size, self.ffn_size)}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads


class ParamStatus(enum.Enum):
    """Fine-tune status of one named parameter.

    LORA_AUGMENTED freezes the base matrix itself; its attached low-rank
    factors carry the trainable degrees of freedom. BIAS_TUNABLE is restricted
    to 1-D bias vectors; TUNABLE trains the tensor directly regardless of
    shape (task head, pooler, and everything under full fine-tuning).
    """

    FROZEN = "frozen"
    BIAS_TUNABLE = "bias_tunable"
    LORA_AUGMENTED = "lora_augmented"
    TUNABLE = "tunable"


LAYER_SUBPATHS: tuple[tuple[str, str], ...] = (
    # (sub-path, shape kind); shape kinds resolved against the config
    ("attention.self.query.weight", "dxd"),
    ("attention.self.query.bias", "d"),
    ("attention.self.key.weight", "dxd"),
    ("attention.self.key.bias", "d"),
    ("attention.self.value.weight", "dxd"),
    ("attention.self.value.bias", "d"),
    ("attention.output.dense.weight", "dxd"),
    ("attention.output.dense.bias", "d"),
    ("attention.output.LayerNorm.weight", "d"),
    ("attention.output.LayerNorm.bias", "d"),
    ("intermediate.dense.weight", "fxd"),
    ("intermediate.dense.bias", "f"),
    ("output.dense.weight", "dxf"),
    ("output.dense.bias", "d"),
    ("output.LayerNorm.weight", "d"),
    ("output.LayerNorm.bias", "d"),
)

HEAD_PATHS = ("pooler.dense.weight", "pooler.dense.bias",
              "classifier.weight", "classifier.bias")


def param_shapes(config: ModelConfig, include_head: bool = True) -> dict[str, tuple[int, ...]]:
    """Ordered map of every canonical parameter path to its shape."""
    d, f = config.hidden_size, config.ffn_size
    kinds = {"dxd": (d, d), "fxd": (f, d), "dxf": (d, f), "d": (d,), "f": (f,)}
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.word_embeddings.weight": (config.vocab_size, d),
        "embeddings.position_embeddings.weight": (config.max_positions, d),
        "embeddings.token_type_embeddings.weight": (config.type_vocab_size, d),
        "embeddings.LayerNorm.weight": (d,),
        "embeddings.LayerNorm.bias": (d,),
    }
    for i in range(config.num_layers):
        for sub, kind in LAYER_SUBPATHS:
            shapes[f"encoder.layer.{i}.{sub}"] = kinds[kind]
    if include_head:
        shapes["pooler.dense.weight"] = (d, d)
        shapes["pooler.dense.bias"] = (d,)
        shapes["classifier.weight"] = (config.num_labels, d)
        shapes["classifier.bias"] = (config.num_labels,)
    return shapes


def total_parameter_count(config: ModelConfig, include_task_head: bool = True) -> int:
    """Model size from shapes alone, without materializing any tensors.

    The task head is the classifier alone; the pooler always counts as part
    of the base model.
    """
    return sum(int(np.prod(shape)) for path, shape in param_shapes(config).items()
               if include_task_head or not path.startswith("classifier."))


def layer_number(path: str) -> int | None:
    """1-based encoder layer number of a path, or None outside the stack."""
    if not path.startswith("encoder.layer."):
        return None
    return int(path.split(".")[2]) + 1


def is_head_path(path: str) -> bool:
    return path.startswith(("pooler.", "classifier."))


@dataclass
class LoraPair:
    """Low-rank factors (B, A) attached to one frozen 2-D weight.

    The effective weight delta is ``(alpha / rank) * B @ A``; B starts at
    zero so a freshly attached pair leaves the forward pass unchanged.
    """

    down: Tensor  # A, [rank, in_features]
    up: Tensor    # B, [out_features, rank]
    rank: int
    alpha: int
    target_path: str

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


class ParamStore:
    """Named parameters, their fine-tune statuses, and attached LoRA pairs."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.status: dict[str, ParamStatus] = {}
        self.lora: dict[str, LoraPair] = {}

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def paths(self) -> list[str]:
        return list(self.params)

    def total_parameters(self, include_task_head: bool = True) -> int:
        """Sum of base tensor sizes (LoRA factors not included).

        The task head is the classifier alone; the pooler always counts as
        part of the base model.
        """
        return sum(t.data.size for p, t in self.params.items()
                   if include_task_head or not p.startswith("classifier."))

    def trainable_parameters(self) -> dict[str, Tensor]:
        """Tensors the optimizer may move, in deterministic path order."""
        out: dict[str, Tensor] = {}
        for path, t in self.params.items():
            if self.status[path] in (ParamStatus.TUNABLE, ParamStatus.BIAS_TUNABLE):
                out[path] = t
        for target, pair in self.lora.items():
            out[f"{target}.lora_A"] = pair.down
            out[f"{target}.lora_B"] = pair.up
        return out

    def clone(self) -> "ParamStore":
        dup = ParamStore(self.config)
        for path, t in self.params.items():
            dup.params[path] = Tensor(t.data.copy(), requires_grad=t.requires_grad)
        dup.status = dict(self.status)
        for target, pair in self.lora.items():
            dup.lora[target] = LoraPair(
                down=Tensor(pair.down.data.copy(), requires_grad=pair.down.requires_grad),
                up=Tensor(pair.up.data.copy(), requires_grad=pair.up.requires_grad),
                rank=pair.rank, alpha=pair.alpha, target_path=target)
        return dup


def truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    """Normal draws with |z| > 2 resampled, then scaled by ``std``."""
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return x * std


def build_model(config: ModelConfig, seed: int) -> ParamStore:
    """Materialize a fresh store: truncated-normal weights (std 0.02),
    LayerNorm weights 1, all biases 0. Same seed, same bits."""
    rng = np.random.default_rng(seed)
    store = ParamStore(config)
    for path, shape in param_shapes(config).items():
        if path.endswith("LayerNorm.weight"):
            data = np.ones(shape)
        elif path.endswith(".bias"):
            data = np.zeros(shape)
        else:
            data = truncated_normal(rng, shape, INIT_STD)
        store.params[path] = Tensor(data, requires_grad=True)
        store.status[path] = ParamStatus.TUNABLE
    return store


# -- forward pass ------------------------------------------------------------


def _linear(store: ParamStore, prefix: str, x: Tensor) -> Tensor:
    """x @ W^T + b, adding the scaled low-rank path when one is attached."""
    w = store.params[f"{prefix}.weight"]
    b = store.params[f"{prefix}.bias"]
    y = T.matmul(x, T.transpose(w)) + b
    pair = store.lora.get(f"{prefix}.weight")
    if pair is not None:
        y = y + T.matmul(T.matmul(x, T.transpose(pair.down)), T.transpose(pair.up)) * pair.scaling
    return y


def _self_attention(store: ParamStore, layer: int, x: Tensor,
                    attention_mask: Tensor | None) -> Tensor:
    cfg = store.config
    base = f"encoder.layer.{layer}.attention.self"
    q = _linear(store, f"{base}.query", x)
    k = _linear(store, f"{base}.key", x)
    v = _linear(store, f"{base}.value", x)

    batch, seq, _ = x.shape
    heads, hd = cfg.num_heads, cfg.head_size

    def split_heads(t: Tensor) -> Tensor:
        return T.transpose(T.reshape(t, (batch, seq, heads, hd)), (0, 2, 1, 3))

    q, k, v = split_heads(q), split_heads(k), split_heads(v)
    scores = T.matmul(q, T.transpose(k)) * (1.0 / math.sqrt(hd))
    if attention_mask is not None:
        scores = scores + attention_mask
    probs = T.softmax(scores)
    context = T.matmul(probs, v)
    return T.reshape(T.transpose(context, (0, 2, 1, 3)), (batch, seq, cfg.hidden_size))


def encoder_layer_forward(store: ParamStore, layer: int, x: Tensor, mode: str = "eval",
                          rng: np.random.Generator | None = None,
                          attention_mask: Tensor | None = None) -> Tensor:
    """One encoder layer; input and output are [batch, seq, hidden]."""
    cfg = store.config
    if x.data.ndim != 3 or x.data.shape[-1] != cfg.hidden_size:
        raise ShapeError(f"encoder layer expects [batch, seq, {cfg.hidden_size}], "
                         f"got {x.data.shape}")
    p = cfg.dropout_p
    base = f"encoder.layer.{layer}"

    attn = _self_attention(store, layer, x, attention_mask)
    attn = T.dropout(attn, p, mode, rng)
    attn = _linear(store, f"{base}.attention.output.dense", attn)
    x = T.layer_norm(attn + x,
                     store.params[f"{base}.attention.output.LayerNorm.weight"],
                     store.params[f"{base}.attention.output.LayerNorm.bias"],
                     LAYER_NORM_EPS)
    x = T.dropout(x, p, mode, rng)

    hidden = T.gelu(_linear(store, f"{base}.intermediate.dense", x))
    out = _linear(store, f"{base}.output.dense", hidden)
    x = T.layer_norm(out + x,
                     store.params[f"{base}.output.LayerNorm.weight"],
                     store.params[f"{base}.output.LayerNorm.bias"],
                     LAYER_NORM_EPS)
    return T.dropout(x, p, mode, rng)


def make_attention_mask(pad_mask: np.ndarray) -> Tensor:
    """Turn a [batch, seq] 1/0 keep-mask into an additive score mask."""
    bias = (1.0 - np.asarray(pad_mask, dtype=np.float64)) * ATTENTION_MASK_BIAS
    return Tensor(bias[:, None, None, :])


def model_forward(store: ParamStore, token_ids: np.ndarray, type_ids: np.ndarray,
                  mode: str = "eval", rng: np.random.Generator | None = None,
                  pad_mask: np.ndarray | None = None) -> Tensor:
    """Embeddings -> encoder stack -> pooled first token -> task head logits.

    ``token_ids`` and ``type_ids`` are [batch, seq] int arrays; the returned
    logits are [batch, num_labels]. ``pad_mask`` (1 = keep) masks attention
    keys at padded positions.
    """
    cfg = store.config
    token_ids = np.asarray(token_ids)
    type_ids = np.asarray(type_ids)
    if token_ids.ndim != 2:
        raise InputError(f"token_ids must be [batch, seq], got shape {token_ids.shape}")
    if type_ids.shape != token_ids.shape:
        raise InputError(f"type_ids shape {type_ids.shape} does not match "
                         f"token_ids {token_ids.shape}")
    batch, seq = token_ids.shape
    if seq > cfg.max_positions:
        raise InputError(f"sequence length {seq} exceeds max_positions {cfg.max_positions}")
    if token_ids.min() < 0 or token_ids.max() >= cfg.vocab_size:
        raise InputError(f"token id out of range [0, {cfg.vocab_size}): "
                         f"saw {int(token_ids.min())}..{int(token_ids.max())}")
    if type_ids.min() < 0 or type_ids.max() >= cfg.type_vocab_size:
        raise InputError(f"type id out of range [0, {cfg.type_vocab_size})")

    words = T.embedding(store.params["embeddings.word_embeddings.weight"], token_ids)
    positions = T.embedding(store.params["embeddings.position_embeddings.weight"],
                            np.broadcast_to(np.arange(seq), (batch, seq)))
    types = T.embedding(store.params["embeddings.token_type_embeddings.weight"], type_ids)
    x = T.layer_norm(words + positions + types,
                     store.params["embeddings.LayerNorm.weight"],
                     store.params["embeddings.LayerNorm.bias"],
                     LAYER_NORM_EPS)
    x = T.dropout(x, cfg.dropout_p, mode, rng)

    mask = make_attention_mask(pad_mask) if pad_mask is not None else None
    for layer in range(cfg.num_layers):
        x = encoder_layer_forward(store, layer, x, mode, rng, mask)

    pooled = T.tanh(_linear(store, "pooler.dense", T.first_token(x)))
    return _linear(store, "classifier", pooled)
