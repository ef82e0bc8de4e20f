"""Model assembly: three feature branches, concatenation, block stack, softmax.

Wiring: the embedding matrix and the character one-hot sequence each run
through their own recurrent encoder; the hate multi-hot runs through the
first linear/batch-norm/ReLU block. The three one-dimensional branch
vectors are concatenated and pushed through the remaining three blocks and
a final linear layer into two-class probabilities. Disabled features drop
out of the concatenation and their parameters are never created.
"""

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .evalkit import LABELS
from .features import (
    CHAR_DIM,
    DEFAULT_CHAR_CAP,
    DEFAULT_TOKEN_CAP,
    FeatureBundle,
    build_bundle,
)
from .preprocess import normalize_text, tokenize

RNN_KINDS = ("gru", "lstm", "bigru")
FEATURE_NAMES = ("EMB", "CH", "HW")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 768
    char_alphabet: int = CHAR_DIM
    lexicon_dim: int = 1493
    rnn_kind: str = "gru"
    rnn_size: int = 100
    block_sizes: tuple = (512, 512, 256, 128)
    classes: int = 2
    token_cap: int = DEFAULT_TOKEN_CAP
    char_cap: int = DEFAULT_CHAR_CAP
    seed: int = 0
    features: tuple = FEATURE_NAMES

    def validate(self) -> None:
        if self.rnn_kind not in RNN_KINDS:
            raise ValueError(f"rnn_kind must be one of {RNN_KINDS}, got {self.rnn_kind!r}")
        if len(self.block_sizes) != 4:
            raise ValueError("block_sizes must list exactly four sizes")
        sizes = (self.embed_dim, self.lexicon_dim, self.rnn_size, self.classes,
                 self.token_cap, self.char_cap, *self.block_sizes)
        if any(s < 1 for s in sizes):
            raise ValueError(f"all model dimensions must be positive, got {sizes}")
        if self.char_alphabet != CHAR_DIM:
            raise ValueError(f"char_alphabet is fixed at {CHAR_DIM}")
        if self.classes != 2:
            raise ValueError("this model is binary only")
        if not self.features:
            raise ValueError("at least one feature must be enabled")
        unknown = [f for f in self.features if f not in FEATURE_NAMES]
        if unknown:
            raise ValueError(f"unknown features {unknown}; choose from {FEATURE_NAMES}")
        if len(set(self.features)) != len(self.features):
            raise ValueError("duplicate feature in config")

    @property
    def rnn_out(self) -> int:
        return 2 * self.rnn_size if self.rnn_kind == "bigru" else self.rnn_size

    @property
    def concat_width(self) -> int:
        width = 0
        if "EMB" in self.features:
            width += self.rnn_out
        if "CH" in self.features:
            width += self.rnn_out
        if "HW" in self.features:
            width += self.block_sizes[0]
        return width


@dataclass
class BiGruParams:
    fwd: nn.GruParams
    bwd: nn.GruParams


@dataclass
class BlockParams:
    linear: nn.LinearParams
    norm: nn.BatchNormParams


@dataclass
class ModelParams:
    config: ModelConfig
    emb_rnn: object = None     # GruParams | LstmParams | BiGruParams
    char_rnn: object = None
    hate_block: BlockParams = None
    trunk: list = field(default_factory=list)  # blocks 2..4
    out: nn.LinearParams = None


def _init_rnn(rng, kind: str, n_in: int, hidden: int):
    if kind == "gru":
        return nn.init_gru(rng, n_in, hidden)
    if kind == "lstm":
        return nn.init_lstm(rng, n_in, hidden)
    return BiGruParams(fwd=nn.init_gru(rng, n_in, hidden), bwd=nn.init_gru(rng, n_in, hidden))


def _init_block(rng, n_in: int, n_out: int) -> BlockParams:
    return BlockParams(linear=nn.init_linear(rng, n_in, n_out), norm=nn.init_batchnorm(n_out))


def build_model(config: ModelConfig) -> ModelParams:
    """Seeded parameter initialization; same config always gives identical bits."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = ModelParams(config=config)
    if "EMB" in config.features:
        params.emb_rnn = _init_rnn(rng, config.rnn_kind, config.embed_dim, config.rnn_size)
    if "CH" in config.features:
        params.char_rnn = _init_rnn(rng, config.rnn_kind, CHAR_DIM, config.rnn_size)
    if "HW" in config.features:
        params.hate_block = _init_block(rng, config.lexicon_dim, config.block_sizes[0])
    width = config.concat_width
    for size in config.block_sizes[1:]:
        params.trunk.append(_init_block(rng, width, size))
        width = size
    params.out = nn.init_linear(rng, width, config.classes)
    return params


# ---------------------------------------------------------------------------
# flat views over the parameter tree

def _rnn_items(prefix, rnn):
    if isinstance(rnn, BiGruParams):
        yield from _rnn_items(f"{prefix}.fwd", rnn.fwd)
        yield from _rnn_items(f"{prefix}.bwd", rnn.bwd)
    else:
        for name, arr in nn.weight_arrays(rnn):
            yield f"{prefix}.{name}", arr


def _block_items(prefix, block: BlockParams):
    yield f"{prefix}.linear.weight", block.linear.weight
    yield f"{prefix}.linear.bias", block.linear.bias
    yield f"{prefix}.norm.gamma", block.norm.gamma
    yield f"{prefix}.norm.beta", block.norm.beta


def trainable_params(params: ModelParams) -> dict:
    """Ordered {name: array} view of every trainable tensor."""
    items = {}
    if params.emb_rnn is not None:
        items.update(_rnn_items("emb_rnn", params.emb_rnn))
    if params.char_rnn is not None:
        items.update(_rnn_items("char_rnn", params.char_rnn))
    if params.hate_block is not None:
        items.update(_block_items("hate_block", params.hate_block))
    for i, block in enumerate(params.trunk):
        items.update(_block_items(f"trunk.{i}", block))
    items["out.weight"] = params.out.weight
    items["out.bias"] = params.out.bias
    return items


def running_stats(params: ModelParams) -> dict:
    """Ordered {name: array} view of batch-norm running statistics."""
    items = {}
    blocks = []
    if params.hate_block is not None:
        blocks.append(("hate_block", params.hate_block))
    blocks.extend((f"trunk.{i}", b) for i, b in enumerate(params.trunk))
    for prefix, block in blocks:
        items[f"{prefix}.norm.running_mean"] = block.norm.running_mean
        items[f"{prefix}.norm.running_var"] = block.norm.running_var
    return items


def parameter_count(params: ModelParams) -> int:
    return sum(int(a.size) for a in trainable_params(params).values())


def set_param_arrays(params: ModelParams, arrays: dict) -> None:
    """Overwrite tensors in place from {name: array}; shapes must match."""
    targets = {**trainable_params(params), **running_stats(params)}
    for name, value in arrays.items():
        target = targets[name]
        if target.shape != value.shape:
            raise ValueError(f"{name}: shape {value.shape} != expected {target.shape}")
        target[...] = value


def cast_params(params: ModelParams, dtype) -> ModelParams:
    """Deep copy with every tensor cast to dtype (float64 for grad checking)."""
    clone = copy.deepcopy(params)
    for holder in _array_holders(clone):
        for name, arr in nn.weight_arrays(holder):
            setattr(holder, name, arr.astype(dtype))
    return clone


def _array_holders(params: ModelParams):
    for rnn in (params.emb_rnn, params.char_rnn):
        if isinstance(rnn, BiGruParams):
            yield rnn.fwd
            yield rnn.bwd
        elif rnn is not None:
            yield rnn
    blocks = ([params.hate_block] if params.hate_block is not None else []) + params.trunk
    for block in blocks:
        yield block.linear
        yield block.norm
    yield params.out


# ---------------------------------------------------------------------------
# batch packing

@dataclass
class PackedBatch:
    size: int
    emb: np.ndarray = None        # [B, T, D]
    emb_len: np.ndarray = None
    chars: np.ndarray = None      # [B, C, 26]
    char_len: np.ndarray = None
    hate: np.ndarray = None       # [B, lexicon dim]


def pack_bundles(bundles, config: ModelConfig) -> PackedBatch:
    """Pad per-sample feature matrices into dense batch arrays."""
    if not bundles:
        raise ValueError("empty batch")
    batch = PackedBatch(size=len(bundles))
    if "EMB" in config.features:
        lens = np.array([b.embeddings.shape[0] for b in bundles])
        dims = {b.embeddings.shape[1] for b in bundles}
        if dims != {config.embed_dim}:
            raise ValueError(f"embedding dims {sorted(dims)} do not match config embed_dim {config.embed_dim}")
        t_max = max(int(lens.max()), 1)
        emb = np.zeros((len(bundles), t_max, config.embed_dim), dtype=np.float32)
        for i, b in enumerate(bundles):
            emb[i, :lens[i]] = b.embeddings
        batch.emb, batch.emb_len = emb, lens
    if "CH" in config.features:
        lens = np.array([b.chars.shape[0] for b in bundles])
        c_max = max(int(lens.max()), 1)
        chars = np.zeros((len(bundles), c_max, CHAR_DIM), dtype=np.float32)
        for i, b in enumerate(bundles):
            chars[i, :lens[i]] = b.chars
        batch.chars, batch.char_len = chars, lens
    if "HW" in config.features:
        dims = {b.hate.shape[0] for b in bundles}
        if dims != {config.lexicon_dim}:
            raise ValueError(f"hate vector dims {sorted(dims)} do not match config lexicon_dim {config.lexicon_dim}")
        batch.hate = np.stack([b.hate for b in bundles]).astype(np.float32)
    return batch


# ---------------------------------------------------------------------------
# forward / backward

def _rnn_forward(x, lengths, rnn):
    if isinstance(rnn, BiGruParams):
        h_f, cache_f = nn.gru_forward_batch(x, lengths, rnn.fwd)
        h_b, cache_b = nn.gru_forward_batch(nn.reverse_padded(x, lengths), lengths, rnn.bwd)
        return np.concatenate([h_f, h_b], axis=1), ("bigru", cache_f, cache_b)
    if isinstance(rnn, nn.LstmParams):
        h, cache = nn.lstm_forward_batch(x, lengths, rnn)
        return h, ("lstm", cache)
    h, cache = nn.gru_forward_batch(x, lengths, rnn)
    return h, ("gru", cache)


def _rnn_backward(grad_h, cache):
    kind = cache[0]
    if kind == "bigru":
        _, cache_f, cache_b = cache
        hidden = grad_h.shape[1] // 2
        g_f, _ = nn.gru_backward_batch(grad_h[:, :hidden], cache_f)
        g_b, _ = nn.gru_backward_batch(grad_h[:, hidden:], cache_b)
        return BiGruParams(fwd=g_f, bwd=g_b)
    if kind == "lstm":
        grads, _ = nn.lstm_backward_batch(grad_h, cache[1])
        return grads
    grads, _ = nn.gru_backward_batch(grad_h, cache[1])
    return grads


def _block_forward(x, block: BlockParams, train: bool):
    # A stray batch of one cannot define batch statistics; fall back to the
    # running ones rather than failing the final partial batch.
    bn_train = train and x.shape[0] >= 2
    pre, lin_cache = nn.linear_forward(x, block.linear)
    normed, bn_cache = nn.batchnorm_forward(pre, block.norm, bn_train)
    out = nn.relu(normed)
    return out, (lin_cache, bn_cache, normed)


def _block_backward(grad_out, cache):
    lin_cache, bn_cache, normed = cache
    grad_normed = nn.relu_backward(grad_out, normed)
    grad_pre, grad_gamma, grad_beta = nn.batchnorm_backward(grad_normed, bn_cache)
    grad_x, grad_w, grad_b = nn.linear_backward(grad_pre, lin_cache)
    grads = {"linear.weight": grad_w, "linear.bias": grad_b,
             "norm.gamma": grad_gamma, "norm.beta": grad_beta}
    return grad_x, grads


def forward(batch: PackedBatch, params: ModelParams, train: bool = False):
    """Class probabilities [B, 2]; returns (probs, logits, cache) for backward."""
    config = params.config
    if batch.size == 0:
        raise ValueError("empty batch")
    parts = []
    widths = []
    caches = {}
    if "EMB" in config.features:
        h, caches["emb"] = _rnn_forward(batch.emb, batch.emb_len, params.emb_rnn)
        parts.append(h)
        widths.append(h.shape[1])
    if "CH" in config.features:
        h, caches["char"] = _rnn_forward(batch.chars, batch.char_len, params.char_rnn)
        parts.append(h)
        widths.append(h.shape[1])
    if "HW" in config.features:
        h, caches["hate"] = _block_forward(batch.hate, params.hate_block, train)
        parts.append(h)
        widths.append(h.shape[1])
    x = np.concatenate(parts, axis=1)
    trunk_caches = []
    for block in params.trunk:
        x, cache = _block_forward(x, block, train)
        trunk_caches.append(cache)
    logits, out_cache = nn.linear_forward(x, params.out)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return probs, logits, (caches, widths, trunk_caches, out_cache)


def loss_and_grads(batch: PackedBatch, labels: np.ndarray, params: ModelParams,
                   train: bool = True):
    """Mean cross-entropy and gradients for every trainable tensor.

    In train mode each batch-norm layer updates its running statistics
    exactly once. Gradient keys match trainable_params(params).
    """
    _, logits, cache = forward(batch, params, train)
    loss, grad_logits, _ = nn.softmax_cross_entropy(logits, labels)
    grads = {}
    branch_caches, widths, trunk_caches, out_cache = cache

    grad_x, grad_w, grad_b = nn.linear_backward(grad_logits, out_cache)
    grads["out.weight"] = grad_w
    grads["out.bias"] = grad_b
    for i in reversed(range(len(params.trunk))):
        grad_x, block_grads = _block_backward(grad_x, trunk_caches[i])
        grads.update({f"trunk.{i}.{k}": v for k, v in block_grads.items()})

    config = params.config
    offset = 0
    part_grads = []
    for width in widths:
        part_grads.append(grad_x[:, offset:offset + width])
        offset += width
    part_iter = iter(part_grads)
    if "EMB" in config.features:
        rnn_grads = _rnn_backward(next(part_iter), branch_caches["emb"])
        grads.update(_rnn_items("emb_rnn", rnn_grads))
    if "CH" in config.features:
        rnn_grads = _rnn_backward(next(part_iter), branch_caches["char"])
        grads.update(_rnn_items("char_rnn", rnn_grads))
    if "HW" in config.features:
        _, block_grads = _block_backward(next(part_iter), branch_caches["hate"])
        grads.update({f"hate_block.{k}": v for k, v in block_grads.items()})
    return loss, grads


# ---------------------------------------------------------------------------
# prediction

@dataclass(frozen=True)
class Prediction:
    label: str
    probability: float
    empty_input: bool = False


def predict_packed(batch: PackedBatch, params: ModelParams):
    """Labels and winning-class probabilities for a packed batch, infer mode."""
    probs, _, _ = forward(batch, params, train=False)
    preds = []
    for row in probs:
        # Exact ties go to NOT: flagging content needs a strict majority.
        label = LABELS[0] if row[0] > row[1] else LABELS[1]
        preds.append((label, float(row.max())))
    return preds


def predict(text: str, params: ModelParams, lexicon, provider,
            sample_id: str | None = None) -> Prediction:
    """Classify one raw text; returns NOT at probability 0.5 when nothing encodable remains."""
    config = params.config
    tokens = tokenize(normalize_text(text))
    if not tokens:
        return Prediction(label="NOT", probability=0.5, empty_input=True)
    if "CH" in config.features and not any("a" <= c <= "z" for t in tokens for c in t):
        return Prediction(label="NOT", probability=0.5, empty_input=True)
    bundle = build_bundle(tokens, provider, lexicon, sample_id=sample_id,
                          token_cap=config.token_cap, char_cap=config.char_cap)
    batch = pack_bundles([bundle], config)
    (label, prob), = predict_packed(batch, params)
    return Prediction(label=label, probability=prob)
