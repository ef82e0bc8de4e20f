"""Dense and recurrent layers with hand-written backward passes.

Plain numpy throughout. Forward functions return (output, cache); the
matching backward consumes the cache and emits gradients. Math runs in
the dtype of its inputs: training stores float32, gradient checking casks
everything to float64 and gets full-precision derivatives from the same
code path. Reductions accumulate in 64-bit regardless of storage dtype.

Recurrent layers take padded batches [B, T, D] plus per-sample lengths;
rows whose length is exhausted carry their hidden state through unchanged,
so one batched loop serves variable-length sequences. A length of zero is
legal in the batched API and yields the all-zero initial state.
"""

from dataclasses import dataclass, fields

import numpy as np


# ---------------------------------------------------------------------------
# parameter containers

@dataclass
class LinearParams:
    weight: np.ndarray  # [in, out]
    bias: np.ndarray    # [out]


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.99
    epsilon: float = 1e-3


@dataclass
class GruParams:
    w_z: np.ndarray  # [in, hidden]
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray  # [hidden, hidden]
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray  # [hidden]
    b_r: np.ndarray
    b_h: np.ndarray


@dataclass
class LstmParams:
    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    u_i: np.ndarray
    u_f: np.ndarray
    u_o: np.ndarray
    u_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray


def weight_arrays(params):
    """(field name, array) pairs of a parameter dataclass, declaration order."""
    return [(f.name, getattr(params, f.name)) for f in fields(params)
            if isinstance(getattr(params, f.name), np.ndarray)]


def zeros_like_params(params):
    """Same dataclass with every array replaced by zeros (gradient buffer)."""
    kwargs = {}
    for f in fields(params):
        value = getattr(params, f.name)
        kwargs[f.name] = np.zeros_like(value) if isinstance(value, np.ndarray) else value
    return type(params)(**kwargs)


# ---------------------------------------------------------------------------
# initialization

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)


def init_linear(rng, n_in: int, n_out: int) -> LinearParams:
    return LinearParams(
        weight=glorot_uniform(rng, n_in, n_out),
        bias=np.zeros(n_out, dtype=np.float32),
    )


def init_batchnorm(n: int) -> BatchNormParams:
    return BatchNormParams(
        gamma=np.ones(n, dtype=np.float32),
        beta=np.zeros(n, dtype=np.float32),
        running_mean=np.zeros(n, dtype=np.float32),
        running_var=np.ones(n, dtype=np.float32),
    )


def init_gru(rng, n_in: int, hidden: int) -> GruParams:
    def w():
        return glorot_uniform(rng, n_in, hidden)

    def u():
        return glorot_uniform(rng, hidden, hidden)

    def b():
        return np.zeros(hidden, dtype=np.float32)

    return GruParams(w_z=w(), w_r=w(), w_h=w(), u_z=u(), u_r=u(), u_h=u(),
                     b_z=b(), b_r=b(), b_h=b())


def init_lstm(rng, n_in: int, hidden: int) -> LstmParams:
    def w():
        return glorot_uniform(rng, n_in, hidden)

    def u():
        return glorot_uniform(rng, hidden, hidden)

    def b():
        return np.zeros(hidden, dtype=np.float32)

    return LstmParams(w_i=w(), w_f=w(), w_o=w(), w_g=w(),
                      u_i=u(), u_f=u(), u_o=u(), u_g=u(),
                      b_i=b(), b_f=b(), b_o=b(), b_g=b())


# ---------------------------------------------------------------------------
# elementwise

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_y * (x > 0)


# ---------------------------------------------------------------------------
# linear

def linear_forward(x: np.ndarray, p: LinearParams):
    if x.ndim != 2 or x.shape[1] != p.weight.shape[0]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {p.weight.shape}")
    y = x @ p.weight + p.bias
    return y, (x, p)


def linear_backward(grad_y: np.ndarray, cache):
    x, p = cache
    grad_x = grad_y @ p.weight.T
    grad_w = x.T @ grad_y
    grad_b = grad_y.sum(axis=0, dtype=np.float64).astype(grad_y.dtype)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# batch normalization

def batchnorm_forward(x: np.ndarray, p: BatchNormParams, train: bool):
    """Normalize per feature; train mode also updates the running statistics.

    Train mode requires batch size >= 2 (callers fall back to infer-mode
    statistics for a stray batch of one).
    """
    if train:
        if x.shape[0] < 2:
            raise ValueError("train-mode batch norm needs a batch of at least 2")
        mean = x.mean(axis=0, dtype=np.float64).astype(x.dtype)
        var = x.var(axis=0, dtype=np.float64).astype(x.dtype)
        m = p.momentum
        p.running_mean = (m * p.running_mean + (1.0 - m) * mean).astype(p.running_mean.dtype)
        p.running_var = (m * p.running_var + (1.0 - m) * var).astype(p.running_var.dtype)
    else:
        mean = p.running_mean.astype(x.dtype)
        var = p.running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + np.asarray(p.epsilon, dtype=x.dtype))
    x_hat = (x - mean) * inv_std
    y = p.gamma * x_hat + p.beta
    return y, (x_hat, inv_std, p.gamma, train)


def batchnorm_backward(grad_y: np.ndarray, cache):
    x_hat, inv_std, gamma, train = cache
    grad_gamma = (grad_y * x_hat).sum(axis=0, dtype=np.float64).astype(grad_y.dtype)
    grad_beta = grad_y.sum(axis=0, dtype=np.float64).astype(grad_y.dtype)
    grad_xhat = grad_y * gamma
    if train:
        # Batch statistics depend on x, so their gradient terms must be
        # subtracted; in infer mode the statistics are constants.
        mean_g = grad_xhat.mean(axis=0, dtype=np.float64).astype(grad_y.dtype)
        mean_gx = (grad_xhat * x_hat).mean(axis=0, dtype=np.float64).astype(grad_y.dtype)
        grad_x = (grad_xhat - mean_g - x_hat * mean_gx) * inv_std
    else:
        grad_x = grad_xhat * inv_std
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# GRU

def gru_forward_batch(x: np.ndarray, lengths: np.ndarray, p: GruParams):
    """Final hidden state of a GRU over padded sequences.

    x: [B, T, in], lengths: [B] ints in [0, T]. Gates:
        z = sigmoid(x W_z + h U_z + b_z)
        r = sigmoid(x W_r + h U_r + b_r)
        c = tanh(x W_h + (r * h) U_h + b_h)
        h' = z * h + (1 - z) * c
    """
    B, T, _ = x.shape
    hidden = p.u_z.shape[0]
    h = np.zeros((B, hidden), dtype=x.dtype)
    steps = []
    for t in range(T):
        xt = x[:, t, :]
        z = _sigmoid(xt @ p.w_z + h @ p.u_z + p.b_z)
        r = _sigmoid(xt @ p.w_r + h @ p.u_r + p.b_r)
        c = np.tanh(xt @ p.w_h + (r * h) @ p.u_h + p.b_h)
        h_new = z * h + (1.0 - z) * c
        mask = (lengths > t).astype(x.dtype)[:, None]
        steps.append((xt, h, z, r, c, mask))
        h = mask * h_new + (1.0 - mask) * h
    return h, (p, steps, x.shape)


def gru_backward_batch(grad_h: np.ndarray, cache):
    """Gradients of a scalar loss w.r.t. GRU parameters and inputs."""
    p, steps, x_shape = cache
    g = zeros_like_params(p)
    grad_x = np.zeros(x_shape, dtype=grad_h.dtype)
    dh = grad_h.copy()
    for t in reversed(range(len(steps))):
        xt, h_prev, z, r, c, mask = steps[t]
        dh_t = dh * mask
        dz = dh_t * (h_prev - c)
        dc = dh_t * (1.0 - z)
        dh_prev = dh_t * z

        da_c = dc * (1.0 - c * c)
        g.w_h += xt.T @ da_c
        g.u_h += (r * h_prev).T @ da_c
        g.b_h += da_c.sum(axis=0)
        d_rh = da_c @ p.u_h.T
        dh_prev += d_rh * r
        dr = d_rh * h_prev

        da_r = dr * r * (1.0 - r)
        g.w_r += xt.T @ da_r
        g.u_r += h_prev.T @ da_r
        g.b_r += da_r.sum(axis=0)
        dh_prev += da_r @ p.u_r.T

        da_z = dz * z * (1.0 - z)
        g.w_z += xt.T @ da_z
        g.u_z += h_prev.T @ da_z
        g.b_z += da_z.sum(axis=0)
        dh_prev += da_z @ p.u_z.T

        grad_x[:, t, :] = da_c @ p.w_h.T + da_r @ p.w_r.T + da_z @ p.w_z.T
        dh = dh_prev + dh * (1.0 - mask)
    return g, grad_x


def gru_forward(seq: np.ndarray, p: GruParams, mask_len: int):
    """Single-sequence GRU: seq [T, in], returns the hidden state at step mask_len."""
    if seq.ndim != 2:
        raise ValueError(f"gru: expected [T, in] sequence, got shape {seq.shape}")
    if not 1 <= mask_len <= seq.shape[0]:
        raise ValueError(f"gru: mask_len {mask_len} out of range [1, {seq.shape[0]}]")
    h, cache = gru_forward_batch(seq[None, :, :], np.array([mask_len]), p)
    return h[0], cache


# ---------------------------------------------------------------------------
# LSTM (three gates plus cell)

def lstm_forward_batch(x: np.ndarray, lengths: np.ndarray, p: LstmParams):
    B, T, _ = x.shape
    hidden = p.u_i.shape[0]
    h = np.zeros((B, hidden), dtype=x.dtype)
    c = np.zeros((B, hidden), dtype=x.dtype)
    steps = []
    for t in range(T):
        xt = x[:, t, :]
        i = _sigmoid(xt @ p.w_i + h @ p.u_i + p.b_i)
        f = _sigmoid(xt @ p.w_f + h @ p.u_f + p.b_f)
        o = _sigmoid(xt @ p.w_o + h @ p.u_o + p.b_o)
        gcand = np.tanh(xt @ p.w_g + h @ p.u_g + p.b_g)
        c_new = f * c + i * gcand
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        mask = (lengths > t).astype(x.dtype)[:, None]
        steps.append((xt, h, c, i, f, o, gcand, tanh_c, mask))
        h = mask * h_new + (1.0 - mask) * h
        c = mask * c_new + (1.0 - mask) * c
    return h, (p, steps, x.shape)


def lstm_backward_batch(grad_h: np.ndarray, cache):
    p, steps, x_shape = cache
    g = zeros_like_params(p)
    grad_x = np.zeros(x_shape, dtype=grad_h.dtype)
    dh = grad_h.copy()
    dc = np.zeros_like(grad_h)
    for t in reversed(range(len(steps))):
        xt, h_prev, c_prev, i, f, o, gcand, tanh_c, mask = steps[t]
        dh_t = dh * mask
        dc_t = dc * mask
        do = dh_t * tanh_c
        d_cnew = dc_t + dh_t * o * (1.0 - tanh_c * tanh_c)
        df = d_cnew * c_prev
        di = d_cnew * gcand
        dg = d_cnew * i
        dc_prev = d_cnew * f

        da_i = di * i * (1.0 - i)
        da_f = df * f * (1.0 - f)
        da_o = do * o * (1.0 - o)
        da_g = dg * (1.0 - gcand * gcand)

        g.w_i += xt.T @ da_i
        g.w_f += xt.T @ da_f
        g.w_o += xt.T @ da_o
        g.w_g += xt.T @ da_g
        g.u_i += h_prev.T @ da_i
        g.u_f += h_prev.T @ da_f
        g.u_o += h_prev.T @ da_o
        g.u_g += h_prev.T @ da_g
        g.b_i += da_i.sum(axis=0)
        g.b_f += da_f.sum(axis=0)
        g.b_o += da_o.sum(axis=0)
        g.b_g += da_g.sum(axis=0)

        dh_prev = da_i @ p.u_i.T + da_f @ p.u_f.T + da_o @ p.u_o.T + da_g @ p.u_g.T
        grad_x[:, t, :] = da_i @ p.w_i.T + da_f @ p.w_f.T + da_o @ p.w_o.T + da_g @ p.w_g.T
        dh = dh_prev + dh * (1.0 - mask)
        dc = dc_prev + dc * (1.0 - mask)
    return g, grad_x


# ---------------------------------------------------------------------------
# sequence reversal for the bidirectional variant

def reverse_padded(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each sample's first `length` steps, leaving padding in place."""
    out = np.zeros_like(x)
    for b, n in enumerate(lengths):
        if n > 0:
            out[b, :n] = x[b, n - 1::-1]
    return out


# ---------------------------------------------------------------------------
# loss

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood with shift-by-max softmax.

    Returns (loss, grad w.r.t. logits, probabilities). grad already folds
    in the 1/B mean reduction.
    """
    labels = np.asarray(labels)
    B, C = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {B}")
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError("label index out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    nll = -np.log(probs[np.arange(B), labels])
    loss = float(nll.mean(dtype=np.float64))
    grad = probs.copy()
    grad[np.arange(B), labels] -= 1.0
    grad /= B
    return loss, grad, probs
