"""Adam optimizer over named parameter dicts, plus finite-difference checking."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params: dict, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-7) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
    for name, value in params.items():
        state.m[name] = np.zeros_like(value)
        state.v[name] = np.zeros_like(value)
    return state


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def grad_check(loss_fn, theta: np.ndarray, h: float = 1e-4) -> float:
    """Max relative error between analytic gradient and central differences.

    loss_fn maps a float64 parameter vector to (loss, gradient vector).
    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    theta = np.asarray(theta, dtype=np.float64)
    loss0, analytic = loss_fn(theta)
    if not np.isfinite(loss0):
        raise ValueError(f"loss is not finite at the check point: {loss0}")
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != theta.shape:
        raise ValueError("gradient shape does not match parameter vector")
    worst = 0.0
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        loss_plus, _ = loss_fn(theta + step)
        loss_minus, _ = loss_fn(theta - step)
        if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
            raise ValueError(f"non-finite loss while perturbing coordinate {i}")
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
