"""Three-layer perceptrons with hand-written backpropagation and Adam.

Parameters live in a single flat vector so that an optimiser step is a few
vectorised operations; ``W1``, ``b1``, ``W2`` and ``b2`` are views into it.
Gradients use the same flat layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError

ACTIVATIONS = ("linear", "sigmoid")
HIDDEN_ACTIVATIONS = ("tanh", "identity")


class MlpParams:
    """Weights of ``x -> act(W2 @ tanh(W1 @ x + b1) + b2)``.

    ``hidden_activation='identity'`` turns the net into an affine map and is
    meant for tests.
    """

    def __init__(self, in_dim, hidden_dim, out_dim, activation="linear",
                 hidden_activation="tanh", theta=None):
        if min(in_dim, hidden_dim, out_dim) < 1:
            raise ValueError("all layer sizes must be >= 1")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        self.in_dim, self.hidden_dim, self.out_dim = int(in_dim), int(hidden_dim), int(out_dim)
        self.activation = activation
        self.hidden_activation = hidden_activation
        size = self.n_params
        if theta is None:
            theta = np.zeros(size)
        theta = np.array(theta, dtype=float).ravel()
        if theta.size != size:
            raise ValueError(f"theta has {theta.size} entries, expected {size}")
        self.theta = theta
        self.version = 0
        self._bind()

    @property
    def n_params(self) -> int:
        return self.hidden_dim * (self.in_dim + 1) + self.out_dim * (self.hidden_dim + 1)

    def _bind(self):
        self.W1, self.b1, self.W2, self.b2 = self.split(self.theta)

    def split(self, flat):
        """Views of a flat vector laid out like ``theta``."""
        i, h, o = self.in_dim, self.hidden_dim, self.out_dim
        a = h * i
        b = a + h
        c = b + o * h
        return flat[:a].reshape(h, i), flat[a:b], flat[b:c].reshape(o, h), flat[c:]

    def copy(self) -> "MlpParams":
        return MlpParams(self.in_dim, self.hidden_dim, self.out_dim, self.activation,
                         self.hidden_activation, self.theta.copy())

    def set_theta(self, theta):
        self.theta[:] = theta
        self.version += 1

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "hidden_dim": self.hidden_dim, "out_dim": self.out_dim,
                "activation": self.activation, "hidden_activation": self.hidden_activation}

    def __repr__(self):
        return (f"MlpParams({self.in_dim}->{self.hidden_dim}->{self.out_dim}, "
                f"{self.hidden_activation}/{self.activation})")


@dataclass
class ForwardCache:
    x: np.ndarray
    h: np.ndarray
    z: np.ndarray
    out: np.ndarray
    owner: int
    version: int


def mlp_init(in_dim, hidden_dim, out_dim, activation="linear", seed=None,
             hidden_activation="tanh") -> MlpParams:
    """Glorot-uniform weights and zero biases."""
    p = MlpParams(in_dim, hidden_dim, out_dim, activation, hidden_activation)
    rng = np.random.default_rng(seed)
    s1 = np.sqrt(6.0 / (p.in_dim + p.hidden_dim))
    s2 = np.sqrt(6.0 / (p.hidden_dim + p.out_dim))
    p.W1[:] = rng.uniform(-s1, s1, p.W1.shape)
    p.W2[:] = rng.uniform(-s2, s2, p.W2.shape)
    return p


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_forward(p: MlpParams, x):
    """Returns ``(output, cache)``; for a sigmoid head ``cache.z`` holds the logits."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != p.in_dim:
        raise ValueError(f"expected batch of shape (B, {p.in_dim}), got {x.shape}")
    a = x @ p.W1.T + p.b1
    h = np.tanh(a) if p.hidden_activation == "tanh" else a
    z = h @ p.W2.T + p.b2
    out = sigmoid(z) if p.activation == "sigmoid" else z
    return out, ForwardCache(x, h, z, out, id(p), p.version)


def mlp_backward(p: MlpParams, cache: ForwardCache, grad_out, wrt_logits=False):
    """Gradients of a scalar loss given ``dL/d(output)``.

    With ``wrt_logits=True`` the incoming gradient is taken with respect to the
    pre-sigmoid output, which is how the fused BCE losses call this.

    Returns ``(grad_theta, grad_input)``.
    """
    if cache.owner != id(p) or cache.version != p.version:
        raise ValueError("forward cache does not belong to the current parameters")
    g = np.asarray(grad_out, dtype=float)
    if g.shape != cache.z.shape:
        raise ValueError(f"grad_out shape {g.shape} does not match output {cache.z.shape}")
    if p.activation == "sigmoid" and not wrt_logits:
        g = g * cache.out * (1.0 - cache.out)
    grad = np.empty_like(p.theta)
    gW1, gb1, gW2, gb2 = p.split(grad)
    np.dot(g.T, cache.h, out=gW2)
    gb2[:] = g.sum(axis=0)
    dh = g @ p.W2
    if p.hidden_activation == "tanh":
        dh *= 1.0 - cache.h * cache.h
    np.dot(dh.T, cache.x, out=gW1)
    gb1[:] = dh.sum(axis=0)
    return grad, dh @ p.W1


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0

    @classmethod
    def for_params(cls, p: MlpParams, **hyper) -> "AdamState":
        return cls(m=np.zeros_like(p.theta), v=np.zeros_like(p.theta), **hyper)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps,
                         self.m.copy(), self.v.copy(), self.step)


def adam_step(state: AdamState, p: MlpParams, grads):
    """Bias-corrected Adam update, applied in place. Returns ``(state, p)``."""
    grads = np.asarray(grads, dtype=float)
    if grads.shape != p.theta.shape or state.m.shape != p.theta.shape:
        raise ValueError("gradient/optimizer state shape does not match parameters")
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.isfinite(grads))
        raise NumericalError(
            f"non-finite gradient in {bad.size} of {grads.size} entries (first at {bad[0]}) "
            f"at Adam step {state.step + 1}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    lr_t = state.lr * np.sqrt(1.0 - b2 ** state.step) / (1.0 - b1 ** state.step)
    eps_t = state.eps * np.sqrt(1.0 - b2 ** state.step)
    # same as lr * m_hat / (sqrt(v_hat) + eps) with the corrections folded in
    p.theta -= lr_t * state.m / (np.sqrt(state.v) + eps_t)
    p.version += 1
    return state, p


def gradient_check(params, loss_fn, h=1e-5, n_coords=200, seed=0, floor=1e-6):
    """Largest relative gap between analytic and central-difference gradients.

    ``params`` is one :class:`MlpParams` or a sequence of them; ``loss_fn()``
    evaluates the loss at the current parameter values and returns
    ``(loss, grads)`` with ``grads`` aligned with ``params``.  At most
    ``n_coords`` coordinates (all of them if fewer exist) are probed.

    Each coordinate's error is ``|a - n| / max(|a| + |n|, floor * g_max)`` with
    ``g_max`` the largest analytic gradient magnitude (at least 1), so entries
    that are exactly zero analytically are judged on an absolute scale.
    """
    single = isinstance(params, MlpParams)
    plist = [params] if single else list(params)
    _, analytic = loss_fn()
    analytic = [analytic] if single else list(analytic)
    coords = [(k, j) for k, p in enumerate(plist) for j in range(p.n_params)]
    rng = np.random.default_rng(seed)
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in np.sort(pick)]

    g_max = max(1.0, max(float(np.max(np.abs(g))) for g in analytic))
    worst = 0.0
    for k, j in coords:
        p = plist[k]
        orig = p.theta[j]
        p.theta[j] = orig + h
        p.version += 1
        lp, _ = loss_fn()
        p.theta[j] = orig - h
        p.version += 1
        lm, _ = loss_fn()
        p.theta[j] = orig
        p.version += 1
        numeric = (lp - lm) / (2 * h)
        a = analytic[k][j]
        err = abs(a - numeric) / max(abs(a) + abs(numeric), floor * g_max)
        worst = max(worst, err)
    return worst
