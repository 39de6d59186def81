"""Categorical softmax policies with hand-written backprop.

Parameters travel between agents as one flat float64 vector.  Layer ``l``
stores its weight matrix (``out x in``, row-major) followed by its bias.
Every batched routine here takes a stack of parameter vectors of shape
``(G, d)`` together with inputs of shape ``(G, ..., in)`` so that the
trajectories of several agents can be pushed through one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

_ACTIVATIONS = ("relu", "tanh")
_OUTPUTS = ("identity", "tanh")


@dataclass(frozen=True)
class PolicySpec:
    input_dim: int
    action_count: int
    architecture: str = "mlp"
    hidden_sizes: tuple[int, ...] = (16, 16)
    hidden_activation: str = "relu"
    output_activation: str = "tanh"

    def __post_init__(self):
        if self.architecture not in ("linear", "mlp"):
            raise ConfigurationError(f"policy.architecture: unknown {self.architecture!r}")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ConfigurationError(f"policy.hidden_activation: unknown {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUTS:
            raise ConfigurationError(f"policy.output_activation: unknown {self.output_activation!r}")
        if self.input_dim < 1 or self.action_count < 1:
            raise ConfigurationError("policy: input_dim and action_count must be positive")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.architecture == "linear":
            object.__setattr__(self, "hidden_sizes", ())
        if len(self.hidden_sizes) > 2:
            raise ConfigurationError("policy.hidden_sizes: at most two hidden layers are supported")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_sizes, self.action_count]

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass
class _Cache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None


class Policy:
    """Batched forward/backward passes for a :class:`PolicySpec`."""

    def __init__(self, spec: PolicySpec):
        self.spec = spec
        sizes = spec.layer_sizes
        self._shapes = list(zip(sizes[1:], sizes[:-1]))
        self._slices = []
        offset = 0
        for out_dim, in_dim in self._shapes:
            w = slice(offset, offset + out_dim * in_dim)
            offset += out_dim * in_dim
            b = slice(offset, offset + out_dim)
            offset += out_dim
            self._slices.append((w, b))
        self.n_params = offset

    # -- parameter layout -------------------------------------------------

    def unflatten(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split ``theta`` (``(d,)`` or ``(G, d)``) into per-layer views."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[-1] != self.n_params:
            raise ConfigurationError(
                f"parameter vector has length {theta.shape[-1]}, policy expects {self.n_params}"
            )
        lead = theta.shape[:-1]
        layers = []
        for (out_dim, in_dim), (ws, bs) in zip(self._shapes, self._slices):
            layers.append((theta[..., ws].reshape(*lead, out_dim, in_dim), theta[..., bs]))
        return layers

    def flatten(self, layers) -> np.ndarray:
        parts = []
        for w, b in layers:
            lead = w.shape[:-2]
            parts.append(w.reshape(*lead, -1))
            parts.append(b)
        return np.concatenate(parts, axis=-1)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
        theta = np.zeros(self.n_params)
        for (out_dim, in_dim), (ws, _) in zip(self._shapes, self._slices):
            bound = 1.0 / np.sqrt(in_dim)
            theta[ws] = rng.uniform(-bound, bound, size=out_dim * in_dim)
        return theta

    # -- passes -----------------------------------------------------------

    def forward(self, thetas: np.ndarray, x: np.ndarray):
        """Log-probabilities for inputs ``x`` of shape ``(G, ..., in)``.

        Returns ``(log_probs, cache)``; ``cache`` feeds :meth:`backward`.
        """
        thetas = np.atleast_2d(thetas)
        x = np.asarray(x, dtype=np.float64)
        G = thetas.shape[0]
        mid = x.shape[1:-1]
        h = x.reshape(G, -1, x.shape[-1])
        cache = _Cache()
        layers = self.unflatten(thetas)
        last = len(layers) - 1
        for i, (w, b) in enumerate(layers):
            cache.weights.append(w)
            cache.inputs.append(h)
            z = np.matmul(h, np.swapaxes(w, -1, -2)) + b[:, None, :]
            cache.pre.append(z)
            if i < last:
                h = np.maximum(z, 0.0) if self.spec.hidden_activation == "relu" else np.tanh(z)
            else:
                h = np.tanh(z) if self.spec.output_activation == "tanh" else z
        cache.logits = h
        shifted = h - h.max(axis=-1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        cache.probs = np.exp(logp)
        return logp.reshape(G, *mid, -1), cache

    def backward(self, cache: _Cache, d_logp: np.ndarray, rows_per_group: int | None = None) -> np.ndarray:
        """Chain ``d_logp`` (gradient w.r.t. the log-probabilities) back to the parameters.

        ``d_logp`` has the shape of the forward output.  With
        ``rows_per_group=None`` all rows of a group are summed and the result
        is ``(G, d)``.  Otherwise rows are summed in consecutive blocks of
        ``rows_per_group`` and the result is ``(G, n_blocks, d)``, which gives
        per-trajectory gradients when a block is one trajectory.
        """
        probs = cache.probs
        G, R, A = probs.shape
        g = np.asarray(d_logp, dtype=np.float64).reshape(G, R, A)
        # d/dlogits of sum_a c_a log p_a = c - p * sum_a c_a
        g = g - probs * g.sum(axis=-1, keepdims=True)
        layers_out = []
        n_layers = len(cache.pre)
        for i in reversed(range(n_layers)):
            z = cache.pre[i]
            if i == n_layers - 1:
                if self.spec.output_activation == "tanh":
                    g = g * (1.0 - cache.logits**2)
            else:
                if self.spec.hidden_activation == "relu":
                    g = g * (z > 0.0)
                else:
                    t = np.tanh(z)
                    g = g * (1.0 - t * t)
            inp = cache.inputs[i]
            if rows_per_group is None:
                dw = np.matmul(np.swapaxes(g, -1, -2), inp)
                db = g.sum(axis=1)
            else:
                nb = R // rows_per_group
                gb = g.reshape(G, nb, rows_per_group, -1)
                ib = inp.reshape(G, nb, rows_per_group, -1)
                dw = np.matmul(np.swapaxes(gb, -1, -2), ib)
                db = gb.sum(axis=2)
            layers_out.append((dw, db))
            if i > 0:
                g = np.matmul(g, cache.weights[i])
        layers_out.reverse()
        return self.flatten(layers_out)


def action_log_probs(spec: PolicySpec, theta: np.ndarray, state: np.ndarray) -> np.ndarray:
    """``log pi_theta(. | state)`` for a single parameter vector and state."""
    policy = Policy(spec)
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (spec.input_dim,):
        raise ConfigurationError(f"state has shape {state.shape}, policy expects ({spec.input_dim},)")
    logp, _ = policy.forward(np.asarray(theta)[None, :], state[None, None, :])
    return logp[0, 0]


def log_prob_gradient(spec: PolicySpec, theta: np.ndarray, state: np.ndarray, action: int) -> np.ndarray:
    """Score function ``grad_theta log pi_theta(action | state)``."""
    if not 0 <= action < spec.action_count:
        raise ConfigurationError(f"action {action} outside [0, {spec.action_count})")
    policy = Policy(spec)
    state = np.asarray(state, dtype=np.float64)
    _, cache = policy.forward(np.asarray(theta)[None, :], state[None, None, :])
    d = np.zeros((1, 1, spec.action_count))
    d[0, 0, action] = 1.0
    return policy.backward(cache, d)[0]
