"""Small dense networks with hand-written backpropagation and an Adam optimizer.

Inputs may be a single vector of shape ``(in,)`` or a batch of shape
``(batch, in)``; outputs follow the same convention. Parameter gradients
returned by :func:`backward` are summed over the batch, so callers fold any
averaging into the output gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from vaelime.errors import DimensionMismatch

ACTIVATIONS = ("tanh", "identity")


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatch(
                f"weights {self.weights.shape} incompatible with bias {self.bias.shape}"
            )

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]


@dataclass
class DenseNet:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise DimensionMismatch(f"layer output {prev.n_out} feeds input {nxt.n_in}")

    @property
    def input_dim(self):
        return self.layers[0].n_in

    @property
    def output_dim(self):
        return self.layers[-1].n_out

    def parameters(self):
        """Flat list ``[W1, b1, W2, b2, ...]`` of the live parameter arrays."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def with_parameters(self, params):
        if len(params) != 2 * len(self.layers):
            raise DimensionMismatch("parameter list does not match layer count")
        layers = [
            Layer(params[2 * i].copy(), params[2 * i + 1].copy(), layer.activation)
            for i, layer in enumerate(self.layers)
        ]
        return DenseNet(layers)

    def copy(self):
        return self.with_parameters(self.parameters())


def init_dense_net(sizes, activations, rng):
    """Glorot-uniform weights, zero biases.

    ``sizes`` lists layer widths including the input, so ``[4, 16, 2]``
    builds two layers.
    """
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
        bound = np.sqrt(6.0 / (n_in + n_out))
        layers.append(Layer(rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out), act))
    return DenseNet(layers)


def _activate(kind, a):
    return np.tanh(a) if kind == "tanh" else a


def forward(net, x):
    """Run ``x`` through the network.

    Returns ``(output, cache)``; ``cache`` holds the per-layer inputs and
    post-activations needed by :func:`backward`.
    """
    h = np.asarray(x, dtype=float)
    if h.shape[-1] != net.input_dim or h.ndim not in (1, 2):
        raise DimensionMismatch(f"expected input width {net.input_dim}, got shape {h.shape}")
    cache = []
    for layer in net.layers:
        a = h @ layer.weights.T + layer.bias
        out = _activate(layer.activation, a)
        cache.append((h, out))
        h = out
    return h, cache


def backward(net, cache, output_gradient):
    """Backpropagate ``output_gradient`` (d loss / d output).

    Returns ``(grads, input_gradient)`` where ``grads`` mirrors
    :meth:`DenseNet.parameters`.
    """
    g = np.asarray(output_gradient, dtype=float)
    if len(cache) != len(net.layers):
        raise DimensionMismatch("cache does not come from this network")
    if g.shape != cache[-1][1].shape:
        raise DimensionMismatch(f"output gradient shape {g.shape} != output {cache[-1][1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        h_in, out = cache[i]
        if layer.activation == "tanh":
            g = g * (1.0 - out * out)
        if g.ndim == 1:
            grads[2 * i] = np.outer(g, h_in)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = g.T @ h_in
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, g


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    decay1: float = 0.9
    decay2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first: list = field(default_factory=list)
    second: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        return cls(
            first=[np.zeros_like(p) for p in params],
            second=[np.zeros_like(p) for p in params],
            **hyper,
        )


def optimizer_step(params, grads, state):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; the inputs are left untouched.
    """
    if len(params) != len(grads) or len(params) != len(state.first):
        raise DimensionMismatch("params, grads and optimizer state disagree in length")
    t = state.step + 1
    b1, b2 = state.decay1, state.decay2
    first, second, new_params = [], [], []
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        first.append(m)
        second.append(v)
    new_state = AdamState(
        learning_rate=state.learning_rate,
        decay1=b1,
        decay2=b2,
        epsilon=state.epsilon,
        step=t,
        first=first,
        second=second,
    )
    return new_params, new_state


def gradient_check(net, x, loss_fn, h=1e-5, backward_fn=backward):
    """Largest relative gap between analytic and central-difference gradients.

    ``loss_fn(output)`` must return ``(loss, d loss / d output)``. The
    discrepancy per parameter is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    out, cache = forward(net, x)
    _, dout = loss_fn(out)
    analytic, _ = backward_fn(net, cache, dout)

    worst = 0.0
    params = net.parameters()
    for p, a in zip(params, analytic):
        flat = p.reshape(-1)
        a_flat = np.asarray(a).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn(forward(net, x)[0])[0]
            flat[k] = orig - h
            down = loss_fn(forward(net, x)[0])[0]
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            gap = abs(a_flat[k] - numeric) / max(1e-8, abs(a_flat[k]) + abs(numeric))
            worst = max(worst, gap)
    return worst
