"""Plain-numpy feedforward classifier with per-neuron learning rates.

The network is a stack of sigmoid hidden layers and a softmax output head.
Weights are stored (out_dim, in_dim); batches are row-major (B, features).
The SGD step accepts one learning-rate vector per hidden layer (one entry
per neuron, applied to that neuron's incoming weights and bias) plus a
scalar rate for the output layer, which is what lets a mapper slow down
some neurons while leaving others plastic.
"""

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


@dataclass
class Mlp:
    layer_sizes: list          # [inputs, hidden..., classes]
    weights: list              # hidden weights, weights[l] is (n_l, n_{l-1})
    biases: list               # hidden biases, (n_l,)
    w_out: np.ndarray          # (classes, last_hidden)
    b_out: np.ndarray          # (classes,)

    @property
    def hidden_sizes(self):
        return self.layer_sizes[1:-1]

    @property
    def num_classes(self):
        return self.layer_sizes[-1]


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    hidden: list               # post-sigmoid activations per hidden layer
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class Gradients:
    weights: list
    biases: list
    w_out: np.ndarray
    b_out: np.ndarray


def _glorot(rng, fan_out, fan_in):
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_out, fan_in))


def init_network(layer_sizes, seed: int) -> Mlp:
    """Uniform Glorot-range weights, zero biases, seeded and reproducible."""
    if len(layer_sizes) < 3:
        raise ValueError("need at least input, one hidden, and output layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-2], layer_sizes[1:-1]):
        weights.append(_glorot(rng, fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    w_out = _glorot(rng, layer_sizes[-1], layer_sizes[-2])
    b_out = np.zeros(layer_sizes[-1])
    return Mlp(list(layer_sizes), weights, biases, w_out, b_out)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # evaluate on the side that cannot overflow
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def forward(net: Mlp, x: np.ndarray, class_mask=None) -> ForwardTrace:
    """Run a batch through the network.

    class_mask, when given, is a boolean vector over classes; logits of
    inactive classes are pinned to -inf so they get zero probability and
    contribute no gradient.
    """
    h = x
    hidden = []
    for w, b in zip(net.weights, net.biases):
        h = sigmoid(h @ w.T + b)
        hidden.append(h)
    logits = h @ net.w_out.T + net.b_out
    if class_mask is not None:
        if not np.any(class_mask):
            raise ValueError("class_mask disables every class")
        logits = np.where(class_mask, logits, -np.inf)
    return ForwardTrace(inputs=x, hidden=hidden, logits=logits, probs=softmax(logits))


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood of one-hot targets."""
    picked = (probs * targets).sum(axis=1)
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def backward(net: Mlp, trace: ForwardTrace, targets: np.ndarray) -> Gradients:
    """Gradients of mean cross-entropy for the traced batch."""
    batch = trace.inputs.shape[0]
    delta = (trace.probs - targets) / batch
    g_w_out = delta.T @ trace.hidden[-1]
    g_b_out = delta.sum(axis=0)
    g_weights = [None] * len(net.weights)
    g_biases = [None] * len(net.weights)
    up_w = net.w_out
    for l in range(len(net.weights) - 1, -1, -1):
        h = trace.hidden[l]
        delta = (delta @ up_w) * h * (1.0 - h)
        below = trace.inputs if l == 0 else trace.hidden[l - 1]
        g_weights[l] = delta.T @ below
        g_biases[l] = delta.sum(axis=0)
        up_w = net.weights[l]
    return Gradients(g_weights, g_biases, g_w_out, g_b_out)


def sgd_step(net: Mlp, grads: Gradients, eta_hidden, eta_out: float) -> Mlp:
    """In-place descent step.

    eta_hidden is one vector per hidden layer, entry j scaling every
    parameter feeding neuron j of that layer; eta_out is a scalar for the
    whole output layer. Returns the same (mutated) network.
    """
    for w, b, g_w, g_b, eta in zip(net.weights, net.biases,
                                   grads.weights, grads.biases, eta_hidden):
        if eta.shape != (w.shape[0],):
            raise ValueError("per-neuron rate vector does not match layer width")
        w -= eta[:, np.newaxis] * g_w
        b -= eta * g_b
    net.w_out -= eta_out * grads.w_out
    net.b_out -= eta_out * grads.b_out
    return net


def uniform_rates(net: Mlp, lr: float):
    """The per-neuron rate vectors that make sgd_step plain SGD at rate lr."""
    return [np.full(n, lr) for n in net.hidden_sizes]


def accuracy(net: Mlp, images: np.ndarray, labels: np.ndarray,
             class_mask=None, batch_size: int = 1024) -> float:
    """Fraction of argmax predictions matching labels (optionally masked)."""
    hits = 0
    for start in range(0, images.shape[0], batch_size):
        x = images[start:start + batch_size]
        trace = forward(net, x, class_mask)
        hits += int((trace.logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return hits / images.shape[0]


def param_list(net: Mlp):
    """Live references to every parameter array, in a fixed order."""
    return [*net.weights, net.w_out, *net.biases, net.b_out]


def grad_list(grads: Gradients):
    """Gradient arrays in the same order as param_list."""
    return [*grads.weights, grads.w_out, *grads.biases, grads.b_out]


def save_network(net: Mlp, path) -> None:
    arrays = {"layer_sizes": np.asarray(net.layer_sizes, dtype=np.int64),
              "w_out": net.w_out, "b_out": net.b_out}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_network(path) -> Mlp:
    with np.load(path) as data:
        layer_sizes = data["layer_sizes"].tolist()
        weights = [data[f"w{i}"] for i in range(len(layer_sizes) - 2)]
        biases = [data[f"b{i}"] for i in range(len(layer_sizes) - 2)]
        return Mlp(layer_sizes, weights, biases, data["w_out"], data["b_out"])
