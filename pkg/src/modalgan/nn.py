"""Small dense networks with hand-written backpropagation.

Weights are stored as ``(n_in, n_out)`` matrices so a batch ``x`` of shape
``(B, n_in)`` maps to ``x @ W + b``.
"""

from __future__ import annotations

import json

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "softmax", "identity")
PROB_CLAMP = 1e-7


class ShapeError(ValueError):
    pass


def _sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _activate(kind, x):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return _sigmoid(x)
    if kind == "softmax":
        return _softmax(x)
    return x


def _activation_grad(kind, pre, out, grad_out):
    if kind == "relu":
        return grad_out * (pre > 0)
    if kind == "tanh":
        return grad_out * (1.0 - out**2)
    if kind == "sigmoid":
        return grad_out * out * (1.0 - out)
    if kind == "softmax":
        return out * (grad_out - np.sum(grad_out * out, axis=1, keepdims=True))
    return grad_out


class Mlp:
    """Fully connected feed-forward network.

    ``activations[i]`` is applied after layer ``i``; there is one entry per
    weight matrix.
    """

    def __init__(self, layer_sizes, activations, rng=None, params=None):
        layer_sizes = [int(s) for s in layer_sizes]
        activations = list(activations)
        if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
            raise ShapeError(f"bad layer sizes {layer_sizes}")
        if len(activations) != len(layer_sizes) - 1:
            raise ShapeError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if "softmax" in activations[:-1]:
            raise ValueError("softmax is only allowed as the final activation")
        self.layer_sizes = layer_sizes
        self.activations = activations
        if params is None:
            if rng is None:
                raise ValueError("rng required to initialise parameters")
            params = []
            for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
                lim = np.sqrt(6.0 / (n_in + n_out))
                params.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
                params.append(np.zeros(n_out))
        self.params = [np.array(p, dtype=np.float64) for p in params]
        for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            if self.params[2 * i].shape != (n_in, n_out) or self.params[2 * i + 1].shape != (n_out,):
                raise ShapeError(f"parameter shapes of layer {i} do not match layer sizes")
        self._cache = None

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def num_params(self):
        return sum(p.size for p in self.params)

    def copy(self):
        return Mlp(self.layer_sizes, self.activations, params=[p.copy() for p in self.params])

    def forward(self, x, record=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"expected batch of width {self.n_in}, got shape {x.shape}")
        cache = [x]
        h = x
        for i, kind in enumerate(self.activations):
            pre = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = _activate(kind, pre)
            cache.append((pre, h))
        if record:
            self._cache = cache
        return h

    __call__ = forward

    def predict(self, x):
        return self.forward(x, record=False)

    def backward(self, grad_out):
        """Backpropagate ``dL/d(output)`` through the last recorded forward pass.

        Returns ``(grads, grad_input)`` where ``grads`` matches ``self.params``.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a recorded forward pass")
        cache = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != cache[-1][1].shape:
            raise ShapeError(f"loss gradient shape {g.shape} != output shape {cache[-1][1].shape}")
        grads = [None] * len(self.params)
        for i in range(len(self.activations) - 1, -1, -1):
            pre, out = cache[i + 1]
            g = _activation_grad(self.activations[i], pre, out, g)
            inp = cache[0] if i == 0 else cache[i][1]
            grads[2 * i] = inp.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    def state_dict(self):
        return {
            "layer_sizes": self.layer_sizes,
            "activations": self.activations,
        }


class Optimizer:
    """SGD or Adam over one network's parameter list."""

    def __init__(self, method="adam", lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        if method not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {method!r}")
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.method = method
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, net: Mlp, grads):
        if len(grads) != len(net.params) or any(g.shape != p.shape for g, p in zip(grads, net.params)):
            raise ShapeError("gradient shapes do not match parameters")
        if self.method == "sgd":
            for p, g in zip(net.params, grads):
                p -= self.lr * g
            return
        if self.m is None:
            self.m = [np.zeros_like(p) for p in net.params]
            self.v = [np.zeros_like(p) for p in net.params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(net.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def binary_cross_entropy(pred, target):
    """Mean BCE and its gradient with respect to ``pred``."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    n = p.shape[0]
    loss = -np.mean(np.sum(t * np.log(pc) + (1 - t) * np.log(1 - pc), axis=tuple(range(1, p.ndim))))
    inside = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)
    grad = -(t / pc - (1 - t) / (1 - pc)) * inside / n
    return float(loss), grad


def categorical_cross_entropy(pred, target):
    """Mean categorical CE of row-stochastic ``pred`` against one-hot ``target``."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    n = p.shape[0]
    loss = -np.sum(t * np.log(pc)) / n
    inside = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)
    grad = -(t / pc) * inside / n
    return float(loss), grad


def one_hot(labels, m):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, m))
    out[np.arange(labels.size), labels] = 1.0
    return out


def numerical_gradients(net: Mlp, x, loss_fn, h=1e-5):
    """Central finite differences of ``loss_fn(net.forward(x))`` for every parameter."""
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = loss_fn(net.predict(x))
            flat[k] = old - h
            down = loss_fn(net.predict(x))
            flat[k] = old
            gflat[k] = (up - down) / (2 * h)
        grads.append(g)
    return grads


# Checkpoint container: a numpy ``.npz`` archive.  Each network ``name`` is
# stored as ``name.meta`` (JSON of layer sizes and activations, as a 0-d
# unicode array) plus ``name.p0 .. name.pK`` float64 arrays in row-major
# order.  Additional JSON metadata lives under the ``meta`` key.

def save_networks(path, nets: dict, meta: dict | None = None):
    arrays = {}
    for name, net in nets.items():
        arrays[f"{name}.meta"] = np.array(json.dumps(net.state_dict()))
        for i, p in enumerate(net.params):
            arrays[f"{name}.p{i}"] = p
    arrays["meta"] = np.array(json.dumps(meta or {}, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_networks(path):
    with np.load(path, allow_pickle=False) as data:
        keys = set(data.files)
        if "meta" not in keys:
            raise ValueError(f"{path} is not a network checkpoint")
        meta = json.loads(str(data["meta"]))
        nets = {}
        for key in sorted(k for k in keys if k.endswith(".meta")):
            name = key[: -len(".meta")]
            spec = json.loads(str(data[key]))
            n_params = 2 * (len(spec["layer_sizes"]) - 1)
            params = [data[f"{name}.p{i}"].copy() for i in range(n_params)]
            nets[name] = Mlp(spec["layer_sizes"], spec["activations"], params=params)
    return nets, meta
