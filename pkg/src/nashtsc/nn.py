"""Small dense Q-network with hand-written backprop and RMSprop."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

HIDDEN_SIZES = (32, 64, 64)


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet([w * factor for w in self.weights], [b * factor for b in self.biases])

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([a + b for a, b in zip(self.weights, other.weights)],
                           [a + b for a, b in zip(self.biases, other.biases)])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


class QNetwork:
    """ReLU hidden layers, linear output; weights stored as (fan_in, fan_out)."""

    def __init__(self, layer_sizes):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        pairs = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        self.weights = [np.zeros((i, o)) for i, o in pairs]
        self.biases = [np.zeros(o) for _, o in pairs]
        self.acc_weights = [np.zeros_like(w) for w in self.weights]
        self.acc_biases = [np.zeros_like(b) for b in self.biases]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def action_count(self) -> int:
        return self.layer_sizes[-1]

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input of length {self.input_dim}, got {x.shape[-1]}")
        return x

    def forward(self, x) -> np.ndarray:
        h = self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def td_gradients(self, x, action, target):
        """Squared TD error on the chosen action and its exact gradient.

        ``x`` may be a single input or a batch; for a batch the loss and
        gradients are means over the samples.  The target is a constant.
        """
        x = self._check_input(x)
        xb = np.atleast_2d(x)
        action = np.atleast_1d(np.asarray(action, dtype=np.int64))
        target = np.atleast_1d(np.asarray(target, dtype=np.float64))
        n = len(xb)

        acts = [xb]
        pre = []
        h = xb
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
            acts.append(h)

        rows = np.arange(n)
        err = h[rows, action] - target
        loss = float(np.mean(err ** 2))

        delta = np.zeros_like(h)
        delta[rows, action] = 2.0 * err / n
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(last, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return loss, GradientSet(gw, gb)

    def rmsprop_step(self, grads: GradientSet, lr: float = 1e-4, decay: float = 0.9, eps: float = 1e-8):
        for params, accs, gs in ((self.weights, self.acc_weights, grads.weights),
                                 (self.biases, self.acc_biases, grads.biases)):
            for p, a, g in zip(params, accs, gs):
                if p.shape != g.shape:
                    raise ValueError("gradient shape does not match parameters")
                a *= decay
                a += (1.0 - decay) * g * g
                p -= lr * g / np.sqrt(a + eps)

    def copy_from(self, src: "QNetwork"):
        """Overwrite parameters with ``src``'s; RMS state stays as is."""
        if src.layer_sizes != self.layer_sizes:
            raise ValueError(f"architecture mismatch: {src.layer_sizes} vs {self.layer_sizes}")
        for dst, s in zip(self.weights + self.biases, src.weights + src.biases):
            dst[...] = s

    def clone(self) -> "QNetwork":
        net = QNetwork(self.layer_sizes)
        net.copy_from(self)
        return net

    def flat_parameters(self) -> np.ndarray:
        return GradientSet(self.weights, self.biases).flat()

    def set_flat_parameters(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for w, b in zip(self.weights, self.biases):
            for arr in (w, b):
                arr[...] = flat[pos:pos + arr.size].reshape(arr.shape)
                pos += arr.size

    # -- snapshots ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        out = [struct.pack("<I", len(self.layer_sizes)), struct.pack(f"<{len(self.layer_sizes)}I", *self.layer_sizes)]
        for w, b in zip(self.weights, self.biases):
            out.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            out.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "QNetwork":
        (n,) = struct.unpack_from("<I", data, 0)
        sizes = struct.unpack_from(f"<{n}I", data, 4)
        net = cls(sizes)
        pos = 4 + 4 * n
        for w, b in zip(net.weights, net.biases):
            for arr in (w, b):
                nbytes = arr.size * 8
                arr[...] = np.frombuffer(data, dtype="<f8", count=arr.size, offset=pos).reshape(arr.shape)
                pos += nbytes
        if pos != len(data):
            raise ValueError(f"snapshot has {len(data) - pos} trailing bytes")
        return net

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "QNetwork":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def init_network(input_dim: int, action_count: int, rng: np.random.Generator,
                 hidden=HIDDEN_SIZES) -> QNetwork:
    if input_dim < 1 or action_count < 1:
        raise ValueError("input_dim and action_count must be >= 1")
    net = QNetwork((input_dim, *hidden, action_count))
    for w in net.weights:
        w[...] = rng.normal(0.0, 1.0 / np.sqrt(w.shape[0]), size=w.shape)
    return net


def forward(net: QNetwork, x) -> np.ndarray:
    return net.forward(x)


def td_gradients(net: QNetwork, x, action, target):
    return net.td_gradients(x, action, target)


def rmsprop_step(net: QNetwork, grads: GradientSet, lr=1e-4, decay=0.9, eps=1e-8) -> QNetwork:
    net.rmsprop_step(grads, lr, decay, eps)
    return net


def copy_parameters(src: QNetwork, dst: QNetwork) -> QNetwork:
    dst.copy_from(src)
    return dst
