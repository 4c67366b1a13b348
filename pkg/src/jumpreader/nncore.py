"""Minimal differentiable kernel: dense layers, an LSTM cell, softmax, dropout,
gradient accumulation/clipping, RMSprop, and the binary checkpoint format.

Forward functions return a cache holding exactly what the matching backward
needs; backward functions return input gradients and accumulate parameter
gradients into a Gradients store. Everything is float64 numpy in memory;
checkpoints store little-endian float32.
"""

from __future__ import annotations

import struct

import numpy as np

CHECKPOINT_MAGIC = b"SJLSTM01"


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits):
    """Stable softmax: probabilities are positive and sum to 1."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def glorot_uniform(rng, n_out, n_in):
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_out, n_in))


class Dense:
    """Fully connected layer y = act(Wx + b), activation linear or relu."""

    def __init__(self, w, b, activation="linear"):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation: {activation!r}")
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"inconsistent dense shapes: W {w.shape}, b {b.shape}")
        self.w = w
        self.b = b
        self.activation = activation

    @classmethod
    def glorot(cls, rng, n_in, n_out, activation="linear"):
        return cls(glorot_uniform(rng, n_out, n_in), np.zeros(n_out), activation)

    @property
    def n_in(self):
        return self.w.shape[1]

    @property
    def n_out(self):
        return self.w.shape[0]


def dense_forward(layer: Dense, x):
    """Returns (y, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.n_in,):
        raise ValueError(f"dense input has shape {x.shape}, expected ({layer.n_in},)")
    pre = layer.w @ x + layer.b
    y = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    return y, (x, pre)


def dense_backward(layer: Dense, cache, dy):
    """Returns (dx, dw, db) for upstream gradient dy."""
    x, pre = cache
    dpre = dy * (pre > 0.0) if layer.activation == "relu" else dy
    dw = np.outer(dpre, x)
    db = dpre
    dx = layer.w.T @ dpre
    return dx, dw, db


class LstmCell:
    """Standard LSTM cell over concat(x, h); gates stored stacked [i, f, o, g].

    w has shape (4m, d+m) and b shape (4m,); per-gate views are exposed for
    inspection. All four gates share the input dimension d+m.
    """

    def __init__(self, w, b, cell_size):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        m = cell_size
        if w.ndim != 2 or w.shape[0] != 4 * m or b.shape != (4 * m,):
            raise ValueError(f"inconsistent lstm shapes: W {w.shape}, b {b.shape}, m={m}")
        if w.shape[1] <= m:
            raise ValueError("lstm input dimension must include both x and h")
        self.w = w
        self.b = b
        self.m = m

    @classmethod
    def glorot(cls, rng, input_dim, cell_size):
        w = glorot_uniform(rng, 4 * cell_size, input_dim + cell_size)
        return cls(w, np.zeros(4 * cell_size), cell_size)

    @property
    def input_dim(self):
        return self.w.shape[1] - self.m

    def _gate(self, idx):
        m = self.m
        return self.w[idx * m:(idx + 1) * m], self.b[idx * m:(idx + 1) * m]

    @property
    def input_gate(self):
        return self._gate(0)

    @property
    def forget_gate(self):
        return self._gate(1)

    @property
    def output_gate(self):
        return self._gate(2)

    @property
    def candidate(self):
        return self._gate(3)


def lstm_step(cell: LstmCell, x, h_prev, c_prev):
    """One LSTM update; returns (h, c, cache)."""
    m = cell.m
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cell.input_dim,) or h_prev.shape != (m,) or c_prev.shape != (m,):
        raise ValueError(
            f"lstm step shapes x={x.shape} h={h_prev.shape} c={c_prev.shape}, "
            f"expected ({cell.input_dim},), ({m},), ({m},)"
        )
    z = np.concatenate([x, h_prev])
    pre = cell.w @ z + cell.b
    i = sigmoid(pre[:m])
    f = sigmoid(pre[m:2 * m])
    o = sigmoid(pre[2 * m:3 * m])
    g = np.tanh(pre[3 * m:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (z, c_prev, i, f, o, g, tanh_c)
    return h, c, cache


def lstm_step_backward(cell: LstmCell, cache, dh, dc):
    """Backward through one step; returns (dx, dh_prev, dc_prev, dw, db)."""
    z, c_prev, i, f, o, g, tanh_c = cache
    m = cell.m
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    dpre = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
    ])
    dw = np.outer(dpre, z)
    db = dpre
    dz = cell.w.T @ dpre
    return dz[:cell.input_dim], dz[cell.input_dim:], dc_prev, dw, db


def dropout_mask(shape, rate, rng):
    """Inverted-dropout multiplier: zeros with probability rate, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(x, rate, training, rng=None):
    """Apply inverted dropout in training mode; identity at inference."""
    if not training or rate == 0.0:
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        return x
    return x * dropout_mask(np.shape(x), rate, rng)


class Gradients:
    """One accumulator per named parameter tensor, zeroed at batch start."""

    def __init__(self, tensors):
        self.data = {name: np.zeros_like(arr) for name, arr in tensors.items()}

    def zero(self):
        for arr in self.data.values():
            arr.fill(0.0)

    def add(self, name, grad):
        self.data[name] += grad

    def scale(self, factor):
        for arr in self.data.values():
            arr *= factor

    def global_norm(self):
        total = 0.0
        for arr in self.data.values():
            total += float(np.sum(arr * arr))
        return np.sqrt(total)

    def __getitem__(self, name):
        return self.data[name]

    def items(self):
        return self.data.items()


def clip_gradients(grads: Gradients, threshold=0.1):
    """Global-norm clipping: rescale everything when the joint norm exceeds threshold."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    norm = grads.global_norm()
    if norm > threshold:
        grads.scale(threshold / norm)
    return grads


class RmsProp:
    """RMSprop with squared-gradient moving average (decay 0.9, eps 1e-8)."""

    def __init__(self, lr, decay=0.9, eps=1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.avg_sq = {}

    def update(self, tensors, grads: Gradients, frozen=()):
        """In-place parameter update; tensors in `frozen` are left untouched."""
        for name, param in tensors.items():
            if name in frozen:
                continue
            g = grads[name]
            v = self.avg_sq.get(name)
            if v is None:
                v = np.zeros_like(param)
                self.avg_sq[name] = v
            v *= self.decay
            v += (1.0 - self.decay) * g * g
            param -= self.lr * g / (np.sqrt(v) + self.eps)


def save_checkpoint(path, tensors):
    """Write tensors as magic + (name, shape) manifest + row-major f32 LE data."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n, path):
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"{path}: truncated checkpoint")
    return data


def load_checkpoint(path):
    """Read a checkpoint back into float64 arrays keyed by tensor name."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        count = struct.unpack("<I", _read_exact(fh, 4, path))[0]
        manifest = []
        for _ in range(count):
            name_len = struct.unpack("<H", _read_exact(fh, 2, path))[0]
            name = _read_exact(fh, name_len, path).decode("utf-8")
            ndim = struct.unpack("<B", _read_exact(fh, 1, path))[0]
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, path))
            manifest.append((name, shape))
        tensors = {}
        for name, shape in manifest:
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 4 * n, path), dtype="<f4")
            tensors[name] = data.reshape(shape).astype(np.float64)
    return tensors
