"""Forward/backward passes for the layers of the recognizer, plus init and Adam.

All layers are batch-first: images are ``(N, H, W, C)`` and sequences are
``(N, T, F)``. Each layer keeps its parameters in ``params`` and the matching
gradients in ``grads`` (same keys, same shapes); ``forward`` caches whatever
``backward`` needs, and ``backward`` accumulates into ``grads`` and returns
the gradient with respect to the layer input.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeMismatch, UninitializedState

ACTIVATIONS = ("relu", "softmax", "none")


# ----------------------------------------------------------------------------
# initializers and activations
# ----------------------------------------------------------------------------
def he_normal_init(shape, fan_in, rng):
    """i.i.d. normal samples with mean 0 and stddev ``sqrt(2 / fan_in)``."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def orthogonal_init(shape, rng):
    rows, cols = shape
    a = rng.normal(0.0, 1.0, size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softmax":
        return softmax(z)
    if activation == "none":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _activation_backward(dy, z, y, activation):
    if activation == "relu":
        return dy * (z > 0)
    if activation == "softmax":
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))
    return dy


# ----------------------------------------------------------------------------
# layers
# ----------------------------------------------------------------------------
class Layer:
    trainable = True

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}

    def _register(self, key, value):
        self.params[key] = value
        self.grads[key] = np.zeros_like(value)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def parameters(self):
        """Yield ``(qualified_name, value, grad)`` for every parameter."""
        for key, value in self.params.items():
            yield f"{self.name}/{key}", value, self.grads[key]

    def n_params(self):
        return sum(v.size for v in self.params.values())


class Conv2D(Layer):
    """3x3 'same' convolution, stride 1, with optional ReLU."""

    def __init__(self, name, in_channels, out_channels, rng, activation="relu"):
        super().__init__(name)
        self.cin, self.cout = in_channels, out_channels
        self.activation = activation
        fan_in = 9 * in_channels
        self._register("kernel", he_normal_init((3, 3, in_channels, out_channels), fan_in, rng))
        self._register("bias", np.zeros(out_channels))

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[-1] != self.cin:
            raise ShapeMismatch(f"{self.name}: expected (N, H, W, {self.cin}), got {x.shape}")
        n, h, w, _ = x.shape
        cols = kernels.im2col3x3(x).reshape(n * h * w, 9 * self.cin)
        z = cols @ self.params["kernel"].reshape(9 * self.cin, self.cout) + self.params["bias"]
        y = _activate(z, self.activation)
        self._cache = (cols, z, y, x.shape)
        return y.reshape(n, h, w, self.cout)

    def backward(self, dy):
        cols, z, y, xshape = self._cache
        n, h, w, _ = xshape
        dz = _activation_backward(dy.reshape(-1, self.cout), z, y, self.activation)
        k2 = self.params["kernel"].reshape(9 * self.cin, self.cout)
        self.grads["kernel"] += (cols.T @ dz).reshape(self.params["kernel"].shape)
        self.grads["bias"] += dz.sum(axis=0)
        dcols = (dz @ k2.T).reshape(n, h, w, 9 * self.cin)
        return kernels.col2im3x3(dcols, self.cin)


class MaxPool2(Layer):
    trainable = False

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[1] < 2 or x.shape[2] < 2:
            raise ShapeMismatch(f"{self.name}: pooling needs H, W >= 2, got {x.shape}")
        out, arg = kernels.maxpool2_forward(np.ascontiguousarray(x))
        self._cache = (arg, x.shape)
        return out

    def backward(self, dy):
        arg, shape = self._cache
        return kernels.maxpool2_backward(np.ascontiguousarray(dy), arg, shape)


class Dense(Layer):
    """Affine map over the last axis followed by an activation."""

    def __init__(self, name, fan_in, units, rng, activation="none"):
        super().__init__(name)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.fin, self.fout = fan_in, units
        self.activation = activation
        self._register("kernel", he_normal_init((fan_in, units), fan_in, rng))
        self._register("bias", np.zeros(units))

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.fin:
            raise ShapeMismatch(f"{self.name}: last dim {x.shape[-1]} != {self.fin}")
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.fin)
        z = x2 @ self.params["kernel"] + self.params["bias"]
        y = _activate(z, self.activation)
        self._cache = (x2, z, y, x.shape)
        return y.reshape(*lead, self.fout)

    def backward(self, dy):
        x2, z, y, xshape = self._cache
        dz = _activation_backward(dy.reshape(-1, self.fout), z, y, self.activation)
        self.grads["kernel"] += x2.T @ dz
        self.grads["bias"] += dz.sum(axis=0)
        return (dz @ self.params["kernel"].T).reshape(xshape)


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    trainable = False

    def __init__(self, name, rate):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class LSTM(Layer):
    """Single-direction LSTM with zero initial state.

    Parameter layout follows gate order (input, forget, candidate, output)
    along the last axis: ``kernel`` is (F, 4H), ``recurrent`` is (H, 4H),
    ``bias`` is (4H,) with the forget slice initialised to 1.
    """

    def __init__(self, name, fan_in, hidden, rng, reverse=False):
        super().__init__(name)
        self.fin, self.hidden, self.reverse = fan_in, hidden, reverse
        H = hidden
        self._register("kernel", he_normal_init((fan_in, 4 * H), fan_in, rng))
        self._register("recurrent", np.concatenate([orthogonal_init((H, H), rng) for _ in range(4)], axis=1))
        bias = np.zeros(4 * H)
        bias[H : 2 * H] = 1.0
        self._register("bias", bias)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[-1] != self.fin:
            raise ShapeMismatch(f"{self.name}: expected (N, T, {self.fin}), got {x.shape}")
        if self.reverse:
            x = x[:, ::-1]
        n, T, _ = x.shape
        H = self.hidden
        U = self.params["recurrent"]
        zx = (x.reshape(n * T, self.fin) @ self.params["kernel"]).reshape(n, T, 4 * H) + self.params["bias"]
        gates = np.empty((n, T, 4 * H))
        cs = np.empty((n, T, H))
        hs = np.empty((n, T, H))
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        for t in range(T):
            z = zx[:, t] + h @ U
            g = gates[:, t]
            g[:, : 2 * H] = sigmoid(z[:, : 2 * H])
            g[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
            g[:, 3 * H :] = sigmoid(z[:, 3 * H :])
            c = g[:, H : 2 * H] * c + g[:, :H] * g[:, 2 * H : 3 * H]
            h = g[:, 3 * H :] * np.tanh(c)
            cs[:, t] = c
            hs[:, t] = h
        self._cache = (x, gates, cs, hs)
        return hs[:, ::-1] if self.reverse else hs

    def backward(self, dy):
        x, gates, cs, hs = self._cache
        if self.reverse:
            dy = dy[:, ::-1]
        n, T, _ = x.shape
        H = self.hidden
        U = self.params["recurrent"]
        dz_all = np.empty((n, T, 4 * H))
        dh_next = np.zeros((n, H))
        dc_next = np.zeros((n, H))
        dU = self.grads["recurrent"]
        for t in range(T - 1, -1, -1):
            g = gates[:, t]
            i, f, cand, o = g[:, :H], g[:, H : 2 * H], g[:, 2 * H : 3 * H], g[:, 3 * H :]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((n, H))
            tc = np.tanh(cs[:, t])
            dh = dy[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :H] = dc * cand * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dc * i * (1.0 - cand * cand)
            dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            if t > 0:
                dU += hs[:, t - 1].T @ dz
            dh_next = dz @ U.T
        dz2 = dz_all.reshape(n * T, 4 * H)
        self.grads["kernel"] += x.reshape(n * T, self.fin).T @ dz2
        self.grads["bias"] += dz2.sum(axis=0)
        dx = (dz2 @ self.params["kernel"].T).reshape(n, T, self.fin)
        return dx[:, ::-1] if self.reverse else dx


class BiLSTM(Layer):
    """Forward and backward LSTMs over the same input, outputs concatenated."""

    def __init__(self, name, fan_in, hidden, rng):
        super().__init__(name)
        self.hidden = hidden
        self.fwd = LSTM(f"{name}/fwd", fan_in, hidden, rng)
        self.bwd = LSTM(f"{name}/bwd", fan_in, hidden, rng, reverse=True)

    def parameters(self):
        yield from self.fwd.parameters()
        yield from self.bwd.parameters()

    def zero_grad(self):
        self.fwd.zero_grad()
        self.bwd.zero_grad()

    def n_params(self):
        return self.fwd.n_params() + self.bwd.n_params()

    def forward(self, x, training=False, rng=None):
        return np.concatenate([self.fwd.forward(x), self.bwd.forward(x)], axis=-1)

    def backward(self, dy):
        H = self.hidden
        return self.fwd.backward(dy[..., :H]) + self.bwd.backward(dy[..., H:])


# ----------------------------------------------------------------------------
# functional forms (single sample or batch)
# ----------------------------------------------------------------------------
def _with_params(layer, **values):
    for key, value in values.items():
        value = np.asarray(value, dtype=np.float64)
        if value.shape != layer.params[key].shape:
            raise ShapeMismatch(f"{layer.name}/{key}: expected {layer.params[key].shape}, got {value.shape}")
        layer.params[key] = value
    return layer


def conv2d_forward(x, kernel, bias, activation="none"):
    """3x3 same-padded cross-correlation of an (H, W, Cin) or (N, H, W, Cin) input."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[:2] != (3, 3):
        raise ShapeMismatch(f"kernel must be (3, 3, Cin, Cout), got {kernel.shape}")
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.ndim != 4 or xb.shape[-1] != kernel.shape[2]:
        raise ShapeMismatch(f"input channels {x.shape[-1]} do not match kernel {kernel.shape}")
    layer = Conv2D("conv", kernel.shape[2], kernel.shape[3], np.random.default_rng(0), activation)
    out = _with_params(layer, kernel=kernel, bias=bias).forward(xb)
    return out[0] if single else out


def maxpool2(x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    out = MaxPool2("pool").forward(x[None] if single else x)
    return out[0] if single else out


def dense_forward(x, weights, bias, activation="none"):
    weights = np.asarray(weights, dtype=np.float64)
    layer = Dense("dense", weights.shape[0], weights.shape[1], np.random.default_rng(0), activation)
    return _with_params(layer, kernel=weights, bias=bias).forward(np.asarray(x, dtype=np.float64))


def dropout(x, rate, training, rng=None):
    return Dropout("dropout", rate).forward(np.asarray(x, dtype=np.float64), training, rng)


def lstm_forward(seq, kernel, recurrent, bias, direction="fwd"):
    """Run one LSTM over a (T, F) or (N, T, F) sequence; direction 'fwd' or 'bwd'."""
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    seq = np.asarray(seq, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    H = kernel.shape[1] // 4
    layer = LSTM("lstm", kernel.shape[0], H, np.random.default_rng(0), reverse=direction == "bwd")
    _with_params(layer, kernel=kernel, recurrent=recurrent, bias=bias)
    single = seq.ndim == 2
    out = layer.forward(seq[None] if single else seq)
    return out[0] if single else out


def bilstm_forward(seq, fwd_params, bwd_params):
    """``fwd_params``/``bwd_params`` are (kernel, recurrent, bias) triples."""
    if np.shape(fwd_params[1]) != np.shape(bwd_params[1]):
        raise ShapeMismatch("both directions must share the hidden size")
    return np.concatenate(
        [lstm_forward(seq, *fwd_params, direction="fwd"), lstm_forward(seq, *bwd_params, direction="bwd")],
        axis=-1,
    )


# ----------------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------------
@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params, **hyper):
        """Allocate zero moments for an iterable of ``(name, value, grad)``."""
        state = cls(**hyper)
        for name, value, _ in params:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        return state


def adam_step(state, params):
    """Apply one bias-corrected Adam update in place; returns ``state``."""
    params = list(params)
    for name, value, _ in params:
        if name not in state.m or state.m[name].shape != value.shape:
            raise UninitializedState(f"no Adam moments for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, value, grad in params:
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        value -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state
