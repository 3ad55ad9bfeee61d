"""Neural network layers with explicit forward/backward passes.

Conventions: activations flow channels-last, (batch, time, freq, channels)
for 2-D stages and (batch, time, channels) for recurrent stages. Each layer
owns `params` and matching `grads` dicts; backward() consumes the gradient
w.r.t. its output and returns the gradient w.r.t. its input, accumulating
parameter gradients along the way. Non-trainable buffers (batch-norm running
statistics) live in `state`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def _sigmoid(x):
    # Clip to keep exp() finite; sigmoid saturates anyway.
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())


class Conv2D(Layer):
    """Square-kernel 2-D convolution, stride 1, valid padding."""

    kind = "conv"

    def __init__(self, kernel: int, in_channels: int, filters: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.kernel = kernel
        fan_in = kernel * kernel * in_channels
        limit = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-limit, limit,
                                       (kernel, kernel, in_channels, filters)).astype(dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)
        self.zero_grads()

    def forward(self, x, train):
        k = self.kernel
        b, h, w, c = x.shape
        if h < k or w < k:
            raise ShapeError(f"conv input {h}x{w} smaller than {k}x{k} kernel")
        oh, ow = h - k + 1, w - k + 1
        # im2col via k*k cheap slice copies; layout matches W.reshape(k*k*c, -1)
        cols = np.empty((b, oh, ow, k, k, c), dtype=x.dtype)
        for p in range(k):
            for q in range(k):
                cols[:, :, :, p, q, :] = x[:, p:p + oh, q:q + ow, :]
        cols = cols.reshape(b * oh * ow, k * k * c)
        out = cols @ self.params["W"].reshape(k * k * c, -1)
        out += self.params["b"]
        self._cache = (cols, x.shape)
        return out.reshape(b, oh, ow, -1)

    def backward(self, dout):
        cols, x_shape = self._cache
        k = self.kernel
        b, h, w, c = x_shape
        oh, ow = h - k + 1, w - k + 1
        dflat = dout.reshape(b * oh * ow, -1)
        self.grads["W"] += (cols.T @ dflat).reshape(self.params["W"].shape)
        self.grads["b"] += dflat.sum(axis=0)
        dcols = dflat @ self.params["W"].reshape(k * k * c, -1).T
        dcols = dcols.reshape(b, oh, ow, k, k, c)
        dx = np.zeros(x_shape, dtype=dout.dtype)
        for p in range(k):
            for q in range(k):
                dx[:, p:p + oh, q:q + ow, :] += dcols[:, :, :, p, q, :]
        return dx


class BatchNorm(Layer):
    """Per-channel normalization over all leading axes.

    Train mode normalizes with batch statistics and updates running
    statistics; inference mode uses the running values.
    """

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.state["running_mean"] = np.zeros(channels, dtype=dtype)
        self.state["running_var"] = np.ones(channels, dtype=dtype)
        self.zero_grads()

    def forward(self, x, train):
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.state["running_mean"] = ((1 - m) * self.state["running_mean"]
                                          + m * mean).astype(x.dtype)
            self.state["running_var"] = ((1 - m) * self.state["running_var"]
                                         + m * var).astype(x.dtype)
        else:
            mean = self.state["running_mean"].astype(x.dtype)
            var = self.state["running_var"].astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        # y = a*x + shift with per-channel a, shift (single fused pass)
        a = self.params["gamma"] * inv_std
        out = x * a
        out += self.params["beta"] - mean * a
        self._cache = (x, mean, inv_std, axes, train)
        return out

    def _xhat(self):
        x, mean, inv_std, _, _ = self._cache
        return (x - mean) * inv_std

    def backward(self, dout):
        x, mean, inv_std, axes, train = self._cache
        xhat = (x - mean) * inv_std
        self.grads["gamma"] += (dout * xhat).sum(axis=axes)
        self.grads["beta"] += dout.sum(axis=axes)
        g = self.params["gamma"] * inv_std
        if not train:
            return dout * g
        dmean = dout.mean(axis=axes)
        dproj = (dout * xhat).mean(axis=axes)
        dx = dout - dmean
        dx -= xhat * dproj
        dx *= g
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class ELU(Layer):
    kind = "elu"

    def forward(self, x, train):
        neg = x <= 0
        out = np.where(neg, np.expm1(np.minimum(x, 0.0)), x)
        # derivative: exp(x) = out+1 on the negative side, 1 elsewhere
        self._deriv = np.where(neg, out + 1.0, np.asarray(1.0, dtype=x.dtype))
        return out

    def backward(self, dout):
        return dout * self._deriv


class MaxPool(Layer):
    """Non-overlapping (ph, pw) max pooling; trailing remainders are dropped."""

    kind = "pool"

    def __init__(self, pool: tuple[int, int]):
        super().__init__()
        self.pool = pool

    def forward(self, x, train):
        ph, pw = self.pool
        b, h, w, c = x.shape
        oh, ow = h // ph, w // pw
        cropped = x[:, : oh * ph, : ow * pw, :]
        win = cropped.reshape(b, oh, ph, ow, pw, c).transpose(0, 1, 3, 5, 2, 4)
        win = np.ascontiguousarray(win).reshape(b, oh, ow, c, ph * pw)
        self._argmax = win.argmax(axis=-1)
        self._x_shape = x.shape
        return np.take_along_axis(win, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        ph, pw = self.pool
        b, h, w, c = self._x_shape
        oh, ow = h // ph, w // pw
        dwin = np.zeros((b, oh, ow, c, ph * pw), dtype=dout.dtype)
        np.put_along_axis(dwin, self._argmax[..., None], dout[..., None], axis=-1)
        dx = np.zeros(self._x_shape, dtype=dout.dtype)
        dcrop = dwin.reshape(b, oh, ow, c, ph, pw).transpose(0, 1, 4, 2, 5, 3)
        dx[:, : oh * ph, : ow * pw, :] = dcrop.reshape(b, oh * ph, ow * pw, c)
        return dx


class Dropout(Layer):
    """Inverted dropout: active only in train mode, identity at inference."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        self.rate = rate
        self.rng: np.random.Generator | None = None

    def forward(self, x, train):
        if not train or self.rate <= 0.0:
            self._mask = None
            return x
        if self.rng is None:
            raise RuntimeError("dropout used in train mode without an RNG")
        keep = 1.0 - self.rate
        mask = self.rng.random(x.shape, dtype=np.float32) < keep
        self._mask = mask.astype(x.dtype) / np.asarray(keep, dtype=x.dtype)
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class GlobalAvgPool(Layer):
    """(b, h, w, c) -> (b, c), mean over the spatial grid."""

    kind = "gap"

    def forward(self, x, train):
        self._x_shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        b, h, w, c = self._x_shape
        scaled = dout / np.asarray(h * w, dtype=dout.dtype)
        return np.broadcast_to(scaled[:, None, None, :], self._x_shape).copy()


class FreqMean(Layer):
    """(b, time, freq, c) -> (b, time, c): average away the frequency axis."""

    kind = "freqmean"

    def forward(self, x, train):
        self._x_shape = x.shape
        return x.mean(axis=2)

    def backward(self, dout):
        b, t, f, c = self._x_shape
        scaled = dout / np.asarray(f, dtype=dout.dtype)
        return np.broadcast_to(scaled[:, :, None, :], self._x_shape).copy()


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        limit = np.sqrt(6.0 / in_dim)
        self.params["W"] = rng.uniform(-limit, limit, (in_dim, out_dim)).astype(dtype)
        self.params["b"] = np.zeros(out_dim, dtype=dtype)
        self.zero_grads()

    def forward(self, x, train):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] += self._x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T


class GRU(Layer):
    """Gated recurrent unit over the time axis, zero initial state.

    Gate order in the fused matrices is [update z, reset r, candidate c],
    one bias per gate (3*hidden biases per layer):

        z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
        r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
        c_t = tanh(x_t Wc + (r_t * h_{t-1}) Uc + bc)
        h_t = z_t * h_{t-1} + (1 - z_t) * c_t

    Returns the full (b, t, h) sequence or only the final state.
    """

    kind = "gru"

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator,
                 return_sequences: bool, dtype=np.float32):
        super().__init__()
        self.hidden = hidden
        self.return_sequences = return_sequences
        lim_w = np.sqrt(6.0 / (in_dim + hidden))
        lim_u = np.sqrt(6.0 / (2 * hidden))
        self.params["W"] = rng.uniform(-lim_w, lim_w, (in_dim, 3 * hidden)).astype(dtype)
        self.params["U"] = rng.uniform(-lim_u, lim_u, (hidden, 3 * hidden)).astype(dtype)
        self.params["b"] = np.zeros(3 * hidden, dtype=dtype)
        self.zero_grads()

    def forward(self, x, train):
        b, t, d = x.shape
        nh = self.hidden
        u = self.params["U"]
        xp = x.reshape(b * t, d) @ self.params["W"] + self.params["b"]
        xp = xp.reshape(b, t, 3 * nh)
        h = np.zeros((b, nh), dtype=x.dtype)
        hs = np.empty((b, t, nh), dtype=x.dtype)
        zs = np.empty_like(hs)
        rs = np.empty_like(hs)
        cs = np.empty_like(hs)
        hp = np.empty_like(hs)  # h_{t-1} per step
        for i in range(t):
            hp[:, i] = h
            zr = xp[:, i, : 2 * nh] + h @ u[:, : 2 * nh]
            z = _sigmoid(zr[:, :nh])
            r = _sigmoid(zr[:, nh:])
            c = np.tanh(xp[:, i, 2 * nh:] + (r * h) @ u[:, 2 * nh:])
            h = z * h + (1.0 - z) * c
            zs[:, i], rs[:, i], cs[:, i], hs[:, i] = z, r, c, h
        self._cache = (x, zs, rs, cs, hp)
        return hs if self.return_sequences else h

    def backward(self, dout):
        x, zs, rs, cs, hp = self._cache
        b, t, d = x.shape
        nh = self.hidden
        u = self.params["U"]
        uz, ur, uc = u[:, :nh], u[:, nh:2 * nh], u[:, 2 * nh:]
        dxp = np.zeros((b, t, 3 * nh), dtype=dout.dtype)
        du = np.zeros_like(u)
        dh = np.zeros((b, nh), dtype=dout.dtype)
        for i in range(t - 1, -1, -1):
            if self.return_sequences:
                dh = dh + dout[:, i]
            elif i == t - 1:
                dh = dh + dout
            z, r, c, h_prev = zs[:, i], rs[:, i], cs[:, i], hp[:, i]
            dz = dh * (h_prev - c)
            dc = dh * (1.0 - z)
            dh_prev = dh * z
            dac = dc * (1.0 - c * c)
            drh = dac @ uc.T
            du[:, 2 * nh:] += (r * h_prev).T @ dac
            dr = drh * h_prev
            dh_prev = dh_prev + drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            du[:, :nh] += h_prev.T @ daz
            du[:, nh:2 * nh] += h_prev.T @ dar
            dh_prev = dh_prev + daz @ uz.T + dar @ ur.T
            dxp[:, i, :nh] = daz
            dxp[:, i, nh:2 * nh] = dar
            dxp[:, i, 2 * nh:] = dac
            dh = dh_prev
        flat = dxp.reshape(b * t, 3 * nh)
        self.grads["W"] += x.reshape(b * t, d).T @ flat
        self.grads["U"] += du
        self.grads["b"] += flat.sum(axis=0)
        return (flat @ self.params["W"].T).reshape(b, t, d)
