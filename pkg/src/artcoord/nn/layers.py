"""Dense-tensor layers with explicit forward and backward passes.

All spatial layers use the (batch, channels, height, width) layout and
cross-correlation convention (no kernel flip).  Each layer caches whatever
its backward pass needs during forward; ``backward`` consumes the gradient
w.r.t. the output and fills ``grads`` (overwriting, not accumulating) while
returning the gradient w.r.t. the input.  ``state`` holds non-trainable
buffers (batch-norm running statistics).

The engine is float32 by default; the finite-difference harness builds
float64 instances of the same classes.
"""

from __future__ import annotations

import numpy as np


def conv_output_size(size: int, kernel: int, dilation: int, stride: int, padding: str) -> int:
    """Output extent of a convolution along one axis.

    'same' gives ceil(size / stride); 'valid' gives
    floor((size - effective_kernel) / stride) + 1 where the effective kernel
    is 1 + (kernel - 1) * dilation.
    """
    effective = 1 + (kernel - 1) * dilation
    if padding == "same":
        return -(-size // stride)
    if padding == "valid":
        if effective > size:
            raise ValueError(f"effective kernel {effective} exceeds input extent {size}")
        return (size - effective) // stride + 1
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _same_padding(size: int, kernel: int, dilation: int, stride: int) -> tuple[int, int]:
    """(before, after) zero padding; the extra element goes after."""
    effective = 1 + (kernel - 1) * dilation
    out = -(-size // stride)
    total = max((out - 1) * stride + effective - size, 0)
    return total // 2, total - total // 2


class Layer:
    """Base layer: parameter-free and shape-preserving unless overridden."""

    def __init__(self, name: str = "layer"):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reg_loss(self) -> float:
        return 0.0

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


def he_uniform(rng, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    """2-D convolution with dilation, stride, and same/valid zero padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: tuple[int, int],
        dilation: tuple[int, int] = (1, 1),
        stride: tuple[int, int] = (1, 1),
        padding: str = "same",
        rng=None,
        dtype=np.float32,
        name: str = "conv",
    ):
        super().__init__(name)
        if padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
        if min(kernel) < 1 or min(dilation) < 1 or min(stride) < 1:
            raise ValueError("kernel, dilation and stride must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = tuple(kernel)
        self.dilation = tuple(dilation)
        self.stride = tuple(stride)
        self.padding = padding
        rng = rng if rng is not None else np.random.default_rng()
        kh, kw = self.kernel
        fan_in = in_channels * kh * kw
        self.params["w"] = he_uniform(rng, (out_channels, in_channels, kh, kw), fan_in, dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)

    def output_shape(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        dh, dw = self.dilation
        sh, sw = self.stride
        return (
            conv_output_size(h, kh, dh, sh, self.padding),
            conv_output_size(w, kw, dw, sw, self.padding),
        )

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.name}: expected input (B, {self.in_channels}, H, W), got {x.shape}"
            )
        b, c, h, w = x.shape
        kh, kw = self.kernel
        dh, dw = self.dilation
        sh, sw = self.stride
        oh, ow = self.output_shape(h, w)
        if self.padding == "same":
            pt, pb = _same_padding(h, kh, dh, sh)
            pl, pr = _same_padding(w, kw, dw, sw)
            xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        else:
            pt = pl = 0
            xp = x
        sb, sc, shh, sww = xp.strides
        view = np.lib.stride_tricks.as_strided(
            xp,
            shape=(b, c, oh, ow, kh, kw),
            strides=(sb, sc, shh * sh, sww * sw, shh * dh, sww * dw),
        )
        cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * kh * kw)
        wmat = self.params["w"].reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.params["b"]
        self._cols = cols
        self._x_shape = x.shape
        self._padded_shape = xp.shape
        self._pad_origin = (pt, pl)
        self._out_hw = (oh, ow)
        return out.reshape(b, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad_out):
        b, c, h, w = self._x_shape
        kh, kw = self.kernel
        dh, dw = self.dilation
        sh, sw = self.stride
        oh, ow = self._out_hw
        dyf = grad_out.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self.grads["w"] = (dyf.T @ self._cols).reshape(self.params["w"].shape)
        self.grads["b"] = dyf.sum(axis=0)
        dcols = (dyf @ self.params["w"].reshape(self.out_channels, -1)).reshape(
            b, oh, ow, c, kh, kw
        )
        dxp = np.zeros(self._padded_shape, dtype=grad_out.dtype)
        for i in range(kh):
            rows = slice(i * dh, i * dh + sh * (oh - 1) + 1, sh)
            for j in range(kw):
                cols = slice(j * dw, j * dw + sw * (ow - 1) + 1, sw)
                dxp[:, :, rows, cols] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        pt, pl = self._pad_origin
        return dxp[:, :, pt : pt + h, pl : pl + w]


class BatchNorm(Layer):
    """Per-channel batch normalization (axis 1) with running statistics.

    Training mode normalizes with the biased batch statistics and nudges the
    running buffers by ``momentum`` toward them; eval mode uses the buffers.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32, name: str = "bn"):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.state["running_mean"] = np.zeros(channels, dtype=dtype)
        self.state["running_var"] = np.ones(channels, dtype=dtype)

    def _bshape(self, ndim: int):
        return (1, self.channels) + (1,) * (ndim - 2)

    def forward(self, x, train=False, rng=None):
        if x.ndim < 2 or x.shape[1] != self.channels:
            raise ValueError(f"{self.name}: expected (B, {self.channels}, ...), got {x.shape}")
        axes = (0,) + tuple(range(2, x.ndim))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.state["running_mean"] += self.momentum * (mean - self.state["running_mean"])
            self.state["running_var"] += self.momentum * (var - self.state["running_var"])
        else:
            mean = self.state["running_mean"]
            var = self.state["running_var"]
        shape = self._bshape(x.ndim)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._xhat = xhat
        self._inv_std = inv_std
        self._axes = axes
        self._train_mode = train
        self._count = x.size // self.channels
        return self.params["gamma"].reshape(shape) * xhat + self.params["beta"].reshape(shape)

    def backward(self, grad_out):
        shape = self._bshape(grad_out.ndim)
        axes = self._axes
        self.grads["gamma"] = (grad_out * self._xhat).sum(axis=axes)
        self.grads["beta"] = grad_out.sum(axis=axes)
        scale = (self.params["gamma"] * self._inv_std).reshape(shape)
        if not self._train_mode:
            return grad_out * scale
        n = self._count
        return scale * (
            grad_out
            - self.grads["beta"].reshape(shape) / n
            - self._xhat * self.grads["gamma"].reshape(shape) / n
        )


class Dropout(Layer):
    """Inverted dropout: active only in training mode."""

    def __init__(self, p: float, name: str = "drop"):
        super().__init__(name)
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError(f"{self.name}: training-mode dropout needs an rng")
        self._mask = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class MaxPool(Layer):
    """Non-overlapping max pooling; trailing remainder rows/columns dropped."""

    def __init__(self, pool: tuple[int, int] = (2, 1), name: str = "pool"):
        super().__init__(name)
        if min(pool) < 1:
            raise ValueError(f"pool extents must be positive, got {pool}")
        self.pool = tuple(pool)

    def forward(self, x, train=False, rng=None):
        b, c, h, w = x.shape
        ph, pw = self.pool
        oh, ow = h // ph, w // pw
        if oh == 0 or ow == 0:
            raise ValueError(f"{self.name}: input {x.shape} smaller than pool {self.pool}")
        windows = (
            x[:, :, : oh * ph, : ow * pw]
            .reshape(b, c, oh, ph, ow, pw)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, oh, ow, ph * pw)
        )
        self._argmax = windows.argmax(axis=-1)
        self._x_shape = x.shape
        return np.take_along_axis(windows, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad_out):
        b, c, h, w = self._x_shape
        ph, pw = self.pool
        oh, ow = h // ph, w // pw
        dwin = np.zeros((b, c, oh, ow, ph * pw), dtype=grad_out.dtype)
        np.put_along_axis(dwin, self._argmax[..., None], grad_out[..., None], axis=-1)
        dx = np.zeros((b, c, h, w), dtype=grad_out.dtype)
        dx[:, :, : oh * ph, : ow * pw] = (
            dwin.reshape(b, c, oh, ow, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh * ph, ow * pw)
        )
        return dx


class Dense(Layer):
    """Fully connected layer, optionally L2-regularized.

    The penalty (l2/2)*||w||^2 is reported through ``reg_loss`` and its
    gradient l2*w is added to the weight gradient, so analytic gradients
    match finite differences of the total loss.
    """

    def __init__(self, in_features: int, out_features: int, l2: float = 0.0,
                 rng=None, dtype=np.float32, name: str = "dense"):
        super().__init__(name)
        if l2 < 0:
            raise ValueError(f"l2 coefficient must be >= 0, got {l2}")
        self.in_features = in_features
        self.out_features = out_features
        self.l2 = l2
        rng = rng if rng is not None else np.random.default_rng()
        self.params["w"] = he_uniform(rng, (in_features, out_features), in_features, dtype)
        self.params["b"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"{self.name}: expected input (B, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad_out):
        self.grads["w"] = self._x.T @ grad_out
        if self.l2:
            self.grads["w"] += self.l2 * self.params["w"]
        self.grads["b"] = grad_out.sum(axis=0)
        return grad_out @ self.params["w"].T

    def reg_loss(self):
        if not self.l2:
            return 0.0
        return 0.5 * self.l2 * float(np.sum(self.params["w"].astype(np.float64) ** 2))


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        super().__init__(name)

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, grad_out):
        return np.where(self._mask, grad_out, 0)


class LeakyReLU(Layer):
    def __init__(self, alpha: float = 0.01, name: str = "lrelu"):
        super().__init__(name)
        self.alpha = alpha

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, grad_out):
        return np.where(self._mask, grad_out, self.alpha * grad_out)


class Sigmoid(Layer):
    def __init__(self, name: str = "sigmoid"):
        super().__init__(name)

    def forward(self, x, train=False, rng=None):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._y = out
        return out

    def backward(self, grad_out):
        return grad_out * self._y * (1.0 - self._y)


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        super().__init__(name)

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Sequential:
    """A chain of layers/containers applied in order."""

    def __init__(self, layers: list, name: str = "seq"):
        self.name = name
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def named_layers(self, prefix: str = ""):
        for layer in self.layers:
            if isinstance(layer, (Sequential, ParallelConcat)):
                yield from layer.named_layers(f"{prefix}{layer.name}/")
            else:
                yield f"{prefix}{layer.name}", layer

    def reg_loss(self):
        return sum(layer.reg_loss() for layer in self.layers)

    def __repr__(self):
        return f"Sequential({self.name!r}, {len(self.layers)} layers)"


class ParallelConcat:
    """Feed the same input through parallel branches and concatenate outputs
    along the channel axis."""

    def __init__(self, branches: list[Sequential], name: str = "branches"):
        self.name = name
        self.branches = list(branches)

    def forward(self, x, train=False, rng=None):
        outs = [branch.forward(x, train=train, rng=rng) for branch in self.branches]
        self._widths = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1)

    def backward(self, grad_out):
        grad_in = None
        offset = 0
        for branch, width in zip(self.branches, self._widths):
            part = branch.backward(grad_out[:, offset : offset + width])
            grad_in = part if grad_in is None else grad_in + part
            offset += width
        return grad_in

    def named_layers(self, prefix: str = ""):
        for branch in self.branches:
            yield from branch.named_layers(f"{prefix}{branch.name}/")

    def reg_loss(self):
        return sum(branch.reg_loss() for branch in self.branches)

    def __repr__(self):
        return f"ParallelConcat({self.name!r}, {len(self.branches)} branches)"
