"""Noise-estimator network: a small 4-layer convnet over latent grids.

Input is the channel concatenation of the noisy latent, the encoded masked
image, and the latent-resolution mask. The timestep enters through a
sinusoidal embedding mapped by a linear layer and added to the first layer's
activations. Arithmetic is float64 end to end with hand-written backprop, so
training is bit-reproducible under a fixed seed and analytic gradients can
be checked directly against finite differences (SiLU keeps the loss smooth,
so central differences converge everywhere).

Layers operate channels-last: (N, H, W, C). Convolutions are 3x3, stride 1,
zero padded, realized as im2col matmuls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Classic sin/cos position encoding of integer timesteps, shape (N, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N, H, W, 9C) patches of the zero-padded input."""
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    cols = np.empty((n, h, w, 9 * c), dtype=x.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, :, k * c : (k + 1) * c] = xp[:, di : di + h, dj : dj + w, :]
            k += 1
    return cols

def _col2im(dcols: np.ndarray, c: int) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back to (N, H, W, C)."""
    n, h, w, _ = dcols.shape
    dxp = np.zeros((n, h + 2, w + 2, c), dtype=dcols.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, di : di + h, dj : dj + w, :] += dcols[:, :, :, k * c : (k + 1) * c]
            k += 1
    return dxp[:, 1:-1, 1:-1, :]


def _conv_forward(x_cols: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, h, wd, ck = x_cols.shape
    out = x_cols.reshape(-1, ck) @ w + b
    return out.reshape(n, h, wd, w.shape[1])


def _silu(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """x * sigmoid(x); returns (activation, sigmoid) for the backward pass."""
    s = np.empty_like(h)
    pos = h >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-h[pos]))
    e = np.exp(h[~pos])
    s[~pos] = e / (1.0 + e)
    return h * s, s


def _silu_grad(h: np.ndarray, s: np.ndarray) -> np.ndarray:
    return s * (1.0 + h * (1.0 - s))


@dataclass
class DenoiserConfig:
    in_channels: int = 65
    out_channels: int = 32
    width: int = 64
    temb_dim: int = 128

    def layer_shapes(self) -> dict[str, tuple[int, ...]]:
        w = self.width
        return {
            "conv1.w": (9 * self.in_channels, w),
            "conv1.b": (w,),
            "temb.w": (self.temb_dim, w),
            "temb.b": (w,),
            "conv2.w": (9 * w, w),
            "conv2.b": (w,),
            "conv3.w": (9 * w, w),
            "conv3.b": (w,),
            "conv4.w": (9 * w, self.out_channels),
            "conv4.b": (self.out_channels,),
            # pointwise input->output skip, zero-initialized; gives SGD a
            # direct linear path so training converges at desk scale
            "skip.w": (self.in_channels, self.out_channels),
        }

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes().values())


class Denoiser:
    """Trainable noise estimator; parameters live in a flat name->array dict."""

    def __init__(self, config: DenoiserConfig | None = None, seed: int = 0) -> None:
        self.config = config or DenoiserConfig()
        rng = np.random.Generator(np.random.PCG64(seed))
        self.params: dict[str, np.ndarray] = {}
        for name, shape in self.config.layer_shapes().items():
            if name.endswith(".b") or name == "skip.w":
                self.params[name] = np.zeros(shape, dtype=np.float64)
                continue
            fan_in = shape[0]
            scale = math.sqrt(2.0 / fan_in)
            if name == "conv4.w":
                scale *= 0.1  # tame initial predictions
            self.params[name] = rng.normal(0.0, scale, size=shape)

    def param_count(self) -> int:
        return self.config.param_count()

    def forward(
        self, x: np.ndarray, t: np.ndarray, want_cache: bool = False
    ):
        """Predict noise for latents x (N, H, W, in_channels) at timesteps t (N,)."""
        if x.ndim != 4 or x.shape[3] != self.config.in_channels:
            raise ValueError(
                f"expected (N, H, W, {self.config.in_channels}) input, got {x.shape}"
            )
        p = self.params
        emb = sinusoidal_embedding(t, self.config.temb_dim)
        e = emb @ p["temb.w"] + p["temb.b"]

        cols1 = _im2col(x)
        h1 = _conv_forward(cols1, p["conv1.w"], p["conv1.b"]) + e[:, None, None, :]
        a1, s1 = _silu(h1)
        cols2 = _im2col(a1)
        h2 = _conv_forward(cols2, p["conv2.w"], p["conv2.b"])
        a2, s2 = _silu(h2)
        cols3 = _im2col(a2)
        h3 = _conv_forward(cols3, p["conv3.w"], p["conv3.b"])
        a3, s3 = _silu(h3)
        cols4 = _im2col(a3)
        out = _conv_forward(cols4, p["conv4.w"], p["conv4.b"]) + x @ p["skip.w"]
        if not want_cache:
            return out
        cache = {
            "emb": emb, "x": x,
            "cols1": cols1, "h1": h1, "s1": s1,
            "cols2": cols2, "h2": h2, "s2": s2,
            "cols3": cols3, "h3": h3, "s3": s3,
            "cols4": cols4,
        }
        return out, cache

    def backward(self, cache: dict, dout: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for the cached forward pass; input grads are not needed."""
        p = self.params
        grads: dict[str, np.ndarray] = {}

        def conv_back(cols: np.ndarray, w: np.ndarray, d: np.ndarray):
            ck = cols.shape[3]
            cout = d.shape[3]
            c2 = cols.reshape(-1, ck)
            d2 = d.reshape(-1, cout)
            dw = c2.T @ d2
            db = d2.sum(axis=0)
            dcols = (d2 @ w.T).reshape(cols.shape)
            return dw, db, dcols

        x = cache["x"]
        grads["skip.w"] = x.reshape(-1, x.shape[3]).T @ dout.reshape(-1, dout.shape[3])
        dw4, db4, dcols4 = conv_back(cache["cols4"], p["conv4.w"], dout)
        grads["conv4.w"], grads["conv4.b"] = dw4, db4
        da3 = _col2im(dcols4, self.config.width)
        dh3 = da3 * _silu_grad(cache["h3"], cache["s3"])
        dw3, db3, dcols3 = conv_back(cache["cols3"], p["conv3.w"], dh3)
        grads["conv3.w"], grads["conv3.b"] = dw3, db3
        da2 = _col2im(dcols3, self.config.width)
        dh2 = da2 * _silu_grad(cache["h2"], cache["s2"])
        dw2, db2, dcols2 = conv_back(cache["cols2"], p["conv2.w"], dh2)
        grads["conv2.w"], grads["conv2.b"] = dw2, db2
        da1 = _col2im(dcols2, self.config.width)
        dh1 = da1 * _silu_grad(cache["h1"], cache["s1"])
        dw1, db1, _ = conv_back(cache["cols1"], p["conv1.w"], dh1)
        grads["conv1.w"], grads["conv1.b"] = dw1, db1
        de = dh1.sum(axis=(1, 2))
        grads["temb.w"] = cache["emb"].T @ de
        grads["temb.b"] = de.sum(axis=0)
        return grads

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        """Plain momentumless SGD; fixed update order keeps runs reproducible."""
        for name in self.params:
            self.params[name] = self.params[name] - lr * grads[name]

    def clone(self) -> "Denoiser":
        other = Denoiser.__new__(Denoiser)
        other.config = self.config
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other


class ZeroDenoiser:
    """Predicts zero noise; closed-form sampling checks use it."""

    def __init__(self, config: DenoiserConfig | None = None) -> None:
        self.config = config or DenoiserConfig()

    def forward(self, x: np.ndarray, t: np.ndarray, want_cache: bool = False):
        out = np.zeros(x.shape[:3] + (self.config.out_channels,), dtype=np.float64)
        return (out, {}) if want_cache else out
