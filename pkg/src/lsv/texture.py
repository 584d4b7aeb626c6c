"""Optimizable RGBA texture stacks: sigmoid activation, bilinear sampling, gradient splatting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

# Transparent-leaning start: opacity sigmoid^-1(0.1), colors at mid-gray.
DEFAULT_OPACITY_LOGIT = float(np.log(0.1 / 0.9))


def sigmoid_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 - s)


@dataclass
class TextureStack:
    """N unconstrained RGBA parameter maps; activated values live in [0, 1].

    params[n, row, col, channel] with channel 0..2 = color, 3 = opacity.
    Rows index the v axis, columns the u axis; texel (col i, row j) has its
    center at uv = ((i + 0.5) / W, (j + 0.5) / H).
    """

    params: np.ndarray  # (N, H, W, 4)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.ndim != 4 or self.params.shape[3] != 4:
            raise ValueError(f"params must be (N, H, W, 4), got {self.params.shape}")

    @classmethod
    def initial(cls, num_layers: int, height: int, width: int,
                color_logit: float = 0.0,
                opacity_logit: float = DEFAULT_OPACITY_LOGIT) -> "TextureStack":
        params = np.empty((num_layers, height, width, 4))
        params[..., :3] = color_logit
        params[..., 3] = opacity_logit
        return cls(params)

    @property
    def num_layers(self) -> int:
        return self.params.shape[0]

    @property
    def height(self) -> int:
        return self.params.shape[1]

    @property
    def width(self) -> int:
        return self.params.shape[2]

    def activated(self) -> np.ndarray:
        """Full stack mapped through the sigmoid, shape (N, H, W, 4)."""
        return sigmoid(self.params)


@dataclass
class TextureGradients:
    """Accumulator for d(loss)/d(params), plus optional bilinear-coverage tallies."""

    grads: np.ndarray                 # (N, H, W, 4)
    coverage: np.ndarray | None = None  # (N, H, W) summed |bilinear weight| per texel

    @classmethod
    def zeros_like(cls, tex: TextureStack, track_coverage: bool = False) -> "TextureGradients":
        cov = np.zeros(tex.params.shape[:3]) if track_coverage else None
        return cls(np.zeros_like(tex.params), cov)


def bilinear_footprint(height: int, width: int, uv: np.ndarray):
    """Texel indices and weights of the 2x2 bilinear footprint, clamp-to-edge.

    uv may be (2,) or (M, 2). Returns (rows, cols, weights) where rows/cols
    are (..., 4) integer arrays over corners [j0i0, j0i1, j1i0, j1i1] and
    weights sum to 1 along the last axis.
    """
    uv = np.asarray(uv, dtype=np.float64)
    x = np.clip(uv[..., 0] * width - 0.5, 0.0, width - 1.0)
    y = np.clip(uv[..., 1] * height - 0.5, 0.0, height - 1.0)
    i0 = np.minimum(np.floor(x).astype(np.int64), max(width - 2, 0))
    j0 = np.minimum(np.floor(y).astype(np.int64), max(height - 2, 0))
    i1 = np.minimum(i0 + 1, width - 1)
    j1 = np.minimum(j0 + 1, height - 1)
    fx = x - i0
    fy = y - j0
    rows = np.stack([j0, j0, j1, j1], axis=-1)
    cols = np.stack([i0, i1, i0, i1], axis=-1)
    weights = np.stack([(1 - fy) * (1 - fx), (1 - fy) * fx,
                        fy * (1 - fx), fy * fx], axis=-1)
    return rows, cols, weights


def sample_layer_many(tex: TextureStack, layer: int, uv: np.ndarray) -> np.ndarray:
    """Activated bilinear samples for a batch of uv points, shape (M, 4)."""
    if not 0 <= layer < tex.num_layers:
        raise ValueError(f"layer {layer} out of range [0, {tex.num_layers})")
    rows, cols, weights = bilinear_footprint(tex.height, tex.width, uv)
    texels = sigmoid(tex.params[layer][rows, cols])  # (..., 4, 4)
    return np.einsum("...c,...cd->...d", weights, texels)


def sample(tex: TextureStack, layer: int, uv) -> tuple[np.ndarray, float]:
    """Activated (color, opacity) at one uv point."""
    uv = np.asarray(uv, dtype=np.float64)
    if not np.all(np.isfinite(uv)):
        raise ValueError("uv must be finite")
    value = sample_layer_many(tex, layer, uv.reshape(1, 2))[0]
    return value[:3], float(value[3])


def sample_all_layers(tex: TextureStack, uv) -> tuple[np.ndarray, np.ndarray]:
    """Per-layer activated samples at one uv: colors (N, 3), opacities (N,)."""
    values = np.stack([sample_layer_many(tex, n, np.asarray(uv).reshape(1, 2))[0]
                       for n in range(tex.num_layers)])
    return values[:, :3], values[:, 3]


def splat_layer_many(tex: TextureStack, sink: TextureGradients, layer: int,
                     uv: np.ndarray, d_values: np.ndarray) -> None:
    """Accumulate d(loss)/d(params) for a batch of samples on one layer.

    d_values is (M, 4) in activated-value space; the sigmoid chain term is
    applied per receiving texel. Accumulation order is fixed, so results are
    reproducible bit-for-bit.
    """
    rows, cols, weights = bilinear_footprint(tex.height, tex.width, uv)
    flat = (rows * tex.width + cols).reshape(-1)          # (M*4,)
    w = weights.reshape(-1)                                # (M*4,)
    d_rep = np.repeat(np.asarray(d_values, dtype=np.float64), 4, axis=0)  # (M*4, 4)
    grads_flat = sink.grads[layer].reshape(-1, 4)
    chain = sigmoid_grad(tex.params[layer].reshape(-1, 4)[flat])
    np.add.at(grads_flat, flat, w[:, None] * chain * d_rep)
    if sink.coverage is not None:
        cov_flat = sink.coverage[layer].reshape(-1)
        np.add.at(cov_flat, flat, np.abs(w))


def splat_gradient(tex: TextureStack, sink: TextureGradients, layer: int, uv,
                   d_color: np.ndarray, d_opacity: float) -> None:
    """Accumulate the gradient of one sample into the four contributing texels."""
    if not 0 <= layer < tex.num_layers:
        raise ValueError(f"layer {layer} out of range [0, {tex.num_layers})")
    d_value = np.empty((1, 4))
    d_value[0, :3] = d_color
    d_value[0, 3] = d_opacity
    splat_layer_many(tex, sink, layer, np.asarray(uv, dtype=np.float64).reshape(1, 2), d_value)
