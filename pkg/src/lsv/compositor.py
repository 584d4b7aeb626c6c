"""Depth-weighted soft alpha compositing of per-layer G-buffers, with backward pass.

Per pixel, over the set S of layers that hit: depths are min-max normalized
to z̄ ∈ [0, 1], each layer gets weight

    w_n = o_n exp(-o_n z̄_n / γ) / Σ_m o_m exp(-o_m z̄_m / γ),

and the output is Σ w_n o_n c_n blended over the background by
A = Σ w_n o_n. The backward pass propagates d(loss)/d(rgb) to texture
parameters; depths are genuinely constant w.r.t. texture values, so only
the opacity/color dependencies (including the normalization coupling
across layers) carry gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import LayerGBuffer
from .texture import TextureGradients, TextureStack, sample_layer_many, splat_layer_many


@dataclass
class RenderConfig:
    gamma: float = 0.1               # compositing temperature over unit depth range
    background: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass
class CompositeBuffer:
    """Composited image plus the per-layer intermediates needed for backward."""

    rgb: np.ndarray    # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    # saved state, None unless the forward pass ran with save_for_backward
    hit: np.ndarray | None = None        # (N, H, W)
    weights: np.ndarray | None = None    # (N, H, W)
    opacities: np.ndarray | None = None  # (N, H, W)
    colors: np.ndarray | None = None     # (N, H, W, 3)
    zbar: np.ndarray | None = None       # (N, H, W)
    uv: np.ndarray | None = None         # (N, H, W, 2)
    denom: np.ndarray | None = None      # (H, W) Σ o_n exp(-o_n z̄_n / γ)


def composite(gbuffers: list[LayerGBuffer], tex: TextureStack, cfg: RenderConfig,
              save_for_backward: bool = True) -> CompositeBuffer:
    """Soft-composite N layer G-buffers using the stack's activated textures."""
    if len(gbuffers) != tex.num_layers:
        raise ValueError(f"{len(gbuffers)} G-buffers for a {tex.num_layers}-layer texture stack")
    size = gbuffers[0].image_size
    for g in gbuffers:
        if g.image_size != size:
            raise ValueError(f"G-buffer sizes differ: {g.image_size} vs {size}")
    height, width = size
    num_layers = tex.num_layers

    hit = np.stack([g.hit for g in gbuffers])
    depth = np.stack([g.depth for g in gbuffers])
    uv = np.stack([g.uv for g in gbuffers])

    colors = np.zeros((num_layers, height, width, 3))
    opacities = np.zeros((num_layers, height, width))
    for n in range(num_layers):
        mask = hit[n]
        if mask.any():
            values = sample_layer_many(tex, n, uv[n][mask])
            colors[n][mask] = values[:, :3]
            opacities[n][mask] = values[:, 3]

    # min-max depth normalization over hit layers only; flat depth -> z̄ = 0
    depth_safe = np.where(hit, depth, 0.0)
    z_min = np.where(hit, depth, np.inf).min(axis=0)
    z_max = np.where(hit, depth, -np.inf).max(axis=0)
    any_hit = hit.any(axis=0)
    z_range = np.where(any_hit, z_max - z_min, 0.0)
    safe_range = np.where(z_range > 0.0, z_range, 1.0)
    zbar = np.where(hit & (z_range > 0.0), (depth_safe - np.where(any_hit, z_min, 0.0))
                    / safe_range, 0.0)

    score = np.where(hit, opacities * np.exp(-opacities * zbar / cfg.gamma), 0.0)
    denom = score.sum(axis=0)
    weights = np.divide(score, denom, out=np.zeros_like(score), where=denom > 0.0)

    contribution = weights * opacities
    alpha = contribution.sum(axis=0)
    rgb = np.einsum("nhw,nhwc->hwc", contribution, colors)
    rgb += (1.0 - alpha)[:, :, None] * cfg.background

    buf = CompositeBuffer(rgb=rgb, alpha=alpha)
    if save_for_backward:
        buf.hit = hit
        buf.weights = weights
        buf.opacities = opacities
        buf.colors = colors
        buf.zbar = zbar
        buf.uv = uv
        buf.denom = denom
    return buf


def composite_backward(buf: CompositeBuffer, d_rgb: np.ndarray, tex: TextureStack,
                       sink: TextureGradients, cfg: RenderConfig) -> None:
    """Accumulate d(loss)/d(texture params) given d(loss)/d(rgb) per pixel.

    Opacity gradients account for the direct o_n factor in the summand, the
    o_n factor in the weight numerator, and o_n inside the exponent, plus
    the softmax-style normalization coupling and the (1 - A) background term.
    """
    if buf.weights is None:
        raise RuntimeError("composite buffer lacks saved state; run composite with "
                           "save_for_backward=True before calling backward")
    d_rgb = np.asarray(d_rgb, dtype=np.float64)
    if d_rgb.shape != buf.rgb.shape:
        raise ValueError(f"d_rgb shape {d_rgb.shape} does not match image {buf.rgb.shape}")

    hit = buf.hit
    w = buf.weights
    o = buf.opacities
    c = buf.colors
    zbar = buf.zbar
    denom = buf.denom
    bg = cfg.background

    d_alpha = -np.einsum("hwc,c->hw", d_rgb, bg)
    # d(loss)/d(c_n): straight w_n o_n scaling of the pixel gradient
    d_c = d_rgb[None] * (w * o)[..., None]
    # d(loss)/d(w_n) holding o and c fixed
    g_w = np.einsum("hwc,nhwc->nhw", d_rgb, c) * o + d_alpha[None] * o
    # softmax-style coupling through the normalized weights
    expo = np.exp(-o * zbar / cfg.gamma)
    d_score = expo * (1.0 - o * zbar / cfg.gamma)
    g_mean = (g_w * w).sum(axis=0)
    safe_denom = np.where(denom > 0.0, denom, 1.0)
    via_weights = np.where(denom > 0.0, d_score / safe_denom * (g_w - g_mean[None]), 0.0)
    d_o = (np.einsum("hwc,nhwc->nhw", d_rgb, c) * w
           + d_alpha[None] * w
           + via_weights)

    for n in range(tex.num_layers):
        mask = hit[n]
        if not mask.any():
            continue
        d_values = np.concatenate([d_c[n][mask], d_o[n][mask][:, None]], axis=1)
        splat_layer_many(tex, sink, n, buf.uv[n][mask], d_values)
