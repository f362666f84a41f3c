"""Backbone, query decoder, detection heads and instance-aware features."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import ModelOptions

_LOGGER = logging.getLogger(__name__)

Activation = Callable[[Tensor], Tensor] | None


@dataclass
class FeatureMap:
    """Image-level features F, shape (B, d, h, w)."""

    values: Tensor
    stride: int

    @property
    def grid(self) -> tuple[int, int]:
        return self.values.shape[-2], self.values.shape[-1]


@dataclass
class InstanceSet:
    """Decoded queries with their detection outputs and kernels."""

    features: Tensor  # (B, N, d)
    class_logits: Tensor  # (B, N, 2); index 0 = person
    boxes: Tensor  # (B, N, 4) cx, cy, w, h in [0, 1]
    kernels: Tensor  # (B, N, d, d)
    kernel_bias: Tensor  # (B, N, d)
    attention: Tensor  # (B, N, h*w) cross-attention of the last layer

    @property
    def person_prob(self) -> Tensor:
        return self.class_logits.softmax(-1)[..., 0]


class MLP(nn.Module):
    """Plain perceptron with GELU between layers."""

    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int, num_layers: int) -> None:
        super().__init__()
        self.num_layers = num_layers
        h = [hidden_dim] * (num_layers - 1)
        self.layers = nn.ModuleList(
            nn.Linear(n, k) for n, k in zip([input_dim] + h, h + [output_dim])
        )

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = F.gelu(layer(x)) if i < self.num_layers - 1 else layer(x)
        return x


# ── Backbone ─────────────────────────────────────────────────────────


def _conv_block(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1),
        nn.GroupNorm(math.gcd(8, out_ch), out_ch),
        nn.GELU(),
    )


class ConvBackbone(nn.Module):
    """Four conv blocks; the first log2(stride) of them downsample by 2."""

    def __init__(self, hidden_dim: int, stride: int) -> None:
        super().__init__()
        downs = int(math.log2(stride))
        if 2**downs != stride or not 1 <= downs <= 4:
            raise ValueError(f"stride must be a power of two in 2..16, got {stride}")
        self.stride = stride
        widths = [3, max(hidden_dim // 2, 4), hidden_dim, hidden_dim, hidden_dim]
        self.blocks = nn.Sequential(
            *(
                _conv_block(widths[i], widths[i + 1], 2 if i < downs else 1)
                for i in range(4)
            )
        )

    def forward(self, images: Tensor) -> FeatureMap:
        if images.dim() != 4 or images.shape[1] != 3:
            raise ValueError(f"expected images of shape (B, 3, H, W), got {tuple(images.shape)}")
        height, width = images.shape[-2:]
        if height % self.stride or width % self.stride:
            raise ValueError(
                f"image size {height}x{width} is not a multiple of stride {self.stride}"
            )
        return FeatureMap(values=self.blocks(images), stride=self.stride)


# ── Decoder ──────────────────────────────────────────────────────────


def sine_position_encoding(height: int, width: int, dim: int, device=None, dtype=None) -> Tensor:
    """2D sinusoidal encoding, shape (h*w, dim); half the channels per axis."""
    if dim % 4:
        raise ValueError(f"position encoding needs dim divisible by 4, got {dim}")
    feats = dim // 2
    scale = 2 * math.pi
    ys = (torch.arange(height, device=device, dtype=torch.float64) + 0.5) / height * scale
    xs = (torch.arange(width, device=device, dtype=torch.float64) + 0.5) / width * scale
    dim_t = torch.arange(feats, device=device, dtype=torch.float64)
    dim_t = 10000 ** (2 * torch.div(dim_t, 2, rounding_mode="floor") / feats)

    pos_y = ys[:, None] / dim_t
    pos_x = xs[:, None] / dim_t
    pos_y = torch.stack((pos_y[:, 0::2].sin(), pos_y[:, 1::2].cos()), dim=2).flatten(1)
    pos_x = torch.stack((pos_x[:, 0::2].sin(), pos_x[:, 1::2].cos()), dim=2).flatten(1)
    grid = torch.cat(
        (
            pos_y[:, None, :].expand(height, width, feats),
            pos_x[None, :, :].expand(height, width, feats),
        ),
        dim=-1,
    )
    return grid.reshape(height * width, dim).to(dtype or torch.float32)


class DecoderLayer(nn.Module):
    """Self-attention over queries, cross-attention over the feature grid, FFN."""

    def __init__(self, hidden_dim: int, num_heads: int) -> None:
        super().__init__()
        self.self_attn = nn.MultiheadAttention(hidden_dim, num_heads, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(hidden_dim, num_heads, batch_first=True)
        self.ffn = nn.Sequential(
            nn.Linear(hidden_dim, 2 * hidden_dim), nn.GELU(), nn.Linear(2 * hidden_dim, hidden_dim)
        )
        self.norm1 = nn.LayerNorm(hidden_dim)
        self.norm2 = nn.LayerNorm(hidden_dim)
        self.norm3 = nn.LayerNorm(hidden_dim)

    def forward(
        self, tgt: Tensor, query_pos: Tensor, memory: Tensor, memory_pos: Tensor
    ) -> tuple[Tensor, Tensor]:
        q = k = tgt + query_pos
        tgt = self.norm1(tgt + self.self_attn(q, k, tgt, need_weights=False)[0])
        out, weights = self.cross_attn(
            tgt + query_pos, memory + memory_pos, memory, need_weights=True
        )
        tgt = self.norm2(tgt + out)
        tgt = self.norm3(tgt + self.ffn(tgt))
        return tgt, weights


class QueryDecoder(nn.Module):
    """Turns N learnable queries into instance embeddings."""

    def __init__(self, num_queries: int, hidden_dim: int, num_layers: int, num_heads: int) -> None:
        super().__init__()
        self.num_queries = num_queries
        self.hidden_dim = hidden_dim
        self.query_embed = nn.Embedding(num_queries, hidden_dim)
        self.layers = nn.ModuleList(
            DecoderLayer(hidden_dim, num_heads) for _ in range(num_layers)
        )
        self.norm = nn.LayerNorm(hidden_dim)

    def forward(self, feature: Tensor, queries: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Return embeddings (B, N, d) and last-layer attention (B, N, h*w)."""
        if queries is None:
            queries = self.query_embed.weight
        batch, dim, height, width = feature.shape
        if dim != queries.shape[-1]:
            raise ValueError(
                f"feature dim {dim} does not match query dim {queries.shape[-1]}"
            )
        if queries.shape[0] != self.num_queries:
            raise ValueError(
                f"expected {self.num_queries} queries, got {queries.shape[0]}"
            )
        memory = feature.flatten(2).transpose(1, 2)
        memory_pos = sine_position_encoding(
            height, width, dim, device=feature.device, dtype=feature.dtype
        )[None].expand(batch, -1, -1)
        query_pos = queries[None].expand(batch, -1, -1)
        tgt = torch.zeros_like(query_pos)
        weights = memory.new_zeros(batch, self.num_queries, height * width)
        for layer in self.layers:
            tgt, weights = layer(tgt, query_pos, memory, memory_pos)
        return self.norm(tgt), weights


# ── Heads ────────────────────────────────────────────────────────────


class DetectionHead(nn.Module):
    """Person/no-person logits and normalized boxes from the instance embeddings."""

    def __init__(self, hidden_dim: int) -> None:
        super().__init__()
        self.class_embed = nn.Linear(hidden_dim, 2)
        self.bbox_embed = MLP(hidden_dim, hidden_dim, 4, 3)

    def forward(self, embeddings: Tensor) -> tuple[Tensor, Tensor]:
        return self.class_embed(embeddings), self.bbox_embed(embeddings).sigmoid()


class KernelGenerator(nn.Module):
    """Vector to a d x d 1x1 kernel and a bias.

    The kernel is the identity plus a learned residual, so an untrained
    generator passes features through.
    """

    def __init__(self, hidden_dim: int, kernel_hidden_dim: int) -> None:
        super().__init__()
        self.hidden_dim = hidden_dim
        self.mlp = MLP(hidden_dim, kernel_hidden_dim, hidden_dim * hidden_dim + hidden_dim, 2)
        nn.init.normal_(self.mlp.layers[-1].weight, std=0.01)
        nn.init.zeros_(self.mlp.layers[-1].bias)
        self.register_buffer("identity", torch.eye(hidden_dim), persistent=False)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        d = self.hidden_dim
        out = self.mlp(x)
        kernel = out[..., : d * d].unflatten(-1, (d, d)) / math.sqrt(d)
        return self.identity.to(out.dtype) + kernel, out[..., d * d :]


def instance_features(
    feature: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    activation: Activation = F.gelu,
) -> Tensor:
    """Apply per-instance 1x1 kernels to a shared map.

    feature (B, d_in, h, w), kernels (B, N, d_out, d_in), bias (B, N, d_out)
    give (B, N, d_out, h, w). Used for the instance features and both causal
    representations.
    """
    if kernels.dim() != 4 or feature.dim() != 4:
        raise ValueError(
            f"expected feature (B,d,h,w) and kernels (B,N,d,d), got "
            f"{tuple(feature.shape)} and {tuple(kernels.shape)}"
        )
    if kernels.shape[-1] != feature.shape[1] or kernels.shape[0] != feature.shape[0]:
        raise ValueError(
            f"kernel size mismatch: kernels {tuple(kernels.shape)} "
            f"vs feature {tuple(feature.shape)}"
        )
    out = torch.einsum("bnoi,bihw->bnohw", kernels, feature)
    if bias is not None:
        out = out + bias[..., None, None]
    return activation(out) if activation is not None else out


def per_instance_features(
    feature: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    activation: Activation = F.gelu,
) -> Tensor:
    """Like :func:`instance_features` when every instance has its own input map.

    feature (B, N, d_in, h, w), kernels (B, N, d_out, d_in).
    """
    if feature.dim() != 5 or kernels.shape[:2] != feature.shape[:2]:
        raise ValueError(
            f"kernel size mismatch: kernels {tuple(kernels.shape)} "
            f"vs feature {tuple(feature.shape)}"
        )
    out = torch.einsum("bnoi,bnihw->bnohw", kernels, feature)
    if bias is not None:
        out = out + bias[..., None, None]
    return activation(out) if activation is not None else out


class ParserCore(nn.Module):
    """Backbone plus decoder plus heads; shared by every model arm."""

    def __init__(self, options: ModelOptions) -> None:
        super().__init__()
        self.options = options
        self.backbone = ConvBackbone(options.hidden_dim, options.stride)
        self.decoder = QueryDecoder(
            options.num_queries, options.hidden_dim, options.decoder_layers, options.num_heads
        )
        self.detect = DetectionHead(options.hidden_dim)
        self.kernel_generator = KernelGenerator(options.hidden_dim, options.kernel_hidden_dim)
        _LOGGER.debug(
            "Built parser core: %d queries, hidden %d, stride %d, %d decoder layers",
            options.num_queries,
            options.hidden_dim,
            options.stride,
            options.decoder_layers,
        )

    def forward(self, images: Tensor) -> tuple[FeatureMap, InstanceSet, Tensor]:
        """Return the feature map, the instance set and instance features (B, N, d, h, w)."""
        feature = self.backbone(images)
        embeddings, attention = self.decoder(feature.values)
        class_logits, boxes = self.detect(embeddings)
        kernels, bias = self.kernel_generator(embeddings)
        instances = InstanceSet(
            features=embeddings,
            class_logits=class_logits,
            boxes=boxes,
            kernels=kernels,
            kernel_bias=bias,
            attention=attention,
        )
        return feature, instances, instance_features(feature.values, kernels, bias)
