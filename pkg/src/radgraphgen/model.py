"""Image encoder, token decoder and the per-token entity heads."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from . import autodiff as ad
from .graph import NUM_UNCERTAINTY

MODES = ("vanilla", "prior", "prior_no_pkg", "prior_no_aecs")


@dataclass
class ModelConfig:
    num_queries: int = 16
    num_classes: int = 12
    d_model: int = 64
    dec_layers: int = 3
    heads: int = 4
    ff_dim: int = 128
    gt_layers: int = 2
    steps: int = 2
    image_size: int = 64
    patch: int = 8
    enc_channels: tuple[int, ...] = (16, 32)
    mode: str = "prior"

    def __post_init__(self):
        self.enc_channels = tuple(self.enc_channels)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.patch != 2 ** (len(self.enc_channels) + 1):
            raise ValueError("patch must equal 2 ** number of encoder blocks")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        for name in ("num_queries", "num_classes", "d_model", "heads", "ff_dim", "image_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class EntityHeadOutput:
    class_logits: torch.Tensor  # (B, N, C+1); last column is no-entity
    uncertainty_logits: torch.Tensor  # (B, N, 3)


@dataclass
class TokenSet:
    ent_tokens: torch.Tensor  # (B, N, d)
    rln_token: torch.Tensor  # (B, d)


def sincos_2d(h: int, w: int, dim: int) -> torch.Tensor:
    """Fixed 2-D sinusoidal encodings, half the channels per axis. Shape (h*w, dim)."""
    if dim % 4:
        raise ValueError("positional encoding needs dim divisible by 4")
    quarter = dim // 4
    freq = torch.exp(-math.log(10000.0) * torch.arange(quarter, dtype=ad.DTYPE) / quarter)
    ys, xs = torch.meshgrid(torch.arange(h, dtype=ad.DTYPE), torch.arange(w, dtype=ad.DTYPE), indexing="ij")
    ya = ys.reshape(-1, 1) * freq
    xa = xs.reshape(-1, 1) * freq
    return torch.cat([ya.sin(), ya.cos(), xa.sin(), xa.cos()], dim=1)


class ImageEncoder(nn.Module):
    """Strided conv blocks down to a (H/patch, W/patch) grid of d-dim tokens."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.patch = cfg.patch
        chans = (1,) + cfg.enc_channels + (cfg.d_model,)
        blocks = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            blocks.append(nn.Conv2d(cin, cout, 3, stride=2, padding=1))
        self.convs = nn.ModuleList(blocks)
        grid = cfg.image_size // cfg.patch
        self.proj = nn.Linear(cfg.d_model, cfg.d_model)
        self.norm = ad.LayerNorm(cfg.d_model)
        self.register_buffer("pos", sincos_2d(grid, grid, cfg.d_model), persistent=False)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.dim() == 2:
            images = images[None]
        b, h, w = images.shape
        if h % self.patch or w % self.patch:
            raise ValueError(f"image {h}x{w} not divisible by patch size {self.patch}")
        x = images[:, None] - 0.5
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = ad.relu(x)
        tokens = x.flatten(2).transpose(1, 2)  # (B, M, d)
        pos = self.pos if tokens.shape[1] == self.pos.shape[0] else sincos_2d(h // self.patch, w // self.patch, tokens.shape[-1])
        return self.norm(self.proj(tokens)) + pos


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.dh = d // heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)

    def split(self, x):
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.dh).transpose(1, 2)

    def forward(self, query, key, value, bias=None, key_mask=None):
        """bias: additive (B, h, Lq, Lk); key_mask: bool (B, Lk), True = attend."""
        q, k, v = self.split(self.q(query)), self.split(self.k(key)), self.split(self.v(value))
        scores = ad.matmul(q, k.transpose(-1, -2)) / math.sqrt(self.dh)
        if bias is not None:
            scores = scores + bias
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], -1e30)
        attn = ad.softmax(scores)
        out = ad.matmul(attn, v).transpose(1, 2).reshape(query.shape[0], query.shape[1], -1)
        return self.o(out), attn


class FeedForward(nn.Module):
    def __init__(self, d: int, hidden: int, out: int | None = None):
        super().__init__()
        self.fc1 = nn.Linear(d, hidden)
        self.fc2 = nn.Linear(hidden, out or d)

    def forward(self, x):
        return self.fc2(ad.relu(self.fc1(x)))


class DecoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ff: int):
        super().__init__()
        self.self_attn = MultiHeadAttention(d, heads)
        self.cross_attn = MultiHeadAttention(d, heads)
        self.ffn = FeedForward(d, ff)
        self.norm1 = ad.LayerNorm(d)
        self.norm2 = ad.LayerNorm(d)
        self.norm3 = ad.LayerNorm(d)

    def forward(self, x, memory):
        sa, _ = self.self_attn(x, x, x)
        x = self.norm1(x + sa)
        ca, attn = self.cross_attn(x, memory, memory)
        x = self.norm2(x + ca)
        x = self.norm3(x + self.ffn(x))
        return x, attn


class TokenDecoder(nn.Module):
    """N entity queries plus one relation query, refined against image features."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ent_queries = nn.Parameter(torch.randn(cfg.num_queries, cfg.d_model))
        self.rln_query = nn.Parameter(torch.randn(1, cfg.d_model))
        self.layers = nn.ModuleList(DecoderLayer(cfg.d_model, cfg.heads, cfg.ff_dim) for _ in range(cfg.dec_layers))

    def forward(self, features: torch.Tensor) -> TokenSet:
        b = features.shape[0]
        x = torch.cat([self.ent_queries, self.rln_query], dim=0).expand(b, -1, -1)
        for layer in self.layers:
            x, _ = layer(x, features)
        return TokenSet(x[:, :-1], x[:, -1])


class EntityHeads(nn.Module):
    """One linear layer for the class (C + no-entity) and one for uncertainty."""

    def __init__(self, d: int, num_classes: int):
        super().__init__()
        self.cls = nn.Linear(d, num_classes + 1)
        self.unc = nn.Linear(d, NUM_UNCERTAINTY)

    def forward(self, tokens: TokenSet) -> EntityHeadOutput:
        return EntityHeadOutput(self.cls(tokens.ent_tokens), self.unc(tokens.ent_tokens))


def encode_image(encoder: ImageEncoder, image: torch.Tensor) -> torch.Tensor:
    return encoder(image)


def decode_tokens(decoder: TokenDecoder, features: torch.Tensor) -> TokenSet:
    return decoder(features)


def predict_entity_heads(heads: EntityHeads, tokens: TokenSet) -> EntityHeadOutput:
    return heads(tokens)


def init_weights(module: nn.Module, generator: torch.Generator) -> None:
    """Deterministic re-initialization of every parameter from ``generator``."""
    for name, p in module.named_parameters():
        with torch.no_grad():
            if name.endswith("bias"):
                p.zero_()
            elif "norm" in name and name.endswith("weight"):
                p.fill_(1.0)
            elif p.dim() == 1:
                p.copy_(torch.randn(p.shape, generator=generator) * 0.02)
            elif "queries" in name or "query" in name or "schemata" in name:
                p.copy_(torch.randn(p.shape, generator=generator))
            else:
                fan_in = p[0].numel()
                bound = math.sqrt(6.0 / (fan_in + p.shape[0])) if p.dim() == 2 else math.sqrt(2.0 / fan_in)
                if p.dim() == 2:
                    p.copy_((torch.rand(p.shape, generator=generator) * 2 - 1) * bound)
                else:
                    p.copy_(torch.randn(p.shape, generator=generator) * bound)
