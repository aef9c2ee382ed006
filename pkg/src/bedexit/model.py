"""Dual-stream patch-attention classifier with selectable fusion.

Each image modality (line plot, texture stack) gets its own small encoder:
patch embedding with learned positional offsets followed by pre-norm blocks
of non-overlapping windowed multi-head self-attention and a 2-layer MLP.
The two token sequences are merged by one of four strategies:

* ``early_concat`` — the images are stacked channel-wise and pass through a
  single shared stream; fusion is just mean-pooling its tokens
* ``mid_concat``   — mean-pool each stream, concatenate
* ``gated``        — sigmoid gate over the concatenated pooled vectors blends
  the two streams elementwise
* ``cross``        — one bidirectional pre-norm cross-attention block (line
  tokens attend over texture tokens and vice versa, residual both ways),
  then mean-pool + concatenate

A 2-layer MLP head maps the fused vector to a single logit. For modality
ablations a config switch can route only one image stream end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DataError, NonFiniteError

FUSION_MODES = ("early_concat", "mid_concat", "gated", "cross")
MODALITIES = ("both", "line", "texture")
ATTN_WINDOW = 4  # tokens per side


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 64
    patch_size: int = 8
    embed_dim: int = 64
    num_blocks_per_stream: int = 2
    attn_heads: int = 4
    fusion_mode: str = "cross"
    fusion_heads: int = 4
    dropout: float = 0.0
    modality: str = "both"

    def validate(self) -> "ModelConfig":
        if self.input_size % self.patch_size:
            raise ConfigError("input_size must be divisible by patch_size")
        if self.embed_dim % self.attn_heads or self.embed_dim % self.fusion_heads:
            raise ConfigError("embed_dim must be divisible by attn_heads and fusion_heads")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion_mode {self.fusion_mode!r}")
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        grid = self.input_size // self.patch_size
        if grid % min(ATTN_WINDOW, grid):
            raise ConfigError("token grid must tile into attention windows")
        return self

    @property
    def grid(self) -> int:
        return self.input_size // self.patch_size

    @property
    def tokens(self) -> int:
        return self.grid * self.grid


class PatchEmbed(nn.Module):
    """Non-overlapping patches -> linear projection, channels-last layout."""

    def __init__(self, in_channels: int, patch_size: int, embed_dim: int):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Linear(patch_size * patch_size * in_channels, embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, H, W, C)
        b, h, w, c = x.shape
        p = self.patch_size
        x = x.reshape(b, h // p, p, w // p, p, c)
        x = x.permute(0, 1, 3, 2, 4, 5).reshape(b, (h // p) * (w // p), p * p * c)
        return self.proj(x)


class WindowAttention(nn.Module):
    """Multi-head self-attention within non-overlapping token windows."""

    def __init__(self, dim: int, heads: int, grid: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.grid = grid
        self.window = min(ATTN_WINDOW, grid)
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, T, D)
        b, t, d = x.shape
        g, w = self.grid, self.window
        nw = g // w
        # partition the g x g token grid into nw*nw windows of w x w tokens
        x = x.reshape(b, g, g, d)
        x = x.reshape(b, nw, w, nw, w, d).permute(0, 1, 3, 2, 4, 5)
        x = x.reshape(b * nw * nw, w * w, d)

        qkv = self.qkv(x).reshape(-1, w * w, 3, self.heads, d // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(-1, w * w, d)
        out = self.drop(self.proj(out))

        out = out.reshape(b, nw, nw, w, w, d).permute(0, 1, 3, 2, 4, 5)
        return out.reshape(b, t, d)


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int, grid: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, grid, dropout)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim),
            nn.GELU(),
            nn.Linear(4 * dim, dim),
            nn.Dropout(dropout),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class StreamEncoder(nn.Module):
    """Patchify, add positions, run the block stack, final layer norm."""

    def __init__(self, config: ModelConfig, in_channels: int):
        super().__init__()
        self.config = config
        self.patch = PatchEmbed(in_channels, config.patch_size, config.embed_dim)
        self.pos = nn.Parameter(torch.zeros(1, config.tokens, config.embed_dim))
        self.blocks = nn.ModuleList(
            EncoderBlock(config.embed_dim, config.attn_heads, config.grid, config.dropout)
            for _ in range(config.num_blocks_per_stream)
        )
        self.norm = nn.LayerNorm(config.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.config.input_size or x.shape[2] != self.config.input_size:
            raise DataError(
                f"expected {self.config.input_size}x{self.config.input_size} input, "
                f"got {tuple(x.shape[1:3])}"
            )
        x = self.patch(x) + self.pos
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


class CrossAttention(nn.Module):
    """Pre-norm residual cross-attention: query stream attends over the other.

    With value/output projections at zero the module is an exact identity on
    the query stream (the residual path), which is what the fusion reduction
    contract relies on.
    """

    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.q_proj = nn.Linear(dim, dim)
        self.kv_proj = nn.Linear(dim, 2 * dim)
        self.out_proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, query: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        b, tq, d = query.shape
        tc = context.shape[1]
        h = self.heads
        q = self.q_proj(query).reshape(b, tq, h, d // h).transpose(1, 2)
        kv = self.kv_proj(context).reshape(b, tc, 2, h, d // h)
        k, v = kv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, tq, d)
        return self.drop(self.out_proj(out))


class BedExitModel(nn.Module):
    """Full classifier: stream encoders, fusion, 2-layer head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        dim = config.embed_dim

        if config.modality == "both" and config.fusion_mode == "early_concat":
            self.shared_stream = StreamEncoder(config, in_channels=6)
        else:
            if config.modality in ("both", "line"):
                self.line_stream = StreamEncoder(config, in_channels=3)
            if config.modality in ("both", "texture"):
                self.texture_stream = StreamEncoder(config, in_channels=3)

        fused_dim = dim
        if config.modality == "both":
            if config.fusion_mode == "gated":
                self.gate = nn.Linear(2 * dim, dim)
            elif config.fusion_mode == "cross":
                self.norm_line = nn.LayerNorm(dim)
                self.norm_texture = nn.LayerNorm(dim)
                self.cross_line = CrossAttention(dim, config.fusion_heads, config.dropout)
                self.cross_texture = CrossAttention(dim, config.fusion_heads, config.dropout)
                fused_dim = 2 * dim
            elif config.fusion_mode == "mid_concat":
                fused_dim = 2 * dim

        self.head = nn.Sequential(nn.Linear(fused_dim, dim), nn.ReLU(), nn.Linear(dim, 1))
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, std=0.02)
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
        elif isinstance(module, StreamEncoder):
            nn.init.trunc_normal_(module.pos, std=0.02)

    def fuse(self, tokens_line: torch.Tensor, tokens_texture: torch.Tensor) -> torch.Tensor:
        mode = self.config.fusion_mode
        if mode == "mid_concat":
            return torch.cat([tokens_line.mean(1), tokens_texture.mean(1)], dim=-1)
        if mode == "gated":
            a, b = tokens_line.mean(1), tokens_texture.mean(1)
            g = torch.sigmoid(self.gate(torch.cat([a, b], dim=-1)))
            return g * a + (1.0 - g) * b
        if mode == "cross":
            a = tokens_line + self.cross_line(
                self.norm_line(tokens_line), self.norm_texture(tokens_texture)
            )
            b = tokens_texture + self.cross_texture(
                self.norm_texture(tokens_texture), self.norm_line(tokens_line)
            )
            return torch.cat([a.mean(1), b.mean(1)], dim=-1)
        raise ConfigError(f"fuse() does not apply to mode {mode!r}")

    def forward(self, line: torch.Tensor | None, texture: torch.Tensor | None) -> torch.Tensor:
        cfg = self.config
        if cfg.modality == "line":
            fused = self.line_stream(line).mean(1)
        elif cfg.modality == "texture":
            fused = self.texture_stream(texture).mean(1)
        elif cfg.fusion_mode == "early_concat":
            fused = self.shared_stream(torch.cat([line, texture], dim=-1)).mean(1)
        else:
            fused = self.fuse(self.line_stream(line), self.texture_stream(texture))
        return self.head(fused).squeeze(-1)


@dataclass(frozen=True)
class Prediction:
    probability: float
    alarm: bool


def loss_bce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy, stable logit form (never evaluates log 0)."""
    return F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype))


def backward(model: BedExitModel, line, texture, labels) -> dict[str, torch.Tensor]:
    """Gradients of the mean batch loss for every parameter tensor."""
    model.zero_grad(set_to_none=True)
    loss = loss_bce(model(line, texture), labels)
    if not torch.isfinite(loss):
        raise NonFiniteError("loss is non-finite")
    loss.backward()
    grads: dict[str, torch.Tensor] = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.all(torch.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name}")
        grads[name] = g
    return grads


class AdamW(torch.optim.Optimizer):
    """Adam with decoupled weight decay and bias-corrected moments.

    The decay term uses the pre-step parameter value, so it is exactly
    -lr * wd * p_old on top of the Adam move.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        if lr < 0 or eps <= 0 or weight_decay < 0:
            raise ConfigError("invalid optimizer hyperparameters")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        super().__init__(params, dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay))

    @torch.no_grad()
    def step(self, closure=None):
        loss = closure() if closure is not None else None
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            lr, eps, wd = group["lr"], group["eps"], group["weight_decay"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["m"] = torch.zeros_like(p)
                    state["v"] = torch.zeros_like(p)
                state["step"] += 1
                t = state["step"]
                m, v = state["m"], state["v"]
                g = p.grad
                m.mul_(beta1).add_(g, alpha=1.0 - beta1)
                v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
                m_hat = m / (1.0 - beta1**t)
                v_hat = v / (1.0 - beta2**t)
                p_old = p.clone() if wd != 0 else None
                p.addcdiv_(m_hat, v_hat.sqrt().add_(eps), value=-lr)
                if wd != 0:
                    p.add_(p_old, alpha=-lr * wd)
        return loss


@torch.no_grad()
def predict_probs(model: BedExitModel, line, texture, batch_size: int = 64) -> np.ndarray:
    """Probabilities for a stack of image pairs, batched, eval mode."""
    model.eval()
    n = len(line) if line is not None else len(texture)
    out = np.empty(n)
    for s in range(0, n, batch_size):
        lb = line[s : s + batch_size] if line is not None else None
        tb = texture[s : s + batch_size] if texture is not None else None
        logits = model(lb, tb)
        out[s : s + batch_size] = torch.sigmoid(logits).double().cpu().numpy()
    return out


def predict(model: BedExitModel, line, texture, alarm_threshold: float = 0.5) -> Prediction:
    """Single-window prediction with the fixed-threshold alarm flag."""
    prob = float(predict_probs(model, line, texture)[0])
    return Prediction(probability=prob, alarm=prob >= alarm_threshold)


def finite_difference_max_rel_err(
    model: BedExitModel,
    line: torch.Tensor,
    texture: torch.Tensor,
    labels: torch.Tensor,
    h: float = 1e-4,
    probes_per_tensor: int = 2,
    seed: int = 0,
) -> dict[str, float]:
    """Central finite-difference check of every parameter tensor (float64).

    For each tensor, probes the element with the largest analytic gradient
    plus `probes_per_tensor` seeded random elements; returns the max relative
    error per tensor. Relative error uses max(|analytic|, |numeric|, 1e-6) as
    the denominator.
    """
    model = model.double()
    line, texture = line.double(), texture.double()
    grads = backward(model, line, texture, labels)

    def loss_value() -> float:
        with torch.no_grad():
            return float(loss_bce(model(line, texture), labels))

    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    params = dict(model.named_parameters())
    for name, p in params.items():
        g = grads[name].reshape(-1)
        flat = p.data.reshape(-1)
        idxs = {int(torch.argmax(g.abs()))}
        idxs.update(int(i) for i in rng.integers(0, len(flat), size=probes_per_tensor))
        worst = 0.0
        for i in idxs:
            orig = float(flat[i])
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            analytic = float(g[i])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, rel)
        report[name] = worst
    return report
