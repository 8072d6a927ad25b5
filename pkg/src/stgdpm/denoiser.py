"""Traj-UGnet: U-shaped denoiser over (feature, vessel, time) tensors.

The history x and the noisy future y_k are concatenated along time,
projected to C channels, and passed through a temporal U-net whose residual
blocks mix vessels through all T_obs historical interaction graphs
(DynamicGraphConv). A final linear map along time reduces the combined
length back to T_pred. Everything runs in float64 on CPU; vessels are never
baked into parameter shapes, so one set of weights serves any V >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn


@dataclass
class DenoiserConfig:
    """Architecture hyperparameters and ablation switches."""

    c: int = 32
    levels: int = 4
    blocks_per_level: int = 2
    f: int = 2
    t_obs: int = 10
    t_pred: int = 15
    disable_unet: bool = False
    disable_dgc: bool = False
    disable_residual: bool = False

    @property
    def t_total(self) -> int:
        return self.t_obs + self.t_pred

    def validate(self) -> None:
        if self.c < 1 or self.levels < 0 or self.blocks_per_level < 1:
            raise ValueError("invalid denoiser config sizes")
        t = self.t_total
        if not self.disable_unet and t < 2**self.levels:
            raise ValueError(
                f"time length {t} collapses below 1 step over {self.levels} levels"
            )

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "levels": self.levels,
            "blocks_per_level": self.blocks_per_level,
            "f": self.f,
            "t_obs": self.t_obs,
            "t_pred": self.t_pred,
            "disable_unet": self.disable_unet,
            "disable_dgc": self.disable_dgc,
            "disable_residual": self.disable_residual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


def step_embedding(k, dim):
    """Raw sinusoidal embedding of the diffusion step index.

    e[2i] = sin(k / 10000^(2i/dim)), e[2i+1] = cos(k / 10000^(2i/dim)).
    """
    half = (dim + 1) // 2
    freqs = np.exp(-math.log(10000.0) * (2 * np.arange(half)) / dim)
    ang = k * freqs
    e = np.empty(2 * half)
    e[0::2] = np.sin(ang)
    e[1::2] = np.cos(ang)
    return e[:dim]


def graph_conv(h, a_hat, theta, bias):
    """Eqs. of the dynamic graph convolution, without activation/residual.

    h: (C_in, V, T_i); a_hat: (T_obs, V, V); theta: (C_in, C_out, T_obs);
    bias: (C_out,). Aggregates each feature through every historical graph,
    then contracts channels and historical time with theta.
    """
    # h_c[c, v, t_i, t_h] = sum_u a_hat[t_h, v, u] * h[c, u, t_i]
    h_c = torch.einsum("hvu,cut->cvth", a_hat, h)
    # h_gc[o, v, t_i] = sum_{c, t_h} theta[c, o, t_h] * h_c[c, v, t_i, t_h] + b[o]
    h_gc = torch.einsum("coh,cvth->ovt", theta, h_c)
    return h_gc + bias[:, None, None]


class DynamicGraphConv(nn.Module):
    """Graph mixing with residual connection and ReLU (ablatable)."""

    def __init__(self, channels, t_obs, disable_dgc=False, disable_residual=False):
        super().__init__()
        self.disable_dgc = disable_dgc
        self.disable_residual = disable_residual
        if disable_dgc:
            # per-vessel temporal 1x1 map, no cross-vessel mixing
            self.local = nn.Conv2d(channels, channels, kernel_size=1)
        else:
            self.theta = nn.Parameter(torch.empty(channels, channels, t_obs))
            self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, h, a_hat):
        if self.disable_dgc:
            out = self.local(h.unsqueeze(0)).squeeze(0)
        else:
            out = graph_conv(h, a_hat, self.theta, self.bias)
        if not self.disable_residual:
            out = out + h
        return torch.relu(out)


class ResidualBlock(nn.Module):
    """Normalize, add the embedded step index, then graph-convolve."""

    def __init__(self, channels, emb_dim, t_obs, disable_dgc=False, disable_residual=False):
        super().__init__()
        self.norm = nn.GroupNorm(channels, channels, eps=1e-6)
        self.emb_proj = nn.Linear(emb_dim, channels)
        self.conv = DynamicGraphConv(
            channels, t_obs, disable_dgc=disable_dgc, disable_residual=disable_residual
        )

    def forward(self, h, k_emb, a_hat):
        h_hat = self.norm(h.unsqueeze(0)).squeeze(0)
        h_hat = h_hat + self.emb_proj(k_emb)[:, None, None]
        return self.conv(h_hat, a_hat)


class TrajUGnet(nn.Module):
    """The full denoiser eps_theta(y_k, k, x, A_hat)."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        config.validate()
        self.config = config
        c, f = config.c, config.f
        t_obs = config.t_obs
        blk = dict(disable_dgc=config.disable_dgc, disable_residual=config.disable_residual)

        self.emb_affine = nn.Linear(c, c)
        self.stem = nn.Conv2d(f, c, kernel_size=1)

        if config.disable_unet:
            self.blocks = nn.ModuleList(
                ResidualBlock(c, c, t_obs, **blk)
                for _ in range(2 * config.blocks_per_level)
            )
            head_c = c
        else:
            chans = [c * 2**i for i in range(config.levels + 1)]
            self.down_blocks = nn.ModuleList()
            self.down_trans = nn.ModuleList()
            for i in range(config.levels):
                self.down_blocks.append(
                    nn.ModuleList(
                        ResidualBlock(chans[i], c, t_obs, **blk)
                        for _ in range(config.blocks_per_level)
                    )
                )
                # temporal stride-2 conv doubling channels; length -> ceil(T/2)
                self.down_trans.append(
                    nn.Conv2d(chans[i], chans[i + 1], kernel_size=(1, 3),
                              stride=(1, 2), padding=(0, 1))
                )
            self.mid_blocks = nn.ModuleList(
                ResidualBlock(chans[-1], c, t_obs, **blk)
                for _ in range(config.blocks_per_level)
            )
            self.up_fuse = nn.ModuleList()
            self.up_blocks = nn.ModuleList()
            for i in reversed(range(config.levels)):
                self.up_fuse.append(
                    nn.Conv2d(chans[i + 1] + chans[i], chans[i], kernel_size=1)
                )
                self.up_blocks.append(
                    nn.ModuleList(
                        ResidualBlock(chans[i], c, t_obs, **blk)
                        for _ in range(config.blocks_per_level)
                    )
                )
            head_c = c

        self.head = nn.Conv2d(head_c, f, kernel_size=1)
        self.time_fc = nn.Linear(config.t_total, config.t_pred)
        self.double()

    def k_embedding(self, k):
        e = torch.as_tensor(step_embedding(k, self.config.c), dtype=torch.float64)
        return torch.nn.functional.silu(self.emb_affine(e))

    def forward(self, y_k, k, x, a_hat):
        """All tensors unbatched: y_k (F,V,T_pred), x (F,V,T_obs), a_hat (T_obs,V,V)."""
        h = torch.cat([x, y_k], dim=2)  # (F, V, T_total)
        h = self.stem(h.unsqueeze(0)).squeeze(0)
        k_emb = self.k_embedding(k)

        if self.config.disable_unet:
            for block in self.blocks:
                h = block(h, k_emb, a_hat)
        else:
            skips = []
            for blocks, trans in zip(self.down_blocks, self.down_trans):
                for block in blocks:
                    h = block(h, k_emb, a_hat)
                skips.append(h)
                h = trans(h.unsqueeze(0)).squeeze(0)
            for block in self.mid_blocks:
                h = block(h, k_emb, a_hat)
            for fuse, blocks, skip in zip(self.up_fuse, self.up_blocks, reversed(skips)):
                h = torch.repeat_interleave(h, 2, dim=2)[:, :, : skip.shape[2]]
                h = fuse(torch.cat([h, skip], dim=0).unsqueeze(0)).squeeze(0)
                for block in blocks:
                    h = block(h, k_emb, a_hat)

        h = self.head(h.unsqueeze(0)).squeeze(0)  # (F, V, T_total)
        return self.time_fc(h)  # (F, V, T_pred)

    def as_sampler_fn(self):
        """Wrap the model as the numpy denoiser callable used for sampling."""

        def fn(y_k, k, x, a_hat):
            with torch.no_grad():
                out = self.forward(
                    torch.as_tensor(y_k, dtype=torch.float64),
                    int(k),
                    torch.as_tensor(x, dtype=torch.float64),
                    torch.as_tensor(a_hat, dtype=torch.float64),
                )
            return out.numpy()

        return fn


def init_params(model: TrajUGnet, rng: np.random.Generator, zero_output: bool = True):
    """Deterministic fan-in uniform initialization driven by a numpy rng.

    The output 1x1 projection is zero-initialized by default so the denoiser
    starts at eps = 0, which stabilizes early diffusion training.
    """
    for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        if name.endswith("norm.weight"):
            p.data.fill_(1.0)
        elif p.dim() == 1:
            p.data.zero_()
        else:
            fan_in = p.shape[1] * int(np.prod(p.shape[2:]))
            bound = 1.0 / math.sqrt(max(fan_in, 1))
            vals = rng.uniform(-bound, bound, size=tuple(p.shape))
            p.data.copy_(torch.as_tensor(vals, dtype=torch.float64))
    if zero_output:
        model.head.weight.data.zero_()
        model.head.bias.data.zero_()
    return model
