import logging
from dataclasses import replace
from typing import Optional

import torch
import torch.nn as nn
from einops import rearrange

from m3rnet.config import VARIANTS, ModelConfig
from m3rnet.layers import EncoderBlock, MultiModalBlock
from utils.errors import ConfigError, ShapeMismatch

logger = logging.getLogger(__name__)


class M3RNet(nn.Module):
    """Radar/station nowcaster.

    Radar frames become patch tokens and run through the vision encoder;
    station rows become one token per time step and run through the TS
    encoder. Station tokens then query the radar tokens in the multimodal
    blocks, a self-attention decoder refines them, and a linear head turns
    input position t into the forecast for future step t.

    Variants: `full`; `no_decoder` (head reads the multimodal output);
    `ts_only` (station branch only, radar ignored).
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config.validate()
        c = config
        d = c.d_model

        self.ts_proj = nn.Linear(c.n_features, d)
        self.pe_ts = nn.Parameter(torch.zeros(c.t_in, d))
        self.ts_encoder = nn.ModuleList(
            EncoderBlock(d, c.n_heads_enc, c.d_head_enc, c.mlp_dim) for _ in range(c.layers_ts)
        )

        if c.variant != "ts_only":
            self.patch_proj = nn.Linear(c.channels * c.patch * c.patch, d)
            pe_rows = c.t_in * c.n_patches if c.per_token_pe else c.n_patches
            self.pe_ctx = nn.Parameter(torch.zeros(pe_rows, d))
            self.vision_encoder = nn.ModuleList(
                EncoderBlock(d, c.n_heads_enc, c.d_head_enc, c.mlp_dim) for _ in range(c.layers_enc)
            )
            self.multimodal = nn.ModuleList(
                MultiModalBlock(d, c.n_heads_enc, c.d_head_enc, c.mlp_dim) for _ in range(c.layers_mm)
            )

        if c.variant == "full":
            self.decoder = nn.ModuleList(
                EncoderBlock(d, c.n_heads_dec, c.d_head_dec, c.mlp_dim) for _ in range(c.layers_dec)
            )

        self.head = nn.Linear(d, 1)
        self.reset_parameters()

    @staticmethod
    def _init_module(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)

    def reset_parameters(self) -> None:
        self.apply(self._init_module)
        nn.init.zeros_(self.pe_ts)
        if hasattr(self, "pe_ctx"):
            nn.init.zeros_(self.pe_ctx)

    def patch_embed(self, radar: torch.Tensor) -> torch.Tensor:
        """[B, T, H, W, C] -> [B, T * n_patches, d_model], frames concatenated in time order."""
        c = self.config
        if radar.dim() != 5 or tuple(radar.shape[1:]) != (c.t_in, c.height, c.width, c.channels):
            raise ShapeMismatch(f"Radar tensor {tuple(radar.shape)} does not match "
                                f"[B, {c.t_in}, {c.height}, {c.width}, {c.channels}]")

        patches = rearrange(radar, "b t (nh p1) (nw p2) c -> b t (nh nw) (p1 p2 c)", p1=c.patch, p2=c.patch)
        tokens = self.patch_proj(patches)
        if c.per_token_pe:
            return rearrange(tokens, "b t n d -> b (t n) d") + self.pe_ctx
        return rearrange(tokens + self.pe_ctx, "b t n d -> b (t n) d")

    def ts_embed(self, met: torch.Tensor) -> torch.Tensor:
        c = self.config
        if met.dim() != 3 or tuple(met.shape[1:]) != (c.t_in, c.n_features):
            raise ShapeMismatch(f"Station tensor {tuple(met.shape)} does not match [B, {c.t_in}, {c.n_features}]")
        return self.ts_proj(met) + self.pe_ts

    def encode_radar(self, radar: torch.Tensor) -> torch.Tensor:
        h = self.patch_embed(radar)
        for block in self.vision_encoder:
            h = block(h)
        return h

    def encode_station(self, met: torch.Tensor) -> torch.Tensor:
        h = self.ts_embed(met)
        for block in self.ts_encoder:
            h = block(h)
        return h

    def forward(self, radar: Optional[torch.Tensor], met: torch.Tensor) -> torch.Tensor:
        h = self.encode_station(met)

        if self.config.variant != "ts_only":
            if radar is None:
                raise ShapeMismatch(f"Variant {self.config.variant!r} needs a radar tensor")
            if radar.shape[0] != met.shape[0]:
                raise ShapeMismatch(f"Batch sizes differ: radar {radar.shape[0]}, station {met.shape[0]}")
            h_ctx = self.encode_radar(radar)
            for block in self.multimodal:
                h = block(h_ctx, h)

        if self.config.variant == "full":
            for block in self.decoder:
                h = block(h)

        return self.head(h).squeeze(-1)


def ablation_variant(kind: str, config: ModelConfig) -> M3RNet:
    if kind not in VARIANTS:
        raise ConfigError(f"Unknown ablation variant {kind!r}; expected one of {VARIANTS}")
    return M3RNet(replace(config, variant=kind))


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
