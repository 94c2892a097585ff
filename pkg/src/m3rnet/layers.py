from typing import Optional

import torch
import torch.nn as nn
from einops import rearrange

LN_EPS = 1e-5


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over `n_heads` heads of width `d_head`.

    Self-attention when `context` is omitted; otherwise queries come from
    `query` and keys/values from `context`.
    """

    def __init__(self, d_model: int, n_heads: int, d_head: int):
        super().__init__()
        inner = n_heads * d_head
        self.n_heads = n_heads
        self.scale = d_head ** -0.5
        self.w_q = nn.Linear(d_model, inner, bias=False)
        self.w_k = nn.Linear(d_model, inner, bias=False)
        self.w_v = nn.Linear(d_model, inner, bias=False)
        self.w_o = nn.Linear(inner, d_model, bias=False)

    def attention_weights(self, query: torch.Tensor, context: Optional[torch.Tensor] = None) -> torch.Tensor:
        context = query if context is None else context
        q = rearrange(self.w_q(query), "... n (h d) -> ... h n d", h=self.n_heads)
        k = rearrange(self.w_k(context), "... n (h d) -> ... h n d", h=self.n_heads)
        return torch.softmax(torch.matmul(q, k.transpose(-1, -2)) * self.scale, dim=-1)

    def forward(self, query: torch.Tensor, context: Optional[torch.Tensor] = None) -> torch.Tensor:
        context = query if context is None else context
        weights = self.attention_weights(query, context)
        v = rearrange(self.w_v(context), "... n (h d) -> ... h n d", h=self.n_heads)
        heads = rearrange(torch.matmul(weights, v), "... h n d -> ... n (h d)")
        return self.w_o(heads)


class MLP(nn.Module):
    def __init__(self, d_model: int, hidden_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(d_model, hidden_dim)
        self.gelu = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.gelu(self.fc1(x)))


class EncoderBlock(nn.Module):
    """Pre-norm residual block: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, d_model: int, n_heads: int, d_head: int, mlp_dim: int):
        super().__init__()
        self.ln_attn = nn.LayerNorm(d_model, eps=LN_EPS)
        self.attn = MultiHeadAttention(d_model, n_heads, d_head)
        self.ln_mlp = nn.LayerNorm(d_model, eps=LN_EPS)
        self.mlp = MLP(d_model, mlp_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.attn(self.ln_attn(x)) + x
        return self.mlp(self.ln_mlp(x)) + x


class MultiModalBlock(nn.Module):
    """Station tokens query radar tokens, followed by the residual MLP sub-layer.

    The attention input is not normalized: h' = Attn(q=h_tgt, kv=h_src) + h_tgt.
    """

    def __init__(self, d_model: int, n_heads: int, d_head: int, mlp_dim: int):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, d_head)
        self.ln_mlp = nn.LayerNorm(d_model, eps=LN_EPS)
        self.mlp = MLP(d_model, mlp_dim)

    def forward(self, h_src: torch.Tensor, h_tgt: torch.Tensor) -> torch.Tensor:
        h = self.attn(h_tgt, context=h_src) + h_tgt
        return self.mlp(self.ln_mlp(h)) + h
