"""Multi-head cross attention built from plain linear layers.

One implementation serves both the query decoder (queries attending to feature
cells) and the global-local fusion block (pooled region tokens attending to
per-query global features). Queries may carry arbitrary leading dimensions;
keys/values are a single shared [num_keys, key_dim] matrix.
"""

import torch
import torch.nn.functional as F
from torch import nn


class MultiHeadCrossAttention(nn.Module):
    def __init__(self, query_dim: int, key_dim: int, embed_dim: int, num_heads: int):
        super().__init__()
        if embed_dim % num_heads != 0:
            raise ValueError(f"embed_dim {embed_dim} not divisible by num_heads {num_heads}")
        self.embed_dim = embed_dim
        self.num_heads = num_heads
        self.head_dim = embed_dim // num_heads
        self.q_proj = nn.Linear(query_dim, embed_dim)
        self.k_proj = nn.Linear(key_dim, embed_dim)
        self.v_proj = nn.Linear(key_dim, embed_dim)
        self.out_proj = nn.Linear(embed_dim, embed_dim)

    def forward(self, query, key, need_weights=False):
        """Attend ``query`` [..., Lq, query_dim] over shared ``key`` [Lk, key_dim].

        Returns [..., Lq, embed_dim], plus the softmax weights
        [..., num_heads, Lq, Lk] when ``need_weights`` is set.
        """
        q = self.q_proj(query)
        k = self.k_proj(key)
        v = self.v_proj(key)

        q = q.reshape(*q.shape[:-1], self.num_heads, self.head_dim)
        k = k.reshape(key.shape[0], self.num_heads, self.head_dim)
        v = v.reshape(key.shape[0], self.num_heads, self.head_dim)

        scale = self.head_dim ** -0.5
        scores = torch.einsum("...qhd,khd->...hqk", q, k) * scale
        weights = F.softmax(scores, dim=-1)
        attended = torch.einsum("...hqk,khd->...qhd", weights, v)
        attended = attended.reshape(*attended.shape[:-2], self.embed_dim)
        out = self.out_proj(attended)
        if need_weights:
            return out, weights
        return out
