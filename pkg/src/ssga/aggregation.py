"""Global-local fusion for one refinement stage.

The previous stage's embeddings provide coarse whole-frame semantics; a
neighboring frame contributes fine-grained features pooled from scaled box
regions. Region tokens attend over the global rows and the result folds back
into the embeddings through a normalized residual feed-forward block.
"""

import torch
from torch import nn

from .attention import MultiHeadCrossAttention
from .detector import FeatureMap


def _bilinear_sample(values: torch.Tensor, ys: torch.Tensor, xs: torch.Tensor) -> torch.Tensor:
    """Sample [C, H, W] ``values`` at continuous positions, border-clamped.

    ``ys``/``xs`` index cell centers (cell (i, j) sits at y=i, x=j). Any
    leading shape is allowed; returns [..., C]. Differentiable in both the
    positions and the map.
    """
    _, h, w = values.shape
    ys = ys.clamp(0.0, h - 1.0)
    xs = xs.clamp(0.0, w - 1.0)
    y_lo = ys.floor().long().clamp(0, h - 1)
    x_lo = xs.floor().long().clamp(0, w - 1)
    y_hi = (y_lo + 1).clamp(max=h - 1)
    x_hi = (x_lo + 1).clamp(max=w - 1)
    ty = (ys - y_lo).unsqueeze(-1)
    tx = (xs - x_lo).unsqueeze(-1)

    flat = values.flatten(1)

    def grab(yi, xi):
        return flat[:, (yi * w + xi).flatten()].transpose(0, 1).reshape(*yi.shape, -1)

    top = grab(y_lo, x_lo) * (1 - tx) + grab(y_lo, x_hi) * tx
    bottom = grab(y_hi, x_lo) * (1 - tx) + grab(y_hi, x_hi) * tx
    return top * (1 - ty) + bottom * ty


def roi_extract(
    boxes: torch.Tensor, feature_map: FeatureMap, beta: float, pool_size: int
) -> torch.Tensor:
    """Pool a p x p grid of feature vectors per box, bilinearly, no quantization.

    Each (cx, cy, w, h) box is scaled by ``beta`` about its center and clipped
    to the frame; samples land at the centers of a p x p division of the
    clipped region. A box that clips to zero area degenerates to its center
    sample replicated across the grid. Returns [n, p*p, feat_dim].
    """
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    values = feature_map.values
    _, h, w = values.shape
    cx, cy, bw, bh = boxes.unbind(-1)
    half_w = 0.5 * beta * bw
    half_h = 0.5 * beta * bh
    x0 = (cx - half_w).clamp(0.0, 1.0)
    x1 = (cx + half_w).clamp(0.0, 1.0)
    y0 = (cy - half_h).clamp(0.0, 1.0)
    y1 = (cy + half_h).clamp(0.0, 1.0)

    degenerate = ((x1 - x0) <= 0) | ((y1 - y0) <= 0)
    if degenerate.any():
        ccx = cx.clamp(0.0, 1.0)
        ccy = cy.clamp(0.0, 1.0)
        x0 = torch.where(degenerate, ccx, x0)
        x1 = torch.where(degenerate, ccx, x1)
        y0 = torch.where(degenerate, ccy, y0)
        y1 = torch.where(degenerate, ccy, y1)

    steps = (torch.arange(pool_size, dtype=boxes.dtype, device=boxes.device) + 0.5) / pool_size
    gx = x0.unsqueeze(-1) + steps * (x1 - x0).unsqueeze(-1)
    gy = y0.unsqueeze(-1) + steps * (y1 - y0).unsqueeze(-1)

    # normalized [0,1] -> cell-center coordinates
    fx = gx * w - 0.5
    fy = gy * h - 0.5
    ys = fy.unsqueeze(-1).expand(-1, pool_size, pool_size)
    xs = fx.unsqueeze(-2).expand(-1, pool_size, pool_size)
    samples = _bilinear_sample(values, ys, xs)
    return samples.reshape(boxes.shape[0], pool_size * pool_size, -1)


class AggregationBlock(nn.Module):
    """One stage's fusion: global projection, region cross-attention, residual merge."""

    def __init__(self, embed_dim: int, feat_dim: int, num_heads: int, pool_size: int,
                 hidden_mult: int = 2):
        super().__init__()
        hidden = hidden_mult * embed_dim
        self.pool_size = pool_size
        self.global_mlp = nn.Sequential(
            nn.Linear(embed_dim, hidden), nn.ReLU(), nn.Linear(hidden, embed_dim)
        )
        self.attn = MultiHeadCrossAttention(feat_dim, embed_dim, embed_dim, num_heads)
        self.norm = nn.LayerNorm(embed_dim)
        self.ffn = nn.Sequential(
            nn.Linear(embed_dim, hidden), nn.ReLU(), nn.Linear(hidden, embed_dim)
        )

    def global_map(self, prev_embedding: torch.Tensor) -> torch.Tensor:
        """Row-wise projection of the previous stage's embeddings, [n, d]."""
        return self.global_mlp(prev_embedding)

    def cross_attend(self, local: torch.Tensor, global_: torch.Tensor, need_weights=False):
        """Region tokens [n, p*p, feat_dim] attend over all global rows [n, d].

        Token outputs are mean-pooled back to one vector per query, [n, d].
        """
        if need_weights:
            out, weights = self.attn(local, global_, need_weights=True)
            return out.mean(dim=1), weights
        return self.attn(local, global_).mean(dim=1)

    def fuse_and_project(self, attended: torch.Tensor, prev_embedding: torch.Tensor) -> torch.Tensor:
        if attended.shape != prev_embedding.shape:
            raise ValueError(
                f"shape mismatch: attended {tuple(attended.shape)} vs "
                f"previous embedding {tuple(prev_embedding.shape)}"
            )
        fused = self.norm(attended + prev_embedding)
        return fused + self.ffn(fused)

    def aggregate_stage(
        self,
        prev_embedding: torch.Tensor,
        neighbor_features: FeatureMap,
        prev_boxes: torch.Tensor,
        beta: float,
    ) -> torch.Tensor:
        local = roi_extract(prev_boxes, neighbor_features, beta, self.pool_size)
        attended = self.cross_attend(local, self.global_map(prev_embedding))
        return self.fuse_and_project(attended, prev_embedding)

    forward = aggregate_stage
