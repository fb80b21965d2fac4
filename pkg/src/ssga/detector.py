"""Single-frame query detector: strided conv backbone, cross-attention decoder
over flattened feature cells, and classification/box heads.

Boxes are normalized (cx, cy, w, h) squashed through a logistic, so every
coordinate lives strictly inside (0, 1).
"""

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .attention import MultiHeadCrossAttention
from .config import SSGAConfig


@dataclass
class Frame:
    """One video frame: [3, H, W] pixels in [0, 1] plus its index in the video."""

    pixels: torch.Tensor
    frame_id: int = 0

    def validate(self, stride: int = 1):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise ValueError(f"frame pixels must be [3, H, W], got {tuple(self.pixels.shape)}")
        _, h, w = self.pixels.shape
        if h < 16 or w < 16:
            raise ValueError(f"frame must be at least 16x16, got {h}x{w}")
        if h % stride or w % stride:
            raise ValueError(f"frame {h}x{w} not divisible by backbone stride {stride}")
        if self.frame_id < 0:
            raise ValueError(f"frame_id must be non-negative, got {self.frame_id}")


@dataclass
class FeatureMap:
    """Backbone output grid [feat_dim, H/stride, W/stride]."""

    values: torch.Tensor
    stride: int

    @property
    def num_cells(self) -> int:
        return self.values.shape[1] * self.values.shape[2]

    def flatten_cells(self) -> torch.Tensor:
        """[H'*W', feat_dim] view, row-major over the grid."""
        return self.values.flatten(1).transpose(0, 1)


@dataclass
class Detection:
    """Per-query class logits [n, c+1] (last column = no object) and boxes [n, 4]."""

    class_logits: torch.Tensor
    boxes: torch.Tensor

    @property
    def num_queries(self) -> int:
        return self.boxes.shape[0]

    def scores(self) -> tuple[torch.Tensor, torch.Tensor]:
        """(confidence, class_id) per query: the best real class, no-object excluded."""
        probs = F.softmax(self.class_logits, dim=-1)[:, :-1]
        conf, labels = probs.max(dim=-1)
        return conf, labels

    def detach(self) -> "Detection":
        return Detection(self.class_logits.detach(), self.boxes.detach())


@dataclass
class GroundTruth:
    """Annotated objects of one frame: class ids [k] and (cx, cy, w, h) boxes [k, 4]."""

    class_ids: torch.Tensor = field(default_factory=lambda: torch.zeros(0, dtype=torch.long))
    boxes: torch.Tensor = field(default_factory=lambda: torch.zeros(0, 4))

    def __len__(self) -> int:
        return self.class_ids.shape[0]

    def validate(self, num_classes: int, where: str = "ground truth"):
        for j in range(len(self)):
            cx, cy, w, h = self.boxes[j].tolist()
            if w <= 0 or h <= 0:
                raise ValueError(f"{where}, object {j}: non-positive box size w={w} h={h}")
            if not (0 <= cx <= 1 and 0 <= cy <= 1 and w <= 1 and h <= 1):
                raise ValueError(f"{where}, object {j}: box outside [0,1]: {[cx, cy, w, h]}")
            cid = int(self.class_ids[j])
            if not 0 <= cid < num_classes:
                raise ValueError(f"{where}, object {j}: class id {cid} out of range")


class ConvBackbone(nn.Module):
    """Four conv blocks with total stride 8, ReLU throughout."""

    def __init__(self, feat_dim: int = 64):
        super().__init__()
        widths = [3, 16, 32, feat_dim, feat_dim]
        strides = [2, 2, 2, 1]
        layers = []
        for cin, cout, s in zip(widths[:-1], widths[1:], strides):
            layers += [nn.Conv2d(cin, cout, kernel_size=3, stride=s, padding=1), nn.ReLU()]
        self.blocks = nn.Sequential(*layers)
        self.stride = 8
        self.feat_dim = feat_dim

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        return self.blocks(pixels.unsqueeze(0)).squeeze(0)


class DecoderLayer(nn.Module):
    """Cross-attention from queries to feature cells, then a feed-forward block."""

    def __init__(self, embed_dim: int, num_heads: int, hidden_mult: int = 2):
        super().__init__()
        self.attn = MultiHeadCrossAttention(embed_dim, embed_dim, embed_dim, num_heads)
        self.norm1 = nn.LayerNorm(embed_dim)
        self.norm2 = nn.LayerNorm(embed_dim)
        hidden = hidden_mult * embed_dim
        self.ffn = nn.Sequential(nn.Linear(embed_dim, hidden), nn.ReLU(), nn.Linear(hidden, embed_dim))

    def forward(self, queries: torch.Tensor, cells: torch.Tensor) -> torch.Tensor:
        queries = self.norm1(queries + self.attn(queries, cells))
        return self.norm2(queries + self.ffn(queries))


class DetectionHead(nn.Module):
    """Class projection plus a 3-layer box MLP; box outputs squash through a logistic."""

    def __init__(self, embed_dim: int, num_classes: int):
        super().__init__()
        self.class_proj = nn.Linear(embed_dim, num_classes + 1)
        self.box_mlp = nn.Sequential(
            nn.Linear(embed_dim, embed_dim),
            nn.ReLU(),
            nn.Linear(embed_dim, embed_dim),
            nn.ReLU(),
            nn.Linear(embed_dim, 4),
        )

    def raw(self, embeddings: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.class_proj(embeddings), self.box_mlp(embeddings)

    def forward(self, embeddings: torch.Tensor) -> Detection:
        logits, box_raw = self.raw(embeddings)
        return Detection(logits, torch.sigmoid(box_raw))


class SingleFrameDetector(nn.Module):
    """Stage-0 detector: learned queries decode a frame's feature grid into detections."""

    def __init__(self, config: SSGAConfig):
        super().__init__()
        self.config = config
        self.backbone = ConvBackbone(config.feat_dim)
        self.queries = nn.Parameter(torch.empty(config.num_queries, config.embed_dim))
        nn.init.normal_(self.queries, std=0.5)
        self.input_proj = nn.Linear(config.feat_dim, config.embed_dim)
        self.layers = nn.ModuleList(
            DecoderLayer(config.embed_dim, config.num_heads, config.hidden_mult)
            for _ in range(config.decoder_layers)
        )
        self.head = DetectionHead(config.embed_dim, config.num_classes)

    def backbone_forward(self, frame: Frame) -> FeatureMap:
        frame.validate(stride=self.backbone.stride)
        return FeatureMap(self.backbone(frame.pixels), self.backbone.stride)

    def decode_queries(self, feature_map: FeatureMap, queries: torch.Tensor = None) -> torch.Tensor:
        """Per-query embeddings [n, embed_dim] from attention over flattened cells."""
        if queries is None:
            queries = self.queries
        if queries.shape[-1] != self.config.embed_dim:
            raise ValueError(
                f"query width {queries.shape[-1]} does not match embed_dim {self.config.embed_dim}"
            )
        cells = self.input_proj(feature_map.flatten_cells())
        out = queries
        for layer in self.layers:
            out = layer(out, cells)
        return out

    def predict_heads(self, embeddings: torch.Tensor) -> Detection:
        return self.head(embeddings)

    def forward(self, frame: Frame) -> tuple[torch.Tensor, Detection, FeatureMap]:
        feature_map = self.backbone_forward(frame)
        embeddings = self.decode_queries(feature_map)
        return embeddings, self.predict_heads(embeddings), feature_map
