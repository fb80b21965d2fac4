"""Stage-by-stage refinement: a base detection on the current frame, then up to
``num_stages`` aggregation passes, each consuming one previous frame, with an
optional cosine-similarity early stop between consecutive stages.
"""

import random
from dataclasses import dataclass

import torch

from .aggregation import AggregationBlock
from .boxes import box_logit
from .config import SSGAConfig
from .detector import Detection, DetectionHead, FeatureMap, Frame, GroundTruth, SingleFrameDetector
from .matching import DEFAULT_LOSS_WEIGHTS, DEFAULT_NO_OBJECT_WEIGHT, detection_loss

STOP_EXHAUSTED = "exhausted"
STOP_EARLY = "earlyStop"
STOP_FORCED = "forced"


@dataclass
class StageState:
    """Output of one stage: its embeddings and the detection they decode to."""

    stage_index: int
    embedding: torch.Tensor
    detection: Detection


@dataclass
class RefinementTrace:
    """Every stage of one frame's refinement, oldest first."""

    states: list[StageState]
    stop_reason: str

    @property
    def stages_executed(self) -> int:
        return len(self.states) - 1

    @property
    def final(self) -> StageState:
        return self.states[-1]


def order_neighbors(available, current_id: int, mode: str, seed=None):
    """Order (frame_id, FeatureMap) pairs for stepwise aggregation.

    ``descending`` sorts by temporal distance with the farthest frame first, so
    the closest frame is consumed last; ``ascending`` reverses that; ``random``
    shuffles with the given seed. Frames at or after ``current_id`` violate the
    online constraint and are rejected.
    """
    ids = [fid for fid, _ in available]
    for fid in ids:
        if fid >= current_id:
            raise ValueError(f"neighbor frame {fid} is not before current frame {current_id}")
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate neighbor frame ids: {ids}")
    if mode == "descending":
        return sorted(available, key=lambda pair: pair[0])
    if mode == "ascending":
        return sorted(available, key=lambda pair: pair[0], reverse=True)
    if mode == "random":
        shuffled = list(available)
        random.Random(seed).shuffle(shuffled)
        return shuffled
    raise ValueError(f"unknown sampling order {mode!r}")


def should_stop(curr: torch.Tensor, prev: torch.Tensor, delta: float) -> bool:
    """True when the flattened embeddings' cosine similarity exceeds ``delta``.

    Two zero embeddings count as identical (similarity 1); a single zero
    embedding counts as maximally dissimilar.
    """
    if curr.shape != prev.shape:
        raise ValueError(f"shape mismatch: {tuple(curr.shape)} vs {tuple(prev.shape)}")
    a = curr.detach().flatten()
    b = prev.detach().flatten()
    norm_a = torch.linalg.vector_norm(a)
    norm_b = torch.linalg.vector_norm(b)
    if norm_a == 0 and norm_b == 0:
        cosine = 1.0
    elif norm_a == 0 or norm_b == 0:
        cosine = 0.0
    else:
        cosine = float(torch.dot(a, b) / (norm_a * norm_b))
    return cosine > delta


class SSGADetector(torch.nn.Module):
    """Full model: base single-frame detector plus per-stage aggregation blocks
    and heads (parameters are not shared across stages)."""

    def __init__(self, config: SSGAConfig):
        super().__init__()
        self.config = config
        self.base = SingleFrameDetector(config)
        self.stage_blocks = torch.nn.ModuleList(
            AggregationBlock(
                config.embed_dim, config.feat_dim, config.num_heads,
                config.pool_size, config.hidden_mult,
            )
            for _ in range(config.num_stages)
        )
        self.stage_heads = torch.nn.ModuleList(
            DetectionHead(config.embed_dim, config.num_classes)
            for _ in range(config.num_stages)
        )

    def backbone_forward(self, frame: Frame) -> FeatureMap:
        return self.base.backbone_forward(frame)

    def init_stage(self, frame: Frame, features: FeatureMap = None) -> StageState:
        """Stage 0: the plain single-frame detection, no aggregation."""
        if features is None:
            features = self.base.backbone_forward(frame)
        embedding = self.base.decode_queries(features)
        return StageState(0, embedding, self.base.predict_heads(embedding))

    def refine_stage(self, prev: StageState, neighbor, config: SSGAConfig = None) -> StageState:
        """One aggregation pass against ``neighbor`` = (frame_id, FeatureMap).

        Boxes update residually in unsquashed space, so the refined box stays
        inside (0,1): squash(raw + alpha * unsquash(previous)).
        """
        config = config or self.config
        stage = prev.stage_index + 1
        if stage > config.num_stages:
            raise ValueError(f"stage {stage} exceeds configured depth {config.num_stages}")
        _, neighbor_features = neighbor
        block = self.stage_blocks[stage - 1]
        head = self.stage_heads[stage - 1]
        beta = config.beta_schedule[stage - 1]
        embedding = block.aggregate_stage(
            prev.embedding, neighbor_features, prev.detection.boxes, beta
        )
        class_logits, box_raw = head.raw(embedding)
        boxes = torch.sigmoid(box_raw + config.alpha * box_logit(prev.detection.boxes))
        return StageState(stage, embedding, Detection(class_logits, boxes))

    def run_refinement(
        self,
        frame: Frame,
        neighbors,
        config: SSGAConfig = None,
        force_stages: int = None,
        features: FeatureMap = None,
    ) -> RefinementTrace:
        """Stage 0 plus up to min(depth, neighbors, force) refinement stages.

        After every refinement stage the stop criterion compares that stage's
        embeddings with the previous stage's; stage 1 always runs when a
        neighbor exists. ``neighbors`` must already be ordered.
        """
        config = config or self.config
        if len(neighbors) > config.num_stages:
            raise ValueError(
                f"{len(neighbors)} neighbors exceed configured depth {config.num_stages}"
            )
        for fid, _ in neighbors:
            if fid >= frame.frame_id:
                raise ValueError(f"neighbor frame {fid} is not before frame {frame.frame_id}")

        if force_stages is None:
            force_stages = config.force_stages
        available = min(config.num_stages, len(neighbors))
        limit = available if force_stages is None else min(available, force_stages)

        state = self.init_stage(frame, features)
        states = [state]
        stop_reason = STOP_EXHAUSTED
        for i in range(limit):
            state = self.refine_stage(state, neighbors[i], config)
            states.append(state)
            if should_stop(state.embedding, states[-2].embedding, config.delta):
                stop_reason = STOP_EARLY
                break
        else:
            if force_stages is not None and limit < available:
                stop_reason = STOP_FORCED
        return RefinementTrace(states, stop_reason)


def training_loss_all_stages(
    trace: RefinementTrace,
    gt: GroundTruth,
    weights=DEFAULT_LOSS_WEIGHTS,
    no_object_weight: float = DEFAULT_NO_OBJECT_WEIGHT,
) -> torch.Tensor:
    """Sum of the set loss over every stage, each with its own matching."""
    total = None
    for state in trace.states:
        term = detection_loss(state.detection, gt, weights, no_object_weight)
        total = term if total is None else total + term
    return total
