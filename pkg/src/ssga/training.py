"""Training loop: per-frame refinement traces with early stop disabled, the
set loss summed over every stage, Adam updates.
"""

import random

import torch

from .config import NEVER_STOP, SSGAConfig, TrainConfig
from .refinement import SSGADetector, order_neighbors, training_loss_all_stages
from .synthetic import VideoClip


def _training_examples(clips: list[VideoClip], per_clip: int, rng: random.Random):
    """(clip, frame index) pairs for one epoch, clip order shuffled."""
    order = list(range(len(clips)))
    rng.shuffle(order)
    examples = []
    for ci in order:
        clip = clips[ci]
        indices = list(range(len(clip)))
        rng.shuffle(indices)
        for t in indices[: min(per_clip, len(indices))]:
            examples.append((clip, t))
    return examples


def train_step(model: SSGADetector, clip: VideoClip, t: int, config: SSGAConfig,
               train_cfg: TrainConfig) -> torch.Tensor:
    """Loss for frame ``t`` of ``clip`` against its preceding frames."""
    frame = clip.frames[t]
    window = clip.frames[max(0, t - config.num_stages): t]
    limit = config.num_stages if config.force_stages is None else config.force_stages
    available = []
    if limit > 0:
        available = [(f.frame_id, model.backbone_forward(f)) for f in window]
    neighbors = order_neighbors(available, frame.frame_id, config.sampling_order,
                                seed=config.sampling_seed + frame.frame_id)
    trace = model.run_refinement(frame, neighbors, config)
    weights = (train_cfg.class_weight, train_cfg.l1_weight, train_cfg.giou_weight)
    return training_loss_all_stages(trace, clip.annotations[t], weights,
                                    train_cfg.no_object_weight)


def train_model(model: SSGADetector, clips: list[VideoClip], train_cfg: TrainConfig,
                log=None) -> list[float]:
    """Optimize in place; returns the mean loss per epoch."""
    if not clips:
        raise ValueError("no training clips")
    config = model.config.replace(delta=NEVER_STOP)  # all stages run while training
    optimizer = torch.optim.Adam(
        model.parameters(), lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay
    )
    rng = random.Random(train_cfg.seed)
    history = []
    model.train()
    for epoch in range(train_cfg.epochs):
        total = 0.0
        examples = _training_examples(clips, train_cfg.frames_per_clip, rng)
        for clip, t in examples:
            optimizer.zero_grad()
            loss = train_step(model, clip, t, config, train_cfg)
            loss.backward()
            if train_cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            optimizer.step()
            total += float(loss)
        mean_loss = total / len(examples)
        history.append(mean_loss)
        if log:
            log(f"epoch {epoch + 1}/{train_cfg.epochs}: loss {mean_loss:.4f}")
    model.eval()
    return history
