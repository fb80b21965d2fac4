"""Online inference: a FIFO bank caches each frame's backbone features so the
stepwise refinement of later frames never recomputes them, and the stop
threshold can be swapped at runtime without touching weights.
"""

import csv
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import torch

from .config import SSGAConfig
from .detector import Detection, FeatureMap, Frame
from .refinement import SSGADetector, order_neighbors


@dataclass
class MemoryEntry:
    """Everything retained from one processed frame."""

    frame_id: int
    feature_map: FeatureMap
    detection: Detection
    embedding: torch.Tensor


class MemoryBank:
    """FIFO cache of the last ``capacity`` frames, strictly increasing ids."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.entries: deque[MemoryEntry] = deque()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def last_frame_id(self) -> Optional[int]:
        return self.entries[-1].frame_id if self.entries else None

    def push(self, entry: MemoryEntry) -> "MemoryBank":
        if self.entries and entry.frame_id <= self.entries[-1].frame_id:
            raise ValueError(
                f"frame id {entry.frame_id} not after last pushed id {self.entries[-1].frame_id}"
            )
        self.entries.append(entry)
        while len(self.entries) > self.capacity:
            self.entries.popleft()
        return self

    def neighbors(self) -> list[tuple[int, FeatureMap]]:
        return [(e.frame_id, e.feature_map) for e in self.entries]


@dataclass
class StreamResult:
    """Per-frame telemetry from one stream step."""

    detection: Detection
    stages_executed: int
    stop_reason: str
    wall_time: float
    bank_size: int

    @property
    def num_detections(self) -> int:
        no_object = self.detection.class_logits.shape[-1] - 1
        return int((self.detection.class_logits.argmax(-1) != no_object).sum())


def reconfigure(
    config: SSGAConfig, new_delta: float, force_stages: Optional[int] = None
) -> SSGAConfig:
    """Updated inference config; model weights are never involved."""
    if not math.isfinite(new_delta) or new_delta < -1.0:
        raise ValueError(f"delta must be finite and >= -1 (or > 1 to never stop), got {new_delta}")
    return config.replace(delta=new_delta, force_stages=force_stages)


def stream_step(
    frame: Frame, bank: MemoryBank, model: SSGADetector, config: SSGAConfig = None
) -> tuple[StreamResult, MemoryBank]:
    """Detect on one incoming frame using only cached previous-frame features.

    Computes the frame's backbone features once, refines against the bank, and
    pushes this frame's features, final detection, and final embeddings for
    the frames that follow.
    """
    config = config or model.config
    if bank.last_frame_id is not None and frame.frame_id <= bank.last_frame_id:
        raise ValueError(
            f"frame id {frame.frame_id} not after last streamed id {bank.last_frame_id}"
        )
    bank_size = len(bank)
    with torch.no_grad():
        start = time.perf_counter()
        features = model.backbone_forward(frame)
        seed = config.sampling_seed * 1_000_003 + frame.frame_id
        neighbors = order_neighbors(
            bank.neighbors(), frame.frame_id, config.sampling_order, seed=seed
        )
        trace = model.run_refinement(frame, neighbors, config, features=features)
        wall_time = time.perf_counter() - start
        final = trace.final
        bank.push(MemoryEntry(frame.frame_id, features, final.detection, final.embedding))
    result = StreamResult(
        detection=final.detection,
        stages_executed=trace.stages_executed,
        stop_reason=trace.stop_reason,
        wall_time=wall_time,
        bank_size=bank_size,
    )
    return result, bank


STREAM_REPORT_FIELDS = ["frameId", "stagesExecuted", "stopReason", "wallTimeMs", "numDetections"]


def write_stream_report(records: list[tuple[int, StreamResult]], path):
    """One CSV line per frame: id, stages, stop reason, milliseconds, detections."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(STREAM_REPORT_FIELDS)
        for frame_id, result in records:
            writer.writerow([
                frame_id,
                result.stages_executed,
                result.stop_reason,
                f"{result.wall_time * 1000.0:.3f}",
                result.num_detections,
            ])
