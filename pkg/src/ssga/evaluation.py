"""Detection metrics (mAP over IoU 0.50:0.05:0.95, fixed-threshold and
size-split APs), stage-count statistics, and checkpoint sweeps over stop
thresholds or forced stage counts.
"""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .boxes import box_cxcywh_to_xyxy, box_iou
from .config import SSGAConfig
from .detector import Detection, GroundTruth
from .refinement import RefinementTrace, SSGADetector
from .runtime import MemoryBank, StreamResult, reconfigure, stream_step

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)

# COCO size buckets, applied to GT areas rescaled to a 640-pixel frame.
SIZE_REFERENCE = 640.0
AREA_RANGES = {
    "all": (0.0, float("inf")),
    "small": (0.0, 32.0 ** 2),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, float("inf")),
}


@dataclass
class EvalResult:
    mean_ap: float = 0.0
    ap50: float = 0.0
    ap75: float = 0.0
    ap_small: float = 0.0
    ap_medium: float = 0.0
    ap_large: float = 0.0
    mean_stages: float = 0.0
    frames_per_second: float = 0.0

    def to_dict(self) -> dict:
        return {k: round(v, 6) for k, v in dataclasses.asdict(self).items()}


@dataclass
class SweepSpec:
    deltas: Optional[list[float]] = None
    stage_counts: Optional[list[int]] = None

    def validate(self):
        chosen = [v for v in (self.deltas, self.stage_counts) if v]
        if len(chosen) != 1:
            raise ValueError("sweep needs exactly one non-empty axis: deltas or stage_counts")


def _prediction_records(predictions: list[Detection]):
    """(conf, label, frame, xyxy box) per query, every query kept."""
    records = []
    for f, det in enumerate(predictions):
        conf, labels = det.scores()
        boxes = box_cxcywh_to_xyxy(det.boxes)
        for q in range(det.num_queries):
            records.append((float(conf[q]), int(labels[q]), f, boxes[q]))
    return records


def _gt_area(gt_box: torch.Tensor) -> float:
    return float(gt_box[2] * SIZE_REFERENCE * gt_box[3] * SIZE_REFERENCE)


def _average_precision(matches: list[tuple[float, bool]], num_positive: int) -> float:
    """101-point interpolated AP from (confidence, is_tp) pairs, already sorted."""
    if num_positive == 0:
        return float("nan")
    tp = np.cumsum([1.0 if is_tp else 0.0 for _, is_tp in matches])
    fp = np.cumsum([0.0 if is_tp else 1.0 for _, is_tp in matches])
    recall = tp / num_positive
    precision = tp / np.maximum(tp + fp, 1e-12)
    interpolated = np.zeros_like(RECALL_POINTS)
    for i, r in enumerate(RECALL_POINTS):
        at_least = precision[recall >= r]
        interpolated[i] = at_least.max() if at_least.size else 0.0
    return float(interpolated.mean())


def _class_ap(records, gts: list[GroundTruth], class_id: int, threshold: float,
              area_range: tuple[float, float]) -> float:
    lo, hi = area_range
    gt_boxes = []
    gt_ignored = []
    for gt in gts:
        keep = gt.class_ids == class_id
        boxes = box_cxcywh_to_xyxy(gt.boxes[keep])
        ignored = [not (lo <= _gt_area(gt.boxes[keep][j]) < hi) for j in range(len(boxes))]
        gt_boxes.append(boxes)
        gt_ignored.append(ignored)
    num_positive = sum(len(b) - sum(ig) for b, ig in zip(gt_boxes, gt_ignored))
    if num_positive == 0:
        return float("nan")

    candidates = [r for r in records if r[1] == class_id]
    candidates.sort(key=lambda r: (-r[0], r[2], tuple(float(v) for v in r[3])))
    matched = [np.zeros(len(b), dtype=bool) for b in gt_boxes]
    outcomes = []
    for conf, _, frame, box in candidates:
        boxes = gt_boxes[frame]
        if len(boxes) == 0:
            outcomes.append((conf, False))
            continue
        ious = box_iou(box.unsqueeze(0), boxes)[0]
        best, best_iou = -1, threshold
        best_ignored, best_ignored_iou = -1, threshold
        for j in range(len(boxes)):
            iou = float(ious[j])
            if iou < threshold:
                continue
            if gt_ignored[frame][j]:
                if iou >= best_ignored_iou:
                    best_ignored, best_ignored_iou = j, iou
            elif not matched[frame][j] and iou >= best_iou:
                best, best_iou = j, iou
        if best >= 0:
            matched[frame][best] = True
            outcomes.append((conf, True))
        elif best_ignored >= 0:
            continue  # matched an out-of-range GT: neither TP nor FP
        else:
            outcomes.append((conf, False))
    return _average_precision(outcomes, num_positive)


def compute_ap(predictions: list[Detection], gts: list[GroundTruth],
               iou_thresholds=IOU_THRESHOLDS) -> EvalResult:
    """COCO-style evaluation over paired per-frame predictions and annotations.

    Greedy highest-confidence-first matching per threshold, one match per GT,
    AP averaged over the classes that appear in the annotations. Stage/runtime
    fields are left at zero for the caller to fill.
    """
    if len(predictions) != len(gts):
        raise ValueError(f"{len(predictions)} prediction frames vs {len(gts)} GT frames")
    records = _prediction_records(predictions)
    classes = sorted({int(c) for gt in gts for c in gt.class_ids})

    def mean_ap(thresholds, area_key) -> float:
        values = []
        for t in thresholds:
            for c in classes:
                ap = _class_ap(records, gts, c, t, AREA_RANGES[area_key])
                if not np.isnan(ap):
                    values.append(ap)
        return float(np.mean(values)) if values else 0.0

    return EvalResult(
        mean_ap=mean_ap(iou_thresholds, "all"),
        ap50=mean_ap([0.5], "all"),
        ap75=mean_ap([0.75], "all"),
        ap_small=mean_ap(iou_thresholds, "small"),
        ap_medium=mean_ap(iou_thresholds, "medium"),
        ap_large=mean_ap(iou_thresholds, "large"),
    )


def stage_statistics(traces: list) -> tuple[float, dict[int, int]]:
    """Mean stages executed plus a {stages: count} histogram."""
    if not traces:
        raise ValueError("no traces to summarize")
    counts = [t.stages_executed if isinstance(t, RefinementTrace) else int(t) for t in traces]
    histogram: dict[int, int] = {}
    for c in counts:
        histogram[c] = histogram.get(c, 0) + 1
    return float(np.mean(counts)), dict(sorted(histogram.items()))


def evaluate_dataset(
    model: SSGADetector, clips, config: SSGAConfig = None, motion: str = None
) -> tuple[EvalResult, list[tuple[int, int, StreamResult]]]:
    """Stream every clip through a fresh memory bank and score the detections.

    ``motion`` optionally restricts to clips whose metadata carries that tag.
    Returns the metrics and per-frame (video, frame, StreamResult) telemetry.
    """
    config = config or model.config
    predictions = []
    gts = []
    records = []
    total_time = 0.0
    for clip in clips:
        if motion is not None and clip.meta.get("motion") != motion:
            continue
        bank = MemoryBank(config.num_stages)
        for frame, gt in zip(clip.frames, clip.annotations):
            result, bank = stream_step(frame, bank, model, config)
            predictions.append(result.detection)
            gts.append(gt)
            records.append((clip.video_id, frame.frame_id, result))
            total_time += result.wall_time
    if not records:
        raise ValueError("no clips matched the evaluation filter")
    result = compute_ap(predictions, gts)
    result.mean_stages = float(np.mean([r.stages_executed for _, _, r in records]))
    result.frames_per_second = len(records) / total_time if total_time > 0 else 0.0
    return result, records


def sweep(model: SSGADetector, clips, spec: SweepSpec) -> list[dict]:
    """One evaluation row per setting, reusing the same weights throughout.

    A failing setting contributes an ``error`` row; the sweep continues.
    """
    spec.validate()
    if spec.deltas:
        settings = [("delta", v) for v in spec.deltas]
    else:
        settings = [("forceStages", v) for v in spec.stage_counts]
    rows = []
    for name, value in settings:
        row = {"setting": name, "value": value}
        try:
            if name == "delta":
                config = reconfigure(model.config, float(value))
            else:
                config = model.config.replace(force_stages=int(value))
            result, _ = evaluate_dataset(model, clips, config)
            row.update(result.to_dict())
        except Exception as exc:  # per-row isolation
            row["error"] = str(exc)
        rows.append(row)
    return rows
