"""Set-prediction training loss: Hungarian assignment, then matched
cross-entropy + L1 + generalized IoU. Unmatched queries train toward the
explicit no-object class.
"""

import numpy as np
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

from .boxes import box_cxcywh_to_xyxy, generalized_box_iou
from .detector import Detection, GroundTruth

DEFAULT_LOSS_WEIGHTS = (2.0, 5.0, 2.0)  # (class, l1, giou)
DEFAULT_NO_OBJECT_WEIGHT = 0.1


def hungarian_match(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-cost assignment of ground truths (columns) to predictions (rows).

    ``cost`` is [n_pred, n_gt] with n_pred >= n_gt. Returns ``assignment``
    where assignment[g] is the prediction index matched to ground truth g,
    plus the total cost of the selected entries.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be a matrix, got shape {cost.shape}")
    n_pred, n_gt = cost.shape
    if n_pred < n_gt:
        raise ValueError(f"need at least as many predictions as ground truths ({n_pred} < {n_gt})")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    if n_gt == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(n_gt, dtype=np.int64)
    assignment[cols] = rows
    total = float(cost[rows, cols].sum())
    return assignment, total


def matching_cost(pred: Detection, gt: GroundTruth, weights=DEFAULT_LOSS_WEIGHTS) -> torch.Tensor:
    """[n_pred, n_gt] cost: -matched-class probability, L1 distance, -GIoU."""
    class_w, l1_w, giou_w = weights
    probs = F.softmax(pred.class_logits, dim=-1)
    cost_class = -probs[:, gt.class_ids]
    cost_l1 = torch.cdist(pred.boxes, gt.boxes, p=1)
    cost_giou = -generalized_box_iou(
        box_cxcywh_to_xyxy(pred.boxes), box_cxcywh_to_xyxy(gt.boxes)
    )
    return class_w * cost_class + l1_w * cost_l1 + giou_w * cost_giou


def detection_loss(
    pred: Detection,
    gt: GroundTruth,
    weights=DEFAULT_LOSS_WEIGHTS,
    no_object_weight: float = DEFAULT_NO_OBJECT_WEIGHT,
) -> torch.Tensor:
    """Scalar set loss for one frame, differentiable in logits and boxes."""
    class_w, l1_w, giou_w = weights
    n_pred = pred.num_queries
    num_classes = pred.class_logits.shape[-1] - 1
    device = pred.class_logits.device
    dtype = pred.class_logits.dtype

    targets = torch.full((n_pred,), num_classes, dtype=torch.long, device=device)
    if len(gt) > 0:
        with torch.no_grad():
            cost = matching_cost(pred, gt, weights)
        assignment, _ = hungarian_match(cost.cpu().numpy())
        matched = torch.from_numpy(assignment).to(device)
        targets[matched] = gt.class_ids

    ce_weights = torch.ones(num_classes + 1, dtype=dtype, device=device)
    ce_weights[num_classes] = no_object_weight
    loss = class_w * F.cross_entropy(pred.class_logits, targets, weight=ce_weights)

    if len(gt) > 0:
        matched_boxes = pred.boxes[matched]
        loss = loss + l1_w * F.l1_loss(matched_boxes, gt.boxes, reduction="sum") / len(gt)
        giou = generalized_box_iou(
            box_cxcywh_to_xyxy(matched_boxes), box_cxcywh_to_xyxy(gt.boxes)
        ).diagonal()
        loss = loss + giou_w * (1.0 - giou).sum() / len(gt)
    return loss
