"""Box format helpers: (cx, cy, w, h) in [0,1] everywhere, IoU / GIoU on corner boxes."""

import torch

LOGIT_EPS = 1e-7


def box_cxcywh_to_xyxy(boxes: torch.Tensor) -> torch.Tensor:
    cx, cy, w, h = boxes.unbind(-1)
    return torch.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], dim=-1)


def box_xyxy_to_cxcywh(boxes: torch.Tensor) -> torch.Tensor:
    x0, y0, x1, y1 = boxes.unbind(-1)
    return torch.stack([(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0], dim=-1)


def box_area(boxes: torch.Tensor) -> torch.Tensor:
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def _check_boxes(boxes: torch.Tensor, name: str):
    if ((boxes[..., 2] - boxes[..., 0]) <= 0).any() or ((boxes[..., 3] - boxes[..., 1]) <= 0).any():
        raise ValueError(f"{name} contains a degenerate box (w or h <= 0)")


def box_iou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise IoU between corner-format boxes ``a`` [n,4] and ``b`` [m,4].

    Returns an [n, m] matrix. Degenerate boxes (non-positive extent) are
    rejected rather than silently producing 0/0.
    """
    a = torch.as_tensor(a)
    b = torch.as_tensor(b)
    _check_boxes(a, "a")
    _check_boxes(b, "b")
    area_a = box_area(a)
    area_b = box_area(b)
    lt = torch.max(a[:, None, :2], b[None, :, :2])
    rb = torch.min(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def generalized_box_iou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise GIoU in [-1, 1]: IoU minus the hull area not covered by the union."""
    iou = box_iou(a, b)
    area_a = box_area(a)
    area_b = box_area(b)
    lt = torch.max(a[:, None, :2], b[None, :, :2])
    rb = torch.min(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    hull_lt = torch.min(a[:, None, :2], b[None, :, :2])
    hull_rb = torch.max(a[:, None, 2:], b[None, :, 2:])
    hull_wh = (hull_rb - hull_lt).clamp(min=0)
    hull = hull_wh[..., 0] * hull_wh[..., 1]
    return iou - (hull - union) / hull


def box_logit(boxes: torch.Tensor, eps: float = LOGIT_EPS) -> torch.Tensor:
    """Inverse of the logistic squash, clamped away from 0/1 so it stays finite."""
    boxes = boxes.clamp(min=eps, max=1.0 - eps)
    return torch.log(boxes) - torch.log1p(-boxes)
