"""Deterministic toy clips: colored shapes drifting on a dark canvas, degraded
by speed-proportional motion blur and occasional defocus, with exact
bounding-box annotations computed from the rendered masks.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy import ndimage

from .detector import Frame, GroundTruth

SHAPES = ("disk", "square", "triangle")

CLASS_COLORS = [
    (0.93, 0.26, 0.21),
    (0.22, 0.83, 0.34),
    (0.26, 0.42, 0.94),
    (0.95, 0.84, 0.25),
    (0.80, 0.30, 0.85),
    (0.30, 0.85, 0.85),
]

BACKGROUND = 0.06
DEFOCUS_SIGMA = 1.0


@dataclass
class ObjectSpec:
    shape: str
    class_id: int
    size: float  # fraction of the frame edge
    velocity: tuple[float, float]  # frame fractions per frame
    color: tuple[float, float, float]

    def validate(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if not 0 < self.size <= 0.5:
            raise ValueError(f"object size must be in (0, 0.5], got {self.size}")

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass
class SceneSpec:
    objects: list[ObjectSpec]
    num_frames: int = 16
    frame_size: int = 64
    blur_per_speed: float = 2.0
    defocus_prob: float = 0.0
    seed: int = 0

    def validate(self):
        if not self.objects:
            raise ValueError("scene needs at least one object")
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.frame_size < 16:
            raise ValueError(f"frame_size must be >= 16, got {self.frame_size}")
        for obj in self.objects:
            obj.validate()


@dataclass
class VideoClip:
    video_id: int
    frames: list[Frame]
    annotations: list[GroundTruth]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def _shape_mask(shape: str, cx: float, cy: float, radius: float, size: int) -> np.ndarray:
    """Rasterize a shape on the integer pixel grid; pixels sample at centers."""
    ys, xs = np.mgrid[0:size, 0:size]
    px = xs + 0.5
    py = ys + 0.5
    if shape == "disk":
        mask = (px - cx) ** 2 + (py - cy) ** 2 <= radius ** 2
    elif shape == "square":
        mask = np.maximum(np.abs(px - cx), np.abs(py - cy)) <= radius
    elif shape == "triangle":
        # upward triangle inscribed in the square of half-extent ``radius``
        inside_y = (py >= cy - radius) & (py <= cy + radius)
        half_width = (py - (cy - radius)) / 2.0
        mask = inside_y & (np.abs(px - cx) <= half_width)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    if not mask.any():
        mask[min(int(cy), size - 1), min(int(cx), size - 1)] = True
    return mask


def _mask_bbox(mask: np.ndarray, size: int) -> list[float]:
    """Exact normalized (cx, cy, w, h) of the rendered pixels."""
    ys, xs = np.nonzero(mask)
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    return [
        (x0 + x1) / (2 * size),
        (y0 + y1) / (2 * size),
        (x1 - x0) / size,
        (y1 - y0) / size,
    ]


def _motion_kernel(motion: tuple[float, float], length: int) -> np.ndarray:
    """Normalized line kernel of ``length`` taps along the motion direction."""
    if length <= 1:
        return np.ones((1, 1), dtype=np.float64)
    speed = math.hypot(*motion)
    ux, uy = motion[0] / speed, motion[1] / speed
    half = (length - 1) / 2.0
    extent = int(math.ceil(half)) + 1
    size = 2 * extent + 1
    kernel = np.zeros((size, size), dtype=np.float64)
    for t in np.linspace(-half, half, length):
        x = t * ux + extent
        y = t * uy + extent
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        kernel[y0, x0] += (1 - fx) * (1 - fy)
        kernel[y0, x0 + 1] += fx * (1 - fy)
        kernel[y0 + 1, x0] += (1 - fx) * fy
        kernel[y0 + 1, x0 + 1] += fx * fy
    return kernel / kernel.sum()


def _gaussian_kernel(sigma: float, radius: int = 2) -> np.ndarray:
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _convolve_frame(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if kernel.size == 1:
        return image
    out = np.empty_like(image)
    for c in range(image.shape[0]):
        out[c] = ndimage.convolve(image[c], kernel, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def blur_kernel_length(spec: SceneSpec, motion: tuple[float, float]) -> int:
    speed_px = math.hypot(*motion) * spec.frame_size
    return max(1, int(round(spec.blur_per_speed * speed_px)))


def degrade_frame(frame: Frame, motion: tuple[float, float], spec: SceneSpec,
                  defocus: bool = False) -> Frame:
    """Motion blur along ``motion`` (kernel length proportional to speed),
    plus an optional fixed Gaussian defocus."""
    image = frame.pixels.numpy().astype(np.float64)
    image = _convolve_frame(image, _motion_kernel(motion, blur_kernel_length(spec, motion)))
    if defocus:
        image = _convolve_frame(image, _gaussian_kernel(DEFOCUS_SIGMA))
    return Frame(torch.from_numpy(image.astype(np.float32)), frame.frame_id)


def _quantize(frame: Frame) -> Frame:
    """Snap pixels to the 8-bit grid so a PNG roundtrip is lossless."""
    arr = frame.pixels.numpy()
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    return Frame(torch.from_numpy(q.astype(np.float32) / 255.0), frame.frame_id)


def generate_clip(spec: SceneSpec, video_id: int = 0, meta: dict = None) -> VideoClip:
    """Render one clip; identical specs (including seed) give identical clips.

    Object centers advance by their velocity each frame and wrap toroidally;
    bodies are clipped at the frame border, and annotations are the exact
    bounding boxes of the rendered pixels. Degradation (blur from the fastest
    object's motion, seeded random defocus) happens after annotation.
    """
    spec.validate()
    size = spec.frame_size
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(0.1, 0.9, size=(len(spec.objects), 2))
    defocus_draws = rng.random(spec.num_frames)

    dominant = max(spec.objects, key=lambda o: o.speed).velocity

    frames = []
    annotations = []
    for t in range(spec.num_frames):
        canvas = np.full((3, size, size), BACKGROUND, dtype=np.float32)
        boxes = []
        class_ids = []
        for k, obj in enumerate(spec.objects):
            ox = (centers[k, 0] + t * obj.velocity[0]) % 1.0
            oy = (centers[k, 1] + t * obj.velocity[1]) % 1.0
            mask = _shape_mask(obj.shape, ox * size, oy * size, obj.size * size / 2.0, size)
            for c in range(3):
                canvas[c][mask] = obj.color[c]
            boxes.append(_mask_bbox(mask, size))
            class_ids.append(obj.class_id)
        frame = Frame(torch.from_numpy(canvas), t)
        frame = degrade_frame(frame, dominant, spec, defocus=bool(defocus_draws[t] < spec.defocus_prob))
        frames.append(_quantize(frame))
        annotations.append(
            GroundTruth(torch.tensor(class_ids, dtype=torch.long), torch.tensor(boxes))
        )
    return VideoClip(video_id, frames, annotations, meta or {})


# --- benchmark -----------------------------------------------------------

SLOW_SPEED = (0.0, 0.01)
FAST_SPEED = (0.04, 0.08)


@dataclass
class BenchmarkSpec:
    """The desk-scale stand-in dataset: small clips, half slow, half fast."""

    num_train_clips: int = 60
    num_val_clips: int = 20
    num_frames: int = 16
    frame_size: int = 64
    num_classes: int = 4
    max_objects: int = 3
    blur_per_speed: float = 2.0
    defocus_prob_slow: float = 0.1
    defocus_prob_fast: float = 0.3
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkSpec":
        import dataclasses

        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def to_dict(self) -> dict:
        import dataclasses

        return dataclasses.asdict(self)


def _sample_scene(bench: BenchmarkSpec, rng: np.random.Generator, motion: str) -> SceneSpec:
    count = int(rng.integers(1, bench.max_objects + 1))
    lo, hi = SLOW_SPEED if motion == "slow" else FAST_SPEED
    objects = []
    for _ in range(count):
        class_id = int(rng.integers(0, bench.num_classes))
        speed = float(rng.uniform(lo, hi))
        angle = float(rng.uniform(0, 2 * math.pi))
        objects.append(
            ObjectSpec(
                shape=SHAPES[class_id % len(SHAPES)],
                class_id=class_id,
                size=float(rng.uniform(0.18, 0.34)),
                velocity=(speed * math.cos(angle), speed * math.sin(angle)),
                color=CLASS_COLORS[class_id % len(CLASS_COLORS)],
            )
        )
    return SceneSpec(
        objects=objects,
        num_frames=bench.num_frames,
        frame_size=bench.frame_size,
        blur_per_speed=bench.blur_per_speed,
        defocus_prob=bench.defocus_prob_slow if motion == "slow" else bench.defocus_prob_fast,
        seed=int(rng.integers(0, 2 ** 31)),
    )


def generate_benchmark(bench: BenchmarkSpec) -> tuple[list[VideoClip], list[VideoClip]]:
    """(train, val) clip lists; clip k is fast when k is odd."""
    rng = np.random.default_rng(bench.seed)
    splits = []
    for split, count in (("train", bench.num_train_clips), ("val", bench.num_val_clips)):
        clips = []
        for k in range(count):
            motion = "fast" if k % 2 else "slow"
            scene = _sample_scene(bench, rng, motion)
            clips.append(generate_clip(scene, video_id=k, meta={"motion": motion, "split": split}))
        splits.append(clips)
    return splits[0], splits[1]


# --- serialization -------------------------------------------------------


def write_dataset(clips: list[VideoClip], root, class_names: list[str] = None,
                  extra: dict = None) -> dict:
    """PNG frames + per-video annotations.json + dataset.json manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    videos = []
    for clip in clips:
        vdir = root / f"video_{clip.video_id}"
        vdir.mkdir(exist_ok=True)
        frames_doc = []
        for frame, gt in zip(clip.frames, clip.annotations):
            arr = np.clip(np.round(frame.pixels.numpy() * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(arr.transpose(1, 2, 0)).save(vdir / f"frame_{frame.frame_id}.png")
            frames_doc.append({
                "frameId": frame.frame_id,
                "objects": [
                    {"classId": int(gt.class_ids[j]), "bbox": [float(v) for v in gt.boxes[j]]}
                    for j in range(len(gt))
                ],
            })
        with open(vdir / "annotations.json", "w", encoding="utf-8") as fh:
            json.dump({"videoId": clip.video_id, "frames": frames_doc}, fh)
        videos.append({
            "videoId": clip.video_id,
            "dir": vdir.name,
            "numFrames": len(clip),
            **clip.meta,
        })
    manifest = {
        "classNames": class_names or [f"class_{i}" for i in range(_max_class(clips) + 1)],
        "videos": videos,
    }
    if extra:
        manifest.update(extra)
    with open(root / "dataset.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def _max_class(clips) -> int:
    top = 0
    for clip in clips:
        for gt in clip.annotations:
            if len(gt):
                top = max(top, int(gt.class_ids.max()))
    return top


def read_dataset(root) -> list[VideoClip]:
    """Load a dataset written by :func:`write_dataset`; validates annotations."""
    root = Path(root)
    manifest_path = root / "dataset.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset.json in {root}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    num_classes = len(manifest["classNames"])
    clips = []
    for video in manifest["videos"]:
        vdir = root / video["dir"]
        ann_path = vdir / "annotations.json"
        if not ann_path.exists():
            raise FileNotFoundError(f"missing annotations.json for {vdir}")
        with open(ann_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        frames = []
        annotations = []
        for entry in doc["frames"]:
            frame_id = entry["frameId"]
            image = Image.open(vdir / f"frame_{frame_id}.png")
            arr = np.asarray(image, dtype=np.uint8).transpose(2, 0, 1)
            frames.append(Frame(torch.from_numpy(arr.astype(np.float32) / 255.0), frame_id))
            boxes = []
            class_ids = []
            for j, obj in enumerate(entry["objects"]):
                bbox = obj["bbox"]
                if bbox[2] <= 0 or bbox[3] <= 0:
                    raise ValueError(
                        f"{ann_path}: frame {frame_id}, object {j}: "
                        f"non-positive box size w={bbox[2]} h={bbox[3]}"
                    )
                boxes.append(bbox)
                class_ids.append(obj["classId"])
            gt = GroundTruth(
                torch.tensor(class_ids, dtype=torch.long),
                torch.tensor(boxes, dtype=torch.float32).reshape(len(boxes), 4),
            )
            gt.validate(num_classes, where=f"{ann_path}: frame {frame_id}")
            annotations.append(gt)
        meta = {k: v for k, v in video.items() if k not in ("videoId", "dir", "numFrames")}
        clips.append(VideoClip(video["videoId"], frames, annotations, meta))
    return clips
