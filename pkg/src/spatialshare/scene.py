"""Labeled scene frames: the capture stand-in and the raster every filter acts on.

Frames are label rasters, not images: each grid cell holds 0 (background),
an object id, or 255 (masked). The object map carries the per-object label,
sensitivity classification, and the rectangles that exactly tile the
object's cells, which is all the information the policy layers operate on.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .twin import Point3

MASKED = 255
BACKGROUND = 0
MAX_OBJECT_ID = 254
DEFAULT_GRID = (64, 64)  # (width, height) in cells


class Classification(str, Enum):
    """Sensitivity levels, totally ordered Public < Internal < Confidential
    < Restricted. Compare via ``rank``."""

    PUBLIC = "Public"
    INTERNAL = "Internal"
    CONFIDENTIAL = "Confidential"
    RESTRICTED = "Restricted"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {
    Classification.PUBLIC: 0,
    Classification.INTERNAL: 1,
    Classification.CONFIDENTIAL: 2,
    Classification.RESTRICTED: 3,
}


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class SceneObject:
    """A scenario-declared physical object with its raster footprint."""

    object_id: int
    label: str
    location: Point3
    classification: Classification
    rect: Rect

    def __post_init__(self):
        if not isinstance(self.object_id, int) or isinstance(self.object_id, bool):
            raise ValidationError("object_id", f"must be an integer, got {self.object_id!r}")
        if not 0 < self.object_id <= MAX_OBJECT_ID:
            raise ValidationError(
                "object_id",
                f"must be in 1..{MAX_OBJECT_ID} (0 and {MASKED} are reserved), "
                f"got {self.object_id}",
            )
        if not self.label:
            raise ValidationError("label", "must be non-empty")
        if self.rect.w <= 0 or self.rect.h <= 0:
            raise ValidationError("rect", f"width and height must be positive, got {self.rect}")
        if self.rect.x < 0 or self.rect.y < 0:
            raise ValidationError("rect", f"origin must be non-negative, got {self.rect}")


@dataclass(frozen=True)
class DevicePose:
    position: Point3
    yaw: float

    def __post_init__(self):
        if not -math.pi <= self.yaw < math.pi:
            raise ValidationError("yaw", f"must be in [-pi, pi), got {self.yaw}")


@dataclass(frozen=True)
class ObjectAnnotation:
    """Per-object entry of a frame's object map: label, classification, and
    the rectangles that exactly tile the object's visible cells."""

    object_id: int
    label: str
    classification: Classification
    rects: tuple[Rect, ...]


@dataclass(frozen=True, eq=False)
class ShareFrame:
    timestamp: int
    grid: np.ndarray  # (h, w) uint8, read-only
    object_map: tuple[ObjectAnnotation, ...]

    def __post_init__(self):
        self.grid.setflags(write=False)


def wrap_angle(angle: float) -> float:
    """Wrap to [-pi, pi]."""
    return math.remainder(angle, math.tau)


def _tile_rects(region: np.ndarray, object_id: int, x0: int, y0: int) -> tuple[Rect, ...]:
    """Decompose ``region == object_id`` into disjoint covering rectangles.

    Row runs are merged vertically while the same (x, w) span repeats, which
    keeps output deterministic and the tiling exact.
    """
    open_runs: dict[tuple[int, int], list[int]] = {}  # (x, w) -> [y_start, y_last]
    rects: list[Rect] = []
    h, w = region.shape
    for row in range(h):
        line = region[row]
        spans = []
        col = 0
        while col < w:
            if line[col] == object_id:
                start = col
                while col < w and line[col] == object_id:
                    col += 1
                spans.append((start, col - start))
            else:
                col += 1
        next_open: dict[tuple[int, int], list[int]] = {}
        for span in spans:
            run = open_runs.pop(span, None)
            if run is not None and run[1] == row - 1:
                run[1] = row
                next_open[span] = run
            else:
                if run is not None:
                    rects.append(Rect(x0 + span[0], y0 + run[0], span[1], run[1] - run[0] + 1))
                next_open[span] = [row, row]
        for span, run in open_runs.items():
            rects.append(Rect(x0 + span[0], y0 + run[0], span[1], run[1] - run[0] + 1))
        open_runs = next_open
    for span, run in open_runs.items():
        rects.append(Rect(x0 + span[0], y0 + run[0], span[1], run[1] - run[0] + 1))
    return tuple(sorted(rects, key=lambda r: (r.y, r.x)))


def capture_frame(
    objects: Iterable[SceneObject],
    pose: DevicePose,
    fov_half_angle: float,
    range_max: float,
    timestamp: int,
    grid_size: tuple[int, int] = DEFAULT_GRID,
) -> ShareFrame:
    """Stamp the raster rects of visible objects into a fresh label grid.

    Visibility is a 2D cone test: horizontal distance within ``range_max``
    and bearing within ``+/- fov_half_angle`` of the pose yaw. Overlaps are
    resolved deterministically in favor of the higher object id. Masked
    cells never appear in capture output.
    """
    if not 0 < fov_half_angle <= math.pi:
        raise ValidationError("fov_half_angle", f"must be in (0, pi], got {fov_half_angle}")
    if range_max <= 0:
        raise ValidationError("range_max", f"must be > 0, got {range_max}")
    width, height = grid_size
    grid = np.zeros((height, width), dtype=np.uint8)

    visible = []
    for obj in sorted(objects, key=lambda o: o.object_id):
        dx = obj.location.x - pose.position.x
        dy = obj.location.y - pose.position.y
        if math.hypot(dx, dy) > range_max:
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - pose.yaw)
        if abs(bearing) > fov_half_angle:
            continue
        r = obj.rect
        if r.x + r.w > width or r.y + r.h > height:
            raise ValidationError(
                "rect", f"object {obj.object_id} rect {r} exceeds grid {grid_size}"
            )
        grid[r.y : r.y + r.h, r.x : r.x + r.w] = obj.object_id
        visible.append(obj)

    annotations = []
    for obj in visible:  # ascending id: stamping order
        r = obj.rect
        region = grid[r.y : r.y + r.h, r.x : r.x + r.w]
        annotations.append(
            ObjectAnnotation(
                object_id=obj.object_id,
                label=obj.label,
                classification=obj.classification,
                rects=_tile_rects(region, obj.object_id, r.x, r.y),
            )
        )
    return ShareFrame(timestamp=timestamp, grid=grid, object_map=tuple(annotations))


def frame_delta(prev: ShareFrame, new: ShareFrame) -> bool:
    """True iff the two frames are content-identical, ignoring timestamps."""
    if prev.grid.shape != new.grid.shape:
        raise DimensionMismatchError(
            f"grid shapes differ: {prev.grid.shape} vs {new.grid.shape}"
        )
    return bool(np.array_equal(prev.grid, new.grid)) and prev.object_map == new.object_map


def frame_ids(frame: ShareFrame) -> set[int]:
    """Object ids present in the grid (background and masked excluded)."""
    values = np.unique(frame.grid)
    return {int(v) for v in values if v not in (BACKGROUND, MASKED)}


def validate_frame(frame: ShareFrame) -> None:
    """Check raster/map coherence: every grid id is mapped and every map
    entry's rects exactly tile that object's cells."""
    height, width = frame.grid.shape
    seen_ids = set()
    claimed = np.zeros_like(frame.grid, dtype=bool)
    for ann in frame.object_map:
        if ann.object_id in seen_ids:
            raise ValidationError("object_map", f"duplicate entry for id {ann.object_id}")
        seen_ids.add(ann.object_id)
        mask = np.zeros_like(frame.grid, dtype=bool)
        for r in ann.rects:
            if r.x < 0 or r.y < 0 or r.x + r.w > width or r.y + r.h > height:
                raise ValidationError(
                    "object_map", f"rect {r} of id {ann.object_id} exceeds grid bounds"
                )
            if mask[r.y : r.y + r.h, r.x : r.x + r.w].any():
                raise ValidationError(
                    "object_map", f"overlapping rects for id {ann.object_id}"
                )
            mask[r.y : r.y + r.h, r.x : r.x + r.w] = True
        if not np.array_equal(mask, frame.grid == ann.object_id):
            raise ValidationError(
                "object_map", f"rects of id {ann.object_id} do not tile its cells"
            )
        claimed |= mask
    unmapped = frame_ids(frame) - seen_ids
    if unmapped:
        raise ValidationError(
            "grid", f"grid ids missing from object_map: {sorted(unmapped)}"
        )


def frame_to_payload(frame: ShareFrame) -> dict:
    """Wire/trace representation: plain lists, deterministic ordering."""
    return {
        "timestamp": frame.timestamp,
        "grid": frame.grid.tolist(),
        "objects": [
            {
                "id": ann.object_id,
                "label": ann.label,
                "classification": ann.classification.value,
                "rects": [list(r) for r in ann.rects],
            }
            for ann in frame.object_map
        ],
    }


def frame_from_payload(payload: dict) -> ShareFrame:
    try:
        grid = np.array(payload["grid"], dtype=np.uint8)
        annotations = tuple(
            ObjectAnnotation(
                object_id=int(entry["id"]),
                label=entry["label"],
                classification=Classification(entry["classification"]),
                rects=tuple(Rect(*r) for r in entry["rects"]),
            )
            for entry in payload["objects"]
        )
        timestamp = payload["timestamp"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("frame", f"malformed frame payload: {exc}") from exc
    if grid.ndim != 2:
        raise ValidationError("frame.grid", "grid must be two-dimensional")
    frame = ShareFrame(timestamp=timestamp, grid=grid, object_map=annotations)
    validate_frame(frame)
    return frame
