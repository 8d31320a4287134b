"""Digital-twin floor map: zones, anchor placements, and point classification.

The twin is the authority for location-dependent sharing control. Position
fixes are classified against it, and any space not covered by a Permitted
zone -- including everything outside the mapped area -- counts as Restricted
(fail-closed). A twin-global buffer band dilates restricted and unmapped
space so sharing can be suspended before a boundary is actually crossed.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import ParseError, ValidationError

#: Sentinel distance returned when no zone of the queried class exists.
INFINITE_DISTANCE = math.inf

MIN_ANCHORS = 4
DEFAULT_BUFFER_DISTANCE = 1.0

_COPLANAR_TOL = 1e-9
_BOUNDS_SLACK = 1e-9


class ShareClass(str, Enum):
    """Share-permission class a zone is mapped with."""

    PERMITTED = "Permitted"
    RESTRICTED = "Restricted"


class ZoneClass(str, Enum):
    """Point classification: zone class plus the dilated buffer band."""

    PERMITTED = "Permitted"
    BUFFER = "Buffer"
    RESTRICTED = "Restricted"


@dataclass(frozen=True)
class Point3:
    """A point in floor-local coordinates, meters. Components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(name, f"coordinate must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ValidationError(name, f"coordinate must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]

    def distance_to(self, other: "Point3") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class Zone:
    """Axis-aligned box with a share class. Corners are closed bounds."""

    zone_id: str
    lo: Point3
    hi: Point3
    share_class: ShareClass
    floor: str = "0"

    def __post_init__(self):
        if not self.zone_id:
            raise ValidationError("zone.id", "zone id must be non-empty")
        for axis in ("x", "y", "z"):
            if not getattr(self.lo, axis) < getattr(self.hi, axis):
                raise ValidationError(
                    f"zone {self.zone_id!r}",
                    f"min corner must be strictly below max corner on {axis}",
                )

    def contains(self, p: Point3) -> bool:
        return (
            self.lo.x <= p.x <= self.hi.x
            and self.lo.y <= p.y <= self.hi.y
            and self.lo.z <= p.z <= self.hi.z
        )

    def distance_to(self, p: Point3) -> float:
        """Euclidean distance from ``p`` to the closed box (0 inside)."""
        dx = max(self.lo.x - p.x, 0.0, p.x - self.hi.x)
        dy = max(self.lo.y - p.y, 0.0, p.y - self.hi.y)
        dz = max(self.lo.z - p.z, 0.0, p.z - self.hi.z)
        return math.sqrt(dx * dx + dy * dy + dz * dz)


@dataclass(frozen=True)
class ZoneVerdict:
    """Outcome of classifying one point.

    ``nearest_restricted_distance`` is the exact Euclidean distance to the
    union of restricted and unmapped space (0 when the point is in it).
    """

    zone_class: ZoneClass
    nearest_restricted_distance: float
    zone_id: str | None = None


@dataclass(frozen=True)
class DigitalTwin:
    """Immutable floor map: zones, anchor placements, and the buffer width.

    Space covered by no zone is implicitly Restricted; there is no
    configurable default class.
    """

    zones: tuple[Zone, ...]
    anchors: dict[str, Point3]
    buffer_distance: float = DEFAULT_BUFFER_DISTANCE

    def __post_init__(self):
        if isinstance(self.buffer_distance, bool) or not isinstance(
            self.buffer_distance, (int, float)
        ):
            raise ValidationError("buffer_distance", "must be a number")
        if not math.isfinite(self.buffer_distance) or self.buffer_distance < 0:
            raise ValidationError(
                "buffer_distance", f"must be finite and >= 0, got {self.buffer_distance!r}"
            )
        object.__setattr__(self, "buffer_distance", float(self.buffer_distance))
        object.__setattr__(self, "zones", tuple(self.zones))

        if not self.zones:
            raise ValidationError("zones", "twin requires at least one zone")
        seen: set[str] = set()
        for zone in self.zones:
            if zone.zone_id in seen:
                raise ValidationError("zones", f"duplicate zone id {zone.zone_id!r}")
            seen.add(zone.zone_id)

        if len(self.anchors) < MIN_ANCHORS:
            raise ValidationError(
                "anchors",
                f"insufficient anchors: need >= {MIN_ANCHORS} non-coplanar, "
                f"got {len(self.anchors)}",
            )
        positions = np.array(
            [self.anchors[aid].as_list() for aid in sorted(self.anchors)], dtype=float
        )
        spread = positions - positions[0]
        singular = np.linalg.svd(spread, compute_uv=False)
        if singular[2] <= _COPLANAR_TOL * max(1.0, singular[0]):
            raise ValidationError("anchors", "coplanar anchors: positions span < 3 dimensions")

        lo, hi = self.bounds
        for aid in sorted(self.anchors):
            pos = self.anchors[aid]
            for axis, (low, high) in zip("xyz", zip(lo, hi)):
                v = getattr(pos, axis)
                if v < low - _BOUNDS_SLACK or v > high + _BOUNDS_SLACK:
                    raise ValidationError(
                        f"anchors[{aid}]", f"anchor outside twin bounds on {axis}"
                    )

    @cached_property
    def bounds(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        """Axis-aligned bounding box over all zones."""
        lo = (
            min(z.lo.x for z in self.zones),
            min(z.lo.y for z in self.zones),
            min(z.lo.z for z in self.zones),
        )
        hi = (
            max(z.hi.x for z in self.zones),
            max(z.hi.y for z in self.zones),
            max(z.hi.z for z in self.zones),
        )
        return lo, hi

    @cached_property
    def _class_boxes(self) -> dict[ShareClass, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for cls in ShareClass:
            zones = [z for z in self.zones if z.share_class is cls]
            if zones:
                lo = np.array([z.lo.as_list() for z in zones])
                hi = np.array([z.hi.as_list() for z in zones])
                out[cls] = (lo, hi)
        return out

    @cached_property
    def _uncovered_cells(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Arrangement cells inside the twin bounds covered by no zone.

        Zone corner coordinates slice the bounding box into a grid of cells;
        each cell is either wholly covered by some zone or wholly uncovered,
        so exact distances to unmapped interior space reduce to point-to-box
        distances over the uncovered cells.
        """
        xs = sorted({z.lo.x for z in self.zones} | {z.hi.x for z in self.zones})
        ys = sorted({z.lo.y for z in self.zones} | {z.hi.y for z in self.zones})
        zs = sorted({z.lo.z for z in self.zones} | {z.hi.z for z in self.zones})
        lo_list, hi_list = [], []
        for i in range(len(xs) - 1):
            cx = 0.5 * (xs[i] + xs[i + 1])
            for j in range(len(ys) - 1):
                cy = 0.5 * (ys[j] + ys[j + 1])
                for k in range(len(zs) - 1):
                    cz = 0.5 * (zs[k] + zs[k + 1])
                    center = Point3(cx, cy, cz)
                    if not any(z.contains(center) for z in self.zones):
                        lo_list.append([xs[i], ys[j], zs[k]])
                        hi_list.append([xs[i + 1], ys[j + 1], zs[k + 1]])
        if not lo_list:
            return None
        return np.array(lo_list), np.array(hi_list)


def _min_box_distance(p: Point3, lo: np.ndarray, hi: np.ndarray) -> float:
    pv = p.as_array()
    deficit = np.maximum(lo - pv, 0.0) + np.maximum(pv - hi, 0.0)
    return float(np.sqrt((deficit * deficit).sum(axis=1)).min())


def distance_to_class(twin: DigitalTwin, p: Point3, share_class: ShareClass) -> float:
    """Exact distance from ``p`` to the nearest zone of ``share_class``.

    Returns 0 inside such a zone and ``INFINITE_DISTANCE`` when the twin has
    no zone of that class.
    """
    boxes = twin._class_boxes.get(share_class)
    if boxes is None:
        return INFINITE_DISTANCE
    return _min_box_distance(p, *boxes)


def distance_to_uncovered(twin: DigitalTwin, p: Point3) -> float:
    """Exact distance from ``p`` to space covered by no zone.

    Unmapped space is the complement of the zone union: interior arrangement
    cells with no covering zone, plus everything beyond the twin bounds.
    """
    if not any(z.contains(p) for z in twin.zones):
        return 0.0
    lo, hi = twin.bounds
    best = min(
        p.x - lo[0], hi[0] - p.x, p.y - lo[1], hi[1] - p.y, p.z - lo[2], hi[2] - p.z
    )
    best = max(best, 0.0)
    cells = twin._uncovered_cells
    if cells is not None:
        best = min(best, _min_box_distance(p, *cells))
    return best


def classify_point(twin: DigitalTwin, p: Point3) -> ZoneVerdict:
    """Classify a point as Permitted, Buffer, or Restricted.

    Restricted when the point lies in a Restricted zone or in no zone at
    all; Buffer when it is covered by Permitted space but within
    ``buffer_distance`` of restricted/unmapped space; Permitted otherwise.
    Touching restricted/unmapped space (distance exactly 0) classifies as
    Restricted so Buffer verdicts always carry a strictly positive distance.
    """
    containing = sorted((z for z in twin.zones if z.contains(p)), key=lambda z: z.zone_id)
    for zone in containing:
        if zone.share_class is ShareClass.RESTRICTED:
            return ZoneVerdict(ZoneClass.RESTRICTED, 0.0, zone.zone_id)
    if not containing:
        return ZoneVerdict(ZoneClass.RESTRICTED, 0.0, None)
    home = containing[0].zone_id
    d = min(
        distance_to_class(twin, p, ShareClass.RESTRICTED),
        distance_to_uncovered(twin, p),
    )
    if d <= 0.0:
        return ZoneVerdict(ZoneClass.RESTRICTED, 0.0, home)
    if d <= twin.buffer_distance:
        return ZoneVerdict(ZoneClass.BUFFER, d, home)
    return ZoneVerdict(ZoneClass.PERMITTED, d, home)


def _point_from_value(value, field: str) -> Point3:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ValidationError(field, f"expected [x, y, z] numbers, got {value!r}")
    try:
        return Point3(*value)
    except ValidationError as exc:
        raise ValidationError(field, str(exc)) from exc


def twin_from_dict(data: dict) -> DigitalTwin:
    """Build and validate a DigitalTwin from its document mapping."""
    if not isinstance(data, dict):
        raise ValidationError("twin", "twin section must be a mapping")

    raw_zones = data.get("zones")
    if not isinstance(raw_zones, list) or not raw_zones:
        raise ValidationError("twin.zones", "must be a non-empty list")
    zones = []
    for i, entry in enumerate(raw_zones):
        field = f"twin.zones[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError(field, "zone must be a mapping")
        for key in ("id", "min", "max", "share_class"):
            if key not in entry:
                raise ValidationError(f"{field}.{key}", "missing")
        try:
            share_class = ShareClass(entry["share_class"])
        except ValueError:
            raise ValidationError(
                f"{field}.share_class",
                f"must be one of {[c.value for c in ShareClass]}, got {entry['share_class']!r}",
            ) from None
        zones.append(
            Zone(
                zone_id=str(entry["id"]),
                lo=_point_from_value(entry["min"], f"{field}.min"),
                hi=_point_from_value(entry["max"], f"{field}.max"),
                share_class=share_class,
                floor=str(entry.get("floor", "0")),
            )
        )

    raw_anchors = data.get("anchors")
    if not isinstance(raw_anchors, list):
        raise ValidationError("twin.anchors", "must be a list")
    anchors: dict[str, Point3] = {}
    for i, entry in enumerate(raw_anchors):
        field = f"twin.anchors[{i}]"
        if not isinstance(entry, dict) or "id" not in entry or "position" not in entry:
            raise ValidationError(field, "anchor must be a mapping with id and position")
        aid = str(entry["id"])
        if aid in anchors:
            raise ValidationError(f"{field}.id", f"duplicate anchor id {aid!r}")
        anchors[aid] = _point_from_value(entry["position"], f"{field}.position")

    return DigitalTwin(
        zones=tuple(zones),
        anchors=anchors,
        buffer_distance=data.get("buffer_distance", DEFAULT_BUFFER_DISTANCE),
    )


def load_twin(document: bytes | str) -> DigitalTwin:
    """Parse a twin document (UTF-8 JSON bytes) and validate every invariant."""
    try:
        data = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"malformed twin document: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("malformed twin document: top level must be a mapping")
    return twin_from_dict(data)
