"""The spatial world: map objects and geometric reference resolution.

Resolution follows a containment -> proximity -> area cascade for points,
a buffered-corridor sweep for paths, and centroid containment for
enclosures. Geometry is delegated to shapely; the tests check it against
independent ray-casting and sampling oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from shapely.geometry import LineString, MultiPoint, Point, Polygon
from shapely.geometry.polygon import orient

POINT_RADIUS = 0.04
PATH_BUFFER = 0.03


class ObjectKind(str, Enum):
    BUILDING = "building"
    ROAD = "road"
    LOT = "lot"
    AREA = "area"


class RefKind(str, Enum):
    OBJECT = "object"
    AREA = "area"
    PATH = "path"
    NONE = "none"


@dataclass(frozen=True)
class MapObject:
    id: str
    name: str
    kind: ObjectKind
    points: tuple
    closed: bool = True

    def __post_init__(self):
        if self.closed and len(self.points) < 3:
            raise ValueError(f"object {self.id}: polygon needs >= 3 vertices")
        if not self.closed and len(self.points) < 2:
            raise ValueError(f"object {self.id}: polyline needs >= 2 vertices")
        geom = self._build_geometry()
        if self.closed and not geom.is_valid:
            raise ValueError(f"object {self.id}: polygon is not simple")
        object.__setattr__(self, "_geom", geom)

    def _build_geometry(self):
        if self.closed:
            return orient(Polygon(self.points), sign=1.0)  # normalize CCW
        return LineString(self.points)

    @property
    def geometry(self):
        return self._geom

    @property
    def boundary_line(self):
        return self._geom.exterior if self.closed else self._geom


@dataclass(frozen=True)
class MapContext:
    objects: tuple

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        object.__setattr__(self, "_by_id", {o.id: o for o in self.objects})
        words = set()
        for o in self.objects:
            words.update(w for w in o.name.lower().split() if w)
        object.__setattr__(self, "_name_words", frozenset(words))

    def __getitem__(self, oid: str) -> MapObject:
        return self._by_id[oid]

    def __contains__(self, oid: str) -> bool:
        return oid in self._by_id

    @property
    def name_words(self) -> frozenset:
        return self._name_words

    def find_by_name(self, text: str) -> list[MapObject]:
        t = text.lower()
        return [o for o in self.objects if t in o.name.lower().split() or t == o.name.lower()]

    def to_dict(self) -> dict:
        return {
            "objects": [
                {
                    "id": o.id,
                    "name": o.name,
                    "kind": o.kind.value,
                    "points": [list(p) for p in o.points],
                    "closed": o.closed,
                }
                for o in self.objects
            ]
        }


def load_map(path) -> MapContext:
    doc = json.loads(Path(path).read_text())
    return map_from_dict(doc)


def map_from_dict(doc: dict) -> MapContext:
    objects = tuple(
        MapObject(
            id=str(rec["id"]),
            name=rec["name"],
            kind=ObjectKind(rec["kind"]),
            points=tuple((float(x), float(y)) for x, y in rec["points"]),
            closed=bool(rec.get("closed", True)),
        )
        for rec in doc["objects"]
    )
    return MapContext(objects=objects)


def save_map(ctx: MapContext, path) -> None:
    Path(path).write_text(json.dumps(ctx.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class ReferenceResolution:
    kind: RefKind
    object_ids: tuple = ()
    point: Optional[tuple] = None
    path: Optional[tuple] = None
    radius: Optional[float] = None
    score: float = 0.0

    def __post_init__(self):
        if self.kind == RefKind.OBJECT and not self.object_ids:
            raise ValueError("object resolution needs at least one id")
        if self.kind == RefKind.NONE and (
            self.object_ids or self.point or self.path or self.score != 0.0
        ):
            raise ValueError("none resolution carries nothing")

    def as_area(self, radius: float = POINT_RADIUS) -> "ReferenceResolution":
        """Widen an object reference into an area (used when a label demands
        a spatial rather than purely nominal reference)."""
        if self.kind != RefKind.OBJECT:
            return self
        return replace(self, kind=RefKind.AREA, radius=self.radius or radius)


def resolve_point(ctx: MapContext, p: tuple, r: float = POINT_RADIUS) -> ReferenceResolution:
    """Containment, then proximity within ``r``, then a disc-shaped area.

    Nearest ties within 1e-12 break toward the lower object id; the same
    rule applies if the point sits inside several overlapping polygons.
    """
    pt = Point(p)
    inside = sorted(
        o.id for o in ctx.objects if o.closed and o.geometry.covers(pt)
    )
    if inside:
        return ReferenceResolution(RefKind.OBJECT, (inside[0],), point=tuple(p), score=1.0)
    best = None
    for o in ctx.objects:
        d = o.geometry.distance(pt)
        if d <= r and (best is None or d < best[0] - 1e-12 or (abs(d - best[0]) <= 1e-12 and o.id < best[1])):
            best = (d, o.id)
    if best is not None:
        return ReferenceResolution(
            RefKind.OBJECT, (best[1],), point=tuple(p), score=1.0 - best[0] / r
        )
    return ReferenceResolution(RefKind.AREA, (), point=tuple(p), radius=r, score=0.5)


def resolve_path(ctx: MapContext, path: Sequence, buffer: float = PATH_BUFFER) -> ReferenceResolution:
    """Objects swept by the buffered path corridor, ordered by first contact.

    The entry position of each object is the smallest arc-length at which
    the path comes within ``buffer`` of the object's geometry.
    """
    pts = [tuple(p) for p in path]
    if len(pts) < 2:
        raise ValueError("path needs at least 2 points")
    line = LineString(pts)
    if line.length < 1e-9:
        return resolve_point(ctx, pts[0])
    hits = []
    for o in ctx.objects:
        region = o.geometry.buffer(buffer)
        inter = line.intersection(region)
        if inter.is_empty:
            continue
        parts = getattr(inter, "geoms", [inter])
        first_s = min(
            line.project(Point(c)) for part in parts for c in part.coords
        )
        hits.append((first_s, o.id))
    hits.sort()
    return ReferenceResolution(
        RefKind.PATH, tuple(oid for _, oid in hits), path=tuple(pts), score=1.0
    )


def resolve_enclosure(ctx: MapContext, loop: Sequence) -> ReferenceResolution:
    """Objects whose centroid lies inside the closed loop.

    A self-intersecting loop falls back to its convex hull.
    """
    pts = [tuple(p) for p in loop]
    poly = Polygon(pts) if len(pts) >= 3 else None
    if poly is None or not poly.is_valid or poly.area <= 0:
        poly = MultiPoint(pts).convex_hull
        if poly.geom_type != "Polygon":
            c = MultiPoint(pts).centroid
            return ReferenceResolution(RefKind.AREA, (), point=(c.x, c.y), score=1.0)
    ids = sorted(o.id for o in ctx.objects if poly.covers(o.geometry.centroid))
    c = poly.centroid
    return ReferenceResolution(
        RefKind.AREA, tuple(ids), point=(float(c.x), float(c.y)), path=tuple(pts), score=1.0
    )


def demo_map() -> MapContext:
    """A small campus-style map used by the CLI, tests, and the web client."""

    def rect(x0, y0, x1, y1):
        return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))

    return MapContext(
        objects=(
            MapObject("b1", "library", ObjectKind.BUILDING, rect(0.30, 0.15, 0.42, 0.30)),
            MapObject("b2", "gym", ObjectKind.BUILDING, rect(0.62, 0.18, 0.74, 0.33)),
            MapObject("b3", "hall", ObjectKind.BUILDING, rect(0.47, 0.55, 0.60, 0.68)),
            MapObject("l1", "north lot", ObjectKind.LOT, rect(0.18, 0.45, 0.30, 0.58)),
            MapObject("l2", "south lot", ObjectKind.LOT, rect(0.72, 0.55, 0.86, 0.70)),
            MapObject(
                "r1",
                "college avenue",
                ObjectKind.ROAD,
                ((0.12, 0.40), (0.35, 0.38), (0.55, 0.42), (0.80, 0.40)),
                closed=False,
            ),
        )
    )


def iconic_match_score(stroke_path: Sequence, obj: MapObject, buffer: float = PATH_BUFFER) -> float:
    """Fraction of stroke arc-length within ``buffer`` of the object's
    boundary (polygons) or centerline (polylines)."""
    pts = [tuple(p) for p in stroke_path]
    if len(pts) < 2:
        raise ValueError("stroke path needs at least 2 points")
    line = LineString(pts)
    if line.length < 1e-12:
        return 0.0
    region = obj.boundary_line.buffer(buffer)
    return float(line.intersection(region).length / line.length)
