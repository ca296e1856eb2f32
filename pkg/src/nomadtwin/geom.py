"""Planar geometry kernel used by the city model and the placement heuristic.

Polygons are plain :mod:`shapely` polygons in a local metric frame. Points are
:class:`Point2D` tuples so they can be hashed, sorted and unpacked.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import shapely
from scipy.spatial import Delaunay, QhullError
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import polylabel

log = logging.getLogger(__name__)

EPS = 1e-9
DEFAULT_GAP = 0.25


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


class Point2D(NamedTuple):
    x: float
    y: float


class Triangle(NamedTuple):
    a: Point2D
    b: Point2D
    c: Point2D

    def area(self) -> float:
        return 0.5 * abs(_cross(self.a, self.b, self.c))


class Segment(NamedTuple):
    p: Point2D
    q: Point2D


def _cross(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _as_polygons(geom) -> list[Polygon]:
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    # GeometryCollection from degenerate overlaps: keep the areal parts only
    return [g for part in getattr(geom, "geoms", []) for g in _as_polygons(part)]


def validate_polygon(poly: Polygon, index: int | None = None) -> None:
    where = "polygon" if index is None else f"polygon {index}"
    if not isinstance(poly, Polygon) or poly.is_empty:
        raise GeometryError(f"{where}: not a polygon")
    if len(poly.exterior.coords) < 4:
        raise GeometryError(f"{where}: ring has fewer than 3 vertices")
    if poly.area <= EPS:
        raise GeometryError(f"{where}: zero-area ring")
    if not poly.is_valid:
        raise GeometryError(f"{where}: self-intersecting ring ({shapely.is_valid_reason(poly)})")


def polygon_union(polygons: Sequence[Polygon], gap: float = DEFAULT_GAP) -> list[Polygon]:
    """Merge touching or nearly touching polygons into solid blocks.

    Inputs are dilated by ``gap`` before the union and eroded by the same
    amount afterwards, so parts closer than ``2 * gap`` fuse. Interior holes
    of the result are dropped. Output polygons are counter-clockwise and
    sorted by their lower-left bound.
    """
    for i, poly in enumerate(polygons):
        validate_polygon(poly, i)
    if not polygons:
        return []
    if gap > 0:
        grown = [p.buffer(gap, join_style="mitre", mitre_limit=10.0) for p in polygons]
        merged = shapely.unary_union(grown).buffer(-gap, join_style="mitre", mitre_limit=10.0)
    else:
        merged = shapely.unary_union(list(polygons))
    out = [orient(Polygon(p.exterior), 1.0) for p in _as_polygons(merged) if p.area > EPS]
    out.sort(key=lambda p: (p.bounds[0], p.bounds[1], p.bounds[2], p.bounds[3]))
    return out


def point_in_polygon(pt: Sequence[float], poly: Polygon) -> bool:
    """Strict containment: points on the boundary are outside."""
    return bool(shapely.contains_xy(poly, pt[0], pt[1]))


def representative_point(poly: Polygon) -> Point2D:
    """Area centroid when it falls strictly inside, else the pole of inaccessibility."""
    if poly.is_empty or poly.area <= EPS:
        raise GeometryError("zero-area polygon has no representative point")
    c = poly.centroid
    if point_in_polygon((c.x, c.y), poly):
        return Point2D(c.x, c.y)
    p = polylabel(poly, tolerance=0.1)
    return Point2D(p.x, p.y)


def triangle_incentre(t: Triangle) -> Point2D:
    a, b, c = t
    if t.area() <= EPS:
        raise GeometryError(f"degenerate triangle {tuple(t)}")
    la = math.dist(b, c)
    lb = math.dist(a, c)
    lc = math.dist(a, b)
    s = la + lb + lc
    return Point2D((la * a[0] + lb * b[0] + lc * c[0]) / s, (la * a[1] + lb * b[1] + lc * c[1]) / s)


def circumcircle(t: Triangle) -> tuple[Point2D, float]:
    (ax, ay), (bx, by), (cx, cy) = t
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) <= EPS:
        raise GeometryError(f"degenerate triangle {tuple(t)}")
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    return Point2D(ux, uy), math.hypot(ax - ux, ay - uy)


def delaunay_indices(points: Sequence[Sequence[float]]) -> np.ndarray:
    """Delaunay triangles as an ``(m, 3)`` array of indices into ``points``.

    Points are fed to Qhull in lexicographic order so co-circular ties resolve
    the same way regardless of input order. Vertices within a row, and the rows
    themselves, are ordered by the points' lexicographic rank. Returns an empty array when fewer than
    three points are given or all are collinear.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        log.warning("no triangulation: fewer than 3 points")
        return np.empty((0, 3), dtype=int)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    try:
        tri = Delaunay(pts[order], qhull_options="Qbb Qc Qz Q12 Qt")
    except QhullError:
        log.warning("no triangulation: points are collinear or coincident")
        return np.empty((0, 3), dtype=int)
    ranked = [
        row for row in np.sort(tri.simplices, axis=1)
        if abs(_cross(*pts[order[row]])) > 2 * EPS
    ]
    if not ranked:
        return np.empty((0, 3), dtype=int)
    ranked = np.asarray(ranked, dtype=int)
    return order[ranked[np.lexsort(ranked.T[::-1])]]


def delaunay(points: Sequence[Sequence[float]]) -> list[Triangle]:
    pts = [Point2D(float(p[0]), float(p[1])) for p in points]
    return [Triangle(pts[i], pts[j], pts[k]) for i, j, k in delaunay_indices(pts)]


def segment_intersects_polygon(s: Segment, poly: Polygon) -> bool:
    """True when the segment touches the polygon boundary or enters its interior.

    Grazing a single vertex counts as an intersection.
    """
    return bool(LineString([s.p, s.q]).intersects(poly))


def distance3d(p1: Sequence[float], h1: float, p2: Sequence[float], h2: float) -> float:
    return math.sqrt((p1[0] - p2[0]) ** 2 + (p1[1] - p2[1]) ** 2 + (h1 - h2) ** 2)


def polygon_area(polys: Iterable[Polygon]) -> float:
    return float(sum(p.area for p in polys))
