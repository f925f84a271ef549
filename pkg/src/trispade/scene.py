"""Object models in nondimensional units and their spatial moments.

An object is an incoherent intensity distribution normalized to unit mass,
expressed in units of the scene extent (the side of the smallest
origin-centered square that contains every candidate object).  All objects
are centroid-registered at construction; the change-detection advantage
analyzed downstream only holds for co-located centroids, so a nonzero
centroid is a hard error, never a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CENTROID_TOL = 1e-12
WEIGHT_TOL = 1e-12
# half-side of the admissible support square, padded for rounding
_SUPPORT_BOUND = 0.5 + 1e-9


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Normalized point-mass (or rasterized) intensity distribution.

    positions: (n, 2) coordinates in units of the scene extent.
    weights:   (n,) probability masses summing to 1.
    raster_cell: side of the raster cell the masses were sampled on, or
        None for a genuine point-mass object.  Raster objects are carried
        as midpoint masses at cell centers, so every consumer sees one
        uniform representation.
    """

    positions: np.ndarray
    weights: np.ndarray
    label: str = ""
    raster_cell: float | None = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pos.shape != (len(w), 2):
            raise ValueError(f"positions shape {pos.shape} does not match {len(w)} weights")
        if len(w) == 0:
            raise ValueError("object has no masses")
        if np.any(w < 0):
            raise ValueError("negative mass weight")
        total = w.sum()
        if not np.isclose(total, 1.0, rtol=0, atol=WEIGHT_TOL):
            raise ValueError(f"weights sum to {total!r}, expected 1")
        centroid = w @ pos
        if np.any(np.abs(centroid) > CENTROID_TOL):
            raise ValueError(f"centroid {centroid} is not registered to the origin")
        if np.any(np.abs(pos) > _SUPPORT_BOUND):
            raise ValueError("support exceeds the unit-extent square [-1/2, 1/2]^2")
        pos = pos.copy()
        w = w.copy()
        pos.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def is_point_masses(self) -> bool:
        return self.raster_cell is None

    @property
    def n_masses(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class Moments:
    """Second spatial moments about the (registered) centroid."""

    mx2: float
    my2: float


def _center_and_normalize(pos: np.ndarray, w: np.ndarray, label: str,
                          raster_cell: float | None) -> ObjectModel:
    if len(w) == 0:
        raise ValueError("empty object spec")
    if np.any(w < 0):
        raise ValueError("negative weights in object spec")
    total = w.sum()
    if total <= 0:
        raise ValueError("object spec has zero total weight")
    w = w / total
    pos = pos - w @ pos
    # exact-sum registration can leave ~1e-17 residue; remove it
    pos = pos - w @ pos
    if np.any(np.abs(pos) > _SUPPORT_BOUND):
        raise ValueError("support exceeds the unit-extent square after centering")
    return ObjectModel(pos, w, label=label, raster_cell=raster_cell)


def from_points(positions, weights=None, label: str = "") -> ObjectModel:
    """Build a point-mass object; weights default to uniform."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if weights is None:
        w = np.full(len(pos), 1.0 / len(pos)) if len(pos) else np.empty(0)
    else:
        w = np.asarray(weights, dtype=float).ravel()
    if len(pos) and pos.shape != (len(w), 2):
        raise ValueError("positions and weights disagree in length")
    return _center_and_normalize(pos, w, label, raster_cell=None)


def _cell_centers(resolution: int) -> np.ndarray:
    c = (np.arange(resolution) + 0.5) / resolution - 0.5
    xx, yy = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def uniform_square(side: float = 1.0, resolution: int = 256, label: str = "") -> ObjectModel:
    """Uniformly filled square rasterized on a midpoint grid."""
    if side <= 0 or side > 1:
        raise ValueError("square side must lie in (0, 1]")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    pos = _cell_centers(resolution) * side
    w = np.full(len(pos), 1.0 / len(pos))
    return _center_and_normalize(pos, w, label or "uniform-square", side / resolution)


def polygon(vertices, resolution: int = 256, label: str = "") -> ObjectModel:
    """Uniformly filled polygon rasterized by midpoint containment."""
    from matplotlib.path import Path

    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    if len(verts) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    span = np.abs(verts).max()
    if span <= 0:
        raise ValueError("degenerate polygon")
    centers = _cell_centers(resolution) * 2 * span
    inside = Path(verts).contains_points(centers)
    if not inside.any():
        raise ValueError("polygon raster is empty; increase resolution")
    pos = centers[inside]
    w = np.full(len(pos), 1.0 / len(pos))
    return _center_and_normalize(pos, w, label or "polygon", 2 * span / resolution)


def square_fragments(centers, side: float = 0.25, resolution: int = 64,
                     label: str = "") -> ObjectModel:
    """Equal-mass uniform square fragments at the given centers.

    `resolution` counts raster cells across one fragment side.
    """
    ctrs = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(ctrs) == 0:
        raise ValueError("no fragment centers")
    cell = _cell_centers(resolution) * side
    pos = np.concatenate([cell + c for c in ctrs])
    w = np.full(len(pos), 1.0 / len(pos))
    return _center_and_normalize(pos, w, label or "square-fragments", side / resolution)


def build_object(spec: dict, label: str = "") -> ObjectModel:
    """Build an ObjectModel from a declarative spec (one key selects the form).

    Supported forms::

        {"points": [[x, y, weight], ...]}            # weight optional
        {"uniform_square": {"side": s, "resolution": r}}
        {"polygon": {"vertices": [[x, y], ...], "resolution": r}}
        {"square_fragments": {"centers": [...], "side": s, "resolution": r}}
    """
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError("object spec must be a single-key mapping")
    (kind, body), = spec.items()
    if kind == "points":
        rows = np.atleast_2d(np.asarray(body, dtype=float))
        if rows.size == 0:
            raise ValueError("empty point list")
        if rows.shape[1] == 2:
            return from_points(rows, None, label)
        if rows.shape[1] == 3:
            return from_points(rows[:, :2], rows[:, 2], label)
        raise ValueError("point rows must be [x, y] or [x, y, weight]")
    if kind == "uniform_square":
        body = dict(body or {})
        return uniform_square(body.pop("side", 1.0), body.pop("resolution", 256), label)
    if kind == "polygon":
        body = dict(body)
        return polygon(body.pop("vertices"), body.pop("resolution", 256), label)
    if kind == "square_fragments":
        body = dict(body)
        return square_fragments(body.pop("centers"), body.pop("side", 0.25),
                                body.pop("resolution", 64), label)
    raise ValueError(f"unknown object form {kind!r}")


def moments(obj: ObjectModel) -> Moments:
    """Second moments mx2 = sum(w * x^2), my2 = sum(w * y^2).

    Exact for point masses; midpoint-rule for rasters (error O(cell^2)).
    """
    mx2 = float(obj.weights @ obj.positions[:, 0] ** 2)
    my2 = float(obj.weights @ obj.positions[:, 1] ** 2)
    return Moments(mx2, my2)
