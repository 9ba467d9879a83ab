"""Study-region geometry.

Villages are points in a rectangle.  Each village owns the cell of the
rectangle closer to it than to any other village (the planar tessellation
induced by perpendicular bisectors, clipped to the rectangle), and two
villages are neighbours when their cells share an edge of positive length.
That adjacency drives the spatial smoothing model downstream.

Adjacency is decided before the display rectangle is applied: clipping to
the rectangle can erase the shared edge of an outer pair whose bisector
segment runs outside the margin, and the neighbour relation is meant to be
intrinsic to the villages, not to the display window.  Instead the shared
edge only has to pass within a window a million times the size of the point
cloud.  On points in general position this relation coincides exactly with
Delaunay adjacency (the oracle suite checks that), while degenerate layouts
whose common boundary exists only beyond any meaningful distance, such as
exactly collinear villages, still read as non-adjacent.

Cells are built by direct half-plane clipping: start from the rectangle and
cut with the bisector of every other village.  O(I^2) per cell, which is
nothing at the region sizes used here.  To keep the construction branch-free
on degenerate inputs (four points on a common circle, say), every centroid
is nudged by a deterministic jitter of at most 1e-9 map units before any
geometry is computed; outputs report the original coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeds import stream

__all__ = [
    "DuplicateCentroidError",
    "VillageMap",
    "voronoi_cells",
    "build_neighbor_graph",
    "default_layout",
    "is_connected",
]

# Golden-ratio offsets: fixed, index-keyed, and translation-safe.
_PHI1 = 0.6180339887498949
_PHI2 = 0.3819660112501051
_JITTER = 1e-9


class DuplicateCentroidError(ValueError):
    """Two centroids coincide (or sit closer than the jitter scale)."""


@dataclass(frozen=True)
class VillageMap:
    """Region layout plus the neighbour structure derived from it.

    centroids : (I, 2) float array of village locations
    box       : (xmin, ymin, xmax, ymax) clipping rectangle
    cells     : tuple of (k_i, 2) arrays, counter-clockwise cell polygons
    neighbors : tuple of frozensets, neighbors[i] = adjacent village ids
    hdss_ids  : villages under continuous surveillance (may be empty)
    """

    centroids: np.ndarray
    box: tuple[float, float, float, float]
    cells: tuple
    neighbors: tuple
    hdss_ids: frozenset = field(default_factory=frozenset)

    @property
    def village_count(self) -> int:
        return len(self.centroids)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(s) for s in self.neighbors])

    def structure_matrix(self) -> np.ndarray:
        """Graph Laplacian: degree on the diagonal, -1 for each neighbour pair."""
        n = self.village_count
        q = np.zeros((n, n))
        for i, nbrs in enumerate(self.neighbors):
            q[i, i] = len(nbrs)
            for j in nbrs:
                q[i, j] = -1.0
        return q

    def with_hdss(self, ids) -> "VillageMap":
        ids = frozenset(int(i) for i in ids)
        if not all(0 <= i < self.village_count for i in ids):
            raise ValueError("hdss ids out of range")
        return VillageMap(self.centroids, self.box, self.cells, self.neighbors, ids)


def _jittered(centroids: np.ndarray) -> np.ndarray:
    idx = np.arange(1, len(centroids) + 1, dtype=float)
    jx = (np.mod(idx * _PHI1, 1.0) - 0.5) * 2.0 * _JITTER
    jy = (np.mod(idx * _PHI2, 1.0) - 0.5) * 2.0 * _JITTER
    return centroids + np.column_stack([jx, jy])


def _validate_centroids(centroids) -> np.ndarray:
    pts = np.asarray(centroids, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("centroids must be an (I, 2) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("centroids must be finite")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    if np.any(d2 < (10 * _JITTER) ** 2):
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        raise DuplicateCentroidError(f"centroids {i} and {j} coincide")
    return pts


def _default_box(pts: np.ndarray, margin: float = 0.15):
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-6)
    lo = lo - margin * span
    hi = hi + margin * span
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def _clip_halfplane(poly: np.ndarray, mid: np.ndarray, toward: np.ndarray) -> np.ndarray:
    """Keep the part of convex polygon `poly` with (p - mid) . toward <= 0."""
    if len(poly) == 0:
        return poly
    f = (poly - mid) @ toward
    out = []
    k = len(poly)
    for a in range(k):
        b = (a + 1) % k
        fa, fb = f[a], f[b]
        if fa <= 0.0:
            out.append(poly[a])
        if (fa < 0.0 < fb) or (fb < 0.0 < fa):
            t = fa / (fa - fb)
            out.append(poly[a] + t * (poly[b] - poly[a]))
    return np.array(out) if out else np.empty((0, 2))


def _dedupe(poly: np.ndarray, tol: float) -> np.ndarray:
    if len(poly) < 2:
        return poly
    keep = [poly[0]]
    for p in poly[1:]:
        if np.hypot(*(p - keep[-1])) > tol:
            keep.append(p)
    if len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= tol:
        keep.pop()
    return np.array(keep)


def voronoi_cells(centroids, box=None) -> list:
    """Clipped nearest-point cells, one counter-clockwise polygon per centroid."""
    pts = _validate_centroids(centroids)
    work = _jittered(pts)
    if box is None:
        box = _default_box(pts)
    xmin, ymin, xmax, ymax = map(float, box)
    if not (xmin < xmax and ymin < ymax):
        raise ValueError("box must have positive extent")
    rect = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
    diag = float(np.hypot(xmax - xmin, ymax - ymin))
    cells = []
    for i, ci in enumerate(work):
        poly = rect
        for j, cj in enumerate(work):
            if j == i:
                continue
            poly = _clip_halfplane(poly, 0.5 * (ci + cj), cj - ci)
            if len(poly) == 0:
                break
        cells.append(_dedupe(poly, 1e-12 * diag))
    return cells


def _shared_edge_length(work: np.ndarray, i: int, j: int, slack: float,
                        center: np.ndarray, radius: float) -> float:
    """Length of the facet between cells i and j of the tessellation.

    Points on the (i, j) bisector are equidistant from both, so the facet is
    the part of that line no farther from i than from any third village k.
    Each k contributes one linear constraint in the line parameter t.  The
    facet is finally restricted to the square window of half-width `radius`
    around `center` (see module docstring).
    """
    mid = 0.5 * (work[i] + work[j])
    d = work[j] - work[i]
    u = np.array([-d[1], d[0]])
    u = u / np.hypot(*u)
    lo, hi = -np.inf, np.inf
    for axis in range(2):
        # |mid[axis] + t*u[axis] - center[axis]| <= radius
        if abs(u[axis]) < 1e-300:
            continue
        b1 = (center[axis] - radius - mid[axis]) / u[axis]
        b2 = (center[axis] + radius - mid[axis]) / u[axis]
        lo = max(lo, min(b1, b2))
        hi = min(hi, max(b1, b2))
    for k in range(len(work)):
        if k == i or k == j:
            continue
        toward = work[k] - work[i]
        # (mid + t*u - midpoint(i,k)) . toward <= 0
        const = float((mid - 0.5 * (work[i] + work[k])) @ toward)
        coef = float(u @ toward)
        if abs(coef) < slack:
            if const > slack:
                return 0.0
            continue
        bound = -const / coef
        if coef > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
        if hi <= lo:
            return 0.0
    return hi - lo


def build_neighbor_graph(centroids, box=None, hdss_ids=()) -> VillageMap:
    """Tessellate and link villages whose cells share positive-length edges.

    The shared-edge test runs on the unclipped tessellation (see module
    docstring); a pair is adjacent when its bisector facet is longer than
    1e-9 of the point-cloud diagonal.  Cells in the result are still clipped
    to the box.
    """
    pts = _validate_centroids(centroids)
    if len(pts) < 2:
        raise ValueError("need at least two centroids for a neighbour graph")
    if box is None:
        box = _default_box(pts)
    cells = voronoi_cells(pts, box)
    work = _jittered(pts)
    xmin, ymin, xmax, ymax = map(float, box)
    span = pts.max(axis=0) - pts.min(axis=0)
    diag = float(np.hypot(*span)) or 1.0
    tol_len = 1e-9 * diag
    slack = 1e-13 * diag * diag
    center = 0.5 * (pts.max(axis=0) + pts.min(axis=0))
    radius = 1e6 * diag
    n = len(pts)
    nbrs = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if _shared_edge_length(work, i, j, slack, center, radius) > tol_len:
                nbrs[i].add(j)
                nbrs[j].add(i)
    vm = VillageMap(
        centroids=pts,
        box=(xmin, ymin, xmax, ymax),
        cells=tuple(cells),
        neighbors=tuple(frozenset(s) for s in nbrs),
    )
    return vm.with_hdss(hdss_ids) if hdss_ids else vm


def is_connected(neighbors) -> bool:
    n = len(neighbors)
    if n == 0:
        return True
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in neighbors[i]:
            if j not in seen:
                seen.add(j)
                frontier.append(j)
    return len(seen) == n


def default_layout(seed: int, village_count: int = 20, size: float = 100.0,
                   min_separation: float = 14.0) -> VillageMap:
    """Generate the shipped region: dart-thrown centroids with a minimum
    spacing, clipped to the bounding box padded by 15% per side."""
    rng = stream(seed, "layout")
    pts: list[np.ndarray] = []
    attempts = 0
    while len(pts) < village_count:
        cand = rng.uniform(0.0, size, size=2)
        attempts += 1
        if attempts > 200_000:
            raise RuntimeError("could not place villages at this separation")
        if all(np.hypot(*(cand - p)) >= min_separation for p in pts):
            pts.append(cand)
    return build_neighbor_graph(np.array(pts))
