"""Polygonal cells, polygonal meshes, and the piecewise-affine reference map.

Cells are star-shaped polygons with counterclockwise vertices.  A mesh is a
vertex-indexed list of cells with shared edges, per-cell integer region tags
(used for piecewise diffusion coefficients) and boundary flags derived from
edge incidence.  Every cell carries a piecewise-affine map onto the regular
reference N-gon: one 2x2 linear block per fan sector, together with the
coefficients that make the pulled-back stiffness and mass forms affine in
the cell geometry.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Voronoi, cKDTree

logger = logging.getLogger(__name__)

# Cell validity thresholds: loose enough for relaxed Voronoi cells, strict
# enough to reject degenerate geometry.
EDGE_RATIO_MIN = 1e-3
AREA_EPS = 1e-12


class MeshError(Exception):
    """Base class for mesh and cell geometry errors."""


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshTopologyError(MeshError):
    """Inconsistent cell/edge structure; names the offending cell."""

    def __init__(self, message, cell=None):
        self.cell = cell
        if cell is not None:
            message = f"cell {cell}: {message}"
        super().__init__(message)


class DegenerateCellError(MeshError):
    """Cell violates the basic shape-regularity thresholds."""


class StarShapeError(DegenerateCellError):
    """Cell is not star-shaped with respect to its centroid."""


def _signed_area2(vertices):
    """Twice the signed (shoelace) area of a closed vertex loop."""
    x, y = vertices[:, 0], vertices[:, 1]
    return np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))


def polygon_area(vertices):
    return 0.5 * _signed_area2(np.asarray(vertices, dtype=float))


def polygon_centroid(vertices):
    """Area centroid of a simple polygon (shoelace moments)."""
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    area2 = cross.sum()
    cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (3.0 * area2)
    cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (3.0 * area2)
    return np.array([cx, cy])


def _segments_intersect(p1, p2, q1, q2):
    """Proper or touching intersection test for open, non-adjacent segments."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    return False


class Polygon:
    """Simple polygon with counterclockwise vertices and cached geometry.

    Clockwise input is reversed with a logged warning so that third-party
    meshes with mixed orientation can still be ingested.  Star-shapedness
    with respect to the centroid is enforced by default; pass
    ``require_star=False`` to build a polygon only for inspection (e.g. to
    feed :func:`star_shape_check`).
    """

    __slots__ = ("vertices", "area", "centroid", "diameter", "circumradius")

    def __init__(self, vertices, require_star=True):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DegenerateCellError("vertices must be an (N, 2) array")
        if v.shape[0] < 3:
            raise DegenerateCellError(f"polygon needs >= 3 vertices, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise DegenerateCellError("non-finite vertex coordinates")

        area2 = _signed_area2(v)
        if area2 < 0.0:
            logger.warning("clockwise vertex loop reversed to counterclockwise")
            v = v[::-1].copy()
            area2 = -area2

        self.vertices = v
        n = v.shape[0]
        diffs = v[:, None, :] - v[None, :, :]
        self.diameter = float(np.sqrt((diffs**2).sum(-1)).max())
        if area2 <= 2.0 * AREA_EPS * self.diameter**2:
            raise DegenerateCellError("zero-area polygon")
        self.area = 0.5 * area2
        self.centroid = polygon_centroid(v)
        self.circumradius = float(np.sqrt(((v - self.centroid) ** 2).sum(1)).max())

        edges = np.roll(v, -1, axis=0) - v
        lengths = np.sqrt((edges**2).sum(1))
        if lengths.min() < EDGE_RATIO_MIN * self.diameter:
            raise DegenerateCellError(
                f"edge of length {lengths.min():.3e} below "
                f"{EDGE_RATIO_MIN:g} * diameter {self.diameter:.3e}"
            )
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue  # adjacent edges share an endpoint by construction
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise DegenerateCellError("self-intersecting boundary")

        if require_star and not star_shape_check(self):
            raise StarShapeError("polygon is not star-shaped about its centroid")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def edge_lengths(self):
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        return np.sqrt((edges**2).sum(1))

    def fan_areas(self):
        """Signed areas of the fan triangles (centroid, v_i, v_{i+1})."""
        u = self.vertices - self.centroid
        w = np.roll(u, -1, axis=0)
        return 0.5 * (u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])

    def __repr__(self):
        return f"Polygon(n={self.n_vertices}, area={self.area:.6g})"


def star_shape_check(polygon) -> bool:
    """True iff every fan triangle about the centroid has area > eps * h^2."""
    if not isinstance(polygon, Polygon):
        polygon = Polygon(polygon, require_star=False)
    return bool(np.all(polygon.fan_areas() > AREA_EPS * polygon.diameter**2))


@dataclass(frozen=True)
class Similarity:
    """Translation + scaling recorded by :func:`normalize_polygon`."""

    scale: float
    shift: np.ndarray  # normalized x = (x - shift) / scale

    def forward(self, points):
        return (np.asarray(points, dtype=float) - self.shift) / self.scale

    def inverse(self, points):
        return np.asarray(points, dtype=float) * self.scale + self.shift


def normalize_polygon(polygon: Polygon):
    """Translate the centroid to the origin and scale the circumradius to 1.

    Returns the normalized polygon together with the similarity transform;
    ``transform.inverse`` applied to the normalized vertices recovers the
    input to round-off.
    """
    t = Similarity(scale=polygon.circumradius, shift=polygon.centroid.copy())
    return Polygon(t.forward(polygon.vertices), require_star=False), t


# Fixed basis of 2x2 matrices used by the affine decomposition: symmetric
# part (nu = 0, 1, 2) plus one antisymmetric element (nu = 3) so that any
# pulled-back coefficient matrix decomposes uniquely.
S_BASIS = np.array(
    [
        [[1.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, 1.0], [-1.0, 0.0]],
    ]
)


def theta_from_matrix(m):
    """Coefficients of a 2x2 matrix in the fixed S-basis (exact 4x4 solve)."""
    return np.array(
        [m[0, 0], m[1, 1], 0.5 * (m[0, 1] + m[1, 0]), 0.5 * (m[0, 1] - m[1, 0])]
    )


def reference_ngon_vertices(n):
    """Vertices of the regular N-gon with centroid 0 and circumradius 1."""
    angles = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(angles), np.sin(angles)])


@dataclass
class ElementMap:
    """Piecewise-affine map from a star-shaped cell to the reference N-gon.

    ``b[i]`` maps fan sector i (centered at the cell centroid) onto the i-th
    reference sector; ``theta`` holds the S-basis coefficients of
    ``|det(B^-1)| B K B^T`` per sector, and ``gamma`` the mass weights
    ``|det(B^-1)|``.
    """

    n: int
    center: np.ndarray  # cell centroid x_K
    scale: float  # circumradius about x_K (similarity factor into P)
    b: np.ndarray  # (N, 2, 2) sector blocks, physical -> reference
    detbinv: np.ndarray  # (N,) |det(B^-1)|
    theta: np.ndarray  # (N, 4)
    gamma: np.ndarray  # (N,) == detbinv
    kappa: np.ndarray  # (2, 2) coefficient the theta row encodes

    def to_reference(self, points, sector):
        """Map physical points lying in fan sector ``sector``."""
        return (np.asarray(points, dtype=float) - self.center) @ self.b[sector].T


def build_element_map(polygon: Polygon, kappa=None) -> ElementMap:
    """Sector maps and affine-decomposition coefficients for one cell.

    Args:
        polygon: star-shaped cell (counterclockwise vertices).
        kappa: 2x2 diffusion matrix, identity for the pure Laplacian.

    Raises:
        StarShapeError: a fan triangle is inverted (cell not star-shaped).
        DegenerateCellError: a fan triangle is numerically collinear.
    """
    n = polygon.n_vertices
    if kappa is None:
        kappa = np.eye(2)
    kappa = np.asarray(kappa, dtype=float)

    u = polygon.vertices - polygon.centroid
    uhat = reference_ngon_vertices(n)
    u_next = np.roll(u, -1, axis=0)
    uhat_next = np.roll(uhat, -1, axis=0)

    # V[i] has columns (v_i - x_K, v_{i+1} - x_K); Vhat likewise on the
    # reference.  B_i = Vhat_i V_i^{-1} sends fan triangle i to sector i.
    det_v = u[:, 0] * u_next[:, 1] - u[:, 1] * u_next[:, 0]
    det_vhat = uhat[:, 0] * uhat_next[:, 1] - uhat[:, 1] * uhat_next[:, 0]
    if np.any(det_v <= 0.0):
        raise StarShapeError("inverted fan triangle; cell not star-shaped")
    if np.any(det_v <= AREA_EPS * polygon.diameter**2):
        raise DegenerateCellError("collinear fan triangle")

    v = np.stack([u, u_next], axis=-1)  # (N, 2, 2)
    vhat = np.stack([uhat, uhat_next], axis=-1)
    b = vhat @ np.linalg.inv(v)
    detbinv = det_v / det_vhat  # |det B^-1|, positive by construction

    m = detbinv[:, None, None] * (b @ kappa @ np.transpose(b, (0, 2, 1)))
    theta = np.empty((n, 4))
    theta[:, 0] = m[:, 0, 0]
    theta[:, 1] = m[:, 1, 1]
    theta[:, 2] = 0.5 * (m[:, 0, 1] + m[:, 1, 0])
    theta[:, 3] = 0.5 * (m[:, 0, 1] - m[:, 1, 0])

    return ElementMap(
        n=n,
        center=polygon.centroid.copy(),
        scale=polygon.circumradius,
        b=b,
        detbinv=detbinv,
        theta=theta,
        gamma=detbinv.copy(),
        kappa=kappa,
    )


class PolyMesh:
    """Conforming polygonal mesh of star-shaped cells.

    Attributes:
        points: (P, 2) vertex coordinates.
        cells: list of counterclockwise vertex-index lists.
        cell_region: (C,) integer region tags (piecewise coefficients).
        boundary_vertex: (P,) flags derived from edge incidence.
        h: maximum cell diameter.
        domain_area: known area of the meshed domain, or None for imported
            meshes; when given, the cell-area sum is validated against it.
    """

    def __init__(self, points, cells, cell_region=None, domain_area=None):
        self.points = np.asarray(points, dtype=float)
        self.cells = [list(map(int, c)) for c in cells]
        if cell_region is None:
            cell_region = np.zeros(len(self.cells), dtype=int)
        self.cell_region = np.asarray(cell_region, dtype=int)
        self.domain_area = domain_area

        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise MeshTopologyError("points must be a (P, 2) array")
        if len(self.cell_region) != len(self.cells):
            raise MeshTopologyError("one region tag per cell required")

        self._polygons = []
        for ci, cell in enumerate(self.cells):
            if len(set(cell)) != len(cell):
                raise MeshTopologyError("repeated vertex index", cell=ci)
            if min(cell) < 0 or max(cell) >= len(self.points):
                raise MeshTopologyError("vertex index out of range", cell=ci)
            try:
                poly = Polygon(self.points[cell], require_star=False)
            except DegenerateCellError as exc:
                raise MeshTopologyError(str(exc), cell=ci) from exc
            if _signed_area2(self.points[cell]) < 0.0:
                # keep cell index order consistent with the stored polygon
                self.cells[ci] = cell[::-1]
            if not star_shape_check(poly):
                raise StarShapeError(f"cell {ci} is not star-shaped")
            self._polygons.append(Polygon(self.points[self.cells[ci]]))

        self.h = max(p.diameter for p in self._polygons)
        self.boundary_vertex = self._derive_boundary()
        self._check_areas()

    def _derive_boundary(self):
        edge_count = {}
        for ci, cell in enumerate(self.cells):
            n = len(cell)
            for k in range(n):
                a, b = cell[k], cell[(k + 1) % n]
                key = (min(a, b), max(a, b))
                entry = edge_count.setdefault(key, [])
                entry.append((ci, a < b))
        boundary = np.zeros(len(self.points), dtype=bool)
        for (a, b), uses in edge_count.items():
            if len(uses) == 1:
                boundary[a] = boundary[b] = True
            elif len(uses) == 2:
                if uses[0][1] == uses[1][1]:
                    raise MeshTopologyError(
                        f"edge ({a}, {b}) traversed twice in the same direction",
                        cell=uses[1][0],
                    )
            else:
                raise MeshTopologyError(
                    f"edge ({a}, {b}) shared by {len(uses)} cells", cell=uses[-1][0]
                )
        return boundary

    def _check_areas(self):
        if self.domain_area is None:
            return
        total = sum(p.area for p in self._polygons)
        if abs(total - self.domain_area) > 1e-10 * self.domain_area:
            raise MeshTopologyError(
                f"cell areas sum to {total!r}, expected {self.domain_area!r}"
            )

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_polygon(self, i) -> Polygon:
        return self._polygons[i]

    def total_area(self):
        return sum(p.area for p in self._polygons)

    def __repr__(self):
        return f"PolyMesh(points={self.n_points}, cells={self.n_cells}, h={self.h:.4g})"


# ---------------------------------------------------------------------------
# text format I/O
# ---------------------------------------------------------------------------

def load_mesh(path) -> PolyMesh:
    """Read the line-oriented mesh format.

    Line 1 holds ``NP NC``; the next NP lines hold ``x y``; the next NC
    lines hold ``k i_1 ... i_k [region]`` with 0-based counterclockwise
    vertex indices and an optional integer region tag.  ``#`` starts a
    comment.
    """
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                rows.append((lineno, text.split()))
    if not rows:
        raise MeshFormatError("empty mesh file")

    lineno, head = rows[0]
    if len(head) != 2:
        raise MeshFormatError("expected 'NP NC' header", line=lineno)
    try:
        n_points, n_cells = int(head[0]), int(head[1])
    except ValueError as exc:
        raise MeshFormatError(str(exc), line=lineno) from exc
    if len(rows) != 1 + n_points + n_cells:
        raise MeshFormatError(
            f"expected {1 + n_points + n_cells} content lines, found {len(rows)}",
            line=rows[-1][0],
        )

    points = np.empty((n_points, 2))
    for i in range(n_points):
        lineno, tok = rows[1 + i]
        if len(tok) != 2:
            raise MeshFormatError("expected 'x y'", line=lineno)
        try:
            points[i] = [float(tok[0]), float(tok[1])]
        except ValueError as exc:
            raise MeshFormatError(str(exc), line=lineno) from exc

    cells, regions = [], []
    for c in range(n_cells):
        lineno, tok = rows[1 + n_points + c]
        try:
            k = int(tok[0])
            rest = [int(t) for t in tok[1:]]
        except ValueError as exc:
            raise MeshFormatError(str(exc), line=lineno) from exc
        if len(rest) == k:
            region = 0
        elif len(rest) == k + 1:
            region = rest[-1]
            rest = rest[:k]
        else:
            raise MeshFormatError(
                f"cell with {k} vertices has {len(rest)} trailing fields", line=lineno
            )
        if k < 3:
            raise MeshFormatError("cell needs >= 3 vertices", line=lineno)
        cells.append(rest)
        regions.append(region)

    return PolyMesh(points, cells, cell_region=regions)


def save_mesh(mesh: PolyMesh, path):
    """Write the text format with 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_points} {mesh.n_cells}\n")
        for x, y in mesh.points:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for cell, region in zip(mesh.cells, mesh.cell_region):
            idx = " ".join(str(i) for i in cell)
            if region != 0:
                fh.write(f"{len(cell)} {idx} {region}\n")
            else:
                fh.write(f"{len(cell)} {idx}\n")


# ---------------------------------------------------------------------------
# structured generators
# ---------------------------------------------------------------------------

def generate_dyadic_mesh(n) -> PolyMesh:
    """n x n uniform squares on (0,1)^2 listed as octagons.

    Every cell lists its 4 corners and 4 edge midpoints so that midpoints
    are shared degrees of freedom between neighbours.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    index = {}
    points = []

    def node(x, y):
        key = (round(x, 12), round(y, 12))
        if key not in index:
            index[key] = len(points)
            points.append((x, y))
        return index[key]

    a = 1.0 / n
    cells = []
    for i in range(n):
        for j in range(n):
            x0, y0 = i * a, j * a
            x1, y1 = x0 + a, y0 + a
            xm, ym = x0 + 0.5 * a, y0 + 0.5 * a
            cells.append(
                [
                    node(x0, y0), node(xm, y0), node(x1, y0), node(x1, ym),
                    node(x1, y1), node(xm, y1), node(x0, y1), node(x0, ym),
                ]
            )
    return PolyMesh(points, cells, domain_area=1.0)


def generate_dyadic_lshape_mesh(n) -> PolyMesh:
    """Dyadic squares on (-1,1)^2 with the quadrant (0,1)x(-1,0) removed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    index = {}
    points = []

    def node(x, y):
        key = (round(x, 12), round(y, 12))
        if key not in index:
            index[key] = len(points)
            points.append((x, y))
        return index[key]

    a = 1.0 / n
    cells = []
    for i in range(2 * n):
        for j in range(2 * n):
            x0, y0 = -1.0 + i * a, -1.0 + j * a
            if x0 + 0.5 * a > 0.0 and y0 + 0.5 * a < 0.0:
                continue  # cell sits inside the removed quadrant
            x1, y1 = x0 + a, y0 + a
            xm, ym = x0 + 0.5 * a, y0 + 0.5 * a
            cells.append(
                [
                    node(x0, y0), node(xm, y0), node(x1, y0), node(x1, ym),
                    node(x1, y1), node(xm, y1), node(x0, y1), node(x0, ym),
                ]
            )
    return PolyMesh(points, cells, domain_area=3.0)


def generate_octagon_mesh(n) -> PolyMesh:
    """Truncated-square tiling of (0,1)^2: octagons plus square/triangle fill.

    The truncation parameter is chosen so that the interior filler squares
    are regular; the domain boundary is completed by corner and edge
    triangles.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a = 1.0 / n
    t = a * (2.0 - np.sqrt(2.0)) / 2.0  # cut depth making the fill squares regular

    index = {}
    points = []

    def node(x, y):
        key = (round(x, 12), round(y, 12))
        if key not in index:
            index[key] = len(points)
            points.append((x, y))
        return index[key]

    cells = []
    for i in range(n):
        for j in range(n):
            x0, y0 = i * a, j * a
            x1, y1 = x0 + a, y0 + a
            cells.append(
                [
                    node(x0 + t, y0), node(x1 - t, y0), node(x1, y0 + t),
                    node(x1, y1 - t), node(x1 - t, y1), node(x0 + t, y1),
                    node(x0, y1 - t), node(x0, y0 + t),
                ]
            )
    for i in range(1, n):
        for j in range(1, n):
            x, y = i * a, j * a
            cells.append([node(x - t, y), node(x, y - t), node(x + t, y), node(x, y + t)])
    for i in range(1, n):  # edge triangles
        x = i * a
        cells.append([node(x - t, 0.0), node(x + t, 0.0), node(x, t)])
        cells.append([node(x + t, 1.0), node(x - t, 1.0), node(x, 1.0 - t)])
        y = i * a
        cells.append([node(0.0, y + t), node(0.0, y - t), node(t, y)])
        cells.append([node(1.0, y - t), node(1.0, y + t), node(1.0 - t, y)])
    cells.append([node(0.0, 0.0), node(t, 0.0), node(0.0, t)])
    cells.append([node(1.0, 0.0), node(1.0, t), node(1.0 - t, 0.0)])
    cells.append([node(1.0, 1.0), node(1.0 - t, 1.0), node(1.0, 1.0 - t)])
    cells.append([node(0.0, 1.0), node(0.0, 1.0 - t), node(t, 1.0)])

    return PolyMesh(points, cells, domain_area=1.0)


# ---------------------------------------------------------------------------
# Voronoi generators
# ---------------------------------------------------------------------------

def _mirrored_voronoi_cells(seeds, xmin, xmax, ymin, ymax):
    """Voronoi cells of seeds in a box, clipped exactly via wall mirroring.

    Reflecting the seeds across all four walls makes every true cell
    bounded and its clipped shape exact, with Voronoi vertices shared by
    neighbouring cells through common ridge endpoints.
    """
    seeds = np.asarray(seeds, dtype=float)
    blocks = [seeds]
    for axis, wall in ((0, xmin), (0, xmax), (1, ymin), (1, ymax)):
        m = seeds.copy()
        m[:, axis] = 2.0 * wall - m[:, axis]
        blocks.append(m)
    vor = Voronoi(np.vstack(blocks))

    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise DegenerateCellError(f"unbounded or empty Voronoi cell {i}")
        verts = vor.vertices[region]
        ang = np.arctan2(verts[:, 1] - seeds[i, 1], verts[:, 0] - seeds[i, 0])
        order = np.argsort(ang)
        cells.append([region[k] for k in order])
    return vor.vertices, cells


def _cell_centroids(vertices, cells):
    return np.array([polygon_centroid(vertices[c]) for c in cells])


def _snap(coords, lines_x, lines_y, tol=1e-9):
    out = coords.copy()
    for x in lines_x:
        out[np.abs(out[:, 0] - x) < tol, 0] = x
    for y in lines_y:
        out[np.abs(out[:, 1] - y) < tol, 1] = y
    return out


def _merge_vertices(vertices, cells, tol=1e-9):
    """Union-find merge of nearly coincident vertices, then re-index cells.

    Collapses the micro-edges qhull emits for (near-)cocircular seeds; the
    merge map is shared by all cells so conformity is preserved.
    """
    tree = cKDTree(vertices)
    parent = np.arange(len(vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in tree.query_pairs(tol):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    roots = np.array([find(i) for i in range(len(vertices))])
    used = []
    new_index = {}
    new_cells = []
    for cell in cells:
        mapped = []
        for vid in cell:
            r = roots[vid]
            if r not in new_index:
                new_index[r] = len(used)
                used.append(r)
            k = new_index[r]
            if not mapped or (mapped[-1] != k and k != mapped[0]):
                mapped.append(k)
        if len(mapped) < 3:
            raise DegenerateCellError("cell collapsed during vertex merge")
        new_cells.append(mapped)
    return vertices[used], new_cells


def _build_voronoi_mesh(seeds, bounds, snap_x, snap_y, regions=None, domain_area=None):
    xmin, xmax, ymin, ymax = bounds
    verts, cells = _mirrored_voronoi_cells(seeds, xmin, xmax, ymin, ymax)
    verts = _snap(verts, snap_x, snap_y)
    verts, cells = _merge_vertices(verts, cells)
    try:
        return PolyMesh(verts, cells, cell_region=regions, domain_area=domain_area)
    except (StarShapeError, MeshTopologyError) as exc:
        raise DegenerateCellError(str(exc)) from exc


def _lloyd(seeds, bounds, iters):
    xmin, xmax, ymin, ymax = bounds
    for _ in range(iters):
        verts, cells = _mirrored_voronoi_cells(seeds, xmin, xmax, ymin, ymax)
        seeds = _cell_centroids(verts, cells)
    return seeds


def generate_voronoi_mesh(n_cells, seed=0, lloyd_iters=10, points=None) -> PolyMesh:
    """Lloyd-relaxed Voronoi mesh of (0,1)^2, deterministic given the seed.

    Args:
        n_cells: number of Voronoi cells.
        seed: RNG seed for the initial uniform seed points.
        lloyd_iters: centroid-relaxation sweeps (0 keeps the raw diagram).
        points: optional explicit (n_cells, 2) seed coordinates overriding
            the random initialization.

    Raises:
        DegenerateCellError: a relaxed cell violates the star-shape or
            edge-length thresholds; retry with another seed.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    bounds = (0.0, 1.0, 0.0, 1.0)
    if points is None:
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.05, 0.95, size=(n_cells, 2))
    else:
        pts = np.asarray(points, dtype=float).copy()
        if pts.shape != (n_cells, 2):
            raise ValueError("points must have shape (n_cells, 2)")
    pts = _lloyd(pts, bounds, lloyd_iters)
    return _build_voronoi_mesh(
        pts, bounds, snap_x=(0.0, 1.0), snap_y=(0.0, 1.0), domain_area=1.0
    )


def _symmetric_quadrant_seeds(q1_seeds):
    x, y = q1_seeds[:, 0], q1_seeds[:, 1]
    return np.vstack(
        [
            q1_seeds,
            np.column_stack([-x, y]),
            np.column_stack([x, -y]),
            np.column_stack([-x, -y]),
        ]
    )


def generate_voronoi_quadrant_mesh(
    n_per_quadrant, seed=0, lloyd_iters=10
) -> PolyMesh:
    """Axis-symmetric Voronoi mesh of (-1,1)^2 conforming to the quadrants.

    Seeds in the first quadrant are mirrored across both axes, which makes
    the coordinate axes exact Voronoi edges: no cell straddles a quadrant
    interface and interface vertices are shared.  Cells are tagged region 1
    where x*y > 0 and region 0 otherwise (checkerboard pattern).
    """
    if n_per_quadrant < 1:
        raise ValueError("n_per_quadrant must be >= 1")
    bounds = (-1.0, 1.0, -1.0, 1.0)
    rng = np.random.default_rng(seed)
    margin = min(0.25 / np.sqrt(n_per_quadrant), 0.2)
    q1 = rng.uniform(margin, 1.0 - margin, size=(n_per_quadrant, 2))
    for _ in range(lloyd_iters):
        full = _symmetric_quadrant_seeds(q1)
        verts, cells = _mirrored_voronoi_cells(full, *bounds)
        q1 = _cell_centroids(verts, cells[:n_per_quadrant])

    full = _symmetric_quadrant_seeds(q1)
    verts, cells = _mirrored_voronoi_cells(full, *bounds)
    verts = _snap(verts, (-1.0, 0.0, 1.0), (-1.0, 0.0, 1.0))
    verts, cells = _merge_vertices(verts, cells)
    centroids = _cell_centroids(verts, cells)
    regions = (centroids[:, 0] * centroids[:, 1] > 0.0).astype(int)
    try:
        return PolyMesh(verts, cells, cell_region=regions, domain_area=4.0)
    except (StarShapeError, MeshTopologyError) as exc:
        raise DegenerateCellError(str(exc)) from exc


def generate_voronoi_lshape_mesh(n_per_quadrant, seed=0, lloyd_iters=10) -> PolyMesh:
    """L-shaped Voronoi mesh: quadrant mesh minus the (0,1)x(-1,0) cells."""
    quad = generate_voronoi_quadrant_mesh(n_per_quadrant, seed, lloyd_iters)
    keep_cells = []
    for cell in quad.cells:
        c = polygon_centroid(quad.points[cell])
        if not (c[0] > 0.0 and c[1] < 0.0):
            keep_cells.append(cell)
    used = sorted({v for cell in keep_cells for v in cell})
    remap = {old: new for new, old in enumerate(used)}
    cells = [[remap[v] for v in cell] for cell in keep_cells]
    return PolyMesh(quad.points[used], cells, domain_area=3.0)
