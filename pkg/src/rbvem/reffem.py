"""P1 finite elements on a fixed fine triangulation of the reference N-gon.

The regular N-gon is fanned into N sectors from the origin and each sector
is red-refined a fixed number of times, so every fine triangle belongs to
exactly one sector and the sector edges are mesh-conforming.  On this mesh
we assemble the per-sector stiffness blocks for the fixed matrix basis and
the per-sector mass blocks, compute the discrete harmonic liftings of the
boundary vertex hats, and solve the pulled-back local problems whose
solutions are the truth snapshots of the reduced-basis pipeline.

Finite element functions are plain nodal coefficient vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .polymesh import Polygon, S_BASIS, reference_ngon_vertices

#: nodal coefficient vector over the triangulation nodes
FEFunction = np.ndarray


def build_reference_ngon(n) -> Polygon:
    """Regular N-gon with centroid at the origin and circumradius one."""
    if n < 3:
        raise ValueError("n must be >= 3")
    return Polygon(reference_ngon_vertices(n))


@dataclass
class RefTriangulation:
    """Sector-conforming red-refined fan triangulation of the reference N-gon.

    Nodes are identified by exact lattice coordinates (sector s, integers
    p, q with p + q <= denom), never by floating-point matching: node
    (s, p, q) sits at (p * vhat_s + q * vhat_{s+1}) / denom.  Nodes on the
    fan rays are canonically owned by the sector they start (q = 0), the
    center by sector 0.
    """

    n_gon: int
    level: int
    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3) int
    sector_of_triangle: np.ndarray  # (n_tri,) int
    boundary_nodes: np.ndarray  # (n_nodes,) bool
    node_sector: np.ndarray  # (n_nodes,) int
    node_p: np.ndarray  # (n_nodes,) int
    node_q: np.ndarray  # (n_nodes,) int
    denom: int
    vertex_nodes: np.ndarray  # (N,) node index of each reference vertex
    center_node: int
    _fan_hats: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_dof0(self):
        return int((~self.boundary_nodes).sum())

    @property
    def interior(self):
        return ~self.boundary_nodes

    def fan_hat_matrix(self):
        """Nodal values of the N+1 fan hat functions (center, vertices).

        Column 0 is the hat at the origin, column 1+k the hat at vertex k;
        any sector-wise linear function with values (q_0, q_1, ..., q_N) at
        (center, v_1, ..., v_N) equals ``H @ q`` exactly on the fine mesh.
        """
        if self._fan_hats is None:
            n = self.n_gon
            h = np.zeros((self.n_nodes, n + 1))
            lam1 = self.node_p / self.denom
            lam2 = self.node_q / self.denom
            h[:, 0] = 1.0 - lam1 - lam2
            rows = np.arange(self.n_nodes)
            h[rows, 1 + self.node_sector] += lam1
            h[rows, 1 + (self.node_sector + 1) % n] += lam2
            self._fan_hats = h
        return self._fan_hats

    def boundary_hat_values(self):
        """Boundary trace of the vertex hats: (n_boundary, N) data for g_i."""
        return self.fan_hat_matrix()[self.boundary_nodes, 1:]

    def physical_nodes(self, polygon: Polygon):
        """Pull mesh nodes back onto a physical cell through its fan map.

        Node (s, p, q) maps to x_K + (p (v_s - x_K) + q (v_{s+1} - x_K)) / denom,
        which inverts the sector-affine reference map exactly.
        """
        u = polygon.vertices - polygon.centroid
        u_next = np.roll(u, -1, axis=0)
        lam1 = (self.node_p / self.denom)[:, None]
        lam2 = (self.node_q / self.denom)[:, None]
        return polygon.centroid + lam1 * u[self.node_sector] + lam2 * u_next[self.node_sector]


def triangulate_reference(n, level) -> RefTriangulation:
    """Red-refine every fan sector of the reference N-gon ``level`` times."""
    if n < 3:
        raise ValueError("n must be >= 3")
    if level < 0:
        raise ValueError("level must be >= 0")
    m = 2**level  # lattice subdivisions per sector edge
    vhat = reference_ngon_vertices(n)

    index = {}
    coords = []
    sector_of = []
    p_of = []
    q_of = []

    def node(s, p, q):
        # canonical key: rays belong to the sector they open, center to 0
        if p == 0 and q == 0:
            key = (-1, 0, 0)
            cs, cp, cq = 0, 0, 0
        elif q == 0:
            key = (s, p, 0)
            cs, cp, cq = s, p, 0
        elif p == 0:
            s2 = (s + 1) % n
            key = (s2, q, 0)
            cs, cp, cq = s2, q, 0
        else:
            key = (s, p, q)
            cs, cp, cq = s, p, q
        if key not in index:
            index[key] = len(coords)
            s_next = (cs + 1) % n
            coords.append((cp * vhat[cs] + cq * vhat[s_next]) / m)
            sector_of.append(cs)
            p_of.append(cp)
            q_of.append(cq)
        return index[key]

    triangles = []
    tri_sector = []
    for s in range(n):
        for p in range(m):
            for q in range(m - p):
                triangles.append((node(s, p, q), node(s, p + 1, q), node(s, p, q + 1)))
                tri_sector.append(s)
                if p + q <= m - 2:
                    triangles.append(
                        (node(s, p + 1, q), node(s, p + 1, q + 1), node(s, p, q + 1))
                    )
                    tri_sector.append(s)

    nodes = np.asarray(coords)
    node_p = np.asarray(p_of)
    node_q = np.asarray(q_of)
    boundary = node_p + node_q == m
    vertex_nodes = np.array([index[(k, m, 0)] for k in range(n)])

    return RefTriangulation(
        n_gon=n,
        level=level,
        nodes=nodes,
        triangles=np.asarray(triangles, dtype=np.int64),
        sector_of_triangle=np.asarray(tri_sector, dtype=np.int64),
        boundary_nodes=boundary,
        node_sector=np.asarray(sector_of),
        node_p=node_p,
        node_q=node_q,
        denom=m,
        vertex_nodes=vertex_nodes,
        center_node=index[(-1, 0, 0)],
    )


def _p1_geometry(nodes, tris):
    """Per-triangle areas and constant P1 shape gradients (t, 3, 2)."""
    a = nodes[tris[:, 0]]
    b = nodes[tris[:, 1]]
    c = nodes[tris[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
        c[:, 0] - a[:, 0]
    )
    if np.any(det <= 0.0):
        raise ValueError("degenerate or inverted fine triangle")
    area = 0.5 * det
    grads = np.empty((tris.shape[0], 3, 2))
    grads[:, 0, 0] = b[:, 1] - c[:, 1]
    grads[:, 0, 1] = c[:, 0] - b[:, 0]
    grads[:, 1, 0] = c[:, 1] - a[:, 1]
    grads[:, 1, 1] = a[:, 0] - c[:, 0]
    grads[:, 2, 0] = a[:, 1] - b[:, 1]
    grads[:, 2, 1] = b[:, 0] - a[:, 0]
    grads /= det[:, None, None]
    return area, grads


@dataclass
class SectorForms:
    """Per-sector P1 matrices on the reference mesh (exact integration).

    ``stiff[s][nu]`` assembles (S^nu grad u, grad v) over sector s with the
    convention ``x^T A y = integral grad(x)^T S^nu grad(y)``; ``mass[s]``
    is the sector mass matrix.  ``k0``/``m0`` are the plain global
    stiffness/mass sums.
    """

    tri: RefTriangulation
    stiff: list  # [sector][nu] csr
    mass: list  # [sector] csr
    k0: sp.csr_matrix
    m0: sp.csr_matrix

    def combine_stiffness(self, theta):
        """Sparse sum of theta[s, nu] * stiff[s][nu]."""
        out = None
        for s in range(self.tri.n_gon):
            for nu in range(4):
                w = theta[s, nu]
                if w == 0.0:
                    continue
                term = self.stiff[s][nu] * w
                out = term if out is None else out + term
        if out is None:
            out = sp.csr_matrix((self.tri.n_nodes, self.tri.n_nodes))
        return out

    def combine_mass(self, gamma):
        out = None
        for s in range(self.tri.n_gon):
            term = self.mass[s] * gamma[s]
            out = term if out is None else out + term
        return out

    def quadratic_stiffness(self, theta, w):
        """w^T (sum theta[s,nu] stiff[s][nu]) w without forming the sum."""
        return sum(
            theta[s, nu] * float(w @ (self.stiff[s][nu] @ w))
            for s in range(self.tri.n_gon)
            for nu in range(4)
            if theta[s, nu] != 0.0
        )

    def quadratic_mass(self, gamma, w):
        return sum(
            gamma[s] * float(w @ (self.mass[s] @ w)) for s in range(self.tri.n_gon)
        )


def assemble_sector_forms(tri: RefTriangulation) -> SectorForms:
    """Exact P1 sector stiffness (all four basis matrices) and mass blocks."""
    n_nodes = tri.n_nodes
    stiff = []
    mass = []
    mass_local_pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for s in range(tri.n_gon):
        tris = tri.triangles[tri.sector_of_triangle == s]
        area, grads = _p1_geometry(tri.nodes, tris)
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()

        per_nu = []
        for nu in range(4):
            local = np.einsum("tap,pq,tbq->tab", grads, S_BASIS[nu], grads)
            local *= area[:, None, None]
            per_nu.append(
                sp.coo_matrix(
                    (local.ravel(), (rows, cols)), shape=(n_nodes, n_nodes)
                ).tocsr()
            )
        stiff.append(per_nu)

        local_m = mass_local_pattern[None, :, :] * area[:, None, None]
        mass.append(
            sp.coo_matrix(
                (local_m.ravel(), (rows, cols)), shape=(n_nodes, n_nodes)
            ).tocsr()
        )

    k0 = sum(stiff[s][0] + stiff[s][1] for s in range(tri.n_gon))
    m0 = sum(mass)
    return SectorForms(tri=tri, stiff=stiff, mass=mass, k0=k0.tocsr(), m0=m0.tocsr())


def harmonic_liftings(tri: RefTriangulation, forms: SectorForms) -> np.ndarray:
    """All N discrete harmonic liftings of the boundary vertex hats, (n, N).

    Column i equals the boundary hat g_i on the boundary nodes and is
    discretely harmonic at the interior nodes.
    """
    inner = tri.interior
    boundary = tri.boundary_nodes
    g = tri.boundary_hat_values()  # (n_boundary, N)
    k_ii = forms.k0[inner][:, inner].tocsc()
    k_ib = forms.k0[inner][:, boundary]
    lift = np.zeros((tri.n_nodes, tri.n_gon))
    lift[boundary] = g
    lift[inner] = spla.spsolve(k_ii, -(k_ib @ g))
    return lift


def harmonic_lifting(tri: RefTriangulation, i, forms: SectorForms | None = None):
    """Single lifting; assembles the forms on the fly when not supplied."""
    if forms is None:
        forms = assemble_sector_forms(tri)
    return harmonic_liftings(tri, forms)[:, i]


class SnapshotSolver:
    """Factorized interior operator for one parameter value.

    The pulled-back operator sum(theta[s, nu] * stiff[s][nu]) is shared by
    all N right-hand sides of the local problems, so it is factorized once.
    """

    def __init__(self, tri: RefTriangulation, forms: SectorForms, theta):
        self.tri = tri
        self.forms = forms
        self.theta = np.asarray(theta, dtype=float)
        a_full = forms.combine_stiffness(self.theta)
        inner = tri.interior
        self._a_full = a_full.tocsr()
        self._inner = inner
        try:
            self._solve = spla.factorized(a_full[inner][:, inner].tocsc())
        except RuntimeError as exc:
            raise ValueError(f"singular pulled-back operator: {exc}") from exc

    def solve(self, lifting):
        """Homogeneous-boundary correction for one lifting column."""
        rhs = -(self._a_full @ lifting)
        out = np.zeros(self.tri.n_nodes)
        out[self._inner] = self._solve(rhs[self._inner])
        return out

    def solve_all(self, liftings):
        rhs = -(self._a_full @ liftings)
        out = np.zeros_like(liftings)
        sol = self._solve(rhs[self._inner])
        out[self._inner] = sol
        return out

    def residual(self, lifting, correction):
        """Relative Galerkin residual of one solved correction."""
        r = self._a_full @ (lifting + correction)
        r = r[self._inner]
        scale = np.linalg.norm(self._a_full @ lifting) + 1e-300
        return float(np.linalg.norm(r) / scale)


def solve_snapshot(tri, forms, theta, i, liftings=None):
    """Truth solution of the pulled-back local problem for boundary index i."""
    if liftings is None:
        liftings = harmonic_liftings(tri, forms)
    return SnapshotSolver(tri, forms, theta).solve(liftings[:, i])
