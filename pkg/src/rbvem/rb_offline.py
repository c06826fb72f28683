"""Offline reduced-basis pipeline: sampling, snapshots, POD, bricks.

The family of local problems over star-shaped N-gons (normalized to
centroid 0 and circumradius 1) is sampled, solved on the fixed reference
triangulation, and compressed per boundary index with a proper orthogonal
decomposition in the H^1_0 inner product.  All geometry-independent
arrays needed by the online phase (stiffness bricks for the four basis
matrices, sector mass bricks, fan-hat mass bricks) are precomputed and
stored in an :class:`OfflineDB` that round-trips losslessly to disk.
"""

from __future__ import annotations

import functools
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import reffem
from .polymesh import (
    DegenerateCellError,
    MeshError,
    Polygon,
    build_element_map,
    normalize_polygon,
    reference_ngon_vertices,
    star_shape_check,
)

FORMAT_VERSION = 1
_MAGIC = b"RBVEMODB"


@dataclass
class SampleSet:
    """Deterministic sample of normalized star-shaped N-gons."""

    n_gon: int
    polygons: list
    seed: int

    def __len__(self):
        return len(self.polygons)


def sample_parameter_space(
    n, l, seed, r_min=0.5, angle_jitter=0.4, max_tries=200
) -> SampleSet:
    """Draw L normalized star-shaped N-gons by perturbing the regular N-gon.

    Vertex radii are uniform in [r_min, 1]; vertex angles get a uniform
    jitter of up to ``angle_jitter`` times the sector half-angle, which
    keeps the polar order and the polygon simple.  Each draw is normalized
    (centroid 0, circumradius 1) and rejected unless it is star-shaped with
    acceptable edge lengths.

    Raises:
        DegenerateCellError: ``max_tries`` rejections in a row for one sample.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    rng = np.random.default_rng(seed)
    base = 2.0 * np.pi * np.arange(n) / n
    half_sector = np.pi / n
    polygons = []
    for _ in range(l):
        for attempt in range(max_tries):
            radii = rng.uniform(r_min, 1.0, n)
            ang = base + rng.uniform(-angle_jitter, angle_jitter, n) * half_sector
            verts = np.column_stack([radii * np.cos(ang), radii * np.sin(ang)])
            try:
                poly = Polygon(verts)
                poly, _ = normalize_polygon(poly)
            except MeshError:
                continue
            if star_shape_check(poly):
                polygons.append(Polygon(poly.vertices))
                break
        else:
            raise DegenerateCellError(
                f"no valid sample after {max_tries} tries (n={n})"
            )
    return SampleSet(n_gon=n, polygons=polygons, seed=seed)


_HARVEST_POOL_SEED = 991177
_harvest_pools = {}


def _harvest_voronoi_shapes(n, n_cells=256, lloyd_iters=150, n_meshes=8):
    """Normalized N-gon cells harvested from random relaxed Voronoi meshes.

    Deterministic and cached; used by the mixture sampler to align the
    snapshot distribution with the cell shapes that actually occur in
    shape-regular polygonal meshes.
    """
    key = (n_cells, lloyd_iters, n_meshes)
    if key not in _harvest_pools:
        from .polymesh import generate_voronoi_mesh

        pool = {}
        rng = np.random.default_rng(_HARVEST_POOL_SEED)
        for _ in range(n_meshes):
            try:
                mesh = generate_voronoi_mesh(
                    n_cells, seed=int(rng.integers(1_000_000)), lloyd_iters=lloyd_iters
                )
            except MeshError:
                continue
            for ci in range(mesh.n_cells):
                poly = mesh.cell_polygon(ci)
                npoly, _ = normalize_polygon(poly)
                if star_shape_check(npoly):
                    pool.setdefault(poly.n_vertices, []).append(npoly.vertices)
        _harvest_pools[key] = pool
    return _harvest_pools[key].get(n, [])


def sample_mixture(n, l, seed, max_tries=200) -> SampleSet:
    """Mesh-matched sample: harvested Voronoi cells, midpoint cells, generic.

    The mixture concentrates the snapshot energy on the shapes produced by
    the supported mesh families -- relaxed Voronoi cells for every N, the
    quadrilateral-with-edge-midpoints family for N = 8 (cells of the dyadic
    meshes normalize into it) -- topped up with generic star polygons for
    coverage.  Harvested shapes get a small radial jitter so that large
    sample sets keep full Gram rank.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    rng = np.random.default_rng(seed)
    base = 2.0 * np.pi * np.arange(n) / n
    half = np.pi / n
    harvested = _harvest_voronoi_shapes(n)
    mid_frac = 0.60 if n == 8 else 0.0
    harv_frac = 0.25 if mid_frac else 0.85

    def normalized_star(verts):
        try:
            poly = Polygon(verts)
            poly, _ = normalize_polygon(poly)
        except MeshError:
            return None
        if star_shape_check(poly):
            return Polygon(poly.vertices)
        return None

    polygons = []
    while len(polygons) < l:
        for _ in range(max_tries):
            u = rng.uniform()
            cand = None
            if u < mid_frac:
                k = n // 2
                bk = 2.0 * np.pi * np.arange(k) / k
                rc = rng.uniform(0.9, 1.0, k)
                ak = bk + rng.uniform(-0.08, 0.08, k) * np.pi / k
                corners = np.column_stack([rc * np.cos(ak), rc * np.sin(ak)])
                mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
                verts = np.empty((n, 2))
                verts[0::2] = corners
                verts[1::2] = mids
                cand = normalized_star(verts)
            elif u < mid_frac + harv_frac and harvested:
                verts = harvested[int(rng.integers(len(harvested)))]
                verts = verts * (1.0 + rng.uniform(-0.015, 0.015, (n, 1)))
                cand = normalized_star(verts)
            elif u < mid_frac + harv_frac + 0.05:
                r = rng.uniform(0.85, 1.0, n)
                a = base + rng.uniform(-0.1, 0.1, n) * half
                cand = normalized_star(np.column_stack([r * np.cos(a), r * np.sin(a)]))
            else:
                r = rng.uniform(0.5, 1.0, n)
                a = base + rng.uniform(-0.4, 0.4, n) * half
                cand = normalized_star(np.column_stack([r * np.cos(a), r * np.sin(a)]))
            if cand is not None:
                polygons.append(cand)
                break
        else:
            raise DegenerateCellError(f"no valid sample after {max_tries} tries (n={n})")
    return SampleSet(n_gon=n, polygons=polygons, seed=seed)


def compute_snapshots(tri, forms, samples: SampleSet, kappa=None):
    """Truth corrections for every sample and boundary index, (L, N, n_nodes).

    Each snapshot vanishes on the boundary; the lifting plus its snapshot
    solves the pulled-back local problem of the corresponding sample.
    """
    liftings = reffem.harmonic_liftings(tri, forms)
    out = np.empty((len(samples), tri.n_gon, tri.n_nodes))
    for ell, poly in enumerate(samples.polygons):
        emap = build_element_map(poly, kappa)
        out[ell] = reffem.SnapshotSolver(tri, forms, emap.theta).solve_all(liftings).T
    return out


@dataclass
class RBSpace:
    """Per-boundary-index POD modes, orthonormal in H^1_0 of the N-gon.

    ``modes[j, ell]`` is the ell-th mode for boundary index j as a nodal
    vector; singular values are nonincreasing in ell.  ``degenerate`` marks
    the all-zero snapshot case (M forced to 0).
    """

    n_gon: int
    m: int
    modes: np.ndarray  # (N, M, n_nodes)
    singular_values: np.ndarray  # (N, M)
    inner_product: str = "H1_0"
    degenerate: bool = False


def pod_compress(tri, forms, snapshots, m_target=None, energy_tol=None) -> RBSpace:
    """Compress snapshots per boundary index via the H^1_0 Gram spectrum.

    Args:
        snapshots: (L, N, n_nodes) array from :func:`compute_snapshots`.
        m_target: requested common mode count (capped by the smallest rank).
        energy_tol: when given instead of ``m_target``, the smallest M with
            retained Gram energy >= 1 - energy_tol for every index.
    """
    l, n, _ = snapshots.shape
    if m_target is not None and m_target > l:
        raise ValueError(f"m_target={m_target} exceeds sample count {l}")
    k0 = forms.k0

    eigvals = np.empty((n, l))
    eigvecs = np.empty((n, l, l))
    ranks = np.empty(n, dtype=int)
    for j in range(n):
        x = snapshots[:, j, :].T  # (n_nodes, L)
        gram = x.T @ (k0 @ x)
        gram = 0.5 * (gram + gram.T)
        w, v = np.linalg.eigh(gram)
        w = w[::-1]
        v = v[:, ::-1]
        tol = max(l, 10) * np.finfo(float).eps * max(w[0], 0.0)
        ranks[j] = int((w > tol).sum())
        eigvals[j] = np.clip(w, 0.0, None)
        eigvecs[j] = v

    max_rank = int(ranks.min())
    if max_rank == 0:
        return RBSpace(
            n_gon=n,
            m=0,
            modes=np.zeros((n, 0, tri.n_nodes)),
            singular_values=np.zeros((n, 0)),
            degenerate=True,
        )

    if m_target is not None:
        m = min(m_target, max_rank)
    elif energy_tol is not None:
        m = 1
        for j in range(n):
            total = eigvals[j].sum()
            cum = np.cumsum(eigvals[j]) / total
            needed = int(np.searchsorted(cum, 1.0 - energy_tol) + 1)
            m = max(m, needed)
        m = min(m, max_rank)
    else:
        raise ValueError("either m_target or energy_tol is required")

    modes = np.empty((n, m, tri.n_nodes))
    sigma = np.empty((n, m))
    for j in range(n):
        w = eigvals[j, :m]
        v = eigvecs[j][:, :m]
        x = snapshots[:, j, :].T
        modes[j] = (x @ (v / np.sqrt(w))).T
        sigma[j] = np.sqrt(w)
    return RBSpace(n_gon=n, m=m, modes=modes, singular_values=sigma)


@dataclass
class BrickDB:
    """Geometry-independent arrays combined online with theta and gamma.

    Entry conventions (xi = modes, Theta = liftings, eta = fan hats):
        axx[s, nu, j, l, j2, l2] = int_{sector s} grad(xi_j^l)^T S^nu grad(xi_j2^l2)
        axt[s, nu, j, l, j2]     = same with second factor Theta_j2
        att[s, nu, i, j]         = both factors liftings
        mxx / mxt / mtt          = sector mass analogues
        fanx[s, k, j, l] = int_{sector s} eta_k xi_j^l ; fant likewise with Theta
    """

    axx: np.ndarray
    axt: np.ndarray
    att: np.ndarray
    mxx: np.ndarray
    mxt: np.ndarray
    mtt: np.ndarray
    fanx: np.ndarray
    fant: np.ndarray


def precompute_bricks(tri, forms, rbspace: RBSpace, liftings) -> BrickDB:
    """Assemble every brick array by exact sector-wise P1 integration."""
    n = tri.n_gon
    m = rbspace.m
    nm = n * m
    x = rbspace.modes.reshape(nm, tri.n_nodes).T  # (n_nodes, N*M)
    t = liftings  # (n_nodes, N)
    h = tri.fan_hat_matrix()  # (n_nodes, N+1)

    axx = np.empty((n, 4, n, m, n, m))
    axt = np.empty((n, 4, n, m, n))
    att = np.empty((n, 4, n, n))
    mxx = np.empty((n, n, m, n, m))
    mxt = np.empty((n, n, m, n))
    mtt = np.empty((n, n, n))
    fanx = np.empty((n, n + 1, n, m))
    fant = np.empty((n, n + 1, n))

    for s in range(n):
        for nu in range(4):
            a = forms.stiff[s][nu]
            at = a @ t
            axx[s, nu] = (x.T @ (a @ x)).reshape(n, m, n, m)
            axt[s, nu] = (x.T @ at).reshape(n, m, n)
            att[s, nu] = t.T @ at
        ms = forms.mass[s]
        mx = ms @ x
        mt = ms @ t
        mxx[s] = (x.T @ mx).reshape(n, m, n, m)
        mxt[s] = (mx.T @ t).reshape(n, m, n)
        mtt[s] = t.T @ mt
        fanx[s] = (h.T @ mx).reshape(n + 1, n, m)
        fant[s] = h.T @ mt

    return BrickDB(
        axx=axx, axt=axt, att=att, mxx=mxx, mxt=mxt, mtt=mtt, fanx=fanx, fant=fant
    )


@functools.lru_cache(maxsize=32)
def ref_kernel(n, level):
    """Cached (triangulation, sector forms) pair for one (N, level)."""
    tri = reffem.triangulate_reference(n, level)
    forms = reffem.assemble_sector_forms(tri)
    return tri, forms


@dataclass
class OfflineDB:
    """Everything the online phase needs for one vertex count N."""

    n_gon: int
    m: int
    l: int
    level: int
    seed: int
    rbspace: RBSpace
    liftings: np.ndarray  # (n_nodes, N)
    bricks: BrickDB
    format_version: int = FORMAT_VERSION
    _kernel: tuple | None = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.liftings.shape[0]

    def kernel(self):
        """Reference triangulation and sector forms (rebuilt, then cached)."""
        if self._kernel is None:
            self._kernel = ref_kernel(self.n_gon, self.level)
        return self._kernel

    def modes_matrix(self):
        """(n_nodes, N*M) mode matrix with column order (j, ell)."""
        return self.rbspace.modes.reshape(self.n_gon * self.m, -1).T

    def truncated(self, m_new) -> "OfflineDB":
        """Database restricted to the first ``m_new`` modes per index."""
        if m_new > self.m:
            raise ValueError(f"cannot truncate to m={m_new} > stored m={self.m}")
        if m_new == self.m:
            return self
        b = self.bricks
        rb = RBSpace(
            n_gon=self.n_gon,
            m=m_new,
            modes=self.rbspace.modes[:, :m_new].copy(),
            singular_values=self.rbspace.singular_values[:, :m_new].copy(),
            degenerate=self.rbspace.degenerate,
        )
        bricks = BrickDB(
            axx=b.axx[:, :, :, :m_new, :, :m_new].copy(),
            axt=b.axt[:, :, :, :m_new, :].copy(),
            att=b.att,
            mxx=b.mxx[:, :, :m_new, :, :m_new].copy(),
            mxt=b.mxt[:, :, :m_new, :].copy(),
            mtt=b.mtt,
            fanx=b.fanx[:, :, :, :m_new].copy(),
            fant=b.fant,
        )
        return OfflineDB(
            n_gon=self.n_gon,
            m=m_new,
            l=self.l,
            level=self.level,
            seed=self.seed,
            rbspace=rb,
            liftings=self.liftings,
            bricks=bricks,
            _kernel=self._kernel,
        )

    def check_n(self, n):
        if n != self.n_gon:
            raise ValueError(
                f"offline database built for N={self.n_gon}, element has N={n}"
            )


def build_offline_db(n, m, l, seed, level, sampler="mixture") -> OfflineDB:
    """Full offline pipeline for one vertex count.

    ``sampler`` picks the snapshot distribution: 'mixture' (mesh-matched,
    the production default) or 'generic' (uniform radial/angular
    perturbations of the regular N-gon).
    """
    tri, forms = ref_kernel(n, level)
    if sampler == "mixture":
        samples = sample_mixture(n, l, seed)
    elif sampler == "generic":
        samples = sample_parameter_space(n, l, seed)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    snaps = compute_snapshots(tri, forms, samples)
    rbspace = pod_compress(tri, forms, snaps, m_target=m)
    liftings = reffem.harmonic_liftings(tri, forms)
    bricks = precompute_bricks(tri, forms, rbspace, liftings)
    return OfflineDB(
        n_gon=n,
        m=rbspace.m,
        l=l,
        level=level,
        seed=seed,
        rbspace=rbspace,
        liftings=liftings,
        bricks=bricks,
        _kernel=(tri, forms),
    )


# ---------------------------------------------------------------------------
# binary persistence: little-endian header, arrays in declared order,
# trailing SHA-256 checksum; round trips are bit exact.
# ---------------------------------------------------------------------------

def _array_order(n, m, n_nodes):
    return [
        ("singular_values", (n, m)),
        ("modes", (n, m, n_nodes)),
        ("liftings", (n_nodes, n)),
        ("axx", (n, 4, n, m, n, m)),
        ("axt", (n, 4, n, m, n)),
        ("att", (n, 4, n, n)),
        ("mxx", (n, n, m, n, m)),
        ("mxt", (n, n, m, n)),
        ("mtt", (n, n, n)),
        ("fanx", (n, n + 1, n, m)),
        ("fant", (n, n + 1, n)),
    ]


def save_offline_db(db: OfflineDB, path):
    header = _MAGIC + struct.pack(
        "<7q", db.format_version, db.n_gon, db.m, db.l, db.level, db.seed, db.n_nodes
    )
    arrays = {
        "singular_values": db.rbspace.singular_values,
        "modes": db.rbspace.modes,
        "liftings": db.liftings,
        "axx": db.bricks.axx,
        "axt": db.bricks.axt,
        "att": db.bricks.att,
        "mxx": db.bricks.mxx,
        "mxt": db.bricks.mxt,
        "mtt": db.bricks.mtt,
        "fanx": db.bricks.fanx,
        "fant": db.bricks.fant,
    }
    payload = bytearray(header)
    for name, shape in _array_order(db.n_gon, db.m, db.n_nodes):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        if arr.shape != shape:
            raise ValueError(f"array {name} has shape {arr.shape}, expected {shape}")
        payload += arr.tobytes()
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(digest)


def load_offline_db(path) -> OfflineDB:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 56 + 32:
        raise ValueError("offline database file truncated")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise ValueError("offline database checksum mismatch")
    if payload[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not an offline database file")
    version, n, m, l, level, seed, n_nodes = struct.unpack_from(
        "<7q", payload, len(_MAGIC)
    )
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")

    offset = len(_MAGIC) + 56
    arrays = {}
    for name, shape in _array_order(n, m, n_nodes):
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape(shape).copy()
        offset += count * 8
    if offset != len(payload):
        raise ValueError("offline database payload size mismatch")

    rbspace = RBSpace(
        n_gon=n,
        m=m,
        modes=arrays["modes"],
        singular_values=arrays["singular_values"],
        degenerate=(m == 0),
    )
    bricks = BrickDB(
        axx=arrays["axx"],
        axt=arrays["axt"],
        att=arrays["att"],
        mxx=arrays["mxx"],
        mxt=arrays["mxt"],
        mtt=arrays["mtt"],
        fanx=arrays["fanx"],
        fant=arrays["fant"],
    )
    return OfflineDB(
        n_gon=n,
        m=m,
        l=l,
        level=level,
        seed=seed,
        rbspace=rbspace,
        liftings=arrays["liftings"],
        bricks=bricks,
    )
