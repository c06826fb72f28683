"""Global assembly, boundary conditions, and symmetric pencil solvers.

The stiffness/mass pencils assembled here are symmetric; the mass side may
be singular (consistency-only mass), in which case the kernel directions
correspond to infinite eigenvalues and are excluded from the spectrum.
Solvers: a dense path based on a Cholesky factorization of the shifted
stiffness (robust to singular mass) for moderate sizes, and sparse
shift-invert Lanczos above the dense threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import rb_online, vem_core
from .polymesh import PolyMesh, build_element_map

DENSE_FALLBACK = 600


@dataclass
class CellContext:
    """Per-cell records kept for error evaluation after a solve."""

    polygon: object
    kappa: np.ndarray
    proj: vem_core.ProjectorMatrices
    element_map: object = None
    online: rb_online.OnlineElementCtx | None = None
    matrices: vem_core.ElementMatrices | None = None
    db: object = None


@dataclass
class GlobalSystem:
    """Assembled pencil with one degree of freedom per mesh vertex."""

    k: sp.csr_matrix
    m: sp.csr_matrix
    mesh: PolyMesh
    bc: str
    method: str
    cells: list = field(default_factory=list)

    @property
    def n_dof(self):
        return self.k.shape[0]

    @property
    def boundary(self):
        return self.mesh.boundary_vertex


@dataclass
class ReducedSystem:
    """Pencil after Dirichlet elimination (or unchanged for Neumann)."""

    k: sp.csr_matrix
    m: sp.csr_matrix
    free: np.ndarray  # original dof index per reduced dof
    bc: str

    @property
    def n_dof(self):
        return self.k.shape[0]


@dataclass
class Spectrum:
    """Ascending finite eigenvalues with M-orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, x^T M x = 1
    residuals: np.ndarray  # ||K x - lambda M x|| / (||K|| + |lambda| ||M||)
    n_excluded_infinite: int = 0
    zero_floor: float = 0.0  # magnitude below which an eigenvalue is numerically zero


class MissingOfflineDBError(KeyError):
    """No offline database available for a vertex count occurring in the mesh."""


def _cell_kappa(kappa_by_region, region):
    if kappa_by_region is None:
        return np.eye(2)
    try:
        kappa = kappa_by_region[region]
    except KeyError as exc:
        raise KeyError(f"no diffusion coefficient for region {region}") from exc
    kappa = np.asarray(kappa, dtype=float)
    if kappa.ndim == 0:
        kappa = float(kappa) * np.eye(2)
    return kappa


def assemble_global(
    mesh: PolyMesh,
    method: str,
    *,
    alpha=1.0,
    beta=1.0,
    chi=1,
    db_map=None,
    kappa_by_region=None,
    bc="dirichlet",
    keep_cells=True,
) -> GlobalSystem:
    """Scatter-add local pairs of the chosen variant into sparse arrays.

    Args:
        method: 'vem', 'rbvem' or 'rbstab'.
        db_map: dict vertex-count -> OfflineDB; required for the rb methods
            and consulted per cell (mixed meshes use several databases).
        kappa_by_region: dict region tag -> scalar or 2x2 coefficient; the
            identity when omitted.
        bc: 'dirichlet' or 'neumann' (stored, applied later).

    Raises:
        MissingOfflineDBError: an rb method meets a vertex count with no
            database.
    """
    if method not in ("vem", "rbvem", "rbstab"):
        raise ValueError(f"unknown method {method!r}")
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")

    rows, cols, k_vals, m_vals = [], [], [], []
    cells = []
    for ci, cell in enumerate(mesh.cells):
        poly = mesh.cell_polygon(ci)
        kappa = _cell_kappa(kappa_by_region, mesh.cell_region[ci])
        proj = vem_core.pi_nabla_matrices(poly)
        record = CellContext(polygon=poly, kappa=kappa, proj=proj)
        try:
            if method == "vem":
                mats = vem_core.element_vem(poly, kappa, alpha, beta, proj=proj)
            else:
                n = poly.n_vertices
                if db_map is None or n not in db_map:
                    raise MissingOfflineDBError(
                        f"no offline database for N={n} (cell {ci})"
                    )
                db = db_map[n]
                emap = build_element_map(poly, kappa)
                ctx = rb_online.online_element_ctx(
                    db, emap, vem_core.pinabla_fan_values(proj)
                )
                record.element_map = emap
                record.online = ctx
                record.db = db
                if method == "rbvem":
                    mats = vem_core.element_rbvem(poly, kappa, ctx, proj)
                else:
                    mats = vem_core.element_rbstab(poly, kappa, ctx, proj, chi)
        except MissingOfflineDBError:
            raise
        except Exception as exc:
            raise RuntimeError(f"element assembly failed on cell {ci}: {exc}") from exc

        record.matrices = mats
        if keep_cells:
            cells.append(record)
        idx = np.asarray(cell)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        k_vals.append(mats.k.ravel())
        m_vals.append(mats.m.ravel())

    n = mesh.n_points
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    k = sp.coo_matrix((np.concatenate(k_vals), (rows, cols)), shape=(n, n)).tocsr()
    m = sp.coo_matrix((np.concatenate(m_vals), (rows, cols)), shape=(n, n)).tocsr()
    return GlobalSystem(k=k, m=m, mesh=mesh, bc=bc, method=method, cells=cells)


def apply_boundary_conditions(system: GlobalSystem) -> ReducedSystem:
    """Dirichlet: drop boundary rows/columns; Neumann: natural, unchanged."""
    if system.bc == "neumann":
        free = np.arange(system.n_dof)
        return ReducedSystem(k=system.k, m=system.m, free=free, bc="neumann")
    free = np.flatnonzero(~system.boundary)
    k = system.k[free][:, free].tocsr()
    m = system.m[free][:, free].tocsr()
    return ReducedSystem(k=k, m=m, free=free, bc="dirichlet")


def _matrix_norm(a):
    if sp.issparse(a):
        return spla.norm(a, 1)
    return np.linalg.norm(a, 1)


def _residuals(k, m, eigenvalues, eigenvectors):
    nk, nm = _matrix_norm(k), _matrix_norm(m)
    out = np.empty(len(eigenvalues))
    for i, lam in enumerate(eigenvalues):
        x = eigenvectors[:, i]
        out[i] = np.linalg.norm(k @ x - lam * (m @ x)) / (nk + abs(lam) * nm)
    return out


def _zero_floor(k, m):
    # roundoff magnitude of a numerically-zero eigenvalue of the pencil
    return np.finfo(float).eps * _matrix_norm(k) / _matrix_norm(m)


def _default_shift(k, bc):
    if bc == "neumann":
        n = k.shape[0]
        trace = k.diagonal().sum() if sp.issparse(k) else np.trace(k)
        return -1e-6 * trace / n
    return 0.0


def solve_gevp(
    k, m, num_eigs, shift=None, bc="dirichlet", dense_threshold=DENSE_FALLBACK
) -> Spectrum:
    """Smallest finite eigenvalues of the symmetric pencil K x = lambda M x.

    The shifted stiffness K - shift*M must be positive definite (shift = 0
    works for Dirichlet pencils, a small negative shift for Neumann).  Mass
    kernel directions (infinite eigenvalues) never enter: the dense path
    works with the spectrum of C^-1 M C^-T where K - shift*M = C C^T, the
    sparse path uses shift-invert Lanczos.
    """
    n = k.shape[0]
    if n == 0:
        return Spectrum(np.empty(0), np.empty((0, 0)), np.empty(0))
    if shift is None:
        shift = _default_shift(k, bc)

    if n <= dense_threshold:
        kd = k.toarray() if sp.issparse(k) else np.asarray(k, dtype=float)
        md = m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)
        s = kd - shift * md
        try:
            c = sla.cholesky(s, lower=True)
        except sla.LinAlgError as exc:
            raise ValueError(f"shifted stiffness not positive definite: {exc}") from exc
        w = sla.solve_triangular(c, md, lower=True)
        w = sla.solve_triangular(c, w.T, lower=True)  # C^-1 M C^-T, symmetric
        w = 0.5 * (w + w.T)
        mu, y = sla.eigh(w)
        mu = mu[::-1]
        y = y[:, ::-1]
        mu_tol = max(n, 10) * np.finfo(float).eps * max(mu[0], 0.0)
        finite = mu > mu_tol
        n_inf = int((~finite).sum())
        mu = mu[finite]
        y = y[:, finite]
        take = min(num_eigs, len(mu))
        mu = mu[:take]
        y = y[:, :take]
        lam = shift + 1.0 / mu
        x = sla.solve_triangular(c, y, lower=True, trans="T")
        x /= np.sqrt(mu)[None, :]  # x^T M x = mu before rescaling
        order = np.argsort(lam)
        lam, x = lam[order], x[:, order]
        return Spectrum(
            eigenvalues=lam,
            eigenvectors=x,
            residuals=_residuals(kd, md, lam, x),
            n_excluded_infinite=n_inf,
            zero_floor=_zero_floor(kd, md),
        )

    k = sp.csr_matrix(k)
    m = sp.csr_matrix(m)
    num_eigs = min(num_eigs, n - 1)
    v0 = np.full(n, 1.0 / np.sqrt(n))  # fixed start vector for determinism
    try:
        lam, x = spla.eigsh(k, k=num_eigs, M=m, sigma=shift, which="LM", v0=v0)
    except spla.ArpackNoConvergence as exc:
        lam, x = exc.eigenvalues, exc.eigenvectors
        if len(lam) == 0:
            raise RuntimeError("eigensolver failed to converge") from exc
    order = np.argsort(lam)
    lam, x = lam[order], x[:, order]
    norms = np.sqrt(np.abs(np.einsum("ij,ij->j", x, m @ x)))
    x = x / norms[None, :]
    return Spectrum(
        eigenvalues=lam,
        eigenvectors=x,
        residuals=_residuals(k, m, lam, x),
        zero_floor=_zero_floor(k, m),
    )


def drop_zero_modes(spectrum: Spectrum, rel_tol=1e-6) -> Spectrum:
    """Remove the Neumann kernel mode: eigenvalues below rel_tol * lambda_2.

    The numerical zero eigenvalue scales with roundoff times the stiffness
    magnitude, which at extreme coefficient contrast (1e8) reaches ~1e-7;
    physical modes of the target problems sit at least six orders higher,
    so the default keeps a wide safety band on both sides.
    """
    lam = spectrum.eigenvalues
    if len(lam) < 2:
        return spectrum
    cut = max(rel_tol * abs(lam[1]), spectrum.zero_floor)
    keep = lam >= cut
    return Spectrum(
        eigenvalues=lam[keep],
        eigenvectors=spectrum.eigenvectors[:, keep],
        residuals=spectrum.residuals[keep],
        n_excluded_infinite=spectrum.n_excluded_infinite,
        zero_floor=spectrum.zero_floor,
    )


def solve_source(k, f):
    """Direct sparse solve of the (eliminated) SPD source system."""
    k = sp.csc_matrix(k)
    u = spla.spsolve(k, f)
    norm_f = np.linalg.norm(f)
    if norm_f > 0:
        rel = np.linalg.norm(k @ u - f) / norm_f
        if rel > 1e-10:
            raise RuntimeError(f"source solve residual {rel:.3e} above 1e-10")
    return u


def solve_dirichlet(system: GlobalSystem, boundary_values, load=None):
    """Solve the source problem with prescribed boundary vertex values.

    Returns the full dof vector; interior values solve the eliminated
    system with the boundary data lifted to the right-hand side.
    """
    boundary = system.boundary
    free = np.flatnonzero(~boundary)
    fixed = np.flatnonzero(boundary)
    u = np.zeros(system.n_dof)
    u[fixed] = boundary_values
    rhs = np.zeros(len(free)) if load is None else np.asarray(load)[free]
    rhs = rhs - system.k[free][:, fixed] @ u[fixed]
    if len(free) > 0:
        u[free] = solve_source(system.k[free][:, free], rhs)
    return u


def toy_parametric_sweep(c1, c2, mode, values):
    """Spectra of the diagonal toy pencils along a parameter sweep.

    For 'alpha_stiff' the pencil is (C1 + p*C2, I); for 'beta_mass' it is
    (I, C1 + p*C2).  Returns a list of (parameter, finite eigenvalues,
    number of infinite modes), eigenvalues sorted ascending.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if c1.shape != c2.shape or c1.shape[0] != c1.shape[1]:
        raise ValueError("c1 and c2 must be square matrices of equal size")
    if not (np.allclose(c1, c1.T) and np.allclose(c2, c2.T)):
        raise ValueError("c1 and c2 must be symmetric")
    if mode not in ("alpha_stiff", "beta_mass"):
        raise ValueError(f"unknown sweep mode {mode!r}")

    n = c1.shape[0]
    eye = np.eye(n)
    out = []
    for p in values:
        if mode == "alpha_stiff":
            lam = np.sort(sla.eigh(c1 + p * c2, eye, eigvals_only=True))
            out.append((p, lam, 0))
        else:
            mass = c1 + p * c2
            mu = sla.eigh(mass, eye, eigvals_only=True)  # mass spectrum
            mu = np.sort(mu)[::-1]
            tol = max(n, 10) * np.finfo(float).eps * max(abs(mu[0]), 1.0)
            finite = mu > tol
            lam = np.sort(1.0 / mu[finite])
            out.append((p, lam, int((~finite).sum())))
    return out


def subspace_angle(u, v, m=None):
    """Largest principal angle between two subspaces (columns spanning).

    With a mass matrix the angle is measured in the M-inner product; used
    as an eigenspace-distance diagnostic.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if u.ndim == 2 and u.shape[0] < u.shape[1]:
        u = u.T
    if v.ndim == 2 and v.shape[0] < v.shape[1]:
        v = v.T
    if m is None:
        qu, _ = np.linalg.qr(u)
        qv, _ = np.linalg.qr(v)
        s = np.linalg.svd(qu.T @ qv, compute_uv=False)
    else:
        def m_orth(a):
            for _ in range(2):
                g = a.T @ (m @ a)
                a = a @ np.linalg.inv(sla.cholesky(g, lower=False))
            return a

        qu = m_orth(u)
        qv = m_orth(v)
        s = np.linalg.svd(qu.T @ (m @ qv), compute_uv=False)
    s = np.clip(s, -1.0, 1.0)
    return float(np.arccos(s.min()))
