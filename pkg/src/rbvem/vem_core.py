"""Local element machinery: projectors, stabilizations, element matrices.

For the lowest-order space every degree of freedom is a vertex value.  The
elliptic projector onto linear polynomials is computed from exact boundary
integrals of the piecewise-linear traces, fixed by the boundary-mean
condition.  Element stiffness/mass pairs come in three variants:

- ``element_vem``: projection parts plus dofi-dofi stabilization scaled by
  the global parameters (alpha, beta);
- ``element_rbvem``: the virtual parts replaced by the exact Grams of the
  explicit reduced-basis functions, including the mass cross terms;
- ``element_rbstab``: classical structure with the reduced-basis Grams used
  as stabilizers (chi toggles mass stabilization, no cross terms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polymesh import Polygon
from .rb_online import OnlineElementCtx, reconstruct_basis_fe

# degree-4 triangle quadrature (6 points, barycentric), weights sum to 1
_QP_DEG4 = np.array(
    [
        [0.108103018168070, 0.445948490915965, 0.445948490915965],
        [0.445948490915965, 0.108103018168070, 0.445948490915965],
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        [0.816847572980459, 0.091576213509771, 0.091576213509771],
        [0.091576213509771, 0.816847572980459, 0.091576213509771],
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
    ]
)
_QW_DEG4 = np.array(
    [
        0.223381589678011,
        0.223381589678011,
        0.223381589678011,
        0.109951743655322,
        0.109951743655322,
        0.109951743655322,
    ]
)

# degree-2 rule (edge midpoints), exact for the quadratic monomial moments
_QP_DEG2 = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_QW_DEG2 = np.array([1.0, 1.0, 1.0]) / 3.0


@dataclass
class ProjectorMatrices:
    """Elliptic projector of one cell in dof and monomial representations.

    ``pin_dof[k, j]`` is the value of the projected j-th nodal basis
    function at vertex k, ``pin_poly[:, j]`` its coefficients in the scaled
    monomial basis {1, (x - x_K)/h, (y - y_K)/h}, and ``r = I - pin_dof``.
    """

    polygon: Polygon
    pin_dof: np.ndarray  # (N, N)
    pin_poly: np.ndarray  # (3, N)
    r: np.ndarray  # (N, N)


@dataclass
class ElementMatrices:
    """Local stiffness/mass pair of one method variant."""

    k: np.ndarray
    m: np.ndarray
    method: str


def pi_nabla_matrices(polygon: Polygon) -> ProjectorMatrices:
    """Projector matrices from exact boundary integrals.

    The gradient moments of a nodal basis function reduce to boundary
    integrals of its piecewise-linear trace (trapezoid rule is exact); the
    constant part is fixed by matching the boundary mean.  The diffusion
    coefficient does not enter: it only appears in the consistency forms.
    """
    v = polygon.vertices
    n = v.shape[0]
    xc = polygon.centroid
    h = polygon.diameter

    d = np.empty((n, 3))
    d[:, 0] = 1.0
    d[:, 1] = (v[:, 0] - xc[0]) / h
    d[:, 2] = (v[:, 1] - xc[1]) / h

    lengths = polygon.edge_lengths()
    perimeter = lengths.sum()
    b = np.empty((3, n))
    b[0] = (lengths + np.roll(lengths, 1)) / (2.0 * perimeter)
    v_next = np.roll(v, -1, axis=0)
    v_prev = np.roll(v, 1, axis=0)
    b[1] = (v_next[:, 1] - v_prev[:, 1]) / (2.0 * h)
    b[2] = -(v_next[:, 0] - v_prev[:, 0]) / (2.0 * h)

    g = b @ d
    pin_poly = np.linalg.solve(g, b)
    pin_dof = d @ pin_poly
    return ProjectorMatrices(
        polygon=polygon, pin_dof=pin_dof, pin_poly=pin_poly, r=np.eye(n) - pin_dof
    )


def _fan_triangles(polygon: Polygon):
    """Vertex triples (x_K, v_i, v_{i+1}) of the fan, shape (N, 3, 2)."""
    v = polygon.vertices
    tri = np.empty((v.shape[0], 3, 2))
    tri[:, 0] = polygon.centroid
    tri[:, 1] = v
    tri[:, 2] = np.roll(v, -1, axis=0)
    return tri


def _quad_points(polygon: Polygon, rule_points, rule_weights):
    """Physical quadrature points/weights of a fan-triangle rule."""
    tri = _fan_triangles(polygon)
    pts = np.einsum("qb,tbd->tqd", rule_points, tri).reshape(-1, 2)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    w = (area[:, None] * rule_weights[None, :]).ravel()
    return pts, w


def monomial_moments(polygon: Polygon):
    """Exact moments int_E m_a m_b of the scaled monomials, (3, 3)."""
    pts, w = _quad_points(polygon, _QP_DEG2, _QW_DEG2)
    xc = polygon.centroid
    h = polygon.diameter
    m = np.empty((3, len(w)))
    m[0] = 1.0
    m[1] = (pts[:, 0] - xc[0]) / h
    m[2] = (pts[:, 1] - xc[1]) / h
    return (m * w) @ m.T


def consistency_matrices(polygon: Polygon, kappa, proj: ProjectorMatrices):
    """Projection parts of the local forms: (Kc, Mc).

    Kc integrates the constant gradients of the projected basis against the
    cell coefficient; Mc integrates their products exactly (degree-2
    quadrature on the fan).
    """
    if kappa is None:
        kappa = np.eye(2)
    kappa = np.asarray(kappa, dtype=float)
    grads = proj.pin_poly[1:] / polygon.diameter  # (2, N) constant gradients
    kc = polygon.area * (grads.T @ kappa @ grads)
    mc = proj.pin_poly.T @ monomial_moments(polygon) @ proj.pin_poly
    return kc, mc


def dofi_dofi_stab(polygon: Polygon, scale_mode, parameter):
    """Raw dofi-dofi form: parameter * I for stiffness, parameter h^2 I for mass."""
    if parameter < 0:
        raise ValueError("stabilization parameter must be >= 0")
    n = polygon.n_vertices
    if scale_mode == "stiffness":
        return parameter * np.eye(n)
    if scale_mode == "mass":
        return parameter * polygon.diameter**2 * np.eye(n)
    raise ValueError(f"unknown scale_mode {scale_mode!r}")


def element_vem(polygon: Polygon, kappa, alpha, beta, proj=None) -> ElementMatrices:
    """Stabilized element pair K = Kc + alpha R^T R, M = Mc + beta h^2 R^T R."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    if proj is None:
        proj = pi_nabla_matrices(polygon)
    kc, mc = consistency_matrices(polygon, kappa, proj)
    rtr = proj.r.T @ proj.r
    k = kc + alpha * rtr
    m = mc + beta * polygon.diameter**2 * rtr
    return ElementMatrices(k=k, m=m, method=f"vem(alpha={alpha:g},beta={beta:g})")


def element_rbvem(
    polygon: Polygon, kappa, ctx: OnlineElementCtx, proj: ProjectorMatrices
) -> ElementMatrices:
    """Exact Galerkin element pair in the explicit local space.

    The stiffness cross terms vanish because the non-polynomial basis
    traces are orthogonal to the conormal derivatives of linears; the mass
    cross terms do not and are assembled from ``phi_tilde``.

    Raises:
        ValueError: stiffness fails positive semidefiniteness, which
            signals a context inconsistent with the cell.
    """
    kc, mc = consistency_matrices(polygon, kappa, proj)
    r = proj.r
    k = kc + r.T @ ctx.psi @ r
    k = 0.5 * (k + k.T)
    cross = r.T @ ctx.phi_tilde
    m = mc + r.T @ ctx.phi @ r + cross + cross.T
    m = 0.5 * (m + m.T)
    eigs = np.linalg.eigvalsh(k)
    if eigs[0] < -1e-12 * max(abs(eigs[-1]), 1.0):
        raise ValueError(f"rbvem stiffness not PSD (min eig {eigs[0]:.3e})")
    return ElementMatrices(k=k, m=m, method="rbvem")


def element_rbstab(
    polygon: Polygon, kappa, ctx: OnlineElementCtx, proj: ProjectorMatrices, chi
) -> ElementMatrices:
    """Classical VEM pair with the reduced-basis Grams as stabilizers."""
    if chi not in (0, 1):
        raise ValueError("chi must be 0 or 1")
    kc, mc = consistency_matrices(polygon, kappa, proj)
    r = proj.r
    k = kc + r.T @ ctx.psi @ r
    k = 0.5 * (k + k.T)
    m = mc if chi == 0 else mc + r.T @ ctx.phi @ r
    m = 0.5 * (m + m.T)
    return ElementMatrices(k=k, m=m, method=f"rbstab(chi={chi})")


def pinabla_fan_values(proj: ProjectorMatrices):
    """Values of the projected basis at (x_K, v_1, ..., v_N), shape (N+1, N).

    The scaled monomials vanish at the centroid, so the first row is just
    the constant coefficient.
    """
    n = proj.pin_dof.shape[0]
    q = np.empty((n + 1, n))
    q[0] = proj.pin_poly[0]
    q[1:] = proj.pin_dof
    return q


def element_load(
    polygon: Polygon,
    f,
    proj: ProjectorMatrices,
    mode="projected",
    db=None,
    ctx: OnlineElementCtx | None = None,
):
    """Local load vector for a source term f(x, y).

    ``projected`` integrates f against the projected basis with a degree-4
    fan rule; ``exact_rb`` integrates against the explicit basis on the
    pulled-back fine mesh (P1 interpolation of f), which requires the
    offline database and the cell's online context.
    """
    n = polygon.n_vertices
    if mode == "projected":
        pts, w = _quad_points(polygon, _QP_DEG4, _QW_DEG4)
        fv = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise ValueError("source term returned non-finite values")
        xc, h = polygon.centroid, polygon.diameter
        m = np.empty((len(w), 3))
        m[:, 0] = 1.0
        m[:, 1] = (pts[:, 0] - xc[0]) / h
        m[:, 2] = (pts[:, 1] - xc[1]) / h
        return ((fv * w) @ m) @ proj.pin_poly
    if mode == "exact_rb":
        if db is None or ctx is None:
            raise ValueError("exact_rb mode needs the offline db and element ctx")
        tri, forms = db.kernel()
        phys = tri.physical_nodes(polygon)
        fv = np.asarray(f(phys[:, 0], phys[:, 1]), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise ValueError("source term returned non-finite values")
        mass = forms.combine_mass(ctx.element_map.gamma)
        basis = tri.fan_hat_matrix() @ pinabla_fan_values(proj)
        basis += reconstruct_basis_fe(db, ctx.coeffs) @ proj.r
        return (mass @ fv) @ basis
    raise ValueError(f"unknown load mode {mode!r}")
