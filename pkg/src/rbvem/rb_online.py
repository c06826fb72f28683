"""Online phase: per-element reduced solves and exact local form values.

Given a cell's affine-decomposition coefficients (theta, gamma) and an
offline database, this module solves the small reduced systems for the
non-polynomial corrections and evaluates the stiffness Gram ``psi``, the
mass Gram ``phi`` and the mass cross matrix ``phi_tilde`` of the explicit
basis functions purely from precomputed bricks -- the cost is independent
of the fine-mesh size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polymesh import ElementMap
from .rb_offline import OfflineDB

# transposing a stiffness brick flips the sign of the antisymmetric channel
_NU_SIGN = np.array([1.0, 1.0, 1.0, -1.0])


@dataclass
class OnlineElementCtx:
    """Reduced coefficients and exact local form values for one cell."""

    element_map: ElementMap
    coeffs: np.ndarray  # (N, M) reduced coefficients per boundary index
    psi: np.ndarray  # (N, N) stiffness Gram of the explicit basis
    phi: np.ndarray  # (N, N) mass Gram
    phi_tilde: np.ndarray  # (N, N) mass of basis against projected polynomials


def _coeff_matrix(coeffs):
    """(N*M, N) block matrix C with column j carrying coeffs[j] in block j."""
    n, m = coeffs.shape
    c = np.zeros((n * m, n))
    for j in range(n):
        c[j * m : (j + 1) * m, j] = coeffs[j]
    return c


def solve_reduced(db: OfflineDB, theta, j):
    """Reduced coefficients for boundary index j at parameter theta.

    Raises:
        ValueError: empty reduced space (M = 0) or singular reduced system.
    """
    m = db.m
    if m == 0:
        raise ValueError("reduced space is empty (M=0 offline database)")
    n = db.n_gon
    axx = db.bricks.axx.reshape(n, 4, n * m, n * m)
    axt = db.bricks.axt.reshape(n, 4, n * m, n)
    a = np.tensordot(theta, axx, axes=([0, 1], [0, 1]))
    f = -np.tensordot(theta, axt, axes=([0, 1], [0, 1]))
    block = slice(j * m, (j + 1) * m)
    try:
        return np.linalg.solve(a[block, block], f[block, j])
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular reduced system for index {j}: {exc}") from exc


def solve_reduced_all(db: OfflineDB, theta):
    """Reduced coefficients for every boundary index, (N, M)."""
    n, m = db.n_gon, db.m
    if m == 0:
        raise ValueError("reduced space is empty (M=0 offline database)")
    axx = db.bricks.axx.reshape(n, 4, n * m, n * m)
    axt = db.bricks.axt.reshape(n, 4, n * m, n)
    a = np.tensordot(theta, axx, axes=([0, 1], [0, 1]))
    f = -np.tensordot(theta, axt, axes=([0, 1], [0, 1]))
    out = np.empty((n, m))
    for j in range(n):
        block = slice(j * m, (j + 1) * m)
        try:
            out[j] = np.linalg.solve(a[block, block], f[block, j])
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular reduced system for index {j}: {exc}") from exc
    return out


def _theta_symmetric(theta):
    scale = np.abs(theta).max() + 1e-300
    return np.abs(theta[:, 3]).max() <= 1e-14 * scale


def compute_psi(db: OfflineDB, theta, coeffs):
    """Stiffness Gram psi[i, j] = a_E(basis_i, basis_j) from bricks."""
    n, m = db.n_gon, db.m
    nm = n * m
    b = db.bricks
    att = np.tensordot(theta, b.att, axes=([0, 1], [0, 1]))  # (N, N)
    axt = np.tensordot(theta, b.axt.reshape(n, 4, nm, n), axes=([0, 1], [0, 1]))
    axx = np.tensordot(theta, b.axx.reshape(n, 4, nm, nm), axes=([0, 1], [0, 1]))
    # int grad(T)^T S grad(X) comes from the stored transpose, with sign
    tax = np.tensordot(
        theta * _NU_SIGN, b.axt.reshape(n, 4, nm, n), axes=([0, 1], [0, 1])
    ).T  # (N, NM)
    c = _coeff_matrix(coeffs)
    pap = att + tax @ c + c.T @ axt + c.T @ axx @ c
    psi = pap.T  # a_E(w, v) integrates grad(v)^T K grad(w)
    if _theta_symmetric(theta):
        psi = 0.5 * (psi + psi.T)
    return psi


def compute_phi(db: OfflineDB, gamma, coeffs):
    """Mass Gram phi[i, j] = b_E(basis_i, basis_j) from bricks."""
    n, m = db.n_gon, db.m
    nm = n * m
    b = db.bricks
    mtt = np.tensordot(gamma, b.mtt, axes=1)
    mxt = np.tensordot(gamma, b.mxt.reshape(n, nm, n), axes=1)
    mxx = np.tensordot(gamma, b.mxx.reshape(n, nm, nm), axes=1)
    c = _coeff_matrix(coeffs)
    phi = mtt + mxt.T @ c + c.T @ mxt + c.T @ mxx @ c
    return 0.5 * (phi + phi.T)


def compute_phi_tilde(db: OfflineDB, element_map: ElementMap, coeffs, pinabla_nodal_values):
    """Mass cross matrix phi_tilde[i, j] = b_E(basis_i, projected poly j).

    ``pinabla_nodal_values`` holds the values of the projected polynomials
    at (centroid, v_1, ..., v_N), shape (N+1, N); their pull-backs are
    exactly sector-wise linear, hence exactly spanned by the fan hats.
    """
    q = np.asarray(pinabla_nodal_values, dtype=float)
    n, m = db.n_gon, db.m
    if q.shape != (n + 1, n):
        raise ValueError(f"expected nodal values of shape {(n + 1, n)}, got {q.shape}")
    b = db.bricks
    gamma = element_map.gamma
    fant = np.tensordot(gamma, b.fant, axes=1)  # (N+1, N)
    fanx = np.tensordot(gamma, b.fanx.reshape(n, n + 1, n * m), axes=1)
    c = _coeff_matrix(coeffs)
    return (fant + fanx @ c).T @ q


def reconstruct_basis_fe(db: OfflineDB, coeffs):
    """Nodal vectors of the explicit basis on the reference mesh, (n_nodes, N).

    Column i equals the lifting of the i-th boundary hat plus its reduced
    correction; the boundary trace is exactly the boundary hat.
    """
    return db.liftings + db.modes_matrix() @ _coeff_matrix(coeffs)


def online_element_ctx(
    db: OfflineDB, element_map: ElementMap, pinabla_nodal_values
) -> OnlineElementCtx:
    """Solve the reduced systems and evaluate psi, phi, phi_tilde for a cell."""
    db.check_n(element_map.n)
    coeffs = solve_reduced_all(db, element_map.theta)
    psi = compute_psi(db, element_map.theta, coeffs)
    phi = compute_phi(db, element_map.gamma, coeffs)
    phi_tilde = compute_phi_tilde(db, element_map, coeffs, pinabla_nodal_values)
    return OnlineElementCtx(
        element_map=element_map, coeffs=coeffs, psi=psi, phi=phi, phi_tilde=phi_tilde
    )
