import numpy as np
import pytest
import scipy.sparse as sp

from rbvem import polymesh as pm
from rbvem import rb_offline as ro
from rbvem import rb_online as rb
from rbvem import reffem as rf
from rbvem import vem_core as vc
from conftest import random_star_polygon


def physical_p1_matrices(nodes, tris, kappa=None):
    """Independent P1 assembly on a physical mesh (stiffness, mass)."""
    if kappa is None:
        kappa = np.eye(2)
    area, grads = rf._p1_geometry(nodes, tris)
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    loc_k = np.einsum("tap,pq,tbq->tab", grads, kappa, grads) * area[:, None, None]
    k = sp.coo_matrix((loc_k.ravel(), (rows, cols))).tocsr()
    pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    loc_m = pattern[None, :, :] * area[:, None, None]
    m = sp.coo_matrix((loc_m.ravel(), (rows, cols))).tocsr()
    return k, m


def test_reference_element_coefficients_vanish(db_pentagon):
    ref = pm.Polygon(pm.reference_ngon_vertices(5))
    emap = pm.build_element_map(ref)
    coeffs = rb.solve_reduced_all(db_pentagon, emap.theta)
    assert np.abs(coeffs).max() < 1e-12
    assert np.abs(rb.solve_reduced(db_pentagon, emap.theta, 2)).max() < 1e-12
    # scaled copy too
    emap2 = pm.build_element_map(pm.Polygon(3.0 * pm.reference_ngon_vertices(5)))
    assert np.abs(rb.solve_reduced_all(db_pentagon, emap2.theta)).max() < 1e-12


def test_reference_psi_equals_lifting_gram(db_pentagon):
    tri, forms = db_pentagon.kernel()
    ref = pm.Polygon(pm.reference_ngon_vertices(5))
    emap = pm.build_element_map(ref)
    coeffs = rb.solve_reduced_all(db_pentagon, emap.theta)
    psi = rb.compute_psi(db_pentagon, emap.theta, coeffs)
    lift = db_pentagon.liftings
    direct = lift.T @ (forms.k0 @ lift)
    assert np.abs(psi - direct).max() < 1e-12


def test_phi_scaling(db_pentagon):
    ref = pm.Polygon(pm.reference_ngon_vertices(5))
    scaled = pm.Polygon(2.0 * pm.reference_ngon_vertices(5))
    c0 = rb.solve_reduced_all(db_pentagon, pm.build_element_map(ref).theta)
    phi_ref = rb.compute_phi(db_pentagon, pm.build_element_map(ref).gamma, c0)
    phi_scaled = rb.compute_phi(db_pentagon, pm.build_element_map(scaled).gamma, c0)
    assert np.abs(phi_scaled - 4.0 * phi_ref).max() < 1e-12
    assert phi_ref.sum() == pytest.approx(ref.area)


def test_phi_tilde_constant_column_is_basis_integral(db_pentagon):
    rng = np.random.default_rng(2)
    poly = random_star_polygon(rng, 5, shift=False)
    emap = pm.build_element_map(poly)
    coeffs = rb.solve_reduced_all(db_pentagon, emap.theta)
    q_const = np.ones((6, 5))
    phi_tilde = rb.compute_phi_tilde(db_pentagon, emap, coeffs, q_const)
    tri, forms = db_pentagon.kernel()
    basis = rb.reconstruct_basis_fe(db_pentagon, coeffs)
    mass = forms.combine_mass(emap.gamma)
    integrals = np.ones(tri.n_nodes) @ (mass @ basis)
    for j in range(5):
        assert phi_tilde[:, j] == pytest.approx(integrals, abs=1e-13)


def test_reconstruct_boundary_values(db_pentagon):
    rng = np.random.default_rng(3)
    poly = random_star_polygon(rng, 5)
    coeffs = rb.solve_reduced_all(db_pentagon, pm.build_element_map(poly).theta)
    basis = rb.reconstruct_basis_fe(db_pentagon, coeffs)
    tri, _ = db_pentagon.kernel()
    assert basis[tri.vertex_nodes] == pytest.approx(np.eye(5))
    assert np.abs(basis[tri.boundary_nodes] - db_pentagon.liftings[tri.boundary_nodes]).max() == 0.0


class TestBrickVsDirect:
    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
    def test_psi_phi_phitilde(self, n):
        db = ro.build_offline_db(n, m=2, l=6, seed=50 + n, level=3, sampler="generic")
        tri, forms = db.kernel()
        rng = np.random.default_rng(n)
        for _ in range(10):
            poly = random_star_polygon(rng, n)
            emap = pm.build_element_map(poly)
            proj = vc.pi_nabla_matrices(poly)
            q = vc.pinabla_fan_values(proj)
            ctx = rb.online_element_ctx(db, emap, q)

            phys = tri.physical_nodes(poly)
            kp, mp = physical_p1_matrices(phys, tri.triangles)
            basis = rb.reconstruct_basis_fe(db, ctx.coeffs)
            assert np.abs(ctx.psi - basis.T @ (kp @ basis)).max() < 1e-11
            assert np.abs(ctx.phi - basis.T @ (mp @ basis)).max() < 1e-11

            xc, h = poly.centroid, poly.diameter
            mono = np.stack(
                [np.ones(len(phys)), (phys[:, 0] - xc[0]) / h, (phys[:, 1] - xc[1]) / h], 1
            )
            projected = mono @ proj.pin_poly
            assert np.abs(ctx.phi_tilde - basis.T @ (mp @ projected)).max() < 1e-11

    def test_anisotropic_coefficient(self, db_pentagon):
        kappa = np.array([[3.0, 0.7], [0.7, 1.2]])
        tri, forms = db_pentagon.kernel()
        rng = np.random.default_rng(31)
        poly = random_star_polygon(rng, 5)
        emap = pm.build_element_map(poly, kappa)
        coeffs = rb.solve_reduced_all(db_pentagon, emap.theta)
        psi = rb.compute_psi(db_pentagon, emap.theta, coeffs)
        phys = tri.physical_nodes(poly)
        kp, _ = physical_p1_matrices(phys, tri.triangles, kappa)
        basis = rb.reconstruct_basis_fe(db_pentagon, coeffs)
        assert np.abs(psi - basis.T @ (kp @ basis)).max() < 1e-11


def test_psi_positive_semidefinite_with_near_constant_kernel(db_pentagon):
    rng = np.random.default_rng(5)
    poly = random_star_polygon(rng, 5)
    emap = pm.build_element_map(poly)
    coeffs = rb.solve_reduced_all(db_pentagon, emap.theta)
    psi = rb.compute_psi(db_pentagon, emap.theta, coeffs)
    w = np.linalg.eigvalsh(psi)
    assert w[0] > -1e-12 * abs(w[-1])
    assert w[-1] > 0
    # the all-ones direction is the near-kernel; its energy is the squared
    # truncation residual of the reduced corrections, small but not zero
    ones = np.ones(5)
    assert ones @ psi @ ones < 1e-2 * abs(w[-1])


def test_exactness_at_snapshot_parameters():
    # with M = rank the online solution reproduces the truth snapshot
    n, level, l = 5, 3, 6
    tri, forms = ro.ref_kernel(n, level)
    samples = ro.sample_parameter_space(n, l, seed=77)
    snaps = ro.compute_snapshots(tri, forms, samples)
    space = ro.pod_compress(tri, forms, snaps, m_target=l)
    lift = rf.harmonic_liftings(tri, forms)
    bricks = ro.precompute_bricks(tri, forms, space, lift)
    db = ro.OfflineDB(n_gon=n, m=space.m, l=l, level=level, seed=77,
                      rbspace=space, liftings=lift, bricks=bricks)
    for ell in (0, 3, 5):
        emap = pm.build_element_map(samples.polygons[ell])
        coeffs = rb.solve_reduced_all(db, emap.theta)
        recon = db.modes_matrix() @ rb._coeff_matrix(coeffs)
        for j in range(n):
            err = recon[:, j] - snaps[ell, j]
            energy = np.sqrt(err @ (forms.k0 @ err))
            assert energy < 1e-10
        # raw basis partition of unity is exact here as well
        basis = rb.reconstruct_basis_fe(db, coeffs)
        assert np.abs(basis.sum(axis=1) - 1.0).max() < 1e-10


def test_monotone_correction_error_in_m(db_pentagon):
    tri, forms = db_pentagon.kernel()
    lift = db_pentagon.liftings
    rng = np.random.default_rng(11)
    for _ in range(3):
        poly = random_star_polygon(rng, 5)
        emap = pm.build_element_map(poly)
        truth = rf.SnapshotSolver(tri, forms, emap.theta).solve_all(lift)
        prev = None
        for m in range(1, db_pentagon.m + 1):
            db_m = db_pentagon.truncated(m)
            coeffs = rb.solve_reduced_all(db_m, emap.theta)
            recon = db_m.modes_matrix() @ rb._coeff_matrix(coeffs)
            err = recon - truth
            a_op = forms.combine_stiffness(emap.theta)
            energy = np.sqrt(np.einsum("nj,nj->", err, (a_op @ err)))
            if prev is not None:
                assert energy <= prev + 1e-12
            prev = energy


def test_empty_reduced_space_raises(db_pentagon):
    tri, forms = db_pentagon.kernel()
    space = ro.RBSpace(n_gon=5, m=0, modes=np.zeros((5, 0, tri.n_nodes)),
                       singular_values=np.zeros((5, 0)), degenerate=True)
    bricks = ro.precompute_bricks(tri, forms, space, db_pentagon.liftings)
    db0 = ro.OfflineDB(n_gon=5, m=0, l=1, level=3, seed=0, rbspace=space,
                       liftings=db_pentagon.liftings, bricks=bricks)
    theta = pm.build_element_map(pm.Polygon(pm.reference_ngon_vertices(5))).theta
    with pytest.raises(ValueError, match="M=0"):
        rb.solve_reduced(db0, theta, 0)
