import numpy as np
import pytest
import scipy.sparse as sp

from rbvem import polymesh as pm
from rbvem import reffem as rf
from conftest import random_star_polygon


def shoelace(verts):
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class TestReferenceNgon:
    def test_square(self):
        poly = rf.build_reference_ngon(4)
        assert np.sqrt((poly.vertices**2).sum(1)) == pytest.approx(np.ones(4))
        assert np.abs(poly.centroid).max() < 1e-15

    def test_triangle_area(self):
        assert rf.build_reference_ngon(3).area == pytest.approx(3 * np.sqrt(3) / 4)

    def test_octagon_area_against_shoelace(self):
        poly = rf.build_reference_ngon(8)
        assert poly.area == pytest.approx(shoelace(poly.vertices))
        assert poly.area == pytest.approx(2 * np.sqrt(2))


class TestTriangulation:
    def test_counts(self):
        tri = rf.triangulate_reference(4, 0)
        assert (tri.triangles.shape[0], tri.n_nodes) == (4, 5)
        assert rf.triangulate_reference(4, 1).triangles.shape[0] == 16
        assert rf.triangulate_reference(5, 4).triangles.shape[0] == 5 * 4**4

    def test_sector_containment(self):
        tri = rf.triangulate_reference(5, 4)
        vhat = pm.reference_ngon_vertices(5)
        centroids = tri.nodes[tri.triangles].mean(axis=1)
        for s in range(5):
            c = centroids[tri.sector_of_triangle == s]
            a, b = vhat[s], vhat[(s + 1) % 5]
            det = a[0] * b[1] - a[1] * b[0]
            l1 = (c[:, 0] * b[1] - c[:, 1] * b[0]) / det
            l2 = (a[0] * c[:, 1] - a[1] * c[:, 0]) / det
            assert np.all((l1 > 0) & (l2 > 0) & (l1 + l2 < 1))

    def test_vertices_and_center_are_nodes(self):
        tri = rf.triangulate_reference(6, 2)
        assert np.abs(tri.nodes[tri.center_node]).max() == 0.0
        assert tri.nodes[tri.vertex_nodes] == pytest.approx(pm.reference_ngon_vertices(6))
        assert tri.boundary_nodes[tri.vertex_nodes].all()
        assert not tri.boundary_nodes[tri.center_node]

    def test_physical_nodes_inverts_element_map(self):
        rng = np.random.default_rng(3)
        poly = random_star_polygon(rng, 5)
        tri = rf.triangulate_reference(5, 2)
        emap = pm.build_element_map(poly)
        phys = tri.physical_nodes(poly)
        for node in range(tri.n_nodes):
            s = tri.node_sector[node]
            back = emap.to_reference(phys[node], s)
            assert np.abs(back - tri.nodes[node]).max() < 1e-12


class TestSectorForms:
    @pytest.mark.parametrize("n,level", [(3, 3), (4, 2), (5, 3)])
    def test_invariants(self, n, level):
        tri = rf.triangulate_reference(n, level)
        forms = rf.assemble_sector_forms(tri)
        ones = np.ones(tri.n_nodes)
        for s in range(n):
            for nu in range(4):
                a = forms.stiff[s][nu]
                assert np.abs(a @ ones).max() < 1e-14  # constants annihilated
                dense = a.toarray()
                if nu < 3:
                    assert np.abs(dense - dense.T).max() < 1e-14
                else:
                    assert np.abs(dense + dense.T).max() < 1e-14
            m = forms.mass[s].toarray()
            assert np.abs(m - m.T).max() < 1e-15
            assert np.linalg.eigvalsh(m).min() > -1e-14
        # mass adds up to the polygon area
        assert ones @ (forms.m0 @ ones) == pytest.approx(rf.build_reference_ngon(n).area)

    def test_identity_theta_reproduces_plain_stiffness(self):
        tri = rf.triangulate_reference(5, 3)
        forms = rf.assemble_sector_forms(tri)
        theta = np.zeros((5, 4))
        theta[:, 0] = theta[:, 1] = 1.0
        combined = forms.combine_stiffness(theta)

        # independent oracle: single-pass P1 assembly over all triangles
        area, grads = rf._p1_geometry(tri.nodes, tri.triangles)
        local = np.einsum("tap,tbp->tab", grads, grads) * area[:, None, None]
        rows = np.repeat(tri.triangles, 3, axis=1).ravel()
        cols = np.tile(tri.triangles, (1, 3)).ravel()
        direct = sp.coo_matrix(
            (local.ravel(), (rows, cols)), shape=(tri.n_nodes, tri.n_nodes)
        ).tocsr()
        assert np.abs((combined - direct).toarray()).max() < 1e-14


class TestLiftings:
    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_partition_range_residual(self, n):
        tri = rf.triangulate_reference(n, 4)
        forms = rf.assemble_sector_forms(tri)
        lift = rf.harmonic_liftings(tri, forms)
        assert np.abs(lift.sum(axis=1) - 1.0).max() < 1e-12
        assert lift.min() >= -1e-12 and lift.max() <= 1.0 + 1e-12
        residual = (forms.k0 @ lift)[tri.interior]
        scale = sp.linalg.norm(forms.k0)
        assert np.abs(residual).max() / scale < 1e-12

    def test_square_symmetry_center_value(self):
        tri = rf.triangulate_reference(4, 3)
        lift = rf.harmonic_lifting(tri, 0)
        assert lift[tri.center_node] == pytest.approx(0.25)

    def test_boundary_values_are_hats(self):
        tri = rf.triangulate_reference(5, 2)
        forms = rf.assemble_sector_forms(tri)
        lift = rf.harmonic_liftings(tri, forms)
        assert lift[tri.vertex_nodes] == pytest.approx(np.eye(5))


class TestSnapshots:
    def test_reference_and_scaled_give_zero(self):
        tri = rf.triangulate_reference(5, 3)
        forms = rf.assemble_sector_forms(tri)
        lift = rf.harmonic_liftings(tri, forms)
        for poly in (
            pm.Polygon(pm.reference_ngon_vertices(5)),
            pm.Polygon(2.5 * pm.reference_ngon_vertices(5) + np.array([3.0, 1.0])),
        ):
            emap = pm.build_element_map(poly)
            d = rf.SnapshotSolver(tri, forms, emap.theta).solve_all(lift)
            assert np.abs(d).max() < 1e-12

    def test_random_pentagon_residual_and_trace(self):
        rng = np.random.default_rng(1)
        tri = rf.triangulate_reference(5, 3)
        forms = rf.assemble_sector_forms(tri)
        lift = rf.harmonic_liftings(tri, forms)
        poly = random_star_polygon(rng, 5)
        solver = rf.SnapshotSolver(tri, forms, pm.build_element_map(poly).theta)
        d = solver.solve_all(lift)
        assert np.abs(d[tri.boundary_nodes]).max() == 0.0
        for i in range(5):
            assert solver.residual(lift[:, i], d[:, i]) < 1e-12

    def test_operator_spd_for_spd_coefficient(self):
        rng = np.random.default_rng(9)
        tri = rf.triangulate_reference(4, 2)
        forms = rf.assemble_sector_forms(tri)
        kappa = np.array([[3.0, 0.8], [0.8, 1.5]])
        for _ in range(5):
            poly = random_star_polygon(rng, 4)
            theta = pm.build_element_map(poly, kappa).theta
            a = forms.combine_stiffness(theta)
            inner = a[tri.interior][:, tri.interior].toarray()
            assert np.linalg.eigvalsh(inner).min() > 0
            assert np.abs(theta[:, 3]).max() < 1e-13  # symmetric coefficient

    def test_linearity_in_boundary_data(self):
        rng = np.random.default_rng(5)
        tri = rf.triangulate_reference(5, 3)
        forms = rf.assemble_sector_forms(tri)
        lift = rf.harmonic_liftings(tri, forms)
        poly = random_star_polygon(rng, 5)
        solver = rf.SnapshotSolver(tri, forms, pm.build_element_map(poly).theta)
        c = rng.normal(size=5)
        combined = solver.solve(lift @ c)
        separate = solver.solve_all(lift) @ c
        assert np.abs(combined - separate).max() < 1e-12
