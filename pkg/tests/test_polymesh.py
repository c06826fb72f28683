import logging

import numpy as np
import pytest

from rbvem import polymesh as pm
from conftest import random_star_polygon


class TestPolygon:
    def test_unit_square_geometry(self):
        sq = pm.Polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
        assert sq.area == pytest.approx(1.0)
        assert sq.diameter == pytest.approx(np.sqrt(2))
        assert sq.centroid == pytest.approx([0.5, 0.5])

    def test_clockwise_is_reversed_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="rbvem.polymesh"):
            p = pm.Polygon([[0, 0], [0, 1], [1, 1], [1, 0]])
        assert p.area > 0
        assert any("reversed" in r.message for r in caplog.records)

    def test_rejects_degenerate(self):
        with pytest.raises(pm.DegenerateCellError):
            pm.Polygon([[0, 0], [1, 0]])
        with pytest.raises(pm.DegenerateCellError):
            pm.Polygon([[0, 0], [1, 0], [2, 0]])  # zero area
        with pytest.raises(pm.DegenerateCellError):
            pm.Polygon([[0, 0], [1, 0], [1, 1e-9], [0, 1]])  # tiny edge
        with pytest.raises(pm.DegenerateCellError):
            pm.Polygon([[0, 0], [1, 1], [1, 0], [0, 1]])  # bowtie

    def test_star_shape_check(self):
        assert pm.star_shape_check(pm.reference_ngon_vertices(6))
        assert pm.star_shape_check(pm.Polygon([[0, 0], [2, 0], [2, 1], [0, 1]]))
        # thin L: centroid leaves the kernel
        thin_l = np.array([[0, 0], [4, 0], [4, 1], [1, 1], [1, 4], [0, 4]], float)
        assert not pm.star_shape_check(thin_l)


class TestNormalize:
    def test_unit_square(self):
        sq = pm.Polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
        norm, tr = pm.normalize_polygon(sq)
        radii = np.sqrt((norm.vertices**2).sum(1))
        assert radii == pytest.approx(np.ones(4))
        assert tr.scale == pytest.approx(np.sqrt(0.5))

    def test_round_trip_and_idempotence(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            poly = random_star_polygon(rng, 5)
            norm, tr = pm.normalize_polygon(poly)
            assert np.abs(tr.inverse(norm.vertices) - poly.vertices).max() < 1e-13
            norm2, tr2 = pm.normalize_polygon(norm)
            assert tr2.scale == pytest.approx(1.0, abs=1e-13)
            assert np.abs(tr2.shift).max() < 1e-13


class TestElementMap:
    def test_reference_identity(self):
        ref = pm.Polygon(pm.reference_ngon_vertices(5))
        emap = pm.build_element_map(ref)
        assert np.abs(emap.b - np.eye(2)).max() < 1e-13
        assert emap.gamma == pytest.approx(np.ones(5))
        assert emap.theta[:, 0] == pytest.approx(np.ones(5))
        assert emap.theta[:, 1] == pytest.approx(np.ones(5))
        assert np.abs(emap.theta[:, 2:]).max() < 1e-13

    def test_scaled_reference(self):
        s = 3.0
        poly = pm.Polygon(s * pm.reference_ngon_vertices(6) + np.array([1.0, -2.0]))
        emap = pm.build_element_map(poly)
        assert np.abs(emap.b - np.eye(2) / s).max() < 1e-13
        assert emap.gamma == pytest.approx(s**2 * np.ones(6))

    def test_reconstruction_identity_random_polygons(self):
        # sum_nu theta^nu S^nu must rebuild the pulled-back coefficient matrix
        rng = np.random.default_rng(42)
        kappa = np.array([[2.0, 0.3], [0.3, 1.0]])
        checked = 0
        while checked < 1000:
            n = int(rng.integers(3, 11))
            try:
                poly = random_star_polygon(rng, n)
            except RuntimeError:
                continue
            emap = pm.build_element_map(poly, kappa)
            recon = np.einsum("iv,vab->iab", emap.theta, pm.S_BASIS)
            target = emap.detbinv[:, None, None] * (
                emap.b @ kappa @ np.transpose(emap.b, (0, 2, 1))
            )
            assert np.abs(recon - target).max() < 1e-13 * max(1.0, np.abs(target).max())
            checked += 1

    def test_map_continuity_across_sectors(self):
        rng = np.random.default_rng(7)
        poly = random_star_polygon(rng, 7)
        emap = pm.build_element_map(poly)
        for i in range(7):
            mid = 0.5 * (poly.vertices[i] + poly.centroid)
            left = emap.to_reference(mid, (i - 1) % 7)
            right = emap.to_reference(mid, i)
            assert np.abs(left - right).max() < 1e-13

    def test_nonstar_rejected(self):
        thin_l = np.array([[0, 0], [4, 0], [4, 1], [1, 1], [1, 4], [0, 4]], float)
        poly = pm.Polygon(thin_l, require_star=False)
        with pytest.raises(pm.StarShapeError):
            pm.build_element_map(poly)


class TestMeshIO:
    def test_single_square(self, tmp_path):
        path = tmp_path / "sq.txt"
        path.write_text("# unit square\n4 1\n0 0\n1 0\n1 1\n0 1\n4 0 1 2 3\n")
        mesh = pm.load_mesh(path)
        assert mesh.n_cells == 1
        assert mesh.h == pytest.approx(np.sqrt(2))
        assert mesh.boundary_vertex.all()

    def test_clockwise_cell_is_fixed(self, tmp_path, caplog):
        path = tmp_path / "cw.txt"
        path.write_text("4 1\n0 0\n1 0\n1 1\n0 1\n4 0 3 2 1\n")
        with caplog.at_level(logging.WARNING, logger="rbvem.polymesh"):
            mesh = pm.load_mesh(path)
        assert mesh.cell_polygon(0).area > 0

    def test_parse_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("4 1\n0 0\n1 0\nx y\n0 1\n4 0 1 2 3\n")
        with pytest.raises(pm.MeshFormatError) as err:
            pm.load_mesh(path)
        assert err.value.line == 4

        path.write_text("2 1\n0 0\n1 0\n")
        with pytest.raises(pm.MeshFormatError):
            pm.load_mesh(path)

    def test_topology_error_names_cell(self, tmp_path):
        path = tmp_path / "topo.txt"
        # duplicated cell: every edge appears twice with the same orientation
        path.write_text("4 2\n0 0\n1 0\n1 1\n0 1\n4 0 1 2 3\n4 0 1 2 3\n")
        with pytest.raises(pm.MeshTopologyError) as err:
            pm.load_mesh(path)
        assert err.value.cell is not None

    def test_region_tags_round_trip(self, tmp_path):
        mesh = pm.generate_voronoi_quadrant_mesh(4, seed=1, lloyd_iters=3)
        path = tmp_path / "regions.txt"
        pm.save_mesh(mesh, path)
        back = pm.load_mesh(path)
        assert (back.cell_region == mesh.cell_region).any()
        assert np.array_equal(back.points, mesh.points)  # 17 digits are lossless
        assert back.cells == mesh.cells

    def test_voronoi_mesh_area_after_io(self, tmp_path):
        mesh = pm.generate_voronoi_mesh(256, seed=7)
        path = tmp_path / "v256.txt"
        pm.save_mesh(mesh, path)
        back = pm.load_mesh(path)
        total = sum(back.cell_polygon(i).area for i in range(back.n_cells))
        assert abs(total - 1.0) < 1e-12


class TestGenerators:
    def test_dyadic_counts(self):
        m1 = pm.generate_dyadic_mesh(1)
        assert m1.n_cells == 1
        assert len(m1.cells[0]) == 8
        assert m1.total_area() == pytest.approx(1.0)
        m2 = pm.generate_dyadic_mesh(2)
        assert (m2.n_cells, m2.n_points) == (4, 21)
        assert pm.generate_dyadic_mesh(4).h == pytest.approx(np.sqrt(2) / 4)

    def test_dyadic_lshape(self):
        mesh = pm.generate_dyadic_lshape_mesh(2)
        assert mesh.n_cells == 3 * 2**2
        assert mesh.total_area() == pytest.approx(3.0)

    def test_octagon_counts_and_star(self):
        m1 = pm.generate_octagon_mesh(1)
        assert m1.n_cells == 5  # one octagon, four corner triangles
        assert m1.total_area() == pytest.approx(1.0)
        m2 = pm.generate_octagon_mesh(2)
        # 4 octagons + 1 interior square + 4 edge + 4 corner triangles
        assert m2.n_cells == 13
        sizes = sorted(len(c) for c in m2.cells)
        assert sizes.count(8) == 4 and sizes.count(4) == 1 and sizes.count(3) == 8
        for i in range(m2.n_cells):
            assert pm.star_shape_check(m2.cell_polygon(i))

    def test_octagon_filler_squares_are_regular(self):
        mesh = pm.generate_octagon_mesh(3)
        for cell in mesh.cells:
            if len(cell) == 4:
                lengths = pm.Polygon(mesh.points[cell]).edge_lengths()
                assert lengths == pytest.approx(np.full(4, lengths[0]))

    def test_voronoi_single_cell_is_square(self):
        mesh = pm.generate_voronoi_mesh(1, seed=3)
        assert mesh.n_cells == 1
        assert mesh.cell_polygon(0).area == pytest.approx(1.0)
        assert sorted(map(tuple, mesh.points.tolist())) == [
            (0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]

    def test_voronoi_quadrant_seeds_make_squares(self):
        pts = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
        mesh = pm.generate_voronoi_mesh(4, points=pts, lloyd_iters=0)
        for i in range(4):
            assert mesh.cell_polygon(i).area == pytest.approx(0.25)

    def test_voronoi_invariants(self):
        mesh = pm.generate_voronoi_mesh(256, seed=7)
        assert mesh.n_cells == 256
        assert abs(mesh.total_area() - 1.0) < 1e-10
        for i in range(mesh.n_cells):
            assert pm.star_shape_check(mesh.cell_polygon(i))

    def test_voronoi_determinism(self):
        a = pm.generate_voronoi_mesh(40, seed=5)
        b = pm.generate_voronoi_mesh(40, seed=5)
        assert np.array_equal(a.points, b.points)
        assert a.cells == b.cells

    def test_quadrant_mesh_conforms_to_axes(self):
        mesh = pm.generate_voronoi_quadrant_mesh(24, seed=2)
        assert mesh.total_area() == pytest.approx(4.0)
        # no cell straddles an axis, and region tags follow the checkerboard
        for ci in range(mesh.n_cells):
            poly = mesh.cell_polygon(ci)
            x, y = poly.vertices[:, 0], poly.vertices[:, 1]
            assert x.min() > -1e-12 or x.max() < 1e-12
            assert y.min() > -1e-12 or y.max() < 1e-12
            c = poly.centroid
            assert mesh.cell_region[ci] == int(c[0] * c[1] > 0)

    def test_lshape_voronoi(self):
        mesh = pm.generate_voronoi_lshape_mesh(12, seed=4)
        assert mesh.total_area() == pytest.approx(3.0)
        for ci in range(mesh.n_cells):
            c = mesh.cell_polygon(ci).centroid
            assert not (c[0] > 0 and c[1] < 0)

    def test_generated_mesh_edge_sharing(self):
        # PolyMesh validation already rejects inconsistent edges; make sure a
        # representative of every family constructs cleanly.
        for mesh in (
            pm.generate_dyadic_mesh(3),
            pm.generate_octagon_mesh(2),
            pm.generate_voronoi_mesh(30, seed=1),
            pm.generate_dyadic_lshape_mesh(2),
        ):
            assert mesh.boundary_vertex.any()
            assert not mesh.boundary_vertex.all() or mesh.n_cells == 1
