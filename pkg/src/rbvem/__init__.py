"""Virtual elements on polygonal meshes with reduced-basis virtual functions.

Library layout:

- :mod:`rbvem.polymesh` -- cells, meshes, generators, reference maps
- :mod:`rbvem.reffem` -- P1 kernel on the reference N-gon (liftings, snapshots)
- :mod:`rbvem.rb_offline` -- sampling, POD compression, precomputed bricks
- :mod:`rbvem.rb_online` -- per-element reduced solves and exact local forms
- :mod:`rbvem.vem_core` -- projectors, stabilizations, element matrices
- :mod:`rbvem.eigsolve` -- global assembly, eigen/source solvers
- :mod:`rbvem.bench` -- benchmark experiments, error and rate computation
- :mod:`rbvem.cli` -- command-line entry point (offline / solve / bench)
"""

from .polymesh import (
    Polygon,
    PolyMesh,
    ElementMap,
    Similarity,
    build_element_map,
    generate_dyadic_mesh,
    generate_dyadic_lshape_mesh,
    generate_octagon_mesh,
    generate_voronoi_mesh,
    generate_voronoi_quadrant_mesh,
    generate_voronoi_lshape_mesh,
    load_mesh,
    save_mesh,
    normalize_polygon,
    star_shape_check,
)

__all__ = [
    "Polygon",
    "PolyMesh",
    "ElementMap",
    "Similarity",
    "build_element_map",
    "generate_dyadic_mesh",
    "generate_dyadic_lshape_mesh",
    "generate_octagon_mesh",
    "generate_voronoi_mesh",
    "generate_voronoi_quadrant_mesh",
    "generate_voronoi_lshape_mesh",
    "load_mesh",
    "save_mesh",
    "normalize_polygon",
    "star_shape_check",
]

__version__ = "0.1.0"
