import numpy as np
import pytest

from rbvem import polymesh, rb_offline


def random_star_polygon(rng, n, r_lo=0.55, r_hi=1.0, jitter=0.35, shift=True):
    """Random star-shaped N-gon for property tests (rejection sampled)."""
    for _ in range(100):
        ang = 2 * np.pi * np.arange(n) / n + rng.uniform(-jitter, jitter, n) * np.pi / n
        r = rng.uniform(r_lo, r_hi, n)
        verts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
        if shift:
            verts = verts + rng.uniform(-2, 2, 2)
        try:
            poly = polymesh.Polygon(verts)
        except polymesh.MeshError:
            continue
        return poly
    raise RuntimeError("could not sample a star polygon")


@pytest.fixture(scope="session")
def db_pentagon():
    """Small generic-sampled database for brick/online tests (N=5)."""
    return rb_offline.build_offline_db(5, m=3, l=8, seed=11, level=3, sampler="generic")


@pytest.fixture(scope="session")
def db_octagon():
    """Mixture-sampled database driving dyadic-mesh solves (N=8)."""
    return rb_offline.build_offline_db(8, m=1, l=40, seed=3, level=4)


@pytest.fixture(scope="session")
def db_small_map():
    """Databases for every vertex count of small Voronoi meshes."""
    return {
        n: rb_offline.build_offline_db(n, m=1, l=30, seed=100 + n, level=3)
        for n in range(4, 9)
    }
