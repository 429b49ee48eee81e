"""Shared fixtures; the expensive pipeline runs are session-scoped."""

import numpy as np
import pytest

from curvcodec import confmap, cvtmesh, shapecodec, shapes, spinrec


@pytest.fixture(scope="session")
def icospheres():
    return {k: shapes.icosphere(k) for k in (1, 2, 3, 4)}


@pytest.fixture(scope="session")
def bumpy3():
    return shapes.bumpy_sphere(3, 0.1)


@pytest.fixture(scope="session")
def bumpy4():
    return shapes.bumpy_sphere(4, 0.1)


@pytest.fixture(scope="session")
def bumpy5k():
    return shapes.bumpy_fibonacci_sphere(5000, 0.1)


@pytest.fixture(scope="session")
def sphere_domain():
    return shapecodec.build_sphere_domain(2, 32)


@pytest.fixture(scope="session")
def bumpy4_tensor(bumpy4, sphere_domain):
    param = confmap.sphere_parameterize(bumpy4)
    return shapecodec.encode(bumpy4, param, sphere_domain)


@pytest.fixture(scope="session")
def bumpy4_param_mesh(bumpy4_tensor, sphere_domain):
    pts = cvtmesh.sample_points(sphere_domain, bumpy4_tensor, seed=42)
    relaxed, _ = cvtmesh.lloyd_relax(
        pts, bumpy4_tensor, sphere_domain, max_iter=80, seed=42
    )
    return cvtmesh.delaunay_dual(cvtmesh.voronoi_sphere(relaxed))


@pytest.fixture(scope="session")
def bumpy4_target_h(bumpy4_tensor, bumpy4_param_mesh):
    bary = bumpy4_param_mesh.face_barycenters
    bary = bary / np.linalg.norm(bary, axis=1)[:, None]
    return bumpy4_tensor.decode(bary)[:, 0]


@pytest.fixture(scope="session")
def round_trip(bumpy4_param_mesh, bumpy4_target_h):
    """The core round-trip reconstruction, with and without calibration."""
    no_cal = spinrec.reconstruct(
        bumpy4_param_mesh, bumpy4_target_h, steps=10, with_area_calibration=False
    )
    cal = spinrec.reconstruct(
        bumpy4_param_mesh, bumpy4_target_h, steps=10, with_area_calibration=True
    )
    return {"no_cal": no_cal, "cal": cal}


def procrustes_residual(a, b, allow_scale=False):
    """RMS residual of the best rigid (optionally scaled) alignment a -> b."""
    pa = a - a.mean(axis=0)
    pb = b - b.mean(axis=0)
    u, s, vt = np.linalg.svd(pa.T @ pb)
    d = np.sign(np.linalg.det(u @ vt))
    rot = (u @ np.diag([1.0, 1.0, d]) @ vt).T
    if allow_scale:
        scale = (s * [1.0, 1.0, d]).sum() / (pa**2).sum()
    else:
        scale = 1.0
    resid = scale * pa @ rot.T - pb
    return float(np.sqrt((resid**2).mean()))
