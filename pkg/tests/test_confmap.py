import numpy as np
import pytest
from scipy.special import gamma

from curvcodec import confmap as cm, meshcore as mc, shapes
from curvcodec.errors import TopologyError


# ----------------------------------------------------------------------
# disk parameterization
# ----------------------------------------------------------------------


def test_flat_disk_is_fixed_point():
    disk = shapes.flat_disk(8)
    par = cm.disk_parameterize(disk)
    # identity up to rotation: radii preserved, distortion ~ 1
    r_in = np.linalg.norm(disk.positions[:, :2], axis=1)
    r_out = np.linalg.norm(par.points, axis=1)
    assert np.abs(r_in - r_out).max() < 1e-9
    assert par.quasi_conformal_distortion().max() < 1.0 + 1e-6


def test_hemisphere_disk_param():
    hemi = shapes.hemisphere(10)
    par = cm.disk_parameterize(hemi)
    assert np.linalg.norm(par.points, axis=1).max() <= 1.0 + 1e-9
    # bijective: no flipped parameter triangles (checked inside; re-check)
    q = par.points[hemi.faces]
    u = q[:, 1] - q[:, 0]
    v = q[:, 2] - q[:, 0]
    assert (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0] > 0).all()


def test_annulus_rejected():
    with pytest.raises(TopologyError):
        cm.disk_parameterize(shapes.annulus())


def test_sphere_input_rejected_for_disk():
    with pytest.raises(TopologyError):
        cm.disk_parameterize(shapes.icosphere(1))


# ----------------------------------------------------------------------
# sphere parameterization
# ----------------------------------------------------------------------


def test_sphere_param_of_sphere_is_near_identity(icospheres):
    par = cm.sphere_parameterize(icospheres[3])
    assert np.abs(np.linalg.norm(par.points, axis=1) - 1.0).max() < 1e-12
    # the flow's discretization floor bounds the distortion at this resolution
    assert par.quasi_conformal_distortion().max() < 1.0 + 5e-3


def test_sphere_param_cube():
    par = cm.sphere_parameterize(shapes.cube(refine=3))
    d = par.quasi_conformal_distortion()
    assert np.isfinite(d).all()
    # no flipped spherical triangles
    p = par.points[par.mesh.faces]
    det = np.einsum("ij,ij->i", np.cross(p[:, 0], p[:, 1]), p[:, 2])
    assert (det > 0).all()


def test_sphere_param_willmore_near_sphere(bumpy3):
    par = cm.sphere_parameterize(bumpy3)
    w = mc.willmore(par.domain_mesh())
    assert abs(w - 4 * np.pi) < 0.05 * 4 * np.pi


def test_torus_rejected():
    with pytest.raises(TopologyError):
        cm.sphere_parameterize(shapes.torus())


# ----------------------------------------------------------------------
# Mobius maps
# ----------------------------------------------------------------------


def test_mobius_identity_triple():
    m = cm.mobius_from_3_points([0.0, 1.0, cm.INF], [0.0, 1.0, cm.INF])
    rng = np.random.default_rng(0)
    z = rng.normal(size=20) + 1j * rng.normal(size=20)
    assert np.abs(m.apply(z) - z).max() < 1e-12


def test_mobius_cyclic_example():
    # (0, 1, inf) -> (1, inf, 0) is z -> 1 / (1 - z), solved by hand
    m = cm.mobius_from_3_points([0.0, 1.0, cm.INF], [1.0, cm.INF, 0.0])
    rng = np.random.default_rng(1)
    z = rng.normal(size=20) + 1j * rng.normal(size=20)
    assert np.abs(m.apply(z) - 1.0 / (1.0 - z)).max() < 1e-10


def test_mobius_any_triple_to_itself():
    rng = np.random.default_rng(2)
    for _ in range(20):
        z = rng.normal(size=3) + 1j * rng.normal(size=3)
        m = cm.mobius_from_3_points(z, z)
        assert np.abs(m.apply(z) - z).max() < 1e-12


def test_mobius_maps_points_randomized():
    rng = np.random.default_rng(3)
    for _ in range(100):
        z = rng.normal(size=3) + 1j * rng.normal(size=3)
        w = rng.normal(size=3) + 1j * rng.normal(size=3)
        m = cm.mobius_from_3_points(z, w)
        assert np.abs(m.apply(z) - w).max() < 1e-9 * max(1.0, np.abs(w).max())


def test_mobius_repeated_points_rejected():
    with pytest.raises(ValueError):
        cm.mobius_from_3_points([0.0, 0.0, 1.0], [0.0, 1.0, 2.0])


def test_disk_align_basic(bumpy3):
    hemi = shapes.hemisphere(10)
    par = cm.disk_parameterize(hemi)
    rng = np.random.default_rng(4)
    interior = np.where(np.linalg.norm(par.points, axis=1) < 0.9)[0]
    for _ in range(20):
        u, v = rng.choice(interior, 2, replace=False)
        al = cm.disk_align(par, u, v)
        zu = al.points[u, 0] + 1j * al.points[u, 1]
        zv = al.points[v, 0] + 1j * al.points[v, 1]
        assert abs(zu) < 1e-12
        assert abs(zv.imag) < 1e-12 and zv.real >= 0


def test_disk_align_identity_when_aligned():
    hemi = shapes.hemisphere(8)
    par = cm.disk_parameterize(hemi)
    center = int(np.argmin(np.linalg.norm(par.points, axis=1)))
    boundary = hemi.boundary_loops[0][0]
    al1 = cm.disk_align(par, center, boundary)
    al2 = cm.disk_align(al1, center, boundary)
    # second alignment with the same landmarks differs by identity
    assert np.abs(al1.points - al2.points).max() < 1e-10


def test_disk_align_coincident_rejected():
    hemi = shapes.hemisphere(6)
    par = cm.disk_parameterize(hemi)
    with pytest.raises(ValueError):
        cm.disk_align(par, 3, 3)


# ----------------------------------------------------------------------
# stereographic projection and sphere alignment
# ----------------------------------------------------------------------


def test_stereographic_landmarks():
    assert cm.stereographic(np.array([0.0, 0.0, -1.0])) == 0.0
    assert cm.stereographic(np.array([1.0, 0.0, 0.0])) == 1.0
    assert np.isinf(cm.stereographic(np.array([0.0, 0.0, 1.0])))


def test_stereographic_roundtrip():
    rng = np.random.default_rng(5)
    p = rng.normal(size=(1000, 3))
    p /= np.linalg.norm(p, axis=1)[:, None]
    back = cm.stereographic_inverse(cm.stereographic(p))
    assert np.abs(back - p).max() < 1e-12


def test_sphere_align_landmarks_randomized(icospheres):
    par = cm.sphere_parameterize(icospheres[2])
    rng = np.random.default_rng(6)
    for _ in range(100):
        lmk = rng.choice(par.mesh.n_vertices, size=3, replace=False)
        al = cm.sphere_align_landmarks(par, *lmk)
        p1, p2, p3 = al.points[lmk]
        assert np.linalg.norm(p1 - [0, 0, -1]) < 1e-9
        assert np.linalg.norm(p2 - [1, 0, 0]) < 1e-9
        assert np.linalg.norm(p3 - [0, 0, 1]) < 1e-9
        assert np.abs(np.linalg.norm(al.points, axis=1) - 1.0).max() < 1e-9


def test_sphere_align_unique(icospheres):
    par = cm.sphere_parameterize(icospheres[2])
    a = cm.sphere_align_landmarks(par, 5, 80, 140)
    b = cm.sphere_align_landmarks(par, 5, 80, 140)
    assert np.abs(a.points - b.points).max() == 0.0


def test_sphere_align_near_identity_preserves_distortion(icospheres):
    # landmarks already at the canonical targets: the Mobius map is the
    # identity and the per-face distortion is untouched
    par = cm.sphere_parameterize(icospheres[2])
    pts = par.points
    lmk = [
        int(np.argmin(pts[:, 2])),                      # ~ south pole
        int(np.argmax(pts[:, 0] - np.abs(pts[:, 2]))),  # ~ (1, 0, 0)
        int(np.argmax(pts[:, 2])),                      # ~ north pole
    ]
    al = cm.sphere_align_landmarks(par, *lmk)
    before = par.quasi_conformal_distortion()
    after = al.quasi_conformal_distortion()
    assert np.abs(after - before).max() < 1e-4


def test_sphere_align_distortion_change_vanishes_under_refinement():
    # a fixed generic Mobius map changes per-face distortion only by the
    # variation of its conformal factor across a face, which shrinks with
    # the mesh size
    changes = []
    for level in (1, 2, 3):
        mesh = shapes.icosphere(level)
        par = cm.sphere_parameterize(mesh)
        pts = cm._sphere_inversion(par.points, np.array([0.3, 0.1, -0.2]))
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        moved = par.replace_points(pts)
        changes.append(
            np.abs(
                moved.quasi_conformal_distortion() - par.quasi_conformal_distortion()
            ).max()
        )
    assert changes[2] < changes[1] < changes[0]


def test_sphere_align_agrees_across_parameterizations(icospheres):
    # two parameterizations of one mesh differing by a Mobius map align to
    # identical positions once the same three landmarks are pinned (the
    # aligning transform is unique)
    par_a = cm.sphere_parameterize(icospheres[2])
    pushed = cm._sphere_inversion(par_a.points, np.array([0.25, -0.15, 0.3]))
    pushed /= np.linalg.norm(pushed, axis=1)[:, None]
    par_b = par_a.replace_points(pushed)
    lmk = (7, 61, 130)
    al_a = cm.sphere_align_landmarks(par_a, *lmk)
    al_b = cm.sphere_align_landmarks(par_b, *lmk)
    assert np.abs(al_a.points - al_b.points).max() < 1e-9


def test_mobius_center(icospheres):
    par = cm.sphere_parameterize(icospheres[3])
    pts = cm._sphere_inversion(par.points, np.array([0.0, -0.6, 0.55]))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    cen = cm.mobius_center(par.replace_points(pts))
    m = cen.domain_mesh()
    mu = (m.vertex_areas[:, None] * cen.points).sum(axis=0) / m.vertex_areas.sum()
    assert np.linalg.norm(mu) < 1e-8
    again = cm.mobius_center(cen)
    assert np.abs(again.points - cen.points).max() < 1e-7


# ----------------------------------------------------------------------
# Schwarz-Christoffel disk <-> square
# ----------------------------------------------------------------------


def test_lemniscate_constant_two_ways():
    # independent check: kappa = Gamma(1/4)^2 / (4 sqrt(2 pi))
    closed_form = gamma(0.25) ** 2 / (4.0 * np.sqrt(2.0 * np.pi))
    assert abs(cm.lemniscate_constant() - closed_form) < 1e-10
    assert abs(cm.lemniscate_constant() - 1.3110287771) < 1e-9

    # second quadrature scheme: adaptive integration of the raw integrand
    from scipy.integrate import quad

    val, _err = quad(lambda t: 1.0 / np.sqrt(1.0 - t**4), 0.0, 1.0)
    assert abs(cm.lemniscate_constant() - val) < 1e-9


def test_sc_center_and_corners():
    assert np.allclose(cm.disk_to_square(np.array([0.0, 0.0])), [0.0, 0.0])
    assert np.allclose(cm.disk_to_square(np.array([1.0, 0.0])), [1.0, 1.0], atol=1e-12)
    assert np.allclose(cm.disk_to_square(np.array([0.0, 1.0])), [-1.0, 1.0], atol=1e-12)


def test_sc_roundtrip_away_from_corners():
    rng = np.random.default_rng(7)
    ang = rng.uniform(0, 2 * np.pi, 1000)
    rad = np.sqrt(rng.uniform(0, 1, 1000)) * 0.999
    pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    back = cm.square_to_disk(cm.disk_to_square(pts))
    assert np.abs(back - pts).max() < 1e-9


def test_sc_square_grid_invertible():
    g = np.linspace(-1.0, 1.0, 64)
    w = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    z = cm.square_to_disk(w)
    assert np.linalg.norm(z, axis=1).max() <= 1.0 + 1e-12
    assert np.abs(cm.disk_to_square(z) - w).max() < 1e-9


def test_sc_area_integral():
    # integral of |dz/dw|^2 over the square is the disk area pi
    g = np.linspace(-1.0, 1.0, 129)
    gc = 0.5 * (g[:-1] + g[1:])
    w = np.stack(np.meshgrid(gc, gc, indexing="ij"), axis=-1).reshape(-1, 2)
    total = cm.square_to_disk_jacobian(w).sum() * (2.0 / 128) ** 2
    assert abs(total - np.pi) < 1e-3
