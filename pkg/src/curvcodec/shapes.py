"""Deterministic generator meshes used by the tests, docs and CLI demos."""

import numpy as np
from scipy.spatial import ConvexHull

from .meshcore import TriMesh


def tetrahedron():
    v = np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    ) / np.sqrt(3.0)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, f)


def cube(side=1.0, refine=0):
    """Axis-aligned cube of the given side, triangulated, outward oriented.

    ``refine`` applies that many 1-to-4 subdivisions of the 12 base faces
    (the surface stays a cube).
    """
    s = side / 2.0
    v = np.array(
        [
            [-s, -s, -s],
            [s, -s, -s],
            [s, s, -s],
            [-s, s, -s],
            [-s, -s, s],
            [s, -s, s],
            [s, s, s],
            [-s, s, s],
        ]
    )
    quads = [
        [0, 3, 2, 1],  # bottom (z = -s)
        [4, 5, 6, 7],  # top
        [0, 1, 5, 4],  # front (y = -s)
        [2, 3, 7, 6],  # back
        [1, 2, 6, 5],  # right (x = +s)
        [3, 0, 4, 7],  # left
    ]
    f = []
    for a, b, c, d in quads:
        f.append([a, b, c])
        f.append([a, c, d])
    mesh = TriMesh(v, np.array(f))
    for _ in range(refine):
        mesh = subdivide(mesh)
    return mesh


def icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0],
            [1, phi, 0],
            [-1, -phi, 0],
            [1, -phi, 0],
            [0, -1, phi],
            [0, 1, phi],
            [0, -1, -phi],
            [0, 1, -phi],
            [phi, 0, -1],
            [phi, 0, 1],
            [-phi, 0, -1],
            [-phi, 0, 1],
        ],
        dtype=float,
    )
    v /= np.linalg.norm(v[0])
    f = np.array(
        [
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ]
    )
    return TriMesh(v, f)


def subdivide(mesh):
    """One 1-to-4 split of every face (new vertices at edge midpoints)."""
    v = mesh.positions
    f = mesh.faces
    edges = mesh.edges
    mid_of = {}
    for e, (a, b) in enumerate(edges):
        mid_of[(min(a, b), max(a, b))] = len(v) + e
    mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    new_v = np.vstack([v, mids])
    new_f = []
    for a, b, c in f:
        ab = mid_of[(min(a, b), max(a, b))]
        bc = mid_of[(min(b, c), max(b, c))]
        ca = mid_of[(min(c, a), max(c, a))]
        new_f += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return TriMesh(new_v, np.array(new_f))


def icosphere(level):
    """Icosahedron subdivided ``level`` times, vertices on the unit sphere."""
    mesh = icosahedron()
    for _ in range(level):
        mesh = subdivide(mesh)
        pos = mesh.positions / np.linalg.norm(mesh.positions, axis=1)[:, None]
        mesh = TriMesh(pos, mesh.faces, check=False)
    return mesh


def fibonacci_sphere_mesh(n):
    """Convex-hull triangulation of ``n`` Fibonacci-lattice points on S^2."""
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    theta = golden * k
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    hull = ConvexHull(pts)
    faces = hull.simplices.copy()
    # orient every face outward
    p = pts[faces]
    n_vec = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", n_vec, p.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriMesh(pts, faces)


def bump_profile(points):
    """Smooth radial bump field in [about -1, 1] used by the bumpy spheres."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return np.sin(3.0 * x) * np.sin(2.0 * y) + 0.8 * np.cos(2.5 * z) * np.sin(1.5 * x)


def bumpy_sphere(level=4, amplitude=0.1):
    """Unit-ish sphere with a deterministic smooth radial perturbation."""
    base = icosphere(level)
    r = 1.0 + amplitude * bump_profile(base.positions)
    return TriMesh(base.positions * r[:, None], base.faces, check=False)


def bumpy_fibonacci_sphere(n, amplitude=0.1):
    base = fibonacci_sphere_mesh(n)
    r = 1.0 + amplitude * bump_profile(base.positions)
    return TriMesh(base.positions * r[:, None], base.faces, check=False)


def flat_disk(rings=10):
    """Unit disk in the z=0 plane, Delaunay-triangulated concentric rings."""
    from scipy.spatial import Delaunay

    pts = [(0.0, 0.0)]
    for r in range(1, rings + 1):
        n = 6 * r
        # stagger rings so the Delaunay has no cocircular ambiguities
        ang = 2.0 * np.pi * (np.arange(n) + 0.5 * (r % 2)) / n
        rad = r / rings
        pts += list(zip(rad * np.cos(ang), rad * np.sin(ang)))
    pts = np.array(pts)
    tri = Delaunay(pts)
    faces = tri.simplices.copy()
    p = pts[faces]
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    signed = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    faces[signed < 0] = faces[signed < 0][:, [0, 2, 1]]
    positions = np.column_stack([pts, np.zeros(len(pts))])
    return TriMesh(positions, faces)


def hemisphere(rings=10):
    """Upper unit hemisphere with one boundary loop (disk topology)."""
    disk = flat_disk(rings)
    x, y = disk.positions[:, 0], disk.positions[:, 1]
    z = np.sqrt(np.maximum(0.0, 1.0 - x * x - y * y))
    return TriMesh(np.column_stack([x, y, z]), disk.faces)


def annulus(n=24, r_inner=0.5, r_outer=1.0):
    """Flat annulus: two boundary loops, chi = 0."""
    ang = 2.0 * np.pi * np.arange(n) / n
    inner = np.column_stack([r_inner * np.cos(ang), r_inner * np.sin(ang), np.zeros(n)])
    outer = np.column_stack([r_outer * np.cos(ang), r_outer * np.sin(ang), np.zeros(n)])
    pos = np.vstack([inner, outer])
    faces = []
    for k in range(n):
        a, b = k, (k + 1) % n
        c, d = n + k, n + (k + 1) % n
        faces.append([a, d, c])
        faces.append([a, b, d])
    return TriMesh(pos, np.array(faces))


def torus(n_major=16, n_minor=8, r_major=1.0, r_minor=0.35):
    """Closed genus-1 mesh (chi = 0)."""
    pos = []
    for i in range(n_major):
        u = 2.0 * np.pi * i / n_major
        for j in range(n_minor):
            v = 2.0 * np.pi * j / n_minor
            w = r_major + r_minor * np.cos(v)
            pos.append([w * np.cos(u), w * np.sin(u), r_minor * np.sin(v)])
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            c = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriMesh(np.array(pos), np.array(faces))
