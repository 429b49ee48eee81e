"""Density-driven isotropic remeshing of the canonical domains.

Reconstruction of a parameter-domain mesh from a density function: sample
points proportionally to the density, relax them into a weighted centroidal
Voronoi tessellation by Lloyd iteration, and read the triangulation off as
the Delaunay dual.  Spherical diagrams come from the convex hull of the
sites; on the disk, sites close to the unit circle are mirrored by circle
inversion so that every original cell is bounded, and cells are clipped to
the disk.

All randomness is drawn from an explicit seed; there is no global RNG.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError, Voronoi

from . import confmap
from .errors import ConvergenceError, TopologyError
from .meshcore import TriMesh
from .shapecodec import DiskDomain, SphericalDomain

# arcs on the unit circle are flattened at this angular resolution, which
# keeps polygonal cell areas within ~1e-7 of the true clipped areas
ARC_STEP = 1e-3


@dataclass
class VoronoiDiagram:
    """Voronoi cells of a point set on the sphere or in the unit disk.

    ``cells[i]`` is the ordered vertex polygon of site ``i`` (rows are 2D
    points for the disk, unit 3-vectors for the sphere); ``adjacency``
    holds site index pairs whose cells share an edge.
    """

    kind: str
    sites: np.ndarray
    cells: list
    adjacency: np.ndarray
    _dual_faces: np.ndarray = field(default=None, repr=False)
    _aug_points: np.ndarray = field(default=None, repr=False)
    _n_original: int = 0

    def cell_areas(self):
        if self.kind == "sphere":
            return np.array([_spherical_polygon_area(c) for c in self.cells])
        return np.array([_polygon_area(c) for c in self.cells])


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _spherical_polygon_area(poly):
    """Area of a spherical polygon via the fan of L'Huilier excesses."""
    if len(poly) < 3:
        return 0.0
    a = poly[0]
    b = poly[1:-1]
    c = poly[2:]

    def arc(u, v):
        d = np.linalg.norm(u - v, axis=-1)
        return 2.0 * np.arcsin(np.clip(0.5 * d, -1.0, 1.0))

    la = arc(b, c)
    lb = arc(c, a)
    lc = arc(a, b)
    s = 0.5 * (la + lb + lc)
    t = (
        np.tan(0.5 * s)
        * np.tan(0.5 * (s - la))
        * np.tan(0.5 * (s - lb))
        * np.tan(0.5 * (s - lc))
    )
    return float(np.sum(4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))))


# ----------------------------------------------------------------------
# point sampling
# ----------------------------------------------------------------------


def sample_points(domain, density, seed):
    """Draw points in the domain with count proportional to the density.

    Per domain face (sphere) or grid cell (disk) the expected count is the
    density sampled at the center times the region area; the fractional
    part is resolved by a Bernoulli draw (stochastic rounding), and points
    are placed uniformly within the region.

    Parameters
    ----------
    density : CurvatureTensor
        Log density is read from channel 1.
    seed : int
        Explicit RNG seed; identical seeds give identical point sets.
    """
    rng = np.random.default_rng(seed)
    if isinstance(domain, SphericalDomain):
        dens = np.exp(density.decode(domain.centers)[:, 1])
        if np.any(~np.isfinite(dens)) or np.any(dens <= 0.0):
            raise ValueError("density must be positive and finite")
        expect = dens * domain.spherical_face_areas
        counts = np.floor(expect).astype(int)
        counts += rng.random(len(expect)) < (expect - counts)
        tri = domain.base_mesh.positions[domain.base_mesh.faces]
        pts = _uniform_in_triangles(tri, counts, rng)
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        return pts
    if isinstance(domain, DiskDomain):
        n = domain.grid
        step = 2.0 / n
        ticks = -1.0 + step * (np.arange(n) + 0.5)
        uu, vv = np.meshgrid(ticks, ticks, indexing="ij")
        centers = np.stack([uu, vv], axis=-1).reshape(-1, 2)
        dens = np.exp(_decode_square(density, centers)[:, 1])
        if np.any(~np.isfinite(dens)) or np.any(dens <= 0.0):
            raise ValueError("density must be positive and finite")
        jac = confmap.square_to_disk_jacobian(centers)
        expect = dens * jac * step * step
        counts = np.floor(expect).astype(int)
        counts += rng.random(len(expect)) < (expect - counts)
        square_pts = np.repeat(centers, counts, axis=0) + rng.uniform(
            -0.5 * step, 0.5 * step, size=(int(counts.sum()), 2)
        )
        pts = confmap.square_to_disk(square_pts)
        r = np.linalg.norm(pts, axis=1)
        cap = 1.0 - 1e-9
        over = r > cap
        pts[over] *= (cap / r[over])[:, None]
        return pts
    raise TypeError("domain must be a SphericalDomain or DiskDomain")


def _decode_square(tensor, square_points):
    """Decode a disk tensor directly at square coordinates."""
    dom = tensor.domain
    k = min(8, dom.grid**2)
    dist, idx = dom._grid_tree.query(square_points, k=k)
    with np.errstate(divide="ignore"):
        w = 1.0 / np.maximum(dist, 1e-12) ** 2
    w /= w.sum(axis=1, keepdims=True)
    flat = tensor.data.reshape(-1, 2)
    out = np.einsum("qk,qkc->qc", w, flat[idx])
    hit = dist[:, 0] < 1e-12
    out[hit] = flat[idx[hit, 0]]
    return out


def _uniform_in_triangles(tri, counts, rng):
    total = int(counts.sum())
    face_of = np.repeat(np.arange(len(tri)), counts)
    r1 = np.sqrt(rng.random(total))
    r2 = rng.random(total)
    a, b, c = tri[face_of, 0], tri[face_of, 1], tri[face_of, 2]
    return (1.0 - r1)[:, None] * a + (r1 * (1.0 - r2))[:, None] * b + (r1 * r2)[:, None] * c


# ----------------------------------------------------------------------
# weighted centroids (linear density over a fan triangulation)
# ----------------------------------------------------------------------


def weighted_centroid(polygon, densities):
    """Density-weighted centroid of a polygon with vertex densities.

    The polygon is fan-triangulated from its first vertex; each triangle
    contributes its weighted area ``mean(d) * A`` and the closed-form
    centroid of a linearly interpolated density,
    ``((2 d1 + d2 + d3) v1 + (d1 + 2 d2 + d3) v2 + (d1 + d2 + 2 d3) v3)
    / (4 (d1 + d2 + d3))``.
    """
    polygon = np.asarray(polygon, dtype=float)
    densities = np.asarray(densities, dtype=float)
    if len(polygon) < 3:
        raise ValueError("polygon needs at least three vertices")
    v1 = polygon[0]
    v2 = polygon[1:-1]
    v3 = polygon[2:]
    d1 = densities[0]
    d2 = densities[1:-1]
    d3 = densities[2:]
    if polygon.shape[1] == 2:
        e1 = v2 - v1
        e2 = v3 - v1
        areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    else:
        areas = 0.5 * np.linalg.norm(np.cross(v2 - v1, v3 - v1), axis=1)
    dsum = d1 + d2 + d3
    cents = (
        (2.0 * d1 + d2 + d3)[..., None] * v1
        + (d1 + 2.0 * d2 + d3)[:, None] * v2
        + (d1 + d2 + 2.0 * d3)[:, None] * v3
    ) / (4.0 * dsum)[:, None]
    weighted = dsum / 3.0 * areas
    total = weighted.sum()
    if not np.isfinite(total) or abs(total) < 1e-300:
        raise ValueError("polygon has zero weighted area")
    return (weighted[:, None] * cents).sum(axis=0) / total


# ----------------------------------------------------------------------
# Voronoi diagrams
# ----------------------------------------------------------------------


def voronoi_sphere(points):
    """Spherical Voronoi diagram via the convex hull of the sites.

    Cell vertices are the normalized circumcenters of the hull (Delaunay)
    triangles, ordered counter-clockwise around each site; the cells tile
    the sphere.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 4:
        raise ValueError("need at least 4 points on the sphere")
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise ValueError(f"degenerate point set (hull failed: {exc})") from exc
    simplices = hull.simplices.copy()
    tri = points[simplices]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", normals, tri.mean(axis=1)) < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    tri = points[simplices]
    cc = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    cc /= np.linalg.norm(cc, axis=1)[:, None]

    # incident simplices per site, ordered by angle in the tangent plane
    incident = [[] for _ in range(len(points))]
    for s, (i, j, k) in enumerate(simplices):
        incident[i].append(s)
        incident[j].append(s)
        incident[k].append(s)
    cells = []
    for v in range(len(points)):
        ids = incident[v]
        if not ids:
            raise ValueError(f"site {v} is not a hull vertex (degenerate input)")
        centers = cc[ids]
        p = points[v]
        ref = centers[0] - p * np.dot(centers[0], p)
        nref = np.linalg.norm(ref)
        if nref < 1e-12:
            ref = np.array([1.0, 0.0, 0.0]) - p * p[0]
            nref = np.linalg.norm(ref)
        ref /= nref
        ref2 = np.cross(p, ref)
        ang = np.arctan2(centers @ ref2, centers @ ref)
        order = np.argsort(ang)
        cells.append(centers[order])
    edges = set()
    for i, j, k in simplices:
        edges.add((min(i, j), max(i, j)))
        edges.add((min(j, k), max(j, k)))
        edges.add((min(k, i), max(k, i)))
    return VoronoiDiagram(
        kind="sphere",
        sites=points,
        cells=cells,
        adjacency=np.array(sorted(edges)),
        _dual_faces=simplices,
        _n_original=len(points),
    )


def default_mirror_margin(n_points):
    """Mirror every site within ``2 sqrt(pi / n)`` of the unit circle."""
    return 2.0 * np.sqrt(np.pi / max(n_points, 1))


def voronoi_disk_constrained(points, epsilon=None):
    """Voronoi diagram of disk sites, bounded by mirrored boundary sites.

    Sites with ``|p| > 1 - epsilon`` are augmented with their circle
    inversions ``p / |p|^2``; the planar Voronoi diagram of the union is
    computed and only the cells of the original sites are returned,
    clipped to the unit disk (circular arcs are finely polygonized).
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 1:
        raise ValueError("need at least one site")
    r = np.linalg.norm(points, axis=1)
    if np.any(r >= 1.0):
        raise ValueError("sites must lie in the open unit disk")
    if epsilon is None:
        epsilon = default_mirror_margin(len(points))
    near = r > 1.0 - epsilon
    mirrors = points[near] / (r[near] ** 2)[:, None]
    aug = np.vstack([points, mirrors]) if len(mirrors) else points.copy()
    n_orig = len(points)
    cells = []
    polys = [None] * n_orig
    if len(aug) >= 4:
        try:
            vor = Voronoi(aug)
            polys = _finite_polygons(vor, n_orig)
        except QhullError:
            pass  # degenerate (e.g. collinear) input: bisector fallback below
    for i in range(n_orig):
        poly = polys[i]
        if poly is None:
            cells.append(_clip_to_disk(_far_box(points[i], aug), points[i]))
        else:
            cells.append(_clip_to_disk(poly, points[i]))
    adjacency = _disk_adjacency(aug, n_orig)
    return VoronoiDiagram(
        kind="disk",
        sites=points,
        cells=cells,
        adjacency=adjacency,
        _aug_points=aug,
        _n_original=n_orig,
    )


def _far_box(site, aug):
    """Fallback cell for tiny site counts: a box clipped by the bisectors."""
    poly = np.array([[-4.0, -4.0], [4.0, -4.0], [4.0, 4.0], [-4.0, 4.0]])
    for q in aug:
        if np.allclose(q, site):
            continue
        mid = 0.5 * (site + q)
        n = q - site
        poly = _clip_halfplane(poly, mid, n)
        if len(poly) == 0:
            break
    return poly


def _clip_halfplane(poly, origin, outward):
    """Clip a polygon to the half-plane ``<x - origin, outward> <= 0``."""
    if len(poly) == 0:
        return poly
    d = (poly - origin) @ outward
    keep = d <= 0.0
    out = []
    m = len(poly)
    for k in range(m):
        k2 = (k + 1) % m
        if keep[k]:
            out.append(poly[k])
        if keep[k] != keep[k2]:
            t = d[k] / (d[k] - d[k2])
            out.append(poly[k] + t * (poly[k2] - poly[k]))
    return np.array(out) if out else np.zeros((0, 2))


def _finite_polygons(vor, n_orig):
    """Ordered, bounded polygons for the first ``n_orig`` Voronoi sites.

    Unbounded regions are closed off by extending their infinite ridges
    well past the unit disk (the caller clips to the disk anyway).
    """
    center = vor.points.mean(axis=0)
    radius = 8.0 + 2.0 * np.abs(vor.points).max()
    ridge_dir = {}
    for (p1, p2), (v1, v2) in zip(vor.ridge_points, vor.ridge_vertices):
        if v1 >= 0 and v2 >= 0:
            continue
        finite = max(v1, v2)
        t = vor.points[p2] - vor.points[p1]
        t /= np.linalg.norm(t)
        normal = np.array([-t[1], t[0]])
        mid = 0.5 * (vor.points[p1] + vor.points[p2])
        direction = np.sign(np.dot(mid - center, normal)) * normal
        far = vor.vertices[finite] + direction * radius
        ridge_dir.setdefault(p1, []).append((finite, far))
        ridge_dir.setdefault(p2, []).append((finite, far))
    polys = []
    for i in range(n_orig):
        region = vor.regions[vor.point_region[i]]
        if -1 not in region:
            polys.append(vor.vertices[np.array(region)])
            continue
        verts = [vor.vertices[v] for v in region if v >= 0]
        verts += [far for _, far in ridge_dir.get(i, [])]
        verts = np.array(verts)
        # order around the site
        ang = np.arctan2(verts[:, 1] - vor.points[i, 1], verts[:, 0] - vor.points[i, 0])
        polys.append(verts[np.argsort(ang)])
    return polys


def _clip_to_disk(poly, site):
    """Intersect a convex polygon with the unit disk.

    The boundary of the intersection alternates polygon chords and circle
    arcs; arcs are polygonized at :data:`ARC_STEP` radians.
    """
    if len(poly) == 0:
        return poly
    # ensure counter-clockwise orientation
    if _polygon_area(poly) < 0:
        poly = poly[::-1]
    out = []
    m = len(poly)
    inside = np.linalg.norm(poly, axis=1) <= 1.0
    if inside.all():
        return poly
    events = []  # (point, entering_flag) on the circle, in traversal order
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        if inside[k]:
            out.append(("v", poly[k]))
        hits = _segment_circle(a, b)
        for t, pt in hits:
            going_in = np.dot(b - a, pt) < 0.0
            out.append(("c", pt, going_in))
    if not out:
        # no vertices inside and no crossings: either disjoint or the
        # polygon contains the whole disk
        if _point_in_polygon(np.zeros(2), poly):
            ang = np.arange(0.0, 2.0 * np.pi, ARC_STEP)
            return np.column_stack([np.cos(ang), np.sin(ang)])
        return np.zeros((0, 2))
    # walk the event list, inserting arcs between an exit and the next entry
    pts = []
    n_ev = len(out)
    for k in range(n_ev):
        ev = out[k]
        if ev[0] == "v":
            pts.append(ev[1])
            continue
        pt, going_in = ev[1], ev[2]
        pts.append(pt)
        if not going_in:
            # find the next entry event (cyclically) and insert the arc
            for j in range(1, n_ev + 1):
                nxt = out[(k + j) % n_ev]
                if nxt[0] == "c" and nxt[2]:
                    a0 = np.arctan2(pt[1], pt[0])
                    a1 = np.arctan2(nxt[1][1], nxt[1][0])
                    sweep = (a1 - a0) % (2.0 * np.pi)
                    steps = int(sweep / ARC_STEP)
                    if steps > 1:
                        angs = a0 + sweep * np.arange(1, steps) / steps
                        pts.extend(np.column_stack([np.cos(angs), np.sin(angs)]))
                    break
    return np.array(pts)


def _segment_circle(a, b):
    """Intersections of segment a->b with the unit circle, ordered by t."""
    d = b - a
    aa = np.dot(d, d)
    bb = 2.0 * np.dot(a, d)
    cc = np.dot(a, a) - 1.0
    disc = bb * bb - 4.0 * aa * cc
    if disc <= 0.0 or aa == 0.0:
        return []
    sq = np.sqrt(disc)
    hits = []
    for t in ((-bb - sq) / (2.0 * aa), (-bb + sq) / (2.0 * aa)):
        if 1e-12 < t < 1.0 - 1e-12:
            hits.append((t, a + t * d))
    hits.sort(key=lambda h: h[0])
    return hits


def _point_in_polygon(p, poly):
    d = poly - p
    ang = np.arctan2(d[:, 1], d[:, 0])
    dd = np.diff(np.concatenate([ang, ang[:1]]))
    dd = (dd + np.pi) % (2.0 * np.pi) - np.pi
    return abs(dd.sum()) > np.pi


def _disk_adjacency(aug, n_orig):
    if len(aug) < 4:
        return np.zeros((0, 2), dtype=int)
    try:
        tri = Delaunay(aug)
    except QhullError:
        return np.zeros((0, 2), dtype=int)
    edges = set()
    for simplex in tri.simplices:
        for e in ((0, 1), (1, 2), (2, 0)):
            i, j = simplex[e[0]], simplex[e[1]]
            if i < n_orig and j < n_orig:
                edges.add((min(i, j), max(i, j)))
    return np.array(sorted(edges)) if edges else np.zeros((0, 2), dtype=int)


# ----------------------------------------------------------------------
# Lloyd relaxation
# ----------------------------------------------------------------------


@dataclass
class LloydReport:
    """Convergence record of a Lloyd run."""

    displacements: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    n_points: int = 0
    converged: bool = False


def lloyd_relax(
    points,
    density,
    domain,
    max_iter=100,
    tol=None,
    seed=0,
    record_energy=False,
):
    """Weighted Lloyd relaxation toward a centroidal Voronoi tessellation.

    Every iteration rebuilds the Voronoi diagram, moves each site to the
    density-weighted centroid of its cell (normalized back to the sphere in
    the spherical case; centroids falling outside the disk drop their site
    in the disk case) and stops when the largest site displacement falls
    under ``tol`` (default ``1e-4`` of the domain diameter).

    Returns the relaxed points and a :class:`LloydReport`.
    """
    pts = np.asarray(points, dtype=float).copy()
    sphere = isinstance(domain, SphericalDomain)
    if tol is None:
        tol = 1e-4 * 2.0
    report = LloydReport(n_points=len(pts))
    rng = np.random.default_rng(seed)
    for _ in range(max_iter):
        diagram = _build_diagram(pts, sphere, rng)
        if record_energy:
            report.energies.append(cvt_energy(diagram, density))
        keep = [i for i, c in enumerate(diagram.cells) if len(c) >= 3]
        all_verts = np.concatenate([diagram.cells[i] for i in keep])
        offsets = np.cumsum([0] + [len(diagram.cells[i]) for i in keep])
        dens_all = np.exp(_decode_domain(density, all_verts, sphere)[:, 1])
        new_pts = []
        for pos, i in enumerate(keep):
            cell = diagram.cells[i]
            dens = dens_all[offsets[pos] : offsets[pos + 1]]
            c = weighted_centroid(cell, dens)
            if sphere:
                c = c / np.linalg.norm(c)
            elif np.linalg.norm(c) >= 1.0:
                continue  # outside the disk: drop the site
            new_pts.append((i, c))
        if not new_pts:
            raise ConvergenceError("all sites were removed during relaxation")
        idx = np.array([i for i, _ in new_pts])
        moved = np.array([c for _, c in new_pts])
        disp = float(np.linalg.norm(moved - pts[idx], axis=1).max())
        report.displacements.append(disp)
        pts = moved
        report.n_points = len(pts)
        if disp < tol:
            report.converged = True
            break
    return pts, report


def _build_diagram(pts, sphere, rng):
    for attempt in range(2):
        try:
            if sphere:
                return voronoi_sphere(pts)
            return voronoi_disk_constrained(pts)
        except (QhullError, ValueError):
            if attempt == 1:
                raise
            # deterministic jitter keyed to the caller's seeded RNG
            scale = 1e-10
            pts = pts + rng.normal(scale=scale, size=pts.shape)
            if sphere:
                pts /= np.linalg.norm(pts, axis=1)[:, None]
    raise RuntimeError("unreachable")


def _decode_domain(density, pts, sphere):
    if sphere:
        q = pts / np.linalg.norm(pts, axis=1)[:, None]
        return density.decode(q)
    # disk polygons may touch the circle; clamp for the SC map
    r = np.linalg.norm(pts, axis=1)
    q = np.where((r > 1.0)[:, None], pts / np.maximum(r, 1.0)[:, None], pts)
    return density.decode(q)


def cvt_energy(diagram, density, subdiv=1):
    """CVT energy ``sum_i int_{V_i} d(y) |y - v_i|^2 dy`` (quadrature).

    Cells are fan-triangulated; spherical fans are subdivided ``subdiv``
    times with re-projection onto the sphere, and every triangle uses the
    degree-2 midpoint rule with the density decoded at the quadrature
    points.
    """
    sphere = diagram.kind == "sphere"
    tris = []
    owners = []
    for i, cell in enumerate(diagram.cells):
        if len(cell) < 3:
            continue
        v1 = np.broadcast_to(cell[0], (len(cell) - 2, cell.shape[1]))
        tris.append(np.stack([v1, cell[1:-1], cell[2:]], axis=1))
        owners.append(np.full(len(cell) - 2, i))
    tris = np.concatenate(tris, axis=0)
    owners = np.concatenate(owners)
    if sphere:
        for _ in range(subdiv):
            tris, owners = _subdivide_spherical(tris, owners)
    mids = 0.5 * (tris + np.roll(tris, -1, axis=1))  # edge midpoints
    if sphere:
        areas = 0.5 * np.linalg.norm(
            np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1
        )
        qp = mids / np.linalg.norm(mids, axis=2, keepdims=True)
    else:
        e1 = tris[:, 1] - tris[:, 0]
        e2 = tris[:, 2] - tris[:, 0]
        areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        qp = mids
    flat = qp.reshape(-1, qp.shape[2])
    dens = np.exp(_decode_domain(density, flat, sphere)[:, 1]).reshape(len(tris), 3)
    d2 = np.sum((qp - diagram.sites[owners][:, None, :]) ** 2, axis=2)
    contrib = areas / 3.0 * np.sum(dens * d2, axis=1)
    return float(contrib.sum())


def _subdivide_spherical(tris, owners):
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab = 0.5 * (a + b)
    bc = 0.5 * (b + c)
    ca = 0.5 * (c + a)
    for m in (ab, bc, ca):
        m /= np.linalg.norm(m, axis=1)[:, None]
    out = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([b, bc, ab], axis=1),
            np.stack([c, ca, bc], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ]
    )
    return out, np.tile(owners, 4)


# ----------------------------------------------------------------------
# Delaunay dual extraction
# ----------------------------------------------------------------------


def delaunay_dual(diagram):
    """Triangulation dual to a Voronoi diagram.

    Vertices are the sites; triangles correspond to Voronoi vertices where
    three cells meet.  Spherical diagrams give a closed genus-0 mesh; disk
    diagrams give a disk mesh whose boundary approximates the circle.
    """
    if diagram.kind == "sphere":
        faces = diagram._dual_faces
        mesh = TriMesh(diagram.sites, faces)
        if not (mesh.is_closed and mesh.euler_characteristic == 2):
            raise TopologyError("spherical dual is not a closed genus-0 mesh")
        return mesh
    aug = diagram._aug_points
    n_orig = diagram._n_original
    tri = Delaunay(aug)
    keep = np.all(tri.simplices < n_orig, axis=1)
    faces = tri.simplices[keep]
    p = aug[faces]
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    signed = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    faces[signed < 0] = faces[signed < 0][:, [0, 2, 1]]
    used = np.unique(faces)
    remap = -np.ones(n_orig, dtype=int)
    remap[used] = np.arange(len(used))
    positions = np.column_stack([diagram.sites[used], np.zeros(len(used))])
    mesh = TriMesh(positions, remap[faces])
    mesh.require_disk_topology()
    return mesh
