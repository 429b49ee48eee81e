"""Conformal parameterization onto canonical domains and alignment maps.

Disk-like meshes are mapped to the closed unit disk by a harmonic
(cotangent-Laplace) map with an arc-length circular boundary; closed
genus-0 meshes are mapped to the unit sphere by conformalized mean
curvature flow.  Alignment inside each domain is by Mobius
transformations: two landmarks on the disk, three on the sphere, or the
landmark-free centering that moves the area centroid to the sphere center.

The disk is packed into the square [-1, 1]^2 by the Schwarz-Christoffel
map ``w(z) ~ int_0^z dt / sqrt(1 - t^4)`` with the four points
``(+-1, +-i)`` sent to the square corners.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve

from .errors import ConvergenceError, FlipError
from .meshcore import TriMesh, cotan_laplacian

INF = complex(np.inf, 0.0)


class Parameterization:
    """Map of a mesh onto a canonical domain.

    Attributes
    ----------
    kind : str
        ``"disk"`` (points shape (V, 2), |p| <= 1) or ``"sphere"``
        (points shape (V, 3), unit norm).
    points : ndarray
        Mapped vertex positions, one per source mesh vertex.
    mesh : TriMesh
        The source mesh (connectivity is shared).
    """

    def __init__(self, kind, points, mesh):
        if kind not in ("disk", "sphere"):
            raise ValueError(f"unknown domain kind {kind!r}")
        self.kind = kind
        self.points = np.asarray(points, dtype=float)
        self.mesh = mesh

    def replace_points(self, points):
        return Parameterization(self.kind, points, self.mesh)

    def domain_mesh(self):
        """The parameter-domain mesh (source connectivity, mapped positions)."""
        pts = self.points
        if self.kind == "disk":
            pts = np.column_stack([pts, np.zeros(len(pts))])
        return TriMesh(pts, self.mesh.faces, landmarks=self.mesh.landmarks, check=False)

    def complex_points(self):
        if self.kind != "disk":
            raise ValueError("complex coordinates are only defined for disk domains")
        return self.points[:, 0] + 1j * self.points[:, 1]

    def quasi_conformal_distortion(self):
        """Per-face singular-value ratio of the source->domain map (>= 1)."""
        return _face_distortion(self.mesh, self.domain_mesh())


def _face_frames(mesh):
    p = mesh.positions[mesh.faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    n = np.cross(e1, e2)
    nn = np.linalg.norm(n, axis=1)
    nn = np.maximum(nn, 1e-300)
    n = n / nn[:, None]
    u = e1 / np.maximum(np.linalg.norm(e1, axis=1), 1e-300)[:, None]
    v = np.cross(n, u)
    # 2x2 edge matrix in the local frame
    m = np.empty((len(p), 2, 2))
    m[:, 0, 0] = np.einsum("ij,ij->i", e1, u)
    m[:, 1, 0] = np.einsum("ij,ij->i", e1, v)
    m[:, 0, 1] = np.einsum("ij,ij->i", e2, u)
    m[:, 1, 1] = np.einsum("ij,ij->i", e2, v)
    return m


def _face_distortion(mesh_from, mesh_to):
    a = _face_frames(mesh_from)
    b = _face_frames(mesh_to)
    jac = b @ np.linalg.inv(a)
    sv = np.linalg.svd(jac, compute_uv=False)
    return sv[:, 0] / np.maximum(sv[:, 1], 1e-300)


# ----------------------------------------------------------------------
# disk parameterization
# ----------------------------------------------------------------------


def disk_parameterize(mesh):
    """Harmonic map of a disk-topology mesh onto the closed unit disk.

    The boundary loop goes to the unit circle by arc length; interior
    vertices solve the cotangent-Laplace equation with that boundary held
    fixed.  The result is bijective (no flipped parameter triangles).

    Raises
    ------
    TopologyError
        If the mesh is not a disk (one boundary loop, chi = 1).
    FlipError
        If any parameter triangle comes out flipped.
    """
    mesh.require_disk_topology()
    loop = mesh.boundary_loops[0]
    pos = mesh.positions
    seg = np.linalg.norm(pos[np.roll(loop, -1)] - pos[loop], axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    angle = 2.0 * np.pi * s / seg.sum()
    bnd_xy = np.column_stack([np.cos(angle), np.sin(angle)])

    n = mesh.n_vertices
    L = cotan_laplacian(mesh)
    is_bnd = np.zeros(n, dtype=bool)
    is_bnd[loop] = True
    interior = np.where(~is_bnd)[0]
    xy = np.zeros((n, 2))
    xy[loop] = bnd_xy
    if interior.size:
        lii = L[interior][:, interior].tocsc()
        lib = L[interior][:, loop]
        rhs = -lib @ bnd_xy
        lu = splu(lii)
        xy[interior, 0] = lu.solve(rhs[:, 0])
        xy[interior, 1] = lu.solve(rhs[:, 1])

    f = mesh.faces
    q = xy[f]
    e1 = q[:, 1] - q[:, 0]
    e2 = q[:, 2] - q[:, 0]
    signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    flips = int(np.sum(signed <= 0))
    if flips:
        raise FlipError(f"{flips} flipped triangles in the disk parameterization", flips)
    # clamp tiny numerical excursions outside the closed disk
    r = np.linalg.norm(xy, axis=1)
    over = r > 1.0
    if np.any(r > 1.0 + 1e-9):
        raise FlipError("boundary mapping left the unit disk", 0)
    xy[over] /= r[over, None]
    return Parameterization("disk", xy, mesh)


# ----------------------------------------------------------------------
# sphere parameterization (conformalized mean curvature flow)
# ----------------------------------------------------------------------


def sphere_parameterize(
    mesh, step_factor=1e-2, radius_tol=1e-3, max_iter=500, stall_cap=0.05
):
    """Conformalized mean curvature flow onto the unit sphere.

    The cotangent stiffness matrix is fixed at the input mesh while the
    lumped vertex mass is updated every implicit step; after each step the
    mesh is re-centered and rescaled to surface area 4*pi.  The flow stops
    once ``max | |v| - 1 | < radius_tol`` or once the residual stagnates at
    its discretization floor (which scales like the squared mesh spacing),
    then the vertices are projected onto the sphere.  The reached residual
    is recorded as ``sphere_residual`` on the result.

    Parameters
    ----------
    step_factor : float
        Implicit time step relative to the total surface area.
    stall_cap : float
        A stagnated flow with residual above this raises
        :class:`ConvergenceError`.
    """
    mesh.require_sphere_topology()
    L = cotan_laplacian(mesh)
    pos = mesh.positions.copy()
    faces = mesh.faces
    pos = _center_scale(pos, faces)
    delta = step_factor * 4.0 * np.pi
    resid = np.inf
    history = []
    for _ in range(max_iter):
        m = _lumped_mass(pos, faces)
        a = sparse.diags(m) + delta * L
        rhs = m[:, None] * pos
        pos = spsolve(a.tocsc(), rhs)
        pos = _center_scale(pos, faces)
        r = np.linalg.norm(pos, axis=1)
        scale = 1.0 / np.sqrt((r**2 * m).sum() / m.sum())
        resid = np.abs(r * scale - 1.0).max()
        history.append(resid)
        if resid < radius_tol:
            break
        if len(history) > 15 and history[-15] < history[-1] * (1.0 + 1e-2):
            # reached the discretization floor of the flow
            if resid < stall_cap:
                break
            raise ConvergenceError(
                f"mean curvature flow stalled away from the sphere (residual {resid:.3e})",
                residual=resid,
            )
    else:
        raise ConvergenceError(
            f"mean curvature flow did not reach the sphere (residual {resid:.3e})",
            residual=resid,
        )
    pos /= np.linalg.norm(pos, axis=1)[:, None]
    _check_sphere_orientation(pos, faces)
    out = Parameterization("sphere", pos, mesh)
    out.sphere_residual = float(resid)
    return out


def _lumped_mass(pos, faces):
    p = pos[faces]
    areas = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    m = np.zeros(len(pos))
    np.add.at(m, faces.ravel(), np.repeat(areas / 3.0, 3))
    return np.maximum(m, 1e-300)


def _center_scale(pos, faces):
    p = pos[faces]
    areas = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    bary = p.mean(axis=1)
    centroid = (areas[:, None] * bary).sum(axis=0) / areas.sum()
    pos = pos - centroid
    return pos * np.sqrt(4.0 * np.pi / areas.sum())


def _check_sphere_orientation(pos, faces):
    p = pos[faces]
    det = np.einsum("ij,ij->i", np.cross(p[:, 0], p[:, 1]), p[:, 2])
    flips = int(np.sum(det <= 0))
    if flips:
        raise FlipError(f"{flips} flipped spherical triangles", flips)


# ----------------------------------------------------------------------
# Mobius transformations
# ----------------------------------------------------------------------


class MobiusTransform:
    """Complex Mobius map z -> (a z + b) / (c z + d) with ad - bc != 0."""

    def __init__(self, a, b, c, d):
        if abs(a * d - b * c) == 0.0:
            raise ValueError("degenerate Mobius coefficients (ad - bc = 0)")
        self.a, self.b, self.c, self.d = complex(a), complex(b), complex(c), complex(d)

    def normalized(self):
        s = np.sqrt(complex(self.a * self.d - self.b * self.c))
        return MobiusTransform(self.a / s, self.b / s, self.c / s, self.d / s)

    def inverse(self):
        return MobiusTransform(self.d, -self.b, -self.c, self.a)

    def compose(self, other):
        """The map ``self o other`` (apply ``other`` first)."""
        return MobiusTransform(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def apply(self, z):
        """Evaluate at complex points; the point at infinity is supported."""
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        out = np.empty_like(z)
        at_inf = np.isinf(z)
        num = self.a * z + self.b
        den = self.c * z + self.d
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        if self.c == 0:
            out[at_inf] = INF
        else:
            out[at_inf] = self.a / self.c
        pole = (~at_inf) & (np.abs(den) == 0.0)
        out[pole] = INF
        return out[0] if scalar else out


def _to_zero_one_inf(z1, z2, z3):
    if np.isinf(z1):
        return MobiusTransform(0.0, z2 - z3, -1.0, z3)
    if np.isinf(z2):
        return MobiusTransform(1.0, -z1, 1.0, -z3)
    if np.isinf(z3):
        return MobiusTransform(-1.0, z1, 0.0, z1 - z2)
    return MobiusTransform(z2 - z3, -z1 * (z2 - z3), z2 - z1, -z3 * (z2 - z1))


def mobius_from_3_points(z_triple, w_triple):
    """The unique Mobius transformation with z_k -> w_k (cross-ratio form).

    Either triple may contain the point at infinity (``complex(inf)``);
    points within a triple must be pairwise distinct.
    """
    z_triple = [complex(z) for z in z_triple]
    w_triple = [complex(w) for w in w_triple]
    for trip in (z_triple, w_triple):
        for i in range(3):
            for j in range(i + 1, 3):
                if trip[i] == trip[j]:
                    raise ValueError("Mobius interpolation points must be distinct")
    mz = _to_zero_one_inf(*z_triple)
    mw = _to_zero_one_inf(*w_triple)
    return mw.inverse().compose(mz).normalized()


def disk_automorphism(a, theta):
    """Disk automorphism f(z) = e^{i theta} (z - a) / (1 - conj(a) z)."""
    rot = np.exp(1j * theta)
    return MobiusTransform(rot, -rot * a, -np.conj(a), 1.0)


def disk_align(param, landmark_u, landmark_v):
    """Align a disk parameterization by two landmark vertices.

    Applies the unique disk automorphism with ``f(u) = 0`` and ``f(v)`` on
    the positive real axis.
    """
    if param.kind != "disk":
        raise ValueError("disk_align needs a disk parameterization")
    if landmark_u == landmark_v:
        raise ValueError("landmarks must be distinct vertices")
    z = param.complex_points()
    a = z[landmark_u]
    if abs(a) >= 1.0 - 1e-12:
        raise ValueError("first landmark must map strictly inside the disk")
    zv = (z[landmark_v] - a) / (1.0 - np.conj(a) * z[landmark_v])
    if abs(zv) == 0.0:
        raise ValueError("landmarks coincide in the parameter domain")
    theta = -np.angle(zv)
    w = disk_automorphism(a, theta).apply(z)
    pts = np.column_stack([w.real, w.imag])
    r = np.linalg.norm(pts, axis=1)
    over = r > 1.0
    pts[over] /= r[over, None]
    return param.replace_points(pts)


# ----------------------------------------------------------------------
# stereographic projection and sphere alignment
# ----------------------------------------------------------------------


def stereographic(p):
    """Project unit vectors to the complex plane from the north pole.

    ``(x, y, z) -> (x + i y) / (1 - z)``; the north pole (0, 0, 1) maps to
    the infinity sentinel and the south pole to 0.
    """
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    denom = 1.0 - p[:, 2]
    out = np.empty(len(p), dtype=complex)
    at_pole = np.abs(denom) < 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (p[:, 0] + 1j * p[:, 1]) / denom
    out[at_pole] = INF
    return out[0] if scalar else out


def stereographic_inverse(z):
    """Inverse stereographic projection back to the unit sphere."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty((len(z), 3))
    at_inf = np.isinf(z)
    zz = np.where(at_inf, 0.0, z)
    n2 = zz.real**2 + zz.imag**2
    out[:, 0] = 2.0 * zz.real / (1.0 + n2)
    out[:, 1] = 2.0 * zz.imag / (1.0 + n2)
    out[:, 2] = (n2 - 1.0) / (1.0 + n2)
    out[at_inf] = (0.0, 0.0, 1.0)
    return out[0] if scalar else out


_RETRY_ROTATIONS = (
    np.eye(3),
    # quarter turn about x, then an incommensurate angle about y
    np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
    np.array(
        [
            [np.cos(1.0), 0.0, np.sin(1.0)],
            [0.0, 1.0, 0.0],
            [-np.sin(1.0), 0.0, np.cos(1.0)],
        ]
    ),
)


def sphere_align_landmarks(param, p1, p2, p3):
    """Mobius-align a sphere parameterization by three landmark vertices.

    Stereographically projects, sends the landmark images to the canonical
    triple ``(0, 1, inf)`` (south pole, the equator point (1, 0, 0), north
    pole) and projects back.  If a landmark sits at the projection pole the
    sphere is pre-rotated and the rotation folded into the map.
    """
    if param.kind != "sphere":
        raise ValueError("sphere_align_landmarks needs a sphere parameterization")
    if len({p1, p2, p3}) != 3:
        raise ValueError("landmarks must be three distinct vertices")
    pts = param.points
    last_err = None
    for rot in _RETRY_ROTATIONS:
        rotated = pts @ rot.T
        zl = stereographic(rotated[[p1, p2, p3]])
        if np.any(np.isinf(zl)) or np.max(np.abs(zl)) > 1e9:
            last_err = "landmark at or near the projection pole"
            continue
        try:
            mob = mobius_from_3_points(zl, [0.0, 1.0, INF])
        except ValueError as exc:
            last_err = str(exc)
            continue
        w = mob.apply(stereographic(rotated))
        out = stereographic_inverse(w)
        out /= np.linalg.norm(out, axis=1)[:, None]
        return param.replace_points(out)
    raise ValueError(f"could not align landmarks: {last_err}")


def _sphere_inversion(points, c):
    d = points - c
    n2 = np.einsum("ij,ij->i", d, d)
    return (1.0 - np.dot(c, c)) * d / n2[:, None] - c


def mobius_center(param, tol=1e-8, max_iter=200):
    """Center a sphere parameterization so its area centroid is the origin.

    Damped fixed-point iteration over sphere inversions with step halving
    on overshoot.  The inversion center solves the linearized centroid
    equation ``2 (I - S) c = mu`` (``S`` the area-weighted second moment),
    which keeps the contraction fast even for strongly clustered inputs.
    """
    if param.kind != "sphere":
        raise ValueError("mobius_center needs a sphere parameterization")
    pts = param.points.copy()
    faces = param.mesh.faces

    def centroid(p):
        q = p[faces]
        areas = 0.5 * np.linalg.norm(np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]), axis=1)
        m = np.zeros(len(p))
        np.add.at(m, faces.ravel(), np.repeat(areas / 3.0, 3))
        return (m / m.sum()) @ p

    def pushed(p, c):
        out = _sphere_inversion(p, c)
        return out / np.linalg.norm(out, axis=1)[:, None]

    mu = centroid(pts)
    step = 1.0
    for _ in range(max_iter):
        norm_mu = np.linalg.norm(mu)
        if norm_mu < tol:
            return param.replace_points(pts)
        # finite-difference Jacobian of the centroid w.r.t. the inversion center
        eps = max(1e-7, 1e-3 * norm_mu)
        jac = np.empty((3, 3))
        for k in range(3):
            dc = np.zeros(3)
            dc[k] = eps
            jac[:, k] = (centroid(pushed(pts, dc)) - mu) / eps
        c = -np.linalg.solve(jac, mu)
        norm_c = np.linalg.norm(c)
        if norm_c > 0.5:
            c *= 0.5 / norm_c
        cand = pushed(pts, step * c)
        mu_new = centroid(cand)
        if np.linalg.norm(mu_new) < norm_mu:
            pts, mu = cand, mu_new
            step = min(1.0, step * 2.0)
        else:
            step *= 0.5
            if step < 1e-12:
                break
    raise ConvergenceError(
        f"Mobius centering stalled at centroid norm {np.linalg.norm(mu):.3e}",
        residual=float(np.linalg.norm(mu)),
    )


# ----------------------------------------------------------------------
# Schwarz-Christoffel disk <-> square
# ----------------------------------------------------------------------

_GAUSS_NODES, _GAUSS_WEIGHTS = leggauss(64)
# mapped from [-1, 1] to [0, 1]
_GU = 0.5 * (_GAUSS_NODES + 1.0)
_GW = 0.5 * _GAUSS_WEIGHTS


def _sc_primitive_radial(z):
    # substitution t = z (1 - u^2); adequate away from the prevertices
    s = 1.0 - _GU**2
    t = z[..., None] * s
    integrand = 2.0 * _GU * z[..., None] / np.sqrt(1.0 - t**4)
    return np.sum(_GW * integrand, axis=-1)


_PREVERTICES = np.array([1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j])


def _sc_primitive(z):
    """``int_0^z dt / sqrt(1 - t^4)`` for |z| <= 1 (vectorized).

    Away from the prevertices ``z^4 = 1`` the substitution
    ``t = z (1 - u^2)`` is used; near a prevertex ``z0`` the integral is
    taken from the corner, ``t = z0 - (z0 - z) v^2``, which resolves the
    square-root boundary layer exactly.
    """
    z = np.asarray(z, dtype=complex)
    flat = np.atleast_1d(z).ravel()
    out = np.empty(flat.shape, dtype=complex)
    dist = np.abs(flat[:, None] - _PREVERTICES)
    nearest = np.argmin(dist, axis=1)
    near = dist[np.arange(len(flat)), nearest] < 0.3
    if np.any(~near):
        out[~near] = _sc_primitive_radial(flat[~near])
    if np.any(near):
        z0 = _PREVERTICES[nearest[near]]
        delta = z0 - flat[near]
        # f(z0) = kappa * z0 by symmetry; kappa itself is evaluated radially
        kappa = _sc_primitive_radial(np.array(1.0 + 0.0j))
        hit = delta == 0.0
        safe = np.where(hit, 1.0, delta)
        t = z0[:, None] - safe[:, None] * _GU**2
        # 1 - t^4 = -prod_k (t - p_k); the factor at the active prevertex
        # is -delta u^2 exactly, which avoids cancellation for t ~ z0
        poly = -(-safe[:, None] * _GU**2)
        for k, p in enumerate(_PREVERTICES):
            other = nearest[near] != k
            fac = np.where(other[:, None], t - p, 1.0)
            poly = poly * fac
        integrand = 2.0 * safe[:, None] * _GU / np.sqrt(poly)
        corner_val = kappa * z0 - np.sum(_GW * integrand, axis=-1)
        out[near] = np.where(hit, kappa * z0, corner_val)
    return out.reshape(np.shape(z)) if np.ndim(z) else out[0]


@lru_cache(maxsize=1)
def lemniscate_constant():
    """``kappa = int_0^1 dt / sqrt(1 - t^4)`` (about 1.3110287771)."""
    return float(_sc_primitive(np.array(1.0 + 0j)).real)


_CORNER_FACTOR = 1.0 + 1.0j  # rotate/scale the diamond (+-kappa, +-i kappa) onto [-1,1]^2


def disk_to_square(p):
    """Schwarz-Christoffel map of the closed unit disk onto [-1, 1]^2.

    ``(cos k pi/2, sin k pi/2)`` go to the square corners; in particular
    ``z = 1`` maps to the corner (1, 1).
    """
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 0] + 1j * p[:, 1]
    w = _CORNER_FACTOR * _sc_primitive(z) / lemniscate_constant()
    out = np.column_stack([w.real, w.imag])
    return out[0] if scalar else out


def square_to_disk(w, tol=1e-12, max_iter=100):
    """Inverse of :func:`disk_to_square` by damped Newton iteration.

    Near the four corners the forward map behaves like a square root, so
    the iteration starts from the local inverse of that branch; elsewhere
    it starts from the near-linear central approximation.

    Raises
    ------
    ConvergenceError
        If Newton does not reach ``tol`` (can happen extremely close to the
        square corners); the error carries the worst residual.
    """
    w = np.asarray(w, dtype=float)
    scalar = w.ndim == 1
    w = np.atleast_2d(w)
    kappa = lemniscate_constant()
    target = kappa * (w[:, 0] + 1j * w[:, 1]) / _CORNER_FACTOR
    z = target / kappa  # the map is close to linear near the origin
    r = np.abs(z)
    z = np.where(r > 0.97, z / np.where(r > 0.97, r, 1.0) * 0.97, z)
    # corner-local start: f(z0) - f(z) ~ sqrt(z0 - z) / z0^(3/2)
    prevertices = np.array([1.0, 1.0j, -1.0, -1.0j])
    near = np.abs(target[:, None] - kappa * prevertices) < 0.25
    which = np.argmax(near, axis=1)
    is_near = near.any(axis=1)
    z0 = prevertices[which[is_near]]
    df = kappa * z0 - target[is_near]
    z[is_near] = z0 - z0**3 * df**2

    resid = np.full(len(z), np.inf)
    active = np.ones(len(z), dtype=bool)
    err_act = _sc_primitive(z) - target
    for _ in range(max_iter):
        resid[active] = np.abs(err_act)
        still = np.abs(err_act) >= tol * max(1.0, kappa)
        idx = np.where(active)[0][still]
        active[:] = False
        active[idx] = True
        if not idx.size:
            break
        err = err_act[still]
        zc = z[idx]
        step = err * np.sqrt(1.0 - zc**4)
        # damped update: halve the step while the residual grows
        new_err = np.empty_like(err)
        z_new = np.empty_like(zc)
        pending = np.ones(len(zc), dtype=bool)
        for _halving in range(5):
            cand = zc[pending] - step[pending]
            rn = np.abs(cand)
            cand = np.where(rn > 1.0, cand / rn, cand)
            cand_err = _sc_primitive(cand) - target[idx[pending]]
            better = np.abs(cand_err) <= np.abs(err[pending])
            sub = np.where(pending)[0]
            z_new[sub[better]] = cand[better]
            new_err[sub[better]] = cand_err[better]
            pending[sub[better]] = False
            if not pending.any():
                break
            step[pending] *= 0.5
        if pending.any():
            # accept the last candidate anyway to keep the iteration moving
            cand = zc[pending] - step[pending]
            rn = np.abs(cand)
            cand = np.where(rn > 1.0, cand / rn, cand)
            z_new[pending] = cand
            new_err[pending] = _sc_primitive(cand) - target[idx[pending]]
        z[idx] = z_new
        err_act = new_err
    if active.any():
        raise ConvergenceError(
            "square_to_disk Newton iteration stalled",
            residual=float(resid[active].max()),
        )
    out = np.column_stack([z.real, z.imag])
    return out[0] if scalar else out


def square_to_disk_jacobian(w):
    """Area stretch |dz/dw|^2 of the square->disk map at square points."""
    p = square_to_disk(w)
    p = np.atleast_2d(p)
    z = p[:, 0] + 1j * p[:, 1]
    kappa = lemniscate_constant()
    deriv = kappa * np.sqrt(1.0 - z**4) / _CORNER_FACTOR
    return np.abs(deriv) ** 2
