"""The curvature + density representation and its binary format.

A shape is encoded as a two-channel tensor on a canonical domain: channel 0
carries the face-based mean curvature half-density, channel 1 the
logarithmic vertex density of the conformal parameterization.  Spherical
domains are subdivided icosahedra with a square sample grid on the tangent
patch of every face (gnomonic projection); the disk domain is a square
grid over the image of the unit disk under the Schwarz-Christoffel map.

Interpolation in both directions is inverse-distance weighting over the K
nearest source points (chordal distance on the sphere, Euclidean in the
square); exact hits return the source value.
"""

import struct
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import confmap
from .errors import BadMagic, DegenerateFace, DimensionMismatch, DimOverflow, Truncated
from .shapes import icosphere

IDW_K = 8
IDW_POWER = 2.0
EXACT_HIT = 1e-12

_MAGIC = b"CBR1"
_VERSION = 1
_DOMAIN_CODES = {"disk": 0, "sphere": 1}
_DOMAIN_NAMES = {v: k for k, v in _DOMAIN_CODES.items()}
_FLAG_MASK = 1
_FLAG_AFFINE = 2
_MAX_DIM = 2**31 - 1


def idw_interpolate(source_points, source_values, query_points, k=IDW_K, power=IDW_POWER):
    """Inverse-distance-weighted interpolation over the K nearest sources.

    Weights are ``1 / d^power``; a query within ``EXACT_HIT`` of a source
    returns that source value, and weights always sum to one, so constants
    are reproduced exactly and outputs stay within the source value range.
    """
    source_points = np.asarray(source_points, dtype=float)
    source_values = np.asarray(source_values, dtype=float)
    query_points = np.asarray(query_points, dtype=float)
    k = min(k, len(source_points))
    tree = cKDTree(source_points)
    dist, idx = tree.query(query_points, k=k)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    hit = dist[:, 0] < EXACT_HIT
    with np.errstate(divide="ignore"):
        w = 1.0 / np.maximum(dist, EXACT_HIT) ** power
    w /= w.sum(axis=1, keepdims=True)
    out = np.einsum("qk,qk->q", w, source_values[idx])
    out[hit] = source_values[idx[hit, 0]]
    return out


class SphericalDomain:
    """Subdivided icosahedron with a tangent-patch sample grid per face.

    Every face gets an orthonormal tangent frame at its (normalized)
    barycenter and a ``grid x grid`` lattice on the patch
    ``[-l, l]^2``, mapped to the sphere by central (gnomonic) projection.
    The half-width ``l`` is the smallest value for which the projection of
    every face lies inside its patch (plus a small margin).
    """

    def __init__(self, subdivisions=2, grid=32):
        if subdivisions < 0 or grid < 2:
            raise ValueError("need subdivisions >= 0 and grid >= 2")
        self.subdivisions = subdivisions
        self.grid = grid
        self.base_mesh = icosphere(subdivisions)
        pos = self.base_mesh.positions
        faces = self.base_mesh.faces
        centers = pos[faces].mean(axis=1)
        centers /= np.linalg.norm(centers, axis=1)[:, None]
        self.centers = centers
        t1 = pos[faces[:, 0]] - centers * np.einsum(
            "ij,ij->i", pos[faces[:, 0]], centers
        )[:, None]
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        self.tan1 = t1
        self.tan2 = np.cross(centers, t1)
        # gnomonic image of the face corners in the tangent frame
        corners = pos[faces]  # (F, 3, 3)
        dots = np.einsum("fkj,fj->fk", corners, centers)
        proj = corners / dots[..., None] - centers[:, None, :]
        u = np.einsum("fkj,fj->fk", proj, t1)
        v = np.einsum("fkj,fj->fk", proj, self.tan2)
        self.half_width = float(np.max(np.abs(np.stack([u, v])))) * (1.0 + 1e-6)

    @property
    def n_faces(self):
        return self.base_mesh.n_faces

    @cached_property
    def grid_points(self):
        """All sample points on the sphere, shape (F, grid, grid, 3)."""
        g = self.grid
        ticks = np.linspace(-self.half_width, self.half_width, g)
        uu, vv = np.meshgrid(ticks, ticks, indexing="ij")
        pts = (
            self.centers[:, None, None, :]
            + uu[None, :, :, None] * self.tan1[:, None, None, :]
            + vv[None, :, :, None] * self.tan2[:, None, None, :]
        )
        pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
        return pts

    @cached_property
    def spherical_face_areas(self):
        """Exact spherical triangle areas of the domain faces (sum = 4 pi)."""
        p = self.base_mesh.positions[self.base_mesh.faces]
        return _spherical_triangle_areas(p[:, 0], p[:, 1], p[:, 2])

    @cached_property
    def _center_tree(self):
        return cKDTree(self.centers)

    @cached_property
    def _face_grid_trees(self):
        pts = self.grid_points.reshape(self.n_faces, -1, 3)
        return [cKDTree(pts[f]) for f in range(self.n_faces)]

    def locate(self, points):
        """Index of the domain face containing each unit query point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(8, self.n_faces)
        _, cand = self._center_tree.query(points, k=k)
        cand = np.atleast_2d(cand)
        pos = self.base_mesh.positions
        faces = self.base_mesh.faces
        tri = pos[faces[cand]]  # (Q, k, 3, 3)
        # signed containment: min over the three edge planes of the cone
        edge_norm = np.cross(tri, np.roll(tri, -1, axis=2))
        sides = np.einsum("qkej,qj->qke", edge_norm, points)
        score = sides.min(axis=2)
        best = np.argmax(score, axis=1)
        return cand[np.arange(len(points)), best]


def _spherical_triangle_areas(a, b, c):
    # L'Huilier's theorem on the arc lengths
    def arc(u, v):
        return 2.0 * np.arcsin(np.clip(0.5 * np.linalg.norm(u - v, axis=-1), -1.0, 1.0))

    la, lb, lc = arc(b, c), arc(c, a), arc(a, b)
    s = 0.5 * (la + lb + lc)
    t = (
        np.tan(0.5 * s)
        * np.tan(0.5 * (s - la))
        * np.tan(0.5 * (s - lb))
        * np.tan(0.5 * (s - lc))
    )
    return 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))


class DiskDomain:
    """Square-grid domain for disk-like shapes (Schwarz-Christoffel packed)."""

    def __init__(self, grid=256):
        if grid < 2:
            raise ValueError("need grid >= 2")
        self.grid = grid

    @cached_property
    def grid_points(self):
        ticks = np.linspace(-1.0, 1.0, self.grid)
        uu, vv = np.meshgrid(ticks, ticks, indexing="ij")
        return np.stack([uu, vv], axis=-1)

    @cached_property
    def _grid_tree(self):
        return cKDTree(self.grid_points.reshape(-1, 2))


class CurvatureTensor:
    """Two-channel curvature representation on a canonical domain grid.

    ``data`` has shape (F, g, g, 2) for spheres and (N, N, 2) for disks;
    channel 0 is the mean curvature half-density, channel 1 the log vertex
    density.  Values are kept in float64 in memory and stored as float32 on
    disk.
    """

    def __init__(self, kind, data, mask=None, affine=None):
        if kind not in _DOMAIN_CODES:
            raise ValueError(f"unknown domain kind {kind!r}")
        data = np.asarray(data, dtype=float)
        if kind == "sphere":
            if data.ndim != 4 or data.shape[1] != data.shape[2] or data.shape[3] != 2:
                raise ValueError("sphere tensors need shape (F, g, g, 2)")
        else:
            if data.ndim != 3 or data.shape[0] != data.shape[1] or data.shape[2] != 2:
                raise ValueError("disk tensors need shape (N, N, 2)")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor data must be finite")
        self.kind = kind
        self.data = data
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != data.shape[:-1]:
                raise ValueError("mask must have one entry per grid sample")
        self.mask = mask
        self.affine = None if affine is None else np.asarray(affine, dtype=float)

    @property
    def dims(self):
        return self.data.shape

    @cached_property
    def domain(self):
        """The canonical domain reconstructed from the tensor dimensions."""
        if self.kind == "disk":
            return DiskDomain(self.data.shape[0])
        n_faces = self.data.shape[0]
        subdivisions = 0
        while 20 * 4**subdivisions < n_faces:
            subdivisions += 1
        if 20 * 4**subdivisions != n_faces:
            raise ValueError(f"{n_faces} faces is not a subdivided icosahedron")
        return SphericalDomain(subdivisions, self.data.shape[1])

    def channel(self, c):
        return self.data[..., c]

    def decode(self, points, k=IDW_K, power=IDW_POWER):
        """Sample (h, log density) at points of the domain.

        Sphere queries are located in their containing face and
        interpolated from that face's grid samples only; disk queries are
        mapped through the Schwarz-Christoffel map and interpolated from
        the global square grid.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(points), 2))
        if self.kind == "sphere":
            dom = self.domain
            face_of = dom.locate(points)
            flat_vals = self.data.reshape(dom.n_faces, -1, 2)
            flat_pts = dom.grid_points.reshape(dom.n_faces, -1, 3)
            for f in np.unique(face_of):
                sel = face_of == f
                kk = min(k, flat_pts.shape[1])
                dist, idx = dom._face_grid_trees[f].query(points[sel], k=kk)
                dist = np.atleast_2d(dist)
                idx = np.atleast_2d(idx)
                hit = dist[:, 0] < EXACT_HIT
                with np.errstate(divide="ignore"):
                    w = 1.0 / np.maximum(dist, EXACT_HIT) ** power
                w /= w.sum(axis=1, keepdims=True)
                vals = flat_vals[f][idx]  # (q, k, 2)
                res = np.einsum("qk,qkc->qc", w, vals)
                res[hit] = flat_vals[f][idx[hit, 0]]
                out[sel] = res
        else:
            square = confmap.disk_to_square(points)
            dom = self.domain
            kk = min(k, dom.grid**2)
            dist, idx = dom._grid_tree.query(square, k=kk)
            dist = np.atleast_2d(dist)
            idx = np.atleast_2d(idx)
            hit = dist[:, 0] < EXACT_HIT
            with np.errstate(divide="ignore"):
                w = 1.0 / np.maximum(dist, EXACT_HIT) ** power
            w /= w.sum(axis=1, keepdims=True)
            flat_vals = self.data.reshape(-1, 2)
            res = np.einsum("qk,qkc->qc", w, flat_vals[idx])
            res[hit] = flat_vals[idx[hit, 0]]
            out[:] = res
        return out


def build_sphere_domain(subdivisions=2, grid=32):
    """Spherical canonical domain with ``20 * 4^subdivisions`` faces."""
    return SphericalDomain(subdivisions, grid)


def extract_density(param):
    """Log vertex density of a parameterization, ``log(1 / A~_i)``.

    ``A~_i`` is the barycentric vertex area of the parameter-domain mesh,
    so ``sum_i exp(value_i) * A~_i`` equals the vertex count.
    """
    areas = param.domain_mesh().vertex_areas
    if np.any(areas <= 0.0):
        raise DegenerateFace("parameter domain has a zero vertex area")
    return -np.log(areas)


def encode(mesh, param, domain, k=IDW_K, power=IDW_POWER):
    """Sample the (h, log density) channels of a shape onto a domain grid.

    Channel 0 interpolates the face-based half-density of ``mesh`` located
    at the parameter positions of the face barycenters; channel 1
    interpolates the log vertex density located at the parameter vertex
    positions.
    """
    if param.mesh is not mesh and param.mesh.n_faces != mesh.n_faces:
        raise ValueError("parameterization does not belong to the mesh")
    h = mesh.mean_curvature_half_density()
    logd = extract_density(param)
    if isinstance(domain, SphericalDomain):
        if param.kind != "sphere":
            raise ValueError("domain kind does not match the parameterization")
        bary = param.points[mesh.faces].mean(axis=1)
        bary /= np.linalg.norm(bary, axis=1)[:, None]
        grid_pts = domain.grid_points.reshape(-1, 3)
        ch0 = idw_interpolate(bary, h, grid_pts, k, power)
        ch1 = idw_interpolate(param.points, logd, grid_pts, k, power)
        g = domain.grid
        data = np.stack([ch0, ch1], axis=-1).reshape(domain.n_faces, g, g, 2)
        return CurvatureTensor("sphere", data)
    if isinstance(domain, DiskDomain):
        if param.kind != "disk":
            raise ValueError("domain kind does not match the parameterization")
        sq_verts = confmap.disk_to_square(param.points)
        bary = param.points[mesh.faces].mean(axis=1)
        sq_bary = confmap.disk_to_square(bary)
        grid_pts = domain.grid_points.reshape(-1, 2)
        ch0 = idw_interpolate(sq_bary, h, grid_pts, k, power)
        ch1 = idw_interpolate(sq_verts, logd, grid_pts, k, power)
        n = domain.grid
        data = np.stack([ch0, ch1], axis=-1).reshape(n, n, 2)
        return CurvatureTensor("disk", data)
    raise TypeError("domain must be a SphericalDomain or DiskDomain")


def decode_sample(tensor, points, k=IDW_K, power=IDW_POWER):
    """Sample (h, log density) from a tensor at domain points."""
    return tensor.decode(points, k, power)


def lerp(tensor_a, tensor_b, t):
    """Elementwise linear interpolation ``(1 - t) A + t B``."""
    if tensor_a.kind != tensor_b.kind or tensor_a.dims != tensor_b.dims:
        raise DimensionMismatch(
            f"cannot interpolate {tensor_a.kind}{tensor_a.dims} with "
            f"{tensor_b.kind}{tensor_b.dims}"
        )
    data = (1.0 - t) * tensor_a.data + t * tensor_b.data
    return CurvatureTensor(tensor_a.kind, data, mask=tensor_a.mask)


def scale_density(tensor, m):
    """Density rescaling: log density += log m, h *= 1/sqrt(m).

    Reconstruction from the scaled tensor yields a remeshing with about
    ``m`` times the original vertex count while preserving the shape.
    """
    if m <= 0.0:
        raise ValueError("density factor must be positive")
    data = tensor.data.copy()
    data[..., 0] /= np.sqrt(m)
    data[..., 1] += np.log(m)
    return CurvatureTensor(tensor.kind, data, mask=tensor.mask)


# ----------------------------------------------------------------------
# .cbr binary format
# ----------------------------------------------------------------------


def write_cbr(tensor, path):
    """Write the little-endian ``.cbr`` container.

    Layout: magic ``CBR1``, u32 version=1, u32 domain (0=disk, 1=sphere),
    u32 rank, u32 dims[rank], u32 flags (bit0: mask bitset follows the
    payload, bit1: a 4 x f32 per-channel affine block ``(scale0, offset0,
    scale1, offset1)`` precedes the payload), payload float32 row-major.
    """
    dims = tensor.dims
    flags = 0
    if tensor.mask is not None:
        flags |= _FLAG_MASK
    if tensor.affine is not None:
        flags |= _FLAG_AFFINE
    parts = [
        _MAGIC,
        struct.pack("<III", _VERSION, _DOMAIN_CODES[tensor.kind], len(dims)),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<I", flags),
    ]
    data = tensor.data
    if tensor.affine is not None:
        s0, o0, s1, o1 = tensor.affine
        data = data.copy()
        data[..., 0] = data[..., 0] * s0 + o0
        data[..., 1] = data[..., 1] * s1 + o1
        parts.append(struct.pack("<4f", s0, o0, s1, o1))
    parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    if tensor.mask is not None:
        parts.append(np.packbits(tensor.mask.reshape(-1)).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_cbr(path):
    """Read a ``.cbr`` file back into a :class:`CurvatureTensor`.

    Affine-scaled payloads are mapped back to raw channel values; the
    affine parameters stay available on the tensor.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise BadMagic(f"{path}: not a CBR file")
    off = 4

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise Truncated(f"{path}: header ends prematurely")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    version, domain_code, rank = take("<III")
    if version != _VERSION:
        raise BadMagic(f"{path}: unsupported CBR version {version}")
    if domain_code not in _DOMAIN_NAMES:
        raise BadMagic(f"{path}: unknown domain code {domain_code}")
    if rank > 8:
        raise DimOverflow(f"{path}: rank {rank} is not supported")
    dims = take(f"<{rank}I")
    if any(d > _MAX_DIM for d in dims) or int(np.prod(dims, dtype=np.int64)) > 2**33:
        raise DimOverflow(f"{path}: dims {dims} overflow the supported range")
    (flags,) = take("<I")
    affine = None
    if flags & _FLAG_AFFINE:
        affine = np.array(take("<4f"))
    count = int(np.prod(dims, dtype=np.int64))
    payload_bytes = 4 * count
    if off + payload_bytes > len(blob):
        raise Truncated(f"{path}: payload shorter than dims promise")
    data = (
        np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        .astype(float)
        .reshape(dims)
    )
    off += payload_bytes
    mask = None
    if flags & _FLAG_MASK:
        n_samples = count // dims[-1]
        mask_bytes = (n_samples + 7) // 8
        if off + mask_bytes > len(blob):
            raise Truncated(f"{path}: mask bitset truncated")
        mask = np.unpackbits(
            np.frombuffer(blob, dtype=np.uint8, count=mask_bytes, offset=off),
            count=n_samples,
        ).astype(bool).reshape(dims[:-1])
    if affine is not None:
        s0, o0, s1, o1 = affine
        data[..., 0] = (data[..., 0] - o0) / s0
        data[..., 1] = (data[..., 1] - o1) / s1
    kind = _DOMAIN_NAMES[domain_code]
    return CurvatureTensor(kind, data, mask=mask, affine=affine)
