"""Triangle mesh storage, I/O and per-element geometric quantities.

The :class:`TriMesh` is the carrier of all geometry in the package: an
indexed, consistently oriented triangle mesh with optional landmark vertex
indices.  Meshes are treated as immutable after construction; all derived
quantities are cached lazily.

Edge bookkeeping convention: every undirected edge is stored once, in the
direction it is traversed by its *owner* face (the incident face with the
smaller index, or the single incident face on the boundary).  Signed
dihedral angles, integrated mean curvature and the Dirac assembly in
:mod:`curvcodec.spinrec` all use this orientation.
"""

from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import (
    BoundaryEdge,
    ConnectivityMismatch,
    DegenerateFace,
    EmptyPointSet,
    FoldedEdge,
    NonManifold,
    ParseError,
    TopologyError,
)

# bending angles closer to pi than this are treated as knife edges
FOLD_TOL = 1e-7


class TriMesh:
    """Indexed triangle mesh with consistent orientation.

    Parameters
    ----------
    positions : array_like (V, 3)
        Vertex coordinates.
    faces : array_like (F, 3)
        Ordered vertex-index triples; all faces oriented consistently
        (counter-clockwise seen from the outward normal side).
    landmarks : sequence of int, optional
        Distinguished vertex indices used for alignment.
    check : bool
        Validate indices and the oriented-manifold invariant (default).
    """

    def __init__(self, positions, faces, landmarks=None, check=True):
        self.positions = np.ascontiguousarray(positions, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.landmarks = None if landmarks is None else list(landmarks)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must have shape (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must have shape (F, 3)")
        if check:
            self._validate()

    # ------------------------------------------------------------------
    # validation and topology
    # ------------------------------------------------------------------

    def _validate(self):
        f = self.faces
        if f.size and (f.min() < 0 or f.max() >= len(self.positions)):
            raise ValueError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])):
            raise ValueError("face references a vertex twice")
        # building the edge tables runs the manifold/orientation checks
        self.edges

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def n_faces(self):
        return len(self.faces)

    @cached_property
    def halfedges(self):
        """Directed edges (3F, 2); row ``3*f + k`` is slot ``k`` of face ``f``."""
        f = self.faces
        return f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)

    @cached_property
    def _edge_tables(self):
        he = self.halfedges
        he_face = np.repeat(np.arange(self.n_faces), 3)
        key = np.sort(he, axis=1)
        uniq, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            e = uniq[np.argmax(counts > 2)]
            raise NonManifold(f"edge ({e[0]}, {e[1]}) is shared by more than two faces")
        n_edges = len(uniq)
        order = np.argsort(inverse, kind="stable")
        first = np.searchsorted(inverse[order], np.arange(n_edges))
        he_a = order[first]
        he_b = np.full(n_edges, -1)
        second_mask = counts == 2
        he_b[second_mask] = order[first[second_mask] + 1]
        # interior edges must be traversed in opposite directions
        both = np.where(second_mask)[0]
        if both.size:
            same = np.all(he[he_a[both]] == he[he_b[both]], axis=1)
            if np.any(same):
                e = he[he_a[both[np.argmax(same)]]]
                raise NonManifold(
                    f"edge ({e[0]}, {e[1]}) is traversed twice in the same direction"
                )
        # owner = incident face with the smaller index
        fa = he_face[he_a]
        fb = np.where(he_b >= 0, he_face[np.maximum(he_b, 0)], -1)
        swap = (fb >= 0) & (fb < fa)
        owner_he = np.where(swap, he_b, he_a)
        other_he = np.where(swap, he_a, he_b)
        edges = he[owner_he]
        edge_faces = np.stack(
            [he_face[owner_he], np.where(other_he >= 0, he_face[np.maximum(other_he, 0)], -1)],
            axis=1,
        )
        # per-face slot -> edge id and traversal sign
        face_edge = np.empty(3 * self.n_faces, dtype=np.int64)
        face_edge[order] = inverse[order]
        face_edge = face_edge.reshape(-1, 3)
        sign = np.where(np.all(self.halfedges.reshape(-1, 3, 2) == edges[face_edge], axis=2), 1, -1)
        return edges, edge_faces, face_edge, sign

    @cached_property
    def edges(self):
        """Undirected edges (E, 2), oriented as traversed by the owner face."""
        return self._edge_tables[0]

    @cached_property
    def edge_faces(self):
        """(E, 2) incident faces per edge; column 1 is -1 on the boundary."""
        return self._edge_tables[1]

    @cached_property
    def face_edges(self):
        """(F, 3) edge index for each face slot (slot k joins vertices k, k+1)."""
        return self._edge_tables[2]

    @cached_property
    def face_edge_signs(self):
        """(F, 3) +1 where the face traverses the stored edge direction."""
        return self._edge_tables[3]

    @cached_property
    def boundary_edge_mask(self):
        return self.edge_faces[:, 1] < 0

    @property
    def is_closed(self):
        return not bool(self.boundary_edge_mask.any())

    @cached_property
    def euler_characteristic(self):
        return self.n_vertices - len(self.edges) + self.n_faces

    @cached_property
    def boundary_loops(self):
        """Boundary vertex loops, each following the surface orientation."""
        be = self.edges[self.boundary_edge_mask]
        if not len(be):
            return []
        nxt = dict(zip(be[:, 0].tolist(), be[:, 1].tolist()))
        if len(nxt) != len(be):
            raise NonManifold("boundary touches itself at a vertex")
        loops = []
        seen = set()
        for start in nxt:
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start]
            while cur != start:
                if cur in seen or cur not in nxt:
                    raise NonManifold("boundary is not a collection of simple loops")
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur]
            loops.append(loop)
        return loops

    def require_sphere_topology(self):
        if not (self.is_closed and self.euler_characteristic == 2):
            raise TopologyError(
                "expected a closed genus-0 mesh "
                f"(closed={self.is_closed}, chi={self.euler_characteristic})"
            )

    def require_disk_topology(self):
        if self.is_closed or len(self.boundary_loops) != 1 or self.euler_characteristic != 1:
            raise TopologyError(
                "expected a disk mesh with one boundary loop "
                f"(loops={len(self.boundary_loops)}, chi={self.euler_characteristic})"
            )

    def edge_index(self, a, b):
        """Edge id for the vertex pair (a, b), in either order."""
        match = np.where(
            ((self.edges[:, 0] == a) & (self.edges[:, 1] == b))
            | ((self.edges[:, 0] == b) & (self.edges[:, 1] == a))
        )[0]
        if not match.size:
            raise KeyError(f"no edge between vertices {a} and {b}")
        return int(match[0])

    # ------------------------------------------------------------------
    # per-element geometry
    # ------------------------------------------------------------------

    @cached_property
    def _face_cross(self):
        p = self.positions[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self._face_cross, axis=1)

    @cached_property
    def _degenerate_tol(self):
        amax = self.face_areas.max(initial=0.0)
        return 1e-14 * amax

    def _require_face(self, i):
        if not 0 <= i < self.n_faces:
            raise IndexError(f"face index {i} out of range")

    def face_area(self, i):
        """Area of face ``i`` (raises :class:`DegenerateFace` when ~0)."""
        self._require_face(i)
        a = self.face_areas[i]
        if a <= self._degenerate_tol:
            raise DegenerateFace(f"face {i} has zero area")
        return float(a)

    @cached_property
    def face_normals(self):
        areas = self.face_areas
        bad = np.where(areas <= self._degenerate_tol)[0]
        if bad.size:
            raise DegenerateFace(f"face {bad[0]} has zero area")
        return self._face_cross / (2.0 * areas[:, None])

    def face_normal(self, i):
        self._require_face(i)
        return self.face_normals[i]

    @cached_property
    def face_barycenters(self):
        return self.positions[self.faces].mean(axis=1)

    @cached_property
    def vertex_areas(self):
        """Barycentric-lumped vertex areas (one third of incident faces)."""
        va = np.zeros(self.n_vertices)
        np.add.at(va, self.faces.ravel(), np.repeat(self.face_areas / 3.0, 3))
        return va

    def vertex_area(self, v):
        if not 0 <= v < self.n_vertices:
            raise IndexError(f"vertex index {v} out of range")
        return float(self.vertex_areas[v])

    @cached_property
    def edge_vectors(self):
        """(E, 3) edge vectors in the stored (owner-face) direction."""
        return self.positions[self.edges[:, 1]] - self.positions[self.edges[:, 0]]

    @cached_property
    def edge_lengths(self):
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def dihedral_angles(self):
        """Signed bending angle per edge in (-pi, pi); NaN on the boundary.

        The magnitude is the angle between the two face normals; the sign is
        ``sign(<n_i x n_j, e_ij>)`` with ``e_ij`` oriented as traversed by
        the owner face ``i``, so a convex bend of an outward-oriented mesh
        is positive.
        """
        out = np.full(len(self.edges), np.nan)
        interior = ~self.boundary_edge_mask
        fi = self.edge_faces[interior, 0]
        fj = self.edge_faces[interior, 1]
        ni = self.face_normals[fi]
        nj = self.face_normals[fj]
        e = self.edge_vectors[interior]
        e = e / np.linalg.norm(e, axis=1)[:, None]
        sin_part = np.einsum("ij,ij->i", np.cross(ni, nj), e)
        cos_part = np.einsum("ij,ij->i", ni, nj)
        out[interior] = np.arctan2(sin_part, cos_part)
        return out

    def dihedral_angle(self, edge):
        a = self.dihedral_angles[edge]
        if np.isnan(a):
            raise BoundaryEdge(f"edge {edge} lies on the boundary")
        return float(a)

    @cached_property
    def edge_mean_curvatures(self):
        """Integrated mean curvature H_ij = |e| tan(theta/2)/2 per edge.

        Boundary edges contribute zero.  Raises :class:`FoldedEdge` when a
        bending angle is within ``FOLD_TOL`` of pi.
        """
        theta = self.dihedral_angles
        interior = ~self.boundary_edge_mask
        if np.any(np.abs(theta[interior]) > np.pi - FOLD_TOL):
            e = int(np.where(interior & (np.abs(theta) > np.pi - FOLD_TOL))[0][0])
            raise FoldedEdge(f"edge {e} is folded (|theta| ~ pi)")
        out = np.zeros(len(self.edges))
        out[interior] = 0.5 * self.edge_lengths[interior] * np.tan(0.5 * theta[interior])
        return out

    def integrated_mean_curvature(self, edge):
        if self.boundary_edge_mask[edge]:
            raise BoundaryEdge(f"edge {edge} lies on the boundary")
        return float(self.edge_mean_curvatures[edge])

    def dual_edge_length(self, edge):
        """Distance between the barycenters of the two incident faces."""
        fi, fj = self.edge_faces[edge]
        if fj < 0:
            raise BoundaryEdge(f"edge {edge} lies on the boundary")
        return float(
            np.linalg.norm(self.face_barycenters[fi] - self.face_barycenters[fj])
        )

    @cached_property
    def dual_edge_lengths(self):
        d = self.face_barycenters[self.edge_faces[:, 0]] - self.face_barycenters[
            np.maximum(self.edge_faces[:, 1], 0)
        ]
        out = np.linalg.norm(d, axis=1)
        out[self.boundary_edge_mask] = np.nan
        return out

    def mean_curvature_half_density(self):
        """Face-based mean curvature half-density h_i.

        ``h_i = sum_j |e_ij| tan(theta_ij / 2) / (2 sqrt(A_i))`` where the
        sum runs over the interior edges of face ``i``.
        """
        areas = self.face_areas
        bad = np.where(areas <= self._degenerate_tol)[0]
        if bad.size:
            raise DegenerateFace(f"face {bad[0]} has zero area")
        h_int = self.edge_mean_curvatures[self.face_edges].sum(axis=1)
        return h_int / np.sqrt(areas)

    def total_area(self):
        return float(self.face_areas.sum())

    def surface_centroid(self):
        """Area-weighted centroid of the surface."""
        return (self.face_areas[:, None] * self.face_barycenters).sum(axis=0) / self.total_area()

    def normalized(self):
        """Copy scaled to unit surface area with the centroid at the origin."""
        scale = 1.0 / np.sqrt(self.total_area())
        pos = (self.positions - self.surface_centroid()) * scale
        return TriMesh(pos, self.faces, landmarks=self.landmarks, check=False)

    def transformed(self, rotation=None, translation=None, scale=1.0):
        """Copy with an affine map ``p -> scale * R p + t`` applied."""
        pos = self.positions * scale
        if rotation is not None:
            pos = pos @ np.asarray(rotation).T
        if translation is not None:
            pos = pos + np.asarray(translation)
        return TriMesh(pos, self.faces, landmarks=self.landmarks, check=False)


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------


def willmore(mesh):
    """Discrete Willmore energy ``W = sum_i h_i^2``."""
    h = mesh.mean_curvature_half_density()
    return float(np.dot(h, h))


def relative_willmore(mesh_a, mesh_b):
    """``sum_i ((h_a)_i - (h_b)_i)^2`` for meshes with identical face lists."""
    if mesh_a.faces.shape != mesh_b.faces.shape or not np.array_equal(
        mesh_a.faces, mesh_b.faces
    ):
        raise ConnectivityMismatch("meshes do not share an identical face list")
    d = mesh_a.mean_curvature_half_density() - mesh_b.mean_curvature_half_density()
    return float(np.dot(d, d))


def relative_willmore_to_field(mesh, target_h):
    """Relative Willmore energy of a mesh against a prescribed face field."""
    target_h = np.asarray(target_h, dtype=float)
    if target_h.shape != (mesh.n_faces,):
        raise ConnectivityMismatch("target field length does not match the face count")
    d = mesh.mean_curvature_half_density() - target_h
    return float(np.dot(d, d))


def chamfer(points_a, points_b):
    """Symmetric Chamfer distance between two point sets.

    Mean nearest-neighbour distance from A to B plus the mean from B to A.
    """
    a = np.atleast_2d(np.asarray(points_a, dtype=float))
    b = np.atleast_2d(np.asarray(points_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyPointSet("chamfer distance needs two non-empty point sets")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    return float(d_ab.mean() + d_ba.mean())


def mass_matrix(mesh):
    """Diagonal 4F x 4F mass matrix (each face area repeated four times)."""
    return sparse.diags(np.repeat(mesh.face_areas, 4)).tocsr()


def cotan_laplacian(mesh):
    """Positive semi-definite cotangent stiffness matrix (V x V).

    ``x^T L x`` is the Dirichlet energy of the piecewise-linear
    interpolation of ``x``.
    """
    f = mesh.faces
    p = mesh.positions
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for k in range(3):
        i = f[:, (k + 1) % 3]
        j = f[:, (k + 2) % 3]
        o = f[:, k]
        u = p[i] - p[o]
        v = p[j] - p[o]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        cross = np.maximum(cross, 1e-300)
        cot = np.einsum("ij,ij->i", u, v) / cross
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    L = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return L


# ----------------------------------------------------------------------
# file I/O
# ----------------------------------------------------------------------


def load_obj(path, landmarks_path=None):
    """Load an ASCII OBJ (or OFF) triangle mesh.

    OBJ ``v``/``f`` records with 1-based indices are read; ``f`` entries may
    carry ``/vt/vn`` suffixes.  Files starting with an ``OFF`` header are
    accepted as well.  The oriented-manifold invariant is checked.
    """
    with open(path, "r") as fh:
        first = fh.readline()
        fh.seek(0)
        if first.strip().upper().startswith("OFF"):
            mesh = _parse_off(fh, path)
        else:
            mesh = _parse_obj(fh, path)
    if landmarks_path is not None:
        mesh.landmarks = read_landmarks(landmarks_path)
    return mesh


def _parse_obj(fh, path):
    positions, faces = [], []
    for lineno, line in enumerate(fh, start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                positions.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: only triangle faces are supported")
            try:
                idx = [int(p.split("/")[0]) for p in parts[1:4]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad face index") from exc
            if any(i == 0 for i in idx):
                raise ParseError(f"{path}:{lineno}: OBJ indices are 1-based")
            faces.append([i - 1 if i > 0 else len(positions) + i for i in idx])
    return TriMesh(np.array(positions, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _parse_off(fh, path):
    tokens = []
    line_of_token = []
    for lineno, line in enumerate(fh, start=1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            tokens.append(tok)
            line_of_token.append(lineno)
    if not tokens or tokens[0].upper() != "OFF":
        raise ParseError(f"{path}:1: missing OFF header")
    pos = 1
    try:
        nv, nf = int(tokens[pos]), int(tokens[pos + 1])
        pos += 3  # vertex, face, edge counts
        verts = np.array(tokens[pos : pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise ParseError(
                    f"{path}:{line_of_token[pos]}: only triangle faces are supported"
                )
            faces.append([int(t) for t in tokens[pos + 1 : pos + 4]])
            pos += 4
    except (IndexError, ValueError) as exc:
        where = line_of_token[min(pos, len(tokens) - 1)] if tokens else 1
        raise ParseError(f"{path}:{where}: truncated or malformed OFF data") from exc
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh, path):
    """Write an ASCII OBJ; positions use %.17g so a reload is bit-exact."""
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_landmarks(path):
    """Read a landmark sidecar file: one 0-based vertex index per line."""
    out = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad landmark index") from exc
    return out


def write_landmarks(indices, path):
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(i)) for i in indices) + "\n")
