"""Uniform tetrahedral simulation meshes and barycentric surface embedding.

Meshes are built by voxelizing a primitive (sphere / ellipsoid / box) on a
regular lattice and splitting every occupied cube into 6 tetrahedra that share
the cube's main diagonal.  All cubes use the same diagonal direction, so the
edge set of the mesh is {h, h*sqrt(2), h*sqrt(3)} for voxel size h.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    AllConstrained,
    DegenerateTet,
    EmptyMesh,
    LengthMismatch,
    NoneConstrained,
    SecdynError,
    UnembeddableVertex,
)

PDTM_MAGIC = b"PDTM"
PDTM_VERSION = 1

# Kuhn subdivision: each tet walks from the cube's min corner to its max
# corner along one axis permutation.  Corner bits are (bx, by, bz).
_AXIS_PERMS = [
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
]


@dataclass(eq=False)
class Sphere:
    radius: float

    def contains(self, p: np.ndarray) -> np.ndarray:
        return np.sum(p * p, axis=-1) <= self.radius ** 2

    def half_extents(self):
        return (self.radius,) * 3

    def validate(self):
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


@dataclass(eq=False)
class Ellipsoid:
    semi_axes: tuple  # (rx, ry, rz)

    def contains(self, p: np.ndarray) -> np.ndarray:
        a = np.asarray(self.semi_axes, dtype=float)
        return np.sum((p / a) ** 2, axis=-1) <= 1.0

    def half_extents(self):
        return tuple(self.semi_axes)

    def validate(self):
        if len(self.semi_axes) != 3 or any(a <= 0 for a in self.semi_axes):
            raise ValueError(f"ellipsoid semi-axes must be 3 positive values, got {self.semi_axes}")


@dataclass(eq=False)
class Box:
    extents: tuple  # full side lengths (ex, ey, ez), centered at the origin

    def contains(self, p: np.ndarray) -> np.ndarray:
        e = np.asarray(self.extents, dtype=float)
        return np.all(np.abs(p) <= e / 2.0, axis=-1)

    def half_extents(self):
        return tuple(e / 2.0 for e in self.extents)

    def validate(self):
        if len(self.extents) != 3 or any(e <= 0 for e in self.extents):
            raise ValueError(f"box extents must be 3 positive values, got {self.extents}")


@dataclass(eq=False)
class TetMesh:
    """Immutable tetrahedral mesh with precomputed 1-ring adjacency.

    ``neighbors[i]`` holds the sorted indices of every vertex sharing a tet
    with vertex ``i`` (excluding ``i`` itself).  Tets are stored with positive
    signed volume.
    """

    vertices: np.ndarray         # (n, 3) float64
    tets: np.ndarray             # (m, 4) int32
    neighbors: list = field(default_factory=list)
    edge_length_range: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.tets = np.ascontiguousarray(self.tets, dtype=np.int32)
        n = len(self.vertices)
        if self.tets.size == 0:
            raise EmptyMesh("mesh has no tetrahedra")
        if self.tets.min() < 0 or self.tets.max() >= n:
            raise SecdynError("tet index out of range")
        for t in range(4):
            for s in range(t + 1, 4):
                if np.any(self.tets[:, t] == self.tets[:, s]):
                    raise SecdynError("tet with repeated vertex index")
        vols = tet_volumes(self.vertices, self.tets)
        bad = np.flatnonzero(vols <= 0.0)
        if bad.size:
            raise DegenerateTet(int(bad[0]), float(vols[bad[0]]))
        if not self.neighbors:
            self.neighbors = _build_neighbors(n, self.tets)
        edges = unique_edges(self.tets)
        lens = np.linalg.norm(self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]], axis=1)
        self.edge_length_range = (float(lens.min()), float(lens.max()))
        self.vertices.setflags(write=False)
        self.tets.setflags(write=False)
        self._padded = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[i]

    def padded_neighbors(self):
        """(n, max_degree) index matrix padded with -1, plus per-vertex counts."""
        if self._padded is None:
            counts = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)
            pad = np.full((self.n_vertices, int(counts.max())), -1, dtype=np.int64)
            for i, nb in enumerate(self.neighbors):
                pad[i, : len(nb)] = nb
            self._padded = (pad, counts)
        return self._padded


def tet_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volume of every tet (positive under the stored orientation)."""
    p = vertices[tets]
    d = p[:, 1:] - p[:, :1]
    return np.linalg.det(d) / 6.0


def unique_edges(tets: np.ndarray) -> np.ndarray:
    pairs = []
    for a in range(4):
        for b in range(a + 1, 4):
            pairs.append(tets[:, [a, b]])
    e = np.concatenate(pairs, axis=0)
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def _build_neighbors(n: int, tets: np.ndarray) -> list:
    edges = unique_edges(tets)
    both = np.concatenate([edges, edges[:, ::-1]], axis=0)
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    starts = np.searchsorted(both[:, 0], np.arange(n + 1))
    return [both[starts[i]: starts[i + 1], 1].astype(np.int64) for i in range(n)]


def _connected(n: int, tets: np.ndarray) -> bool:
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for tet in tets:
        r = find(tet[0])
        for v in tet[1:]:
            parent[find(v)] = r
    roots = {find(i) for i in range(n)}
    return len(roots) == 1


def voxelize_primitive(shape, voxel_size: float) -> TetMesh:
    """Voxelize a primitive and split each occupied cube into 6 tets.

    Cube (i, j, k) spans [(i-1/2)h, (i+1/2)h]^3 so its center sits on the
    integer lattice i*h; a cube is kept when its center lies inside the shape.
    Corner positions are deduplicated through integer keys (2i +- 1), never
    through floating-point hashing, so vertex ordering is deterministic.
    """
    if voxel_size <= 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    shape.validate()
    h = float(voxel_size)

    half = shape.half_extents()
    ranges = [np.arange(-int(np.ceil(hx / h)) - 1, int(np.ceil(hx / h)) + 2) for hx in half]
    gi, gj, gk = np.meshgrid(*ranges, indexing="ij")
    cells = np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1)
    inside = shape.contains(cells * h)
    cells = cells[inside]
    if len(cells) == 0:
        raise EmptyMesh("no voxel center falls inside the shape")
    # Lexicographic cell order keeps the whole construction reproducible.
    cells = cells[np.lexsort((cells[:, 2], cells[:, 1], cells[:, 0]))]

    # Odd-integer corner keys: corner (i +- 1/2) -> 2i +- 1.
    corner_bits = np.array(
        [(bx, by, bz) for bx in (0, 1) for by in (0, 1) for bz in (0, 1)], dtype=np.int64
    )
    keys = 2 * cells[:, None, :] + (2 * corner_bits - 1)[None, :, :]  # (ncells, 8, 3)
    flat = keys.reshape(-1, 3)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    corner_ids = inv.reshape(len(cells), 8)
    vertices = uniq.astype(np.float64) * (h / 2.0)

    bit_index = {tuple(b): idx for idx, b in enumerate(corner_bits)}
    tets = []
    for perm in _AXIS_PERMS:
        b = np.zeros(3, dtype=np.int64)
        path = [bit_index[tuple(b)]]
        for ax in perm:
            b = b.copy()
            b[ax] = 1
            path.append(bit_index[tuple(b)])
        tets.append(corner_ids[:, path])
    tets = np.concatenate(tets, axis=0).astype(np.int32)
    # Interleave so the 6 tets of a cube stay together, matching cell order.
    tets = tets.reshape(6, len(cells), 4).transpose(1, 0, 2).reshape(-1, 4)

    vols = tet_volumes(vertices, tets)
    flip = vols < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]

    mesh = TetMesh(vertices=vertices, tets=tets)
    if not _connected(mesh.n_vertices, mesh.tets):
        raise SecdynError("voxelization produced a disconnected mesh")
    return mesh


@dataclass(eq=False)
class ConstraintSet:
    """Per-vertex boolean flags; constrained vertices follow the reference motion."""

    constrained: np.ndarray  # (n,) bool

    def __post_init__(self):
        self.constrained = np.ascontiguousarray(self.constrained, dtype=bool)
        if not self.constrained.any():
            raise NoneConstrained("no vertex is constrained")
        if self.constrained.all():
            raise AllConstrained("every vertex is constrained")
        self.constrained.setflags(write=False)

    @property
    def free(self) -> np.ndarray:
        return ~self.constrained

    def constrained_indices(self) -> np.ndarray:
        return np.flatnonzero(self.constrained)

    def free_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.constrained)


def build_core_constraints(mesh: TetMesh, box_lo, box_hi) -> ConstraintSet:
    """Constrain exactly the vertices inside an axis-aligned box."""
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    inside = np.all((mesh.vertices >= lo) & (mesh.vertices <= hi), axis=1)
    return ConstraintSet(constrained=inside)


@dataclass(eq=False)
class SurfaceEmbedding:
    """Barycentric coupling of a render surface to its host tet mesh."""

    surface_vertices: np.ndarray  # (s, 3) rest positions
    faces: np.ndarray             # (f, 3) triangle indices
    host_tet: np.ndarray          # (s,) tet index
    bary_weights: np.ndarray      # (s, 4)
    mesh: TetMesh = None

    def __post_init__(self):
        self.surface_vertices = np.ascontiguousarray(self.surface_vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        self.host_tet = np.ascontiguousarray(self.host_tet, dtype=np.int64)
        self.bary_weights = np.ascontiguousarray(self.bary_weights, dtype=np.float64)
        s = np.abs(self.bary_weights.sum(axis=1) - 1.0)
        if s.size and s.max() > 1e-9:
            raise SecdynError(f"barycentric weights do not sum to 1 (max err {s.max():.3g})")


def _barycentric(p: np.ndarray, tet_pts: np.ndarray) -> np.ndarray:
    """Unclamped barycentric coordinates of points w.r.t. tets (paired rows)."""
    d = (tet_pts[:, 1:] - tet_pts[:, :1]).transpose(0, 2, 1)  # (k, 3, 3) columns = edges
    rhs = p - tet_pts[:, 0]
    w123 = np.linalg.solve(d, rhs[..., None])[..., 0]
    w0 = 1.0 - w123.sum(axis=1, keepdims=True)
    return np.concatenate([w0, w123], axis=1)


def _point_triangle_distance(p, a, b, c):
    # Ericson, "Real-Time Collision Detection", closest point on triangle.
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return np.linalg.norm(ap)
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return np.linalg.norm(bp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return np.linalg.norm(ap - v * ab)
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return np.linalg.norm(cp)
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return np.linalg.norm(ap - w * ac)
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.linalg.norm(p - (b + w * (c - b)))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return np.linalg.norm(ap - (ab * v + ac * w))


def _point_tet_distance(p, tet_pts):
    faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    return min(_point_triangle_distance(p, tet_pts[i], tet_pts[j], tet_pts[k]) for i, j, k in faces)


def embed_surface(surface_vertices, faces, mesh: TetMesh, tau: float = None) -> SurfaceEmbedding:
    """Assign each surface vertex a host tet and exact barycentric weights.

    The host minimizes the clamped barycentric violation max(0, -min(w)).
    Vertices outside every tet keep mildly extrapolated (signed) weights as
    long as they lie within ``tau`` of some tet; farther vertices raise
    UnembeddableVertex.  ``tau`` defaults to half the mesh's min edge length.
    """
    sv = np.ascontiguousarray(surface_vertices, dtype=np.float64)
    if tau is None:
        tau = 0.5 * mesh.edge_length_range[0]
    centroids = mesh.vertices[mesh.tets].mean(axis=1)
    tree = cKDTree(centroids)
    k = min(64, mesh.n_tets)
    _, cand = tree.query(sv, k=k)
    cand = np.atleast_2d(cand)

    host = np.empty(len(sv), dtype=np.int64)
    weights = np.empty((len(sv), 4), dtype=np.float64)
    for i, p in enumerate(sv):
        tids = cand[i]
        tet_pts = mesh.vertices[mesh.tets[tids]]
        w = _barycentric(np.repeat(p[None, :], len(tids), axis=0), tet_pts)
        violation = np.maximum(0.0, -w.min(axis=1))
        best = int(np.argmin(violation))
        if violation[best] > 0.0:
            order = np.argsort(violation)[:8]
            dists = [_point_tet_distance(p, tet_pts[j]) for j in order]
            nearest = int(np.argmin(dists))
            if dists[nearest] > tau:
                raise UnembeddableVertex(i, distance=float(dists[nearest]))
            best = int(order[nearest])
        host[i] = tids[best]
        weights[i] = w[best]
    return SurfaceEmbedding(
        surface_vertices=sv,
        faces=np.asarray(faces, dtype=np.int32).reshape(-1, 3),
        host_tet=host,
        bary_weights=weights,
        mesh=mesh,
    )


def deform_surface(embedding: SurfaceEmbedding, dynamic_positions: np.ndarray) -> np.ndarray:
    """Drive the surface: weighted combination of each host tet's current corners."""
    pos = np.asarray(dynamic_positions, dtype=np.float64)
    if pos.shape != (embedding.mesh.n_vertices, 3):
        raise LengthMismatch(
            f"expected positions of shape ({embedding.mesh.n_vertices}, 3), got {pos.shape}"
        )
    corners = pos[embedding.mesh.tets[embedding.host_tet]]  # (s, 4, 3)
    return np.einsum("sc,scx->sx", embedding.bary_weights, corners)


def normalize_to_box(vertices: np.ndarray, box_size: float = 5.0):
    """Uniformly rescale positions so the bounding box fits box_size^3, centered at origin."""
    v = np.asarray(vertices, dtype=np.float64)
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise ValueError("degenerate geometry: zero extent")
    scale = box_size / extent
    center = (lo + hi) / 2.0
    return (v - center) * scale, scale, center


# --- file formats ---------------------------------------------------------


def save_tet_mesh(mesh: TetMesh, path):
    with open(path, "wb") as f:
        f.write(PDTM_MAGIC)
        f.write(struct.pack("<III", PDTM_VERSION, mesh.n_vertices, mesh.n_tets))
        f.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(mesh.tets, dtype="<u4").tobytes())


def save_tet_mesh_text(mesh: TetMesh, path):
    with open(path, "w") as f:
        f.write("PDTM-TEXT 1\n")
        f.write(f"{mesh.n_vertices} {mesh.n_tets}\n")
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.tets:
            f.write(f"t {t[0]} {t[1]} {t[2]} {t[3]}\n")


def load_tet_mesh(path) -> TetMesh:
    with open(path, "rb") as f:
        head = f.read(9)
        if head[:4] == PDTM_MAGIC and not head.startswith(b"PDTM-TEXT"):
            f.seek(4)
            version, nv, nt = struct.unpack("<III", f.read(12))
            if version != PDTM_VERSION:
                raise SecdynError(f"unsupported PDTM version {version}")
            verts = np.frombuffer(f.read(nv * 24), dtype="<f8").reshape(nv, 3)
            tets = np.frombuffer(f.read(nt * 16), dtype="<u4").reshape(nt, 4)
            return TetMesh(vertices=verts.copy(), tets=tets.astype(np.int32))
    # not binary: fall through to the text variant
    with open(path, "r") as f:
        first = f.readline().split()
        if not first or first[0] != "PDTM-TEXT":
            raise SecdynError(f"{path} is not a PDTM mesh")
        nv, nt = map(int, f.readline().split())
        verts, tets = [], []
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "t":
                tets.append([int(x) for x in parts[1:5]])
    if len(verts) != nv or len(tets) != nt:
        raise SecdynError("PDTM-TEXT header does not match body")
    return TetMesh(vertices=np.array(verts), tets=np.array(tets, dtype=np.int32))


def load_obj(path):
    """Minimal Wavefront OBJ reader: v and triangular f records, others ignored."""
    verts, faces = [], []
    with open(path, "r") as f:
        for ln, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                refs = [p.split("/")[0] for p in parts[1:]]
                if len(refs) != 3:
                    raise SecdynError(f"{path}:{ln}: only triangular faces are supported")
                faces.append([int(r) - 1 for r in refs])
    if not verts:
        raise SecdynError(f"{path}: no vertices found")
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int32).reshape(-1, 3)


def save_obj(path, vertices, faces):
    with open(path, "w") as f:
        for v in vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for a, b, c in faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")
