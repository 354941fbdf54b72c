"""Conforming triangular meshes of rectangles with oriented faces.

Meshes are immutable after construction. Faces are stored once, with the
two incident elements (right = -1 on the boundary) and a global traversal
direction fixed by vertex ids, so both incident elements agree on the face
parametrization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a rectangle.

    vertices: (nv, 2) coordinates in meters.
    triangles: (ne, 3) vertex ids, counterclockwise.
    face_vertices: (nf, 2) vertex ids, (min, max); the global face parameter
        runs from the first to the second vertex.
    face_elems: (nf, 2) incident element ids, second entry -1 on boundary.
    elem_faces: (ne, 3) global face id of local edge e (edge e is opposite
        local vertex e).
    elem_face_orient: (ne, 3) +1 if the local traversal of edge e matches the
        global face direction, else -1.
    region_id: (ne,) integer material tags.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    face_vertices: np.ndarray
    face_elems: np.ndarray
    elem_faces: np.ndarray
    elem_face_orient: np.ndarray
    region_id: np.ndarray
    areas: np.ndarray = field(repr=False, default=None)
    h_elem: np.ndarray = field(repr=False, default=None)
    h_face: np.ndarray = field(repr=False, default=None)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_faces(self) -> int:
        return self.face_vertices.shape[0]

    @property
    def h(self) -> float:
        """Mesh size, the largest element diameter."""
        return float(self.h_elem.max())

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elems[:, 1] < 0)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elems[:, 1] >= 0)

    def quasi_uniformity_constant(self) -> float:
        """Largest ratio h_K / h_F over all faces of all elements."""
        ratios = self.h_elem[:, None] / self.h_face[self.elem_faces]
        return float(ratios.max())

    def element_corners(self, e: int) -> np.ndarray:
        return self.vertices[self.triangles[e]]

    def export_text(self) -> str:
        """Plain-text dump: header, vertex list, triangle list with regions."""
        lines = [
            "# tpwave mesh export",
            "# vertices <count> then 'x y' per line",
            "# triangles <count> then 'v0 v1 v2 region' per line",
            f"vertices {self.num_vertices}",
        ]
        lines += [f"{x!r} {y!r}" for x, y in self.vertices]
        lines.append(f"triangles {self.num_elements}")
        lines += [
            f"{t[0]} {t[1]} {t[2]} {r}"
            for t, r in zip(self.triangles, self.region_id)
        ]
        return "\n".join(lines) + "\n"


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _build_connectivity(
    vertices: np.ndarray, triangles: np.ndarray, region_id: np.ndarray
) -> Mesh:
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    ne = triangles.shape[0]

    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    areas = 0.5 * np.cross(p1 - p0, p2 - p0)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise MeshError(
            f"element {bad} has non-positive area {areas[bad]:.3e}; "
            "triangles must be counterclockwise and non-degenerate"
        )

    edge_len = np.stack(
        [
            np.linalg.norm(p2 - p1, axis=1),
            np.linalg.norm(p0 - p2, axis=1),
            np.linalg.norm(p1 - p0, axis=1),
        ],
        axis=1,
    )
    h_elem = edge_len.max(axis=1)

    # Local edge e is opposite local vertex e.
    local_edges = ((1, 2), (2, 0), (0, 1))
    face_index: dict[tuple[int, int], int] = {}
    face_vertices: list[tuple[int, int]] = []
    face_elems: list[list[int]] = []
    elem_faces = np.empty((ne, 3), dtype=np.int64)
    elem_face_orient = np.empty((ne, 3), dtype=np.int64)

    for e in range(ne):
        tri = triangles[e]
        for le, (a, b) in enumerate(local_edges):
            va, vb = int(tri[a]), int(tri[b])
            key = (min(va, vb), max(va, vb))
            fid = face_index.get(key)
            if fid is None:
                fid = len(face_vertices)
                face_index[key] = fid
                face_vertices.append(key)
                face_elems.append([e, -1])
            else:
                if face_elems[fid][1] != -1:
                    raise MeshError(f"face {key} has more than two incident elements")
                face_elems[fid][1] = e
            elem_faces[e, le] = fid
            elem_face_orient[e, le] = 1 if va == key[0] else -1

    face_vertices_arr = np.asarray(face_vertices, dtype=np.int64)
    face_elems_arr = np.asarray(face_elems, dtype=np.int64)
    h_face = np.linalg.norm(
        vertices[face_vertices_arr[:, 1]] - vertices[face_vertices_arr[:, 0]], axis=1
    )

    return Mesh(
        vertices=_freeze(vertices),
        triangles=_freeze(triangles),
        face_vertices=_freeze(face_vertices_arr),
        face_elems=_freeze(face_elems_arr),
        elem_faces=_freeze(elem_faces),
        elem_face_orient=_freeze(elem_face_orient),
        region_id=_freeze(np.asarray(region_id, dtype=np.int64)),
        areas=_freeze(areas),
        h_elem=_freeze(h_elem),
        h_face=_freeze(h_face),
    )


def build_structured_mesh(
    nx: int,
    ny: int,
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    split_pattern: str = "diagonal",
    jitter: float = 0.0,
    seed: int = 0,
    region_fn: Callable[[float, float], int] | None = None,
) -> Mesh:
    """Triangulate the rectangle [x0,x1]x[y0,y1] on an nx-by-ny grid.

    split_pattern "diagonal" cuts each cell along the lower-left to
    upper-right diagonal (2 triangles per cell); "crisscross" adds the cell
    center (4 triangles per cell) and is mirror-symmetric about both cell
    mid-lines. jitter > 0 displaces interior grid vertices by at most
    jitter*min(dx,dy) with a seeded generator, as a reproducible stand-in
    for unstructured meshes.

    region_fn(x, y) maps an element centroid to an integer region tag.
    """
    if nx < 1 or ny < 1:
        raise MeshError(f"grid must be at least 1x1, got {nx}x{ny}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}: sides must have positive length")
    if split_pattern not in ("diagonal", "crisscross"):
        raise MeshError(f"unknown split_pattern {split_pattern!r}")
    if not 0.0 <= jitter <= 0.15:
        raise MeshError(f"jitter must lie in [0, 0.15], got {jitter}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def vid(i: int, j: int) -> int:
        return i * (ny + 1) + j

    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        amp = jitter * min((x1 - x0) / nx, (y1 - y0) / ny)
        shift = rng.uniform(-amp, amp, size=grid.shape) / np.sqrt(2.0)
        interior = (
            (grid[:, 0] > x0) & (grid[:, 0] < x1) & (grid[:, 1] > y0) & (grid[:, 1] < y1)
        )
        grid = grid + shift * interior[:, None]

    tris: list[tuple[int, int, int]] = []
    verts = grid
    if split_pattern == "diagonal":
        for i in range(nx):
            for j in range(ny):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
    else:
        centers = []
        nbase = grid.shape[0]
        for i in range(nx):
            for j in range(ny):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                c = nbase + len(centers)
                centers.append(0.25 * (grid[v00] + grid[v10] + grid[v01] + grid[v11]))
                tris.append((v00, v10, c))
                tris.append((v10, v11, c))
                tris.append((v11, v01, c))
                tris.append((v01, v00, c))
        verts = np.vstack([grid, np.asarray(centers)])

    tri_arr = np.asarray(tris, dtype=np.int64)
    if region_fn is None:
        regions = np.zeros(tri_arr.shape[0], dtype=np.int64)
    else:
        cents = verts[tri_arr].mean(axis=1)
        regions = np.asarray([region_fn(x, y) for x, y in cents], dtype=np.int64)
    return _build_connectivity(verts, tri_arr, regions)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 congruent children via edge midpoints."""
    nv = mesh.num_vertices
    mid_id = nv + np.arange(mesh.num_faces)
    midpoints = 0.5 * (
        mesh.vertices[mesh.face_vertices[:, 0]] + mesh.vertices[mesh.face_vertices[:, 1]]
    )
    verts = np.vstack([mesh.vertices, midpoints])

    tris = []
    regions = []
    for e in range(mesh.num_elements):
        v0, v1, v2 = mesh.triangles[e]
        m0 = mid_id[mesh.elem_faces[e, 0]]  # midpoint of edge (v1, v2)
        m1 = mid_id[mesh.elem_faces[e, 1]]  # midpoint of edge (v2, v0)
        m2 = mid_id[mesh.elem_faces[e, 2]]  # midpoint of edge (v0, v1)
        tris += [(v0, m2, m1), (m2, v1, m0), (m1, m0, v2), (m0, m1, m2)]
        regions += [mesh.region_id[e]] * 4
    return _build_connectivity(verts, np.asarray(tris, dtype=np.int64), regions)


def locate_point(
    mesh: Mesh, point: tuple[float, float], rtol: float = 1e-12
) -> tuple[int, np.ndarray]:
    """Containing element id and barycentric coordinates of a point.

    Points on shared faces or vertices resolve to the lowest incident
    element id. Raises MeshError for points outside the closed domain.
    """
    p = np.asarray(point, dtype=float)
    tol = rtol * mesh.h
    corners = mesh.vertices[mesh.triangles]  # (ne, 3, 2)
    d1 = corners[:, 1] - corners[:, 0]
    d2 = corners[:, 2] - corners[:, 0]
    dp = p[None, :] - corners[:, 0]
    det = np.cross(d1, d2)
    l1 = np.cross(dp, d2) / det
    l2 = np.cross(d1, dp) / det
    l0 = 1.0 - l1 - l2
    lam = np.stack([l0, l1, l2], axis=1)
    inside = np.all(lam >= -tol, axis=1)
    ids = np.flatnonzero(inside)
    if ids.size == 0:
        raise MeshError(f"point {tuple(p)} lies outside the mesh domain")
    e = int(ids[0])
    bary = np.clip(lam[e], 0.0, 1.0)
    return e, bary / bary.sum()
