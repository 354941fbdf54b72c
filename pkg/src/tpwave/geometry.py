"""Affine element geometry shared by assembly, projections and evaluation."""

from __future__ import annotations

import numpy as np

from tpwave.mesh import Mesh

# local edge e is opposite local vertex e; traversal follows the element's
# counterclockwise vertex order
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))

_EDGE_REF = {
    0: (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
    1: (np.array([0.0, 1.0]), np.array([0.0, 0.0])),
    2: (np.array([0.0, 0.0]), np.array([1.0, 0.0])),
}


def edge_ref_points(local_edge: int, s: np.ndarray, orient: int = 1) -> np.ndarray:
    """Reference coordinates along local edge at parameters s in [0, 1].

    orient = -1 traverses the edge against the element's local direction,
    matching a global face whose start vertex is the edge's local end.
    """
    a, b = _EDGE_REF[local_edge]
    t = np.asarray(s, dtype=float)
    if orient < 0:
        t = 1.0 - t
    return a[None, :] + t[:, None] * (b - a)[None, :]


class MeshGeometry:
    """Per-element affine data: Jacobians, normals, physical quadrature maps."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tri = mesh.vertices[mesh.triangles]  # (ne, 3, 2)
        self.origin = tri[:, 0]
        # columns of J are the two edge vectors from vertex 0
        self.J = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
        self.detJ = self.J[:, 0, 0] * self.J[:, 1, 1] - self.J[:, 0, 1] * self.J[:, 1, 0]
        self.Jinv = (
            np.stack(
                [
                    np.stack([self.J[:, 1, 1], -self.J[:, 0, 1]], axis=1),
                    np.stack([-self.J[:, 1, 0], self.J[:, 0, 0]], axis=1),
                ],
                axis=1,
            )
            / self.detJ[:, None, None]
        )
        # outward unit normals and lengths per local edge
        self.edge_normal = np.empty((mesh.num_elements, 3, 2))
        self.edge_length = np.empty((mesh.num_elements, 3))
        for le, (a, b) in enumerate(LOCAL_EDGES):
            ev = tri[:, b] - tri[:, a]
            ln = np.linalg.norm(ev, axis=1)
            self.edge_length[:, le] = ln
            self.edge_normal[:, le, 0] = ev[:, 1] / ln
            self.edge_normal[:, le, 1] = -ev[:, 0] / ln

    def physical_points(self, ref_pts: np.ndarray) -> np.ndarray:
        """Map reference points (Q, 2) to physical, shape (ne, Q, 2)."""
        return self.origin[:, None, :] + np.einsum(
            "eij,qj->eqi", self.J, np.asarray(ref_pts, dtype=float)
        )

    def reference_coords(self, e: int, xy: np.ndarray) -> np.ndarray:
        """Pull physical points (..., 2) in element e back to reference coords."""
        d = np.asarray(xy, dtype=float) - self.origin[e]
        return np.einsum("ij,...j->...i", self.Jinv[e], d)
