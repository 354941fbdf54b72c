"""Modal bases, quadrature and L2 projections on triangles and faces.

Conventions used throughout the solver:

- Reference triangle T = {(x, y) : x >= 0, y >= 0, x + y <= 1}.
- Element bases are orthonormal in L2(T); on a physical element the basis
  is additionally scaled by 1/sqrt(det J) so element mass matrices are the
  identity and projections are plain quadrature sums.
- Reference face is the segment [0, 1]; face bases are orthonormal there
  and scaled by 1/sqrt(|F|) on a physical face.
- Vector fields are stored component-wise. Symmetric 2x2 tensors are stored
  as 3 components (xx, yy, sqrt(2)*xy) so the stored dot product equals the
  Frobenius inner product.

The volume quadrature is a collapsed-coordinate Gauss rule averaged over
the six affine symmetries of the triangle. The symmetrization keeps the
rule exact while making quadrature of non-polynomial data equivariant
under mesh reflections, which mirror-symmetric scenario checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi, roots_jacobi, roots_legendre

MAX_QUAD_ORDER = 60

TENSOR_OFFDIAG = np.sqrt(2.0)


class FESpaceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q, dim) or (Q,) for faces
    weights: np.ndarray  # (Q,)
    order: int


def _collapsed_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    n = max(1, (order + 2) // 2)
    a, wa = roots_legendre(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)  # absorbs the (1-b) Duffy factor
    A, B = np.meshgrid(a, b, indexing="ij")
    x = 0.25 * (1.0 + A) * (1.0 - B)
    y = 0.5 * (1.0 + B)
    w = np.outer(wa, wb) / 8.0
    return np.stack([x.ravel(), y.ravel()], axis=1), w.ravel()


_SYMMETRY_MAPS = (
    lambda x, y: (x, y),
    lambda x, y: (y, 1.0 - x - y),
    lambda x, y: (1.0 - x - y, x),
    lambda x, y: (y, x),
    lambda x, y: (1.0 - x - y, y),
    lambda x, y: (x, 1.0 - x - y),
)


@lru_cache(maxsize=None)
def quadrature_simplex(order: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle, exact to `order`.

    The rule is invariant under all six affine self-maps of the triangle.
    """
    if order < 0:
        raise FESpaceError(f"quadrature order must be >= 0, got {order}")
    if order > MAX_QUAD_ORDER:
        raise FESpaceError(
            f"quadrature order {order} unsupported, maximum is {MAX_QUAD_ORDER}"
        )
    pts, wts = _collapsed_rule(order)
    all_pts = []
    all_wts = []
    for m in _SYMMETRY_MAPS:
        mx, my = m(pts[:, 0], pts[:, 1])
        all_pts.append(np.stack([mx, my], axis=1))
        all_wts.append(wts / 6.0)
    p = np.vstack(all_pts)
    w = np.concatenate(all_wts)

    # merge coinciding images (e.g. the centroid) to keep the rule compact
    key = np.round(p / 1e-13).astype(np.int64)
    _, idx, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    wm = np.zeros(idx.size)
    np.add.at(wm, inv, w)
    pm = p[idx]
    return QuadratureRule(points=pm, weights=wm, order=order)


@lru_cache(maxsize=None)
def quadrature_segment(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact to `order`."""
    if order < 0:
        raise FESpaceError(f"quadrature order must be >= 0, got {order}")
    if order > MAX_QUAD_ORDER:
        raise FESpaceError(
            f"quadrature order {order} unsupported, maximum is {MAX_QUAD_ORDER}"
        )
    n = max(1, (order + 2) // 2)
    x, w = roots_legendre(n)
    return QuadratureRule(points=0.5 * (x + 1.0), weights=0.5 * w, order=order)


def default_volume_order(k: int) -> int:
    return 2 * (k + 2) + 1


def error_norm_order(k: int) -> int:
    return 2 * (k + 2) + 3


# ---------------------------------------------------------------------------
# bases


def _jacobi_deriv(n: int, alpha: float, x: np.ndarray) -> np.ndarray:
    if n == 0:
        return np.zeros_like(x)
    return 0.5 * (n + alpha + 1.0) * eval_jacobi(n - 1, alpha + 1.0, 1.0, x)


@dataclass(frozen=True)
class ElementBasis:
    """Orthonormal (Koornwinder) basis of P_degree on the reference triangle.

    Basis function (i, j), i + j <= degree, is

        c_ij * P_i(a) * (1 - y)^i * P_j^(2i+1,0)(2y - 1),
        a = 2x / (1 - y) - 1,   c_ij = sqrt(2 (2i+1) (i+j+1)),

    ordered by total degree. The collapsed coordinate a has a removable
    singularity at the vertex (0, 1); evaluation guards the division and the
    gradient formulas factor out (1 - y)^(i-1), so values and gradients are
    finite everywhere on the closed triangle.
    """

    degree: int

    @property
    def dim(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @property
    def index_pairs(self) -> list[tuple[int, int]]:
        return [
            (i, d - i)
            for d in range(self.degree + 1)
            for i in range(d + 1)
        ]

    def _collapsed(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = pts[..., 0]
        y = pts[..., 1]
        one_my = 1.0 - y
        safe = np.where(one_my > 1e-14, one_my, 1.0)
        a = np.where(one_my > 1e-14, 2.0 * x / safe - 1.0, -1.0)
        b = 2.0 * y - 1.0
        return a, b, one_my

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """Basis values, shape (dim, npts)."""
        pts = np.asarray(pts, dtype=float)
        a, b, one_my = self._collapsed(pts)
        out = np.empty((self.dim, *a.shape))
        for n, (i, j) in enumerate(self.index_pairs):
            c = np.sqrt(2.0 * (2 * i + 1) * (i + j + 1))
            out[n] = c * eval_jacobi(i, 0.0, 0.0, a) * one_my**i * eval_jacobi(
                j, 2.0 * i + 1.0, 0.0, b
            )
        return out

    def grad(self, pts: np.ndarray) -> np.ndarray:
        """Basis gradients, shape (dim, npts, 2)."""
        pts = np.asarray(pts, dtype=float)
        a, b, one_my = self._collapsed(pts)
        out = np.empty((self.dim, *a.shape, 2))
        for n, (i, j) in enumerate(self.index_pairs):
            c = np.sqrt(2.0 * (2 * i + 1) * (i + j + 1))
            pa = eval_jacobi(i, 0.0, 0.0, a)
            pb = eval_jacobi(j, 2.0 * i + 1.0, 0.0, b)
            dpa = _jacobi_deriv(i, 0.0, a)
            dpb = _jacobi_deriv(j, 2.0 * i + 1.0, b)
            pw_im1 = one_my ** max(i - 1, 0)
            pw_i = one_my**i
            out[n, ..., 0] = c * 2.0 * dpa * pw_im1 * pb
            out[n, ..., 1] = c * (
                (a + 1.0) * dpa * pw_im1 * pb
                - float(i) * pa * pw_im1 * pb
                + 2.0 * pa * pw_i * dpb
            )
        return out


@dataclass(frozen=True)
class FaceBasis:
    """Orthonormal Legendre basis of P_degree on the reference segment [0, 1]."""

    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def eval(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        x = 2.0 * s - 1.0
        return np.stack(
            [
                np.sqrt(2.0 * m + 1.0) * eval_jacobi(m, 0.0, 0.0, x)
                for m in range(self.dim)
            ]
        )


@lru_cache(maxsize=None)
def element_basis(degree: int) -> ElementBasis:
    return ElementBasis(degree)


@lru_cache(maxsize=None)
def face_basis(degree: int) -> FaceBasis:
    return FaceBasis(degree)


# ---------------------------------------------------------------------------
# projections on reference domains (element-local work uses these directly)


def project_element(f, degree: int, quad_order: int | None = None) -> np.ndarray:
    """Coefficients of the L2(T)-projection of f onto P_degree.

    f maps (x, y) arrays to values; extra trailing axes of f are projected
    component-wise, giving coefficients of shape (dim, *value_shape).
    """
    if quad_order is None:
        quad_order = default_volume_order(degree)
    rule = quadrature_simplex(quad_order)
    basis = element_basis(degree)
    vals = np.asarray(f(rule.points[:, 0], rule.points[:, 1]), dtype=float)
    phi = basis.eval(rule.points)
    return np.einsum("q,nq,q...->n...", rule.weights, phi, vals)


def project_face(f, degree: int, quad_order: int | None = None) -> np.ndarray:
    """Coefficients of the L2([0,1])-projection of f onto P_degree."""
    if quad_order is None:
        quad_order = default_volume_order(degree)
    rule = quadrature_segment(quad_order)
    psi = face_basis(degree).eval(rule.points)
    vals = np.asarray(f(rule.points), dtype=float)
    return np.einsum("q,mq,q...->m...", rule.weights, psi, vals)


def eval_expansion(coeffs: np.ndarray, degree: int, pts: np.ndarray) -> np.ndarray:
    """Evaluate a reference-triangle expansion at points, shape (*coeff_tail, npts)."""
    phi = element_basis(degree).eval(pts)
    return np.einsum("n...,nq->...q", coeffs, phi)


# ---------------------------------------------------------------------------
# empirical validators for the projection and trace estimates


def projection_errors(mesh, f, degree: int, quad_order: int | None = None):
    """L2 and weighted-boundary errors of the element-wise projection of f.

    Returns (e_l2, e_bnd) with
      e_l2  = || f - P f ||_{0,Th}
      e_bnd = || (h_F^(1/2) / (degree+1)) (f - P f) ||_{0,dTh}.
    """
    from tpwave import geometry  # local import, avoids a cycle

    if quad_order is None:
        quad_order = error_norm_order(degree)
    geo = geometry.MeshGeometry(mesh)
    rule = quadrature_simplex(quad_order)
    basis = element_basis(degree)
    phi = basis.eval(rule.points)  # (N, Q)

    pts = geo.physical_points(rule.points)  # (ne, Q, 2)
    vals = f(pts[..., 0], pts[..., 1])  # (ne, Q)
    coeff = np.einsum("q,nq,eq->en", rule.weights, phi, vals)  # detJ-free, see below
    # with basis scaled by 1/sqrt(detJ), coefficients are sqrt(detJ)*sum(w f phi)
    coeff *= np.sqrt(geo.detJ)[:, None]
    proj_vals = np.einsum("en,nq->eq", coeff, phi) / np.sqrt(geo.detJ)[:, None]
    diff = vals - proj_vals
    e_l2 = np.sqrt(np.einsum("e,q,eq->", geo.detJ, rule.weights, diff**2))

    srule = quadrature_segment(quad_order)
    e_bnd_sq = 0.0
    for le in range(3):
        ref_pts = geometry.edge_ref_points(le, srule.points)
        phi_e = basis.eval(ref_pts)
        pts_e = geo.physical_points(ref_pts)
        vals_e = f(pts_e[..., 0], pts_e[..., 1])
        proj_e = np.einsum("en,nq->eq", coeff, phi_e) / np.sqrt(geo.detJ)[:, None]
        hf = mesh.h_face[mesh.elem_faces[:, le]]
        lens = hf  # straight edges: diameter equals length
        w = hf / (degree + 1) ** 2
        e_bnd_sq += np.einsum(
            "e,q,eq->", w * lens, srule.weights, (vals_e - proj_e) ** 2
        )
    return float(e_l2), float(np.sqrt(e_bnd_sq))


def projection_rate_report(mesh_seq, f, degree: int):
    """Observed h-rates of projection errors on a nested mesh sequence.

    Returns a list of rows (h, e_l2, e_bnd, rate_l2, rate_bnd); rates are
    NaN on the first row and whenever errors sit at round-off.
    """
    if len(mesh_seq) < 2:
        raise FESpaceError("projection_rate_report needs at least 2 meshes")
    rows = []
    prev = None
    for mesh in mesh_seq:
        e_l2, e_bnd = projection_errors(mesh, f, degree)
        if prev is None:
            rates = (np.nan, np.nan)
        else:
            def rate(a, b):
                if b < 1e-13 or a < 1e-13:
                    return np.nan
                return np.log(a / b) / np.log(prev[0] / mesh.h)
            rates = (rate(prev[1], e_l2), rate(prev[2], e_bnd))
        rows.append((mesh.h, e_l2, e_bnd, *rates))
        prev = (mesh.h, e_l2, e_bnd)
    return rows


def trace_inequality_ratio(mesh, degree: int, trials: int = 32, seed: int = 0) -> float:
    """Largest observed ratio of the weighted boundary norm to the L2 norm.

    max over random q in P_degree(Th) of
        || (h_F^(1/2)/(degree+1)) q ||_{0,dTh} / || q ||_{0,Th}.
    """
    from tpwave import geometry

    if trials < 1:
        raise FESpaceError("trials must be at least 1")
    geo = geometry.MeshGeometry(mesh)
    basis = element_basis(degree)
    srule = quadrature_segment(2 * degree + 1)
    # boundary Gram matrix per element: sum_F (h_F/(deg+1)^2) int_F phi phi
    rng = np.random.default_rng(seed)
    worst = 0.0
    gram = np.zeros((mesh.num_elements, basis.dim, basis.dim))
    for le in range(3):
        ref_pts = geometry.edge_ref_points(le, srule.points)
        phi_e = basis.eval(ref_pts)  # (N, Q)
        hf = mesh.h_face[mesh.elem_faces[:, le]]
        scale = hf * hf / (degree + 1) ** 2 / geo.detJ  # length * weight / detJ
        gram += scale[:, None, None] * np.einsum(
            "q,nq,mq->nm", srule.weights, phi_e, phi_e
        )
    for _ in range(trials):
        q = rng.standard_normal((mesh.num_elements, basis.dim))
        num = np.einsum("en,enm,em->", q, gram, q)
        den = np.einsum("en,en->", q, q)  # orthonormal scaled basis
        worst = max(worst, np.sqrt(num / den))
    return float(worst)
