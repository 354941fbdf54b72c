"""Element-local HDG operators, static condensation and the trace system.

Unknown layout
--------------
Volume, per element (nV = 6*N1 + 5*N0 scalar dofs):
    [u_x, u_y, q_x, q_y, r_x, r_y]  modes of P_{k+1}   (N1 each)
    [s_xx, s_yy, sqrt2*s_xy, p, theta] modes of P_k    (N0 each)
Trace, per face (6*(k+2) scalar dofs):
    [uhat_x, uhat_y, qhat_x, qhat_y, rhat_x, rhat_y] modes of P_{k+1}(F)
uhat dofs on boundary faces are known (Dirichlet data, zero by default) and
are excluded from the condensed system.

The implicit-midpoint operator per element is
    (mass_coeff * (M1 + M2) + damping + stabilization + B-coupling),
with the coupling entering antisymmetrically: +B against the velocity-block
test functions and -B^T against the stress-block test functions, so
testing with the state itself cancels it exactly (discrete energy
identity). The stabilization weight is (k+1)^2 / h_F per face.

Volume unknowns couple only within their element, so the global solve
reduces to a Schur complement on the trace dofs; per-element elimination
factors are cached per congruence class (shared Jacobian, edge data and
material), which collapses structured meshes to a handful of factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from tpwave import geometry
from tpwave.fespace import (
    default_volume_order,
    element_basis,
    face_basis,
    quadrature_segment,
    quadrature_simplex,
)
from tpwave.materials import SQRT2, MaterialField
from tpwave.mesh import Mesh


class HDGError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# discretization tables


class HDGSpace:
    """Reference tables and dof maps for one (mesh, degree) pair."""

    def __init__(self, mesh: Mesh, k: int, quad_order: int | None = None):
        if k < 0:
            raise HDGError(f"polynomial degree must be >= 0, got {k}")
        self.mesh = mesh
        self.k = k
        self.geo = geometry.MeshGeometry(mesh)

        self.basis1 = element_basis(k + 1)
        self.basis0 = element_basis(k)
        self.fbasis = face_basis(k + 1)
        self.N1 = self.basis1.dim
        self.N0 = self.basis0.dim
        self.nfm = k + 2
        self.nV = 6 * self.N1 + 5 * self.N0
        self.nHf = 6 * self.nfm

        order = default_volume_order(k) if quad_order is None else quad_order
        self.vrule = quadrature_simplex(order)
        self.frule = quadrature_segment(order)
        self.phi1 = self.basis1.eval(self.vrule.points)  # (N1, Q)
        self.grad1 = self.basis1.grad(self.vrule.points)  # (N1, Q, 2)
        self.phi0 = self.basis0.eval(self.vrule.points)  # (N0, Q)
        self.psi = self.fbasis.eval(self.frule.points)  # (nfm, Qf)

        # volume/face trace tables per local edge and traversal direction
        self.phi1_face = {}
        self.phi0_face = {}
        self.trc1 = {}
        self.trc0 = {}
        w = self.frule.weights
        for le in range(3):
            for o in (1, -1):
                pts = geometry.edge_ref_points(le, self.frule.points, o)
                p1 = self.basis1.eval(pts)
                p0 = self.basis0.eval(pts)
                self.phi1_face[le, o] = p1
                self.phi0_face[le, o] = p0
                self.trc1[le, o] = np.einsum("q,mq,nq->mn", w, self.psi, p1)
                self.trc0[le, o] = np.einsum("q,mq,nq->mn", w, self.psi, p0)

        # same-element face mass tables (orientation drops out)
        self.fmm1 = {
            le: np.einsum("q,nq,mq->nm", w, self.phi1_face[le, 1], self.phi1_face[le, 1])
            for le in range(3)
        }
        self.fmx = {
            le: np.einsum("q,mq,nq->mn", w, self.phi0_face[le, 1], self.phi1_face[le, 1])
            for le in range(3)
        }

        # trace dof bookkeeping
        nf = mesh.num_faces
        self.n_hat = nf * self.nHf
        self.hat_ids = np.empty((mesh.num_elements, 3 * self.nHf), dtype=np.int64)
        for le in range(3):
            base = mesh.elem_faces[:, le] * self.nHf
            self.hat_ids[:, le * self.nHf : (le + 1) * self.nHf] = (
                base[:, None] + np.arange(self.nHf)[None, :]
            )
        known = np.zeros(self.n_hat, dtype=bool)
        for f in mesh.boundary_faces:
            known[f * self.nHf : f * self.nHf + 2 * self.nfm] = True
        self.known_mask = known
        self.unknown_ids = np.flatnonzero(~known)
        self.known_ids = np.flatnonzero(known)
        self.compress = np.full(self.n_hat, -1, dtype=np.int64)
        self.compress[self.unknown_ids] = np.arange(self.unknown_ids.size)

        # physical quadrature points (volume) and per-boundary-face data
        self.vol_points = self.geo.physical_points(self.vrule.points)
        bf = mesh.boundary_faces
        self.bnd_faces = bf
        v0 = mesh.vertices[mesh.face_vertices[bf, 0]]
        v1 = mesh.vertices[mesh.face_vertices[bf, 1]]
        s = self.frule.points
        self.bnd_points = v0[:, None, :] + s[None, :, None] * (v1 - v0)[:, None, :]
        self.bnd_len = mesh.h_face[bf]
        # outward normal of the single incident element
        e_of = mesh.face_elems[bf, 0]
        self.bnd_normal = np.empty((bf.size, 2))
        for i, (f, e) in enumerate(zip(bf, e_of)):
            le = int(np.flatnonzero(mesh.elem_faces[e] == f)[0])
            self.bnd_normal[i] = self.geo.edge_normal[e, le]

    # -- slices -------------------------------------------------------------

    def u_slice(self, field: int, comp: int) -> slice:
        n = (2 * field + comp) * self.N1
        return slice(n, n + self.N1)

    def th_slice(self, j: int) -> slice:
        n = 6 * self.N1 + j * self.N0
        return slice(n, n + self.N0)

    def hat_slice(self, le: int, field: int, comp: int) -> slice:
        n = le * self.nHf + (2 * field + comp) * self.nfm
        return slice(n, n + self.nfm)

    def vol_view(self, vol: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split (ne, nV) into velocity block (ne,3,2,N1) and stress block (ne,5,N0)."""
        ne = vol.shape[0]
        ub = vol[:, : 6 * self.N1].reshape(ne, 3, 2, self.N1)
        tb = vol[:, 6 * self.N1 :].reshape(ne, 5, self.N0)
        return ub, tb

    def trace_dof_count(self) -> int:
        """Number of unknown trace dofs after boundary conditions."""
        return int(self.unknown_ids.size)


# ---------------------------------------------------------------------------
# element-local blocks


@dataclass
class LocalOperator:
    """Dense blocks of one element's contribution to the midpoint operator."""

    M1: np.ndarray
    M2: np.ndarray
    D: np.ndarray
    B_vu: np.ndarray
    B_hat: np.ndarray
    S_vv: np.ndarray
    S_vh: np.ndarray
    S_hh: np.ndarray

    def system_blocks(self, mass_coeff: float):
        """(A_vv, A_vh, A_hv, A_hh) of the implicit step operator."""
        n1 = self.M1.shape[0]
        n0 = self.M2.shape[0]
        nh = self.S_hh.shape[0]
        A_vv = np.zeros((n1 + n0, n1 + n0))
        A_vv[:n1, :n1] = mass_coeff * self.M1 + self.D + self.S_vv
        A_vv[:n1, n1:] = self.B_vu
        A_vv[n1:, :n1] = -self.B_vu.T
        A_vv[n1:, n1:] = mass_coeff * self.M2
        A_vh = np.zeros((n1 + n0, nh))
        A_vh[:n1] = -self.S_vh
        A_vh[n1:] = -self.B_hat.T
        A_hv = np.zeros((nh, n1 + n0))
        A_hv[:, :n1] = -self.S_vh.T
        A_hv[:, n1:] = self.B_hat
        return A_vv, A_vh, A_hv, self.S_hh


def assemble_local(
    space: HDGSpace, elem: int, mats: MaterialField, stab_sign: float = 1.0
) -> LocalOperator:
    """All dense blocks for one element.

    stab_sign != 1 is a debug hook that breaks the energy identity on
    purpose (negative control for the property suite).
    """
    mesh = space.mesh
    geo = space.geo
    k = space.k
    N1, N0, nfm, nHf = space.N1, space.N0, space.nfm, space.nHf
    mat = mats[int(mesh.region_id[elem])]
    detJ = geo.detJ[elem]
    if detJ <= 0 or not np.isfinite(detJ):
        raise HDGError(f"element {elem} has singular geometry (detJ={detJ})")
    Jinv = geo.Jinv[elem]

    w = space.vrule.weights
    gphys = np.einsum("dc,nqd->nqc", Jinv, space.grad1)  # (N1, Q, 2)
    Dmat = np.einsum("q,mq,nqc->cmn", w, space.phi0, gphys)  # (2, N0, N1)
    DxT, DyT = Dmat[0].T, Dmat[1].T  # (N1, N0)

    nu1, nth = 6 * N1, 5 * N0
    M1 = np.zeros((nu1, nu1))
    D = np.zeros((nu1, nu1))
    M2 = np.zeros((nth, nth))
    eyeN1 = np.eye(N1)
    eyeN0 = np.eye(N0)
    us = lambda f, c: space.u_slice(f, c)  # noqa: E731
    ts = lambda j: slice(j * N0, (j + 1) * N0)  # noqa: E731
    for f in range(3):
        for g in range(3):
            for c in range(2):
                M1[us(f, c), us(g, c)] = mat.R[f, g] * eyeN1
        for c in range(2):
            D[us(f, c), us(f, c)] = mat.damping[f] * eyeN1
    for i in range(3):
        for j in range(3):
            M2[ts(i), ts(j)] = mat.A3[i, j] * eyeN0
    for i in range(2):
        for j in range(2):
            M2[ts(3 + i), ts(3 + j)] = mat.Q[i, j] * eyeN0

    a, b = mat.alpha, mat.beta
    B_vu = np.zeros((nu1, nth))
    B_vu[us(0, 0), ts(0)] += DxT
    B_vu[us(0, 1), ts(1)] += DyT
    B_vu[us(0, 0), ts(2)] += DyT / SQRT2
    B_vu[us(0, 1), ts(2)] += DxT / SQRT2
    B_vu[us(0, 0), ts(3)] -= a * DxT
    B_vu[us(0, 1), ts(3)] -= a * DyT
    B_vu[us(0, 0), ts(4)] -= b * DxT
    B_vu[us(0, 1), ts(4)] -= b * DyT
    B_vu[us(1, 0), ts(3)] -= DxT
    B_vu[us(1, 1), ts(3)] -= DyT
    B_vu[us(2, 0), ts(4)] -= DxT
    B_vu[us(2, 1), ts(4)] -= DyT

    B_hat = np.zeros((3 * nHf, nth))
    S_vv = np.zeros((nu1, nu1))
    S_vh = np.zeros((nu1, 3 * nHf))
    S_hh = np.zeros((3 * nHf, 3 * nHf))
    hs = lambda le, f, c: space.hat_slice(le, f, c)  # noqa: E731

    for le in range(3):
        o = int(mesh.elem_face_orient[elem, le])
        L = geo.edge_length[elem, le]
        nx, ny = geo.edge_normal[elem, le]
        kappa = stab_sign * (k + 1) ** 2 / L
        sc_vv = L / detJ
        sc_vh = np.sqrt(L / detJ)
        FV = sc_vv * space.fmx[le].T  # (N1, N0)
        FH = sc_vh * space.trc0[le, o]  # (nfm, N0)
        FMM = sc_vv * space.fmm1[le]  # (N1, N1)
        TR = sc_vh * space.trc1[le, o]  # (nfm, N1)

        B_vu[us(0, 0), ts(0)] -= nx * FV
        B_vu[us(0, 0), ts(2)] -= ny / SQRT2 * FV
        B_vu[us(0, 1), ts(1)] -= ny * FV
        B_vu[us(0, 1), ts(2)] -= nx / SQRT2 * FV
        B_vu[us(0, 0), ts(3)] += a * nx * FV
        B_vu[us(0, 1), ts(3)] += a * ny * FV
        B_vu[us(0, 0), ts(4)] += b * nx * FV
        B_vu[us(0, 1), ts(4)] += b * ny * FV
        B_vu[us(1, 0), ts(3)] += nx * FV
        B_vu[us(1, 1), ts(3)] += ny * FV
        B_vu[us(2, 0), ts(4)] += nx * FV
        B_vu[us(2, 1), ts(4)] += ny * FV

        B_hat[hs(le, 0, 0), ts(0)] += nx * FH
        B_hat[hs(le, 0, 0), ts(2)] += ny / SQRT2 * FH
        B_hat[hs(le, 0, 1), ts(1)] += ny * FH
        B_hat[hs(le, 0, 1), ts(2)] += nx / SQRT2 * FH
        B_hat[hs(le, 0, 0), ts(3)] -= a * nx * FH
        B_hat[hs(le, 0, 1), ts(3)] -= a * ny * FH
        B_hat[hs(le, 0, 0), ts(4)] -= b * nx * FH
        B_hat[hs(le, 0, 1), ts(4)] -= b * ny * FH
        B_hat[hs(le, 1, 0), ts(3)] -= nx * FH
        B_hat[hs(le, 1, 1), ts(3)] -= ny * FH
        B_hat[hs(le, 2, 0), ts(4)] -= nx * FH
        B_hat[hs(le, 2, 1), ts(4)] -= ny * FH

        for f in range(3):
            for c in range(2):
                S_vv[us(f, c), us(f, c)] += kappa * FMM
                S_vh[us(f, c), hs(le, f, c)] += kappa * TR.T
                S_hh[hs(le, f, c), hs(le, f, c)] += kappa * np.eye(nfm)

    return LocalOperator(
        M1=M1, M2=M2, D=D, B_vu=B_vu, B_hat=B_hat, S_vv=S_vv, S_vh=S_vh, S_hh=S_hh
    )


# ---------------------------------------------------------------------------
# static condensation


def _element_class_keys(space: HDGSpace) -> dict:
    """Group elements sharing local matrices: congruent geometry + material."""
    mesh = space.mesh
    geo = space.geo
    scale = max(mesh.h_elem.max(), 1.0)
    keys: dict[tuple, list[int]] = {}
    for e in range(mesh.num_elements):
        key = (
            int(mesh.region_id[e]),
            tuple(np.round(geo.J[e].ravel() / scale, 12)),
            tuple(np.round(geo.edge_length[e] / scale, 12)),
            tuple(mesh.elem_face_orient[e]),
        )
        keys.setdefault(key, []).append(e)
    return keys


class CondensedSystem:
    """Factorized trace system for one (mesh, k, material, dt, scheme).

    The sparse trace matrix couples only trace dofs sharing an element; its
    structure and values are constant in time, so the factorization is
    computed once and reused every step.
    """

    def __init__(
        self,
        space: HDGSpace,
        mats: MaterialField,
        dt: float,
        scheme: str = "cn",
        stab_sign: float = 1.0,
    ):
        if scheme not in ("cn", "be"):
            raise HDGError(f"unknown scheme {scheme!r}")
        mats.check_regions(space.mesh.region_id)
        self.space = space
        self.mats = mats
        self.dt = float(dt)
        self.scheme = scheme
        self.c = 2.0 if scheme == "cn" else 1.0
        self.mass_coeff = self.c / self.dt if np.isfinite(dt) else 0.0

        mesh = space.mesh
        self.region_R = np.stack([mats[int(r)].R for r in mesh.region_id])
        self.region_A3 = np.stack([mats[int(r)].A3 for r in mesh.region_id])
        self.region_Q = np.stack([mats[int(r)].Q for r in mesh.region_id])
        self.region_damping = np.stack([mats[int(r)].damping for r in mesh.region_id])

        classes = _element_class_keys(space)
        self.class_elems: list[np.ndarray] = []
        self.W: list[np.ndarray] = []
        self.G: list[np.ndarray] = []
        self.A_hv: list[np.ndarray] = []

        rows, cols, vals = [], [], []
        for key, elems in classes.items():
            e0 = elems[0]
            loc = assemble_local(space, e0, mats, stab_sign)
            A_vv, A_vh, A_hv, A_hh = loc.system_blocks(self.mass_coeff)
            # material scales span many orders of magnitude in SI units;
            # symmetric diagonal equilibration keeps the explicit inverse
            # accurate component-wise
            d = np.sqrt(np.abs(np.diag(A_vv)))
            d[d == 0] = 1.0
            try:
                W = np.linalg.inv(A_vv / np.outer(d, d)) / np.outer(d, d)
            except np.linalg.LinAlgError as err:
                raise HDGError(f"local factorization failed on element {e0}: {err}")
            G = W @ A_vh
            S_elem = A_hh - A_hv @ G
            idx = np.asarray(elems, dtype=np.int64)
            self.class_elems.append(idx)
            self.W.append(W)
            self.G.append(G)
            self.A_hv.append(A_hv)
            hat = space.hat_ids[idx]  # (m, 3nHf)
            m = idx.size
            n = hat.shape[1]
            rows.append(np.repeat(hat, n, axis=1).ravel())
            cols.append(np.tile(hat, (1, n)).ravel())
            vals.append(np.tile(S_elem.ravel(), m))

        n_hat = space.n_hat
        S = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_hat, n_hat),
        ).tocsc()
        self.S_full = S
        unk = space.unknown_ids
        kn = space.known_ids
        self.S_uu = S[unk][:, unk].tocsc()
        self.S_uk = S[unk][:, kn].tocsc()
        ds = np.sqrt(np.abs(self.S_uu.diagonal()))
        ds[ds == 0] = 1.0
        self._hat_scale = ds
        Dinv = sparse.diags(1.0 / ds)
        self.lu = spla.splu((Dinv @ self.S_uu @ Dinv).tocsc())

    # -- per-step operations ------------------------------------------------

    def forward_eliminate(self, b_vol: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-element W b and the hat-space condensation of the volume loads."""
        space = self.space
        Wb = np.empty_like(b_vol)
        r_hat = np.zeros(space.n_hat)
        for idx, W, A_hv in zip(self.class_elems, self.W, self.A_hv):
            wb = np.einsum("ij,ej->ei", W, b_vol[idx])
            Wb[idx] = wb
            contrib = np.einsum("ij,ej->ei", A_hv, wb)
            np.add.at(r_hat, space.hat_ids[idx].ravel(), contrib.ravel())
        return Wb, r_hat

    def solve(
        self,
        b_vol: np.ndarray,
        f_hat: np.ndarray | None = None,
        d_known: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Solve one implicit stage; returns (volume, hat) stage coefficients.

        b_vol: (ne, nV) volume right-hand side (loads + mass history).
        f_hat: (n_hat,) face right-hand side (Dirichlet data terms).
        d_known: values of the known boundary uhat dofs.
        """
        space = self.space
        Wb, r_hat = self.forward_eliminate(b_vol)
        rhs = -r_hat
        if f_hat is not None:
            rhs += f_hat
        rhs_u = rhs[space.unknown_ids]
        hat = np.zeros(space.n_hat)
        if d_known is not None and d_known.size:
            rhs_u -= self.S_uk @ d_known
            hat[space.known_ids] = d_known
        x = self.lu.solve(rhs_u / self._hat_scale) / self._hat_scale
        if not np.all(np.isfinite(x)):
            raise HDGError("trace solve produced non-finite values")
        hat[space.unknown_ids] = x

        vol = np.empty_like(b_vol)
        for idx, W, G in zip(self.class_elems, self.W, self.G):
            hloc = hat[space.hat_ids[idx]]
            vol[idx] = Wb[idx] - np.einsum("ij,ej->ei", G, hloc)
        return vol, hat

    def apply_mass(self, vol: np.ndarray) -> np.ndarray:
        """(M1 + M2) applied to volume coefficients, element-wise."""
        space = self.space
        ub, tb = space.vol_view(vol)
        out = np.empty_like(vol)
        oub, otb = space.vol_view(out)
        oub[:] = np.einsum("efg,egcn->efcn", self.region_R, ub)
        otb[:, :3] = np.einsum("eij,ejn->ein", self.region_A3, tb[:, :3])
        otb[:, 3:] = np.einsum("eij,ejn->ein", self.region_Q, tb[:, 3:])
        return out

    def energy(self, vol: np.ndarray) -> float:
        """Discrete energy 0.5 (|ubar|^2_H1 + |Theta|^2_H2) of a volume state."""
        return 0.5 * float(np.sum(vol * self.apply_mass(vol)))

    def damping_power(self, vol: np.ndarray) -> float:
        """Quadratic form of the damping operator on a volume state."""
        ub, _ = self.space.vol_view(vol)
        sq = np.einsum("efcn,efcn->ef", ub, ub)
        return float(np.sum(self.region_damping * sq))


# ---------------------------------------------------------------------------
# traces, stabilization diagnostics and the numerical flux


def trace_coefficients(space: HDGSpace, vol: np.ndarray):
    """Face-basis coefficients of the volume traces on every element side.

    Returns (tu, tth): tu has shape (ne, 3, 3, 2, nfm) indexed by
    (element, local edge, field, component, mode); tth has shape
    (ne, 3, 5, nfm) for the stress-block fields. Traces of polynomials are
    exact in the face basis.
    """
    mesh = space.mesh
    geo = space.geo
    ub, tb = space.vol_view(vol)
    ne = vol.shape[0]
    tu = np.empty((ne, 3, 3, 2, space.nfm))
    tth = np.empty((ne, 3, 5, space.nfm))
    for le in range(3):
        L = geo.edge_length[:, le]
        sc = np.sqrt(L / geo.detJ)
        for o in (1, -1):
            sel = np.flatnonzero(mesh.elem_face_orient[:, le] == o)
            if sel.size == 0:
                continue
            t1 = space.trc1[le, o]
            t0 = space.trc0[le, o]
            tu[sel, le] = sc[sel, None, None, None] * np.einsum(
                "mn,efcn->efcm", t1, ub[sel]
            )
            tth[sel, le] = sc[sel, None, None] * np.einsum(
                "mn,ejn->ejm", t0, tb[sel]
            )
    return tu, tth


def stabilization_power(space: HDGSpace, vol: np.ndarray, hat: np.ndarray) -> float:
    """|| (k+1)/sqrt(h_F) (ubar_h - uhat_h) ||^2 over all element boundaries."""
    mesh = space.mesh
    tu, _ = trace_coefficients(space, vol)
    hat_f = hat.reshape(mesh.num_faces, 3, 2, space.nfm)
    total = 0.0
    for le in range(3):
        f = mesh.elem_faces[:, le]
        kappa = (space.k + 1) ** 2 / mesh.h_face[f]
        diff = tu[:, le] - hat_f[f]
        total += float(np.sum(kappa[:, None, None, None] * diff**2))
    return total


def apply_numerical_flux(
    system: CondensedSystem,
    vol: np.ndarray,
    dirichlet=None,
    t: float = 0.0,
) -> np.ndarray:
    """Face unknowns determined by the volume state via the trace equations.

    On interior faces
        uhat = P_F[ mean(u) - h_F/(k+1)^2 mean((sigma - (alpha p + beta theta) I) n) ]
        qhat = P_F[ mean(q) + h_F/(k+1)^2 mean(p n) ]
        rhat = P_F[ mean(r) + h_F/(k+1)^2 mean(theta n) ]
    where the means average the two one-sided traces with each element's own
    outward normal. On boundary faces uhat equals the Dirichlet datum and
    qhat, rhat use the one-sided values (with the pressure/temperature data
    subtracted when nonzero).
    """
    space = system.space
    mesh = space.mesh
    geo = space.geo
    k = space.k
    tu, tth = trace_coefficients(space, vol)

    # per-(element, edge) coefficients of the normal-flux triple
    ne = mesh.num_elements
    flux = np.empty((ne, 3, 3, 2, space.nfm))
    alpha = np.array([system.mats[int(r)].alpha for r in mesh.region_id])
    beta = np.array([system.mats[int(r)].beta for r in mesh.region_id])
    for le in range(3):
        nx = geo.edge_normal[:, le, 0]
        ny = geo.edge_normal[:, le, 1]
        s1, s2, s3 = tth[:, le, 0], tth[:, le, 1], tth[:, le, 2] / SQRT2
        pp, th = tth[:, le, 3], tth[:, le, 4]
        eff = alpha[:, None] * pp + beta[:, None] * th
        flux[:, le, 0, 0] = (s1 - eff) * nx[:, None] + s3 * ny[:, None]
        flux[:, le, 0, 1] = s3 * nx[:, None] + (s2 - eff) * ny[:, None]
        flux[:, le, 1, 0] = pp * nx[:, None]
        flux[:, le, 1, 1] = pp * ny[:, None]
        flux[:, le, 2, 0] = th * nx[:, None]
        flux[:, le, 2, 1] = th * ny[:, None]

    hat = np.zeros((mesh.num_faces, 3, 2, space.nfm))
    count = np.zeros(mesh.num_faces)
    acc_u = np.zeros_like(hat)
    acc_flux = np.zeros_like(hat)
    for le in range(3):
        f = mesh.elem_faces[:, le]
        np.add.at(acc_u, f, tu[:, le])
        np.add.at(acc_flux, f, flux[:, le])
        np.add.at(count, f, 1.0)
    weight = mesh.h_face / (k + 1) ** 2
    sign = np.array([-1.0, 1.0, 1.0])  # uhat gets -, qhat/rhat get +
    hat = (
        acc_u + sign[None, :, None, None] * weight[:, None, None, None] * acc_flux
    ) / count[:, None, None, None]

    # boundary corrections: uhat is data; p/theta data shifts qhat/rhat
    bf = space.bnd_faces
    if bf.size:
        if dirichlet is None:
            hat[bf, 0] = 0.0
        else:
            gu, gp, gth = dirichlet
            psi = space.psi
            w = space.frule.weights
            sqrtL = np.sqrt(space.bnd_len)
            if gu is not None:
                uvals = gu(t, space.bnd_points)
                hat[bf, 0] = sqrtL[:, None, None] * np.einsum(
                    "q,mq,fqc->fcm", w, psi, uvals
                )
            else:
                hat[bf, 0] = 0.0
            wb = space.bnd_len[:, None] / (k + 1) ** 2  # h_F/(k+1)^2, one-sided
            if gp is not None:
                pv = gp(t, space.bnd_points)
                coef = sqrtL[:, None, None] * np.einsum(
                    "q,mq,fq,fc->fcm", w, psi, pv, space.bnd_normal
                )
                hat[bf, 1] -= wb[:, :, None] * coef
            if gth is not None:
                tv = gth(t, space.bnd_points)
                coef = sqrtL[:, None, None] * np.einsum(
                    "q,mq,fq,fc->fcm", w, psi, tv, space.bnd_normal
                )
                hat[bf, 2] -= wb[:, :, None] * coef
    return hat.reshape(space.n_hat)


# ---------------------------------------------------------------------------
# monolithic assembly (oracle route, small instances only)


def assemble_monolithic(
    space: HDGSpace,
    mats: MaterialField,
    mass_coeff: float,
    stab_sign: float = 1.0,
) -> np.ndarray:
    """Dense stage matrix over all volume and trace dofs, no condensation.

    Known boundary uhat dofs get identity rows (their value is data). Meant
    for small instances; cross-checks the condensed path.
    """
    mesh = space.mesh
    ne = mesh.num_elements
    nV = space.nV
    n = ne * nV + space.n_hat
    A = np.zeros((n, n))
    off = ne * nV
    for e in range(ne):
        loc = assemble_local(space, e, mats, stab_sign)
        A_vv, A_vh, A_hv, A_hh = loc.system_blocks(mass_coeff)
        sl = slice(e * nV, (e + 1) * nV)
        hid = space.hat_ids[e] + off
        A[sl, sl] += A_vv
        A[sl.start : sl.stop, hid] += A_vh
        A[hid, sl.start : sl.stop] += A_hv
        A[np.ix_(hid, hid)] += A_hh
    for d in space.known_ids:
        A[off + d, :] = 0.0
        A[off + d, off + d] = 1.0
    return A
