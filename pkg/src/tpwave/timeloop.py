"""Crank-Nicolson time integration with discrete-energy diagnostics.

One step solves for the midpoint stage z* of the condensed system,

    (c/dt) M (z* - z^n) + K z* = loads(t*),    z^{n+1} = c z* - (c-1) z^n,

with c = 2 (implicit midpoint, t* = t + dt/2) or c = 1 (backward Euler
debug mode, t* = t + dt). The trace unknowns are algebraic: they satisfy
their equations at the stage point and are extrapolated alongside the
volume unknowns.

Testing the stage equations with the stage state gives an exact per-step
balance,

    (E^{n+1} - E^n)/dt + damping(z*) + stabilization(z*) = source power,

which the energy report evaluates every step; its residual is round-off
for an exact linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tpwave.hdg import (
    CondensedSystem,
    HDGSpace,
    apply_numerical_flux,
    stabilization_power,
    trace_coefficients,
)
from tpwave.materials import SQRT2


class TimeLoopError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T]; T is adjusted to the nearest step multiple."""

    T: float
    dt: float
    steps: int = field(init=False)
    T_adjusted: float = field(init=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise TimeLoopError(f"dt must be positive, got {self.dt}")
        steps = max(1, round(self.T / self.dt))
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "T_adjusted", steps * self.dt)


@dataclass
class DiscreteState:
    """Volume and trace coefficients at one time level."""

    vol: np.ndarray  # (ne, nV)
    hat: np.ndarray  # (n_hat,)
    t: float = 0.0

    def copy(self) -> "DiscreteState":
        return DiscreteState(self.vol.copy(), self.hat.copy(), self.t)


class ProblemData:
    """Sources and Dirichlet data feeding the right-hand side.

    Every entry may be None (interpreted as zero):
      f_ubar(t, pts)   -> (..., 2, 3)   loads of the three velocity equations
      g_sigma(t, pts)  -> (..., 3)      stored-component stress-law residual
      g_p(t, pts)      -> (...,)        mass-balance source
      g_heat(t, pts)   -> (...,)        energy-balance source
      dirichlet_u/p/theta(t, pts)       boundary data
    """

    def __init__(self, f_ubar=None, g_sigma=None, g_p=None, g_heat=None,
                 dirichlet_u=None, dirichlet_p=None, dirichlet_theta=None):
        self.f_ubar = f_ubar
        self.g_sigma = g_sigma
        self.g_p = g_p
        self.g_heat = g_heat
        self.dirichlet_u = dirichlet_u
        self.dirichlet_p = dirichlet_p
        self.dirichlet_theta = dirichlet_theta

    @property
    def homogeneous(self) -> bool:
        return (
            self.dirichlet_u is None
            and self.dirichlet_p is None
            and self.dirichlet_theta is None
        )

    @classmethod
    def from_mms(cls, sol) -> "ProblemData":
        """All six residual sources plus boundary traces of a manufactured solution."""
        return cls(
            f_ubar=sol.sources_velocity,
            g_sigma=lambda t, xy: sol.field("G_sigma", t, xy),
            g_p=lambda t, xy: sol.field("g_p", t, xy),
            g_heat=lambda t, xy: sol.field("g", t, xy),
            dirichlet_u=lambda t, xy: sol.field("u", t, xy),
            dirichlet_p=lambda t, xy: sol.field("p", t, xy),
            dirichlet_theta=lambda t, xy: sol.field("theta", t, xy),
        )


class LoadAssembler:
    """Projects sources and boundary data onto the discrete test spaces."""

    def __init__(self, system: CondensedSystem, data: ProblemData):
        self.system = system
        self.data = data
        sp = system.space
        self._sqrt_detJ = np.sqrt(sp.geo.detJ)
        self._sqrtL = np.sqrt(sp.bnd_len)

    def volume_loads(self, t: float) -> np.ndarray:
        """(ne, nV) load projections: no mass-history contribution."""
        sys = self.system
        sp = sys.space
        d = self.data
        out = np.zeros((sp.mesh.num_elements, sp.nV))
        oub, otb = sp.vol_view(out)
        w = sp.vrule.weights
        pts = sp.vol_points
        if d.f_ubar is not None:
            F = d.f_ubar(t, pts)  # (ne, Q, 2, 3)
            oub[:] = np.einsum(
                "e,q,nq,eqcf->efcn", self._sqrt_detJ, w, sp.phi1, F
            )
        if d.g_sigma is not None:
            G = d.g_sigma(t, pts)  # (ne, Q, 3) stored
            AG = np.einsum("eij,eqj->eqi", sys.region_A3, G)
            otb[:, :3] = np.einsum(
                "e,q,nq,eqi->ein", self._sqrt_detJ, w, sp.phi0, AG
            )
        if d.g_p is not None:
            gp = d.g_p(t, pts)
            otb[:, 3] = np.einsum("e,q,nq,eq->en", self._sqrt_detJ, w, sp.phi0, gp)
        if d.g_heat is not None:
            gh = d.g_heat(t, pts)
            otb[:, 4] = np.einsum("e,q,nq,eq->en", self._sqrt_detJ, w, sp.phi0, gh)
        return out

    def face_loads(self, t: float) -> np.ndarray | None:
        """Dirichlet pressure/temperature terms on boundary trace rows."""
        d = self.data
        if d.dirichlet_p is None and d.dirichlet_theta is None:
            return None
        sp = self.system.space
        f_hat = np.zeros(sp.n_hat)
        view = f_hat.reshape(sp.mesh.num_faces, 3, 2, sp.nfm)
        w = sp.frule.weights
        for fld, fun in ((1, d.dirichlet_p), (2, d.dirichlet_theta)):
            if fun is None:
                continue
            vals = fun(t, sp.bnd_points)  # (nbf, Qf)
            coef = self._sqrtL[:, None, None] * np.einsum(
                "q,mq,fq,fc->fcm", w, sp.psi, vals, sp.bnd_normal
            )
            view[sp.bnd_faces, fld] -= coef
        return f_hat

    def known_values(self, t: float) -> np.ndarray | None:
        """Boundary uhat dofs: face projections of the velocity datum."""
        d = self.data
        sp = self.system.space
        if d.dirichlet_u is None or sp.bnd_faces.size == 0:
            return None
        w = sp.frule.weights
        uvals = d.dirichlet_u(t, sp.bnd_points)  # (nbf, Qf, 2)
        coef = self._sqrtL[:, None, None] * np.einsum(
            "q,mq,fqc->fcm", w, sp.psi, uvals
        )
        d_known = np.zeros((sp.bnd_faces.size, 2, sp.nfm))
        d_known[:] = coef
        return d_known.reshape(-1)


def project_initial(system: CondensedSystem, sol) -> DiscreteState:
    """Element/face L2 projections of a solution object at t = 0.

    sol provides velocity_block(t, pts) and field(name, t, pts) for
    "sigma", "p", "theta", "u", "q", "r" (a ManufacturedSolution, or any
    object with the same surface).
    """
    sp = system.space
    w = sp.vrule.weights
    pts = sp.vol_points
    vol = np.zeros((sp.mesh.num_elements, sp.nV))
    ub, tb = sp.vol_view(vol)
    sq = np.sqrt(sp.geo.detJ)
    ub[:] = np.einsum("e,q,nq,eqcf->efcn", sq, w, sp.phi1, sol.velocity_block(0.0, pts))
    tb[:, :3] = np.einsum("e,q,nq,eqi->ein", sq, w, sp.phi0, sol.field("sigma", 0.0, pts))
    tb[:, 3] = np.einsum("e,q,nq,eq->en", sq, w, sp.phi0, sol.field("p", 0.0, pts))
    tb[:, 4] = np.einsum("e,q,nq,eq->en", sq, w, sp.phi0, sol.field("theta", 0.0, pts))

    # face projections of the velocity block on every face
    mesh = sp.mesh
    v0 = mesh.vertices[mesh.face_vertices[:, 0]]
    v1 = mesh.vertices[mesh.face_vertices[:, 1]]
    s = sp.frule.points
    fpts = v0[:, None, :] + s[None, :, None] * (v1 - v0)[:, None, :]
    fw = sp.frule.weights
    vals = sol.velocity_block(0.0, fpts)  # (nf, Qf, 2, 3)
    coef = np.sqrt(mesh.h_face)[:, None, None, None] * np.einsum(
        "q,mq,eqcf->efcm", fw, sp.psi, vals
    )
    hat = coef.reshape(sp.n_hat)
    return DiscreteState(vol=vol, hat=hat, t=0.0)


def zero_state(system: CondensedSystem) -> DiscreteState:
    sp = system.space
    return DiscreteState(
        vol=np.zeros((sp.mesh.num_elements, sp.nV)), hat=np.zeros(sp.n_hat), t=0.0
    )


@dataclass
class EnergyReport:
    """Per-step energy bookkeeping; all works are time-integrated over a step."""

    rows: list = field(default_factory=list)  # (step, t, E, damp, stab, src, resid)

    def append(self, step, t, E, damp, stab, src, resid):
        self.rows.append((step, t, E, damp, stab, src, resid))

    @property
    def energies(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r[6] for r in self.rows])

    def max_relative_residual(self) -> float:
        rows = np.asarray(self.rows)
        scale = np.maximum.reduce(
            [np.abs(rows[:, 2]), np.abs(rows[:, 5]), np.full(rows.shape[0], 1e-300)]
        )
        scale = np.maximum(scale.max(), 1e-300)
        return float(np.abs(rows[1:, 6]).max() / scale) if rows.shape[0] > 1 else 0.0


def _boundary_power(system: CondensedSystem, vol: np.ndarray, hat: np.ndarray) -> float:
    """Work of the known boundary uhat dofs against their (dropped) equations.

    Zero for homogeneous Dirichlet data; keeps the energy balance exact for
    manufactured runs with nonzero velocity data.
    """
    sp = system.space
    mesh = sp.mesh
    known = hat[sp.known_ids]
    if not np.any(known):
        return 0.0
    tu, tth = trace_coefficients(sp, vol)
    geo = sp.geo
    k = sp.k
    alpha = np.array([system.mats[int(r)].alpha for r in mesh.region_id])
    beta = np.array([system.mats[int(r)].beta for r in mesh.region_id])
    hat_u = hat.reshape(mesh.num_faces, 3, 2, sp.nfm)[:, 0]
    total = 0.0
    bnd_set = set(sp.bnd_faces.tolist())
    for le in range(3):
        faces = mesh.elem_faces[:, le]
        on_bnd = np.array([f in bnd_set for f in faces])
        if not on_bnd.any():
            continue
        sel = np.flatnonzero(on_bnd)
        f = faces[sel]
        nx = geo.edge_normal[sel, le, 0][:, None]
        ny = geo.edge_normal[sel, le, 1][:, None]
        s1 = tth[sel, le, 0]
        s2 = tth[sel, le, 1]
        s3 = tth[sel, le, 2] / SQRT2
        eff = alpha[sel, None] * tth[sel, le, 3] + beta[sel, None] * tth[sel, le, 4]
        fx = (s1 - eff) * nx + s3 * ny
        fy = s3 * nx + (s2 - eff) * ny
        kappa = (k + 1) ** 2 / mesh.h_face[f]
        du = tu[sel, le, 0] - hat_u[f]
        row_x = fx - kappa[:, None] * du[:, 0]
        row_y = fy - kappa[:, None] * du[:, 1]
        total += float(np.sum(hat_u[f, 0] * row_x) + np.sum(hat_u[f, 1] * row_y))
    return total


class Stepper:
    """Bound (system, data) pair advancing one implicit stage at a time."""

    def __init__(self, system: CondensedSystem, data: ProblemData):
        self.system = system
        self.data = data
        self.loads = LoadAssembler(system, data)

    def step(self, state: DiscreteState, dt: float, collect_energy: bool = False):
        sys = self.system
        c = sys.c
        t_stage = state.t + dt / 2.0 if sys.scheme == "cn" else state.t + dt
        ell = self.loads.volume_loads(t_stage)
        b_vol = ell + sys.mass_coeff * sys.apply_mass(state.vol)
        f_hat = self.loads.face_loads(t_stage)
        d_known = self.loads.known_values(t_stage)
        vol_s, hat_s = sys.solve(b_vol, f_hat, d_known)

        new = DiscreteState(
            vol=c * vol_s - (c - 1.0) * state.vol,
            hat=c * hat_s - (c - 1.0) * state.hat,
            t=state.t + dt,
        )
        if not np.all(np.isfinite(new.vol)):
            bad = np.argwhere(~np.isfinite(new.vol))
            raise TimeLoopError(
                f"non-finite value at t={new.t:.6g} (element {bad[0][0]}, dof {bad[0][1]})"
            )
        if not collect_energy:
            return new, None

        E0 = sys.energy(state.vol)
        E1 = sys.energy(new.vol)
        damp = dt * sys.damping_power(vol_s)
        stab = dt * stabilization_power(sys.space, vol_s, hat_s)
        src = dt * float(np.sum(ell * vol_s))
        if f_hat is not None:
            src += dt * float(np.dot(f_hat, hat_s))
        src += dt * _boundary_power(sys, vol_s, hat_s)
        resid = (E1 - E0) + damp + stab - src
        return new, (E0, E1, damp, stab, src, resid)


def run(
    system: CondensedSystem,
    data: ProblemData,
    state0: DiscreteState,
    grid: TimeGrid,
    monitors: list | None = None,
    collect_energy: bool = True,
) -> tuple[DiscreteState, EnergyReport]:
    """Advance `grid.steps` Crank-Nicolson steps from state0.

    Monitors are callables monitor(step, state, stage) sampled after every
    update (and once at step 0 with stage=None).
    """
    stepper = Stepper(system, data)
    report = EnergyReport()
    state = state0.copy()
    monitors = monitors or []
    if collect_energy:
        report.append(0, state.t, system.energy(state.vol), 0.0, 0.0, 0.0, 0.0)
    for mon in monitors:
        mon(0, state, None)
    for n in range(grid.steps):
        state, energy = stepper.step(state, grid.dt, collect_energy=collect_energy)
        if energy is not None:
            _, E1, damp, stab, src, resid = energy
            report.append(n + 1, state.t, E1, damp, stab, src, resid)
        for mon in monitors:
            mon(n + 1, state, energy)
    return state, report
