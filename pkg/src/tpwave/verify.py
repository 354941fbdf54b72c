"""Weighted error norms, convergence studies, patch test and the dense oracle.

Error measures follow the weighted inner products of the continuous
problem: the stress-block error uses the compliance/storage weights,

    e_Theta^2 = <A (s - s_h), s - s_h> + <Q (p - p_h; th - th_h), .>,

the velocity-block error uses the density weight R, both at the final
time. Rates between consecutive refinement levels are
log(e_i/e_{i+1}) / log(param_i/param_{i+1}).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tpwave import mms as mms_mod
from tpwave.fespace import error_norm_order, quadrature_simplex
from tpwave.hdg import HDGSpace, CondensedSystem, assemble_monolithic, stabilization_power
from tpwave.materials import MaterialField, MaterialParameters
from tpwave.mesh import Mesh, build_structured_mesh
from tpwave.timeloop import (
    DiscreteState,
    ProblemData,
    Stepper,
    TimeGrid,
    project_initial,
    run,
)


class VerifyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# error norms


def error_norms(system: CondensedSystem, state: DiscreteState, sol) -> dict:
    """Weighted final-time errors of a discrete state against exact fields.

    Returns e_theta, e_u and the stabilization jump seminorm of the state.
    """
    sp = system.space
    k = sp.k
    rule = quadrature_simplex(error_norm_order(k))
    phi1 = sp.basis1.eval(rule.points)
    phi0 = sp.basis0.eval(rule.points)
    pts = sp.geo.physical_points(rule.points)
    detJ = sp.geo.detJ
    w = rule.weights
    t = state.t

    ub, tb = sp.vol_view(state.vol)
    scale = 1.0 / np.sqrt(detJ)
    uh = np.einsum("efcn,nq->eqcf", ub, phi1) * scale[:, None, None, None]
    th_h = np.einsum("ejn,nq->eqj", tb, phi0) * scale[:, None, None]

    du = uh - sol.velocity_block(t, pts)  # (ne, Q, 2, 3)
    dsig = th_h[:, :, :3] - sol.field("sigma", t, pts)
    dpt = np.stack(
        [th_h[:, :, 3] - sol.field("p", t, pts), th_h[:, :, 4] - sol.field("theta", t, pts)],
        axis=-1,
    )

    eu2 = np.einsum("e,q,efg,eqcf,eqcg->", detJ, w, system.region_R, du, du)
    eth2 = np.einsum("e,q,eij,eqi,eqj->", detJ, w, system.region_A3, dsig, dsig)
    eth2 += np.einsum("e,q,eij,eqi,eqj->", detJ, w, system.region_Q, dpt, dpt)
    jump = np.sqrt(stabilization_power(sp, state.vol, state.hat))
    return {
        "e_u": float(np.sqrt(eu2)),
        "e_theta": float(np.sqrt(eth2)),
        "jump": float(jump),
    }


# ---------------------------------------------------------------------------
# convergence tables


@dataclass
class ConvergenceTable:
    """Rows of error measures per refinement level with observed rates.

    rate_keys names the error entries the rate columns are computed from
    (final-time errors by default; the temporal study rates the
    time-integrated errors, which are immune to the phase-interference
    noise of single-time sampling on wave systems).
    """

    param_name: str
    rate_keys: tuple[str, str] = ("e_theta", "e_u")
    rows: list = field(default_factory=list)

    def append(self, param: float, errs: dict):
        self.rows.append({self.param_name: param, **errs})

    def rates(self) -> list[tuple[float, float]]:
        out = [(np.nan, np.nan)]
        kt, ku = self.rate_keys
        for r0, r1 in zip(self.rows, self.rows[1:]):
            den = np.log(r0[self.param_name] / r1[self.param_name])
            def one(a, b):
                return np.log(a / b) / den if a > 1e-300 and b > 1e-300 else np.nan
            out.append((one(r0[kt], r1[kt]), one(r0[ku], r1[ku])))
        return out

    def finest_rates(self) -> tuple[float, float]:
        return self.rates()[-1]

    def as_records(self) -> list[dict]:
        recs = []
        for row, (rt, ru) in zip(self.rows, self.rates()):
            rec = {"level": len(recs), self.param_name: row[self.param_name]}
            for key in ("e_theta", "e_u", "jump", "int_theta", "int_u"):
                if key in row:
                    rec["jump_seminorm" if key == "jump" else key] = row[key]
            rec["rate_theta"] = rt
            rec["rate_u"] = ru
            recs.append(rec)
        return recs


class ErrorIntegrator:
    """Monitor accumulating squared error norms over the trajectory."""

    def __init__(self, system: CondensedSystem, sol, dt: float):
        self.system = system
        self.sol = sol
        self.dt = dt
        self.acc_theta = 0.0
        self.acc_u = 0.0

    def __call__(self, step, state, stage):
        if step == 0:
            return
        e = error_norms(self.system, state, self.sol)
        self.acc_theta += self.dt * e["e_theta"] ** 2
        self.acc_u += self.dt * e["e_u"] ** 2

    def results(self) -> dict:
        return {
            "int_theta": float(np.sqrt(self.acc_theta)),
            "int_u": float(np.sqrt(self.acc_u)),
        }


def _mms_run(
    mesh: Mesh,
    k: int,
    material: MaterialParameters,
    sol,
    T: float,
    dt: float,
    scheme: str = "cn",
    integrate_errors: bool = False,
) -> dict:
    mats = MaterialField({int(r): material for r in np.unique(mesh.region_id)})
    space = HDGSpace(mesh, k)
    grid = TimeGrid(T=T, dt=dt)
    system = CondensedSystem(space, mats, dt=grid.dt, scheme=scheme)
    data = ProblemData.from_mms(sol)
    state0 = project_initial(system, sol)
    monitors = []
    integ = None
    if integrate_errors:
        integ = ErrorIntegrator(system, sol, grid.dt)
        monitors.append(integ)
    state, report = run(system, data, state0, grid, monitors, collect_energy=False)
    errs = error_norms(system, state, sol)
    if integ is not None:
        errs.update(integ.results())
    errs["T"] = grid.T_adjusted
    errs["steps"] = grid.steps
    return errs


def study_dt_for_h(h: float, k: int, c_t: float = 0.25) -> float:
    """Time step slaved to the mesh size, dt = c_t * h^((k+2)/2)."""
    return c_t * h ** ((k + 2) / 2.0)


def converge_h(
    k: int,
    nxs: list[int],
    material: MaterialParameters,
    T: float = 0.5,
    c_t: float = 0.25,
    sol=None,
    jitter: float = 0.0,
    scheme: str = "cn",
) -> ConvergenceTable:
    """Spatial convergence on a sequence of structured meshes.

    The nominal mesh size is 1/nx; dt is slaved to it so the temporal error
    stays subdominant. Target rates: e_theta -> k+1, e_u -> k+2.
    """
    if len(nxs) < 3:
        raise VerifyError("converge_h needs at least 3 levels")
    sol = sol or mms_mod.trig_solution(material)
    table = ConvergenceTable("h")
    for nx in nxs:
        mesh = build_structured_mesh(nx, nx, jitter=jitter, seed=7)
        h = 1.0 / nx
        dt0 = study_dt_for_h(h, k, c_t)
        steps = max(1, round(T / dt0))
        errs = _mms_run(mesh, k, material, sol, T, T / steps, scheme)
        table.append(h, errs)
    return table


def converge_k(
    nx: int,
    ks: list[int],
    material: MaterialParameters,
    T: float = 0.1,
    dt: float = 1e-4,
    sol=None,
) -> ConvergenceTable:
    """Degree convergence at fixed mesh and (small) fixed time step.

    For the analytic manufactured solution the error must drop
    exponentially in k (straight line on a semilog plot).
    """
    sol = sol or mms_mod.trig_solution(material)
    mesh = build_structured_mesh(nx, nx)
    table = ConvergenceTable("k")
    for k in ks:
        errs = _mms_run(mesh, k, material, sol, T, dt)
        table.append(float(k), errs)
    return table


def k_study_slope(table: ConvergenceTable) -> tuple[float, float]:
    """Least-squares slopes of log(e) versus k for both error measures."""
    ks = np.array([r[0] for r in table.rows])
    st = np.polyfit(ks, np.log(np.array([r[1] for r in table.rows])), 1)[0]
    su = np.polyfit(ks, np.log(np.array([r[2] for r in table.rows])), 1)[0]
    return float(st), float(su)


def converge_dt(
    nx: int,
    k: int,
    material: MaterialParameters,
    T: float = 0.5,
    step_counts: list[int] = (8, 16, 32, 64, 128),
    sol=None,
    scheme: str = "cn",
) -> ConvergenceTable:
    """Temporal convergence at fixed space discretization.

    The spatial resolution must keep the space error subdominant at the
    smallest dt (checked by the acceptance suite by halving h once).
    Errors are reported both at the final time and L2-integrated over the
    trajectory; rates are computed from the integrated measures, which
    average out the phase-interference noise that single-time sampling
    shows on underresolved undamped elastic modes. Target rate 2 for
    Crank-Nicolson, 1 for the backward Euler debug mode.
    """
    sol = sol or mms_mod.trig_solution(material)
    mesh = build_structured_mesh(nx, nx)
    table = ConvergenceTable("dt", rate_keys=("int_theta", "int_u"))
    for L in step_counts:
        errs = _mms_run(mesh, k, material, sol, T, T / L, scheme, integrate_errors=True)
        table.append(T / L, errs)
    return table


# ---------------------------------------------------------------------------
# patch test


def patch_test(
    k: int,
    mesh: Mesh,
    material: MaterialParameters,
    steps: int = 10,
    dt: float = 0.05,
    extra_degree: int = 0,
) -> dict:
    """Reproduce a polynomial solution lying in the discrete spaces.

    The velocity block has spatial degree k+1, the stress block degree k,
    all fields linear in time; Crank-Nicolson is exact for them, so the
    discrete solution must match the exact fields to round-off at every
    step. Returns the worst relative deviation over steps and fields.
    extra_degree > 0 is the negative control (fields leave the spaces).
    """
    sol = mms_mod.polynomial_solution(material, k, extra_degree)
    mats = MaterialField({int(r): material for r in np.unique(mesh.region_id)})
    space = HDGSpace(mesh, k)
    system = CondensedSystem(space, mats, dt=dt)
    data = ProblemData.from_mms(sol)
    state = project_initial(system, sol)
    stepper = Stepper(system, data)

    scale = max(float(np.abs(state.vol).max()), 1e-12)
    worst = 0.0
    for n in range(steps):
        state, _ = stepper.step(state, dt)
        exact = project_initial(system, _Shifted(sol, state.t))
        dev = float(np.abs(state.vol - exact.vol).max())
        worst = max(worst, dev / scale)
    return {"max_rel_deviation": worst, "passed": worst <= 1e-10}


class _Shifted:
    """View of a solution with the time origin moved to t0 (projection helper)."""

    def __init__(self, sol, t0: float):
        self.sol = sol
        self.t0 = t0

    def velocity_block(self, t, xy):
        return self.sol.velocity_block(self.t0 + t, xy)

    def field(self, name, t, xy):
        return self.sol.field(name, self.t0 + t, xy)


# ---------------------------------------------------------------------------
# dense one-step oracle


def oracle_monolithic(
    mesh: Mesh,
    k: int,
    material: MaterialParameters,
    dt: float = 0.05,
    sol=None,
    seed: int = 0,
) -> dict:
    """One Crank-Nicolson stage solved with and without condensation.

    The dense route assembles every volume and trace unknown in one matrix;
    the condensed route must agree coefficient-wise.
    """
    if mesh.num_elements > 8 or k > 2:
        raise VerifyError("oracle instances are capped at 8 elements and k <= 2")
    mats = MaterialField({int(r): material for r in np.unique(mesh.region_id)})
    space = HDGSpace(mesh, k)
    system = CondensedSystem(space, mats, dt=dt)

    rng = np.random.default_rng(seed)
    ne, nV = mesh.num_elements, space.nV
    if sol is None:
        state_vol = rng.standard_normal((ne, nV))
        b_vol = rng.standard_normal((ne, nV)) + system.mass_coeff * system.apply_mass(
            state_vol
        )
        f_hat = None
        d_known = None
    else:
        data = ProblemData.from_mms(sol)
        stepper = Stepper(system, data)
        state = project_initial(system, sol)
        t_stage = dt / 2.0
        b_vol = stepper.loads.volume_loads(t_stage) + system.mass_coeff * system.apply_mass(
            state.vol
        )
        f_hat = stepper.loads.face_loads(t_stage)
        d_known = stepper.loads.known_values(t_stage)

    vol_c, hat_c = system.solve(b_vol, f_hat, d_known)

    A = assemble_monolithic(space, mats, mass_coeff=system.mass_coeff)
    rhs = np.zeros(ne * nV + space.n_hat)
    rhs[: ne * nV] = b_vol.ravel()
    if f_hat is not None:
        rhs[ne * nV :] += f_hat
    if d_known is not None:
        rhs[ne * nV + space.known_ids] = d_known
    else:
        rhs[ne * nV + space.known_ids] = 0.0
    x = np.linalg.solve(A, rhs)
    vol_m = x[: ne * nV].reshape(ne, nV)
    hat_m = x[ne * nV :]

    scale = max(np.abs(vol_m).max(), np.abs(hat_m).max(), 1e-30)
    dev = max(np.abs(vol_c - vol_m).max(), np.abs(hat_c - hat_m).max())
    return {"max_rel_deviation": dev / scale, "passed": dev / scale <= 1e-10}
