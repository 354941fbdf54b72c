"""Seismic wave-propagation scenarios: shear point source, receivers, snapshots.

The forcing is a Gaussian-regularized moment-tensor source,

    F_s(x, t) = S(t) M b(x),
    b(x) = exp(-|x - x_s|^2 / (2 eps^2)) (x - x_s) / eps^2,
    M = [[0, 1], [1, 0]],
    S(t) = A0 cos(2 pi f0 (t - t0)) exp(-2 f0^2 (t - t0)^2),

applied to the solid-momentum equation only, with zero initial state and
homogeneous Dirichlet boundaries. The antisymmetric moment pattern radiates
the classic four-lobed shear pattern; on a mesh that is mirror-symmetric
about the source's vertical centerline the discrete u_2 field is odd across
it to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tpwave.fespace import element_basis
from tpwave.hdg import CondensedSystem, HDGSpace
from tpwave.materials import MaterialField, MaterialParameters
from tpwave.mesh import Mesh, build_structured_mesh, locate_point
from tpwave.timeloop import DiscreteState, EnergyReport, ProblemData, TimeGrid, run, zero_state


class ScenarioError(RuntimeError):
    pass


MOMENT_SHEAR = np.array([[0.0, 1.0], [1.0, 0.0]])


def wavelet(t, amplitude: float, f0: float, t0: float):
    """Modulated-Gaussian pulse; peaks at t0 with value `amplitude`."""
    tt = np.asarray(t, dtype=float) - t0
    return amplitude * np.cos(2.0 * np.pi * f0 * tt) * np.exp(-2.0 * f0**2 * tt**2)


def wavelet_onset(amplitude: float, f0: float, t0: float, level: float = 1e-8) -> float:
    """First time the envelope reaches `level * amplitude` (clipped at 0)."""
    spread = np.sqrt(np.log(1.0 / level) / (2.0 * f0**2))
    return max(0.0, t0 - spread)


@dataclass(frozen=True)
class PointSource:
    x: float
    y: float
    amplitude: float = 10.0
    f0: float = 5.0
    t0: float = 0.3
    eps: float = 0.0  # 0 means h/3, resolved when the mesh is known

    def resolve_eps(self, h: float) -> float:
        return self.eps if self.eps > 0 else h / 3.0

    def spatial_profile(self, xy: np.ndarray, eps: float) -> np.ndarray:
        """b(x) = exp(-|d|^2/(2 eps^2)) d / eps^2 with d = x - x_s."""
        d = np.asarray(xy, dtype=float) - np.array([self.x, self.y])
        r2 = np.sum(d * d, axis=-1)
        return np.exp(-r2 / (2.0 * eps**2))[..., None] * d / eps**2

    def body_force(self, t: float, xy: np.ndarray, eps: float) -> np.ndarray:
        """F_s(x, t) = S(t) M b(x); components (b_y, b_x) times the wavelet."""
        b = self.spatial_profile(xy, eps)
        return float(wavelet(t, self.amplitude, self.f0, self.t0)) * b[..., ::-1]


@dataclass
class Receiver:
    x: float
    y: float
    fields: tuple[str, ...] = ("u2", "q2")
    element: int = -1
    ref_coords: np.ndarray | None = None
    series: dict = field(default_factory=dict)

    def resolve(self, mesh: Mesh, space: HDGSpace):
        e, bary = locate_point(mesh, (self.x, self.y))
        self.element = e
        self.ref_coords = space.geo.reference_coords(e, np.array([self.x, self.y]))
        self.series = {f: [] for f in self.fields}

    def sample(self, space: HDGSpace, vol: np.ndarray):
        phi = space.basis1.eval(self.ref_coords[None, :])[:, 0]
        scale = 1.0 / np.sqrt(space.geo.detJ[self.element])
        ub, _ = space.vol_view(vol[self.element : self.element + 1])
        comp = {"u1": (0, 0), "u2": (0, 1), "q1": (1, 0), "q2": (1, 1),
                "r1": (2, 0), "r2": (2, 1)}
        for f in self.fields:
            fi, ci = comp[f]
            self.series[f].append(float(ub[0, fi, ci] @ phi * scale))


SNAPSHOT_FIELDS = ("umag", "u2", "rmag", "theta")


def snapshot_fields(space: HDGSpace, vol: np.ndarray, fields=SNAPSHOT_FIELDS) -> dict:
    """Per-element vertex values of the requested fields, shape (ne, 3).

    Values are one-sided (discontinuous across elements), matching the
    duplicated-point layout of the VTK writer.
    """
    corners_ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    phi1 = space.basis1.eval(corners_ref)  # (N1, 3)
    phi0 = space.basis0.eval(corners_ref)
    scale = 1.0 / np.sqrt(space.geo.detJ)
    ub, tb = space.vol_view(vol)
    u = np.einsum("efcn,nv->efcv", ub, phi1) * scale[:, None, None, None]
    th = np.einsum("ejn,nv->ejv", tb, phi0) * scale[:, None, None]
    out = {}
    for f in fields:
        if f == "umag":
            out[f] = np.sqrt(u[:, 0, 0] ** 2 + u[:, 0, 1] ** 2)
        elif f == "u1":
            out[f] = u[:, 0, 0]
        elif f == "u2":
            out[f] = u[:, 0, 1]
        elif f == "qmag":
            out[f] = np.sqrt(u[:, 1, 0] ** 2 + u[:, 1, 1] ** 2)
        elif f == "rmag":
            out[f] = np.sqrt(u[:, 2, 0] ** 2 + u[:, 2, 1] ** 2)
        elif f == "p":
            out[f] = th[:, 3]
        elif f == "theta":
            out[f] = th[:, 4]
        else:
            raise ScenarioError(f"unknown snapshot field {f!r}")
    return out


@dataclass
class ScenarioSpec:
    """Complete description of one wave-propagation run."""

    domain: tuple[float, float, float, float] = (0.0, 1500.0, 0.0, 1500.0)
    nx: int = 20
    ny: int = 20
    split: str = "crisscross"
    k: int = 3
    dt: float = 1e-2
    T: float = 0.4
    materials: dict[int, MaterialParameters] = None
    region_split_x: float | None = None  # two-region split at x >= split_x
    source: PointSource = None
    receivers: list[tuple[float, float]] = field(default_factory=list)
    receiver_fields: tuple[str, ...] = ("u2", "q2")
    snapshot_times: list[float] = field(default_factory=list)
    snapshot_fields: tuple[str, ...] = SNAPSHOT_FIELDS
    thermal_coupling: bool = True

    def build_mesh(self) -> Mesh:
        region_fn = None
        if self.region_split_x is not None:
            sx = self.region_split_x
            region_fn = lambda x, y: int(x >= sx)  # noqa: E731
        return build_structured_mesh(
            self.nx, self.ny, self.domain, self.split, region_fn=region_fn
        )

    def material_field(self) -> MaterialField:
        mats = self.materials
        if not self.thermal_coupling:
            mats = {r: p.poroelastic_variant() for r, p in mats.items()}
        return MaterialField(mats)


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    mesh: Mesh
    times: np.ndarray
    receivers: list[Receiver]
    snapshots: list  # (t, {field: (ne, 3) vertex values})
    energy: EnergyReport
    final_state: DiscreteState
    space: HDGSpace

    def receiver_series(self, i: int, fld: str) -> np.ndarray:
        return np.asarray(self.receivers[i].series[fld])


def run_scenario(spec: ScenarioSpec, progress=None) -> ScenarioResult:
    """Execute one scenario: zero initial state, homogeneous boundaries."""
    if spec.source is None:
        raise ScenarioError("scenario needs a source")
    if spec.materials is None:
        raise ScenarioError("scenario needs materials")
    mesh = spec.build_mesh()
    mats = spec.material_field()
    space = HDGSpace(mesh, spec.k)
    grid = TimeGrid(T=spec.T, dt=spec.dt)
    system = CondensedSystem(space, mats, dt=grid.dt)

    eps = spec.source.resolve_eps(mesh.h)

    def f_ubar(t, pts):
        out = np.zeros((*pts.shape[:-1], 2, 3))
        out[..., 0] = spec.source.body_force(t, pts, eps)
        return out

    data = ProblemData(f_ubar=f_ubar)

    receivers = [Receiver(x, y, spec.receiver_fields) for x, y in spec.receivers]
    for r in receivers:
        r.resolve(mesh, space)

    snap_steps = {}
    for ts in spec.snapshot_times:
        n = round(ts / grid.dt)
        if 0 <= n <= grid.steps:
            snap_steps[n] = ts
    snapshots = []

    def monitor(step, state, stage):
        for r in receivers:
            r.sample(space, state.vol)
        if step in snap_steps:
            snapshots.append(
                (state.t, snapshot_fields(space, state.vol, spec.snapshot_fields))
            )
        if progress is not None:
            progress(step, grid.steps)

    state, report = run(system, data, zero_state(system), grid, [monitor])
    times = np.arange(grid.steps + 1) * grid.dt
    return ScenarioResult(
        spec=spec,
        mesh=mesh,
        times=times,
        receivers=receivers,
        snapshots=snapshots,
        energy=report,
        final_state=state,
        space=space,
    )


def run_comparison(spec: ScenarioSpec, progress=None):
    """Full thermo-poroelastic run and its thermally-decoupled twin.

    The twin zeroes the thermo-stress coupling and the pressure-temperature
    coupling (beta = b0 = 0), reproducing a purely poroelastic model for
    the mechanical outputs on the same code path.
    """
    from dataclasses import replace

    full = run_scenario(spec, progress)
    poro = run_scenario(replace(spec, thermal_coupling=False), progress)
    return full, poro


def trace_difference_norms(full: ScenarioResult, poro: ScenarioResult, fld: str = "u2"):
    """Per-receiver l2 norm of the trace difference between the two models."""
    out = []
    for i in range(len(full.receivers)):
        a = full.receiver_series(i, fld)
        b = poro.receiver_series(i, fld)
        out.append(float(np.linalg.norm(a - b)))
    return out
