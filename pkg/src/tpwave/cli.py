"""Command-line entry points.

    tpwave mms-h CONFIG      spatial convergence study, CSV table
    tpwave mms-k CONFIG      degree convergence study, CSV table
    tpwave mms-dt CONFIG     temporal convergence study, CSV table
    tpwave simulate CONFIG   wave-propagation scenario: seismograms, VTK, energy
    tpwave check CONFIG      property suite: patch test, oracle, traces, energy

Exit codes: 0 success, 1 numerical acceptance failure, 2 configuration
error. `--dry-run` prints the resolved parameters without computing.
`--outdir` (or TPWAVE_OUTDIR) overrides the configured output directory.
`--threads` caps the BLAS thread pools where the runtime allows it.
"""

from __future__ import annotations

import argparse
import os
import sys


def _cap_threads(n: int | None):
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


def _load(args):
    from tpwave.config import load_config

    cfg = load_config(args.config)
    expected = args.kind
    if cfg.kind != expected:
        from tpwave.config import ConfigError

        raise ConfigError(
            f"{args.config}: run kind {cfg.kind!r} does not match subcommand {expected!r}"
        )
    return cfg


def _dry_run(cfg) -> int:
    from tpwave.config import emit_config

    sys.stdout.write(emit_config(cfg))
    return 0


def _rate_gate(name, observed, expected, tol) -> bool:
    ok = abs(observed - expected) <= tol if expected is not None else True
    mark = "ok" if ok else "FAIL"
    print(f"  {name}: observed {observed:.3f} expected {expected} +/- {tol} [{mark}]")
    return ok


def _lower_gate(name, observed, minimum) -> bool:
    ok = observed >= minimum
    print(f"  {name}: observed {observed:.3f} >= {minimum:.3f} [{'ok' if ok else 'FAIL'}]")
    return ok


def cmd_mms_h(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        return _dry_run(cfg)
    from tpwave.io import output_dir, write_convergence_csv
    from tpwave.materials import material_library
    from tpwave.verify import converge_h

    v = cfg.values
    mat = material_library(v["material"])
    table = converge_h(
        k=v["k"], nxs=v["nxs"], material=mat, T=v["T"], c_t=v["ct"],
        jitter=v["jitter"], scheme=v["scheme"],
    )
    out = output_dir(v["outputs.dir"], args.outdir)
    path = out / f"mms_h_k{v['k']}_{mat.name}.csv"
    write_convergence_csv(path, table)
    print(f"wrote {path}")
    for rec in table.as_records():
        print("  " + " ".join(f"{k}={rec[k]:.6g}" if isinstance(rec[k], float) else f"{k}={rec[k]}" for k in rec))
    rt, ru = table.finest_rates()
    ok = True
    exp_t = v.get("expect.rate_theta")
    exp_u = v.get("expect.rate_u")
    if exp_t is not None:
        ok &= _lower_gate("rate_theta", rt, exp_t - v["tol.rate_theta"])
    if exp_u is not None:
        ok &= _lower_gate("rate_u", ru, exp_u - v["tol.rate_u"])
    return 0 if ok else 1


def cmd_mms_k(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        return _dry_run(cfg)
    from tpwave.io import output_dir, write_convergence_csv
    from tpwave.materials import material_library
    from tpwave.verify import converge_k, k_study_slope

    v = cfg.values
    mat = material_library(v["material"])
    table = converge_k(nx=v["nx"], ks=v["ks"], material=mat, T=v["T"], dt=v["dt"])
    out = output_dir(v["outputs.dir"], args.outdir)
    path = out / f"mms_k_nx{v['nx']}_{mat.name}.csv"
    write_convergence_csv(path, table)
    print(f"wrote {path}")
    errs_t = [r["e_theta"] for r in table.rows]
    errs_u = [r["e_u"] for r in table.rows]
    st, su = k_study_slope(table)
    print(f"  log-error slopes: theta {st:.3f}, u {su:.3f}")
    ok = all(b < a for a, b in zip(errs_t, errs_t[1:]))
    ok &= all(b < a for a, b in zip(errs_u, errs_u[1:]))
    ok &= st < 0 and su < 0
    ratio = errs_t[-1] / errs_t[0]
    max_ratio = v["expect.max_ratio"]
    print(f"  e(k_max)/e(k_min) = {ratio:.3e} (required <= {max_ratio:g})")
    ok &= ratio <= max_ratio
    return 0 if ok else 1


def cmd_mms_dt(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        return _dry_run(cfg)
    from tpwave.io import output_dir, write_convergence_csv
    from tpwave.materials import material_library
    from tpwave.verify import converge_dt

    v = cfg.values
    mat = material_library(v["material"])
    table = converge_dt(
        nx=v["nx"], k=v["k"], material=mat, T=v["T"],
        step_counts=v["steps"], scheme=v["scheme"],
    )
    out = output_dir(v["outputs.dir"], args.outdir)
    path = out / f"mms_dt_nx{v['nx']}_k{v['k']}_{v['scheme']}.csv"
    write_convergence_csv(path, table)
    print(f"wrote {path}")
    for rec in table.as_records():
        print("  " + " ".join(f"{k}={rec[k]:.6g}" if isinstance(rec[k], float) else f"{k}={rec[k]}" for k in rec))
    rt, ru = table.finest_rates()
    ok = _rate_gate("rate_theta", rt, v["expect.rate"], v["tol.rate"])
    ok &= _rate_gate("rate_u", ru, v["expect.rate"], v["tol.rate"])
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        return _dry_run(cfg)
    from tpwave.config import scenario_from_config
    from tpwave.io import (
        output_dir,
        write_energy_csv,
        write_mesh_text,
        write_seismogram_csv,
        write_seismogram_difference_csv,
        write_vtk_snapshot,
    )
    from tpwave.scenarios import run_comparison, run_scenario, trace_difference_norms

    v = cfg.values
    spec = scenario_from_config(cfg)
    out = output_dir(v["outputs.dir"], args.outdir)
    if v["compare"]:
        full, poro = run_comparison(spec)
        write_seismogram_difference_csv(
            out / "seismogram_comparison.csv", full.times, full.receivers, poro.receivers
        )
        norms = trace_difference_norms(full, poro)
        for i, n in enumerate(norms):
            print(f"  receiver {i}: |u2_full - u2_poro|_2 = {n:.6e}")
        result = full
    else:
        result = run_scenario(spec)
    write_seismogram_csv(out / "seismograms.csv", result.times, result.receivers)
    write_energy_csv(out / "energy.csv", result.energy)
    for t, fields in result.snapshots:
        write_vtk_snapshot(out / f"snapshot_t{t:g}.vtk", result.mesh, fields, t)
    if v["outputs.mesh"]:
        write_mesh_text(out / "mesh.txt", result.mesh)
    resid = result.energy.max_relative_residual()
    print(f"wrote outputs to {out}; energy identity residual {resid:.3e}")
    return 0


def cmd_check(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        return _dry_run(cfg)
    import numpy as np

    from tpwave.fespace import projection_rate_report, trace_inequality_ratio
    from tpwave.hdg import CondensedSystem, HDGSpace
    from tpwave.materials import MaterialField, material_library
    from tpwave.mesh import build_structured_mesh, refine_uniform
    from tpwave.timeloop import ProblemData, TimeGrid, run
    from tpwave.verify import oracle_monolithic, patch_test
    from tpwave import mms as mms_mod
    from tpwave.timeloop import project_initial

    v = cfg.values
    mat = material_library(v["material"])
    stab_sign = -1.0 if v["debug.stab_sign_flip"] else 1.0
    ok = True

    mesh = build_structured_mesh(v["nx"], v["nx"])
    for k in v["ks"]:
        res = patch_test(k, mesh, mat, steps=5, dt=v["dt"])
        print(f"  patch test k={k}: deviation {res['max_rel_deviation']:.3e} "
              f"[{'ok' if res['passed'] else 'FAIL'}]")
        ok &= res["passed"]
        res = oracle_monolithic(build_structured_mesh(2, 1), min(k, 2), mat, dt=v["dt"])
        print(f"  oracle k={min(k, 2)}: deviation {res['max_rel_deviation']:.3e} "
              f"[{'ok' if res['passed'] else 'FAIL'}]")
        ok &= res["passed"]

    fine = refine_uniform(mesh)
    for deg in v["trace.degrees"]:
        r0 = trace_inequality_ratio(mesh, deg, trials=16, seed=1)
        r1 = trace_inequality_ratio(fine, deg, trials=16, seed=2)
        good = 0.5 <= r1 / r0 <= 2.0
        print(f"  trace ratio deg={deg}: coarse {r0:.3f} fine {r1:.3f} "
              f"[{'ok' if good else 'FAIL'}]")
        ok &= good

    # free-decay energy monotonicity (stab_sign flip must break it)
    rng = np.random.default_rng(0)
    mats = MaterialField({0: mat})
    space = HDGSpace(mesh, 1)
    grid = TimeGrid(T=v["steps"] * v["dt"], dt=v["dt"])
    system = CondensedSystem(space, mats, dt=grid.dt, stab_sign=stab_sign)
    sol = mms_mod.trig_solution(mat)
    state0 = project_initial(system, sol)
    state0.vol += 0.1 * rng.standard_normal(state0.vol.shape)
    _, report = run(system, ProblemData(), state0, grid)
    E = report.energies
    mono = bool(np.all(np.diff(E) <= 1e-12 * E[0]))
    resid = report.max_relative_residual()
    good = mono and resid <= 1e-11
    print(f"  energy decay: monotone={mono} residual={resid:.3e} [{'ok' if good else 'FAIL'}]")
    ok &= good

    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tpwave",
        description="HDG thermo-poroelastic wave solver",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap solver-internal thread pools")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind, fn in (
        ("mms-h", "mms_h", cmd_mms_h),
        ("mms-k", "mms_k", cmd_mms_k),
        ("mms-dt", "mms_dt", cmd_mms_dt),
        ("simulate", "simulate", cmd_simulate),
        ("check", "check", cmd_check),
    ):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the run configuration file")
        p.add_argument("--dry-run", action="store_true",
                       help="print resolved parameters and exit")
        p.add_argument("--outdir", default=None, help="output directory override")
        p.set_defaults(fn=fn, kind=kind)

    args = parser.parse_args(argv)
    _cap_threads(args.threads)
    try:
        return args.fn(args)
    except Exception as err:  # config errors exit 2, numerical aborts exit 1
        from tpwave.config import ConfigError

        if isinstance(err, ConfigError):
            print(f"configuration error: {err}", file=sys.stderr)
            return 2
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
