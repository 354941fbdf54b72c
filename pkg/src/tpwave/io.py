"""CSV, VTK and mesh-text output.

All CSV files carry a header row and a fixed column order; floating-point
values are written with 17 significant digits so files round-trip exactly.
Snapshots use legacy ASCII VTK unstructured grids with per-element
duplicated points, the honest representation of discontinuous fields.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from tpwave.mesh import Mesh


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and np.isnan(v):
        return "nan"
    return format(float(v), ".17g")


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_convergence_csv(path, table) -> None:
    """ConvergenceTable to CSV: level, parameter, errors, observed rates."""
    recs = table.as_records()
    keys = list(recs[0].keys())
    write_csv(path, keys, ([r[k] for k in keys] for r in recs))


def write_energy_csv(path, report) -> None:
    write_csv(
        path,
        ["step", "t", "E", "damping_work", "stab_work", "source_work", "residual"],
        report.rows,
    )


def write_seismogram_csv(path, times, receivers) -> None:
    """Rows of (t, receiver_id, field, value) for every sample."""

    def rows():
        for i, r in enumerate(receivers):
            for fld, series in r.series.items():
                for t, v in zip(times, series):
                    yield (t, i, fld, v)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("t,receiver_id,field,value\n")
        for t, i, fld, v in rows():
            f.write(f"{_fmt(t)},{i},{fld},{_fmt(v)}\n")


def write_seismogram_difference_csv(path, times, full, poro) -> None:
    """Per-receiver trace comparison of two runs (full vs decoupled)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("t,receiver_id,field,value_full,value_poro,difference\n")
        for i, (rf, rp) in enumerate(zip(full, poro)):
            for fld in rf.series:
                for t, a, b in zip(times, rf.series[fld], rp.series[fld]):
                    f.write(
                        f"{_fmt(t)},{i},{fld},{_fmt(a)},{_fmt(b)},{_fmt(a - b)}\n"
                    )


def write_vtk_snapshot(path, mesh: Mesh, point_fields: dict, t: float) -> None:
    """Legacy ASCII VTK unstructured grid with duplicated per-element points.

    point_fields maps a field name to an (ne, 3) array of vertex values.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ne = mesh.num_elements
    pts = mesh.vertices[mesh.triangles].reshape(-1, 2)  # (3 ne, 2)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"tpwave snapshot t={_fmt(t)}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {3 * ne} double\n")
        for x, y in pts:
            f.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        f.write(f"CELLS {ne} {4 * ne}\n")
        for e in range(ne):
            f.write(f"3 {3 * e} {3 * e + 1} {3 * e + 2}\n")
        f.write(f"CELL_TYPES {ne}\n")
        f.write("5\n" * ne)
        f.write(f"POINT_DATA {3 * ne}\n")
        for name, vals in point_fields.items():
            f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in np.asarray(vals).reshape(-1):
                f.write(_fmt(v) + "\n")


def write_mesh_text(path, mesh: Mesh) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mesh.export_text())


def output_dir(configured: str | None, override: str | None = None) -> Path:
    """Resolve the output directory: CLI flag > environment > config value."""
    env = os.environ.get("TPWAVE_OUTDIR")
    base = override or env or configured or "out"
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p
