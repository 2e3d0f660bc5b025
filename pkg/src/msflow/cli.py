"""Command-line driver: mesh generation, fine and multiscale runs, parameter
sweeps shaped like the benchmark error tables, and state comparison."""

import argparse
import dataclasses
import json
import os
import sys

from . import analysis, gmsfem, vtk_io
from .config import parse_config
from .errors import MsflowError
from .fine_solver import StepOperators, run_fine
from .geometry import generate_structured_mesh, load_mesh, save_mesh
from .parameters import DGState


def _build_mesh(spec):
    if spec.mesh_source == "load":
        return load_mesh(spec.mesh_path)
    return generate_structured_mesh(spec.domain, spec.n_per_coarse, (spec.nx, spec.ny))


def _stats_dict(stats):
    out = {}
    for name in ("fluid", "porous"):
        region = getattr(stats, name)
        out[name] = dataclasses.asdict(region) if region is not None else None
    return out


def _write_json(path, payload):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _run_reference(mesh, params, bc):
    traj = run_fine(mesh, params, bc)
    return traj.final


def _load_reference(path, mesh):
    _, _, state, _ = vtk_io.read_vtk_state(path)
    state.validate(mesh.n_cells)
    return state


def run_mesh_mode(spec, mesh, coarse):
    mesh_path = os.path.join(spec.out_dir, "mesh.txt")
    save_mesh(mesh_path, mesh, coarse)
    vtk_path = os.path.join(spec.out_dir, "mesh.vtk")
    vtk_io.export_vtk(mesh, DGState.zeros(mesh.n_cells), vtk_path, title="msflow mesh")
    print(f"mesh: {mesh.n_cells} cells, {coarse.n_cells} coarse cells -> {mesh_path}")
    return 0


def run_fine_mode(spec, mesh, coarse):
    traj = run_fine(mesh, spec.params, spec.bc)
    state = traj.final
    vtk_path = os.path.join(spec.out_dir, "fine.vtk")
    vtk_io.export_vtk(mesh, state, vtk_path)
    stats = analysis.field_statistics(state, mesh)
    payload = {
        "dof_fine": analysis.dof_fine(mesh.n_cells),
        "max_div_residual": float(traj.div_residuals.max()),
        "statistics": _stats_dict(stats),
    }
    _write_json(os.path.join(spec.out_dir, "fine_stats.json"), payload)
    print(f"fine run: {spec.params.n_steps} steps -> {vtk_path}")
    return 0


def _report_payload(report):
    e_u, e_s, e_p = report.percent()
    return {
        "e_u_percent": e_u,
        "e_s_percent": e_s,
        "e_p_percent": e_p,
        "dof_fine": report.dof_h,
        "dof_multiscale": report.dof_ms,
        "metadata": report.metadata,
    }


class _SpaceProvider:
    """Basis spaces for every requested size, built once per oversampling
    setting (offline eigenvectors are prefix-reusable) and round-tripped
    through the optional file cache."""

    def __init__(self, spec, mesh, coarse, params, bc, m_max):
        self.spec = spec
        self.mesh = mesh
        self.coarse = coarse
        self.params = params
        self.bc = bc
        self.m_max = m_max
        self._built = {}
        self._u_lin = None

    def get(self, m, oversampled):
        if self.spec.basis_cache:
            loaded = gmsfem.load_space(
                self.spec.basis_cache, self.mesh, self.coarse, self.params, m, oversampled
            )
            if loaded is not None:
                return loaded
        if oversampled not in self._built:
            if self._u_lin is None:
                self._u_lin = gmsfem.compute_linearization_field(
                    self.mesh, self.params, self.bc
                )
            space = gmsfem.build_multiscale_space(
                self.mesh,
                self.coarse,
                self.params,
                self.bc,
                m=self.m_max,
                oversampled=oversampled,
                u_lin=self._u_lin,
            )
            self._built[oversampled] = space
            if self.spec.basis_cache:
                gmsfem.save_space(self.spec.basis_cache, self.mesh, self.params, space)
        space = self._built[oversampled]
        if m == space.m:
            return space
        return gmsfem.resize_space(space, self.mesh, self.coarse, m)


def run_ms_mode(spec, mesh, coarse):
    params, bc = spec.params, spec.bc
    if spec.reference:
        ref = _load_reference(spec.reference, mesh)
    else:
        ref = _run_reference(mesh, params, bc)
    provider = _SpaceProvider(spec, mesh, coarse, params, bc, max(spec.m_list))
    ops = StepOperators(mesh, params, bc)
    for m in sorted(spec.m_list):
        sub = provider.get(m, spec.oversampled)
        traj, fine_state = gmsfem.run_multiscale(
            mesh, coarse, params, bc, space=sub, ops=ops
        )
        report = analysis.make_report(
            ref, fine_state.velocity, traj.final.pressure, mesh, coarse, m,
            spec.oversampled, params,
        )
        vtk_io.export_vtk(mesh, fine_state, os.path.join(spec.out_dir, f"ms_m{m}.vtk"))
        _write_json(os.path.join(spec.out_dir, f"ms_report_m{m}.json"), _report_payload(report))
        e_u, e_s, e_p = report.percent()
        print(
            f"m={m:3d} dof={report.dof_ms:6d} "
            f"e_u={e_u:.3f}% e_s={e_s:.3f}% e_p={e_p:.3f}%"
        )
    return 0


def _sweep_one_da(spec, mesh, coarse, darcy):
    params = spec.params.with_darcy(darcy)
    bc = spec.bc
    ref = _run_reference(mesh, params, bc)
    ops = StepOperators(mesh, params, bc)
    provider = _SpaceProvider(spec, mesh, coarse, params, bc, max(spec.m_list))
    results = {}
    for oversampled in (False, True):
        for m in spec.m_list:
            sub = provider.get(m, oversampled)
            traj, fine_state = gmsfem.run_multiscale(
                mesh, coarse, params, bc, space=sub, ops=ops
            )
            report = analysis.make_report(
                ref, fine_state.velocity, traj.final.pressure, mesh, coarse, m,
                oversampled, params,
            )
            results[(m, oversampled)] = report
    return results


def write_sweep_csv(path, m_list, results, coarse):
    lines = ["M,DOF_H,e_u_plain,e_s_plain,e_p_plain,e_u_os,e_s_os,e_p_os"]
    for m in m_list:
        plain = results[(m, False)].percent()
        os_ = results[(m, True)].percent()
        dof = analysis.dof_multiscale(coarse.n_cells, m)
        cells = [str(m), str(dof)] + [f"{v:.6f}" for v in (*plain, *os_)]
        lines.append(",".join(cells))
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def run_sweep_mode(spec, mesh, coarse):
    for darcy in spec.da_list:
        results = _sweep_one_da(spec, mesh, coarse, darcy)
        path = os.path.join(spec.out_dir, f"errors_da_{darcy:g}.csv")
        write_sweep_csv(path, spec.m_list, results, coarse)
        print(f"Da={darcy:g}: wrote {path}")
    return 0


def run_compare_mode(spec, mesh, coarse):
    ref = _load_reference(spec.reference, mesh)
    other = _load_reference(spec.other, mesh)
    e_u = analysis.error_velocity(ref.velocity, other.velocity, mesh)
    e_s = analysis.error_stress(ref.velocity, other.velocity, mesh)
    p_other = analysis.coarse_average(other.pressure, mesh, coarse)
    e_p = analysis.error_pressure(ref.pressure, p_other, mesh, coarse)
    payload = {
        "e_u_percent": 100.0 * e_u,
        "e_s_percent": 100.0 * e_s,
        "e_p_percent": 100.0 * e_p,
    }
    _write_json(os.path.join(spec.out_dir, "compare.json"), payload)
    print(
        f"compare: e_u={payload['e_u_percent']:.6f}% "
        f"e_s={payload['e_s_percent']:.6f}% e_p={payload['e_p_percent']:.6f}%"
    )
    return 0


_MODE_RUNNERS = {
    "mesh": run_mesh_mode,
    "fine": run_fine_mode,
    "ms": run_ms_mode,
    "sweep": run_sweep_mode,
    "compare": run_compare_mode,
}


def run(spec):
    """Execute a validated RunSpec; returns a process exit status."""
    mesh, coarse = _build_mesh(spec)
    return _MODE_RUNNERS[spec.mode](spec, mesh, coarse)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="msflow",
        description="Multiscale DG solver for flow with circular porous inclusions",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _MODE_RUNNERS:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="path to a run config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="inclusion seed override")
    args = parser.parse_args(argv)
    try:
        spec = parse_config(args.config, mode=args.mode, out_dir=args.out, seed=args.seed)
        return run(spec)
    except MsflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
