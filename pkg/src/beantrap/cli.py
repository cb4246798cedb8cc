"""Command-line front end.

    beantrap validate -c CONFIG
    beantrap run      -c CONFIG -o OUTDIR [--workers N] [--substeps N]
    beantrap map      -c CONFIG -o OUTDIR [--endpoint N ...]
    beantrap oracle   [-o OUTDIR]

CONFIG is a YAML path or the bare name of a bundled configuration
(`beantrap validate -c trajectory1`).  `run` executes the protocol, writes
the trajectory table, any requested field maps/contours, and a manifest with
content hashes of every artifact; it exits nonzero if any sweep endpoint
aborted.  `oracle` checks the stepped solver against the closed-form strip
profiles and is independent of any configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bean import dump_k_profiles
from .config import (RunConfig, load_config, shipped_config_names,
                     shipped_config_path)
from .errors import ConfigError
from .magnetics import field_map
from .oracle import b_char
from .protocol import run as run_protocol
from .protocol import write_trajectory_csv
from .trap import equipotential_contours, write_contours_csv
from .units import GAUSS
from .verification import compare_field_case, compare_transport_case


def _resolve_config(name_or_path: str) -> RunConfig:
    path = Path(name_or_path)
    if path.exists():
        return load_config(path)
    if path.suffix == "" and "/" not in name_or_path:
        return load_config(shipped_config_path(name_or_path))
    raise ConfigError([("config", f"no such file: {name_or_path}")])


def _print_config_error(exc: ConfigError) -> None:
    print("configuration is invalid:", file=sys.stderr)
    for key_path, message in exc.diagnostics:
        print(f"  {key_path}: {message}", file=sys.stderr)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_validate(args) -> int:
    try:
        cfg = _resolve_config(args.config)
    except ConfigError as exc:
        _print_config_error(exc)
        return 2
    sweep = cfg.protocol.sweep
    n_endpoints = sweep.count if sweep is not None else 1
    print(f"{cfg.source}: ok "
          f"({cfg.layout.n_elements} elements, "
          f"{len(cfg.protocol.stages)} stages, {n_endpoints} endpoints)")
    return 0


def _write_map_outputs(cfg: RunConfig, result, outdir: Path,
                       requests) -> dict:
    """Write field maps (and contours) for the given FieldMapRequests;
    returns {relative name: sha256}."""
    written = {}
    by_index = {ep.index: ep for ep in result.endpoints}
    for req in requests:
        ep = by_index.get(req.endpoint)
        if ep is None or not ep.ok:
            print(f"  skipping map for endpoint {req.endpoint}: "
                  f"{'missing' if ep is None else ep.error}", file=sys.stderr)
            continue
        fmap = field_map(cfg.layout, ep.state, ep.drive.bias_field(),
                         req.grid)
        map_path = outdir / req.csv
        fmap.write_csv(map_path, layout_hash=cfg.layout.layout_hash())
        written[req.csv] = _sha256(map_path)
        if req.contours_uK:
            u = cfg.trap.params.uK_per_tesla * fmap.magnitude()
            contours = equipotential_contours(fmap.y, fmap.z, u,
                                              req.contours_uK)
            contour_path = outdir / req.contours_csv
            write_contours_csv(contour_path, contours)
            written[req.contours_csv] = _sha256(contour_path)
    return written


def cmd_run(args) -> int:
    try:
        cfg = _resolve_config(args.config)
    except ConfigError as exc:
        _print_config_error(exc)
        return 2
    solver = cfg.solver
    if args.workers is not None:
        solver = replace(solver, workers=args.workers)
    if args.substeps is not None:
        solver = replace(solver, substeps_default=args.substeps)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    result = run_protocol(cfg.protocol, solver, trap_options=cfg.trap)
    wall = time.perf_counter() - t0

    written = {}
    if cfg.outputs.trajectory_csv:
        traj_path = outdir / cfg.outputs.trajectory_csv
        write_trajectory_csv(traj_path, result)
        written[cfg.outputs.trajectory_csv] = _sha256(traj_path)
    if cfg.outputs.k_profiles_csv:
        profiles = [(ep.index, ep.state.k) for ep in result.endpoints
                    if ep.ok]
        prof_path = outdir / cfg.outputs.k_profiles_csv
        dump_k_profiles(prof_path, cfg.layout, profiles)
        written[cfg.outputs.k_profiles_csv] = _sha256(prof_path)
    written.update(_write_map_outputs(cfg, result, outdir,
                                      cfg.outputs.field_maps))

    manifest = {
        "package_version": __version__,
        "config_source": cfg.source,
        "config_sha256": (_sha256(Path(cfg.source))
                          if Path(cfg.source).is_file() else None),
        "layout_hash": cfg.layout.layout_hash(),
        "solver": {"substeps_per_ramp": solver.substeps_default,
                   "reference_length_m": solver.reference_length,
                   "workers": solver.workers},
        "sweep": None if result.sweep is None else {
            "count": result.sweep.count,
            "b_y_f_G": [result.sweep.b_y_start / GAUSS,
                        result.sweep.b_y_end / GAUSS],
            "b_z_f_G": [result.sweep.b_z_start / GAUSS,
                        result.sweep.b_z_end / GAUSS]},
        "residuals": result.residual_summary(),
        "wall_time_s": round(wall, 3),
        "endpoints": [{
            "index": ep.index,
            "b_y_f_G": None if np.isnan(ep.b_y_f) else ep.b_y_f / GAUSS,
            "b_z_f_G": None if np.isnan(ep.b_z_f) else ep.b_z_f / GAUSS,
            "ok": ep.ok,
            "error": ep.error,
            "aborted_at": list(ep.aborted_at) if ep.aborted_at else None,
            "n_minima": (len(ep.scan.minima)
                         if ep.ok and ep.scan is not None else None),
        } for ep in result.endpoints],
        "outputs": written,
    }
    manifest_path = outdir / cfg.outputs.manifest_json
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    summary = result.residual_summary()
    print(f"ran {len(result.endpoints)} endpoint(s) in {wall:.1f} s; "
          f"max KKT residual {summary['max_kkt_residual']:.2e}, "
          f"max transport residual {summary['max_transport_residual_A']:.2e} A")
    for ep in result.aborted():
        print(f"  endpoint {ep.index} aborted at stage {ep.aborted_at}: "
              f"{ep.error}", file=sys.stderr)
    print(f"wrote {', '.join([*written, cfg.outputs.manifest_json])} "
          f"in {outdir}")
    return 0 if result.ok else 1


def cmd_map(args) -> int:
    try:
        cfg = _resolve_config(args.config)
    except ConfigError as exc:
        _print_config_error(exc)
        return 2
    requests = list(cfg.outputs.field_maps)
    if args.endpoint:
        count = cfg.protocol.sweep.count if cfg.protocol.sweep else 1
        for e in args.endpoint:
            if not 0 <= e < count:
                print(f"endpoint {e} out of range (sweep has {count})",
                      file=sys.stderr)
                return 2
        if requests:
            base = requests[0]
            requests = [replace(base, endpoint=e, csv=f"map_e{e}.csv",
                                contours_csv=(f"contours_e{e}.csv"
                                              if base.contours_uK else None))
                        for e in args.endpoint]
        else:
            print("config has no outputs.field_maps entry to use as a grid "
                  "template", file=sys.stderr)
            return 2
    if not requests:
        print("config requests no field maps", file=sys.stderr)
        return 2

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    wanted = {req.endpoint for req in requests}
    result = run_protocol(cfg.protocol, cfg.solver, trap_options=None,
                          only_endpoints=wanted)
    written = _write_map_outputs(cfg, result, outdir, requests)
    if not written:
        return 1
    print(f"wrote {', '.join(written)} in {outdir}")
    return 0 if result.ok else 1


def cmd_oracle(args) -> int:
    drive = b_char(4.5e4) * float(np.arccosh(2.0))   # penetrates to b = a/2
    field_rep = compare_field_case(drive)
    transport_rep = compare_transport_case(1.34)

    ok = True
    for rep, bounds in ((field_rep, {"l2": 0.03, "front": 3.0e-6}),
                        (transport_rep, {"l2": 0.03, "front": 1.5e-6})):
        for line in rep.summary_lines():
            print(line)
        case_ok = (rep.l2_rel <= bounds["l2"]
                   and abs(rep.front_error) <= bounds["front"]
                   and rep.current_error <= 1e-9 * max(1.0,
                                                       abs(rep.current_exact)))
        print(f"  -> {'PASS' if case_ok else 'FAIL'}")
        ok = ok and case_ok

    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        dump_profiles_path = outdir / "oracle_field.csv"
        from .verification import dump_profiles_csv
        dump_profiles_csv(dump_profiles_path, "field", drive, 50.0e-6, 4.5e4)
        dump_profiles_csv(outdir / "oracle_transport.csv", "transport", 1.34,
                          20.0e-6, 4.5e4)
        print(f"wrote oracle_field.csv, oracle_transport.csv in {outdir}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="beantrap",
        description="Hysteretic screening-current and microtrap simulation "
                    "for thin-film superconducting chip wires.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    shipped = ", ".join(shipped_config_names())

    p_validate = sub.add_parser("validate",
                                help="check a configuration and exit")
    p_validate.add_argument("-c", "--config", required=True,
                            help=f"YAML path or bundled name ({shipped})")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="execute a protocol and write outputs")
    p_run.add_argument("-c", "--config", required=True,
                       help=f"YAML path or bundled name ({shipped})")
    p_run.add_argument("-o", "--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, default=None,
                       help="worker processes for sweep endpoints")
    p_run.add_argument("--substeps", type=int, default=None,
                       help="override substeps per ramp")
    p_run.set_defaults(func=cmd_run)

    p_map = sub.add_parser("map",
                           help="write field maps for selected endpoints "
                                "without the full sweep analysis")
    p_map.add_argument("-c", "--config", required=True,
                       help=f"YAML path or bundled name ({shipped})")
    p_map.add_argument("-o", "--out", required=True, help="output directory")
    p_map.add_argument("--endpoint", type=int, action="append",
                       help="endpoint index (repeatable); defaults to the "
                            "config's field_maps entries")
    p_map.set_defaults(func=cmd_map)

    p_oracle = sub.add_parser("oracle",
                              help="compare the solver against closed-form "
                                   "strip profiles")
    p_oracle.add_argument("-o", "--out", default=None,
                          help="optionally dump profile CSVs here")
    p_oracle.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
