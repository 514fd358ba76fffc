"""Batch command line front end.

Every subcommand reads a JSON config (``schema: 1``), applies flag and
``--set`` overrides, runs one pipeline stage and writes CSV/JSON files to
the output directory.  Exit status: 0 success, 1 configuration or input
error, 2 validation failure, 3 resonance.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dynamics import (
    IntegratorConfig,
    default_horizon,
    integrate,
    nmse,
    order_decomposition,
    spectral_trajectory,
    uniform_times,
)
from .estimator import resolve_mode
from .exceptions import (
    ContractError,
    DivergentExpansionError,
    KoopNNMError,
    ResonanceError,
)
from .koopman import MAX_ORDER, compute_identity_modes
from .manifold import (
    detect_fold,
    eval_psi,
    invert_point,
    sample_mesh,
    validation_nmse,
    validity_radius,
)
from .models import TwoDofParams, build_1d_quadratic, build_2dof_cubic, build_chain
from .polyfield import jacobian_at_origin
from .spectral import check_resonance, decompose, modal_table

OUTPUT_ENV = "KOOPNNM_OUTPUT_DIR"
SCHEMA = 1
MAX_GRID_POINTS = 10**6

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_RESONANCE = 0, 1, 2, 3

DEFAULTS = {
    "schema": SCHEMA,
    "model": {"name": "two_dof_cubic", "params": {}},
    "mode": "in-phase",
    "order": 50,
    "radius": "auto",
    "grid": [40, 120],
    "validation": {"nmse_threshold": 1.0, "horizon": None, "samples": 1000},
    "integrator": {"rel_tol": 1e-10, "abs_tol": 1e-12, "max_step": None},
    "trajectory": {"xi0": None, "x0": None, "invert_tol": 1e-6, "orders": None},
    "output_dir": "koopnnm-out",
}

log = logging.getLogger("koopnnm")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field '{where}'")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(val, dict):
                raise ConfigError(f"config field '{where}' must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _set_path(cfg, dotted, raw):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config field '{dotted}'")
        node = node[k]
    last = keys[-1]
    inside_params = len(keys) >= 2 and keys[-2] == "params"
    if not isinstance(node, dict) or (last not in node and not inside_params):
        raise ConfigError(f"unknown config field '{dotted}'")
    node[last] = value


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config '{args.config}': {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        if user.get("schema") != SCHEMA:
            raise ConfigError(f"config field 'schema' must be {SCHEMA}, got {user.get('schema')!r}")
        cfg = _merge(cfg, user)

    if args.order is not None:
        cfg["order"] = args.order
    if args.mode is not None:
        cfg["mode"] = args.mode
    if getattr(args, "radius", None) is not None:
        cfg["radius"] = args.radius
    if getattr(args, "auto_radius", False):
        cfg["radius"] = "auto"
    if getattr(args, "grid", None) is not None:
        try:
            nr, nt = args.grid.lower().split("x")
            cfg["grid"] = [int(nr), int(nt)]
        except ValueError:
            raise ConfigError(f"--grid must look like NRxNT, got {args.grid!r}") from None
    xi_re, xi_im = getattr(args, "xi0_re", None), getattr(args, "xi0_im", None)
    if xi_re is not None or xi_im is not None:
        cfg["trajectory"]["xi0"] = [xi_re or 0.0, xi_im or 0.0]
    if getattr(args, "x0", None) is not None:
        try:
            cfg["trajectory"]["x0"] = [float(s) for s in args.x0.split(",")]
        except ValueError:
            raise ConfigError(f"--x0 must be comma-separated numbers, got {args.x0!r}") from None
    if getattr(args, "horizon", None) is not None:
        cfg["validation"]["horizon"] = args.horizon
    if getattr(args, "samples", None) is not None:
        cfg["validation"]["samples"] = args.samples
    if getattr(args, "orders", None) is not None:
        try:
            cfg["trajectory"]["orders"] = [int(s) for s in args.orders.split(",")]
        except ValueError:
            raise ConfigError(f"--orders must be comma-separated integers, got {args.orders!r}") from None
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_path(cfg, key.strip(), raw)
    if os.environ.get(OUTPUT_ENV):
        cfg["output_dir"] = os.environ[OUTPUT_ENV]
    if args.output_dir is not None:
        cfg["output_dir"] = args.output_dir
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    order = cfg["order"]
    if not isinstance(order, int) or isinstance(order, bool) or not 1 <= order <= MAX_ORDER:
        raise ConfigError(f"config field 'order' must be an integer in [1, {MAX_ORDER}], got {order!r}")
    thr = cfg["validation"]["nmse_threshold"]
    if not isinstance(thr, (int, float)) or not thr > 0:
        raise ConfigError(f"config field 'validation.nmse_threshold' must be positive, got {thr!r}")
    samples = cfg["validation"]["samples"]
    if not isinstance(samples, int) or samples < 2:
        raise ConfigError(f"config field 'validation.samples' must be an integer >= 2, got {samples!r}")
    hz = cfg["validation"]["horizon"]
    if hz is not None and not (isinstance(hz, (int, float)) and hz > 0):
        raise ConfigError(f"config field 'validation.horizon' must be positive, got {hz!r}")
    grid = cfg["grid"]
    if (
        not isinstance(grid, list)
        or len(grid) != 2
        or not all(isinstance(g, int) for g in grid)
        or grid[0] < 2
        or grid[1] < 4
        or grid[0] * grid[1] > MAX_GRID_POINTS
    ):
        raise ConfigError(
            f"config field 'grid' must be [n_r >= 2, n_theta >= 4] with at most "
            f"{MAX_GRID_POINTS} points, got {grid!r}"
        )
    r = cfg["radius"]
    if r != "auto" and not (isinstance(r, (int, float)) and r > 0):
        raise ConfigError(f"config field 'radius' must be positive or \"auto\", got {r!r}")
    integ = cfg["integrator"]
    for k in ("rel_tol", "abs_tol"):
        if not isinstance(integ[k], (int, float)) or not integ[k] > 0:
            raise ConfigError(f"config field 'integrator.{k}' must be positive, got {integ[k]!r}")
    if integ["max_step"] is not None and not (isinstance(integ["max_step"], (int, float)) and integ["max_step"] > 0):
        raise ConfigError(f"config field 'integrator.max_step' must be positive, got {integ['max_step']!r}")
    if cfg["model"].get("name") not in BUILDERS:
        raise ConfigError(
            f"config field 'model.name' must be one of {sorted(BUILDERS)}, got {cfg['model'].get('name')!r}"
        )
    if not isinstance(cfg["model"].get("params", {}), dict):
        raise ConfigError("config field 'model.params' must be an object")


def _chain(masses, springs, dampers, cubic=None):
    return build_chain(masses, springs, dampers, cubic)


BUILDERS = {
    "two_dof_cubic": lambda **p: build_2dof_cubic(TwoDofParams(**p)),
    "chain": _chain,
    "quadratic_1d": build_1d_quadratic,
}


def build_field(cfg):
    params = cfg["model"].get("params", {})
    try:
        return BUILDERS[cfg["model"]["name"]](**params)
    except TypeError as exc:
        raise ConfigError(f"config field 'model.params': {exc}") from None
    except ContractError as exc:
        raise ConfigError(f"config field 'model.params': {exc}") from None


def integrator_config(cfg):
    i = cfg["integrator"]
    return IntegratorConfig(
        float(i["rel_tol"]),
        float(i["abs_tol"]),
        np.inf if i["max_step"] is None else float(i["max_step"]),
    )


def _pipeline(cfg):
    field = build_field(cfg)
    dec = decompose(jacobian_at_origin(field))
    try:
        pair = resolve_mode(dec, cfg["mode"])
    except ContractError as exc:
        raise ConfigError(f"config field 'mode': {exc}") from None
    table = compute_identity_modes(field, dec, pair, cfg["order"])
    return field, dec, table


def _out(cfg) -> Path:
    p = Path(cfg["output_dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_csv(path, header, rows):
    np.savetxt(path, np.asarray(rows, dtype=float), fmt="%.17g", delimiter=",",
               header=",".join(header), comments="")


def read_csv(path):
    """Header list and float array of a file written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _state_header(n):
    return [f"x{i + 1}" for i in range(n)]


def cmd_eigen(cfg):
    field = build_field(cfg)
    dec = decompose(jacobian_at_origin(field))
    rows = modal_table(dec)
    out = _out(cfg)
    write_csv(out / "eigen.csv", ["index", "re", "im", "freq_rad_s", "damping_ratio"], rows)
    print(f"{'index':>5} {'lambda':>28} {'freq [rad/s]':>14} {'damping':>10}")
    for i, re, im, w, z in rows:
        print(f"{i:>5d} {re:>13.6f} {'+' if im >= 0 else '-'} i{abs(im):<11.6f} {w:>14.6f} {z:>10.6f}")
    return EXIT_OK


def cmd_modes(cfg):
    _, _, table = _pipeline(cfg)
    n = table.dimension
    header = ["k1", "k2"] + [f"{c}{i + 1}" for i in range(n) for c in ("re_x", "im_x")]
    rows = []
    for (k1, k2), v in table.modes.items():
        row = [k1, k2]
        for c in v:
            row += [c.real, c.imag]
        rows.append(row)
    write_csv(_out(cfg) / "modes.csv", header, rows)
    print(f"{len(rows)} modes up to order {table.max_order} for eigenvalues {list(table.pair) if not table.is_real_mode else table.pair}")
    return EXIT_OK


def _radius(cfg, field, table):
    if cfg["radius"] != "auto":
        return float(cfg["radius"]), False
    v = cfg["validation"]
    r = validity_radius(
        table, field, integrator_config(cfg), v["nmse_threshold"], v["horizon"], v["samples"]
    )
    return r, True


def cmd_manifold(cfg):
    field, _, table = _pipeline(cfg)
    try:
        radius, measured = _radius(cfg, field, table)
    except DivergentExpansionError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    nr, nt = cfg["grid"]
    mesh = sample_mesh(table, field, radius, nr, nt)
    n = table.dimension
    rows = np.column_stack([mesh.uv, mesh.states, mesh.pde_residual])
    out = _out(cfg)
    write_csv(out / "mesh.csv", ["u", "v"] + _state_header(n) + ["pde_residual"], rows)
    summary = {
        "radius": radius,
        "radius_is_validity_radius": measured,
        "grid": [nr, nt],
        "max_pde_residual": float(mesh.pde_residual.max()),
        "folds": {},
    }
    if n >= 4:
        half = n // 2
        for i in range(half):
            rep = detect_fold(mesh, coords=(i, half + i))
            summary["folds"][f"x{i + 1},x{half + i + 1}"] = {
                "folded": rep.folded,
                "pairs": len(rep.pairs),
                "max_uv_separation": rep.max_uv_separation,
            }
    write_json(out / "manifold.json", summary)
    print(f"radius {radius:.6g}{' (validity radius)' if measured else ''}, "
          f"max PDE residual {summary['max_pde_residual']:.3e}")
    return EXIT_OK


def _start(cfg, table):
    t = cfg["trajectory"]
    if t["xi0"] is not None and t["x0"] is not None:
        raise ConfigError("set only one of 'trajectory.xi0' and 'trajectory.x0'")
    if t["xi0"] is not None:
        try:
            re, im = (float(c) for c in t["xi0"])
        except (TypeError, ValueError):
            raise ConfigError("config field 'trajectory.xi0' must be [re, im]") from None
        return complex(re, im), None
    if t["x0"] is not None:
        x0 = np.asarray(t["x0"], dtype=float)
        if x0.shape != (table.dimension,):
            raise ConfigError(f"config field 'trajectory.x0' must have {table.dimension} entries")
        uv, res = invert_point(table, x0, rel_tol=float(t["invert_tol"]))
        return complex(*uv), res
    raise ConfigError("trajectory needs 'trajectory.xi0' (--xi0-re/--xi0-im) or 'trajectory.x0' (--x0)")


def cmd_trajectory(cfg):
    field, _, table = _pipeline(cfg)
    xi0, inv_res = _start(cfg, table)
    orders = cfg["trajectory"]["orders"]
    if orders is None:
        orders = [h for h in (1, 3, 5) if h <= table.max_order]
    bad = [h for h in orders if not 1 <= h <= table.max_order]
    if bad:
        raise ConfigError(f"config field 'trajectory.orders' has entries outside [1, {table.max_order}]: {bad}")
    v = cfg["validation"]
    horizon = v["horizon"] or default_horizon(table)
    times = uniform_times(horizon, v["samples"])
    est = spectral_trajectory(table, xi0, times)
    ref = integrate(field, eval_psi(table, xi0).state, times, integrator_config(cfg))
    n = table.dimension
    out = _out(cfg)
    header = ["t"] + _state_header(n)
    write_csv(out / "estimate.csv", header, np.column_stack([times, est.states]))
    write_csv(out / "reference.csv", header, np.column_stack([times, ref.states]))
    for h, tr in order_decomposition(table, xi0, times, orders):
        write_csv(out / f"order_{h}.csv", header, np.column_stack([times, tr.states]))
    err = nmse(est, ref)
    passed = err < v["nmse_threshold"]
    write_json(out / "trajectory.json", {
        "xi0": [xi0.real, xi0.imag],
        "invert_residual": inv_res,
        "horizon": horizon,
        "samples": v["samples"],
        "nmse_percent": err,
        "nmse_threshold": v["nmse_threshold"],
        "passed": passed,
    })
    print(f"NMSE {err:.6g}% (threshold {v['nmse_threshold']}%): {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_VALIDATION


def cmd_validate(cfg):
    """Resonance scan, ray validation at the configured radius and, if a
    start point is configured, the trajectory NMSE; writes validate.json."""
    field = build_field(cfg)
    dec = decompose(jacobian_at_origin(field))
    try:
        pair = resolve_mode(dec, cfg["mode"])
    except ContractError as exc:
        raise ConfigError(f"config field 'mode': {exc}") from None
    verdict = {"checks": {}}
    scan = check_resonance(dec, cfg["order"], pair=None if isinstance(pair, int) else pair)
    verdict["checks"]["resonance"] = {"min_gap": scan.min_gap, "passed": not scan}
    table = compute_identity_modes(field, dec, pair, cfg["order"])
    v = cfg["validation"]
    thr = v["nmse_threshold"]
    try:
        radius, measured = _radius(cfg, field, table)
        rays = validation_nmse(table, field, radius, integrator_config(cfg), v["horizon"], v["samples"])
        verdict["checks"]["rays"] = {
            "radius": radius,
            "radius_is_validity_radius": measured,
            "nmse_percent": [float(x) for x in rays],
            "passed": bool(np.all(rays < thr)),
        }
    except DivergentExpansionError as exc:
        verdict["checks"]["rays"] = {"passed": False, "error": str(exc)}
    t = cfg["trajectory"]
    if t["xi0"] is not None or t["x0"] is not None:
        xi0, inv_res = _start(cfg, table)
        horizon = v["horizon"] or default_horizon(table)
        times = uniform_times(horizon, v["samples"])
        est = spectral_trajectory(table, xi0, times)
        ref = integrate(field, eval_psi(table, xi0).state, times, integrator_config(cfg))
        err = nmse(est, ref)
        verdict["checks"]["trajectory"] = {
            "xi0": [xi0.real, xi0.imag],
            "invert_residual": inv_res,
            "nmse_percent": err,
            "passed": err < thr,
        }
    verdict["passed"] = all(c["passed"] for c in verdict["checks"].values())
    write_json(_out(cfg) / "validate.json", verdict)
    print(json.dumps(verdict, indent=2, sort_keys=True))
    return EXIT_OK if verdict["passed"] else EXIT_VALIDATION


COMMANDS = {
    "eigen": cmd_eigen,
    "modes": cmd_modes,
    "manifold": cmd_manifold,
    "trajectory": cmd_trajectory,
    "validate": cmd_validate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="koopnnm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field by dotted path (JSON value)")
        p.add_argument("--output-dir", help=f"output directory (also ${OUTPUT_ENV})")
        p.add_argument("--order", type=int)
        p.add_argument("--mode", help="in-phase, out-of-phase or an eigenvalue index")
        if name in ("manifold", "validate"):
            g = p.add_mutually_exclusive_group()
            g.add_argument("--radius", type=float)
            g.add_argument("--auto-radius", action="store_true")
        if name == "manifold":
            p.add_argument("--grid", help="polar resolution NRxNT")
        if name in ("trajectory", "validate", "manifold"):
            p.add_argument("--horizon", type=float)
            p.add_argument("--samples", type=int)
        if name in ("trajectory", "validate"):
            p.add_argument("--xi0-re", type=float)
            p.add_argument("--xi0-im", type=float)
            p.add_argument("--x0", help="comma-separated initial state, inverted onto the manifold")
        if name == "trajectory":
            p.add_argument("--orders", help="comma-separated orders for the decomposition")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResonanceError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RESONANCE
    except DivergentExpansionError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KoopNNMError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
