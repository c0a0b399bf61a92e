"""Command-line interface: ``ringsqueeze <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core_model import config_hash, load_config, save_config
from .errors import PartialFailure, RingSqueezeError
from .gaussian_analysis import analyze_state, basis_overlaps, bloch_messiah, moments_from_VW, reduce, williamson
from .linear_network import transmission_spectrum
from .nonlinear_coupling import ALL_TERMS, DP_ONLY, lambda_bar, table_to_json
from .pump_solver import energy_history
from .quantum_propagator import SplitStepPropagator, read_vw, write_vw

log = logging.getLogger("ringsqueeze")

GHZ = 2 * math.pi * 1e9
MHZ = 2 * math.pi * 1e6

# CLI-unit suffixes accepted in override files (value * scale -> SI)
_SUFFIX = {"_GHz": GHZ, "_MHz": MHZ, "_um": 1e-6, "_pJ": 1e-12, "_ps": 1e-12, "_ps2_per_m": 1e-24}

SCENARIO_GRIDS = {
    # (axis name, values in CLI units) for the coarse desk-scale grids
    "example1": [("kappa_aux", np.linspace(0.0, 0.08, 8)), ("pump_detuning_MHz", np.linspace(-600, 200, 8))],
    "example2": [("kappa_aux", np.linspace(0.0, 0.05, 8)), ("pump_detuning_MHz", np.linspace(-500, 300, 8))],
}
HIGH_FIDELITY = {"n_k": 31, "n_phantom": 5}
HIGH_GRID_POINTS = 16


def _parse_range(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI in GHz, got {text!r}")
    return lo, hi


def _to_si(name, value):
    for suffix, scale in _SUFFIX.items():
        if name.endswith(suffix):
            conv = np.asarray(value, dtype=float) * scale
            return name[: -len(suffix)], conv.tolist() if conv.ndim else float(conv)
    return name, value


# ------------------------------------------------------------------ commands


def cmd_spectrum(args):
    cfg = load_config(args.config)
    lo, hi = args.range
    det = np.linspace(lo, hi, args.points)
    h, power = transmission_spectrum(cfg, cfg.dispersion.omega_ref + det * GHZ)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning_GHz", "power_transmission", "phase_rad"])
        for d, p, ph in zip(det, power, np.angle(h)):
            w.writerow([f"{d:.9g}", f"{p:.12g}", f"{ph:.12g}"])
    return 0


def cmd_nltable(args):
    cfg = load_config(args.config)
    table = lambda_bar(cfg)
    out = table_to_json(table)
    out["units"] = {"lam_bar": "SI (rad/s per unit field product)", "delta_omega": "GHz", "delta_k": "1/um"}
    for row in out["quads"]:
        row["delta_k_per_um"] = row.pop("delta_k_per_m") * 1e-6
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2)
    return 0


def cmd_pumps(args):
    from .scenarios import prepare

    cfg = load_config(args.config)
    prep = prepare(cfg)
    hist = energy_history(cfg, prep.trajectory, prep.maps, prep.topology)
    t_ps = prep.trajectory.t * 1e12
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ps", "pump", "ring_energy_pJ", "waveguide_energy_pJ"])
        for P, (ring, wg) in hist.items():
            for t, r, g in zip(t_ps, ring, wg):
                w.writerow([f"{t:.9g}", P, f"{r * 1e12:.9g}", f"{g * 1e12:.9g}"])
    log.info("pump run stopped by %s at %.1f ps", prep.trajectory.stop_reason, t_ps[-1])
    return 0


def cmd_propagate(args):
    from .scenarios import prepare

    cfg = load_config(args.config)
    prep = prepare(cfg)
    terms = ALL_TERMS if args.terms == "all" else DP_ONLY
    prop = SplitStepPropagator(cfg, prep.table, prep.generated_maps, prep.trajectory, terms, basis="out")
    K = prop.compose()
    write_vw(args.out, K.V, K.W, K.layout, extra={
        "basis": "out", "t0_ps": K.t0 * 1e12, "tf_ps": K.tf * 1e12, "terms": sorted(terms),
        "config_hash": config_hash(cfg), "port_labels": list(prep.topology.port_labels()),
    })
    return 0


def _subset_rows(layout, spec):
    """Row indices for a named subset or a list like ``S:0,LI:0``."""
    named = {
        "signal_out": [("S", 0)],
        "idlers_out": [("LI", 0), ("RI", 0)],
        "outputs": [(J, 0) for J in layout.labels],
    }
    if spec == "all":
        return np.arange(layout.size)
    if spec == "signal_all":
        pairs = [("S", nu) for nu in range(layout.n_modes)]
    elif spec in named:
        pairs = named[spec]
    else:
        pairs = []
        for item in spec.split(","):
            J, nu = item.split(":")
            pairs.append((J, int(nu)))
    return np.concatenate([layout.rows(J, nu) for J, nu in pairs])


def _cplx(a):
    a = np.asarray(a)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def cmd_analyze(args):
    V, W, layout, meta = read_vw(args.input)
    rows = _subset_rows(layout, args.subset)
    state = reduce(moments_from_VW(V, W), rows)
    rep = analyze_state(state)
    sigma = state.sigma
    S, d = williamson(sigma)
    O, r, O2 = bloch_messiah(S)
    overlaps = basis_overlaps(O2)
    out = {
        "subset": args.subset,
        "n_modes": rep.n_modes,
        "symplectic_eigenvalues": rep.symplectic_eigenvalues.tolist(),
        "squeezing_factors": rep.squeezing_r.tolist(),
        "max_squeezing_dB": rep.max_squeezing_db,
        "max_antisqueezing_dB": rep.max_antisqueezing_db,
        "photon_numbers": {"thermal": rep.n_th, "squeezing": rep.n_sq, "total": rep.n_tot},
        "mercer_wolf": {
            "occupancies": rep.mercer_wolf.occupancies.tolist(),
            "squeezing_dB": rep.mercer_wolf.squeezing_db.tolist(),
            "antisqueezing_dB": rep.mercer_wolf.antisqueezing_db.tolist(),
            "modes": _cplx(rep.mercer_wolf.modes[:, : min(5, rep.n_modes)]),
        },
        "basis_overlaps": {k: np.asarray(v).tolist() for k, v in overlaps.items()},
        "source": {k: meta.get(k) for k in ("basis", "terms", "config_hash", "tf_ps")},
    }
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2)
    return 0


def cmd_config(args):
    from .scenarios import params_for, scenario_config

    overrides = {}
    for item in args.set or []:
        key, _, val = item.partition("=")
        key, v = _to_si(key, json.loads(val))
        overrides[key] = tuple(v) if isinstance(v, list) else v
    p = params_for(args.scenario, **overrides)
    cfg, _ = scenario_config(p)
    save_config(cfg, args.out)
    return 0


def _load_overrides(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def build_sweep(scenario, overrides, fidelity="low"):
    """SweepSpec plus the CLI-unit axis description from an override dict."""
    from .scenarios import OBSERVABLES, SweepSpec

    base = {}
    if fidelity == "high":
        base.update(HIGH_FIDELITY)
    for key, val in (overrides.get("base") or {}).items():
        k, v = _to_si(key, val)
        base[k] = tuple(v) if isinstance(v, list) else v
    if "axes" in overrides:
        axes_cli = [(a["name"], np.asarray(a["values"], dtype=float)) for a in overrides["axes"]]
    else:
        axes_cli = SCENARIO_GRIDS[scenario]
        if fidelity == "high":
            axes_cli = [(n, np.linspace(v[0], v[-1], HIGH_GRID_POINTS)) for n, v in axes_cli]
    axes = []
    for name, vals in axes_cli:
        k, conv = _to_si(name, list(vals))
        axes.append((k, list(conv) if isinstance(conv, list) else [conv]))
    spec = SweepSpec(scenario, axes, base, tuple(overrides.get("observables", OBSERVABLES)))
    return spec, axes_cli


def write_grid(outdir, spec, axes_cli, records):
    """grid.csv, grid.json and SVG plots for a list of RunRecords."""
    from .plotting import heatmap, line_plot

    outdir = Path(outdir)
    names = [n for n, _ in axes_cli]
    obs_names = list(spec.observables)
    diag_cols = ["n_k_S", "dt_ps", "tf_ps", "stop_reason", "coarse_k_grid"]
    cli_values = [list(v) for _, v in axes_cli]
    points = ([()] if not names else
              [(a,) for a in cli_values[0]] if len(names) == 1 else
              [(a, b) for a in cli_values[0] for b in cli_values[1]])
    with open(outdir / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + obs_names + diag_cols + ["error"])
        for pt, rec in zip(points, records):
            d = rec.diagnostics or {}
            row = [f"{x:.9g}" for x in pt]
            row += [f"{rec.observables.get(o, float('nan')):.10g}" for o in obs_names]
            row += [d.get("n_k", {}).get("S", ""), f"{d.get('dt_ps', float('nan')):.6g}",
                    f"{d.get('tf_ps', float('nan')):.6g}", d.get("stop_reason", ""), d.get("coarse_k_grid", "")]
            row.append(rec.error or "")
            w.writerow(row)
    payload = [{"axes": dict(zip(names, pt)), "observables": rec.observables,
                "diagnostics": rec.diagnostics, "error": rec.error} for pt, rec in zip(points, records)]
    with open(outdir / "grid.json", "w") as fh:
        json.dump(payload, fh, indent=2, default=float)

    for o in obs_names:
        vals = np.array([rec.observables.get(o, np.nan) for rec in records], dtype=float)
        title = o.replace("_", " ")
        if len(names) == 2:
            z = vals.reshape(len(cli_values[0]), len(cli_values[1])).T
            heatmap(outdir / f"{o}.svg", cli_values[0], cli_values[1], z, names[0], names[1], title)
        else:
            x = cli_values[0] if names else [0.0]
            line_plot(outdir / f"{o}.svg", x, {o: vals}, names[0] if names else "point", o, title)


def _versions():
    import matplotlib
    import scipy

    return {"ringsqueeze": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def cmd_run(args):
    from .scenarios import point_params, scenario_config, sweep

    overrides = _load_overrides(args.config)
    spec, axes_cli = build_sweep(args.scenario, overrides, args.fidelity)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    status = 0
    try:
        records = sweep(spec, args.workers)
    except PartialFailure as exc:
        records = exc.records
        status = 2
        log.error("%d of %d grid points failed", len(exc.errors), len(records))
    elapsed = time.perf_counter() - start
    write_grid(outdir, spec, axes_cli, records)
    first = point_params(spec, spec.points()[0])
    try:
        base_hash = config_hash(scenario_config(first, check_spans=False)[0])
    except RingSqueezeError:
        base_hash = None
    meta = {
        "scenario": args.scenario,
        "fidelity": args.fidelity,
        "config_hash_first_point": base_hash,
        "point_hashes": [r.diagnostics.get("config_hash") for r in records],
        "axes": {n: list(map(float, v)) for n, v in axes_cli},
        "grid_note": "coarse desk-scale grid; the reference sweep resolution is not known",
        "base_overrides": {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.base.items()},
        "versions": _versions(),
        "wall_time_s": elapsed,
        "point_wall_times_s": [r.diagnostics.get("wall_s") for r in records],
        "failed_points": sum(1 for r in records if r.error),
    }
    with open(outdir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=float)
    return status


# ------------------------------------------------------------------ parser


def build_parser():
    ap = argparse.ArgumentParser(prog="ringsqueeze", description="Squeezed light in coupled microrings.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="waveguide transmission spectrum")
    p.add_argument("--config", required=True)
    p.add_argument("--range", required=True, type=_parse_range, help="LO:HI detuning from omega_ref in GHz")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("nltable", help="nonlinear coupling table as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_nltable)

    p = sub.add_parser("pumps", help="pump energy in rings and waveguide versus time")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pumps)

    p = sub.add_parser("propagate", help="full V, W propagator (asymptotic-out basis) as binary dump")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--terms", choices=("all", "dp"), default="all")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("analyze", help="Gaussian-state analysis of a V, W dump")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--subset", default="signal_out",
                   help="signal_out, signal_all, idlers_out, outputs, all, or e.g. S:0,LI:0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("config", help="write the full config of a scenario point")
    p.add_argument("--scenario", choices=("example1", "example2"), required=True)
    p.add_argument("--set", action="append", metavar="KEY=JSON",
                   help="parameter override, e.g. kappa_aux=0.05 or energy_pJ=10")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("run", help="scenario sweep with CSV/JSON/SVG output")
    p.add_argument("--scenario", choices=("example1", "example2"), required=True)
    p.add_argument("--config", help="overrides JSON (base parameters, axes, observables)")
    p.add_argument("--out", required=True)
    p.add_argument("--fidelity", choices=("low", "high"), default="low")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_run)
    return ap


def _join_negative_range(argv):
    """Allow ``--range -10:10`` (argparse would read -10:10 as an option)."""
    out = []
    it = iter(argv)
    for a in it:
        if a == "--range":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--range={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_negative_range(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RingSqueezeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
