"""Scenario construction (idler splitting and pump shifting), single runs and sweeps."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core_model import (
    AUXILIARY,
    BIN_LABELS,
    C_LIGHT,
    PRIMARY,
    WAVEGUIDE,
    DispersionModel,
    PumpPulse,
    RingSpec,
    SystemConfig,
    TimeGrid,
    build_bins,
    config_hash,
    coupler,
    dispersion_k,
    dispersion_omega,
    group_velocity_at,
    validate_config,
)
from .errors import InvalidCoupling, PartialFailure
from .gaussian_analysis import analyze_state, fidelity, moments_from_VW, reduce
from .linear_network import NetworkTopology, decoupled, find_resonance_features, local_basis_maps
from .nonlinear_coupling import ALL_TERMS, DP_ONLY, lambda_bar
from .pump_solver import default_time_step, integrate_pumps
from .quantum_propagator import SplitStepPropagator

LAMBDA_S = 1550e-9
N_EFF = 1.8  # only fixes the absolute azimuthal order; no observable depends on it

OBSERVABLES = (
    "max_squeezing_db",
    "max_antisqueezing_db",
    "fidelity_vs_dp_only",
    "n_tot_S",
    "n_tot_LI",
    "n_tot_RI",
    "n_th",
    "n_sq",
    "mw1_db",
    "mw2_db",
    "mw3_db",
    "mw1_n",
    "mw2_n",
    "mw3_n",
    "splitting_GHz",
    "dp_detuning_MHz",
)


@dataclass
class ScenarioParams:
    """Physical and numerical parameters of one scenario point (SI units)."""

    name: str = "example1"
    primary_length: float = 2 * np.pi * 120e-6
    aux_length: float = 0.75 * 2 * np.pi * 120e-6
    wg_self_coupling: float = 0.997
    primary_attenuation: float = 0.9991
    aux_attenuation: float = 0.99935
    kappa_aux: float = 0.0643
    group_index: float = 2.0
    gvd: float = 0.0
    gamma_nl: float = 1.0
    energy: float = 100e-12
    duration: float = 70e-12
    pump_detuning: tuple = (-2 * np.pi * 284e6, -2 * np.pi * 284e6)
    pump_order: int = 1  # pumps sit this many FSR from S; idlers twice as far
    aux_target: str = "LI"  # resonance the auxiliary ring is tuned to
    aux_detuning: float = 0.0  # aux resonance offset from the target (rad/s)
    split_bins: tuple = ("LI", "RI")
    n_phantom: int = 3
    n_k: int = 15
    span_linewidths: float = 12.0
    dt_factor: float = 40.0
    delay_widths: float = 4.5
    stop_fraction: float = 1e-4
    attenuation_override: float = None  # set both rings' attenuation (lossless tests)

    def replace(self, **kw):
        return replace(self, **kw)


def example1_params(**kw) -> ScenarioParams:
    return ScenarioParams(**kw)


def example2_params(**kw) -> ScenarioParams:
    base = dict(
        name="example2",
        aux_length=2 * np.pi * 75e-6,
        kappa_aux=0.0355,
        group_index=2.018,
        gvd=0.5e-24,
        pump_detuning=(-2 * np.pi * 170e6, -2 * np.pi * 170e6),
        pump_order=5,
        aux_target="P1",
        aux_detuning=-2 * np.pi * 4.77e9,
        split_bins=(),
    )
    base.update(kw)
    return ScenarioParams(**base)


def params_for(name, **kw):
    if name == "example1":
        return example1_params(**kw)
    if name == "example2":
        return example2_params(**kw)
    raise ValueError(f"unknown scenario {name!r}")


def _dispersion(p: ScenarioParams):
    w0 = 2 * np.pi * C_LIGHT / LAMBDA_S
    m0 = round(N_EFF * p.primary_length / LAMBDA_S)
    k0 = 2 * np.pi * m0 / p.primary_length
    return DispersionModel(w0, k0, C_LIGHT / p.group_index, p.gvd)


def primary_resonance(model: DispersionModel, length, order):
    """Uncoupled primary resonance ``order`` FSRs from the reference resonance."""
    return float(dispersion_omega(model, model.k_ref + 2 * np.pi * order / length))


def bin_orders(p: ScenarioParams):
    q = p.pump_order
    return {"LI": -2 * q, "P1": -q, "S": 0, "P2": q, "RI": 2 * q}


def base_config(p: ScenarioParams) -> SystemConfig:
    """Rings, couplers and dispersion of a scenario (no bins, pumps or time grid)."""
    if not 0.0 <= p.kappa_aux <= 1.0:
        raise InvalidCoupling("kappa_aux", f"cross-coupling {p.kappa_aux!r} outside [0, 1]")
    model = _dispersion(p)
    orders = bin_orders(p)
    target = primary_resonance(model, p.primary_length, orders[p.aux_target]) + p.aux_detuning
    phase = -np.mod(float(dispersion_k(model, target)) * p.aux_length, 2 * np.pi)
    gp = p.primary_attenuation if p.attenuation_override is None else p.attenuation_override
    ga = p.aux_attenuation if p.attenuation_override is None else p.attenuation_override
    rings = (
        RingSpec(PRIMARY, p.primary_length, gp, p.n_phantom),
        RingSpec(AUXILIARY, p.aux_length, ga, p.n_phantom, phase_offset=phase),
    )
    couplers = (
        coupler(p.wg_self_coupling, (WAVEGUIDE, 0.0), (PRIMARY, 0.0)),
        coupler(np.sqrt(1 - p.kappa_aux**2), (PRIMARY, p.primary_length / 2), (AUXILIARY, 0.0)),
    )
    cfg = SystemConfig(model, rings, couplers, p.gamma_nl, aux_detuning=p.aux_detuning)
    return validate_config(cfg)


def locate_bins(cfg: SystemConfig, p: ScenarioParams):
    """Bin centers, spans and per-bin grid sizes from the coupled spectrum.

    Split resonances are centred on the uncoupled primary position and span
    both peaks; the others on the nearest system resonance.  Grid sizes give
    all bins the spacing of the narrowest one.
    """
    model = cfg.dispersion
    fsr = 2 * np.pi * C_LIGHT / p.group_index / p.primary_length
    orders = bin_orders(p)
    ref = decoupled(cfg)
    centers, spans, info = [], [], {}
    for J in BIN_LABELS:
        w0 = primary_resonance(model, p.primary_length, orders[J])
        lo, hi = w0 - fsr / 6, w0 + fsr / 6
        fw0 = find_resonance_features(ref, lo, hi).fwhms
        fw_ref = float(np.nanmin(fw0))
        feats = find_resonance_features(cfg, lo, hi, n_scan=int(8 * (hi - lo) / fw_ref))
        c, fw = feats.centers, feats.fwhms
        near = np.argsort(np.abs(c - w0))
        if J in p.split_bins and len(c) >= 2:
            pair = np.sort(near[:2])
            c_pair, w_pair = c[pair], fw[pair]
            width = float(np.nanmax(w_pair))
            half = float(np.max(np.abs(c_pair - w0))) + p.span_linewidths * width / 2
            centers.append(w0)
            spans.append(2 * half)
            info[J] = {"peaks": c_pair.tolist(), "fwhm": w_pair.tolist(), "split": float(c_pair[1] - c_pair[0])}
        else:
            j = near[0]
            width = float(fw[j]) if np.isfinite(fw[j]) else fw_ref
            centers.append(float(c[j]))
            spans.append(p.span_linewidths * width)
            info[J] = {"peaks": [float(c[j])], "fwhm": [width], "shift": float(c[j] - w0)}
    spacing = min(spans) / (p.n_k - 1)
    n_k = []
    for s in spans:
        n = int(np.ceil(s / spacing - 0.01)) + 1
        n += (n + 1) % 2
        n_k.append(max(n, p.n_k))
    return centers, spans, n_k, info


def scenario_config(p: ScenarioParams, check_spans=True):
    """Complete config (bins, pumps, time grid) and resonance info for ``p``."""
    cfg = base_config(p)
    if p.attenuation_override is None:
        centers, spans, n_k, info = locate_bins(cfg, p)
    else:
        # lossless rings have no transmission dip; place bins on the lossy geometry
        centers, spans, n_k, info = locate_bins(base_config(p.replace(attenuation_override=None)), p)
        check_spans = False
    cfg = build_bins(cfg, centers, spans, n_k, check_spans=check_spans)
    model = cfg.dispersion
    pumps = []
    for P, det in zip(("P1", "P2"), p.pump_detuning):
        b = cfg.bin(P)
        v = float(group_velocity_at(model, b.center_omega))
        kp = float(dispersion_k(model, b.center_omega + det))
        pumps.append(PumpPulse(P, p.energy, p.duration, kp, -p.delay_widths * v * p.duration))
    dt = default_time_step(cfg, p.dt_factor)
    cfg = replace(cfg, pumps=tuple(pumps), time_grid=TimeGrid(0.0, None, dt))
    return cfg, info


def recurrence_time(cfg: SystemConfig):
    """Time after which the discrete k-grids repeat (2 pi / largest grid spacing)."""
    spacing = max(np.max(np.diff(b.omega_grid(cfg.dispersion))) for b in cfg.bins)
    return 2 * np.pi / spacing


@dataclass
class Prepared:
    """Everything the quantum propagation needs for one config."""

    cfg: SystemConfig
    topology: NetworkTopology
    maps: dict
    table: object
    trajectory: object
    recurrence: float

    @property
    def generated_maps(self):
        return {J: self.maps[J] for J in ("LI", "S", "RI")}


def prepare(cfg: SystemConfig, stop_fraction=1e-4, tf=None) -> Prepared:
    """Mode maps, nonlinear table and pump trajectory for a config with bins.

    Without ``tf`` the pump run stops on the ring-energy rule or just before
    the k-grid recurrence time, whichever comes first.
    """
    topo = NetworkTopology(cfg)
    maps = {b.label: local_basis_maps(cfg, b, topo) for b in cfg.bins}
    table = lambda_bar(cfg, topo)
    t_rec = recurrence_time(cfg)
    tf = tf if tf is not None else cfg.time_grid.tf
    traj = integrate_pumps(cfg, table, maps, tf=tf, stop_fraction=stop_fraction,
                           max_time=0.95 * t_rec, topology=topo)
    return Prepared(cfg, topo, maps, table, traj, t_rec)


def run_point(p: ScenarioParams, dp_twin=True, terms=ALL_TERMS):
    """Simulate one scenario point and return (observables, diagnostics)."""
    start = time.perf_counter()
    cfg, info = scenario_config(p)
    prep = prepare(cfg, p.stop_fraction)
    maps, table, traj, t_rec = prep.maps, prep.table, prep.trajectory, prep.recurrence
    gen_maps = prep.generated_maps
    prop = SplitStepPropagator(cfg, table, gen_maps, traj, terms, basis="out")
    lay = prop.layout
    rows = {J: lay.rows(J, 0) for J in ("LI", "S", "RI")}
    all_rows = np.concatenate([rows["S"], rows["LI"], rows["RI"]])
    R = prop.propagate_rows(all_rows)
    V, W = R[:, : prop.N], R[:, prop.N:]
    state = moments_from_VW(V, W)
    nS = len(rows["S"])
    nLI = len(rows["LI"])
    sig = reduce(state, range(nS))
    rep = analyze_state(sig)
    obs = {
        "max_squeezing_db": rep.max_squeezing_db,
        "max_antisqueezing_db": rep.max_antisqueezing_db,
        "n_tot_S": rep.n_tot,
        "n_tot_LI": float(np.trace(state.N[nS:nS + nLI, nS:nS + nLI]).real),
        "n_tot_RI": float(np.trace(state.N[nS + nLI:, nS + nLI:]).real),
        "n_th": rep.n_th,
        "n_sq": rep.n_sq,
        "mw1_db": float(rep.mercer_wolf.squeezing_db[0]),
        "mw2_db": float(rep.mercer_wolf.squeezing_db[1]),
        "mw3_db": float(rep.mercer_wolf.squeezing_db[2]),
        "mw1_n": float(rep.mercer_wolf.occupancies[0]),
        "mw2_n": float(rep.mercer_wolf.occupancies[1]),
        "mw3_n": float(rep.mercer_wolf.occupancies[2]),
        "splitting_GHz": float(info["LI"].get("split", 0.0)) / (2 * np.pi * 1e9),
        "dp_detuning_MHz": float(table.detuning(("S", "S", "P1", "P2"))) / (2 * np.pi * 1e6),
        "fidelity_vs_dp_only": float("nan"),
    }
    if dp_twin:
        twin = SplitStepPropagator(cfg, table, gen_maps, traj, DP_ONLY, basis="out")
        Rt = twin.propagate_rows(rows["S"])
        st = moments_from_VW(Rt[:, : twin.N], Rt[:, twin.N:])
        obs["fidelity_vs_dp_only"] = fidelity(sig.sigma, st.sigma)
    fw_S = info["S"]["fwhm"][0]
    spacing = min(np.min(np.diff(b.omega_grid(cfg.dispersion))) for b in cfg.bins)
    diag = {
        "config_hash": config_hash(cfg),
        "n_k": {b.label: b.n_k for b in cfg.bins},
        "dt_ps": traj.dt * 1e12,
        "tf_ps": float(traj.t[-1]) * 1e12,
        "n_steps": len(traj.t) - 1,
        "stop_reason": traj.stop_reason,
        "recurrence_ps": t_rec * 1e12,
        "grid_spacing_over_fwhm": float(spacing / fw_S),
        "coarse_k_grid": bool(spacing / fw_S > 0.5),
        "max_cond_H": float(max(np.max(m.cond) for m in maps.values())),
        "wall_s": time.perf_counter() - start,
    }
    return obs, diag


# ------------------------------------------------------------------ sweeps


@dataclass
class SweepSpec:
    """Up to two axes over ScenarioParams fields.

    Each axis is ``(field name, values)``; a value for ``pump_detuning`` may be
    a scalar (applied to the swept pumps) or a pair.
    """

    scenario: str
    axes: list
    base: dict = field(default_factory=dict)
    observables: tuple = OBSERVABLES

    def __post_init__(self):
        if len(self.axes) > 2:
            raise ValueError("at most two sweep axes")
        for name in self.observables:
            if name not in OBSERVABLES:
                raise ValueError(f"unknown observable {name!r}")

    def points(self):
        if not self.axes:
            return [()]
        grids = [list(vals) for _, vals in self.axes]
        if len(grids) == 1:
            return [(v,) for v in grids[0]]
        return [(a, b) for a in grids[0] for b in grids[1]]


def _apply(p: ScenarioParams, name, value):
    if name == "pump_detuning" and np.ndim(value) == 0:
        if p.name == "example2":
            return p.replace(pump_detuning=(float(value), p.pump_detuning[1]))
        return p.replace(pump_detuning=(float(value), float(value)))
    return p.replace(**{name: value})


def point_params(spec: SweepSpec, values):
    p = params_for(spec.scenario, **spec.base)
    for (name, _), v in zip(spec.axes, values):
        p = _apply(p, name, v)
    return p


def _job(args):
    spec, values = args
    try:
        obs, diag = run_point(point_params(spec, values))
        return values, obs, diag, None
    except Exception as exc:  # collected into PartialFailure by the caller
        return values, None, None, f"{type(exc).__name__}: {exc}"


@dataclass
class RunRecord:
    axis_values: tuple
    observables: dict
    diagnostics: dict
    error: str = None


def sweep(spec: SweepSpec, workers=None):
    """Evaluate every grid point; results are returned in grid order.

    Raises PartialFailure (carrying the records in ``records``) if any point
    failed.
    """
    jobs = [(spec, v) for v in spec.points()]
    workers = workers or int(os.environ.get("RINGSQUEEZE_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    records = [RunRecord(tuple(v), o or {}, d or {}, e) for v, o, d, e in results]
    errors = {i: r.error for i, r in enumerate(records) if r.error}
    if errors:
        exc = PartialFailure(errors)
        exc.records = records
        raise exc
    return records


def params_to_json(p: ScenarioParams):
    d = asdict(p)
    d["pump_detuning"] = list(d["pump_detuning"])
    d["split_bins"] = list(d["split_bins"])
    return d
