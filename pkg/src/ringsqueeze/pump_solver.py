"""Classical pump dynamics (self- and cross-phase modulation) in the local basis."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core_model import HBAR, SystemConfig, group_velocity_at
from .errors import StepUnstable
from .linear_network import ModeBasisMaps, NetworkTopology
from .nonlinear_coupling import NonlinearTable, pump_nl_coeffs

PUMPS = ("P1", "P2")


@dataclass
class PumpState:
    """Local amplitudes per pump, each of shape (N_k, n_local)."""

    t: float
    alpha: dict


@dataclass
class PumpTrajectory:
    """Pump state at every time step.

    ``alpha[P]`` has shape (n_steps + 1, N_k, n_local); ``fields[P]`` holds the
    k-integrated arc fields, shape (n_steps + 1, n_local).
    """

    t: np.ndarray
    alpha: dict
    fields: dict
    dk: dict
    stop_reason: str = "fixed"

    @property
    def dt(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def fields_at(self, t):
        """Arc fields at time ``t`` by linear interpolation between stored steps."""
        out = {}
        pos = (t - self.t[0]) / self.dt if self.dt else 0.0
        i = int(np.clip(np.floor(pos), 0, len(self.t) - 2)) if len(self.t) > 1 else 0
        w = pos - i
        for P, F in self.fields.items():
            if len(self.t) == 1:
                out[P] = F[0]
            else:
                out[P] = (1 - w) * F[i] + w * F[i + 1]
        return out

    def state(self, n) -> PumpState:
        return PumpState(float(self.t[n]), {P: a[n] for P, a in self.alpha.items()})


def pulse_spectrum(cfg: SystemConfig, pulse, k, omega_center):
    """Asymptotic-in amplitude of a gaussian pulse on wavenumbers ``k``.

    Normalized so that sum(|a|^2) dk hbar w = pulse energy.
    """
    v = float(group_velocity_at(cfg.dispersion, omega_center))
    dt = pulse.duration
    q = np.asarray(k) - pulse.center_k
    if pulse.energy == 0:
        return np.zeros(q.shape, dtype=complex)
    amp = (2 / np.pi) ** 0.25 * np.sqrt(pulse.energy * dt * v / (HBAR * omega_center))
    return amp * np.exp(-(v * dt * q) ** 2) * np.exp(-1j * q * pulse.delay_position)


def initial_pump(cfg: SystemConfig, pulse, maps: ModeBasisMaps, t0=None) -> PumpState:
    """Pump state at t0: the pulse fully in the input waveguide, mapped to the local basis."""
    b = cfg.bin(pulse.target)
    v = float(group_velocity_at(cfg.dispersion, b.center_omega))
    if abs(pulse.delay_position) <= 4 * v * pulse.duration or pulse.delay_position > 0:
        warnings.warn(f"pump {pulse.target}: pulse not fully contained in the input waveguide at t0",
                      stacklevel=2)
    a_in = pulse_spectrum(cfg, pulse, maps.k, b.center_omega)
    alpha = maps.H[:, :, 0] * a_in[:, None]
    return PumpState(cfg.time_grid.t0 if t0 is None else t0, {pulse.target: alpha})


class PumpSystem:
    """Right-hand side of the pump equations for both pumps."""

    def __init__(self, cfg: SystemConfig, table: NonlinearTable, maps: dict):
        self.cfg = cfg
        self.maps = maps
        coeffs = pump_nl_coeffs(table)
        self.spm = coeffs.spm
        self.xpm = coeffs.xpm
        self.dk = {P: cfg.bin(P).dk for P in PUMPS}
        self.dw = {P: cfg.bin(P).detuning_grid(cfg.dispersion) for P in PUMPS}
        self.C = {P: maps[P].C for P in PUMPS}

    def fields(self, alpha):
        return {P: self.dk[P] * alpha[P].sum(axis=0) for P in PUMPS}

    def rhs(self, alpha):
        F = self.fields(alpha)
        out = {}
        for P, other in (("P1", "P2"), ("P2", "P1")):
            nl = self.spm[P] * np.abs(F[P]) ** 2 * F[P] + self.xpm[P] * np.abs(F[other]) ** 2 * F[P]
            lin = -1j * self.dw[P][:, None] * alpha[P]
            out[P] = lin + 1j * np.einsum("kij,j->ki", self.C[P], nl)
        return out


def pump_rhs(cfg, table, state: PumpState, maps):
    return PumpSystem(cfg, table, maps).rhs(state.alpha)


def ring_energy(cfg: SystemConfig, topology: NetworkTopology, fields, pump):
    """Energy (J) stored in the rings for per-arc fields ``fields`` (..., n_local)."""
    geo = topology.arc_geometry()
    lengths = np.array([g[2] for g in geo])
    w = cfg.bin(pump).center_omega
    return HBAR * w * (np.abs(fields) ** 2 @ lengths) / (2 * np.pi)


def default_time_step(cfg: SystemConfig, factor=40.0):
    """1 / (factor * largest |detuning| at any bin edge)."""
    dw = max(np.max(np.abs(b.detuning_grid(cfg.dispersion))) for b in cfg.bins)
    return 1.0 / (factor * dw)


def _axpy(y, h, terms):
    return {P: y[P] + h * sum(c * f[P] for c, f in terms) for P in y}


def integrate_pumps(cfg: SystemConfig, table: NonlinearTable, maps: dict, dt=None, tf=None,
                    t0=None, stop_fraction=1e-4, max_time=None, topology=None) -> PumpTrajectory:
    """Adams-Bashforth 4 integration with a Runge-Kutta 4 start.

    With ``tf`` given the run stops there; otherwise it stops once the
    pump energy left in the rings drops below ``stop_fraction`` of its peak,
    or at ``max_time``.
    """
    system = PumpSystem(cfg, table, maps)
    topo = topology or NetworkTopology(cfg)
    t0 = cfg.time_grid.t0 if t0 is None else t0
    dt = dt or cfg.time_grid.dt or default_time_step(cfg)
    tf = cfg.time_grid.tf if tf is None else tf
    alpha = {}
    for P in PUMPS:
        try:
            pulse = cfg.pump(P)
            alpha[P] = initial_pump(cfg, pulse, maps[P], t0).alpha[P]
        except KeyError:
            alpha[P] = np.zeros((cfg.bin(P).n_k, topo.n_local), dtype=complex)

    if tf is not None:
        n_target = int(round((tf - t0) / dt))
    else:
        n_target = None
        if max_time is None:
            raise ValueError("either tf or max_time is required")
        n_max = int(np.ceil((max_time - t0) / dt))

    states = [alpha]
    derivs = []
    peak = 0.0
    reason = "fixed" if n_target is not None else "max_time"
    n = 0
    while True:
        if n_target is not None and n >= n_target:
            break
        if n_target is None:
            F = system.fields(states[-1])
            e = sum(ring_energy(cfg, topo, F[P], P) for P in PUMPS)
            peak = max(peak, e)
            if peak > 0 and e < stop_fraction * peak and n > 0 and e < peak:
                reason = "ring_energy"
                break
            if peak == 0 and n > 0:
                reason = "no_pump"
                break
            if n >= n_max:
                break
        y = states[-1]
        f = system.rhs(y)
        derivs.append(f)
        if n < 3:
            k1 = f
            k2 = system.rhs(_axpy(y, dt / 2, [(1.0, k1)]))
            k3 = system.rhs(_axpy(y, dt / 2, [(1.0, k2)]))
            k4 = system.rhs(_axpy(y, dt, [(1.0, k3)]))
            y_new = _axpy(y, dt / 6, [(1.0, k1), (2.0, k2), (2.0, k3), (1.0, k4)])
        else:
            f0, f1, f2, f3 = derivs[-1], derivs[-2], derivs[-3], derivs[-4]
            y_new = _axpy(y, dt / 24, [(55.0, f0), (-59.0, f1), (37.0, f2), (-9.0, f3)])
            derivs.pop(0)
        for P in PUMPS:
            before = np.max(np.abs(y[P]))
            after = np.max(np.abs(y_new[P]))
            if not np.all(np.isfinite(y_new[P])) or (before > 0 and after > 10 * before):
                raise StepUnstable(f"pump {P} amplitude grew from {before:.3g} to {after:.3g} in one step")
        states.append(y_new)
        n += 1

    t = t0 + dt * np.arange(len(states))
    alpha_arr = {P: np.stack([s[P] for s in states]) for P in PUMPS}
    fields = {P: system.dk[P] * alpha_arr[P].sum(axis=1) for P in PUMPS}
    return PumpTrajectory(t, alpha_arr, fields, system.dk, reason)


def output_amplitudes(alpha_loc, maps: ModeBasisMaps):
    """Project local amplitudes (N_k, n_local) onto asymptotic-out ports.

    Uses least squares so that singular maps (lossless rings, where phantom
    ports decouple) are handled.
    """
    out = np.empty_like(alpha_loc)
    for i in range(alpha_loc.shape[0]):
        out[i] = np.linalg.lstsq(maps.H_out[i], alpha_loc[i], rcond=None)[0]
    return out


def energy_history(cfg: SystemConfig, traj: PumpTrajectory, maps: dict, topology=None):
    """Ring and waveguide energy (J) versus time for each pump.

    The waveguide energy counts the part of the pulse that has not yet reached
    the coupler plus everything emitted into the output waveguide so far.
    """
    topo = topology or NetworkTopology(cfg)
    rows = {}
    for P in PUMPS:
        b = cfg.bin(P)
        w = b.center_omega
        v = float(group_velocity_at(cfg.dispersion, w))
        F = traj.fields[P]
        ring = ring_energy(cfg, topo, F, P)
        try:
            pulse = cfg.pump(P)
        except KeyError:
            rows[P] = (ring, np.zeros_like(ring))
            continue
        a_in = pulse_spectrum(cfg, pulse, maps[P].k, w)
        dwk = b.detuning_grid(cfg.dispersion)
        total = HBAR * w * b.dk * np.sum(np.abs(a_in) ** 2)
        f_in = b.dk * (np.exp(-1j * np.outer(traj.t - traj.t[0], dwk)) @ a_in)
        p_in = HBAR * w * v * np.abs(f_in) ** 2 / (2 * np.pi)
        p_out = HBAR * w * v * np.abs(F[:, 0]) ** 2 / (2 * np.pi)
        dt = traj.dt
        cum = lambda p: np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * dt)])
        wg = total - cum(p_in) + cum(p_out)
        rows[P] = (ring, wg)
    return rows

