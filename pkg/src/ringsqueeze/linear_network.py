"""Linear scattering of the point-coupled waveguide / primary ring / auxiliary ring chain.

Ports are ordered as: the real waveguide, then the phantom channels of the
primary ring, then those of the auxiliary ring.  Local modes are ordered as:
the output waveguide segment, then the primary-ring arcs, then the
auxiliary-ring arcs.  Arc ``i`` of a ring starts at its ``i``-th phantom point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from .core_model import (
    AUXILIARY,
    PRIMARY,
    WAVEGUIDE,
    ResonanceBin,
    RingSpec,
    SystemConfig,
    dispersion_k,
    dispersion_omega,
)
from .errors import BinOverlap, IllConditioned, NoFeature, SingularNetwork

_SINGULAR_TOL = 1e-14
_COND_LIMIT = 1e10


# ---------------------------------------------------------------- closed forms


def round_trip_phase(ring: RingSpec, model, k, reduced=False):
    """Round-trip phase kL of ``ring`` for waveguide wavenumbers ``k``.

    All elements share one dispersion relation, so the ring wavenumber differs
    from the waveguide one only by the tuning offset.
    """
    phi = np.asarray(k, dtype=float) * ring.length + ring.phase_offset
    if reduced:
        return np.angle(np.exp(1j * phi))
    return phi


def _has_aux(cfg):
    return any(r.label == AUXILIARY for r in cfg.rings)


def aux_transmission(cfg: SystemConfig, k):
    """Through transmission of the auxiliary ring seen from the primary ring."""
    if not _has_aux(cfg):
        return np.ones_like(np.asarray(k, dtype=float), dtype=complex)
    ring = cfg.ring(AUXILIARY)
    s = cfg.coupler_between(PRIMARY, AUXILIARY).self_coupling
    g = ring.round_trip_attenuation * np.exp(1j * round_trip_phase(ring, cfg.dispersion, k))
    den = 1.0 - s * g
    if np.min(np.abs(den)) < _SINGULAR_TOL:
        raise SingularNetwork("auxiliary ring sum diverges (lossless decoupled resonance)")
    return (s - g) / den


def waveguide_transmission(cfg: SystemConfig, k):
    """Complex through amplitude h(k) of the waveguide and its power |h|^2."""
    ring = cfg.ring(PRIMARY)
    s = cfg.coupler_between(WAVEGUIDE, PRIMARY).self_coupling
    r = aux_transmission(cfg, k) * ring.round_trip_attenuation
    r = r * np.exp(1j * round_trip_phase(ring, cfg.dispersion, k))
    den = 1.0 - s * r
    if np.min(np.abs(den)) < _SINGULAR_TOL:
        raise SingularNetwork("primary ring sum diverges")
    h = (s - r) / den
    return h, np.abs(h) ** 2


def transmission_spectrum(cfg: SystemConfig, omega):
    """Through amplitude and power as functions of angular frequency."""
    return waveguide_transmission(cfg, dispersion_k(cfg.dispersion, omega))


# ------------------------------------------------------------- network solver


@dataclass(frozen=True)
class ScatteringSolution:
    """Solution of the linear network on a set of wavenumbers.

    ``H[i, s, nu]`` is the slowly varying amplitude in local mode ``s`` for
    unit input in port ``nu``; ``S[i, mu, nu]`` is the port scattering matrix.
    """

    k: np.ndarray
    H: np.ndarray
    S: np.ndarray


class NetworkTopology:
    """Index bookkeeping for ports, arcs and coupling points of a validated config."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.rings = [cfg.ring(label) for label in cfg.ring_order]
        self.arc_offset = {}
        n = 0
        for ring in self.rings:
            self.arc_offset[ring.label] = n
            n += ring.n_phantom
        self.n_arcs = n
        self.n_ports = 1 + n
        self.n_local = 1 + n
        wg = cfg.coupler_between(WAVEGUIDE, PRIMARY)
        self.wg_coupler = wg
        self.wg_point = self._point_index(PRIMARY, wg.position_on(PRIMARY))
        self.ring_couplers = []
        if _has_aux(cfg):
            c = cfg.coupler_between(PRIMARY, AUXILIARY)
            self.ring_couplers.append((
                c,
                (PRIMARY, self._point_index(PRIMARY, c.position_on(PRIMARY))),
                (AUXILIARY, self._point_index(AUXILIARY, c.position_on(AUXILIARY))),
            ))

    def _point_index(self, label, pos):
        starts = self.cfg.ring(label).arc_starts
        i = int(np.argmin(np.abs(starts - pos)))
        return i

    def arc(self, label, i):
        """Global arc index (0-based among arcs) of arc ``i`` on ring ``label``."""
        ring = self.cfg.ring(label)
        return self.arc_offset[label] + (i % ring.n_phantom)

    def local_index(self, label, i):
        return 1 + self.arc(label, i)

    def port_index(self, label, i):
        return 1 + self.arc(label, i)

    def arc_geometry(self):
        """Per local mode: (element label, start position, length); wg segment has length 0."""
        geo = [(WAVEGUIDE, 0.0, 0.0)]
        for ring in self.rings:
            for start, length in zip(ring.arc_starts, ring.arc_lengths):
                geo.append((ring.label, float(start), float(length)))
        return geo

    def local_labels(self):
        labels = ["wg_out"]
        for ring in self.rings:
            labels += [f"{ring.label}[{i}]" for i in range(ring.n_phantom)]
        return labels

    def port_labels(self):
        labels = ["wg"]
        for ring in self.rings:
            labels += [f"{ring.label}_ph{i}" for i in range(ring.n_phantom)]
        return labels

    def solve(self, k, omega_center=None) -> ScatteringSolution:
        """Solve the network for each wavenumber in ``k``.

        Args:
            k: waveguide wavenumbers (1/m)
            omega_center: bin center used for the slowly varying phase
                reference; ``None`` keeps the physical amplitudes
        """
        cfg = self.cfg
        k = np.atleast_1d(np.asarray(k, dtype=float))
        nk, na, P = k.size, self.n_arcs, self.n_ports

        # w'_p = a_p u_prev(p) + b_p x_ph(p) for every coupling point p
        prop = np.zeros((nk, na), dtype=complex)  # e^{i k l} of each arc
        sigma = np.zeros(na)
        kappa = np.zeros(na)
        prev = np.zeros(na, dtype=int)
        for ring in self.rings:
            off = self.arc_offset[ring.label]
            kr = k[:, None] + ring.phase_offset / ring.length
            prop[:, off:off + ring.n_phantom] = np.exp(1j * kr * ring.arc_lengths[None, :])
            sig = ring.sigmas
            sigma[off:off + ring.n_phantom] = sig
            kappa[off:off + ring.n_phantom] = np.sqrt(np.clip(1.0 - sig**2, 0.0, None))
            for i in range(ring.n_phantom):
                prev[off + i] = off + (i - 1) % ring.n_phantom

        # u = mix @ w' + wg-input term; mix is identity except at real couplers
        mix = np.eye(na, dtype=complex)
        wg_in = np.zeros(na, dtype=complex)
        pw = self.arc(PRIMARY, self.wg_point)
        mix[pw, pw] = self.wg_coupler.self_coupling
        wg_in[pw] = 1j * self.wg_coupler.cross_coupling
        for c, (la, ia), (lb, ib) in self.ring_couplers:
            a, b = self.arc(la, ia), self.arc(lb, ib)
            mix[a, a] = mix[b, b] = c.self_coupling
            mix[a, b] = mix[b, a] = 1j * c.cross_coupling

        # w' as a function of u (per k) and x
        Wu = np.zeros((nk, na, na), dtype=complex)
        Wu[:, np.arange(na), prev] = sigma[None, :] * prop[:, prev]
        Wx = np.zeros((na, P), dtype=complex)
        Wx[np.arange(na), 1 + np.arange(na)] = 1j * kappa
        M = mix[None] @ Wu
        B = mix @ Wx
        B[:, 0] += wg_in
        A = np.eye(na)[None] - M
        self._check_singular(k)
        U = np.linalg.solve(A, np.broadcast_to(B, (nk, na, P)))

        S = np.zeros((nk, P, P), dtype=complex)
        wprime = Wu @ U + Wx[None]
        S[:, 0, :] = 1j * self.wg_coupler.cross_coupling * wprime[:, pw, :]
        S[:, 0, 0] += self.wg_coupler.self_coupling
        w = prop[:, prev][:, :, None] * U[:, prev, :]
        S[:, 1:, :] = 1j * kappa[None, :, None] * w
        S[:, 1 + np.arange(na), 1 + np.arange(na)] += sigma[None, :]

        H = np.empty((nk, P, P), dtype=complex)
        H[:, 0, :] = S[:, 0, :]
        if omega_center is None:
            H[:, 1:, :] = U
        else:
            k0 = float(dispersion_k(cfg.dispersion, omega_center))
            phase = np.zeros(na)
            for ring in self.rings:
                off = self.arc_offset[ring.label]
                beta = k0 + ring.phase_offset / ring.length
                phase[off:off + ring.n_phantom] = beta * ring.arc_starts
            H[:, 1:, :] = U * np.exp(-1j * phase)[None, :, None]
        return ScatteringSolution(k=k, H=H, S=S)

    def _check_singular(self, k):
        cfg = self.cfg
        T = aux_transmission(cfg, k)
        ring = cfg.ring(PRIMARY)
        r = T * ring.round_trip_attenuation * np.exp(1j * round_trip_phase(ring, cfg.dispersion, k))
        if np.min(np.abs(1.0 - self.wg_coupler.self_coupling * r)) < _SINGULAR_TOL:
            raise SingularNetwork("primary ring sum diverges")


def segment_amplitudes(cfg: SystemConfig, k, omega_center=None) -> ScatteringSolution:
    return NetworkTopology(cfg).solve(k, omega_center)


@dataclass(frozen=True)
class ModeBasisMaps:
    """Local-basis maps for one bin, stacked over its k-grid.

    ``H`` maps asymptotic-in to local operators (a_loc = H a_in), ``H_out``
    maps asymptotic-out to local operators, ``C = H H^dagger`` is the
    commutator matrix of the local operators.
    """

    label: str
    k: np.ndarray
    H: np.ndarray
    S: np.ndarray
    cond: np.ndarray

    @cached_property
    def H_out(self):
        return self.H @ np.conj(np.swapaxes(self.S, -1, -2))

    @cached_property
    def C(self):
        return self.H @ np.conj(np.swapaxes(self.H, -1, -2))

    @cached_property
    def L_in(self):
        return np.swapaxes(np.linalg.inv(self.H), -1, -2)

    @cached_property
    def L_out(self):
        return np.swapaxes(np.linalg.inv(self.H_out), -1, -2)

    @property
    def well_conditioned(self):
        return bool(np.all(self.cond < _COND_LIMIT))


def local_basis_maps(cfg: SystemConfig, bin: ResonanceBin, topology=None, strict=False) -> ModeBasisMaps:
    """Basis maps on the grid of ``bin``.

    An ill-conditioned H is reported through ``cond``; it raises only when
    ``strict`` is set.
    """
    topo = topology or NetworkTopology(cfg)
    sol = topo.solve(bin.k_grid, bin.center_omega)
    cond = np.linalg.cond(sol.H)
    if strict and np.any(cond > _COND_LIMIT):
        raise IllConditioned(f"bin {bin.label}: cond(H) = {np.max(cond):.3g}")
    return ModeBasisMaps(bin.label, sol.k, sol.H, sol.S, cond)


# ------------------------------------------------------------------ features


@dataclass(frozen=True)
class ResonanceFeatures:
    centers: np.ndarray
    fwhms: np.ndarray
    depths: np.ndarray

    @property
    def splitting(self):
        if len(self.centers) < 2:
            return 0.0
        return float(self.centers[-1] - self.centers[0])


def _power(cfg, omega0, x):
    return transmission_spectrum(cfg, omega0 + np.asarray(x))[1]


def find_resonance_features(cfg: SystemConfig, omega_lo, omega_hi, n_scan=4001, threshold=0.99,
                            rel_tol=1e-4) -> ResonanceFeatures:
    """Locate the |h|^2 minima in [omega_lo, omega_hi].

    Minima are bracketed on a dense scan, refined by golden-section search and
    their half-depth widths found by root bracketing.
    """
    omega0 = 0.5 * (omega_lo + omega_hi)
    half = 0.5 * (omega_hi - omega_lo)
    x = np.linspace(-half, half, n_scan)
    p = _power(cfg, omega0, x)
    step = x[1] - x[0]
    idx = [i for i in range(1, n_scan - 1) if p[i] <= p[i - 1] and p[i] < p[i + 1] and p[i] < threshold]
    if not idx:
        raise NoFeature(f"no transmission minimum below {threshold} in range")
    f = lambda y: float(_power(cfg, omega0, y))
    centers, depths, fwhms = [], [], []
    for i in idx:
        res = optimize.minimize_scalar(f, bracket=(x[i - 1], x[i], x[i + 1]), method="golden",
                                       tol=1e-12)
        xc = res.x
        if abs(xc - x[i]) > 2 * step:
            xc = x[i]
        pmin = f(xc)
        centers.append(xc)
        depths.append(pmin)
    for j, xc in enumerate(centers):
        level = 0.5 * (1.0 + depths[j])
        g = lambda y: f(y) - level
        lo_bound = centers[j - 1] if j > 0 else -half
        hi_bound = centers[j + 1] if j + 1 < len(centers) else half
        widths = []
        for bound, sgn in ((lo_bound, -1), (hi_bound, 1)):
            y = xc
            dy = step / 4
            found = None
            while (y - bound) * sgn < 0:
                y_next = y + sgn * dy
                if (y_next - bound) * sgn > 0:
                    y_next = bound
                if g(y_next) > 0:
                    found = optimize.brentq(g, min(y, y_next), max(y, y_next), xtol=1e-9 * step)
                    break
                y = y_next
                dy *= 1.5
            if found is not None:
                widths.append(abs(found - xc))
        fwhms.append(2 * min(widths) if widths else np.nan)
    centers = np.asarray(centers)
    # second refinement pass to the requested fraction of a linewidth
    refined = []
    for xc, w in zip(centers, fwhms):
        if np.isfinite(w):
            res = optimize.minimize_scalar(f, bounds=(xc - w / 4, xc + w / 4), method="bounded",
                                           options={"xatol": rel_tol * w / 10})
            xc = res.x
        refined.append(xc)
    return ResonanceFeatures(omega0 + np.asarray(refined), np.asarray(fwhms), np.asarray(depths))


def decoupled(cfg: SystemConfig) -> SystemConfig:
    """Copy of ``cfg`` with the auxiliary ring disconnected."""
    from dataclasses import replace

    from .core_model import coupler

    out = []
    for c in cfg.couplers:
        if set(c.elements) == {PRIMARY, AUXILIARY}:
            c = coupler(1.0, c.endpoints[0], c.endpoints[1])
        out.append(c)
    return replace(cfg, couplers=tuple(out))


def resonance_shift(cfg: SystemConfig, omega_lo, omega_hi, n_scan=4001):
    """Displacement of the minimum nearest the decoupled primary resonance."""
    ref = find_resonance_features(decoupled(cfg), omega_lo, omega_hi, n_scan)
    c0 = ref.centers[np.argmin(ref.depths)]
    feats = find_resonance_features(cfg, omega_lo, omega_hi, n_scan)
    c1 = feats.centers[np.argmin(np.abs(feats.centers - c0))]
    return float(c1 - c0)


def check_bin_spans(cfg: SystemConfig, rel_depth=0.01, n_inner=801):
    """Each bin must contain its resonance: edge dip < ``rel_depth`` of the deepest dip."""
    for b in cfg.bins:
        inner = np.linspace(b.center_omega - b.span / 2, b.center_omega + b.span / 2, n_inner)
        dip = 1.0 - transmission_spectrum(cfg, inner)[1]
        edge = max(dip[0], dip[-1])
        if edge >= rel_depth * dip.max():
            raise BinOverlap(
                f"bins.{b.label}.span",
                f"edge dip {edge:.3g} is not below {rel_depth} of the central dip {dip.max():.3g}",
            )
