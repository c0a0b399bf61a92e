"""Physical system description: dispersion, rings, couplers, bins and pump pulses.

Everything in this module is stored in SI units (rad/s, m, s, J).  Conversion
from the friendlier units used in JSON files (GHz, um, pJ, ps) happens only in
:func:`config_from_dict`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import constants

from .errors import BinOverlap, BranchOverflow, ConfigError, InvalidCoupling, MisalignedPhantom

HBAR = constants.hbar
C_LIGHT = constants.c

WAVEGUIDE = "waveguide"
PRIMARY = "primary"
AUXILIARY = "auxiliary"

BIN_LABELS = ("LI", "P1", "S", "P2", "RI")
PUMP_LABELS = ("P1", "P2")
GENERATED_LABELS = ("LI", "S", "RI")

_COUPLING_TOL = 1e-12
_ATTENUATION_TOL = 1e-12


@dataclass(frozen=True)
class DispersionModel:
    """Quadratic waveguide dispersion around a reference frequency.

    k(w) = k_ref + (w - omega_ref) / group_velocity + gvd / 2 * (w - omega_ref)**2
    """

    omega_ref: float
    k_ref: float
    group_velocity: float
    gvd: float = 0.0


@dataclass(frozen=True)
class RingSpec:
    """A ring resonator with its scattering loss split over phantom channels.

    ``phase_offset`` is an extra round-trip phase (rad) used to tune the ring;
    it is spread uniformly over the circumference.  ``phantom_positions`` and
    ``phantom_self_couplings`` are filled in by :func:`validate_config` when
    left as ``None``.
    """

    label: str
    length: float
    round_trip_attenuation: float
    n_phantom: int = 5
    phantom_self_couplings: Optional[tuple] = None
    phantom_positions: Optional[tuple] = None
    phase_offset: float = 0.0

    @property
    def sigmas(self) -> np.ndarray:
        if self.phantom_self_couplings is None:
            return np.full(self.n_phantom, self.round_trip_attenuation ** (1.0 / self.n_phantom))
        return np.asarray(self.phantom_self_couplings, dtype=float)

    @property
    def arc_starts(self) -> np.ndarray:
        return np.asarray(self.phantom_positions, dtype=float)

    @property
    def arc_lengths(self) -> np.ndarray:
        starts = self.arc_starts
        ends = np.append(starts[1:], self.length)
        return ends - starts


@dataclass(frozen=True)
class CouplerSpec:
    """Point coupler with scattering matrix [[s, i k], [i k, s]].

    ``endpoints`` is a pair of ``(element_label, position)`` tuples.
    """

    self_coupling: float
    cross_coupling: float
    endpoints: tuple

    @property
    def elements(self):
        return tuple(e for e, _ in self.endpoints)

    def position_on(self, element):
        for e, pos in self.endpoints:
            if e == element:
                return pos
        raise KeyError(element)


def coupler(self_coupling, first, second):
    """Build a lossless coupler from its self-coupling coefficient."""
    kappa = math.sqrt(max(0.0, 1.0 - self_coupling**2))
    return CouplerSpec(float(self_coupling), kappa, (tuple(first), tuple(second)))


@dataclass(frozen=True)
class ResonanceBin:
    label: str
    center_omega: float
    center_k: float
    span: float
    n_k: int
    dk: float

    @property
    def k_grid(self) -> np.ndarray:
        offsets = np.arange(self.n_k) - (self.n_k - 1) / 2
        return self.center_k + offsets * self.dk

    def omega_grid(self, model: DispersionModel) -> np.ndarray:
        return dispersion_omega(model, self.k_grid)

    def detuning_grid(self, model: DispersionModel) -> np.ndarray:
        """Angular frequency offsets w(k_i) - w_J on the bin grid."""
        return dispersion_delta_omega(model, self.k_grid, self.center_omega)


@dataclass(frozen=True)
class PumpPulse:
    target: str
    energy: float
    duration: float
    center_k: float
    delay_position: float


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    tf: Optional[float] = None
    dt: Optional[float] = None


@dataclass(frozen=True)
class SystemConfig:
    dispersion: DispersionModel
    rings: tuple
    couplers: tuple
    gamma_nl: float
    bins: tuple = ()
    pumps: tuple = ()
    time_grid: TimeGrid = field(default_factory=TimeGrid)
    aux_detuning: float = 0.0

    def ring(self, label) -> RingSpec:
        for r in self.rings:
            if r.label == label:
                return r
        raise KeyError(label)

    def bin(self, label) -> ResonanceBin:
        for b in self.bins:
            if b.label == label:
                return b
        raise KeyError(label)

    def pump(self, target) -> PumpPulse:
        for p in self.pumps:
            if p.target == target:
                return p
        raise KeyError(target)

    def coupler_between(self, a, b) -> CouplerSpec:
        for c in self.couplers:
            if set(c.elements) == {a, b}:
                return c
        raise KeyError((a, b))

    @property
    def ring_order(self):
        """Ring labels in the canonical solver order (primary first)."""
        order = [r.label for r in self.rings if r.label == PRIMARY]
        order += [r.label for r in self.rings if r.label != PRIMARY]
        return order


# ----------------------------------------------------------------- dispersion


def dispersion_k(model: DispersionModel, omega):
    x = np.asarray(omega, dtype=float) - model.omega_ref
    return model.k_ref + x / model.group_velocity + 0.5 * model.gvd * x**2


def dispersion_delta_omega(model: DispersionModel, k, omega_center):
    """w(k) - omega_center, computed without cancellation against omega_ref."""
    q = np.asarray(k, dtype=float) - model.k_ref
    x = _inverse_offset(model, q)
    return x - (omega_center - model.omega_ref)


def _inverse_offset(model, q):
    inv_v = 1.0 / model.group_velocity
    if model.gvd == 0.0:
        return q * model.group_velocity
    disc = inv_v**2 + 2.0 * model.gvd * q
    if np.any(disc < 0):
        raise BranchOverflow("wavenumber lies beyond the turning point of the dispersion branch")
    # Stable root of gvd/2 x^2 + x/v - q = 0 on the branch through x = 0.
    return 2.0 * q / (inv_v + np.sqrt(disc))


def dispersion_omega(model: DispersionModel, k):
    """Inverse of :func:`dispersion_k` on the monotonic branch through omega_ref."""
    q = np.asarray(k, dtype=float) - model.k_ref
    return model.omega_ref + _inverse_offset(model, q)


def group_velocity_at(model: DispersionModel, omega):
    x = np.asarray(omega, dtype=float) - model.omega_ref
    slope = 1.0 / model.group_velocity + model.gvd * x
    return 1.0 / slope


def ring_wavenumber(model: DispersionModel, ring: RingSpec, omega):
    """Wavenumber inside a ring, including its tuning offset."""
    return dispersion_k(model, omega) + ring.phase_offset / ring.length


# ----------------------------------------------------------------- validation


def _place_phantoms(ring: RingSpec, fixed: Sequence[float]):
    fixed = sorted(set(float(p) for p in fixed))
    n = ring.n_phantom
    if len(fixed) > n:
        raise MisalignedPhantom(
            f"rings.{ring.label}.n_phantom",
            f"{n} phantom channels cannot cover {len(fixed)} real coupling points",
        )
    if not fixed:
        fixed = [0.0]
    L = ring.length
    gaps = [((fixed[(i + 1) % len(fixed)] - fixed[i]) % L) or L for i in range(len(fixed))]
    extra = [0] * len(fixed)
    for _ in range(n - len(fixed)):
        i = max(range(len(gaps)), key=lambda j: gaps[j] / (extra[j] + 1))
        extra[i] += 1
    points = []
    for i, start in enumerate(fixed):
        step = gaps[i] / (extra[i] + 1)
        points.extend((start + m * step) % L for m in range(extra[i] + 1))
    return tuple(sorted(points))


def validate_config(cfg: SystemConfig, check_spans: bool = False) -> SystemConfig:
    """Check every structural invariant and fill derived ring fields.

    Returns a new config with phantom positions and self-couplings set.
    ``check_spans`` additionally verifies that each bin contains its loaded
    resonance (this needs the linear solver).
    """
    d = cfg.dispersion
    if not d.group_velocity > 0:
        raise ConfigError("dispersion.group_velocity", "must be positive")
    if not d.omega_ref > 0:
        raise ConfigError("dispersion.omega_ref", "must be positive")

    labels = [r.label for r in cfg.rings]
    if PRIMARY not in labels:
        raise ConfigError("rings", "a primary ring is required")
    if len(set(labels)) != len(labels):
        raise ConfigError("rings", "ring labels must be unique")

    elements = set(labels) | {WAVEGUIDE}
    for i, c in enumerate(cfg.couplers):
        name = f"couplers[{i}]"
        if not 0.0 <= c.self_coupling <= 1.0:
            raise InvalidCoupling(f"{name}.self_coupling", "must lie in [0, 1]")
        if abs(c.self_coupling**2 + c.cross_coupling**2 - 1.0) > _COUPLING_TOL:
            raise InvalidCoupling(
                f"{name}.cross_coupling",
                f"self^2 + cross^2 = {c.self_coupling**2 + c.cross_coupling**2!r} != 1",
            )
        if len(c.endpoints) != 2:
            raise ConfigError(f"{name}.endpoints", "exactly two endpoints required")
        for j, (element, pos) in enumerate(c.endpoints):
            if element not in elements:
                raise ConfigError(f"{name}.endpoints[{j}]", f"unknown element {element!r}")
            if element != WAVEGUIDE:
                L = cfg.ring(element).length
                if not 0.0 <= pos < L:
                    raise ConfigError(f"{name}.endpoints[{j}]", "position outside [0, L)")

    n_wg = sum(1 for c in cfg.couplers if set(c.elements) == {WAVEGUIDE, PRIMARY})
    n_aux = sum(1 for c in cfg.couplers if set(c.elements) == {PRIMARY, AUXILIARY})
    if n_wg != 1:
        raise ConfigError("couplers", "exactly one waveguide-primary coupler is required")
    if AUXILIARY in labels and n_aux != 1:
        raise ConfigError("couplers", "exactly one primary-auxiliary coupler is required")

    rings = []
    for r in cfg.rings:
        name = f"rings.{r.label}"
        if not r.length > 0:
            raise ConfigError(f"{name}.length", "must be positive")
        if not 0.0 < r.round_trip_attenuation <= 1.0:
            raise ConfigError(f"{name}.round_trip_attenuation", "must lie in (0, 1]")
        if r.n_phantom < 1:
            raise ConfigError(f"{name}.n_phantom", "at least one phantom channel is required")
        sig = r.sigmas
        if sig.shape != (r.n_phantom,) or np.any(sig <= 0) or np.any(sig > 1):
            raise ConfigError(f"{name}.phantom_self_couplings", "need n_phantom values in (0, 1]")
        prod = float(np.prod(sig))
        if abs(prod - r.round_trip_attenuation) > _ATTENUATION_TOL * r.round_trip_attenuation:
            raise ConfigError(f"{name}.phantom_self_couplings", "product must equal the attenuation")
        fixed = [c.position_on(r.label) for c in cfg.couplers if r.label in c.elements]
        if r.phantom_positions is None:
            positions = _place_phantoms(r, fixed)
        else:
            positions = tuple(sorted(float(p) for p in r.phantom_positions))
            if len(positions) != r.n_phantom:
                raise MisalignedPhantom(f"{name}.phantom_positions", "count differs from n_phantom")
            for p in fixed:
                if not any(abs(p - q) < 1e-15 * r.length + 1e-18 for q in positions):
                    raise MisalignedPhantom(
                        f"{name}.phantom_positions", f"no phantom point at coupler position {p!r}"
                    )
        rings.append(replace(r, phantom_self_couplings=tuple(float(s) for s in sig),
                             phantom_positions=positions))

    _check_bins(cfg.bins)
    for i, p in enumerate(cfg.pumps):
        if p.target not in PUMP_LABELS:
            raise ConfigError(f"pumps[{i}].target", "must be P1 or P2")
        if p.energy < 0:
            raise ConfigError(f"pumps[{i}].energy", "must be non-negative")
        if not p.duration > 0:
            raise ConfigError(f"pumps[{i}].duration", "must be positive")

    out = replace(cfg, rings=tuple(rings))
    if check_spans and cfg.bins:
        from .linear_network import check_bin_spans

        check_bin_spans(out)
    return out


def _check_bins(bins):
    if not bins:
        return
    labels = [b.label for b in bins]
    if tuple(labels) != BIN_LABELS:
        raise ConfigError("bins", f"expected labels {BIN_LABELS} ordered by frequency, got {labels}")
    for b in bins:
        if b.n_k < 3 or b.n_k % 2 == 0:
            raise ConfigError(f"bins.{b.label}.n_k", "must be odd and at least 3")
        if not b.dk > 0 or not b.span > 0:
            raise ConfigError(f"bins.{b.label}", "span and dk must be positive")
    for a, b in zip(bins[:-1], bins[1:]):
        if not a.center_omega < b.center_omega:
            raise ConfigError("bins", "bins must be ordered by center frequency")
        if a.center_omega + a.span / 2 >= b.center_omega - b.span / 2:
            raise BinOverlap(f"bins.{b.label}.span", f"overlaps bin {a.label}")


def make_bin(model: DispersionModel, label, center_omega, span, n_k) -> ResonanceBin:
    """Bin with a grid uniform in k covering ``span`` (rad/s) around the center."""
    if n_k < 3 or n_k % 2 == 0:
        raise ConfigError(f"bins.{label}.n_k", "must be odd and at least 3")
    k_lo, k_c, k_hi = dispersion_k(model, [center_omega - span / 2, center_omega, center_omega + span / 2])
    dk = (k_hi - k_lo) / (n_k - 1)
    return ResonanceBin(label, float(center_omega), float(k_c), float(span), int(n_k), float(dk))


def build_bins(cfg: SystemConfig, resonance_centers, spans, n_k, check_spans=True):
    """Construct the five resonance bins.

    Args:
        cfg: validated config (bins are ignored)
        resonance_centers: five angular frequencies ordered LI, P1, S, P2, RI
        spans: five spans in rad/s
        n_k: a single grid size or five per-bin sizes (each odd)
        check_spans: verify the edge-transmission containment criterion
    """
    if np.ndim(n_k) == 0:
        n_k = [int(n_k)] * len(BIN_LABELS)
    bins = tuple(
        make_bin(cfg.dispersion, lab, c, s, n)
        for lab, c, s, n in zip(BIN_LABELS, resonance_centers, spans, n_k)
    )
    _check_bins(bins)
    out = replace(cfg, bins=bins)
    if check_spans:
        from .linear_network import check_bin_spans

        check_bin_spans(out)
    return out


# -------------------------------------------------------------- serialization

_UNIT_SUFFIXES = {
    "_GHz": 2 * math.pi * 1e9,
    "_MHz": 2 * math.pi * 1e6,
    "_um": 1e-6,
    "_pJ": 1e-12,
    "_ps": 1e-12,
    "_ps2_per_m": 1e-24,
    "_per_um": 1e6,
}


def _si(d, name, default=dataclasses.MISSING):
    if name in d:
        return d[name]
    for suffix, scale in _UNIT_SUFFIXES.items():
        if name + suffix in d:
            v = d[name + suffix]
            return None if v is None else v * scale
    if default is dataclasses.MISSING:
        raise ConfigError(name, "missing from config")
    return default


def config_to_dict(cfg: SystemConfig) -> dict:
    """Plain-dict form in SI units; floats survive a JSON round trip exactly."""

    def conv(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, (tuple, list)):
            return [conv(x) for x in obj]
        if isinstance(obj, np.generic):
            return obj.item()
        return obj

    return conv(cfg)


def config_from_dict(d: dict) -> SystemConfig:
    """Inverse of :func:`config_to_dict`; unit-suffixed keys are also accepted.

    Pumps may give ``detuning`` (e.g. ``detuning_MHz``) instead of ``center_k``,
    measured from the center of their bin.
    """
    dd = d["dispersion"]
    model = DispersionModel(
        omega_ref=_si(dd, "omega_ref"),
        k_ref=_si(dd, "k_ref"),
        group_velocity=_si(dd, "group_velocity"),
        gvd=_si(dd, "gvd", 0.0),
    )
    rings = []
    for r in d["rings"]:
        sc = r.get("phantom_self_couplings")
        pos = r.get("phantom_positions")
        if pos is None and "phantom_positions_um" in r and r["phantom_positions_um"] is not None:
            pos = [p * 1e-6 for p in r["phantom_positions_um"]]
        rings.append(RingSpec(
            label=r["label"],
            length=_si(r, "length"),
            round_trip_attenuation=r["round_trip_attenuation"],
            n_phantom=int(r.get("n_phantom", 5)),
            phantom_self_couplings=None if sc is None else tuple(sc),
            phantom_positions=None if pos is None else tuple(pos),
            phase_offset=r.get("phase_offset", 0.0),
        ))
    couplers = []
    for c in d["couplers"]:
        ends = []
        for e in c["endpoints"]:
            if isinstance(e, dict):
                ends.append((e["element"], _si(e, "position")))
            else:
                ends.append((e[0], e[1]))
        sc = c["self_coupling"]
        cc = c.get("cross_coupling", math.sqrt(max(0.0, 1 - sc**2)))
        couplers.append(CouplerSpec(sc, cc, tuple(ends)))
    bins = []
    for b in d.get("bins", []):
        if "dk" in b and "center_k" in b:
            bins.append(ResonanceBin(b["label"], _si(b, "center_omega"), b["center_k"],
                                     _si(b, "span"), int(b["n_k"]), b["dk"]))
        else:
            bins.append(make_bin(model, b["label"], _si(b, "center_omega"), _si(b, "span"), int(b["n_k"])))
    pumps = []
    for p in d.get("pumps", []):
        center_k = p.get("center_k")
        if center_k is None:
            det = _si(p, "detuning", 0.0)
            centre = next(b for b in bins if b.label == p["target"]).center_omega
            center_k = float(dispersion_k(model, centre + det))
        pumps.append(PumpPulse(p["target"], _si(p, "energy"), _si(p, "duration"), center_k,
                               _si(p, "delay_position")))
    tg = d.get("time_grid", {}) or {}
    time_grid = TimeGrid(_si(tg, "t0", 0.0), _si(tg, "tf", None), _si(tg, "dt", None))
    return SystemConfig(
        dispersion=model,
        rings=tuple(rings),
        couplers=tuple(couplers),
        gamma_nl=d["gamma_nl"],
        bins=tuple(bins),
        pumps=tuple(pumps),
        time_grid=time_grid,
        aux_detuning=_si(d, "aux_detuning", 0.0),
    )


def save_config(cfg: SystemConfig, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)


def load_config(path) -> SystemConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def config_hash(cfg: SystemConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
