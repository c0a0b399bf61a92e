"""Nonlinear coupling constants of the five-resonance model.

The nonlinear Hamiltonian is written over ordered label quadruples
``(J1, J2, J3, J4)`` (two created, two annihilated fields) and, in the local
basis, only arcs on which all four local modes coincide contribute.  For each
quadruple the per-arc overlap ``lam_tilde`` is stored; ``lam_bar`` adds the
degeneracy factor for equal created labels.

Detunings use ``delta_omega = -w1 - w2 + w3 + w4``; the corresponding term of
the interaction picture Hamiltonian rotates as ``exp(-1j * delta_omega * t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import HBAR, WAVEGUIDE, SystemConfig, group_velocity_at
from .errors import MissingQuad
from .linear_network import NetworkTopology

# Quadruples explicitly tabulated; every other needed one follows by swap
# symmetry or by reversal (complex conjugation).
TABLE_QUADS = (
    ("P1", "P1", "P1", "P1"),
    ("P2", "P2", "P2", "P2"),
    ("P1", "P2", "P1", "P2"),
    ("S", "S", "P1", "P2"),
    ("LI", "S", "P1", "P1"),
    ("S", "LI", "P1", "P1"),
    ("S", "RI", "P2", "P2"),
    ("RI", "S", "P2", "P2"),
    ("LI", "RI", "P1", "P2"),
    ("RI", "LI", "P1", "P2"),
    ("LI", "P2", "S", "P1"),
    ("S", "P1", "LI", "P2"),
    ("S", "P2", "RI", "P1"),
    ("RI", "P1", "S", "P2"),
    ("LI", "P1", "LI", "P1"),
    ("LI", "P2", "LI", "P2"),
    ("S", "P1", "S", "P1"),
    ("S", "P2", "S", "P2"),
    ("RI", "P1", "RI", "P1"),
    ("RI", "P2", "RI", "P2"),
)

# Process families acting on the generated bins.
FAMILIES = ("XPM", "DP", "SP1", "SP2", "HP", "BS1", "BS2")
# The ideal reference keeps pump-induced phase modulation, which is not a
# pair-generation process; only the parasitic SFWM/FWM families are removed.
DP_ONLY = frozenset({"DP", "XPM"})
DP_BARE = frozenset({"DP"})
ALL_TERMS = frozenset(FAMILIES)

# (family, row bin, column bin, conjugated column, prefactor, quad, pump factor)
# The pump factor names which product of pump arc fields multiplies the term:
# "F1F2" = F1 F2, "F1F1" = F1^2, "c2F1" = conj(F2) F1, "abs1" = |F1|^2 ...
_TERM_LIST = (
    ("XPM", "LI", "LI", False, 4, ("LI", "P1", "LI", "P1"), "abs1"),
    ("XPM", "LI", "LI", False, 4, ("LI", "P2", "LI", "P2"), "abs2"),
    ("XPM", "S", "S", False, 4, ("S", "P1", "S", "P1"), "abs1"),
    ("XPM", "S", "S", False, 4, ("S", "P2", "S", "P2"), "abs2"),
    ("XPM", "RI", "RI", False, 4, ("RI", "P1", "RI", "P1"), "abs1"),
    ("XPM", "RI", "RI", False, 4, ("RI", "P2", "RI", "P2"), "abs2"),
    ("DP", "S", "S", True, 2, ("S", "S", "P1", "P2"), "F1F2"),
    ("SP1", "LI", "S", True, 2, ("LI", "S", "P1", "P1"), "F1F1"),
    ("SP1", "S", "LI", True, 2, ("S", "LI", "P1", "P1"), "F1F1"),
    ("SP2", "S", "RI", True, 2, ("S", "RI", "P2", "P2"), "F2F2"),
    ("SP2", "RI", "S", True, 2, ("RI", "S", "P2", "P2"), "F2F2"),
    ("HP", "LI", "RI", True, 4, ("LI", "RI", "P1", "P2"), "F1F2"),
    ("HP", "RI", "LI", True, 4, ("RI", "LI", "P1", "P2"), "F1F2"),
    ("BS1", "LI", "S", False, 4, ("LI", "P2", "S", "P1"), "c2F1"),
    ("BS1", "S", "LI", False, 4, ("S", "P1", "LI", "P2"), "c1F2"),
    ("BS2", "S", "RI", False, 4, ("S", "P2", "RI", "P1"), "c2F1"),
    ("BS2", "RI", "S", False, 4, ("RI", "P1", "S", "P2"), "c1F2"),
)
# Prefactors above multiply lam_bar, which already holds the factor 2 for
# equal created labels; in terms of lam_tilde every family except the
# single-pump one carries 4.


def _pump_factor(name, F1, F2):
    return {
        "abs1": np.abs(F1) ** 2,
        "abs2": np.abs(F2) ** 2,
        "F1F2": F1 * F2,
        "F1F1": F1 * F1,
        "F2F2": F2 * F2,
        "c2F1": np.conj(F2) * F1,
        "c1F2": np.conj(F1) * F2,
    }[name]


def arc_integral(delta_k, start, length):
    """Integral of exp(-1j*delta_k*xi) over [start, start+length].

    Written as length * exp(-i dk mid) * sinc, which has no cancellation for
    small mismatch.
    """
    delta_k = np.asarray(delta_k, dtype=float)
    mid = start + length / 2
    return length * np.exp(-1j * delta_k * mid) * np.sinc(delta_k * length / (2 * np.pi))


def strength_prefactor(cfg: SystemConfig, quad):
    """hbar * w * v^2 * gamma / (8 pi^2) with geometric-mean frequency and velocity."""
    omegas = np.array([cfg.bin(J).center_omega for J in quad])
    v = group_velocity_at(cfg.dispersion, omegas)
    w_mean = np.prod(omegas) ** 0.25
    v_mean = np.prod(v) ** 0.25
    return HBAR * w_mean * v_mean**2 * cfg.gamma_nl / (8 * np.pi**2)


def arc_overlap(cfg: SystemConfig, quad, nus, geometry):
    """lam_tilde for one quadruple and local-mode quadruple ``nus``.

    ``geometry`` is the per-local-mode list from
    :meth:`NetworkTopology.arc_geometry`.  Mixed arcs and the waveguide
    segment give 0.
    """
    if len(set(nus)) != 1:
        return 0.0 + 0.0j
    element, start, length = geometry[nus[0]]
    if element == WAVEGUIDE or length == 0.0:
        return 0.0 + 0.0j
    dk = phase_mismatch(cfg, quad)
    return complex(strength_prefactor(cfg, quad) * arc_integral(dk, start, length))


def phase_mismatch(cfg: SystemConfig, quad):
    """k1 + k2 - k3 - k4 at the bin centers (ring tuning offsets cancel)."""
    k = [cfg.bin(J).center_k for J in quad]
    return k[0] + k[1] - k[2] - k[3]


def detuning(cfg: SystemConfig, quad):
    w = [cfg.bin(J).center_omega for J in quad]
    return -w[0] - w[1] + w[2] + w[3]


def _swaps(quad):
    a, b, c, d = quad
    return [(a, b, c, d), (b, a, c, d), (a, b, d, c), (b, a, d, c)]


@dataclass(frozen=True)
class NonlinearTable:
    """Per-local-mode overlaps for the tabulated quadruples.

    ``lam_tilde[quad]`` and ``lam_bar[quad]`` are arrays over local modes;
    ``delta_omega[quad]`` in rad/s; ``delta_k[quad]`` in 1/m.
    """

    lam_tilde: dict
    lam_bar: dict
    delta_omega: dict
    delta_k: dict
    local_labels: tuple

    def _lookup(self, store, quad, conj_ok=True):
        for q in _swaps(tuple(quad)):
            if q in store:
                return store[q], False
        if conj_ok:
            rev = (quad[2], quad[3], quad[0], quad[1])
            for q in _swaps(rev):
                if q in store:
                    return store[q], True
        raise MissingQuad(f"quadruple {quad} is not tabulated")

    def tilde(self, quad):
        val, conj = self._lookup(self.lam_tilde, quad)
        return np.conj(val) if conj else val

    def bar(self, quad):
        val = self.tilde(quad)
        return val * (2.0 if quad[0] == quad[1] else 1.0)

    def detuning(self, quad):
        val, conj = self._lookup(self.delta_omega, quad)
        return -val if conj else val


def lambda_bar(cfg: SystemConfig, topology=None, quads=TABLE_QUADS) -> NonlinearTable:
    """Tabulate lam_tilde, lam_bar, detunings and mismatches over all arcs."""
    topo = topology or NetworkTopology(cfg)
    geometry = topo.arc_geometry()
    n_local = len(geometry)
    lam_tilde, lam_bar_, dw, dk = {}, {}, {}, {}
    for quad in quads:
        pref = strength_prefactor(cfg, quad)
        mism = phase_mismatch(cfg, quad)
        vals = np.zeros(n_local, dtype=complex)
        for s, (element, start, length) in enumerate(geometry):
            if element != WAVEGUIDE and length > 0:
                vals[s] = pref * arc_integral(mism, start, length)
        lam_tilde[quad] = vals
        lam_bar_[quad] = vals * (2.0 if quad[0] == quad[1] else 1.0)
        dw[quad] = detuning(cfg, quad)
        dk[quad] = mism
    return NonlinearTable(lam_tilde, lam_bar_, dw, dk, tuple(topo.local_labels()))


@dataclass(frozen=True)
class PumpCoefficients:
    spm: dict  # pump label -> per-arc coefficient of |F|^2 F
    xpm: dict  # pump label -> per-arc coefficient of |F_other|^2 F


def pump_nl_coeffs(table: NonlinearTable) -> PumpCoefficients:
    """Self- and cross-phase coefficients of the pump equations.

    SPM is lam_bar(P,P,P,P) = 2 lam_tilde.  XPM counts all four orderings of
    the (P1, P2, P1, P2) quadruple, 4 lam_tilde, so that cross-phase is twice
    self-phase for equal overlaps (the usual Kerr factor of two).
    """
    spm = {P: table.bar((P, P, P, P)) for P in ("P1", "P2")}
    xpm = {
        "P1": 4.0 * table.tilde(("P1", "P2", "P1", "P2")),
        "P2": 4.0 * table.tilde(("P2", "P1", "P2", "P1")),
    }
    return PumpCoefficients(spm, xpm)


def coupling_blocks(table: NonlinearTable, F1, F2, t, terms=ALL_TERMS):
    """Per-arc couplings between the generated bins at time ``t``.

    Returns ``(X, Y)``, dicts keyed by ``(row_bin, col_bin)`` holding arrays
    over local modes.  ``X`` multiplies the column bin's arc field and ``Y``
    its conjugate, so that

        d/dt a_J(k) = -i dw a_J(k) + i C_J(k) sum_J' (X[J,J'] y_J' + Y[J,J'] y_J'^dagger)

    with ``y_J'`` the k-integrated arc field of bin J'.
    """
    X, Y = {}, {}
    F1 = np.asarray(F1)
    F2 = np.asarray(F2)
    for family, row, col, conj, pref, quad, pf in _TERM_LIST:
        if family not in terms:
            continue
        val = pref * table.bar(quad) * _pump_factor(pf, F1, F2) * np.exp(-1j * table.detuning(quad) * t)
        store = Y if conj else X
        key = (row, col)
        store[key] = store.get(key, 0) + val
    return X, Y


def a_chi(table: NonlinearTable, C, F1, F2, t, terms=ALL_TERMS):
    """The coefficient matrices A^chi_{J,nu,nu'}(k, t) for every term.

    Args:
        table: nonlinear table
        C (dict): commutator matrices per generated bin, shape (N_k, P, P)
        F1, F2: per-arc k-integrated pump fields
        t (float): time

    Returns:
        dict keyed by ``(family, row_bin, col_bin)`` with arrays (N_k, P, P);
        keys whose column is conjugated carry ``"*"`` on the column label.
    """
    out = {}
    for family, row, col, conj, pref, quad, pf in _TERM_LIST:
        if family not in terms:
            continue
        g = pref * table.bar(quad) * _pump_factor(pf, F1, F2) * np.exp(-1j * table.detuning(quad) * t)
        key = (family, row, col + "*" if conj else col)
        out[key] = out.get(key, 0) + C[row] * g[None, None, :]
    return out


def enumerate_quads():
    """All ordered quadruples generated by the table via swaps and reversal."""
    seen = set()
    for q in TABLE_QUADS:
        for s in _swaps(q):
            seen.add(s)
            seen.add((s[2], s[3], s[0], s[1]))
    return sorted(seen)


def table_to_json(table: NonlinearTable):
    """Serializable dump (GHz-scale detunings, per-arc complex values)."""
    rows = []
    for quad in table.lam_tilde:
        rows.append({
            "quad": list(quad),
            "delta_omega_GHz": table.delta_omega[quad] / (2 * np.pi * 1e9),
            "delta_k_per_m": table.delta_k[quad],
            "lam_bar_re": table.lam_bar[quad].real.tolist(),
            "lam_bar_im": table.lam_bar[quad].imag.tolist(),
        })
    return {"local_modes": list(table.local_labels), "quads": rows}

