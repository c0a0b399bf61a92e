import itertools

import numpy as np
import pytest
from scipy import integrate

from ringsqueeze.core_model import BIN_LABELS, GENERATED_LABELS, HBAR, WAVEGUIDE, group_velocity_at
from ringsqueeze.errors import MissingQuad
from ringsqueeze.nonlinear_coupling import (
    ALL_TERMS,
    DP_BARE,
    DP_ONLY,
    a_chi,
    arc_integral,
    arc_overlap,
    coupling_blocks,
    enumerate_quads,
    lambda_bar,
    pump_nl_coeffs,
    table_to_json,
)
from ringsqueeze.scenarios import example1_params, example2_params, scenario_config


@pytest.fixture(scope="module")
def setup():
    cfg, _ = scenario_config(example1_params(n_k=7))
    return cfg, lambda_bar(cfg)


def test_phase_matched_arc_integral():
    assert complex(arc_integral(0.0, 1e-5, 3e-4)) == pytest.approx(3e-4, rel=1e-15)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_arc_integral_against_quadrature(rng):
    for _ in range(20):
        dk = rng.uniform(-2e5, 2e5)
        start, length = rng.uniform(0, 5e-4), rng.uniform(1e-5, 5e-4)
        re = integrate.quad(lambda x: np.cos(dk * x), start, start + length, epsabs=0, epsrel=1e-13, limit=200)[0]
        im = integrate.quad(lambda x: -np.sin(dk * x), start, start + length, epsabs=0, epsrel=1e-13, limit=200)[0]
        val = complex(arc_integral(dk, start, length))
        assert abs(val - (re + 1j * im)) <= 1e-10 * abs(re + 1j * im)


def test_arc_integral_small_mismatch_continuous():
    L = 3e-4
    for x in (0.9e-8, 1.1e-8):
        dk = x / L
        expected = L * np.exp(-1j * dk * L / 2) * np.sinc(x / (2 * np.pi))
        assert complex(arc_integral(dk, 0.0, L)) == pytest.approx(expected, rel=1e-12)


def test_mixed_arcs_give_zero(setup):
    cfg, table = setup
    geo = [(WAVEGUIDE, 0.0, 0.0), ("primary", 0.0, 1e-4), ("primary", 1e-4, 1e-4)]
    assert arc_overlap(cfg, ("S", "S", "P1", "P2"), (1, 1, 2, 1), geo) == 0
    assert arc_overlap(cfg, ("S", "S", "P1", "P2"), (0, 0, 0, 0), geo) == 0
    assert arc_overlap(cfg, ("S", "S", "P1", "P2"), (1, 1, 1, 1), geo) != 0


def test_zero_nonlinearity():
    cfg, _ = scenario_config(example1_params(n_k=7, gamma_nl=0.0))
    table = lambda_bar(cfg)
    for q in table.lam_bar:
        assert not np.any(table.lam_bar[q])
    c = pump_nl_coeffs(table)
    assert not np.any(c.spm["P1"]) and not np.any(c.xpm["P2"])


def test_swap_symmetry(setup):
    _, table = setup
    np.testing.assert_array_equal(table.bar(("S", "S", "P1", "P2")), table.bar(("S", "S", "P2", "P1")))
    np.testing.assert_array_equal(table.tilde(("LI", "RI", "P1", "P2")), table.tilde(("RI", "LI", "P2", "P1")))


def test_reversal_is_conjugate(setup):
    _, table = setup
    np.testing.assert_array_equal(table.tilde(("P1", "P2", "S", "S")), np.conj(table.tilde(("S", "S", "P1", "P2"))))
    assert table.detuning(("P1", "P2", "S", "S")) == -table.detuning(("S", "S", "P1", "P2"))


def test_degeneracy_factor(setup):
    _, table = setup
    q = ("S", "S", "P1", "P2")
    np.testing.assert_allclose(table.bar(q), 2 * table.tilde(q))
    q2 = ("LI", "RI", "P1", "P2")
    np.testing.assert_allclose(table.bar(q2), table.tilde(q2))


def test_missing_quad(setup):
    _, table = setup
    with pytest.raises(MissingQuad):
        table.tilde(("S", "S", "S", "S"))


def test_table_against_direct_summation(setup):
    cfg, table = setup
    from ringsqueeze.linear_network import NetworkTopology

    geo = NetworkTopology(cfg).arc_geometry()
    for quad in [("S", "S", "P1", "P2"), ("LI", "RI", "P1", "P2"), ("P1", "P1", "P1", "P1")]:
        w = np.array([cfg.bin(J).center_omega for J in quad])
        k = np.array([cfg.bin(J).center_k for J in quad])
        v = group_velocity_at(cfg.dispersion, w)
        pref = HBAR * np.prod(w) ** 0.25 * np.prod(v) ** 0.5 * cfg.gamma_nl / (8 * np.pi**2)
        dk = k[0] + k[1] - k[2] - k[3]
        for s, (el, start, length) in enumerate(geo):
            if el == WAVEGUIDE:
                assert table.lam_tilde[quad][s] == 0
                continue
            re = integrate.quad(lambda x: np.cos(dk * x), start, start + length, epsrel=1e-13)[0]
            im = integrate.quad(lambda x: -np.sin(dk * x), start, start + length, epsrel=1e-13)[0]
            assert table.lam_tilde[quad][s] == pytest.approx(pref * (re + 1j * im), rel=1e-10)


def test_xpm_twice_spm(setup):
    _, table = setup
    c = pump_nl_coeffs(table)
    ratio = c.xpm["P1"][1:] / c.spm["P1"][1:]
    # the two pumps differ only slightly in frequency, so the overlaps nearly coincide
    np.testing.assert_allclose(ratio, 2.0, rtol=2e-3)


def _brute_force_blocks(table, F1, F2, t):
    """Equations of motion from the ordered-quadruple Hamiltonian by direct commutators.

    H = -hbar sum_{J1..J4} lam_tilde(J) y+_J1 y+_J2 y_J3 y_J4 exp(-i dW t) with
    pump operators replaced by their arc fields; d/dt y_J = i C sum(...).
    """
    pumps = {"P1": F1, "P2": F2}
    X, Y = {}, {}
    for quad in itertools.product(BIN_LABELS, repeat=4):
        n_pump = sum(J in pumps for J in quad)
        if n_pump != 2:
            continue
        try:
            lam = table.tilde(quad)
            dw = table.detuning(quad)
        except MissingQuad:
            continue
        phase = np.exp(-1j * dw * t)
        J1, J2, J3, J4 = quad
        for created, other in ((J1, J2), (J2, J1)):
            if created in pumps:
                continue
            # commutator removes y+_created; other operators remain
            if other in pumps:
                gen = [J for J in (J3, J4) if J not in pumps]
                pump_ann = [J for J in (J3, J4) if J in pumps]
                if len(gen) != 1:
                    continue
                val = lam * np.conj(pumps[other]) * pumps[pump_ann[0]] * phase
                X[(created, gen[0])] = X.get((created, gen[0]), 0) + val
            else:
                if J3 not in pumps or J4 not in pumps:
                    continue
                val = lam * pumps[J3] * pumps[J4] * phase
                Y[(created, other)] = Y.get((created, other), 0) + val
    return X, Y


def test_coupling_blocks_match_commutator_oracle(setup, rng):
    _, table = setup
    n = len(table.local_labels)
    F1 = rng.normal(size=n) + 1j * rng.normal(size=n)
    F2 = rng.normal(size=n) + 1j * rng.normal(size=n)
    t = 3.7e-11
    X, Y = coupling_blocks(table, F1, F2, t)
    Xb, Yb = _brute_force_blocks(table, F1, F2, t)
    assert set(X) == set(Xb) and set(Y) == set(Yb)
    for key in X:
        np.testing.assert_allclose(X[key], Xb[key], rtol=1e-12, atol=1e-12 * np.max(np.abs(Xb[key])))
    for key in Y:
        np.testing.assert_allclose(Y[key], Yb[key], rtol=1e-12, atol=1e-12 * np.max(np.abs(Yb[key])))


def test_pump_coefficients_match_commutator_oracle(setup):
    _, table = setup
    # pump equation terms: created P1 with all other operators pumps
    spm = 0
    xpm = 0
    for quad in itertools.product(("P1", "P2"), repeat=4):
        try:
            lam = table.tilde(quad)
        except MissingQuad:
            continue
        for pos in (0, 1):
            if quad[pos] != "P1":
                continue
            rest = [quad[1 - pos], quad[2], quad[3]]
            if rest.count("P1") == 3:
                spm = spm + lam
            elif sorted(rest) == ["P1", "P2", "P2"] and quad[1 - pos] == "P2":
                xpm = xpm + lam
    c = pump_nl_coeffs(table)
    np.testing.assert_allclose(c.spm["P1"], spm, rtol=1e-14)
    np.testing.assert_allclose(c.xpm["P1"], xpm, rtol=1e-14)


def test_zero_pumps_give_zero_blocks(setup):
    _, table = setup
    n = len(table.local_labels)
    X, Y = coupling_blocks(table, np.zeros(n), np.zeros(n), 0.0)
    assert all(not np.any(v) for v in list(X.values()) + list(Y.values()))


def test_dp_only_selection(setup, rng):
    _, table = setup
    n = len(table.local_labels)
    F = rng.normal(size=n) + 0j
    X, Y = coupling_blocks(table, F, F, 0.0, DP_BARE)
    assert set(X) == set() and set(Y) == {("S", "S")}
    X, Y = coupling_blocks(table, F, F, 0.0, DP_ONLY)
    assert all(r == c for r, c in X) and set(Y) == {("S", "S")}


def test_a_chi_single_grid_point(setup):
    cfg, table = setup
    n = len(table.local_labels)
    # one pump amplitude at one k gives arc fields F = dk * alpha
    F1 = np.zeros(n, dtype=complex)
    F1[2] = 0.3 - 0.1j
    C = {J: np.broadcast_to(np.eye(n), (3, n, n)) for J in GENERATED_LABELS}
    out = a_chi(table, C, F1, np.zeros(n), 0.0)
    sp = out[("SP1", "LI", "S*")]
    expected = 2 * table.bar(("LI", "S", "P1", "P1"))[2] * F1[2] ** 2
    assert sp[0, 2, 2] == pytest.approx(expected, rel=1e-14)
    assert np.count_nonzero(sp[0]) == 1
    assert not np.any(out[("DP", "S", "S*")])


def test_a_chi_consistent_with_blocks(setup, rng):
    cfg, table = setup
    n = len(table.local_labels)
    F1 = rng.normal(size=n) + 1j * rng.normal(size=n)
    F2 = rng.normal(size=n) + 1j * rng.normal(size=n)
    C = {J: rng.normal(size=(5, n, n)) for J in GENERATED_LABELS}
    out = a_chi(table, C, F1, F2, 1e-11)
    X, Y = coupling_blocks(table, F1, F2, 1e-11)
    for (row, col), val in X.items():
        tot = sum(v for (f, r, c), v in out.items() if r == row and c == col)
        np.testing.assert_allclose(tot, C[row] * val[None, None, :], rtol=1e-12, atol=1e-300)
    for (row, col), val in Y.items():
        tot = sum(v for (f, r, c), v in out.items() if r == row and c == col + "*")
        np.testing.assert_allclose(tot, C[row] * val[None, None, :], rtol=1e-12, atol=1e-300)


def test_example2_dp_detuning():
    cfg, _ = scenario_config(example2_params(kappa_aux=0.0, n_k=7))
    table = lambda_bar(cfg)
    assert table.detuning(("S", "S", "P1", "P2")) / (2 * np.pi * 1e6) == pytest.approx(-453, rel=0.02)


def test_enumeration_and_json(setup):
    _, table = setup
    quads = enumerate_quads()
    assert ("S", "S", "P2", "P1") in quads and ("P1", "P2", "S", "S") in quads
    d = table_to_json(table)
    assert len(d["quads"]) == len(table.lam_tilde)
    assert d["local_modes"][0] == "wg_out"
