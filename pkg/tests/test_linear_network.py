import time

import numpy as np
import pytest

from conftest import make_config
from ringsqueeze.core_model import AUXILIARY, PRIMARY, WAVEGUIDE, dispersion_k
from ringsqueeze.linear_network import (
    NetworkTopology,
    aux_transmission,
    decoupled,
    find_resonance_features,
    local_basis_maps,
    resonance_shift,
    round_trip_phase,
    segment_amplitudes,
    transmission_spectrum,
    waveguide_transmission,
)
from ringsqueeze.nonlinear_coupling import lambda_bar
from ringsqueeze.scenarios import (
    base_config,
    bin_orders,
    example1_params,
    example2_params,
    primary_resonance,
    scenario_config,
)

GHZ = 2 * np.pi * 1e9


def _resonant_k(cfg, q=0):
    L = cfg.ring(PRIMARY).length
    return cfg.dispersion.k_ref + 2 * np.pi * q / L


def test_round_trip_phase_on_resonance():
    cfg = make_config()
    ring = cfg.ring(PRIMARY)
    k = np.array([_resonant_k(cfg, q) for q in (-3, 0, 5)])
    phi = round_trip_phase(ring, cfg.dispersion, k, reduced=True)
    np.testing.assert_allclose(phi, 0.0, atol=1e-6)


def test_round_trip_phase_linear():
    cfg = make_config()
    ring = cfg.ring(PRIMARY)
    k0 = _resonant_k(cfg)
    dk = np.linspace(-1e3, 1e3, 7)
    phi = round_trip_phase(ring, cfg.dispersion, k0 + dk) - round_trip_phase(ring, cfg.dispersion, k0)
    np.testing.assert_allclose(phi, dk * ring.length, rtol=1e-7, atol=1e-9)


def test_round_trip_phase_direct_formula_example2():
    cfg, _ = scenario_config(example2_params(n_k=7))
    ring = cfg.ring(AUXILIARY)
    w = cfg.bin("P1").center_omega
    m = cfg.dispersion
    x = w - m.omega_ref
    k_direct = m.k_ref + x / m.group_velocity + 0.5 * m.gvd * x * x
    expected = k_direct * ring.length + ring.phase_offset
    got = round_trip_phase(ring, m, dispersion_k(m, w))
    assert got == pytest.approx(expected, rel=1e-14)


def test_decoupled_aux_is_transparent():
    cfg = make_config(kappa_aux=0.0)
    k = _resonant_k(cfg) + np.linspace(-5e3, 5e3, 101)
    np.testing.assert_allclose(aux_transmission(cfg, k), 1.0, atol=1e-15)


def test_lossless_aux_is_all_pass():
    cfg = make_config(gamma_a=1.0)
    k = _resonant_k(cfg) + np.linspace(-5e4, 5e4, 1001)
    np.testing.assert_allclose(np.abs(aux_transmission(cfg, k)), 1.0, atol=1e-12)


def test_aux_on_resonance_closed_form():
    cfg = make_config()
    ring = cfg.ring(AUXILIARY)
    # choose k with k L_a = 2 pi m
    k = 2 * np.pi * np.round(_resonant_k(cfg) * ring.length / (2 * np.pi)) / ring.length
    s = cfg.coupler_between(PRIMARY, AUXILIARY).self_coupling
    g = ring.round_trip_attenuation
    assert complex(aux_transmission(cfg, k)) == pytest.approx((s - g) / (1 - s * g), abs=1e-9)


def test_lossless_single_ring_on_resonance():
    cfg = make_config(gamma_p=1.0, kappa_aux=0.0)
    h, power = waveguide_transmission(cfg, _resonant_k(cfg))
    assert complex(h) == pytest.approx(-1.0, abs=1e-9)
    assert float(power) == pytest.approx(1.0, abs=1e-12)


def test_critical_coupling_extinguishes():
    cfg = make_config(sigma_wg=0.9991, gamma_p=0.9991, kappa_aux=0.0)
    _, power = waveguide_transmission(cfg, _resonant_k(cfg))
    assert float(power) < 1e-16


def test_fig3a_splitting_and_runtime():
    start = time.perf_counter()
    p = example1_params()
    cfg = base_config(p)
    w0 = primary_resonance(cfg.dispersion, p.primary_length, bin_orders(p)["LI"])
    fsr = 2 * np.pi * cfg.dispersion.group_velocity / p.primary_length
    feats = find_resonance_features(cfg, w0 - fsr / 6, w0 + fsr / 6, n_scan=20001)
    elapsed = time.perf_counter() - start
    assert len(feats.centers) == 2
    assert feats.splitting / GHZ == pytest.approx(4.77, rel=0.02)
    assert elapsed < 1.0


def test_no_splitting_when_decoupled():
    p = example1_params(kappa_aux=0.0)
    cfg = base_config(p)
    w0 = primary_resonance(cfg.dispersion, p.primary_length, bin_orders(p)["LI"])
    fsr = 2 * np.pi * cfg.dispersion.group_velocity / p.primary_length
    feats = find_resonance_features(cfg, w0 - fsr / 6, w0 + fsr / 6)
    assert len(feats.centers) == 1
    assert feats.splitting == 0.0
    assert resonance_shift(cfg, w0 - fsr / 6, w0 + fsr / 6) == pytest.approx(0.0, abs=1e-6 * fsr)


def test_fig3b_shift_direction():
    # auxiliary resonance sits below P1, so level repulsion pushes P1 up
    p = example2_params()
    cfg = base_config(p)
    w0 = primary_resonance(cfg.dispersion, p.primary_length, bin_orders(p)["P1"])
    fsr = 2 * np.pi * cfg.dispersion.group_velocity / p.primary_length
    shift = resonance_shift(cfg, w0 - fsr / 6, w0 + fsr / 6, n_scan=20001)
    # dense-scan oracle: minimum of |h|^2 on a fine grid near the resonance
    fw = find_resonance_features(decoupled(cfg), w0 - fsr / 6, w0 + fsr / 6).fwhms[0]
    x = np.linspace(-3 * fw, 3 * fw, 200001)
    _, power = transmission_spectrum(cfg, w0 + x)
    _, power0 = transmission_spectrum(decoupled(cfg), w0 + x)
    dense = x[np.argmin(power)] - x[np.argmin(power0)]
    assert shift > 0
    assert shift == pytest.approx(dense, abs=2 * (x[1] - x[0]))


def test_fully_decoupled_network():
    cfg = make_config(sigma_wg=1.0, kappa_aux=0.0)
    sol = segment_amplitudes(cfg, _resonant_k(cfg) + np.array([0.0, 100.0]))
    np.testing.assert_allclose(sol.H[:, 0, 0], 1.0, atol=1e-15)
    np.testing.assert_allclose(sol.H[:, 1:, 0], 0.0, atol=1e-15)


@pytest.mark.parametrize("kappa", [0.0, 0.0643, 0.3])
def test_scattering_matrix_unitary(kappa):
    cfg = make_config(kappa_aux=kappa)
    k = _resonant_k(cfg) + np.linspace(-3e4, 3e4, 41)
    S = segment_amplitudes(cfg, k).S
    eye = np.eye(S.shape[-1])
    for Si in S:
        np.testing.assert_allclose(Si.conj().T @ Si, eye, atol=1e-10)


def test_waveguide_row_matches_closed_form():
    cfg = make_config()
    k = _resonant_k(cfg) + np.linspace(-3e4, 3e4, 41)
    S = segment_amplitudes(cfg, k).S
    h, _ = waveguide_transmission(cfg, k)
    np.testing.assert_allclose(S[:, 0, 0], h, atol=1e-12)


def test_intracavity_geometric_series():
    cfg = make_config(kappa_aux=0.0)
    topo = NetworkTopology(cfg)
    k = _resonant_k(cfg)
    H = segment_amplitudes(cfg, k).H[0]
    c = cfg.coupler_between(WAVEGUIDE, PRIMARY)
    g = cfg.ring(PRIMARY).round_trip_attenuation
    series = sum(1j * c.cross_coupling * (c.self_coupling * g) ** n for n in range(20000))
    assert complex(H[topo.local_index(PRIMARY, topo.wg_point), 0]) == pytest.approx(series, rel=1e-8)


def test_commutator_matrix_from_in_and_out_bases(small_setup):
    cfg, _, prep = small_setup
    for J, maps in prep.maps.items():
        C_out = maps.H_out @ np.conj(np.swapaxes(maps.H_out, -1, -2))
        np.testing.assert_allclose(C_out, maps.C, atol=1e-10 * np.max(np.abs(maps.C)))
        # C^-1 = conj(L) L^T with L = (H^-1)^T, in both bases
        Cinv_in = np.conj(maps.L_in) @ np.swapaxes(maps.L_in, -1, -2)
        Cinv_out = np.conj(maps.L_out) @ np.swapaxes(maps.L_out, -1, -2)
        np.testing.assert_allclose(Cinv_in, Cinv_out, rtol=1e-8, atol=1e-8 * np.max(np.abs(Cinv_in)))


def test_row_norms_give_commutator_diagonal(small_setup):
    _, _, prep = small_setup
    maps = prep.maps["S"]
    np.testing.assert_allclose(np.sum(np.abs(maps.H) ** 2, axis=-1), np.real(np.diagonal(maps.C, axis1=1, axis2=2)),
                               rtol=1e-12)


def test_maps_well_conditioned(small_setup):
    _, _, prep = small_setup
    assert all(m.well_conditioned for m in prep.maps.values())


def test_local_maps_strict_mode_ok(small_setup):
    cfg, _, prep = small_setup
    m = local_basis_maps(cfg, cfg.bin("S"), prep.topology, strict=True)
    np.testing.assert_allclose(m.H, prep.maps["S"].H)
