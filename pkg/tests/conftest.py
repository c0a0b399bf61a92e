import numpy as np
import pytest

from ringsqueeze.core_model import (
    AUXILIARY,
    PRIMARY,
    WAVEGUIDE,
    DispersionModel,
    RingSpec,
    SystemConfig,
    coupler,
    validate_config,
)
from ringsqueeze.scenarios import example1_params, prepare, scenario_config

LAMBDA = 1550e-9
C = 299792458.0


def make_model(n_g=2.0, gvd=0.0):
    w0 = 2 * np.pi * C / LAMBDA
    L = 2 * np.pi * 120e-6
    k0 = 2 * np.pi * round(1.8 * L / LAMBDA) / L
    return DispersionModel(w0, k0, C / n_g, gvd)


def make_config(kappa_aux=0.0643, sigma_wg=0.997, gamma_p=0.9991, gamma_a=0.99935,
                n_phantom=3, aux=True, gamma_nl=1.0, aux_phase=0.0):
    L = 2 * np.pi * 120e-6
    rings = [RingSpec(PRIMARY, L, gamma_p, n_phantom)]
    couplers = [coupler(sigma_wg, (WAVEGUIDE, 0.0), (PRIMARY, 0.0))]
    if aux:
        rings.append(RingSpec(AUXILIARY, 0.75 * L, gamma_a, n_phantom, phase_offset=aux_phase))
        couplers.append(coupler(np.sqrt(1 - kappa_aux**2), (PRIMARY, L / 2), (AUXILIARY, 0.0)))
    return validate_config(SystemConfig(make_model(), tuple(rings), tuple(couplers), gamma_nl))


@pytest.fixture
def ring_config():
    return make_config()


@pytest.fixture(scope="session")
def small_params():
    """Coarse, weakly pumped Example-1-like point that runs in a few seconds."""
    return example1_params(n_k=7, n_phantom=2, energy=10e-12)


@pytest.fixture(scope="session")
def small_setup(small_params):
    cfg, info = scenario_config(small_params)
    return cfg, info, prepare(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
