import math

import numpy as np
import pytest

from cqsrs.core import SX, SY, SZ, embed, partial_trace, state_violations
from cqsrs.dynamics import (
    DP, GPD, PPD, ControlPulse, LocalSensor, NoiseModel, build_lindbladian, control_hamiltonian,
    encoding_hamiltonian, propagate, propagate_with_derivative,
)
from cqsrs.states import depolarize_asymmetric, ghz

from oracles import random_density_matrix

NOISES = [NoiseModel(), GPD, PPD, DP, NoiseModel("gpd", 0.05, gpd_copies=3), NoiseModel("gpd", 0.1, 0.3, 1.1)]


def full_route(rho0, omega, noise, pulse):
    h = encoding_hamiltonian(omega, 3, (1, 2))
    segs = []
    for k in range(pulse.segments):
        hc = control_hamiltonian(pulse.amplitudes[:, k], 3, (1, 2))
        segs.append((build_lindbladian(h, noise, (1, 2), hc), pulse.segment_duration))
    return propagate(rho0, segs)


@pytest.mark.parametrize("noise", NOISES, ids=lambda n: f"{n.kind}-{n.gpd_copies}")
def test_factorised_route_matches_full_lindbladian(noise):
    rng = np.random.default_rng(11)
    rho0 = random_density_matrix(rng, 3)
    pulse = ControlPulse(rng.uniform(-2, 2, size=(6, 4)), 1.7)
    local = LocalSensor(noise).evolve(rho0, 0.8, pulse)
    assert np.max(np.abs(local - full_route(rho0, 0.8, noise, pulse))) <= 1e-12


def test_encoding_phase_convention():
    rho = LocalSensor().evolve(ghz(3), 1.0, ControlPulse.zeros(0.6, 1))
    assert rho[7, 0] == pytest.approx(0.5 * np.exp(2j * 0.6), abs=1e-14)


def test_noiseless_unitary_oracle():
    rng = np.random.default_rng(2)
    rho0 = random_density_matrix(rng, 3)
    amps = rng.normal(size=6)
    h = encoding_hamiltonian(1.3, 3, (1, 2)) + control_hamiltonian(amps, 3, (1, 2))
    lam, v = np.linalg.eigh(h)
    t = 2.5
    u = v @ np.diag(np.exp(-1j * lam * t)) @ v.conj().T
    out = LocalSensor().evolve(rho0, 1.3, ControlPulse(amps[:, None], t))
    assert np.max(np.abs(out - u @ rho0 @ u.conj().T)) <= 1e-12


def test_lindbladian_preserves_trace_and_hermiticity():
    gen = build_lindbladian(encoding_hamiltonian(1.0, 3, (1, 2)), DP, (1, 2))
    # trace functional vec(I) is a left null vector
    assert np.max(np.abs(np.eye(8).reshape(-1) @ gen)) <= 1e-14


@pytest.mark.parametrize("t", [0.5, 3.0, 10.0])
def test_ppd_coherence_decay(t):
    g = PPD.rate
    rho = LocalSensor(PPD).evolve(ghz(3), 1.0, ControlPulse.zeros(t, 1))
    assert abs(rho[0, 7]) == pytest.approx(0.5 * math.exp(-4 * g * t), rel=1e-12)
    single = LocalSensor(PPD, (0,)).evolve(ghz(1), 0.0, ControlPulse.zeros(t, 1, 1))
    assert abs(single[0, 1]) == pytest.approx(0.5 * math.exp(-2 * g * t), rel=1e-12)


def test_dp_bloch_shrinks_isotropically():
    t, g = 4.0, DP.rate
    plus = np.full((2, 2), 0.5, dtype=complex)
    rho = LocalSensor(DP, (0,)).evolve(plus, 0.0, ControlPulse.zeros(t, 1, 1))
    bloch = [np.trace(rho @ p).real for p in (SX, SY, SZ)]
    assert np.allclose(bloch, [math.exp(-4 * g * t), 0, 0], atol=1e-13)


def test_dp_fixed_point():
    rho = LocalSensor(DP).evolve(np.eye(8) / 8, 0.7, ControlPulse(np.ones((6, 3)), 5.0))
    assert np.max(np.abs(rho - np.eye(8) / 8)) <= 1e-15


def test_semigroup():
    rng = np.random.default_rng(5)
    rho0 = random_density_matrix(rng, 3)
    s = LocalSensor(GPD)
    two = s.evolve(s.evolve(rho0, 1.0, ControlPulse.zeros(1.2, 1)), 1.0, ControlPulse.zeros(2.3, 1))
    one = s.evolve(rho0, 1.0, ControlPulse.zeros(3.5, 1))
    assert np.max(np.abs(two - one)) <= 1e-13


def test_alice_qubit_untouched():
    rho = LocalSensor(GPD).evolve(ghz(3), 1.0, ControlPulse(np.full((6, 2), 0.4), 3.0))
    assert np.allclose(partial_trace(rho, [0]), np.eye(2) / 2, atol=1e-15)


@pytest.mark.parametrize("noise", NOISES[:4], ids=lambda n: n.kind)
def test_states_stay_physical(noise):
    rng = np.random.default_rng(9)
    for t in (0.1, 1.0, 10.0):
        pulse = ControlPulse(rng.uniform(-5, 5, size=(6, 10)), t)
        rho = LocalSensor(noise).evolve(depolarize_asymmetric(ghz(3), 0.06), 1.0, pulse)
        assert state_violations(rho, eigen_floor=-1e-8, trace_tol=1e-9) == []


class TestDerivative:
    def test_traceless_and_hermitian(self):
        _, drho = propagate_with_derivative(ghz(3), 1.0, GPD, None, 3.0)
        assert abs(np.trace(drho)) <= 1e-9
        assert np.max(np.abs(drho - drho.conj().T)) <= 1e-12

    def test_exact_noiseless(self):
        t = 2.0
        _, drho = propagate_with_derivative(ghz(3), 1.0, NoiseModel(), None, t)
        assert drho[7, 0] == pytest.approx(1j * t * np.exp(2j * t), abs=1e-8)

    def test_central_difference_is_second_order(self):
        t = 2.0
        exact = 1j * t * np.exp(2j * t)
        errs = [abs(propagate_with_derivative(ghz(3), 1.0, NoiseModel(), None, t, domega=d)[1][7, 0] - exact)
                for d in (2e-2, 1e-2)]
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)

    def test_guard(self):
        with pytest.raises(ValueError):
            propagate_with_derivative(ghz(3), 1.0, GPD, None, 1.0, domega=1e-9)

    def test_pulse_duration_mismatch(self):
        with pytest.raises(ValueError):
            propagate_with_derivative(ghz(3), 1.0, GPD, ControlPulse.zeros(2.0, 3), 1.0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        propagate(ghz(3), [(np.zeros((64, 64)), 0.0)])
    with pytest.raises(ValueError):
        NoiseModel("thermal", 0.1)
    with pytest.raises(ValueError):
        NoiseModel("ppd", -1.0)
    with pytest.raises(ValueError):
        ControlPulse(np.zeros((6, 1)), -1.0)
    with pytest.raises(ValueError):
        control_hamiltonian([1.0, 2.0], 3, (1, 2))


def test_embed_consistency_of_hamiltonian():
    h = encoding_hamiltonian(2.0, 3, (1, 2))
    assert np.allclose(h, embed(SZ, 1, 3) + embed(SZ, 2, 3))


@pytest.mark.parametrize("noise", NOISES[:4], ids=lambda n: n.kind)
def test_exact_derivative_matches_finite_difference(noise):
    rng = np.random.default_rng(12)
    pulse = ControlPulse(rng.uniform(-3, 3, (6, 6)), 2.4)
    rho0 = random_density_matrix(rng, 3)
    rho, exact = propagate_with_derivative(rho0, 0.9, noise, pulse, 2.4)
    rho_fd, fd = propagate_with_derivative(rho0, 0.9, noise, pulse, 2.4, domega=1e-5)
    assert np.max(np.abs(rho - rho_fd)) <= 1e-14
    assert np.max(np.abs(exact - fd)) <= 1e-8
