import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import brentq

from nhep.core import build_nv_levels, hamiltonian_array
from nhep.dilation import (CHANNELS, dilated_blocks, dilation_window, eta, eta_dot,
                           evolve_dilated, frames, initial_dilated_state, metric_m,
                           min_metric_margin, project, pulse_schedule, reconstruct_blocks)
from nhep.dynamics import population_trace
from nhep.errors import MetricNotPositive, StepTooCoarse

S40 = 2 * math.pi * 40e3
ETA0 = math.sqrt(0.3)
E2 = np.array([0, 1, 0], dtype=complex)
T_STAR_15 = 3.480822095431097e-07  # gamma = 1.5 window at s = 2 pi 40 kHz
HERM = hamiltonian_array(0.0, 0.4, 0.0, 0.0)


def test_metric_at_zero():
    M = metric_m(hamiltonian_array(0.8, 0.1, 0.2, 0.05), 0.0, 1 + ETA0**2, S40)
    assert np.allclose(M, 1.3 * np.eye(3), atol=1e-15)


def test_hermitian_metric_constant():
    M = metric_m(HERM, np.linspace(0, 5e-6, 6), 1.3, S40)
    assert np.abs(M - 1.3 * np.eye(3)).max() < 1e-12
    e, valid = eta(HERM, 3e-6, ETA0, S40)
    assert valid and np.allclose(e, ETA0 * np.eye(3), atol=1e-12)
    assert np.abs(eta_dot(HERM, 3e-6, ETA0, S40)).max() < 1e-12 * S40


def test_hermitian_blocks_equal_sH():
    G, L = dilated_blocks(HERM, 2e-6, ETA0, S40)
    assert np.abs(G - S40 * HERM).max() < 1e-9 * S40
    assert np.abs(L - S40 * HERM).max() < 1e-9 * S40


def test_metric_margin_crosses_zero():
    H = hamiltonian_array(1.5)
    t = np.linspace(0, 0.3e-6, 31)
    m = min_metric_margin(H, t, ETA0, S40)
    assert m[0] == pytest.approx(0.3) and np.all(np.diff(m) < 0)
    tw = dilation_window(H, ETA0, S40)
    assert tw == pytest.approx(T_STAR_15, rel=1e-12)

    def margin(x):
        A = expm(1j * S40 * x * H)
        return np.linalg.eigvalsh(1.3 * A.conj().T @ A).min() - 1 + 1e-12

    assert tw == pytest.approx(brentq(margin, 1e-7, 1e-6, xtol=1e-20), rel=1e-8)


def test_eta_beyond_window():
    H = hamiltonian_array(1.5)
    with pytest.raises(MetricNotPositive) as exc:
        eta(H, 1.2 * T_STAR_15, ETA0, S40)
    assert exc.value.t_fail is not None
    _, valid = eta(H, 1.2 * T_STAR_15, ETA0, S40, strict=False)
    assert not valid


def test_eta_at_zero_and_eta_dot_closed_form():
    H = hamiltonian_array(0.8, 0.3, 0.2, 0.05)
    e, _ = eta(H, 0.0, ETA0, S40)
    assert np.allclose(e, ETA0 * np.eye(3), atol=1e-14)
    A = S40 * H
    Md = -1j * A.conj().T * 1.3 + 1j * 1.3 * A
    assert np.allclose(eta_dot(H, 0.0, ETA0, S40), Md / (2 * ETA0), atol=1e-9 * S40)


def test_blocks_closed_form_at_zero():
    H = hamiltonian_array(0.8, 0.3, 0.2, 0.05)
    A = S40 * H
    herm, anti = (A + A.conj().T) / 2, 1j * (A - A.conj().T) / (2 * ETA0)
    G, L = dilated_blocks(H, 0.0, ETA0, S40)
    assert np.abs(G - (herm + anti)).max() < 1e-9 * S40
    assert np.abs(L - (herm - anti)).max() < 1e-9 * S40


def test_blocks_hermitian_inside_window():
    f = frames(hamiltonian_array(1.0), np.linspace(0, 0.5e-6, 51), ETA0, S40)
    assert f["herm_residual"] < 1e-10


def test_schedule_at_zero_fig2c():
    nv = build_nv_levels()
    sch = pulse_schedule(hamiltonian_array(0.5), np.linspace(0, 0.9e-6, 10), nv, ETA0, S40)
    # off-diagonals at t = 0 are s/sqrt(2) = pi Omega
    for ch in ("MW1", "MW2", "MW3", "MW4"):
        assert sch.amplitude[ch][0] == pytest.approx(56568.54249492381, rel=1e-12)
        assert sch.phase[ch][0] == 0
    for ch in ("EF1", "EF2"):
        assert sch.amplitude[ch][0] == 0 and sch.phase[ch][0] == 0


def test_schedule_zero_elements_hermitian():
    sch = pulse_schedule(hamiltonian_array(0.0, 0.0), np.linspace(0, 1e-6, 5), build_nv_levels(),
                         ETA0, S40)
    for ch in ("EF1", "EF2"):
        assert np.all(sch.amplitude[ch] == 0) and np.all(sch.phase[ch] == 0)


def test_schedule_roundtrip():
    nv = build_nv_levels()
    H = hamiltonian_array(1.0)
    t = np.linspace(0, 0.5e-6, 26)
    sch = pulse_schedule(H, t, nv, ETA0, S40)
    G, L, err = reconstruct_blocks(sch, nv)
    G0, L0 = dilated_blocks(H, t, ETA0, S40)
    assert np.abs(G - G0).max() < 1e-9 * S40 and np.abs(L - L0).max() < 1e-9 * S40
    wmax = max(abs(np.asarray(sch.carrier[c])).max() for c in CHANNELS)
    assert err < 1e-14 * wmax


def test_schedule_empty_grid():
    with pytest.raises(ValueError):
        pulse_schedule(hamiltonian_array(1.0), [], build_nv_levels(), ETA0, S40)


def test_initial_state_projection():
    psi6 = initial_dilated_state(E2, ETA0)
    minus, plus = project(psi6)
    assert np.allclose(minus[0] * math.sqrt(1.3), E2)
    assert np.allclose(plus[0] * math.sqrt(1.3), ETA0 * E2)


def test_evolve_matches_direct_inside_window():
    H = hamiltonian_array(1.0)
    T = 0.5e-6
    t = np.linspace(0, T, 101)
    dil, proj = evolve_dilated(H, E2, ETA0, t, T / 2000, S40)
    ref = population_trace(H, E2, E2, t, S40)
    assert np.abs(dil.norm - 1).max() < 1e-8
    assert np.abs(proj.p0 - ref.p0).max() < 1e-6
    assert np.allclose(proj.raw_states[0], E2, atol=1e-15)


def test_evolve_window_exceeded():
    with pytest.raises(MetricNotPositive) as exc:
        evolve_dilated(hamiltonian_array(1.0), E2, ETA0, np.linspace(0, 30e-6, 31), 1e-7, S40)
    assert exc.value.t_fail == pytest.approx(5.223314598809322e-07, rel=1e-9)


def test_evolve_step_guard():
    with pytest.raises(StepTooCoarse):
        evolve_dilated(hamiltonian_array(1.0), E2, ETA0, np.linspace(0, 0.5e-6, 3), 0.25e-6, S40)


@pytest.mark.parametrize("grid,step", [([0.1, 0.2], 0.01), ([0, 0.2, 0.1], 0.01), ([0, 1e-7], 2e-7)])
def test_evolve_rejects_bad_grid(grid, step):
    with pytest.raises(ValueError):
        evolve_dilated(hamiltonian_array(1.0), E2, ETA0, np.array(grid) * 1e-6, step * 1e-6, S40)
