import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhep.core import hamiltonian_array
from nhep.dynamics import (DensityMatrix3, conserved_psch, conserved_pt, eigenstate_table,
                           eigenvector_table, extract_eigenstate, fidelity, filtered_state,
                           population_trace, propagate)
from nhep.errors import NoConvergence, NormOverflow, SingularShift

E2 = np.array([0, 1, 0], dtype=complex)
S40 = 2 * math.pi * 40e3
S1 = 2 * math.pi * 30e3
S2 = 2 * math.pi * 20e3


def test_propagate_identity_at_zero():
    psi = np.array([0.6, 0.8j, 0])
    assert np.array_equal(propagate(hamiltonian_array(1.3, 0.2), 0.0, psi), psi)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 50))
def test_hermitian_limit_is_unitary(h, t):
    H = hamiltonian_array(0.0, h, 0.0, 0.0)  # Sx + h Sy
    out = propagate(H, t, E2)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


def test_norm_growth_broken_pt():
    tr = population_trace(hamiltonian_array(2.0), E2, E2, np.linspace(0, 10, 21))
    assert np.all(np.diff(tr.norm[4:]) > 0)
    # dominant growth rate 2 sqrt(3) in the norm squared
    rate = np.log(tr.norm[-1] / tr.norm[-3]) / (tr.times[-1] - tr.times[-3])
    assert rate == pytest.approx(2 * math.sqrt(3), rel=1e-3)


def test_norm_overflow_guard():
    with pytest.raises(NormOverflow):
        propagate(hamiltonian_array(2.0), 20.0, E2)


def test_p0_starts_at_one():
    tr = population_trace(hamiltonian_array(0.7, 0.1, 0.2, 0.05), E2, E2, [0.0, 1e-6], S40)
    assert tr.p0[0] == 1.0


def test_oscillatory_below_ep():
    t = np.linspace(0, 30e-6, 301)
    p = population_trace(hamiltonian_array(0.5), E2, E2, t, S40).p0
    maxima = np.sum((p[1:-1] > p[:-2]) & (p[1:-1] > p[2:]))
    minima = np.sum((p[1:-1] < p[:-2]) & (p[1:-1] < p[2:]))
    assert maxima >= 2 and minima >= 2
    assert p.min() < 0.01


def test_steady_state_at_ep3():
    p = population_trace(hamiltonian_array(1.0), E2, E2, np.linspace(50, 400, 8)).p0
    assert np.all(np.diff(p) > 0) and abs(p[-1] - 0.5) < 1e-4


def test_population_trace_validates_states():
    with pytest.raises(ValueError):
        population_trace(hamiltonian_array(1.0), [1, 1, 0], E2, [0.0])


def _slope(f, H, s, dt=1e-9):
    return (f(H, s, [dt])[0] - f(H, s, [-dt])[0]) / (2 * dt)


@pytest.mark.parametrize("g,h,mu", [(0.5, 0, 0), (1.0, 0.3, 0.2), (1.4, -0.5, 0.05)])
def test_conserved_pt_flat_without_nu(g, h, mu):
    H = hamiltonian_array(g, h, mu, 0.0)
    assert abs(conserved_pt(H, S1, [0.0])[0] - 0.5) <= 2**-53  # |1/sqrt2|^2 in binary
    assert abs(_slope(conserved_pt, H, S1) / S1) < 1e-6


def test_conserved_pt_slope():
    H = hamiltonian_array(0.96, 0, 0.2, 0.05)
    assert _slope(conserved_pt, H, S1) == pytest.approx(S1 * 0.05, rel=1e-2)


def test_conserved_psch():
    H = hamiltonian_array(1.06, 0.35, 0, 0)
    assert abs(conserved_psch(H, S2, [0.0])[0] - 0.5) <= 2**-53
    assert abs(_slope(conserved_psch, H, S2) / S2) < 1e-6
    H = hamiltonian_array(0.96, 0, 0.2, 0.0)
    assert _slope(conserved_psch, H, S2) == pytest.approx(2 * S2 * 0.2, rel=1e-2)


def test_filter_hermitian_limit():
    with pytest.raises(NoConvergence):
        extract_eigenstate(hamiltonian_array(0.0), "top")


def test_filter_singular_shift():
    H = hamiltonian_array(0.5)
    E = np.linalg.eigvals(H)
    with pytest.raises(SingularShift):
        filtered_state(H, "middle", alpha=complex(E[0]))


def test_filter_states_are_eigenvectors():
    H = hamiltonian_array(0.96, 0, 0.2, 0.05)
    for which in ("top", "bottom"):
        psi, E = filtered_state(H, which)
        assert np.linalg.norm(H @ psi - E * psi) < 1e-8


def test_fidelity_table_general():
    F = eigenstate_table(hamiltonian_array(0.96, 0, 0.2, 0.05))["fidelities"]
    assert F["F12"] == pytest.approx(0.9351, abs=1e-4)
    assert F["F13"] == pytest.approx(0.76539, abs=1e-5)
    assert F["F23"] == pytest.approx(0.9351, abs=1e-4)


def test_fidelity_table_pt_only():
    F = eigenstate_table(hamiltonian_array(0.73, -0.35, 0.2, 0.0))["fidelities"]
    assert F["F12"] == pytest.approx(0.22345, abs=1e-5)
    assert F["F13"] == pytest.approx(0.22345, abs=1e-5)
    assert F["F23"] == pytest.approx(0.98786, abs=1e-5)
    assert abs(F["F23"] - 1) <= 0.02


def test_filter_matches_direct_eigendecomposition():
    H = hamiltonian_array(0.96, 0, 0.2, 0.05)
    a = eigenstate_table(H)["fidelities"]
    b = eigenvector_table(H)["fidelities"]
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-7)


def test_eigenvector_table_flags_ep3():
    assert eigenvector_table(hamiltonian_array(1.0))["degenerate"]
    assert not eigenvector_table(hamiltonian_array(0.5))["degenerate"]


def test_fidelity_basics():
    a = DensityMatrix3.pure([1, 0, 0])
    b = DensityMatrix3.pure([0, 1, 0])
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(a, b) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12))
def test_fidelity_pure_overlap(x):
    u = np.array(x[0:3]) + 1j * np.array(x[3:6])
    v = np.array(x[6:9]) + 1j * np.array(x[9:12])
    if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
        return
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    f = fidelity(DensityMatrix3.pure(u), DensityMatrix3.pure(v))
    assert f == pytest.approx(abs(np.vdot(u, v)) ** 2, abs=1e-7)


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix3(np.diag([0.5, 0.6, -0.1]))
    with pytest.raises(ValueError):
        DensityMatrix3(np.eye(3))
