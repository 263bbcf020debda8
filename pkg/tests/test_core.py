import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhep.core import (PSCH, PT, K_MU, ModelParams, NHMatrix, build_hamiltonian, build_nv_levels,
                       build_x_hamiltonian, check_symmetry, hamiltonian_array, load_nv_config,
                       spin1_operators)

real = st.floats(-3, 3, allow_nan=False)


def test_spin_algebra():
    sx, sy, sz = (np.asarray(m) for m in spin1_operators())
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz)
    assert np.allclose(sx @ sx + sy @ sy + sz @ sz, 2 * np.eye(3))


def test_hamiltonian_entries():
    H = hamiltonian_array(1.0, 0.0, 0.0, 0.0)
    r = 1 / math.sqrt(2)
    expected = np.array([[1j, r, 0], [r, 0, r], [0, r, -1j]])
    assert np.allclose(H, expected)
    assert np.allclose(hamiltonian_array(0, 0, 1, 0) - hamiltonian_array(0, 0, 0, 0), K_MU)


@settings(max_examples=60, deadline=None)
@given(real, real, real, real)
def test_symmetry_flags_match_relations(g, h, mu, nu):
    H = hamiltonian_array(g, h, mu, nu)
    p = ModelParams(g, h, mu, nu)
    assert check_symmetry(H, PT)[0] == (nu == 0 or abs(nu) < 1e-11)
    if p.pseudo_chiral:
        assert check_symmetry(H, PSCH)[0]


def test_pseudo_chirality_broken_by_nu_and_mu():
    assert not check_symmetry(hamiltonian_array(1, 0.3, 0, 0.05), PSCH)[0]
    assert not check_symmetry(hamiltonian_array(1, 0.3, 0.2, 0), PSCH)[0]
    assert check_symmetry(hamiltonian_array(1, 0.3, 0, 0), PSCH)[0]


def test_build_hamiltonian_claims():
    assert build_hamiltonian(ModelParams(1.0)).claimed_symmetries == {PT, PSCH}
    assert build_hamiltonian(ModelParams(1.0, mu=0.2)).claimed_symmetries == {PT}
    assert build_hamiltonian(ModelParams(1.0, mu=0.2, nu=0.05)).claimed_symmetries == set()


def test_false_claim_rejected():
    with pytest.raises(ValueError):
        NHMatrix(hamiltonian_array(1, 0, 0.2, 0.05), frozenset({PT}))
    with pytest.raises(ValueError):
        NHMatrix(np.eye(2), frozenset())


def test_nhmatrix_read_only():
    m = build_hamiltonian(ModelParams(0.5))
    with pytest.raises(ValueError):
        m.entries[0, 0] = 1


def test_x_family_keeps_pseudo_chirality():
    m = build_x_hamiltonian(1.0, 0.2, 0.3)
    assert m.claimed_symmetries == {PSCH}
    assert not check_symmetry(m, PT)[0]
    assert build_x_hamiltonian(1.0, 0.2, 0.0).claimed_symmetries == {PT, PSCH}


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(float("nan"))
    with pytest.raises(ValueError):
        ModelParams(1.0, s=0.0)


def test_unknown_symmetry_kind():
    with pytest.raises(ValueError):
        check_symmetry(np.eye(3), "chiral")


def test_nv_levels_default():
    nv = build_nv_levels()
    w = nv.omega
    # ordering E2 < E3 < E1 at 500 G
    assert w["13"] == pytest.approx(w["12"] - w["23"], rel=1e-12)
    assert w["46"] == pytest.approx(w["45"] - w["56"], rel=1e-12)
    # hyperfine shifts the 1<->2 line relative to 4<->5 by A
    assert (w["12"] - w["45"]) / (2 * math.pi) == pytest.approx(-2.16e6, rel=1e-9)
    assert w["12"] / (2 * math.pi) == pytest.approx(2.87e9 + 2.8025e6 * 500 - 2.16e6, rel=1e-12)


def test_nv_levels_reject():
    with pytest.raises(ValueError):
        build_nv_levels({"B_gauss": 0.0})  # omega_13 collapses
    with pytest.raises(ValueError):
        build_nv_levels({"D": 1.0})


def test_nv_degenerate_without_hyperfine():
    nv = build_nv_levels({"A_hz": 0.0})
    assert nv.omega["12"] == pytest.approx(nv.omega["45"], rel=1e-15)


def test_load_nv_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"nv": {"B_gauss": 400.0}}))
    nv = load_nv_config(p)
    assert nv.B == 400.0
    assert build_nv_levels(nv.as_config()).omega == nv.omega
