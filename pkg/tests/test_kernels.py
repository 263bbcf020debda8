import os
import subprocess
import sys

import numpy as np
import pytest

from nhep import _kernels as K
from nhep.ep import model_coeffs

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _draws(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-2, 2, size=(4, n))


def test_cardano_parity():
    f1, f0 = model_coeffs(*_draws(2000))
    a = K.cardano_batch(f1, f0, backend="numba")
    b = K.cardano_batch(f1, f0, backend="numpy")
    assert np.abs(a - b).max() < 1e-12


def test_cardano_degenerate_parity():
    f1, f0 = model_coeffs(np.array([1.0, 1.25]), np.array([0.0, 0.75]), 0.0, 0.0)
    for be in ("numba", "numpy"):
        assert np.abs(K.cardano_batch(f1, f0, backend=be)).max() < 1e-7


def test_report_order():
    f1, f0 = model_coeffs(*_draws(500, 1))
    E = K.cardano_batch(f1, f0, backend="numpy")
    assert np.all(np.diff(E.real, axis=1) <= 1e-9 * (1 + np.abs(E).max(axis=1, keepdims=True)))


def test_bisect_parity():
    g = np.linspace(0.9, 1.9, 50)
    ga, gb = g - 0.05, g + 0.05
    h = np.sqrt(np.maximum(g**2 - 1, 0))
    a = K.bisect_re_r1(ga, h, gb, h, 0.0, 0.0, backend="numba")
    b = K.bisect_re_r1(ga, h, gb, h, 0.0, 0.0, backend="numpy")
    assert np.allclose(a[0], b[0], atol=1e-14) and np.allclose(a[1], b[1], atol=1e-14)


def test_sort_sheets_parity():
    gs = np.linspace(0.2, 1.8, 25)
    hs = np.linspace(-1, 1, 21)
    G, Hh = np.meshgrid(gs, hs, indexing="ij")
    f1, f0 = model_coeffs(G, Hh, 0.2, 0.05)
    E = K.cardano_batch(f1, f0, backend="numpy")
    sa, fa = K.sort_sheets(E, backend="numba")
    sb, fb = K.sort_sheets(E, backend="numpy")
    assert np.array_equal(sa, sb) and np.array_equal(fa, fb)


def test_resolve_backend():
    assert K.resolve_backend("numpy") == "numpy"
    with pytest.raises(ValueError):
        K.resolve_backend("cuda")


def test_env_flag_selects_numpy():
    code = "from nhep import _kernels as K; print(K.resolve_backend())"
    for flag, want in (("1", "numpy"), ("0", "numba")):
        env = dict(os.environ, NHEP_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        assert out.stdout.strip() == want
