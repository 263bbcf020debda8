"""Hot loops with two interchangeable backends.

* ``numba``: ``@njit`` kernels, compiled on first use and cached on disk.
* ``numpy``: vectorized fallbacks with identical semantics.

The numba backend is used when numba imports cleanly and the environment
variable ``NHEP_DISABLE_NUMBA`` is unset or ``0``.  Every public function
takes ``backend=None`` (auto) or an explicit ``"numba"`` / ``"numpy"`` so
tests and the benchmark can compare both paths.
"""
from __future__ import annotations

import cmath
import math
import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # noqa: BLE001
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_disabled() -> bool:
    return os.environ.get("NHEP_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()

# Below this |Delta| = |q^2/4 + p^3/27| Cardano loses digits; use eigvals.
DELTA_FALLBACK = 1e-20
SORT_TOL = 1e-9

PERMS = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]], dtype=np.int64)


def resolve_backend(backend=None) -> str:
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend


# ---------------------------------------------------------------- Cardano

@njit(cache=True)
def _before(a, b, tol):
    # report order: Re descending, ties (within tol) by Im descending
    if a.real > b.real + tol:
        return True
    if abs(a.real - b.real) <= tol and a.imag > b.imag:
        return True
    return False


@njit(cache=True)
def _cubic_val(r, p, q):
    return (r * r + p) * r + q


@njit(cache=True)
def _cardano_one(p, q, out):
    delta = q * q / 4.0 + p * p * p / 27.0
    if abs(delta) < DELTA_FALLBACK:
        c = np.zeros((3, 3), dtype=np.complex128)
        c[0, 1] = -p
        c[0, 2] = -q
        c[1, 0] = 1.0
        c[2, 1] = 1.0
        ev = np.linalg.eigvals(c)
        for k in range(3):
            out[k] = ev[k]
    else:
        sd = cmath.sqrt(delta)
        w1 = -q / 2.0 + sd
        w2 = -q / 2.0 - sd
        w = w1 if abs(w1) >= abs(w2) else w2
        u = cmath.exp(cmath.log(w) / 3.0)
        om = complex(-0.5, math.sqrt(3.0) / 2.0)
        uk = u
        for k in range(3):
            out[k] = uk - p / (3.0 * uk)
            uk = uk * om
        # one guarded Newton polish per root
        for k in range(3):
            r = out[k]
            d = 3.0 * r * r + p
            if d != 0:
                rn = r - _cubic_val(r, p, q) / d
                if abs(_cubic_val(rn, p, q)) < abs(_cubic_val(r, p, q)):
                    out[k] = rn
    scale = 1.0
    for k in range(3):
        if abs(out[k]) > scale:
            scale = abs(out[k])
    tol = SORT_TOL * scale
    # three-comparator sorting network
    for i, j in ((0, 1), (1, 2), (0, 1)):
        if _before(out[j], out[i], tol):
            t = out[i]
            out[i] = out[j]
            out[j] = t


@njit(cache=True)
def _cardano_batch_nb(f1, f0):
    n = f1.shape[0]
    out = np.empty((n, 3), dtype=np.complex128)
    buf = np.empty(3, dtype=np.complex128)
    for i in range(n):
        _cardano_one(f1[i], f0[i], buf)
        out[i, 0] = buf[0]
        out[i, 1] = buf[1]
        out[i, 2] = buf[2]
    return out


def _cardano_batch_np(f1, f0):
    p = f1.astype(complex)
    q = f0.astype(complex)
    n = p.shape[0]
    out = np.empty((n, 3), dtype=complex)
    delta = q * q / 4.0 + p**3 / 27.0
    fb = np.abs(delta) < DELTA_FALLBACK
    ok = ~fb
    if ok.any():
        pp, qq = p[ok], q[ok]
        sd = np.sqrt(delta[ok])
        w1 = -qq / 2 + sd
        w2 = -qq / 2 - sd
        w = np.where(np.abs(w1) >= np.abs(w2), w1, w2)
        u = np.exp(np.log(w) / 3.0)
        om = complex(-0.5, math.sqrt(3.0) / 2.0)
        uk = np.stack([u, u * om, u * om * om], axis=1)
        r = uk - pp[:, None] / (3.0 * uk)
        val = lambda z: (z * z + pp[:, None]) * z + qq[:, None]  # noqa: E731
        d = 3.0 * r * r + pp[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            rn = np.where(d != 0, r - val(r) / np.where(d != 0, d, 1.0), r)
        better = np.abs(val(rn)) < np.abs(val(r))
        out[ok] = np.where(better, rn, r)
    if fb.any():
        c = np.zeros((int(fb.sum()), 3, 3), dtype=complex)
        c[:, 0, 1] = -p[fb]
        c[:, 0, 2] = -q[fb]
        c[:, 1, 0] = 1.0
        c[:, 2, 1] = 1.0
        out[fb] = np.linalg.eigvals(c)
    return sort_report_np(out)


def sort_report_np(r):
    """Vectorized version of the three-comparator network in report order."""
    r = np.array(r, dtype=complex, copy=True)
    tol = SORT_TOL * np.maximum(1.0, np.abs(r).max(axis=1))
    for i, j in ((0, 1), (1, 2), (0, 1)):
        a, b = r[:, i].copy(), r[:, j].copy()
        swap = (b.real > a.real + tol) | ((np.abs(b.real - a.real) <= tol) & (b.imag > a.imag))
        r[swap, i] = b[swap]
        r[swap, j] = a[swap]
    return r


def cardano_batch(f1, f0, backend=None) -> np.ndarray:
    """Roots of x^3 + f1 x + f0 for arrays of coefficients, shape (n, 3),
    each row in report order (Re descending, then Im descending)."""
    f1 = np.ascontiguousarray(np.atleast_1d(f1), dtype=np.complex128)
    f0 = np.ascontiguousarray(np.atleast_1d(f0), dtype=np.complex128)
    f1, f0 = np.broadcast_arrays(f1, f0)
    shape = f1.shape
    f1, f0 = np.ascontiguousarray(f1.ravel()), np.ascontiguousarray(f0.ravel())
    if resolve_backend(backend) == "numba":
        out = _cardano_batch_nb(f1, f0)
    else:
        out = _cardano_batch_np(f1, f0)
    return out.reshape(shape + (3,))


# ---------------------------------------------------------------- r1 and bisection

@njit(cache=True)
def _re_r1(g, h, mu, nu):
    f1 = complex(g * g - 1.0 - h * h - nu * nu + 2.0 * mu * mu, -2.0 * g * nu)
    f0 = 2.0 * math.sqrt(2.0) * mu * h * complex(g, -nu)
    return (4.0 * f1 * f1 * f1 + 27.0 * f0 * f0).real


def re_r1_np(g, h, mu, nu):
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    f1 = g * g - 1.0 - h * h - nu * nu + 2.0 * mu * mu - 2j * g * nu
    f0 = 2.0 * math.sqrt(2.0) * mu * h * (g - 1j * nu)
    return (4.0 * f1**3 + 27.0 * f0**2).real


@njit(cache=True)
def _bisect_nb(ga, ha, gb, hb, mu, nu, tol, maxit):
    n = ga.shape[0]
    go = np.empty(n)
    ho = np.empty(n)
    for i in range(n):
        a0, a1, b0, b1 = ga[i], ha[i], gb[i], hb[i]
        fa = _re_r1(a0, a1, mu, nu)
        for _ in range(maxit):
            m0 = 0.5 * (a0 + b0)
            m1 = 0.5 * (a1 + b1)
            if abs(b0 - a0) + abs(b1 - a1) <= tol:
                break
            fm = _re_r1(m0, m1, mu, nu)
            if fm == 0.0:
                a0, a1, b0, b1 = m0, m1, m0, m1
                break
            if (fm > 0) == (fa > 0):
                a0, a1, fa = m0, m1, fm
            else:
                b0, b1 = m0, m1
        go[i] = 0.5 * (a0 + b0)
        ho[i] = 0.5 * (a1 + b1)
    return go, ho


def _bisect_np(ga, ha, gb, hb, mu, nu, tol, maxit):
    a0, a1, b0, b1 = (np.array(x, dtype=float) for x in (ga, ha, gb, hb))
    fa = re_r1_np(a0, a1, mu, nu)
    active = np.ones(a0.shape, dtype=bool)
    for _ in range(maxit):
        active &= (np.abs(b0 - a0) + np.abs(b1 - a1)) > tol
        if not active.any():
            break
        m0 = 0.5 * (a0 + b0)
        m1 = 0.5 * (a1 + b1)
        fm = re_r1_np(m0, m1, mu, nu)
        hit = active & (fm == 0.0)
        a0[hit], a1[hit], b0[hit], b1[hit] = m0[hit], m1[hit], m0[hit], m1[hit]
        active &= ~hit
        same = active & ((fm > 0) == (fa > 0))
        other = active & ~same
        a0[same], a1[same], fa[same] = m0[same], m1[same], fm[same]
        b0[other], b1[other] = m0[other], m1[other]
    return 0.5 * (a0 + b0), 0.5 * (a1 + b1)


def bisect_re_r1(ga, ha, gb, hb, mu, nu, tol=1e-15, maxit=200, backend=None):
    """Bisect Re r1 = 0 on the segments (ga,ha)-(gb,hb); endpoints must bracket."""
    args = [np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64) for x in (ga, ha, gb, hb)]
    if resolve_backend(backend) == "numba":
        return _bisect_nb(*args, float(mu), float(nu), float(tol), int(maxit))
    return _bisect_np(*args, float(mu), float(nu), float(tol), int(maxit))


# ---------------------------------------------------------------- sheet sorting

@njit(cache=True)
def _best_perm(node, ref, perms):
    best = 0
    bestc = np.inf
    scale = 1.0
    for k in range(3):
        scale = max(scale, abs(ref[k]))
    for pi in range(perms.shape[0]):
        c = 0.0
        for k in range(3):
            c += abs(node[perms[pi, k]] - ref[k])
        if c < bestc - 1e-13 * scale:
            bestc = c
            best = pi
    return best


@njit(cache=True)
def _sort_sheets_nb(E, perms):
    ni, nj = E.shape[0], E.shape[1]
    out = np.empty_like(E)
    flags = np.zeros((ni, nj), dtype=np.int64)
    have_prev = False
    pi_, pj_ = 0, 0
    for i in range(ni):
        for jj in range(nj):
            j = jj if i % 2 == 0 else nj - 1 - jj
            if not have_prev:
                for k in range(3):
                    out[i, j, k] = E[i, j, k]
                have_prev = True
            else:
                b = _best_perm(E[i, j], out[pi_, pj_], perms)
                for k in range(3):
                    out[i, j, k] = E[i, j, perms[b, k]]
            pi_, pj_ = i, j
    for i in range(ni):
        for j in range(nj):
            f = 0
            if i > 0 and _best_perm(out[i, j], out[i - 1, j], perms) != 0:
                f = 1
            if j > 0 and _best_perm(out[i, j], out[i, j - 1], perms) != 0:
                f = 1
            flags[i, j] = f
    return out, flags


def _best_perm_np(nodes, refs):
    # nodes, refs: (m, 3) -> index of best permutation per row (ties -> lowest index)
    cost = np.abs(nodes[:, PERMS] - refs[:, None, :]).sum(axis=2)  # (m, 6)
    scale = np.maximum(1.0, np.abs(refs).max(axis=1))
    best = np.zeros(len(nodes), dtype=np.int64)
    bestc = np.full(len(nodes), np.inf)
    for pi in range(6):
        better = cost[:, pi] < bestc - 1e-13 * scale
        best[better] = pi
        bestc[better] = cost[better, pi]
    return best


def _sort_sheets_np(E):
    ni, nj = E.shape[:2]
    out = np.empty_like(E)
    prev = None
    for i in range(ni):
        cols = range(nj) if i % 2 == 0 else range(nj - 1, -1, -1)
        for j in cols:
            if prev is None:
                out[i, j] = E[i, j]
            else:
                b = _best_perm_np(E[i, j][None], prev[None])[0]
                out[i, j] = E[i, j][PERMS[b]]
            prev = out[i, j]
    flags = np.zeros((ni, nj), dtype=np.int64)
    if ni > 1:
        b = _best_perm_np(out[1:].reshape(-1, 3), out[:-1].reshape(-1, 3)).reshape(ni - 1, nj)
        flags[1:] |= (b != 0)
    if nj > 1:
        b = _best_perm_np(out[:, 1:].reshape(-1, 3), out[:, :-1].reshape(-1, 3)).reshape(ni, nj - 1)
        flags[:, 1:] |= (b != 0)
    return out, flags


def sort_sheets(E, backend=None):
    """Continuity-sort eigenvalue triples on a grid along a serpentine path.

    ``E`` has shape (ni, nj, 3).  Returns (sheets, flags) where flags[i, j]
    is 1 when the node disagrees with a grid neighbour's sheet labelling,
    i.e. a branch cut passes between them.
    """
    E = np.ascontiguousarray(E, dtype=np.complex128)
    if resolve_backend(backend) == "numba":
        return _sort_sheets_nb(E, PERMS)
    return _sort_sheets_np(E)
