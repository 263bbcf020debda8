"""Characteristic-polynomial algebra and exceptional-point analysis.

EP order is decided by the resultant pair (r1, r2) of the monic cubic
det(lambda I - H) = lambda^3 + f2 lambda^2 + f1 lambda + f0, never by
eigenvector rank tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ModelParams, as_array, hamiltonian_array
from .errors import InsufficientSamples, OffLocus, OnLocus

SQRT2 = math.sqrt(2.0)
EP_TOL = 1e-8

REGULAR, EP2, EP3 = "Regular", "EP2", "EP3"


@dataclass(frozen=True)
class CubicCoeffs:
    f3: complex
    f2: complex
    f1: complex
    f0: complex

    def as_list(self):
        return [self.f3, self.f2, self.f1, self.f0]


@dataclass(frozen=True)
class ResultantPair:
    r1: complex
    r2: complex


@dataclass(frozen=True)
class EPClass:
    kind: str
    location: tuple
    residuals: tuple


def char_poly(H) -> CubicCoeffs:
    """Monic coefficients of det(lambda I - H) from trace invariants."""
    a = as_array(H)
    tr = np.trace(a)
    tr2 = np.trace(a @ a)
    det = np.linalg.det(a)
    return CubicCoeffs(1.0 + 0j, complex(-tr), complex(0.5 * (tr * tr - tr2)), complex(-det))


def model_coeffs(gamma, h=0.0, mu=0.0, nu=0.0):
    """Closed-form (f1, f0) for the four-knob family; works on arrays."""
    gamma = np.asarray(gamma, dtype=float)
    h = np.asarray(h, dtype=float)
    f1 = gamma**2 - 1 - h**2 - 2j * gamma * nu - nu**2 + 2 * mu**2
    f0 = 2 * SQRT2 * mu * h * (gamma - 1j * nu)
    return f1, f0


def depress(c: CubicCoeffs) -> CubicCoeffs:
    """Shift lambda -> x - f2/3 to remove the quadratic term."""
    f3, f2, f1, f0 = (complex(v) for v in c.as_list())
    if f3 != 1:
        f2, f1, f0 = f2 / f3, f1 / f3, f0 / f3
    b = f2 / 3.0
    p = f1 - f2 * f2 / 3.0
    q = f0 - f1 * b + 2.0 * b**3
    return CubicCoeffs(1.0 + 0j, 0j, p, q)


def sylvester_matrix(p, q) -> np.ndarray:
    """Sylvester matrix of two coefficient lists (highest degree first)."""
    p = np.trim_zeros(np.asarray(p, dtype=complex), "f")
    q = np.trim_zeros(np.asarray(q, dtype=complex), "f")
    if p.size == 0 or q.size == 0:
        raise ValueError("zero polynomial has no resultant")
    m, n = p.size - 1, q.size - 1
    if m < 1 or n < 1:
        raise ValueError("both polynomials need degree >= 1")
    S = np.zeros((m + n, m + n), dtype=complex)
    for i in range(n):
        S[i, i:i + m + 1] = p
    for i in range(m):
        S[n + i, i:i + n + 1] = q
    return S


def sylvester_resultant(p, q) -> complex:
    """Resultant as the determinant of the Sylvester matrix."""
    return complex(np.linalg.det(sylvester_matrix(p, q)))


def resultants(c: CubicCoeffs) -> ResultantPair:
    """(4 f1^3 + 27 f0^2, 36 f0) for a monic depressed cubic.

    r1 equals Res(P, P').  The Sylvester determinant Res(P', P'') of a
    depressed cubic is 36*f1, not 36*f0; both pairs vanish together exactly
    when f1 = f0 = 0, so r2 = 36 f0 gives the same EP3 test.
    """
    if abs(c.f2) > 1e-14 * max(1.0, abs(c.f1), abs(c.f0)) or c.f3 != 1:
        c = depress(c)
    f1, f0 = complex(c.f1), complex(c.f0)
    return ResultantPair(4 * f1**3 + 27 * f0**2, 36 * f0)


def eigenvalues_cubic(c: CubicCoeffs, backend=None) -> np.ndarray:
    """Three roots of x^3 + f1 x + f0 (Cardano), Re descending then Im descending."""
    if abs(c.f2) > 0 or c.f3 != 1:
        c = depress(c)
    return _kernels.cardano_batch(c.f1, c.f0, backend=backend)[0]


def eigenvalues_params(gamma, h=0.0, mu=0.0, nu=0.0, backend=None) -> np.ndarray:
    """Batched Cardano roots for the model family; shape broadcast(...) + (3,)."""
    f1, f0 = model_coeffs(gamma, h, mu, nu)
    E = _kernels.cardano_batch(f1, f0, backend=backend)
    return E.reshape(np.shape(f1) + (3,))


def companion_roots(c: CubicCoeffs) -> np.ndarray:
    """Reference roots from the companion-matrix eigensolver."""
    return np.roots([complex(v) for v in c.as_list()])


def is_exceptional(f1, f0, r1, r2, tol=EP_TOL):
    """Relative-scaled zero tests for (r1, r2)."""
    z1 = abs(r1) < tol * (1 + abs(f1) ** 3 + abs(f0) ** 2)
    z2 = abs(r2) < tol * 36 * (1 + abs(f0))
    return z1, z2


def classify_point(p: ModelParams, tol: float = EP_TOL) -> EPClass:
    """Regular / EP2 / EP3 from the resultant pair at ``p``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    c = char_poly(hamiltonian_array(p.gamma, p.h, p.mu, p.nu))
    c = depress(c)
    rp = resultants(c)
    z1, z2 = is_exceptional(c.f1, c.f0, rp.r1, rp.r2, tol)
    kind = EP3 if (z1 and z2) else EP2 if z1 else REGULAR
    return EPClass(kind, (p.gamma, p.h), (abs(rp.r1), abs(rp.r2)))


# ---------------------------------------------------------------- locus

def _segments_1d(xs, vals):
    s = np.sign(vals)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    return idx


def trace_ep3_locus(mu, nu, region=((-2.0, 2.0), (-2.0, 2.0)), resolution=400,
                    tol=EP_TOL, backend=None):
    """EP3 points (gamma, h) inside ``region`` = ((g_lo, g_hi), (h_lo, h_hi)).

    f0 = 0 forces mu*h = 0 (gamma = nu = 0 is trivial), so for mu != 0 the
    scan runs on the line h = 0; for mu = 0 it covers the whole rectangle
    along rows and columns.  Sign changes of Re r1 are bisected, and only
    candidates passing the full two-resultant test are kept.  gamma = 0 is
    excluded: there H is Hermitian-like up to nu and no EP exists.
    """
    (g_lo, g_hi), (h_lo, h_hi) = region
    if not all(math.isfinite(v) for v in (g_lo, g_hi, h_lo, h_hi)):
        raise ValueError("region must be finite")
    n = int(resolution)
    if n < 2:
        raise ValueError("resolution must be >= 2")
    gs = np.linspace(g_lo, g_hi, n)
    ga, ha, gb, hb = [], [], [], []
    if mu != 0:
        if not (h_lo <= 0.0 <= h_hi):
            return []
        v = _kernels.re_r1_np(gs, 0.0, mu, nu)
        idx = _segments_1d(gs, v)
        ga.append(gs[idx]); gb.append(gs[idx + 1])
        ha.append(np.zeros(idx.size)); hb.append(np.zeros(idx.size))
    else:
        hs = np.linspace(h_lo, h_hi, n)
        G, Hh = np.meshgrid(gs, hs, indexing="ij")
        V = _kernels.re_r1_np(G, Hh, mu, nu)
        s = np.sign(V)
        # crossings along gamma (axis 0) and along h (axis 1)
        i, j = np.nonzero(s[:-1, :] * s[1:, :] < 0)
        ga.append(G[i, j]); ha.append(Hh[i, j]); gb.append(G[i + 1, j]); hb.append(Hh[i + 1, j])
        i, j = np.nonzero(s[:, :-1] * s[:, 1:] < 0)
        ga.append(G[i, j]); ha.append(Hh[i, j]); gb.append(G[i, j + 1]); hb.append(Hh[i, j + 1])
        # exact zeros on grid nodes
        i, j = np.nonzero(V == 0)
        ga.append(G[i, j]); ha.append(Hh[i, j]); gb.append(G[i, j]); hb.append(Hh[i, j])
    ga, ha, gb, hb = (np.concatenate(x) if x else np.empty(0) for x in (ga, ha, gb, hb))
    if ga.size == 0:
        return []
    g, h = _kernels.bisect_re_r1(ga, ha, gb, hb, mu, nu, backend=backend)
    f1, f0 = model_coeffs(g, h, mu, nu)
    r1 = 4 * f1**3 + 27 * f0**2
    r2 = 36 * f0
    z1 = np.abs(r1) < tol * (1 + np.abs(f1) ** 3 + np.abs(f0) ** 2)
    z2 = np.abs(r2) < tol * 36 * (1 + np.abs(f0))
    keep = z1 & z2 & (np.abs(g) > 1e-9)
    pts = np.stack([g[keep], h[keep]], axis=1)
    if pts.size == 0:
        return []
    # scans along rows and columns can hit the same point twice
    key = np.round(pts, 9)
    _, first = np.unique(key, axis=0, return_index=True)
    pts = pts[np.sort(first)]
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    return [(float(a), float(b)) for a, b in pts[order]]


def locus_residuals(points, mu=0.0, nu=0.0) -> np.ndarray:
    if len(points) == 0:
        return np.empty(0)
    g, h = np.asarray(points, dtype=float).T
    f1, f0 = model_coeffs(g, h, mu, nu)
    return np.abs(4 * f1**3 + 27 * f0**2)


# ---------------------------------------------------------------- sheets

@dataclass(frozen=True)
class SheetGrid:
    gammas: np.ndarray
    hs: np.ndarray
    sheets: np.ndarray  # (n_gamma, n_h, 3) complex
    branch_flags: np.ndarray  # (n_gamma, n_h) int

    @property
    def axes(self):
        return self.gammas, self.hs


def sweep_sheets(region, resolution, mu=0.0, nu=0.0, backend=None) -> SheetGrid:
    """Eigenvalues on a (gamma, h) grid, continuity-sorted into three sheets.

    ``resolution`` is an int or a (n_gamma, n_h) pair.  A degenerate axis
    (lo == hi) with one node is allowed, which gives a single-node grid.
    """
    (g_lo, g_hi), (h_lo, h_hi) = region
    if np.isscalar(resolution):
        ng = nh = int(resolution)
    else:
        ng, nh = (int(r) for r in resolution)
    for lo, hi, n in ((g_lo, g_hi, ng), (h_lo, h_hi, nh)):
        if n < 1 or (n == 1 and lo != hi) or (n >= 2 and not hi > lo):
            raise ValueError("need >= 2 nodes per axis (or 1 node on a zero-width axis)")
    gs = np.linspace(g_lo, g_hi, ng)
    hs = np.linspace(h_lo, h_hi, nh)
    G, Hh = np.meshgrid(gs, hs, indexing="ij")
    E = eigenvalues_params(G, Hh, mu, nu, backend=backend)
    sheets, flags = _kernels.sort_sheets(E, backend=backend)
    return SheetGrid(gs, hs, sheets, flags)


# ---------------------------------------------------------------- dispersion

@dataclass(frozen=True)
class DispersionScan:
    anchor: tuple
    mu_samples: np.ndarray
    splittings: np.ndarray
    fitted_exponent: float
    eps_plus: np.ndarray
    eps_minus: np.ndarray


def dispersion_scan(h0, gamma0, mu_list) -> DispersionScan:
    """Eigenvalue splitting versus mu at an EL3 anchor and its log-log slope.

    eps_pm = -f0/2 +- sqrt(f0^2/4 + f1^3/27) are the Cardano radicands.
    """
    if abs(gamma0**2 - 1 - h0**2) > 1e-9:
        raise OffLocus(f"anchor (h={h0}, gamma={gamma0}) is not on gamma^2 = 1 + h^2")
    mus = np.asarray(mu_list, dtype=float).ravel()
    if mus.size < 2:
        raise InsufficientSamples("need at least two mu samples to fit an exponent")
    if np.any(mus <= 0):
        raise ValueError("mu samples must be positive")
    f1, f0 = model_coeffs(np.full(mus.shape, gamma0), np.full(mus.shape, h0), mus, 0.0)
    E = _kernels.cardano_batch(f1, f0)
    d = np.abs(E[:, :, None] - E[:, None, :]).max(axis=(1, 2))
    rad = np.sqrt(f0**2 / 4 + f1**3 / 27)
    slope = np.polyfit(np.log(mus), np.log(d), 1)[0]
    return DispersionScan((h0, gamma0), mus, d, float(slope), -f0 / 2 + rad, -f0 / 2 - rad)


# ---------------------------------------------------------------- invariant

def topological_invariant(pt_plus, pt_minus, mu=0.0, nu=0.0, tol=EP_TOL) -> int:
    """W = (sgn Re r1(pt_plus) - sgn Re r1(pt_minus)) / 2."""
    signs = []
    for g, h in (pt_plus, pt_minus):
        f1, f0 = model_coeffs(g, h, mu, nu)
        r1 = complex(4 * f1**3 + 27 * f0**2)
        if abs(r1.real) <= tol * (1 + abs(f1) ** 3 + abs(f0) ** 2):
            raise OnLocus(f"point (gamma={g}, h={h}) lies on the exceptional locus")
        signs.append(1 if r1.real > 0 else -1)
    return (signs[0] - signs[1]) // 2
