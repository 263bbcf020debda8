"""Hermitian dilation of the non-unitary evolution.

The system (electron spin, levels 1-3 with the ancilla in |1>, levels 4-6
with the ancilla in |0>) evolves under the block-diagonal Hermitian
generator H_tot = Gamma (+) Lambda, built from the metric

    M(t) = exp(-i s H^dagger t) (1 + eta0^2) exp(i s H t),   eta = sqrt(M - I).

Projecting the 6-level state on the ancilla |-> recovers exp(-i s H t) psi0.
Frames are computed for whole time arrays at once (batched expm / eigh).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import NVLevels, as_array
from .dynamics import EvolutionTrace
from .errors import IllConditioned, MetricNotPositive, StepTooCoarse

NEG_TOL = 1e-12
HERM_TOL = 1e-10

# Ancilla components ordered as (|1>, |0>) to match levels (1-3, 4-6).
# |-> = (|0> - i|1>)/sqrt2; |+> = i(|0> + i|1>)/sqrt2, a phase choice that
# makes Psi = psi (x) |-> + eta psi (x) |+> solve the dilated equation.
ANC_MINUS = np.array([-1j, 1.0]) / math.sqrt(2.0)
ANC_PLUS = np.array([-1.0, 1j]) / math.sqrt(2.0)

CHANNELS = ("MW1", "MW2", "MW3", "MW4", "EF1", "EF2")


@dataclass(frozen=True)
class DilationFrame:
    t: float
    M: np.ndarray
    eta: np.ndarray
    eta_dot: np.ndarray
    Gamma: np.ndarray
    Lambda: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class PulseSchedule:
    """Per-channel amplitude (Hz), phase (rad) and carrier (rad/s) on a grid (s).

    ``d`` (n, 6) keeps the diagonal phases so the rotating-frame blocks can be
    rebuilt exactly.
    """

    times: np.ndarray
    amplitude: dict
    phase: dict
    carrier: dict
    d: np.ndarray
    eta0: float
    s: float


@dataclass(frozen=True)
class DilatedTrace:
    times: np.ndarray
    states: np.ndarray  # (n, 6)
    norm: np.ndarray
    populations: np.ndarray  # (n, 6) after the ancilla readout rotation


def _batch(H, times, s):
    a = as_array(H) * s
    t = np.atleast_1d(np.asarray(times, dtype=float))
    return a, t


def metric_m(H, t, M0_scale, s=1.0) -> np.ndarray:
    """M(t) = exp(-i s H^dagger t) M0_scale exp(i s H t); vectorized over t."""
    if not M0_scale > 1:
        raise ValueError("M0_scale = eta0^2 + 1 must exceed 1")
    a, tt = _batch(H, t, s)
    A = expm(1j * tt[:, None, None] * a[None])
    M = M0_scale * np.conj(np.swapaxes(A, 1, 2)) @ A
    M = 0.5 * (M + np.conj(np.swapaxes(M, 1, 2)))
    return M[0] if np.ndim(t) == 0 else M


def min_metric_margin(H, times, eta0, s=1.0) -> np.ndarray:
    """Smallest eigenvalue of M(t) - I at each time."""
    M = metric_m(H, np.atleast_1d(times), 1 + eta0**2, s)
    return np.linalg.eigvalsh(M).min(axis=1) - 1.0


def dilation_window(H, eta0, s=1.0, tmax=None, n_scan=2001):
    """First time (s) at which M(t) - I loses positivity, or None if it
    survives up to ``tmax``.  A coarse scan is refined by bisection."""
    if tmax is None:
        tmax = 30e-6
    ts = np.linspace(0.0, tmax, n_scan)
    m = min_metric_margin(H, ts, eta0, s)
    bad = np.nonzero(m < -NEG_TOL)[0]
    if bad.size == 0:
        return None
    k = bad[0]
    lo, hi = ts[k - 1], ts[k]
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if min_metric_margin(H, [mid], eta0, s)[0] < -NEG_TOL:
            hi = mid
        else:
            lo = mid
    return hi


def _eta_batch(M, strict=True, times=None):
    w, V = np.linalg.eigh(M - np.eye(3))
    if strict and np.any(w < -NEG_TOL):
        k = int(np.nonzero((w < -NEG_TOL).any(axis=1))[0][0])
        tf = None if times is None else float(np.atleast_1d(times)[k])
        raise MetricNotPositive(
            f"M(t) - I not positive semidefinite (min eig {w[k].min():.3e})"
            + ("" if tf is None else f" at t = {tf:.6e} s"), t_fail=tf)
    lam = np.sqrt(np.clip(w, 0.0, None))
    eta = (V * lam[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
    return eta, lam, V, bool(np.all(w >= -NEG_TOL))


def eta(H, t, eta0, s=1.0, strict=True):
    """(eta, valid): principal Hermitian square root of M(t) - I.

    With ``strict`` (default) an inadmissible time raises MetricNotPositive;
    otherwise the clipped root is returned with valid=False.
    """
    if not eta0 > 0:
        raise ValueError("eta0 must be positive")
    M = metric_m(H, np.atleast_1d(t), 1 + eta0**2, s)
    e, _, _, valid = _eta_batch(M, strict, np.atleast_1d(t))
    return (e[0] if np.ndim(t) == 0 else e), valid


def _eta_dot_batch(a, M, lam, V):
    Md = -1j * np.conj(a.T)[None] @ M + 1j * M @ a[None]
    X = np.conj(np.swapaxes(V, 1, 2)) @ Md @ V
    den = lam[:, :, None] + lam[:, None, :]
    if np.any(den < 1e-12):
        raise IllConditioned("eta has eigenvalue pairs summing below 1e-12")
    return V @ (X / den) @ np.conj(np.swapaxes(V, 1, 2))


def eta_dot(H, t, eta0, s=1.0) -> np.ndarray:
    """d eta / dt from eta eta' + eta' eta = M' solved in the eta eigenbasis."""
    a, tt = _batch(H, t, s)
    M = metric_m(H, tt, 1 + eta0**2, s)
    _, lam, V, _ = _eta_batch(M, True, tt)
    ed = _eta_dot_batch(a, M, lam, V)
    return ed[0] if np.ndim(t) == 0 else ed


def frames(H, times, eta0, s=1.0):
    """Batched dilation data: dict of arrays M, eta, eta_dot, Gamma, Lambda, d."""
    a, tt = _batch(H, times, s)
    M = metric_m(H, tt, 1 + eta0**2, s)
    e, lam, V, _ = _eta_batch(M, True, tt)
    ed = _eta_dot_batch(a, M, lam, V)
    Mi = np.linalg.inv(M)
    A = a[None]
    Lh = (A + (1j * ed + e @ A) @ e) @ Mi
    Gh = 1j * (A @ e - e @ A - 1j * ed) @ Mi
    G, L = Lh + Gh, Lh - Gh
    # residual in units of s (the dimensionless energy scale of H)
    herm = max(np.abs(G - np.conj(np.swapaxes(G, 1, 2))).max(),
               np.abs(L - np.conj(np.swapaxes(L, 1, 2))).max()) / s
    if herm > HERM_TOL * max(1.0, np.abs(as_array(H)).max()):
        raise IllConditioned(f"dilated blocks not Hermitian (residual {herm:.2e})")
    d = np.concatenate([np.diagonal(G, axis1=1, axis2=2).real,
                        np.diagonal(L, axis1=1, axis2=2).real], axis=1)
    return {"t": tt, "M": M, "eta": e, "eta_dot": ed, "Gamma": G, "Lambda": L,
            "d": d, "herm_residual": herm}


def dilation_frame(H, t, eta0, s=1.0) -> DilationFrame:
    f = frames(H, [t], eta0, s)
    return DilationFrame(float(t), f["M"][0], f["eta"][0], f["eta_dot"][0],
                         f["Gamma"][0], f["Lambda"][0], f["d"][0])


def dilated_blocks(H, t, eta0, s=1.0):
    """(Gamma, Lambda) at time t: Gamma = L^ + G^ (ancilla |1>), Lambda = L^ - G^."""
    f = frames(H, np.atleast_1d(t), eta0, s)
    if np.ndim(t) == 0:
        return f["Gamma"][0], f["Lambda"][0]
    return f["Gamma"], f["Lambda"]


# ---------------------------------------------------------------- pulses

def _polar(z, sign, prev_phase, floor=0.0):
    # z = pi * Omega * exp(sign * i * phi); Omega = 0 keeps the previous phase
    amp = np.abs(z) / math.pi
    # round-off sized amplitudes carry no phase information
    amp[amp <= floor] = 0.0
    ph = sign * np.angle(z)
    zero = amp == 0
    for k in np.nonzero(zero)[0]:
        ph[k] = ph[k - 1] if k > 0 else prev_phase
    return amp, np.unwrap(ph)


def pulse_schedule(H, grid, nv: NVLevels, eta0, s=1.0) -> PulseSchedule:
    """Compile the dilated blocks into six channels (amplitude, phase, carrier)."""
    t = np.asarray(grid, dtype=float)
    if t.size == 0:
        raise ValueError("empty time grid")
    f = frames(H, t, eta0, s)
    G, L, d = f["Gamma"], f["Lambda"], f["d"]
    elems = {
        "MW2": (G[:, 0, 1], -1), "MW1": (G[:, 1, 2], +1), "EF1": (G[:, 0, 2], -1),
        "MW4": (L[:, 0, 1], -1), "MW3": (L[:, 1, 2], +1), "EF2": (L[:, 0, 2], -1),
    }
    amp, ph = {}, {}
    floor = 1e-12 * max(float(np.abs(z).max()) for z, _ in elems.values()) / math.pi
    for ch in CHANNELS:
        z, sign = elems[ch]
        amp[ch], ph[ch] = _polar(z, sign, 0.0, floor)
    w = nv.omega
    d1, d2, d3, d4, d5, d6 = d.T
    car = {
        "MW2": w["12"] + d2 - d1, "MW1": w["23"] + d2 - d3, "EF1": w["13"] + d3 - d1,
        "MW4": w["45"] + d5 - d4, "MW3": w["56"] + d5 - d6, "EF2": w["46"] + d6 - d4,
    }
    return PulseSchedule(t, amp, ph, car, d, float(eta0), float(s))


def reconstruct_blocks(sched: PulseSchedule, nv: NVLevels):
    """Rebuild (Gamma, Lambda) from a schedule; inverse of pulse_schedule.

    Off-diagonals come from amplitude and phase; the diagonal from d, after
    checking that carriers minus the bare transition frequencies reproduce
    the d differences.
    """
    n = sched.times.size
    G = np.zeros((n, 3, 3), dtype=complex)
    L = np.zeros((n, 3, 3), dtype=complex)

    def el(ch, sign):
        return math.pi * sched.amplitude[ch] * np.exp(sign * 1j * sched.phase[ch])

    G[:, 0, 1], G[:, 1, 2], G[:, 0, 2] = el("MW2", -1), el("MW1", +1), el("EF1", -1)
    L[:, 0, 1], L[:, 1, 2], L[:, 0, 2] = el("MW4", -1), el("MW3", +1), el("EF2", -1)
    for B in (G, L):
        for i, j in ((0, 1), (1, 2), (0, 2)):
            B[:, j, i] = np.conj(B[:, i, j])
    d = sched.d
    w = nv.omega
    diffs = {
        "MW2": d[:, 1] - d[:, 0], "MW1": d[:, 1] - d[:, 2], "EF1": d[:, 2] - d[:, 0],
        "MW4": d[:, 4] - d[:, 3], "MW3": d[:, 4] - d[:, 5], "EF2": d[:, 5] - d[:, 3],
    }
    bare = {"MW2": "12", "MW1": "23", "EF1": "13", "MW4": "45", "MW3": "56", "EF2": "46"}
    carrier_err = max(float(np.abs(sched.carrier[c] - w[bare[c]] - diffs[c]).max()) for c in CHANNELS)
    for k in range(3):
        G[:, k, k] = d[:, k]
        L[:, k, k] = d[:, 3 + k]
    return G, L, carrier_err


# ---------------------------------------------------------------- evolution

def initial_dilated_state(psi0, eta0) -> np.ndarray:
    """Psi(0) = psi0 (x) |-> + eta0 psi0 (x) |+>, normalized; 6-vector."""
    psi0 = np.asarray(psi0, dtype=complex)
    v = np.kron(ANC_MINUS, psi0) + eta0 * np.kron(ANC_PLUS, psi0)
    return v / np.linalg.norm(v)


def project(states6):
    """(|->-component, |+>-component) of 6-level states, each (n, 3)."""
    s = np.atleast_2d(states6)
    up, dn = s[:, :3], s[:, 3:]
    minus = np.conj(ANC_MINUS[0]) * up + np.conj(ANC_MINUS[1]) * dn
    plus = np.conj(ANC_PLUS[0]) * up + np.conj(ANC_PLUS[1]) * dn
    return minus, plus


def _integrate(H, psi6, t_out, eta0, s, step):
    """Midpoint-sampled piecewise-constant stepping, sampled at t_out."""
    t_out = np.asarray(t_out, dtype=float)
    nsub = np.maximum(1, np.ceil(np.diff(t_out) / step - 1e-9).astype(int))
    edges = [t_out[:1]]
    for k, m in enumerate(nsub):
        edges.append(np.linspace(t_out[k], t_out[k + 1], m + 1)[1:])
    edges = np.concatenate(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    dts = np.diff(edges)
    if mids.size == 0:
        return psi6[None].copy(), 0.0
    f = frames(H, mids, eta0, s)
    UG = expm(-1j * dts[:, None, None] * f["Gamma"])
    UL = expm(-1j * dts[:, None, None] * f["Lambda"])
    out = np.empty((t_out.size, 6), dtype=complex)
    out[0] = psi6
    cur = psi6.copy()
    k_out = 1
    bounds = np.cumsum(nsub)
    for k in range(mids.size):
        cur = np.concatenate([UG[k] @ cur[:3], UL[k] @ cur[3:]])
        if k + 1 == bounds[k_out - 1]:
            out[k_out] = cur
            k_out += 1
    return out, f["herm_residual"]


def evolve_dilated(H, psi0, eta0, grid, step, s=1.0, check=True):
    """Integrate the dilated 6-level dynamics and project on the ancilla |->.

    Returns (DilatedTrace, EvolutionTrace); the projected trace holds the
    unnormalized system state exp(-i s H t) psi0 (the initial normalization
    factor is undone).  Raises MetricNotPositive before integrating when the
    grid leaves the dilation window, and StepTooCoarse when halving ``step``
    moves the endpoint by more than 1e-6.
    """
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    spacing = np.diff(t).min() if t.size > 1 else np.inf
    if not 0 < step <= spacing * (1 + 1e-12):
        raise ValueError("step must be positive and no larger than the grid spacing")
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-9:
        raise ValueError("psi0 must be a unit vector")
    # fail fast with the first inadmissible time
    tw = dilation_window(H, eta0, s, tmax=t[-1]) if t[-1] > 0 else None
    if tw is not None:
        raise MetricNotPositive(
            f"dilation window exceeded: M(t) - I loses positivity at t = {tw:.6e} s "
            f"for eta0 = {eta0:g}", t_fail=tw)
    psi6 = initial_dilated_state(psi0, eta0)
    states, _ = _integrate(H, psi6, t, eta0, s, step)
    if check and t.size > 1:
        half, _ = _integrate(H, psi6, t[[0, -1]], eta0, s, step / 2)
        coarse, _ = _integrate(H, psi6, t[[0, -1]], eta0, s, step)
        diff = np.linalg.norm(half[-1] - coarse[-1])
        if diff > 1e-6:
            raise StepTooCoarse(f"halving the step moves the endpoint by {diff:.2e}")
    norm6 = np.linalg.norm(states, axis=1)
    minus, plus = project(states)
    pops = np.concatenate([np.abs(minus) ** 2, np.abs(plus) ** 2], axis=1)
    scale = math.sqrt(1 + eta0**2)
    raw = minus * scale
    n3 = np.einsum("ij,ij->i", raw.conj(), raw).real
    p0 = pops[:, 1] / pops[:, :3].sum(axis=1)
    dil = DilatedTrace(t, states, norm6, pops)
    return dil, EvolutionTrace(t, raw, n3, np.clip(p0, 0.0, 1.0))
