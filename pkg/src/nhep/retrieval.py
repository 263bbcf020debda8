"""Parameter retrieval: (mu, nu) from conserved-quantity slopes, (gamma, h)
from two population traces, and Monte-Carlo eigenvalue error bars."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from . import _kernels
from .core import hamiltonian_array
from .dynamics import EvolutionTrace, conserved_psch, conserved_pt
from .ep import model_coeffs
from .errors import DegenerateFit, MatchingAmbiguous, NoConvergence, WindowTooWide
from .readout import MEASUREMENT_SEQS, ReadoutModel, population_matrix, simulate_counts, solve_populations

_R2 = 1.0 / math.sqrt(2.0)

# Initial state / measurement basis pairs for the (gamma, h) fit.
PSI1 = np.array([0, 1, 0], dtype=complex)
PHI1 = np.array([0, 1, 0], dtype=complex)
PSI2 = np.array([-1j * _R2, _R2, 0])
PHI2 = np.array([_R2, _R2, 0], dtype=complex)
PAIRS = ((PSI1, PHI1), (PSI2, PHI2))

S_TRACE = 2 * math.pi * 40e3
S1 = 2 * math.pi * 30e3
S2 = 2 * math.pi * 20e3

SLOPE_WINDOW = 0.1
NOISE_FLOOR = 1e-9


@dataclass(frozen=True)
class ParamEstimate:
    value: float
    sigma: float
    method: str = "trace_fit"

    def __post_init__(self):
        if not math.isfinite(self.value) or not self.sigma >= 0:
            raise ValueError("estimate needs a finite value and sigma >= 0")


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    sigma: float
    rms: float
    n: int


@dataclass(frozen=True)
class EigenvalueStats:
    mean: np.ndarray
    re_std: np.ndarray
    im_std: np.ndarray
    n: int
    seed: int | None
    degenerate: bool = False


# ---------------------------------------------------------------- slopes

def slope_window(s, gamma_bound=1.0, w=SLOPE_WINDOW):
    """Largest t kept by the small-t fit: w / (s max(1, |gamma|))."""
    return w / (s * max(1.0, abs(gamma_bound)))


def fit_slope(t, y, intercept=0.5, order=4, sigma=None, tmax=None, noise_floor=NOISE_FLOOR) -> SlopeFit:
    """Initial slope of y(t) = intercept + a1 t + a2 t^2 + ... (a1 returned).

    The intercept is fixed.  Higher orders absorb curvature so a1 stays
    unbiased over the window.  ``sigma`` (scalar or per-sample) switches to
    inverse-variance weights and sets the noise floor; otherwise the floor is
    ``noise_floor``.  WindowTooWide is raised when the rms residual exceeds
    three times the floor, i.e. the polynomial no longer describes the data.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if tmax is not None:
        keep = t <= tmax * (1 + 1e-12)
        t, y = t[keep], y[keep]
        if sigma is not None and np.ndim(sigma):
            sigma = np.asarray(sigma)[keep]
    n = t.size
    if n < max(3, order + 1):
        raise ValueError(f"need at least {max(3, order + 1)} samples in the window, got {n}")
    scale = np.abs(t).max()
    if scale == 0:
        raise ValueError("samples need nonzero times")
    x = t / scale
    X = np.stack([x**k for k in range(1, order + 1)], axis=1)
    r = y - intercept
    if sigma is None:
        w = np.ones(n)
        floor = noise_floor
    else:
        sg = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
        w = 1.0 / sg**2
        floor = float(np.sqrt(np.mean(sg**2)))
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], r * sw, rcond=None)
    res = r - X @ coef
    rms = float(np.sqrt(np.mean(res**2)))
    if rms > 3 * floor:
        raise WindowTooWide(f"fit residual {rms:.2e} exceeds 3x noise floor {floor:.2e}")
    XtWX = X.T @ (X * w[:, None])
    cov = np.linalg.inv(XtWX)
    dof = max(n - order, 1)
    if sigma is None:
        s2 = float(np.sum(w * res**2) / dof)
    else:
        s2 = 1.0
    return SlopeFit(float(coef[0] / scale), float(math.sqrt(max(s2 * cov[0, 0], 0.0)) / scale), rms, n)


def estimate_nu(t, c_pt, s1=S1, **kw) -> ParamEstimate:
    f = fit_slope(t, c_pt, **kw)
    return ParamEstimate(f.slope / s1, f.sigma / s1, "linear_slope")


def estimate_mu(t, c_psch, s2=S2, **kw) -> ParamEstimate:
    f = fit_slope(t, c_psch, **kw)
    return ParamEstimate(f.slope / (2 * s2), f.sigma / (2 * s2), "linear_slope")


# ---------------------------------------------------------------- traces

def model_p0(gamma, h, mu, nu, psi, phi, times, s=S_TRACE) -> np.ndarray:
    """P0 on a grid starting at 0; uniform grids use powers of one step propagator."""
    H = hamiltonian_array(gamma, h, mu, nu)
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    states = np.empty((t.size, 3), dtype=complex)
    if t.size > 1 and t[0] == 0 and np.allclose(dt, dt[0], rtol=1e-12, atol=0):
        U = expm(-1j * s * dt[0] * H)
        cur = np.asarray(psi, dtype=complex)
        states[0] = cur
        for k in range(1, t.size):
            cur = U @ cur
            states[k] = cur
    else:
        states = expm(-1j * s * t[:, None, None] * H[None]) @ psi
    norm = np.einsum("ij,ij->i", states.conj(), states).real
    return np.abs(states @ np.conj(phi)) ** 2 / norm


def default_grid(n=31, tmax=30e-6):
    return np.linspace(0.0, tmax, n)


def measurement_unitary(phi) -> np.ndarray:
    """A unitary whose second row is phi^dagger, so P0 becomes the level-2 population."""
    phi = np.asarray(phi, dtype=complex)
    B = np.column_stack([phi, np.eye(3)])
    Q, _ = np.linalg.qr(B)
    Q = Q[:, :3] * np.sign(np.vdot(Q[:, 0], phi))  # first column proportional to phi
    U = Q.conj().T
    U[[0, 1]] = U[[1, 0]]
    return U


def noisy_p0(states, phi, model: ReadoutModel, rng):
    """P0 via the count model: U_meas, five noisy sequences, population solve.

    Levels 4-6 carry no population (post-selected system only).  Returns
    (p0, sigma_p0) with sigma from linear error propagation of Poisson noise.
    """
    U = measurement_unitary(phi)
    A = population_matrix(model, MEASUREMENT_SEQS)
    Ainv = np.linalg.inv(A)
    expo = model.window_s * model.averages
    out, sig = [], []
    for st in np.atleast_2d(states):
        v = U @ st
        p3 = np.abs(v) ** 2 / np.vdot(v, v).real
        p = np.concatenate([p3, np.zeros(3)])
        c = np.array([simulate_counts(p, model, sq, rng) for sq in MEASUREMENT_SEQS])
        q = solve_populations(c, model)
        den = q[:3].sum()
        out.append(q[1] / den)
        # delta method: var(C) = C / expo for Poisson rates
        varc = np.append(np.maximum(c, 1.0 / expo) / expo, 0.0)
        cov_q = Ainv @ np.diag(varc) @ Ainv.T
        g = np.zeros(6)
        g[:3] = -q[1] / den**2
        g[1] += 1.0 / den
        sig.append(math.sqrt(max(g @ cov_q @ g, 0.0)))
    return np.array(out), np.array(sig)


def simulate_traces(gamma, h, mu, nu, grid=None, s=S_TRACE, model: ReadoutModel | None = None, rng=None):
    """Two EvolutionTraces for the fixed (psi, phi) pairs; noisy if ``model``
    has shot noise enabled.  Returns (traces, sigmas or None)."""
    t = default_grid() if grid is None else np.asarray(grid, dtype=float)
    H = hamiltonian_array(gamma, h, mu, nu)
    traces, sigmas = [], []
    for psi, phi in PAIRS:
        st = expm(-1j * s * t[:, None, None] * H[None]) @ psi
        norm = np.einsum("ij,ij->i", st.conj(), st).real
        p0 = model_p0(gamma, h, mu, nu, psi, phi, t, s)
        sg = None
        if model is not None and model.shot_noise:
            g = rng if rng is not None else np.random.default_rng(model.seed)
            p0, sg = noisy_p0(st, phi, model, g)
            rng = g
        traces.append(EvolutionTrace(t, st, norm, p0))
        sigmas.append(sg)
    return traces, (None if sigmas[0] is None else sigmas)


def noisy_conserved(values, model: ReadoutModel, rng):
    """Count-model samples of an overlap C read as the level-2 population
    of p = (1 - C, C, 0, 0, 0, 0); returns (samples, sigmas).

    C is not bounded by 1 under non-unitary evolution, so the count model
    runs on the clipped value and only its error is added to C.
    """
    A = population_matrix(model, MEASUREMENT_SEQS)
    Ainv = np.linalg.inv(A)
    expo = model.window_s * model.averages
    out, sig = [], []
    for c_true in np.asarray(values, dtype=float):
        c_val = min(max(c_true, 0.0), 1.0)
        p = np.array([1 - c_val, c_val, 0, 0, 0, 0])
        c = np.array([simulate_counts(p, model, sq, rng) for sq in MEASUREMENT_SEQS])
        q = solve_populations(c, model)
        out.append(c_true + (q[1] - c_val))
        varc = np.append(np.maximum(c, 1.0 / expo) / expo, 0.0)
        sig.append(math.sqrt((Ainv @ np.diag(varc) @ Ainv.T)[1, 1]))
    return np.array(out), np.array(sig)


def _residuals(theta, mu, nu, traces, weights, s):
    g, h = theta
    r = []
    for (psi, phi), tr, w in zip(PAIRS, traces, weights):
        r.append((model_p0(g, h, mu, nu, psi, phi, tr.times, s) - tr.p0) * w)
    return np.concatenate(r)


def fit_gamma_h(traces, mu_hat, nu_hat, init_guess=None, s=S_TRACE, sigmas=None,
                starts=None, xatol=1e-10, fatol=1e-16):
    """Least-squares (gamma, h) from the two traces with (mu, nu) fixed.

    Nelder-Mead from a deterministic 3x3 grid of starts (plus ``init_guess``);
    the best optimum is kept.  Sigmas come from the residual covariance
    s^2 (J^T W J)^-1 with a finite-difference Jacobian, plus the uncertainty
    of the fixed (mu, nu) carried through the linearized optimum shift
    d(gamma, h) = -(J^T J)^-1 J^T J_munu d(mu, nu).
    Returns (ParamEstimate gamma, ParamEstimate h, result info dict).
    """
    if len(traces) != 2:
        raise ValueError("expected two traces (one per psi/phi pair)")
    mu = mu_hat.value if isinstance(mu_hat, ParamEstimate) else float(mu_hat)
    nu = nu_hat.value if isinstance(nu_hat, ParamEstimate) else float(nu_hat)
    if sigmas is None:
        weights = [np.ones(tr.times.size) for tr in traces]
    else:
        weights = [1.0 / np.asarray(sg) for sg in sigmas]
    if starts is None:
        starts = [(g, h) for g in (0.5, 1.0, 1.5) for h in (-0.5, 0.0, 0.5)]
    starts = list(starts)
    if init_guess is not None:
        starts.insert(0, tuple(init_guess))

    def cost(th):
        try:
            r = _residuals(th, mu, nu, traces, weights, s)
        except FloatingPointError:
            return np.inf
        v = float(r @ r)
        return v if math.isfinite(v) else np.inf

    best = None
    with np.errstate(over="ignore", invalid="ignore"):
        # coarse pass from every start, then polish the best basin
        for st in starts:
            res = minimize(cost, np.array(st, dtype=float), method="Nelder-Mead",
                           options={"xatol": 1e-4, "fatol": 1e-8, "maxfev": 600})
            if best is None or res.fun < best.fun:
                best = res
        f_scale = max(float(best.fun), 1e-300)
        best = minimize(cost, best.x, method="Nelder-Mead",
                        options={"xatol": xatol, "fatol": max(fatol, 1e-12 * f_scale), "maxfev": 8000,
                                 "initial_simplex": best.x + np.array([[0, 0], [1e-3, 0], [0, 1e-3]])})
    if best is None or not np.isfinite(best.fun):
        raise NoConvergence("no start produced a finite residual")
    theta = best.x
    r0 = _residuals(theta, mu, nu, traces, weights, s)
    def jac(f, x):
        cols = []
        for k in range(x.size):
            hstep = 1e-6 * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += hstep
            xm[k] -= hstep
            cols.append((f(xp) - f(xm)) / (2 * hstep))
        return np.stack(cols, axis=1)

    J = jac(lambda th: _residuals(th, mu, nu, traces, weights, s), theta)
    JtJ = J.T @ J
    if np.linalg.cond(JtJ) > 1e12:
        raise DegenerateFit("residual Hessian is singular at the optimum")
    dof = max(r0.size - 2, 1)
    s2 = float(r0 @ r0) / dof
    JtJ_inv = np.linalg.inv(JtJ)
    cov = s2 * JtJ_inv
    smn = np.array([getattr(mu_hat, "sigma", 0.0), getattr(nu_hat, "sigma", 0.0)])
    if np.any(smn > 0):
        Jm = jac(lambda x: _residuals(theta, x[0], x[1], traces, weights, s), np.array([mu, nu]))
        G = -JtJ_inv @ J.T @ Jm
        cov = cov + G @ np.diag(smn**2) @ G.T
    sg = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    info = {"cost": float(best.fun), "nfev": int(best.nfev), "chi2_red": s2, "cov": cov}
    return (ParamEstimate(float(theta[0]), float(sg[0]), "trace_fit"),
            ParamEstimate(float(theta[1]), float(sg[1]), "trace_fit"), info)


# ---------------------------------------------------------------- Monte Carlo

def _as_tuple(est):
    if isinstance(est, dict):
        est = [est[k] for k in ("gamma", "h", "mu", "nu")]
    vals = np.array([e.value if isinstance(e, ParamEstimate) else e[0] for e in est], dtype=float)
    sig = np.array([e.sigma if isinstance(e, ParamEstimate) else e[1] for e in est], dtype=float)
    return vals, sig


def eigenvalues_with_errors(estimates, n=10000, seed=0, strict=False, backend=None) -> EigenvalueStats:
    """Monte-Carlo eigenvalue means and spreads from Gaussian parameter draws.

    ``estimates`` is (gamma, h, mu, nu) as ParamEstimates or (value, sigma)
    pairs, or a dict with those keys.  Draw roots are matched to the nominal
    roots by the cheapest of the six permutations.  If two nominal roots are
    within twice the sampling spread, matching is ambiguous: stats are then
    computed on report-ordered roots with ``degenerate=True`` (or
    MatchingAmbiguous is raised when ``strict``).
    """
    if n < 100:
        raise ValueError("n must be >= 100")
    vals, sig = _as_tuple(estimates)
    rng = np.random.default_rng(seed)
    draws = vals[None, :] + sig[None, :] * rng.standard_normal((n, 4))
    f1n, f0n = model_coeffs(*vals)
    nominal = _kernels.cardano_batch(f1n, f0n, backend=backend)[0]
    f1, f0 = model_coeffs(draws[:, 0], draws[:, 1], draws[:, 2], draws[:, 3])
    roots = _kernels.cardano_batch(f1, f0, backend=backend)
    cost = np.abs(roots[:, _kernels.PERMS] - nominal[None, None, :]).sum(axis=2)
    best = np.argmin(cost, axis=1)
    matched = np.take_along_axis(roots, _kernels.PERMS[best][:, :], axis=1)
    spread = float(np.sqrt(np.mean(np.abs(matched - nominal[None]) ** 2, axis=0)).max())
    sep = np.abs(nominal[:, None] - nominal[None, :])[np.triu_indices(3, 1)].min()
    degenerate = bool(sep <= 2 * spread)
    if degenerate:
        if strict:
            raise MatchingAmbiguous(f"nominal roots {sep:.2e} apart vs spread {spread:.2e}")
        matched = roots
    dev = matched - nominal[None]
    mean = nominal + dev.mean(axis=0)
    return EigenvalueStats(mean, dev.real.std(axis=0), dev.imag.std(axis=0), int(n), seed, degenerate)


# ---------------------------------------------------------------- chain

def retrieve(traces, cpt, cpsch, s1=S1, s2=S2, s=S_TRACE, sigmas=None, slope_kw=None,
             n_mc=10000, seed=0):
    """Full chain: nu from C_PT, mu from C_psCh, then (gamma, h), then eigenvalues.

    ``cpt`` and ``cpsch`` are (t, values) or (t, values, sigmas).
    """
    slope_kw = dict(slope_kw or {})

    def unpack(c):
        return (c[0], c[1], c[2] if len(c) > 2 else None)

    t1, v1, e1 = unpack(cpt)
    t2, v2, e2 = unpack(cpsch)
    nu = estimate_nu(t1, v1, s1, sigma=e1, **slope_kw)
    mu = estimate_mu(t2, v2, s2, sigma=e2, **slope_kw)
    g, h, info = fit_gamma_h(traces, mu, nu, s=s, sigmas=sigmas)
    stats = eigenvalues_with_errors((g, h, mu, nu), n=n_mc, seed=seed)
    return {"gamma": g, "h": h, "mu": mu, "nu": nu, "eigenvalues": stats, "fit": info}


def conserved_samples(gamma, h, mu, nu, s1=S1, s2=S2, n=11, w=SLOPE_WINDOW, gamma_bound=2.0):
    """Noiseless C_PT and C_psCh samples on their small-t windows."""
    H = hamiltonian_array(gamma, h, mu, nu)
    t1 = np.linspace(0, slope_window(s1, gamma_bound, w), n)
    t2 = np.linspace(0, slope_window(s2, gamma_bound, w), n)
    return (t1, conserved_pt(H, s1, t1)), (t2, conserved_psch(H, s2, t2))


# Noisy conserved-quantity sampling: a wider window and a quadratic fit trade
# a small curvature bias (<~0.01 in mu, nu) for usable statistics.
NOISY_WINDOW = 0.5
NOISY_ORDER = 2
NOISY_SAMPLES = 61


def noisy_conserved_samples(gamma, h, mu, nu, model: ReadoutModel, rng, s1=S1, s2=S2,
                            n=NOISY_SAMPLES, w=NOISY_WINDOW):
    """Shot-noised (t, C, sigma) triples for C_PT and C_psCh on st <= w."""
    H = hamiltonian_array(gamma, h, mu, nu)
    t1 = np.linspace(0, w / s1, n)
    t2 = np.linspace(0, w / s2, n)
    c1, e1 = noisy_conserved(conserved_pt(H, s1, t1), model, rng)
    c2, e2 = noisy_conserved(conserved_psch(H, s2, t2), model, rng)
    return (t1, c1, e1), (t2, c2, e2)


def simulate_and_retrieve_noisy(gamma, h, mu, nu, seed, model=None, n_mc=2000):
    """One noisy closed-loop run: simulate counts for all signals, retrieve."""
    if model is None:
        model = ReadoutModel(shot_noise=True, seed=seed)
    rng = np.random.default_rng(seed)
    traces, sg = simulate_traces(gamma, h, mu, nu, model=model, rng=rng)
    cpt, cps = noisy_conserved_samples(gamma, h, mu, nu, model, rng)
    return retrieve(traces, cpt, cps, sigmas=sg, slope_kw={"order": NOISY_ORDER}, n_mc=n_mc, seed=seed)
