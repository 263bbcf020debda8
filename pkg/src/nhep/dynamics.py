"""Non-unitary evolution, population traces, conserved quantities,
steady-state eigenstate filtering and fidelities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import U_PSCH, U_PT, as_array
from .errors import NoConvergence, NormOverflow, SingularShift

NORM_GUARD = 1e12
_R2 = 1.0 / math.sqrt(2.0)

# Fixed probe states for the conserved quantities.
PSI_PT = np.array([0, (1 + 1j) / 2, _R2])
PHI_PT = np.array([(1 + 1j) / 2, _R2, 0])
PSI_PSCH = np.array([0, 1, 0], dtype=complex)
PHI_PSCH = np.array([0, _R2, 1j * _R2])


@dataclass(frozen=True)
class EvolutionTrace:
    """times (s), unnormalized states, N(t) = <psi(t)|psi(t)> and P0(t)."""

    times: np.ndarray
    raw_states: np.ndarray
    norm: np.ndarray
    p0: np.ndarray


@dataclass(frozen=True)
class DensityMatrix3:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError("density matrix must be 3x3")
        if np.abs(m - m.conj().T).max() > 1e-12:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(m) - 1) > 1e-12:
            raise ValueError("density matrix trace != 1")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise ValueError("density matrix not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        m = np.outer(psi, psi.conj())
        return cls((m + m.conj().T) / 2)


def _unit(v, name):
    v = np.asarray(v, dtype=complex).ravel()
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    n = np.linalg.norm(v)
    if abs(n - 1) > 1e-9:
        raise ValueError(f"{name} must be a unit vector (norm {n})")
    return v


def propagators(H, times, s=1.0) -> np.ndarray:
    """exp(-i s H t) for each t, stacked (n, 3, 3)."""
    a = as_array(H)
    t = np.asarray(times, dtype=float).ravel()
    return expm(-1j * s * t[:, None, None] * a[None])


def _guard(norms, ref):
    if np.any(~np.isfinite(norms)) or np.any(norms > NORM_GUARD * ref):
        raise NormOverflow("state norm exceeded 1e12 x initial; shorten t")


def propagate(H, t, psi0) -> np.ndarray:
    """exp(-iHt) psi0 by scaling and squaring; not normalized."""
    if t < 0:
        raise ValueError("t must be >= 0")
    psi0 = np.asarray(psi0, dtype=complex)
    if t == 0:
        return psi0.copy()
    # overflow is reported by the guard
    with np.errstate(over="ignore", invalid="ignore"):
        out = expm(-1j * t * as_array(H)) @ psi0
    _guard(np.array([np.linalg.norm(out)]), np.linalg.norm(psi0))
    return out


def evolve_states(H, psi0, times, s=1.0) -> np.ndarray:
    """States exp(-i s H t) psi0 on a grid, shape (n, 3)."""
    psi0 = np.asarray(psi0, dtype=complex)
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    with np.errstate(over="ignore", invalid="ignore"):
        states = propagators(H, t, s) @ psi0
        norms = np.linalg.norm(states, axis=1)
    states[t == 0] = psi0
    _guard(norms, np.linalg.norm(psi0))
    return states


def population_trace(H, psi, phi, grid, s=1.0) -> EvolutionTrace:
    """P0(t) = |<phi|psi(t)>|^2 / <psi(t)|psi(t)> with psi(t) = exp(-i s H t) psi.

    The normalization is the plain norm-squared N(t) = <psi(t)|psi(t)>.
    """
    psi = _unit(psi, "psi")
    phi = _unit(phi, "phi")
    t = np.asarray(grid, dtype=float)
    states = evolve_states(H, psi, t, s)
    norm = np.einsum("ij,ij->i", states.conj(), states).real
    p0 = np.abs(states @ phi.conj()) ** 2 / norm
    return EvolutionTrace(t, states, norm, np.clip(p0, 0.0, 1.0))


def conserved_pt(H, s1, grid) -> np.ndarray:
    """C_PT(t) = |<phi| exp(+i s1 H* t) U_PT exp(-i s1 H t) |psi>|^2.

    Defined for negative t as well, which is handy for central differences.
    """
    a = as_array(H)
    t = np.asarray(grid, dtype=float).ravel()
    Uf = expm(-1j * s1 * t[:, None, None] * a[None])
    Ub = expm(1j * s1 * t[:, None, None] * a.conj()[None])
    amp = np.einsum("i,nij,jk,nkl,l->n", PHI_PT.conj(), Ub, U_PT, Uf, PSI_PT)
    return np.abs(amp) ** 2


def conserved_psch(H, s2, grid) -> np.ndarray:
    """C_psCh(t) = |<phi| exp(-i s2 H^dagger t) U_psCh exp(-i s2 H t) |psi>|^2."""
    a = as_array(H)
    t = np.asarray(grid, dtype=float).ravel()
    Uf = expm(-1j * s2 * t[:, None, None] * a[None])
    Ub = expm(-1j * s2 * t[:, None, None] * a.conj().T[None])
    amp = np.einsum("i,nij,jk,nkl,l->n", PHI_PSCH.conj(), Ub, U_PSCH, Uf, PSI_PSCH)
    return np.abs(amp) ** 2


# ---------------------------------------------------------------- eigenstates

def _filter_generator(a, which, alpha):
    if which == "top":
        return a
    if which == "bottom":
        return -a
    if which == "middle":
        ev = np.linalg.eigvals(a)
        scale = max(1.0, float(np.abs(ev).max()))
        if np.abs(ev - alpha).min() < 1e-12 * scale:
            raise SingularShift(f"alpha={alpha} coincides with an eigenvalue")
        shifted = a - alpha * np.eye(3)
        try:
            inv = np.linalg.solve(shifted, np.eye(3))
        except np.linalg.LinAlgError as exc:
            raise SingularShift(str(exc)) from None
        return -1j * inv
    raise ValueError(f"which must be top, middle or bottom, not {which!r}")


def filtered_state(H, which="top", alpha=1.5, T=None, tol=1e-10, max_steps=10**6):
    """Steady state of renormalized evolution under g(H).

    g = H (top), -H (bottom) or -i (H - alpha)^-1 (middle).  The state that
    survives is the eigenvector whose g-eigenvalue has the largest imaginary
    part.  Returns (psi, E) with E the matching eigenvalue of H.
    """
    a = as_array(H)
    G = _filter_generator(a, which, alpha)
    gv = np.linalg.eigvals(G)
    im = np.sort(gv.imag)[::-1]
    gap = im[0] - im[1]
    if gap < 1e-9:
        raise NoConvergence(f"degenerate filter: top two Im(g) differ by {gap:.2e}")
    if T is None:
        # ~e^-5 contraction per step, bounded growth of the step propagator
        T = min(5.0 / gap, 50.0 / max(np.linalg.norm(G, 2), 1e-300))
    need = math.log(1.0 / tol) / (gap * T)
    if need > max_steps:
        raise NoConvergence(f"Im gap {gap:.2e} needs ~{need:.1e} steps (cap {max_steps})")
    U = expm(-1j * T * G)
    starts = [np.ones(3, dtype=complex), np.array([1.0, 1.0 + 1e-3j, 1.0 - 2e-3])]
    for psi in starts:
        psi = psi / np.linalg.norm(psi)
        for _ in range(int(max_steps)):
            nxt = U @ psi
            nxt /= np.linalg.norm(nxt)
            ph = np.vdot(nxt, psi)
            ph = ph / abs(ph) if abs(ph) > 0 else 1.0
            change = np.linalg.norm(nxt * ph - psi)
            psi = nxt
            if change < tol:
                break
        else:
            raise NoConvergence("filter did not settle within the step cap")
        E = np.vdot(psi, a @ psi)
        gE = np.vdot(psi, G @ psi)
        # the generic start may be orthogonal to the target; retry perturbed
        if abs(gE.imag - im[0]) < 1e-6 * max(1.0, abs(im[0])):
            return psi, complex(E)
    raise NoConvergence("filtered state does not match the dominant eigenvector")


def extract_eigenstate(H, which="top", alpha=1.5, T=None, tol=1e-10) -> DensityMatrix3:
    """|psi><psi| for the steady state of the g(H) filter."""
    psi, _ = filtered_state(H, which, alpha, T, tol)
    return DensityMatrix3.pure(psi)


def _psd_sqrt(m):
    w, V = np.linalg.eigh(m)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def fidelity(rho_i, rho_j) -> float:
    """[Tr sqrt(sqrt(rho_i) rho_j sqrt(rho_i))]^2, clipped to [0, 1]."""
    a = rho_i.matrix if isinstance(rho_i, DensityMatrix3) else np.asarray(rho_i, dtype=complex)
    b = rho_j.matrix if isinstance(rho_j, DensityMatrix3) else np.asarray(rho_j, dtype=complex)
    sa = _psd_sqrt(a)
    inner = sa @ b @ sa
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    f = float(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def eigenstate_table(H, tol=1e-10):
    """Eigenstates E1, E2, E3 (Re descending, then Im descending) and F_ij.

    The filter for each eigenvalue is picked automatically: ``top`` or
    ``bottom`` when its Im part is the unique extreme, otherwise the
    resolvent filter with a real shift alpha = E + delta placed close to E.
    """
    a = as_array(H)
    ev = np.linalg.eigvals(a)
    order = np.lexsort((-ev.imag.round(10), -ev.real.round(10)))
    ev = ev[order]
    states, filters = [], []
    for k, E in enumerate(ev):
        others = np.delete(ev, k)
        if np.all(E.imag > others.imag + 1e-9):
            which, alpha = "top", None
        elif np.all(E.imag < others.imag - 1e-9):
            which, alpha = "bottom", None
        else:
            gap = float(np.abs(others - E).min())
            if gap < 1e-9:
                raise NoConvergence("coalescing eigenvalues: no filter isolates the state")
            alpha = complex(E.real + 0.25 * gap, E.imag)
            which = "middle"
        psi, _ = filtered_state(a, which, 1.5 if alpha is None else alpha, tol=tol)
        states.append(DensityMatrix3.pure(psi))
        filters.append((which, alpha))
    return _table(ev, states, filters)


def _table(ev, states, filters, degenerate=False):
    F = {
        "F12": fidelity(states[0], states[1]),
        "F13": fidelity(states[0], states[2]),
        "F23": fidelity(states[1], states[2]),
    }
    return {"eigenvalues": ev, "states": states, "filters": filters, "fidelities": F,
            "degenerate": degenerate}


def eigenvector_table(H):
    """Same table from a direct eigendecomposition (no filtering).

    Usable at or near exceptional points, where filtering cannot separate
    the coalescing states; the result is flagged ``degenerate`` when the
    resultant test classifies H as exceptional.
    """
    from .ep import char_poly, depress, is_exceptional, resultants

    a = as_array(H)
    ev, V = np.linalg.eig(a)
    order = np.lexsort((-ev.imag.round(10), -ev.real.round(10)))
    ev, V = ev[order], V[:, order]
    states = [DensityMatrix3.pure(V[:, k]) for k in range(3)]
    c = depress(char_poly(a))
    rp = resultants(c)
    z1, _ = is_exceptional(c.f1, c.f0, rp.r1, rp.r2)
    return _table(ev, states, [("eig", None)] * 3, degenerate=bool(z1))
