"""Spin-1 substrate: operators, the four-knob Hamiltonian family, symmetry
checks and the NV level structure used by the pulse compiler.

All matrices are plain ``numpy`` complex arrays wrapped in :class:`NHMatrix`,
which freezes them (``writeable=False``) so they behave as values.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

PT = "PT"
PSCH = "PseudoChirality"
SYMMETRY_KINDS = (PT, PSCH)

_R2 = 1.0 / math.sqrt(2.0)

# Symmetry operators. U_PT H U_PT^-1 = H*, U_psCh H U_psCh^-1 = -H^dagger.
U_PT = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=complex)
U_PSCH = np.diag([1.0, -1.0, 1.0]).astype(complex)

# The mu-coupling and the x-coupling of the pseudo-chiral-only family.
K_MU = np.array([[0, 1, 0], [-1, 0, -1], [0, 1, 0]], dtype=complex)
K_X = np.array([[0, 1, 0], [1, -1j, 0], [0, 0, 0]], dtype=complex)

SYM_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelParams:
    """The four real knobs of the model plus the time scale ``s`` (rad/s)."""

    gamma: float
    h: float = 0.0
    mu: float = 0.0
    nu: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        vals = (self.gamma, self.h, self.mu, self.nu, self.s)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite model parameter in {vals}")
        if self.s <= 0:
            raise ValueError("time scale s must be positive")

    @property
    def pt_symmetric(self) -> bool:
        return self.nu == 0

    @property
    def pseudo_chiral(self) -> bool:
        # nu*Sz is Hermitian and commutes with U_psCh, so it breaks the
        # relation as well as mu does.
        return self.mu == 0 and self.nu == 0

    def symmetries(self) -> frozenset:
        out = set()
        if self.pt_symmetric:
            out.add(PT)
        if self.pseudo_chiral:
            out.add(PSCH)
        return frozenset(out)


@dataclass(frozen=True)
class NHMatrix:
    """A 3x3 complex matrix plus the symmetries it claims to satisfy.

    Claims are verified on construction; an unfounded claim raises ValueError.
    """

    entries: np.ndarray
    claimed_symmetries: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        a = _frozen(self.entries)
        if a.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        object.__setattr__(self, "entries", a)
        claims = frozenset(self.claimed_symmetries)
        object.__setattr__(self, "claimed_symmetries", claims)
        for kind in claims:
            ok, res = symmetry_residual(a, kind)
            if not ok:
                raise ValueError(f"claimed {kind} symmetry fails (residual {res:.3e})")

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    @property
    def H(self) -> np.ndarray:
        """Conjugate transpose as a plain array."""
        return self.entries.conj().T


def as_array(H) -> np.ndarray:
    """Accept an NHMatrix or anything array-like and return a complex array."""
    if isinstance(H, NHMatrix):
        return H.entries
    return np.asarray(H, dtype=complex)


def spin1_operators():
    """Standard spin-1 matrices (Sx, Sy, Sz) in the basis m = +1, 0, -1."""
    sx = _R2 * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = _R2 * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    herm = frozenset()
    return NHMatrix(sx, herm), NHMatrix(sy, herm), NHMatrix(sz, herm)


_SX, _SY, _SZ = (m.entries for m in spin1_operators())


def hamiltonian_array(gamma, h=0.0, mu=0.0, nu=0.0) -> np.ndarray:
    """Raw matrix of Sx + (i*gamma + nu)Sz + h*Sy + mu*K."""
    return _SX + (1j * gamma + nu) * _SZ + h * _SY + mu * K_MU


def build_hamiltonian(p: ModelParams) -> NHMatrix:
    """Hamiltonian for the knobs in ``p`` with symmetry claims derived from (mu, nu)."""
    return NHMatrix(hamiltonian_array(p.gamma, p.h, p.mu, p.nu), p.symmetries())


def build_x_hamiltonian(gamma: float, h: float, x: float) -> NHMatrix:
    """Pseudo-chiral-only family: Sx + i*gamma*Sz + h*Sy + x*K_X.

    For x != 0 the PT relation fails while pseudo-chirality survives.
    """
    for v in (gamma, h, x):
        if not math.isfinite(v):
            raise ValueError("non-finite input")
    a = _SX + 1j * gamma * _SZ + h * _SY + x * K_X
    claims = {PSCH}
    if x == 0:
        claims.add(PT)
    return NHMatrix(a, frozenset(claims))


def symmetry_residual(H, kind: str, tol: float = SYM_TOL):
    """(holds, residual) for one defining relation; residual is max-norm,
    tolerance is relative to the largest entry magnitude (floor 1)."""
    a = as_array(H)
    if kind == PT:
        defect = U_PT @ a @ U_PT.conj().T - a.conj()
    elif kind == PSCH:
        defect = U_PSCH @ a @ U_PSCH.conj().T + a.conj().T
    else:
        raise ValueError(f"unknown symmetry kind {kind!r}; expected one of {SYMMETRY_KINDS}")
    res = float(np.max(np.abs(defect)))
    scale = max(1.0, float(np.max(np.abs(a))))
    return res < tol * scale, res


def check_symmetry(H, kind: str, tol: float = SYM_TOL):
    """Check U H U^-1 = H* (PT) or U H U^-1 = -H^dagger (pseudo-chirality)."""
    return symmetry_residual(H, kind, tol)


# ---------------------------------------------------------------- NV levels

NV_DEFAULTS = {
    "D_hz": 2.87e9,
    "Q_hz": -4.95e6,
    "A_hz": -2.16e6,
    "B_gauss": 500.0,
    # Configuration constants, not physics under test.
    "gamma_e_hz_per_gauss": 2.8025e6,
    "gamma_n_hz_per_gauss": 307.7,
}

TRANSITIONS = ("12", "23", "13", "45", "56", "46")


@dataclass(frozen=True)
class NVLevels:
    """Six NV levels: m_S = +1, 0, -1 with m_I = 1 (levels 1-3) and
    m_I = 0 (levels 4-6).  Energies and transition frequencies in rad/s.

    At fields where the m_S = -1 level sits above m_S = 0 (true at 500 G)
    the ladder reads E2 < E3 < E1, so omega_13 = omega_12 - omega_23.
    """

    D: float
    Q: float
    A: float
    B: float
    gamma_e: float
    gamma_n: float
    energies: np.ndarray = field(repr=False)
    omega: Mapping[str, float] = field(repr=False)

    def as_config(self) -> dict:
        return {
            "D_hz": self.D,
            "Q_hz": self.Q,
            "A_hz": self.A,
            "B_gauss": self.B,
            "gamma_e_hz_per_gauss": self.gamma_e,
            "gamma_n_hz_per_gauss": self.gamma_n,
        }


def nv_energies(D, Q, A, B, gamma_e, gamma_n) -> np.ndarray:
    """Diagonal of H_NV = 2pi(D Sz^2 + we Sz + Q Iz^2 + wn Iz + A Sz Iz) on levels 1..6."""
    we, wn = gamma_e * B, gamma_n * B
    out = []
    for mi in (1, 0):
        for ms in (1, 0, -1):
            e = D * ms**2 + we * ms + Q * mi**2 + wn * mi + A * ms * mi
            out.append(2 * math.pi * e)
    return np.array(out)


def build_nv_levels(config: Mapping | None = None) -> NVLevels:
    """NV level structure from a config mapping; missing keys use NV_DEFAULTS."""
    cfg = dict(NV_DEFAULTS)
    if config:
        unknown = set(config) - set(NV_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown NV config keys: {sorted(unknown)}")
        cfg.update({k: float(v) for k, v in config.items()})
    E = nv_energies(
        cfg["D_hz"], cfg["Q_hz"], cfg["A_hz"], cfg["B_gauss"],
        cfg["gamma_e_hz_per_gauss"], cfg["gamma_n_hz_per_gauss"],
    )
    E.setflags(write=False)
    e1, e2, e3, e4, e5, e6 = E
    omega = {
        "12": e1 - e2, "23": e3 - e2, "13": e1 - e3,
        "45": e4 - e5, "56": e6 - e5, "46": e4 - e6,
    }
    bad = {k: v for k, v in omega.items() if not v > 0}
    if bad:
        raise ValueError(f"non-positive transition frequencies (rad/s): {bad}")
    return NVLevels(
        D=cfg["D_hz"], Q=cfg["Q_hz"], A=cfg["A_hz"], B=cfg["B_gauss"],
        gamma_e=cfg["gamma_e_hz_per_gauss"], gamma_n=cfg["gamma_n_hz_per_gauss"],
        energies=E, omega=omega,
    )


def load_nv_config(path) -> NVLevels:
    """Read an NV JSON document.  A combined config may nest it under ``"nv"``."""
    with open(path) as fh:
        doc = json.load(fh)
    if "nv" in doc:
        doc = doc["nv"]
    return build_nv_levels(doc)
