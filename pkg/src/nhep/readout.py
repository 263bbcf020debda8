"""Fluorescence-count model for the six NV levels and its inversions.

Counts for a pulse sequence m are C_m = L^T M_m p, where M_m permutes level
populations (each pi pulse swaps two levels) and L holds per-level
photoluminescence rates.  Shot noise, when enabled, is Poisson on the photon
number L^T M_m p * window * averages.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NoSolution, SingularSystem

ALLOWED = ("12", "23", "25", "36", "45")

# Synthetic rates (counts/s).  m_S = 0 levels bright, m_S = +-1 dim, with
# nuclear-state dependent contrast so the five-sequence solve is well posed.
DEFAULT_L = tuple(150000.0 * np.array([0.65, 1.00, 0.70, 0.60, 0.90, 0.75]))
DEFAULT_WINDOW_S = 300e-9

# Sequences as tuples of transitions in application order.
IDENTITY = ()
POLARIZATION_SEQS = ((), ("23",), ("25",), ("23", "36"), ("23", "25"))
NORMALIZATION_SEQS = ((), ("12",), ("23",), ("23", "36"), ("25",), ("25", "45"))
MEASUREMENT_SEQS = ((), ("12",), ("23",), ("36", "23"), ("25",))


@dataclass(frozen=True)
class ReadoutModel:
    L: tuple = DEFAULT_L
    S: float = 0.98
    shot_noise: bool = False
    averages: int = 1_000_000
    seed: int | None = None
    window_s: float = DEFAULT_WINDOW_S

    def __post_init__(self):
        L = tuple(float(x) for x in self.L)
        if len(L) != 6 or not all(x > 0 for x in L):
            raise ValueError("L must hold six positive rates")
        object.__setattr__(self, "L", L)
        if not 0 < self.S <= 1:
            raise ValueError("S must lie in (0, 1]")
        if self.averages < 1 or self.window_s <= 0:
            raise ValueError("averages and window must be positive")
        if self.shot_noise and self.seed is None:
            raise ValueError("a seed is required when shot noise is enabled")

    @property
    def rates(self) -> np.ndarray:
        return np.array(self.L)

    def to_json(self) -> dict:
        d = asdict(self)
        return {"L_cps": list(d["L"]), "S": d["S"], "shot_noise": d["shot_noise"],
                "averages": d["averages"], "seed": d["seed"], "readout_window_s": d["window_s"]}

    @classmethod
    def from_json(cls, doc: dict) -> "ReadoutModel":
        return cls(L=tuple(doc.get("L_cps", DEFAULT_L)), S=doc.get("S", 0.98),
                   shot_noise=bool(doc.get("shot_noise", False)),
                   averages=int(doc.get("averages", 1_000_000)), seed=doc.get("seed"),
                   window_s=float(doc.get("readout_window_s", DEFAULT_WINDOW_S)))


def load_readout(path) -> ReadoutModel:
    with open(path) as fh:
        doc = json.load(fh)
    return ReadoutModel.from_json(doc.get("readout", doc))


def _check_seq(seq):
    seq = tuple(str(x).replace("R", "") for x in seq)
    for tr in seq:
        if tr not in ALLOWED:
            raise ValueError(f"transition {tr!r} not in {ALLOWED}")
    return seq


def sequence_permutation(seq) -> np.ndarray:
    """6x6 permutation for a pulse sequence; later pulses multiply on the left."""
    M = np.eye(6)
    for tr in _check_seq(seq):
        i, j = int(tr[0]) - 1, int(tr[1]) - 1
        P = np.eye(6)
        P[[i, j]] = P[[j, i]]
        M = P @ M
    return M


def _rng(model, rng):
    if rng is not None:
        return rng
    return np.random.default_rng(model.seed)


def expected_counts(p, model: ReadoutModel, seq) -> float:
    return float(model.rates @ sequence_permutation(seq) @ np.asarray(p, dtype=float))


def simulate_counts(p, model: ReadoutModel, seq, rng=None) -> float:
    """Count rate L^T M p (counts/s); a Poisson draw when shot noise is on.

    With noise the returned value is the rate estimate N / (window * averages)
    so noisy and noiseless outputs share units.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (6,) or np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("p must be six non-negative populations summing to 1")
    mean = expected_counts(p, model, seq)
    if not model.shot_noise:
        return mean
    expo = model.window_s * model.averages
    return float(_rng(model, rng).poisson(mean * expo)) / expo


def simulate_all(p, model, seqs, rng=None) -> np.ndarray:
    g = _rng(model, rng) if model.shot_noise else None
    return np.array([simulate_counts(p, model, sq, g) for sq in seqs])


# ---------------------------------------------------------------- polarization

@dataclass(frozen=True)
class PolarizationSolution:
    S: float
    L: dict = field(default_factory=dict)  # level -> rate, levels 2, 3, 5, 6
    condition: float = float("nan")


def polarization_counts(model: ReadoutModel, rng=None) -> np.ndarray:
    """Counts for the five polarization sequences under the reduced model
    (populations S on level 2 and (1-S)/2 on level 3; level 1 is not
    tracked), i.e. the model whose equations solve_polarization inverts."""
    L = model.rates
    S, b = model.S, (1 - model.S) / 2
    v = np.array([L[1] * S + L[2] * b, L[2] * S + L[1] * b, L[4] * S + L[2] * b,
                  L[5] * S + L[1] * b, L[2] * S + L[4] * b])
    if not model.shot_noise:
        return v
    expo = model.window_s * model.averages
    return _rng(model, rng).poisson(v * expo) / expo


def _pol_jacobian(S, L2, L3, L5, L6):
    b = (1 - S) / 2
    # rows: equations 1..5, cols: L2, L3, L5, L6, S
    return np.array([
        [S, b, 0, 0, L2 - L3 / 2],
        [b, S, 0, 0, L3 - L2 / 2],
        [0, b, S, 0, L5 - L3 / 2],
        [b, 0, 0, S, L6 - L2 / 2],
        [0, S, b, 0, L3 - L5 / 2],
    ])


def solve_polarization(counts, seqs=POLARIZATION_SEQS, tol=1e-9, strict=True) -> PolarizationSolution:
    """Solve the five polarization equations for S and L2, L3, L5, L6.

    Eliminating the rates gives S (C2 - C5) = (1 - S)/2 (C1 - C3), which is
    linear in S; the rates then follow from 2x2 and scalar solves.  With
    ``strict=False`` the raw estimate is returned even if noise pushes it
    outside (1/3, 1] (useful for Monte-Carlo spreads).
    """
    if tuple(map(tuple, seqs)) != POLARIZATION_SEQS:
        raise ValueError("solve_polarization expects the five standard sequences")
    C1, C2, C3, C4, C5 = (float(c) for c in counts)
    den = 2 * (C2 - C5) + (C1 - C3)
    scale = max(abs(C1), abs(C2), abs(C3), 1e-300)
    if abs(den) < 1e-14 * scale:
        raise NoSolution("polarization equations are degenerate (L2 == L5)")
    S = (C1 - C3) / den
    if not strict:
        return PolarizationSolution(float(S), {}, float("nan"))
    if not (1 / 3 < S <= 1 + tol):
        raise NoSolution(f"polarization solve gave S = {S:.6g} outside (1/3, 1]")
    S = min(S, 1.0)
    b = (1 - S) / 2
    det = S * S - b * b
    L2 = (S * C1 - b * C2) / det
    L3 = (S * C2 - b * C1) / det
    L5 = (C3 - b * L3) / S
    L6 = (C4 - b * L2) / S
    rates = {2: L2, 3: L3, 5: L5, 6: L6}
    if min(rates.values()) <= 0:
        raise NoSolution("polarization solve produced non-positive rates")
    resid = abs(S * L3 + b * L5 - C5)
    if resid > 1e-6 * scale + tol:
        raise NoSolution(f"inconsistent counts (residual {resid:.3e})")
    cond = float(np.linalg.cond(_pol_jacobian(S, L2, L3, L5, L6)))
    return PolarizationSolution(float(S), rates, cond)


# ---------------------------------------------------------------- normalization

def initial_populations(S) -> np.ndarray:
    """rho_ini = (1-S)/2 |1> + S |2> + (1-S)/2 |3> as a population vector."""
    return np.array([(1 - S) / 2, S, (1 - S) / 2, 0, 0, 0])


def solve_rates(counts6, S, seqs=NORMALIZATION_SEQS) -> np.ndarray:
    """Per-level rates L from the six normalization sequences given S."""
    p = initial_populations(S)
    A = np.array([sequence_permutation(sq) @ p for sq in seqs])
    if np.linalg.cond(A) > 1e12:
        raise SingularSystem("normalization sequences do not determine L")
    return np.linalg.solve(A, np.asarray(counts6, dtype=float))


# ---------------------------------------------------------------- populations

def population_matrix(model: ReadoutModel, seqs=MEASUREMENT_SEQS) -> np.ndarray:
    rows = [model.rates @ sequence_permutation(sq) for sq in seqs]
    return np.vstack(rows + [np.ones(6)])


def solve_populations(counts, model: ReadoutModel, seqs=MEASUREMENT_SEQS) -> np.ndarray:
    """Six populations from five sequence counts plus sum(p) = 1."""
    A = population_matrix(model, seqs)
    # rates scale the first five rows; compare conditioning after row scaling
    An = A / np.abs(A).max(axis=1, keepdims=True)
    if np.linalg.matrix_rank(An, tol=1e-10) < 6 or np.linalg.cond(An) > 1e12:
        raise SingularSystem("rates make the measurement equations dependent")
    rhs = np.append(np.asarray(counts, dtype=float), 1.0)
    return np.linalg.solve(A, rhs)


def p0_from_populations(p) -> float:
    p = np.asarray(p, dtype=float)
    return float(p[..., 1] / p[..., :3].sum(axis=-1))
