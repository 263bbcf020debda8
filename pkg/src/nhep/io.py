"""CSV / JSON serialization for every file the CLI reads or writes.

Floats are written with 17 significant digits so CSV round-trips to within
one ulp; JSON uses Python's shortest repr and round-trips exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .dilation import CHANNELS, PulseSchedule
from .dynamics import EvolutionTrace

FMT = "%.17g"

SCHEMAS = {
    "sheet_grid.csv": ["gamma", "h", "re_E1", "im_E1", "re_E2", "im_E2", "re_E3", "im_E3", "branch_flag"],
    "locus.csv": ["gamma", "h", "r1_residual"],
    "evolution_trace.csv": ["t_us", "p0", "norm", "re_c1", "im_c1", "re_c2", "im_c2", "re_c3", "im_c3"],
    "pulse_schedule.csv": ["t_us"] + [f"{c}_{q}" for c in CHANNELS for q in ("Omega_kHz", "phi_rad", "omega_MHz")],
    "pulse_schedule.json (sidecar)": ["eta0", "s_rad_per_s", "nv_levels", "carrier_check_rad_per_s"],
    "conserved.csv": ["t_us", "value", "sigma (optional)"],
    "dispersion.csv": ["mu", "splitting", "re_eps_plus", "im_eps_plus", "re_eps_minus", "im_eps_minus"],
    "fidelity_table.csv": ["pair", "fidelity"],
    "estimates.json": {"gamma": {"value": "float", "sigma": "float"}, "h": "...", "mu": "...", "nu": "...",
                       "eigenvalues": [{"re": "float", "im": "float", "re_std": "float", "im_std": "float"}]},
    "config.json": {
        "nv": {"D_hz": "float", "Q_hz": "float", "A_hz": "float", "B_gauss": "float",
               "gamma_e_hz_per_gauss": "float", "gamma_n_hz_per_gauss": "float"},
        "readout": {"L_cps": "[6 floats]", "S": "float", "shot_noise": "bool", "averages": "int",
                    "seed": "int|null", "readout_window_s": "float"},
    },
}


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return FMT % float(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    return buf.getvalue()


def read_csv(path):
    """(header, float array) from a numeric CSV file."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[float(x) for x in r] for r in rd if r]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def json_text(doc) -> str:
    return json.dumps(doc, indent=2, default=_json_default) + "\n"


# ---------------------------------------------------------------- products

def sheet_rows(grid):
    rows = []
    for i, g in enumerate(grid.gammas):
        for j, h in enumerate(grid.hs):
            E = grid.sheets[i, j]
            rows.append([g, h, E[0].real, E[0].imag, E[1].real, E[1].imag, E[2].real, E[2].imag,
                         int(grid.branch_flags[i, j])])
    return SCHEMAS["sheet_grid.csv"], rows


def trace_rows(tr: EvolutionTrace):
    rows = []
    for k in range(tr.times.size):
        c = tr.raw_states[k]
        rows.append([tr.times[k] * 1e6, tr.p0[k], tr.norm[k],
                     c[0].real, c[0].imag, c[1].real, c[1].imag, c[2].real, c[2].imag])
    return SCHEMAS["evolution_trace.csv"], rows


def read_trace(path) -> EvolutionTrace:
    header, a = read_csv(path)
    if header != SCHEMAS["evolution_trace.csv"]:
        raise ValueError(f"{path}: not an evolution-trace CSV (header {header})")
    states = a[:, 3::2] + 1j * a[:, 4::2]
    return EvolutionTrace(a[:, 0] * 1e-6, states, a[:, 2], a[:, 1])


def schedule_rows(sch: PulseSchedule):
    rows = []
    for k in range(sch.times.size):
        r = [sch.times[k] * 1e6]
        for c in CHANNELS:
            r += [sch.amplitude[c][k] / 1e3, sch.phase[c][k], sch.carrier[c][k] / (2 * math.pi) / 1e6]
        rows.append(r)
    return SCHEMAS["pulse_schedule.csv"], rows


def read_conserved(path):
    """(t seconds, values, sigmas or None) from a conserved-quantity CSV."""
    header, a = read_csv(path)
    if header[:2] != ["t_us", "value"]:
        raise ValueError(f"{path}: expected columns t_us, value[, sigma]")
    sig = a[:, 2] if a.shape[1] > 2 else None
    return a[:, 0] * 1e-6, a[:, 1], sig


def estimates_doc(out) -> dict:
    doc = {k: {"value": out[k].value, "sigma": out[k].sigma} for k in ("gamma", "h", "mu", "nu")}
    st = out["eigenvalues"]
    doc["eigenvalues"] = [
        {"re": float(st.mean[k].real), "im": float(st.mean[k].imag),
         "re_std": float(st.re_std[k]), "im_std": float(st.im_std[k])} for k in range(3)]
    doc["eigenvalues_degenerate"] = st.degenerate
    doc["mc_samples"] = st.n
    doc["seed"] = st.seed
    return doc
