import json
import math

import numpy as np

from nhep import io as nio
from nhep.core import build_nv_levels, hamiltonian_array
from nhep.dilation import pulse_schedule
from nhep.dynamics import population_trace
from nhep.ep import sweep_sheets
from nhep.retrieval import ParamEstimate, eigenvalues_with_errors

S40 = 2 * math.pi * 40e3


def test_trace_csv_roundtrip(tmp_path):
    psi = np.array([-1j, 1, 0]) / math.sqrt(2)
    tr = population_trace(hamiltonian_array(1.06, 0.35, 0.1, 0.05), psi, psi,
                          np.linspace(0, 30e-6, 31), S40)
    path = tmp_path / "t.csv"
    path.write_text(nio.csv_text(*nio.trace_rows(tr)))
    back = nio.read_trace(path)
    assert np.abs(back.times - tr.times).max() <= 1e-15 * tr.times.max()
    for a, b in ((back.p0, tr.p0), (back.norm, tr.norm), (back.raw_states, tr.raw_states)):
        assert np.abs(a - b).max() <= 1e-15 * max(1.0, np.abs(b).max())


def test_sheet_rows_shape():
    g = sweep_sheets(((0.5, 1.5), (-1, 1)), (3, 4))
    header, rows = nio.sheet_rows(g)
    assert header == nio.SCHEMAS["sheet_grid.csv"] and len(rows) == 12
    text = nio.csv_text(header, rows)
    back = np.loadtxt(text.splitlines()[1:], delimiter=",")
    assert np.array_equal(back[:, 2], np.array([r[2] for r in rows]))


def test_schedule_rows_header():
    sch = pulse_schedule(hamiltonian_array(0.5), np.linspace(0, 0.5e-6, 6), build_nv_levels(),
                         math.sqrt(0.3), S40)
    header, rows = nio.schedule_rows(sch)
    assert len(header) == 19 and all(len(r) == 19 for r in rows)


def test_estimates_json_roundtrip_exact():
    est = {k: ParamEstimate(v, 0.01 * (i + 1)) for i, (k, v) in
           enumerate(zip(("gamma", "h", "mu", "nu"), (1.0 / 3, -0.35, 0.2, 0.05)))}
    est["eigenvalues"] = eigenvalues_with_errors(est, n=500, seed=0)
    doc = nio.estimates_doc(est)
    back = json.loads(nio.json_text(doc))
    assert back == json.loads(json.dumps(doc, default=nio._json_default))
    assert back["gamma"]["value"] == 1.0 / 3
    assert back["eigenvalues"][0]["re"] == float(est["eigenvalues"].mean[0].real)


def test_float_format_is_17_digits():
    x = 0.1 + 0.2
    assert float(nio.csv_text(["x"], [[x]]).splitlines()[1]) == x
