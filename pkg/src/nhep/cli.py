"""Command-line front end: ``nhep <subcommand> [flags]``.

Frequencies are entered in kHz, times in microseconds; both are converted
to rad/s and s internally.  Exit codes: 0 success, 2 usage, 3 domain
error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io as nio
from .core import ModelParams, build_nv_levels, hamiltonian_array
from .dilation import dilation_window, evolve_dilated, pulse_schedule, reconstruct_blocks
from .dynamics import (EvolutionTrace, conserved_psch, conserved_pt, eigenstate_table,
                       eigenvector_table, population_trace)
from .ep import (classify_point, dispersion_scan, locus_residuals, sweep_sheets,
                 topological_invariant, trace_ep3_locus)
from .errors import DomainError, NHEPError, NoConvergence, NumericalError
from .readout import ReadoutModel
from .retrieval import PAIRS, noisy_conserved, retrieve

CONFIG_ENV = "NHEP_CONFIG"
KHZ = 2 * math.pi * 1e3
US = 1e-6

NAMED_STATES = {
    "psi1": PAIRS[0][0], "phi1": PAIRS[0][1], "psi2": PAIRS[1][0], "phi2": PAIRS[1][1],
    "e1": np.array([1, 0, 0], dtype=complex), "e2": np.array([0, 1, 0], dtype=complex),
    "e3": np.array([0, 0, 1], dtype=complex),
}


class UsageError(Exception):
    pass


def parse_state(text: str) -> np.ndarray:
    """A named state (psi1, phi2, e2, ...) or three comma-separated complex
    numbers in Python syntax, e.g. ``-0.7071067811865476j,0.7071067811865476,0``."""
    key = text.strip().lower()
    if key in NAMED_STATES:
        return np.array(NAMED_STATES[key], dtype=complex)
    try:
        v = np.array([complex(x.strip().replace(" ", "")) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse state {text!r}") from None
    if v.shape != (3,):
        raise UsageError("a state needs exactly three components")
    return v


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _grid(args):
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if not args.tmax_us > 0:
        raise UsageError("--tmax-us must be positive")
    return np.linspace(0.0, args.tmax_us * US, args.steps + 1)


def _params(args):
    return args.gamma, args.h, args.mu, args.nu


# ---------------------------------------------------------------- commands

def cmd_classify(args, cfg):
    p = ModelParams(*_params(args))
    c = classify_point(p, tol=args.tol)
    return {"kind": c.kind, "gamma": p.gamma, "h": p.h, "mu": p.mu, "nu": p.nu,
            "abs_r1": abs(c.residuals[0]), "abs_r2": abs(c.residuals[1])}, None


def _region(args):
    g0, g1, h0, h1 = args.region
    return (g0, g1), (h0, h1)


def cmd_sweep(args, cfg):
    grid = sweep_sheets(_region(args), args.resolution, args.mu, args.nu)
    return None, nio.sheet_rows(grid)


def cmd_locus(args, cfg):
    pts = trace_ep3_locus(args.mu, args.nu, _region(args), args.resolution)
    res = locus_residuals(pts, args.mu, args.nu) if pts else []
    return None, (nio.SCHEMAS["locus.csv"], [[g, h, r] for (g, h), r in zip(pts, res)])


def cmd_invariant(args, cfg):
    w = topological_invariant(tuple(args.plus), tuple(args.minus), args.mu, args.nu)
    return {"W": w, "pt_plus": args.plus, "pt_minus": args.minus, "mu": args.mu, "nu": args.nu}, None


def cmd_dispersion(args, cfg):
    mus = np.geomspace(args.mu_min, args.mu_max, args.n)
    d = dispersion_scan(args.h0, args.gamma0, mus)
    if args.format == "json":
        return {"anchor": list(d.anchor), "fitted_exponent": d.fitted_exponent,
                "mu": d.mu_samples, "splitting": d.splittings}, None
    rows = [[m, s, ep.real, ep.imag, em.real, em.imag]
            for m, s, ep, em in zip(d.mu_samples, d.splittings, d.eps_plus, d.eps_minus)]
    return None, (nio.SCHEMAS["dispersion.csv"], rows)


def cmd_window(args, cfg):
    H = hamiltonian_array(*_params(args))
    tw = dilation_window(H, args.eta0, args.s_khz * KHZ, tmax=args.tmax_us * US)
    return {"eta0": args.eta0, "s_khz": args.s_khz,
            "t_max_admissible_us": None if tw is None else tw / US,
            "searched_up_to_us": args.tmax_us}, None


def cmd_evolve(args, cfg):
    H = hamiltonian_array(*_params(args))
    s = args.s_khz * KHZ
    t = _grid(args)
    psi, phi = parse_state(args.psi), parse_state(args.phi)
    if not args.dilated:
        return None, nio.trace_rows(population_trace(H, psi, phi, t, s))
    step = (t[1] - t[0]) / args.substeps
    _, proj = evolve_dilated(H, psi, args.eta0, t, step, s)
    norm = np.einsum("ij,ij->i", proj.raw_states.conj(), proj.raw_states).real
    p0 = np.abs(proj.raw_states @ (phi / np.linalg.norm(phi)).conj()) ** 2 / norm
    return None, nio.trace_rows(EvolutionTrace(t, proj.raw_states, norm, p0))


def cmd_pulses(args, cfg):
    H = hamiltonian_array(*_params(args))
    nv = build_nv_levels(cfg.get("nv"))
    sch = pulse_schedule(H, _grid(args), nv, args.eta0, args.s_khz * KHZ)
    _, _, err = reconstruct_blocks(sch, nv)
    side = {"eta0": sch.eta0, "s_rad_per_s": sch.s, "nv_levels": nv.as_config(),
            "carrier_check_rad_per_s": err}
    return side, nio.schedule_rows(sch)


def cmd_conserved(args, cfg):
    H = hamiltonian_array(*_params(args))
    s = args.s_khz * KHZ
    t = _grid(args)
    vals = conserved_pt(H, s, t) if args.kind == "pt" else conserved_psch(H, s, t)
    if not args.noise:
        return None, (["t_us", "value"], [[a / US, v] for a, v in zip(t, vals)])
    if args.seed is None:
        raise UsageError("--noise requires --seed")
    model = ReadoutModel.from_json({**cfg.get("readout", {}), "shot_noise": True, "seed": args.seed})
    c, e = noisy_conserved(vals, model, np.random.default_rng(args.seed))
    return None, (["t_us", "value", "sigma"], [[a / US, v, u] for a, v, u in zip(t, c, e)])


def cmd_retrieve(args, cfg):
    traces = [nio.read_trace(p) for p in args.traces]
    times = traces[0].times
    if any(tr.times.shape != times.shape or np.abs(tr.times - times).max() > 1e-15 for tr in traces):
        raise UsageError("trace files must share one time grid")
    cpt = nio.read_conserved(args.cpt)
    cps = nio.read_conserved(args.cpsch)
    cpt = cpt if cpt[2] is not None else cpt[:2]
    cps = cps if cps[2] is not None else cps[:2]
    kw = {"order": args.order} if args.order else None
    out = retrieve(traces, cpt, cps, s1=args.s1_khz * KHZ, s2=args.s2_khz * KHZ, s=args.s_khz * KHZ,
                   slope_kw=kw, n_mc=args.n_mc, seed=0 if args.seed is None else args.seed)
    return nio.estimates_doc(out), None


def cmd_eigenstates(args, cfg):
    H = hamiltonian_array(*_params(args))
    try:
        tab = eigenstate_table(H)
        method = "filter"
    except NoConvergence:
        tab = eigenvector_table(H)
        method = "eig"
    ev = tab["eigenvalues"]
    doc = {"method": method, "degenerate": tab["degenerate"] or method == "eig" and _coalesced(ev),
           "eigenvalues": [{"re": e.real, "im": e.imag} for e in ev], **tab["fidelities"]}
    rows = [[k, v] for k, v in tab["fidelities"].items()]
    return doc, (nio.SCHEMAS["fidelity_table.csv"], rows)


def _coalesced(ev):
    return bool(np.abs(ev[:, None] - ev[None, :])[np.triu_indices(3, 1)].min() < 1e-6)


# ---------------------------------------------------------------- parser

def _add_params(p, required=False):
    p.add_argument("--gamma", type=float, required=True)
    for name in ("--h", "--mu", "--nu"):
        p.add_argument(name, type=float, required=required, default=None if required else 0.0)


def _add_time(p, s_khz=40.0):
    p.add_argument("--s-khz", type=float, default=s_khz, help="scale s in kHz (s = 2 pi x value)")
    p.add_argument("--tmax-us", type=float, default=30.0)
    p.add_argument("--steps", type=int, default=300, help="grid intervals")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nhep", description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="output path (default stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--config", default=os.environ.get(CONFIG_ENV),
                    help=f"NV/readout JSON (default ${CONFIG_ENV})")
    ap.add_argument("--emit-schema", action="store_true", help="print file schemas and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("classify", help="EP classification at one point")
    _add_params(p, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(fn=cmd_classify, kind_default="json")

    for name, fn, help_ in (("sweep", cmd_sweep, "eigenvalue sheets on a (gamma, h) grid"),
                            ("locus", cmd_locus, "EP3 locus points")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--region", type=float, nargs=4, metavar=("G_LO", "G_HI", "H_LO", "H_HI"),
                       default=(-2.0, 2.0, -2.0, 2.0))
        p.add_argument("--resolution", type=int, default=101 if name == "sweep" else 400)
        p.add_argument("--mu", type=float, default=0.0)
        p.add_argument("--nu", type=float, default=0.0)
        p.set_defaults(fn=fn, kind_default="csv")

    p = sub.add_parser("invariant", help="winding number between two points")
    p.add_argument("--plus", type=float, nargs=2, metavar=("GAMMA", "H"), required=True)
    p.add_argument("--minus", type=float, nargs=2, metavar=("GAMMA", "H"), required=True)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--nu", type=float, default=0.0)
    p.set_defaults(fn=cmd_invariant, kind_default="json")

    p = sub.add_parser("dispersion", help="splitting versus mu at an EL3 anchor")
    p.add_argument("--h0", type=float, required=True)
    p.add_argument("--gamma0", type=float, required=True)
    p.add_argument("--mu-min", type=float, default=1e-4)
    p.add_argument("--mu-max", type=float, default=1e-2)
    p.add_argument("--n", type=int, default=9)
    p.set_defaults(fn=cmd_dispersion, kind_default="csv")

    p = sub.add_parser("window", help="maximum admissible t of the dilation for eta0")
    _add_params(p)
    _add_time(p)
    p.add_argument("--eta0", type=float, default=math.sqrt(0.3))
    p.set_defaults(fn=cmd_window, kind_default="json")

    p = sub.add_parser("evolve", help="P0(t) trace, direct or via the dilation")
    _add_params(p)
    _add_time(p)
    p.add_argument("--psi", default="psi1")
    p.add_argument("--phi", default="phi1")
    p.add_argument("--dilated", action="store_true")
    p.add_argument("--eta0", type=float, default=math.sqrt(0.3))
    p.add_argument("--substeps", type=int, default=20, help="integrator steps per grid interval")
    p.set_defaults(fn=cmd_evolve, kind_default="csv")

    p = sub.add_parser("pulses", help="six-channel pulse schedule")
    _add_params(p)
    _add_time(p)
    p.add_argument("--eta0", type=float, default=math.sqrt(0.3))
    p.set_defaults(fn=cmd_pulses, kind_default="csv")

    p = sub.add_parser("conserved", help="C_PT or C_psCh samples")
    _add_params(p)
    p.add_argument("--kind", choices=("pt", "psch"), required=True)
    p.add_argument("--s-khz", type=float, required=True)
    p.add_argument("--tmax-us", type=float, required=True)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--noise", action="store_true", help="add shot noise (needs --seed)")
    p.set_defaults(fn=cmd_conserved, kind_default="csv")

    p = sub.add_parser("retrieve", help="estimate (gamma, h, mu, nu) and eigenvalues")
    p.add_argument("--traces", nargs=2, required=True, metavar=("PAIR1_CSV", "PAIR2_CSV"))
    p.add_argument("--cpt", required=True)
    p.add_argument("--cpsch", required=True)
    p.add_argument("--s1-khz", type=float, default=30.0)
    p.add_argument("--s2-khz", type=float, default=20.0)
    p.add_argument("--s-khz", type=float, default=40.0)
    p.add_argument("--order", type=int, default=None, help="slope-fit polynomial order")
    p.add_argument("--n-mc", type=int, default=10000)
    p.set_defaults(fn=cmd_retrieve, kind_default="json")

    p = sub.add_parser("eigenstates", help="filtered eigenstates and fidelity table")
    _add_params(p)
    p.set_defaults(fn=cmd_eigenstates, kind_default="json")
    return ap


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w") as fh:
        fh.write(text)


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.emit_schema:
        _write(nio.json_text(nio.SCHEMAS), None)
        return 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    fmt = args.format or args.kind_default
    args.format = fmt
    try:
        cfg = _load_config(args.config)
        doc, table = args.fn(args, cfg)
        if table is not None and (fmt == "csv" or doc is None):
            _write(nio.csv_text(*table), args.out)
            if doc is not None and args.out is not None:
                _write(nio.json_text(doc), args.out + ".json")
        else:
            _write(nio.json_text(doc), args.out)
    except UsageError as exc:
        print(f"nhep: usage error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        msg = f"nhep: {type(exc).__name__}: {exc}"
        if getattr(exc, "t_fail", None) is not None:
            msg += f"\nnhep: maximum admissible t for eta0 = {getattr(args, 'eta0', float('nan')):g}" \
                   f" is {exc.t_fail / US:.6f} us"
        print(msg, file=sys.stderr)
        return 3
    except (NumericalError, NHEPError) as exc:
        print(f"nhep: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"nhep: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"nhep: invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
