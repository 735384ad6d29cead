"""Command-line interface.

Subcommands: simulate-kinetic, solve-reduced, solve-pb, rate-sweep,
regime-probe, compare, hypo-check.  All read an optional TOML config
(--config); --seed controls the only randomness (test-data
generation).  Exit code 0 iff every pass flag in the run is true.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .elliptic import EllipticProblemLight, parallel_average, solve_pb_heavy, solve_pb_light
from .experiments import (
    DEFAULT_H0_TERMS,
    DEFAULT_PHI_TERMS,
    HorizonRule,
    build_h0,
    build_phi,
    compare_kinetic_reduced,
    run_kinetic_trajectory,
    run_rate_sweep,
    run_regime_probe,
    summarize_rates,
    write_ndjson,
)
from .fields import cosine_profile
from .hypo import certify_decay, exponent_table, validate_condbeta
from .reduced import solve_reduced
from .spectral import Grid


def _doc(args):
    return cfgmod.load_toml(args.config) if args.config else {}


def _grid(doc):
    g = doc.get("grid", {})
    return Grid(nx=tuple(g.get("nx", (16, 16, 16))), nv=tuple(g.get("nv", (8, 8, 8))))


def cmd_simulate_kinetic(args):
    doc = _doc(args)
    grid = _grid(doc)
    p = cfgmod.scaled_params(doc, context="probe")
    phi = build_phi(grid, cfgmod.field_terms(doc, "phi", DEFAULT_PHI_TERMS), p.sigma)
    h0_terms = doc.get("h0", {}).get("terms", DEFAULT_H0_TERMS)
    h0 = build_h0(grid, [tuple(map(tuple_or_num, t)) for t in h0_terms], phi, p.sigma)
    hz = doc.get("horizon", {})
    horizon = HorizonRule(**hz) if hz else HorizonRule(t_max=doc.get("kinetic", {}).get("t_max", 1.0))
    res = run_kinetic_trajectory(grid, p, phi, h0, horizon=horizon)
    out = args.out or "kinetic_out"
    os.makedirs(out, exist_ok=True)
    write_ndjson(os.path.join(out, "diagnostics.ndjson"), res.records)
    print(f"wrote {len(res.records)} diagnostic records to {out}/diagnostics.ndjson "
          f"(T = {res.times[-1]:.4g}, mass drift = {abs(res.mass[-1] - res.mass[0]):.2e})")
    return 0


def tuple_or_num(x):
    if isinstance(x, list):
        return tuple(tuple_or_num(i) for i in x)
    return x


def _load_csv_grid(path):
    rows = []
    blocks = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#") or not line:
                if rows:
                    blocks.append(rows)
                    rows = []
                continue
            rows.append([float(v) for v in line.split(",")])
    if rows:
        blocks.append(rows)
    arrs = [np.asarray(b) for b in blocks]
    if len(arrs) == 1:
        return arrs[0]
    return np.stack(arrs, axis=2)


def _write_csv_grid(path, f):
    with open(path, "w") as fh:
        if f.ndim == 2:
            for row in f:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        else:
            for k in range(f.shape[2]):
                fh.write(f"# slice x3 = {k}\n")
                for row in f[:, :, k]:
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_solve_pb(args):
    doc = _doc(args)
    pb = doc.get("pb", {})
    species = args.species or pb.get("species", "light")
    delta = float(pb.get("delta", 1.0))
    tol = float(pb.get("tol", 1e-10))
    out = args.out or "pb_out"
    os.makedirs(out, exist_ok=True)
    if args.n_csv:
        N = _load_csv_grid(args.n_csv)
    else:
        shape = tuple(pb.get("n_shape", (32, 32)))
        N = 1.0 + cosine_profile(shape, cfgmod.field_terms(doc, "n_profile", ((0, 0.3, 1),)))
        N = N / N.mean()
    if species == "heavy":
        sol = solve_pb_heavy(N, delta, tol=tol)
        phit = sol.phi
    else:
        if args.ubar_csv:
            ubar = _load_csv_grid(args.ubar_csv)
        else:
            shape3 = tuple(pb.get("ubar_shape", (32, 32, 32)))
            ubar = 1.0 + cosine_profile(shape3, cfgmod.field_terms(doc, "ubar_profile", ((2, 0.3, 1),)))
            ubar = ubar / ubar.mean()
        prob = EllipticProblemLight(N=N, ubar=ubar, delta=delta)
        sol = solve_pb_light(prob, tol=tol)
        phit = parallel_average(sol.phi, sigma=-1)
    _write_csv_grid(os.path.join(out, "phi.csv"), sol.phi)
    _write_csv_grid(os.path.join(out, "phi_tilde.csv"), np.atleast_2d(phit))
    with open(os.path.join(out, "history.json"), "w") as fh:
        json.dump({"residual_norm": sol.residual_norm, "iterations": sol.iterations,
                   "energy": sol.energy, "energy_history": sol.energy_history}, fh, indent=1)
    print(f"{species} solve: {sol.iterations} Newton steps, residual {sol.residual_norm:.3e}")
    return 0


def cmd_solve_reduced(args):
    doc = _doc(args)
    p = cfgmod.scaled_params(doc, context="probe")
    red = doc.get("reduced", {})
    shape = tuple(red.get("n_shape", (32, 32)))
    N0 = 1.0 + cosine_profile(shape, cfgmod.field_terms(doc, "n_profile", ((0, 0.2, 1), (1, 0.15, 1))))
    N0 = N0 / N0.mean()
    ubar = None
    if p.sigma == -1:
        shape3 = tuple(red.get("ubar_shape", shape + (16,)))
        ubar = np.ones(shape3)
    T = float(red.get("t_final", 0.5))
    dt = red.get("dt")
    mode = red.get("mode", "coupled")
    save_every = int(red.get("save_every", 10))
    trajs = solve_reduced(N0, p, T, mode=mode, ubar=ubar,
                          dt=float(dt) if dt else None, save_every=save_every,
                          picard_iterations=int(red.get("picard_iterations", 4)))
    out = args.out or "reduced_out"
    os.makedirs(out, exist_ok=True)
    summary = []
    for i, samples in enumerate(trajs):
        for s in samples:
            summary.append({"iterate": i, "t": s.time, "mass": s.mass,
                            "l2": s.l2, "u_max": s.u_max})
        _write_csv_grid(os.path.join(out, f"N_final_iterate{i}.csv"), samples[-1].N)
    write_ndjson(os.path.join(out, "summary.ndjson"), summary)
    print(f"wrote {len(trajs)} trajectory(ies) to {out}")
    return 0


def cmd_rate_sweep(args):
    doc = _doc(args)
    cfg = cfgmod.sweep_config(doc)
    if args.out:
        cfg.output_dir = args.out
    report = run_rate_sweep(cfg)
    print(summarize_rates(report), end="")
    ok = report.passed and report.certificates_passed
    return 0 if ok else 1


def cmd_regime_probe(args):
    doc = _doc(args)
    cfg = cfgmod.probe_config(doc)
    if args.out:
        cfg.output_dir = args.out
    rep = run_regime_probe(cfg)
    for case in rep["cases"]:
        print(f"sigma0={case['sigma0']} alpha={case['alpha']:+.2f}: {case['verdict']}"
              f" -> {'PASS' if case['passed'] else ('recorded' if case['passed'] is None else 'FAIL')}")
    return 0 if rep["passed"] else 1


def cmd_compare(args):
    doc = _doc(args)
    cfg = cfgmod.compare_config(doc)
    if args.out:
        cfg.output_dir = args.out
    rep = compare_kinetic_reduced(cfg)
    for t, ok in rep["monotone_at_each_time"].items():
        print(f"t={t}: discrepancy decreasing across eps: {ok}")
    print("overall:", "PASS" if rep["passed"] else "FAIL")
    return 0 if rep["passed"] else 1


def cmd_hypo_check(args):
    if args.certify:
        recs = [json.loads(line) for line in open(args.certify)]
        cert = certify_decay(
            [r["t"] for r in recs], [r["hypo_norm"] for r in recs],
            [r["hypo_dissipation"] for r in recs],
        )
        print(f"certificate: passed={cert.passed} K_hat={cert.K_hat:.4g} "
              f"monotone={cert.monotone} equilibrium={cert.equilibrium}")
        return 0 if cert.passed else 1
    n = args.alpha_grid
    alphas = np.linspace(-0.99, 0.99, n)
    bad = []
    for a in alphas:
        ok, report = validate_condbeta(a, exponent_table(a))
        if not ok:
            bad.append((float(a), {k: v for k, v in report.items() if v < 0}))
    print(f"admissibility sweep over {n} alphas in (-0.99, 0.99): "
          f"{'all pass' if not bad else f'{len(bad)} failures'}")
    for a, rep in bad[:10]:
        print(f"  alpha={a:+.3f}: {rep}")
    return 0 if not bad else 1


def main(argv=None):
    ap = argparse.ArgumentParser(prog="magvfp", description=__doc__)
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument("--seed", type=int, default=0, help="seed for generated test data")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate-kinetic", help="run one kinetic trajectory")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate_kinetic)

    s = sub.add_parser("solve-pb", help="solve an elliptic Poisson-Boltzmann problem")
    s.add_argument("--species", choices=["light", "heavy"])
    s.add_argument("--n-csv", help="CSV grid for N")
    s.add_argument("--ubar-csv", help="CSV grid for the background density")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve_pb)

    s = sub.add_parser("solve-reduced", help="run the reduced transport model")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve_reduced)

    s = sub.add_parser("rate-sweep", help="decay-rate sweep over (alpha, eps)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_rate_sweep)

    s = sub.add_parser("regime-probe", help="collision-regime probes")
    s.add_argument("--out")
    s.set_defaults(func=cmd_regime_probe)

    s = sub.add_parser("compare", help="kinetic vs reduced weak-metric comparison")
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("hypo-check", help="exponent admissibility sweep / trajectory certificate")
    s.add_argument("--alpha-grid", type=int, default=101)
    s.add_argument("--certify", help="diagnostics NDJSON stream to certify")
    s.set_defaults(func=cmd_hypo_check)

    args = ap.parse_args(argv)
    np.random.seed(args.seed)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
