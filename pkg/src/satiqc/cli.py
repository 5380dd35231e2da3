"""Command-line front end: factorize | synth | analyze | sweep | simulate."""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ProblemConfig, ConfigError, load_config, build_filters,
                     build_closed_loop, synthesis_options, build_scenario,
                     STRATEGIES)
from .multipliers import (make_popov_multiplier, make_zames_falb_multiplier,
                          make_sector_multiplier)
from .factorization import j_spectral_factorize, to_triangular
from .statespace import eigenvalues
from .synthesis import SynthesisOptions, solve_synthesis, solve_analysis, solve_antiwindup
from .simulate import simulate, empirical_l2_gain, check_dissipation

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _fmt_matrix(M, indent="    "):
    M = np.atleast_2d(M)
    if M.size == 0:
        return indent + "(empty)"
    rows = []
    for r in M:
        rows.append(indent + "[" + "  ".join(f"{x: .6g}" for x in r) + "]")
    return "\n".join(rows)


def _rational_strings(tri):
    """Human-readable transfer entries for single-state triangular factors."""
    if tri.n != 1 or tri.m1 != 1:
        return None
    a = float(tri.a[0, 0])
    c = float(tri.c[0, 0])
    b1 = float(tri.b1[0, 0])
    b2 = float(tri.b2[0, 0])
    d1 = float(tri.d1[0, 0])
    d2 = float(tri.d2[0, 0])
    def lin(d, cb):
        return f"({d:.6g} s + {d * (-a) + cb:.6g})/(s + {-a:.6g})"
    return [lin(d1, c * b1),
            (lin(d2, c * b2) if abs(c * b2) > 1e-9 else f"{d2:.6g}")]


def cmd_factorize(args) -> int:
    cfg = load_config(args.config)
    name = args.multiplier
    entry = next((e for e in cfg.iqcs if e["kind"] == name), {"kind": name, "eps": 0.01})
    eps = entry.get("eps", 0.01)
    try:
        if name == "popov":
            mult = make_popov_multiplier(cfg.alpha, eps)
        elif name == "zames_falb":
            mult = make_zames_falb_multiplier(cfg.alpha, eps, entry.get("h"))
        elif name == "sector":
            mult = make_sector_multiplier(eps)
        else:
            print(f"unknown multiplier {name!r}", file=sys.stderr)
            return EXIT_INVALID
        fac = j_spectral_factorize(mult)
        tri = to_triangular(fac)
    except ValueError as exc:
        print(f"factorization failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if "L1" not in str(exc) else EXIT_INVALID
    resid = fac.identity_residual()
    X = fac.diagnostics["are_solution"]
    print(f"multiplier: {name} (alpha={cfg.alpha}, eps={eps})")
    print("spectral factor Psi = (A, B, C, D):")
    for nm, M in [("A", fac.psi.A), ("B", fac.psi.B), ("C", fac.psi.C), ("D", fac.psi.D)]:
        print(f"  {nm}:")
        print(_fmt_matrix(M))
    print("ARE solution X:")
    print(_fmt_matrix(X))
    if fac.diagnostics.get("epsilon_applied"):
        print(f"  note: singular constant part regularized "
              f"(epsilon = {fac.diagnostics['epsilon_applied']:g} on the first channel)")
    print("triangular factor PsiBar (top row realization):")
    for nm, M in [("A", tri.a), ("B1", tri.b1), ("B2", tri.b2),
                  ("C", tri.c), ("D1", tri.d1), ("D2", tri.d2)]:
        print(f"  {nm}:")
        print(_fmt_matrix(M))
    rat = _rational_strings(tri)
    if rat:
        print(f"  PsiBar11(s) = {rat[0]}")
        print(f"  PsiBar12(s) = {rat[1]}")
    print(f"frequency-identity residual: {resid:.3e}")
    return EXIT_OK if resid < 1e-6 else EXIT_NUMERICAL


def _result_payload(res, cl) -> dict:
    poles = eigenvalues(cl.a_cl())
    return {
        "result": res.to_dict(),
        "closed_loop_poles": [[float(z.real), float(z.imag)] for z in np.sort_complex(poles)],
    }


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    strategy = cfg.synthesis.get("strategy")
    t0 = time.time()
    if strategy == "antiwindup":
        try:
            aw = solve_antiwindup(cfg.plant, q_max=cfg.synthesis.get("q_max", 1e5),
                                  solver=cfg.solver["solver"])
        except RuntimeError as exc:
            print(f"synthesis failed: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        payload = {
            "result": {
                "gamma": aw["gamma"],
                "Fc": aw["Fc"].tolist(),
                "Hc": aw["Hc"].tolist(),
                "Q": aw["Q"].tolist(),
                "diagnostics": {"status": aw["status"], "solver": aw["solver"],
                                "strategy": "antiwindup"},
            },
            "closed_loop_poles": [[float(z.real), float(z.imag)] for z in
                                  np.sort_complex(eigenvalues(cfg.plant.A + cfg.plant.B0 @ aw["Fc"]))],
        }
        gamma = aw["gamma"]
    else:
        kinds, scalings, feed = (None, None, None)
        if strategy in STRATEGIES:
            kinds, scalings, feed = STRATEGIES[strategy]
        cl = build_closed_loop(cfg, kinds=kinds)
        opts = synthesis_options(cfg, scalings=scalings, feedthrough=feed)
        try:
            res = solve_synthesis(cl, opts, gap=cfg.solver["gap"],
                                  feas_tol=cfg.solver["feas_tol"],
                                  solver=cfg.solver["solver"])
        except RuntimeError as exc:
            print(f"synthesis failed: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        payload = _result_payload(res, res.closed_loop)
        gamma = res.gamma
    payload["metadata"] = {"config": str(args.config), "elapsed_s": time.time() - t0,
                           "version": __version__, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    out = Path(args.out) if args.out else Path(args.config).with_suffix(".result.json")
    out.write_text(json.dumps(payload, indent=2))
    print(f"strategy:    {strategy or 'configured IQC set'}")
    print(f"gamma:       {gamma:.6g}")
    if strategy != "antiwindup":
        print(f"lambdas:     {np.array2string(res.lambdas, precision=5)}")
        print(f"Hc:          {np.array2string(res.Hc, precision=5)}")
        print(f"poles:       {np.array2string(np.sort_complex(eigenvalues(res.closed_loop.a_cl())), precision=5)}")
    print(f"result json: {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    data = json.loads(Path(args.result).read_text())
    res = data["result"]
    cl = build_closed_loop(cfg)
    cl = cl.with_gains(np.asarray(res["Fc"]), np.asarray(res["Hc"]))
    out = solve_analysis(cl, solver=cfg.solver["solver"])
    if out["gamma"] is None:
        print(f"analysis infeasible: {out['status']}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"analysis-certified gamma: {out['gamma']:.6g} (status {out['status']})")
    if args.out:
        Path(args.out).write_text(json.dumps({
            "gamma": out["gamma"], "status": out["status"],
            "lambdas": out["lambdas"].tolist(),
            "Gamma": out["Gamma"].tolist(),
        }, indent=2))
    return EXIT_OK


def _sweep_cell(cfg, alpha, strategy):
    kinds, scalings, feed = STRATEGIES[strategy]
    try:
        cl = build_closed_loop(cfg, alpha=alpha, kinds=kinds)
        opts = synthesis_options(cfg, scalings=scalings, feedthrough=feed)
        res = solve_synthesis(cl, opts)
        return res.gamma
    except Exception:
        return float("nan")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    alphas = cfg.sweep.get("alphas", [2, 5, 7, 10, 15, 20, 30, 40, 50, 60, 70, 100])
    strategies = cfg.sweep.get("strategies", ["popov", "zames_falb", "sector", "mixed"])
    for s in strategies:
        if s not in STRATEGIES:
            print(f"unknown strategy {s!r}", file=sys.stderr)
            return EXIT_INVALID
    jobs = max(1, args.jobs)
    cells = [(a, s) for a in alphas for s in strategies]
    results = {}
    if jobs == 1:
        for a, s in cells:
            results[(a, s)] = _sweep_cell(cfg, a, s)
    else:
        with cf.ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_sweep_cell, cfg, a, s): (a, s) for a, s in cells}
            for fut in cf.as_completed(futs):
                results[futs[fut]] = fut.result()
    header = ["alpha"] + [f"gamma_{_strategy_tag(s)}" for s in strategies]
    lines = [",".join(header)]
    for a in alphas:
        row = [f"{a:g}"] + [f"{results[(a, s)]:.6g}" for s in strategies]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"sweep csv: {args.out}")
    print(text, end="")
    return EXIT_OK


def _strategy_tag(s: str) -> str:
    return {"popov": "P", "zames_falb": "ZF", "sector": "S", "mixed": "M"}.get(s, s)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    data = json.loads(Path(args.result).read_text())
    res = data["result"]
    cl = build_closed_loop(cfg)
    cl = cl.with_gains(np.asarray(res["Fc"]), np.asarray(res["Hc"]))
    if not cfg.scenarios:
        print("config declares no scenarios", file=sys.stderr)
        return EXIT_INVALID
    spec = cfg.scenarios[0]
    if args.scenario:
        spec = next((s for s in cfg.scenarios if s.get("name") == args.scenario), None)
        if spec is None:
            print(f"scenario {args.scenario!r} not found", file=sys.stderr)
            return EXIT_INVALID
    scenario = build_scenario(spec, cfg, seed=args.seed)
    trace = simulate(cl, scenario)
    out_csv = Path(args.out) if args.out else Path(args.config).with_suffix(".trace.csv")
    trace.to_csv(out_csv)
    d_energy = float(np.trapezoid(np.sum(trace.d ** 2, axis=0), trace.t))
    summary = {
        "scenario": spec.get("name", "scenario0"),
        "diverged": trace.diverged,
        "terminal_state_norm": float(np.linalg.norm(trace.x_p[:, -1])),
        "saturation_active_fraction": float(np.mean(np.any(trace.w != 0.0, axis=0))),
        "closed_loop_poles": [[float(z.real), float(z.imag)] for z in
                              np.sort_complex(eigenvalues(cl.a_cl()))],
        "certified_gamma": res.get("gamma"),
    }
    if d_energy > 0:
        summary["empirical_l2_gain"] = empirical_l2_gain(trace)
    else:
        summary["empirical_l2_gain"] = None
    out_json = out_csv.with_suffix(".summary.json")
    out_json.write_text(json.dumps(summary, indent=2))
    print(f"trace csv:    {out_csv}")
    print(f"summary json: {out_json}")
    gain_txt = "undefined (zero-energy disturbance)" if summary["empirical_l2_gain"] is None \
        else f"{summary['empirical_l2_gain']:.6g}"
    print(f"empirical L2 gain: {gain_txt}")
    if trace.diverged:
        print("simulation diverged", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="satiqc",
                                 description="Mixed-IQC robust synthesis for saturated uncertain plants")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="problem configuration JSON")
        p.add_argument("--out", default=None, help="output path")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
        p.add_argument("--feas-tol", type=float, default=1e-7)
        p.add_argument("--gap", type=float, default=1e-9)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("factorize", help="J-spectral factorization report")
    common(p)
    p.add_argument("--multiplier", required=True,
                   choices=["popov", "zames_falb", "sector"])
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("synth", help="solve the synthesis program")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="analysis certificate for stored gains")
    common(p)
    p.add_argument("--result", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="alpha sweep over IQC strategies")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="closed-loop simulation of stored gains")
    common(p)
    p.add_argument("--result", required=True)
    p.add_argument("--scenario", default=None)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
