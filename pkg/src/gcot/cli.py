"""``gcot`` command-line front end.

Every subcommand writes one JSON document (``--out`` or stdout) and a short
human summary on stderr. Curves go to CSV files. Exit codes: 0 success,
1 usage or input error, 2 infeasible, 3 size cap exceeded, 4 no convergence.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import bounds as B
from . import entropic as E
from . import halffill as HF
from . import lp
from . import monge1d as M1
from .core import DiscreteDensity, validate_plan
from .costs import CostSpecError, pairwise_family, parse_pair_cost
from .serialize import (InputError, csv_text, dumps, load_density, load_grid, load_plan,
                        plan_to_dict, write_csv)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SIZE, EXIT_NONCONV = 0, 1, 2, 3, 4
DEFAULT_SEED = 0
FIGURES = ("fig1-geometry", "fig2-tcurve", "fig3-region", "fig4-multiscale")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _summary(lines):
    for line in lines:
        print(line, file=sys.stderr)


def _emit(args, doc: dict):
    text = dumps(doc)
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_temps(text: str) -> list[float]:
    """``lo:hi:log:n`` or ``lo:hi:lin:n`` grids, or a comma-separated list."""
    parts = text.split(":")
    if len(parts) == 4:
        lo, hi, kind, n = parts
        lo, hi, n = float(lo), float(hi), int(n)
        if kind == "log":
            if lo <= 0:
                raise UsageError("log grids need positive endpoints")
            return [float(v) for v in np.geomspace(lo, hi, n)]
        if kind == "lin":
            return [float(v) for v in np.linspace(lo, hi, n)]
        raise UsageError(f"grid kind must be log or lin, got {kind!r}")
    return _floats(text)


def _diamond_density(t: float) -> DiscreteDensity:
    return DiscreteDensity(HF.diamond_geometry(t), np.full(6, 0.5))


def _density_or_diamond(args) -> DiscreteDensity:
    return load_density(args.density) if args.density else _diamond_density(0.7)


def _cert_dict(cert: lp.DualCertificate) -> dict:
    return {"beta": cert.beta, "phi": cert.phi, "gap": cert.gap, "primal": cert.primal,
            "dual": cert.dual, "max_violation": cert.max_violation,
            "max_slackness": cert.max_slackness, "valid": cert.is_valid()}


def cmd_solve(args):
    rho = load_density(args.density)
    fam = pairwise_family(parse_pair_cost(args.cost))
    sol = lp.solve(rho, args.nmax, fam, exact=args.exact)
    rep = validate_plan(sol.plan, rho)
    doc = {"kind": "solve", "cost": args.cost, "nmax": args.nmax, "exact": args.exact,
           "value": sol.value, "exact_value": sol.exact_value, "support": sol.support,
           "n_variables": sol.n_variables, "plan": plan_to_dict(sol.plan),
           "certificate": _cert_dict(sol.certificate),
           "residuals": {"normalization": rep.normalization_residual, "density": rep.density_residual}}
    _emit(args, doc)
    _summary([f"value {sol.value:.12g} over {sol.n_variables} configurations",
              f"support {sol.support}, duality gap {sol.certificate.gap:.2e}"])


def diamond_report(t: float, c2=None, with_lp: bool = True) -> dict:
    c2 = parse_pair_cost("riesz:s=1") if c2 is None else c2
    inst = HF.HalfFillInstance(HF.diamond_geometry(t), c2)
    res = HF.solve_half_filling(inst)
    canon = min(v for I, v in res.candidates if len(I) == 3)
    doc = {"t": t, "points": inst.points, "value": res.value, "argmin": list(res.best),
           "argmin_size": len(res.best), "unique": res.unique, "margin": res.margin,
           "canonical_value": canon, "canonical_gap": canon - res.value,
           "grand_canonical_wins": bool(canon - res.value > 1e-6),
           "plan": plan_to_dict(res.plan(6))}
    if with_lp:
        sol = lp.solve(inst.density(), 6, pairwise_family(c2))
        doc["lp"] = {"value": sol.value, "support": sol.support,
                     "duality_gap": sol.certificate.gap,
                     "agrees": bool(abs(sol.value - res.value) <= 1e-9)}
    return doc


def cmd_diamond(args):
    doc = {"kind": "diamond", **diamond_report(args.t, parse_pair_cost(args.cost), not args.no_lp)}
    _emit(args, doc)
    _summary([f"t={args.t}: optimum {doc['value']:.12g} at I={doc['argmin']} (unique: {doc['unique']})",
              f"best canonical {doc['canonical_value']:.12g}, gap {doc['canonical_gap']:.3g}"])


def _tgrid(lo, hi, steps):
    if steps < 1 or not 0 < lo <= hi < 1:
        raise UsageError("need 0 < from <= to < 1 and steps >= 1")
    return np.linspace(lo, hi, steps)


def cmd_tcurve(args):
    curve = HF.tcurve(_tgrid(args.t_from, args.t_to, args.steps), parse_pair_cost(args.cost), args.threads)
    rows = list(curve.rows())
    if args.csv:
        write_csv(args.csv, rows)
    sizes = [len(curve.subsets[a]) for a in curve.argmin()]
    doc = {"kind": "tcurve", "steps": args.steps, "from": args.t_from, "to": args.t_to,
           "columns": rows[0], "grand_canonical_points": int(sum(s != 3 for s in sizes)),
           "csv": args.csv}
    if not args.csv:
        doc["rows"] = rows[1:]
    _emit(args, doc)
    _summary([f"{args.steps} values of t, {doc['grand_canonical_points']} with a non-canonical optimum"])


def multiscale_report(k: int, scales=None, t: float = 0.7) -> dict:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HF.ScaleWarning)
        res = HF.multiscale_support(k, scales, t)
    return {"k": k, "scales": HF.default_scales(k) if scales is None else list(scales),
            "support": [res.n_minus, res.n_plus], "value": res.value,
            "expected": [(6 ** k - 2 ** k) // 2, (6 ** k + 2 ** k) // 2],
            "levels": [{"level": L.level, "labels": list(L.labels), "first_order_gap": L.first_order_gap,
                        "correction": L.correction, "dominance": L.dominance,
                        "exact_gap": L.exact_gap, "valid": L.valid} for L in res.levels],
            "warnings": [str(w.message) for w in caught]}


def cmd_multiscale(args):
    scales = _floats(args.scales) if args.scales else None
    try:
        doc = {"kind": "multiscale", **multiscale_report(args.k, scales, args.t)}
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args, doc)
    _summary([f"k={args.k}: support {doc['support']}"] + [f"warning: {w}" for w in doc["warnings"]])


def cmd_monge1d(args):
    if args.density:
        rho = load_grid(args.density)
    else:
        a, b = _floats(args.uniform)
        rho = M1.GridDensity1D.uniform(a, b)
    w = parse_pair_cost(args.kernel)
    plan = M1.build_monge_plan(rho)
    value, err = M1.monge_cost_with_error(plan, w, args.quad_tol)
    doc = {"kind": "monge1d", "kernel": args.kernel, "mass": rho.mass, "n": plan.n, "eta": plan.eta,
           "support": plan.support, "cuts": plan.cuts, "value": value, "quadrature_error": err,
           "blocks": [{"particles": b.particles, "u_lo": b.u_lo, "u_hi": b.u_hi} for b in plan.blocks]}
    if args.crosscheck:
        rep = M1.crosscheck_vs_lp(rho, w, cells=args.crosscheck)
        doc["crosscheck"] = {"cells": rep.cells, "nmax": rep.nmax, "lp_value": rep.lp_value,
                             "lp_support": rep.lp_support, "gap": rep.gap, "support_ok": rep.support_ok}
    _emit(args, doc)
    _summary([f"mass {rho.mass:g}: cost {value:.12g} (quadrature error {err:.1e}), support {plan.support}"])


def _inverse_profile(c2):
    def inv(v):
        f = lambda r: float(c2.of_distance(np.array([r]))[0]) - v
        lo, hi = 1e-12, 1.0
        while f(hi) > 0 and hi < 1e12:
            hi *= 2
        return brentq(f, lo, hi) if f(lo) > 0 > f(hi) else math.nan
    return inv


def cmd_bounds(args):
    th = args.theorem
    if th == "doubling":
        if not (args.density and args.cost and args.r and args.C):
            raise UsageError("doubling needs --density, --cost, --r and --C")
        rho = load_density(args.density)
        c2 = parse_pair_cost(args.cost)
        prof = lambda r: float(c2.of_distance(np.array([r]))[0])
        kappa = B.ball_mass_bound(rho, args.r)
        if kappa >= 1:
            raise UsageError(f"balls of radius {args.r} may carry mass {kappa:g} >= 1; choose a smaller --r")
        R0 = B.half_mass_radius(rho)
        bound = B.bound_doubling(rho, args.r, kappa, args.C, R0, prof(2 * R0), prof(args.r),
                                 _inverse_profile(c2))
        extra = {"kappa": kappa, "R0": R0}
    else:
        if args.mass is None:
            raise UsageError(f"{th} needs --mass")
        extra = {}
        if th == "coulomb":
            bound = B.bound_coulomb(args.mass)
        elif th == "triangle":
            bound = B.bound_triangle(args.mass, args.Z)
        else:
            if args.m_lo is None or args.M_hi is None:
                raise UsageError("bounded needs --m-lo and --M-hi")
            bound = B.bound_bounded(args.mass, args.m_lo, args.M_hi)
    doc = {"kind": "bounds", "theorem": th, "lo": bound.lo, "hi": bound.hi,
           "support": bound.integers(), "extras": {**bound.extras, **extra}}
    _emit(args, doc)
    _summary([f"{th}: particle numbers within {bound.integers()}"])


def cmd_check_monotone(args):
    plan, pts = load_plan(args.plan)
    if args.density:
        pts = load_density(args.density).points
    if pts is None:
        raise UsageError("the plan file has no points; pass --density")
    rep = B.check_c_monotonicity(plan, pairwise_family(parse_pair_cost(args.cost)), pts,
                                 samples=args.samples, seed=args.seed, split_cap=args.split_cap,
                                 tol=args.tol)
    doc = {"kind": "check-monotone", "ok": rep.ok, "pairs_checked": rep.pairs_checked,
           "splits_checked": rep.splits_checked, "violations": rep.n_violations,
           "worst_deficit": rep.worst_deficit,
           "examples": [{"first": list(v.first), "second": list(v.second), "split": list(v.split),
                         "deficit": v.deficit} for v in rep.violations]}
    _emit(args, doc)
    _summary([f"{rep.pairs_checked} pairs, {rep.splits_checked} splits: {rep.n_violations} violations"])


def cmd_entropic(args):
    rho = _density_or_diamond(args)
    fam = pairwise_family(parse_pair_cost(args.cost))
    sol = E.solve_entropic(rho, args.nmax, fam, args.temp, tol=args.tol, max_iter=args.max_iter)
    doc = {"kind": "entropic", "T": sol.T, "psi": sol.psi, "log_Z": sol.log_Z,
           "free_energy": sol.free_energy, "primal_value": sol.primal_value,
           "dual_value": sol.dual_value(rho), "cost_value": sol.cost_value,
           "relative_entropy": sol.entropy, "density_residual": sol.density_residual,
           "iterations": sol.iterations, "plan": plan_to_dict(sol.plan)}
    _emit(args, doc)
    _summary([f"T={sol.T:g}: value {sol.primal_value:.12g}, residual {sol.density_residual:.1e}"])


def cmd_tsweep(args):
    rho = _density_or_diamond(args)
    fam = pairwise_family(parse_pair_cost(args.cost))
    table = E.temperature_sweep(rho, args.nmax, fam, parse_temps(args.temps), tol=args.tol)
    rows = list(table.csv_rows())
    if args.csv:
        write_csv(args.csv, rows)
    doc = {"kind": "tsweep", "nondecreasing": table.nondecreasing, "concave": table.concave,
           "pinsker_ok": all(r.pinsker_ok for r in table.rows), "csv": args.csv}
    if args.lp:
        doc["lp_value"] = lp.solve(rho, args.nmax, fam).value
    if not args.csv:
        doc["rows"] = rows[1:]
    _emit(args, doc)
    _summary([f"{len(table.rows)} temperatures; nondecreasing {table.nondecreasing}, concave {table.concave}"])


def reproduce(tag: str, out_dir: Path, threads: int = 1) -> list[Path]:
    """Write plot-ready data for one figure tag; return the files written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if tag == "fig1-geometry":
        path = out_dir / "fig1-geometry.json"
        path.write_text(dumps({"kind": "fig1-geometry", **diamond_report(0.7)}))
        return [path]
    if tag == "fig2-tcurve":
        path = out_dir / "fig2-tcurve.csv"
        curve = HF.tcurve(np.linspace(0.05, 0.95, 181), threads=threads)
        path.write_text(csv_text(curve.rows()), newline="")
        return [path]
    if tag == "fig3-region":
        path = out_dir / "fig3-region.csv"
        xs = np.linspace(-3.0, 3.0, 61)
        ys = np.linspace(-3.0, 3.0, 61)
        scan = HF.region_scan(xs, ys, threads=threads)
        rows = [["x", "y", "valid", "non_canonical"]]
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                rows.append([repr(float(x)), repr(float(y)), str(int(scan.valid[iy, ix])),
                             str(int(scan.mask[iy, ix]))])
        path.write_text(csv_text(rows), newline="")
        return [path]
    if tag == "fig4-multiscale":
        path = out_dir / "fig4-multiscale.json"
        doc = {"kind": "fig4-multiscale", "t": 0.7, "configurations": []}
        for k in (2, 3):
            rep = multiscale_report(k)
            pts = HF.multiscale_points(k)
            doc["configurations"].append({"k": k, "scales": rep["scales"], "points": pts,
                                          "support": rep["support"], "warnings": rep["warnings"]})
        path.write_text(dumps(doc))
        return [path]
    raise UsageError(f"unknown figure tag {tag!r}; known: {', '.join(FIGURES)}")


def cmd_reproduce(args):
    files = reproduce(args.tag, Path(args.out_dir), args.threads)
    _emit(args, {"kind": "reproduce", "tag": args.tag, "files": [str(f) for f in files]})
    _summary([f"wrote {f}" for f in files])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gcot", description="Grand-canonical optimal transport toolkit.")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default %(default)s)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for grid scans")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="write the JSON result here instead of stdout")
        return sp

    sp = add("solve", cmd_solve, "solve the truncated linear program")
    sp.add_argument("--density", required=True)
    sp.add_argument("--cost", default="riesz:s=1")
    sp.add_argument("--nmax", type=int, required=True)
    sp.add_argument("--exact", action="store_true", help="rational arithmetic")

    sp = add("diamond", cmd_diamond, "six-point half-filling example")
    sp.add_argument("--t", type=float, default=0.7)
    sp.add_argument("--cost", default="riesz:s=1")
    sp.add_argument("--no-lp", action="store_true", help="skip the LP cross-check")

    sp = add("tcurve", cmd_tcurve, "extreme-point costs along the diamond family")
    sp.add_argument("--from", dest="t_from", type=float, default=0.05)
    sp.add_argument("--to", dest="t_to", type=float, default=0.95)
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--cost", default="riesz:s=1")
    sp.add_argument("--csv", help="CSV output path")

    sp = add("multiscale", cmd_multiscale, "nested diamond configurations")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--scales", help="comma-separated scales, k-1 values")
    sp.add_argument("--t", type=float, default=0.7)

    sp = add("monge1d", cmd_monge1d, "one-dimensional deterministic plan")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--density", help="grid density JSON")
    src.add_argument("--uniform", help="a,b for the unit density on [a, b]")
    sp.add_argument("--kernel", default="inv:r")
    sp.add_argument("--crosscheck", type=int, metavar="CELLS", help="compare with the LP on this many cells")
    sp.add_argument("--quad-tol", type=float, default=1e-10)

    sp = add("bounds", cmd_bounds, "particle-number bounds")
    sp.add_argument("--theorem", required=True, choices=["bounded", "triangle", "coulomb", "doubling"])
    sp.add_argument("--mass", type=float)
    sp.add_argument("--m-lo", type=float)
    sp.add_argument("--M-hi", type=float)
    sp.add_argument("--Z", type=float, default=1.0)
    sp.add_argument("--density")
    sp.add_argument("--cost")
    sp.add_argument("--r", type=float)
    sp.add_argument("--C", type=float)

    sp = add("check-monotone", cmd_check_monotone, "pairwise exchange test on a plan")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--cost", default="riesz:s=1")
    sp.add_argument("--density", help="supplies atom positions when the plan has none")
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--split-cap", type=int, default=12)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = add("entropic", cmd_entropic, "positive-temperature problem")
    sp.add_argument("--density", help="defaults to the diamond at t=0.7")
    sp.add_argument("--cost", default="riesz:s=1")
    sp.add_argument("--nmax", type=int, default=6)
    sp.add_argument("--temp", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--max-iter", type=int, default=100_000)

    sp = add("tsweep", cmd_tsweep, "temperature sweep")
    sp.add_argument("--density", help="defaults to the diamond at t=0.7")
    sp.add_argument("--cost", default="riesz:s=1")
    sp.add_argument("--nmax", type=int, default=6)
    sp.add_argument("--temps", default="0.01:10:log:30")
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--lp", action="store_true", help="also report the zero-temperature LP value")
    sp.add_argument("--csv")

    sp = add("reproduce", cmd_reproduce, "write figure data")
    sp.add_argument("tag")
    sp.add_argument("--out-dir", default=".")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, CostSpecError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except lp.InfeasibleError as exc:
        print(f"infeasible: {exc} (row {exc.row})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except lp.SizeCapExceeded as exc:
        print(f"size cap: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except lp.NonConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return EXIT_OK


def main():
    sys.exit(run())
