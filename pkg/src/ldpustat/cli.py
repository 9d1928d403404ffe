"""Command-line front end: ingestion, computation, and CSV/JSON emission.

Every subcommand is deterministic given its inputs and --seed; primary
outputs carry no timestamps, so repeated runs are byte-identical.  Exit
codes: 0 success / all checks passed, 1 a requested check failed, 2 bad
input (missing file, malformed CSV, invalid arguments).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io as uio
from .functionals import TiltProfile
from .gibbs import (
    GibbsModel,
    complete_graph_model,
    estimate_logz_ti,
    exact_logz,
    exact_logz_complete,
    glauber_chain,
    tail_probability_exact,
)
from .kernel import (
    DEFAULT_EXACT_LIMIT,
    StepKernel,
    check_assumptions,
    cut_distance,
    cut_norm_exact,
    cut_norm_heuristic,
    degree_profile,
    embed_matrix,
    lp_norm,
    weak_cut_distance,
)
from .ustat import Motif, local_field, u_statistic, uv_gap, v_statistic
from .variational import (
    SolveConfig,
    constrained_rate,
    legendre_rate,
    solve_z_generic,
    solve_z_multilinear,
    solve_z_potts,
)
from .verify import ALL_CHECKS, run_check


def _emit(args, payload, artifacts=None):
    """Write the result JSON (and artifact CSVs) to --out, or print JSON."""
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        uio.write_json(os.path.join(args.out, "result.json"), payload)
        for name, (header, rows) in (artifacts or {}).items():
            uio.write_csv(os.path.join(args.out, f"{name}.csv"), header, rows)
    else:
        print(uio.dumps_json(payload))


def _load_kernel(args) -> StepKernel:
    if getattr(args, "w", None):
        return uio.read_kernel_csv(args.w)
    if getattr(args, "matrix", None):
        return embed_matrix(uio.read_matrix_csv(args.matrix))
    raise ValueError("need --w KERNEL.csv or --matrix MATRIX.csv")


def _parse_r(text: str) -> float:
    return math.inf if text in ("inf", "oo") else float(text)


def _grid(text: str) -> np.ndarray:
    """'0:1:21' for linspace, or comma-separated values."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    return np.array([float(v) for v in text.split(",")])


def _solve_cfg(args) -> SolveConfig:
    return SolveConfig(blocks=args.blocks, seed=args.seed,
                       multistart=args.multistart)


def _profile_payload(profile: TiltProfile):
    if profile.is_potts:
        return [[float(v) for v in row] for row in profile.values]
    return [float(v) for v in profile.values]


# ---------------------------------------------------------------------------
# kernel subcommands

def cmd_kernel(args) -> int:
    op = args.kernel_op
    if op == "cutnorm":
        w = _load_kernel(args)
        if w.m <= args.exact_limit:
            value, exact = cut_norm_exact(w, args.exact_limit), True
        else:
            value, exact = cut_norm_heuristic(w, args.restarts, args.seed), False
        _emit(args, {"op": "cutnorm", "value": value, "certified_exact": exact,
                     "blocks": w.m})
        return 0
    if op == "cutdist":
        w1, w2 = _load_two_kernels(args)
        value = cut_distance(w1, w2, args.exact_limit, args.restarts, args.seed)
        _emit(args, {"op": "cutdist", "value": value})
        return 0
    if op == "weakcut":
        w1, w2 = _load_two_kernels(args)
        res = weak_cut_distance(w1, w2, budget=args.budget, seed=args.seed)
        _emit(args, {"op": "weakcut", "value": res.value,
                     "certified_exact": res.certified_exact,
                     "permutation": [int(p) for p in res.permutation]})
        return 0
    if op == "norms":
        w = _load_kernel(args)
        tokens = args.r.split(",")
        _emit(args, {"op": "norms",
                     "norms": {tok: lp_norm(w, _parse_r(tok)) for tok in tokens}})
        return 0
    if op == "degrees":
        w = _load_kernel(args)
        prof = degree_profile(w)
        _emit(args, {"op": "degrees",
                     "breakpoints": list(prof.breakpoints),
                     "values": list(prof.values),
                     "integral": prof.integral(), "sup": prof.sup()})
        return 0
    if op == "assumptions":
        wn = uio.read_kernel_csv(args.wn)
        w = uio.read_kernel_csv(args.w)
        motif = uio.read_motif(args.motif)
        report = check_assumptions(wn, w, motif, p=args.p, q=args.q)
        _emit(args, report.to_dict())
        return 0
    raise ValueError(f"unknown kernel op {op!r}")


def _load_two_kernels(args):
    if args.w and args.w2:
        return uio.read_kernel_csv(args.w), uio.read_kernel_csv(args.w2)
    if args.matrix and args.matrix2:
        return (embed_matrix(uio.read_matrix_csv(args.matrix)),
                embed_matrix(uio.read_matrix_csv(args.matrix2)))
    raise ValueError("need --w/--w2 or --matrix/--matrix2")


# ---------------------------------------------------------------------------
# ustat subcommands

def _load_model_pieces(args):
    motif = uio.read_motif(args.motif)
    mu = uio.parse_measure_spec(args.mu)
    phi = uio.parse_phi_spec(args.phi, mu, motif.v)
    q = uio.read_matrix_csv(args.matrix)
    return motif, q, mu, phi


def cmd_ustat(args) -> int:
    motif, q, mu, phi = _load_model_pieces(args)
    data = uio.read_data_csv(args.data, k=mu.k)
    if args.ustat_op == "eval":
        u = u_statistic(motif, q, data, phi)
        v = v_statistic(motif, q, data, phi)
        _emit(args, {"op": "eval", "u": u, "v": v, "n": int(data.size)})
        return 0
    if args.ustat_op == "gap":
        _emit(args, {"op": "gap", "gap": uv_gap(motif, q, data, phi)})
        return 0
    if args.ustat_op == "localfield":
        fld = local_field(motif, q, data, phi, args.site)
        _emit(args, {"op": "localfield", "site": args.site,
                     "field": [float(f) for f in fld]})
        return 0
    raise ValueError(f"unknown ustat op {args.ustat_op!r}")


# ---------------------------------------------------------------------------
# solve subcommands

def _solve_result_payload(res):
    return {
        "z_value": res.value,
        "optimizers": [_profile_payload(f) for f in res.optimizers],
        "t_values": res.t_values,
        "residuals": res.residuals,
        "flags": res.flags,
    }


def cmd_solve(args) -> int:
    mu = uio.parse_measure_spec(args.mu)
    motif = uio.read_motif(args.motif) if args.motif else Motif.edge()
    if args.w:
        w = uio.read_kernel_csv(args.w)
    elif args.matrix:
        w = embed_matrix(uio.read_matrix_csv(args.matrix))
    else:
        w = StepKernel.constant(1.0, args.blocks)
    cfg = _solve_cfg(args)
    if args.solve_op == "zlimit":
        if args.family == "multilinear":
            res = solve_z_multilinear(motif, w, mu, args.theta, cfg)
        elif args.family == "potts":
            res = solve_z_potts(motif, w, mu, args.theta, cfg)
        else:
            phi = uio.parse_phi_spec(args.phi, mu, motif.v)
            res = solve_z_generic(motif, w, mu, phi, args.theta, cfg)
        payload = {"op": "zlimit", "theta": args.theta, "family": args.family}
        payload.update(_solve_result_payload(res))
        _emit(args, payload)
        return 0
    if args.solve_op == "rate":
        phi = (uio.parse_phi_spec(args.phi, mu, motif.v)
               if args.family == "generic" else None)
        curve = legendre_rate(motif, w, mu, args.family, _grid(args.grid), cfg,
                              phi=phi)
        rows = curve.rows()
        payload = {"op": "rate", "family": args.family,
                   "points": [{"theta": th, "z": z, "t": t, "rate": r,
                               "flagged": bool(fl)} for th, z, t, r, fl in rows]}
        _emit(args, payload, artifacts={"rate_curve":
                                        (("theta", "z", "t", "rate", "flagged"), rows)})
        return 0
    if args.solve_op == "constrained":
        res = constrained_rate(motif, w, mu, args.family, args.t, cfg)
        _emit(args, {"op": "constrained", "t": args.t, "rate": res.value,
                     "witness": _profile_payload(res.witness),
                     "multiplier": res.multiplier,
                     "constraint_gap": res.constraint_gap,
                     "converged": res.converged})
        return 0 if res.converged else 1
    raise ValueError(f"unknown solve op {args.solve_op!r}")


# ---------------------------------------------------------------------------
# gibbs subcommands

def _build_model(args) -> GibbsModel:
    if args.family and args.n:
        mu = uio.parse_measure_spec(args.mu)
        return complete_graph_model(args.family, args.n, mu, args.theta)
    motif, q, mu, phi = _load_model_pieces(args)
    return GibbsModel(motif, q, phi, mu, args.theta)


def cmd_gibbs(args) -> int:
    if args.gibbs_op == "exact-logz":
        model = _build_model(args)
        _emit(args, {"op": "exact-logz", "theta": args.theta,
                     "value": exact_logz(model)})
        return 0
    if args.gibbs_op == "exact-logz-complete":
        mu = uio.parse_measure_spec(args.mu)
        value = exact_logz_complete(args.family, args.n, args.theta, mu)
        _emit(args, {"op": "exact-logz-complete", "family": args.family,
                     "n": args.n, "theta": args.theta, "value": value})
        return 0
    if args.gibbs_op == "chain":
        model = _build_model(args)
        rec = glauber_chain(model, sweeps=args.sweeps, burn_in=args.burnin,
                            thin=args.thin, seed=args.seed,
                            record_blocks=args.blocks)
        payload = {"op": "chain", "metadata": rec.metadata,
                   "mean_u": float(rec.u_n.mean()),
                   "recorded_sweeps": int(rec.sweeps.size)}
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            rec.to_csv(os.path.join(args.out, "chain.csv"))
        _emit(args, payload)
        return 0
    if args.gibbs_op == "ti":
        model = _build_model(args)
        est = estimate_logz_ti(model, _grid(args.grid), sweeps=args.sweeps,
                               burn_in=args.burnin, thin=args.thin,
                               seed=args.seed)
        _emit(args, {"op": "ti", "value": est.value, "stat_error": est.stderr,
                     "truncation": est.truncation,
                     "total_error": est.total_error},
              artifacts={"ti_nodes": (("theta", "mean_u", "stderr"),
                                      list(zip(est.node_thetas, est.node_means,
                                               est.node_stderr)))})
        return 0
    if args.gibbs_op == "tail":
        ns = [int(v) for v in args.n_list.split(",")] if args.n_list else [args.n]
        mu = uio.parse_measure_spec(args.mu)
        rates = tail_probability_exact(
            lambda n: complete_graph_model(args.family, n, mu, 0.0),
            args.t, ns)
        _emit(args, {"op": "tail", "t": args.t,
                     "rates": {str(n): r for n, r in zip(ns, rates)}})
        return 0
    raise ValueError(f"unknown gibbs op {args.gibbs_op!r}")


# ---------------------------------------------------------------------------
# verify subcommands

def cmd_verify(args) -> int:
    names = sorted(ALL_CHECKS) if args.check == "all" else [args.check]
    reports = []
    for name in names:
        kwargs = {}
        if name == "mcmc-z" and args.sweeps:
            kwargs["sweeps"] = args.sweeps
        rep = run_check(name, **kwargs)
        reports.append(rep)
        print(rep.summary_line())
    payload = {
        "checks": [{"name": r.name, "passed": r.passed, "details": r.details}
                   for r in reports],
        "all_passed": all(r.passed for r in reports),
    }
    artifacts = {}
    for r in reports:
        for aname, (header, rows) in r.artifacts.items():
            artifacts[f"{r.name}_{aname}"] = (header, rows)
    _emit(args, payload, artifacts)
    return 0 if payload["all_passed"] else 1


# ---------------------------------------------------------------------------
# parser

def _add_common(p):
    p.add_argument("--out", help="output directory (JSON + CSV artifacts)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file with default argument values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ldpustat",
        description="U/V-statistics on weighted graphs, cut norms, mean-field "
                    "limits, Gibbs samplers, and their verification oracles")
    sub = ap.add_subparsers(dest="command", required=True)

    pk = sub.add_parser("kernel", help="cut norms, distances, and validators")
    pk.add_argument("kernel_op", choices=["cutnorm", "cutdist", "weakcut",
                                          "norms", "degrees", "assumptions"])
    pk.add_argument("--matrix")
    pk.add_argument("--matrix2")
    pk.add_argument("--w")
    pk.add_argument("--w2")
    pk.add_argument("--wn")
    pk.add_argument("--motif")
    pk.add_argument("--r", default="1,2,inf")
    pk.add_argument("--p", type=_parse_r, default=math.inf)
    pk.add_argument("--q", type=_parse_r, default=2.0)
    pk.add_argument("--exact-limit", type=int, default=DEFAULT_EXACT_LIMIT)
    pk.add_argument("--restarts", type=int, default=8)
    pk.add_argument("--budget", type=int, default=4000)
    _add_common(pk)
    pk.set_defaults(func=cmd_kernel)

    pu = sub.add_parser("ustat", help="evaluate U/V statistics on data")
    pu.add_argument("ustat_op", choices=["eval", "gap", "localfield"])
    pu.add_argument("--motif", required=True)
    pu.add_argument("--matrix", required=True)
    pu.add_argument("--data", required=True)
    pu.add_argument("--phi", default="product")
    pu.add_argument("--mu", default="rademacher")
    pu.add_argument("--site", type=int, default=0)
    _add_common(pu)
    pu.set_defaults(func=cmd_ustat)

    ps = sub.add_parser("solve", help="limiting variational problems")
    ps.add_argument("solve_op", choices=["zlimit", "rate", "constrained"])
    ps.add_argument("--family", choices=["multilinear", "potts", "generic"],
                    default="multilinear")
    ps.add_argument("--motif")
    ps.add_argument("--w")
    ps.add_argument("--matrix")
    ps.add_argument("--mu", default="rademacher")
    ps.add_argument("--phi", default="product")
    ps.add_argument("--theta", type=float, default=1.0)
    ps.add_argument("--t", type=float, default=0.0)
    ps.add_argument("--grid", default="0:1:11")
    ps.add_argument("--blocks", type=int, default=1)
    ps.add_argument("--multistart", type=int, default=12)
    _add_common(ps)
    ps.set_defaults(func=cmd_solve)

    pg = sub.add_parser("gibbs", help="finite-n Gibbs oracles and samplers")
    pg.add_argument("gibbs_op", choices=["exact-logz", "exact-logz-complete",
                                         "chain", "ti", "tail"])
    pg.add_argument("--family", choices=["ising", "potts"])
    pg.add_argument("--n", type=int)
    pg.add_argument("--n-list")
    pg.add_argument("--motif")
    pg.add_argument("--matrix")
    pg.add_argument("--phi", default="product")
    pg.add_argument("--mu", default="rademacher")
    pg.add_argument("--theta", type=float, default=1.0)
    pg.add_argument("--t", type=float, default=0.25)
    pg.add_argument("--grid", default="0:1:11")
    pg.add_argument("--sweeps", type=int, default=2000)
    pg.add_argument("--burnin", type=int, default=500)
    pg.add_argument("--thin", type=int, default=1)
    pg.add_argument("--blocks", type=int, default=None)
    _add_common(pg)
    pg.set_defaults(func=cmd_gibbs)

    pv = sub.add_parser("verify", help="acceptance scenarios with pass/fail")
    pv.add_argument("check", choices=sorted(ALL_CHECKS) + ["all"])
    pv.add_argument("--sweeps", type=int, default=None,
                    help="override sweep count for mcmc-z")
    _add_common(pv)
    pv.set_defaults(func=cmd_verify)

    return ap


def _apply_config(args, argv):
    """--config JSON supplies defaults; explicit flags win on conflict."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        defaults = json.load(fh)
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        # a flag explicitly present on the command line takes precedence
        flag = f"--{key}"
        if any(a == flag or a.startswith(flag + "=") for a in argv):
            continue
        setattr(args, attr, value)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args, argv)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (uio.FileFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
