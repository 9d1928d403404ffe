"""Solvers for the limiting Gibbs optimization problems and rate functions.

The unconstrained problem maximizes theta * G(profile) minus a KL penalty;
its stationary points are damped mean-field fixed points (tilt of the base
measure by theta times the functional gradient).  The real-profile solver
iterates in the natural-parameter space, where the tilt cost is closed form.
Multistart plus a constant-profile pre-solve reports the optimizer *set*,
since phase coexistence makes it non-singleton.  Rate functions come two
ways: a Legendre sweep over theta, and a direct augmented-Lagrangian solve
of the constrained problem; the acceptance checks compare them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .functionals import TiltProfile, _axis, _edge_grid
from .kernel import StepKernel
from .tilt import FiniteBaseMeasure, gamma, inverse_mean, kl_vector, log_mgf, mean_map
from .ustat import Motif, PhiKernel

__all__ = [
    "SolveConfig",
    "SolveResult",
    "InfeasibleTargetError",
    "solve_z_multilinear",
    "solve_z_potts",
    "solve_z_generic",
    "legendre_rate",
    "RateCurve",
    "RatePoint",
    "constrained_rate",
    "ConstrainedRate",
]


class InfeasibleTargetError(ValueError):
    """Requested constraint level is outside the observed achievable range."""


@dataclass(frozen=True)
class SolveConfig:
    blocks: int = 8
    damping: float = 0.5
    tol: float = 1e-11
    max_iter: int = 3000
    multistart: int = 16
    seed: int = 0
    theta_grid: tuple = ()
    const_grid: int = 201
    dedup_tol: float = 1e-5
    t_flag_tol: float = 1e-6
    residual_tol: float = 1e-8


@dataclass(frozen=True)
class SolveResult:
    value: float
    optimizers: list
    residuals: list
    t_values: list
    diagnostics: list
    flags: dict

    @property
    def optimizer(self) -> TiltProfile:
        return self.optimizers[0]


class _MotifSums:
    """Cached edge-product grid for fast G and gradient evaluations."""

    def __init__(self, motif: Motif, w: StepKernel):
        self.v = motif.v
        self.m = w.m
        self.widths = w.widths
        self.edge = _edge_grid(motif, w.values)
        self._other_axes = [tuple(b for b in range(self.v) if b != a)
                            for a in range(self.v)]

    def value(self, fv: np.ndarray) -> float:
        grid = self.edge
        weighted = fv * self.widths
        for a in range(self.v):
            grid = grid * _axis(weighted, a, self.v)
        return float(grid.sum())

    def gradient(self, fv: np.ndarray) -> np.ndarray:
        weighted = fv * self.widths
        out = np.zeros(self.m)
        for a in range(self.v):
            grid = self.edge
            for b in range(self.v):
                if b != a:
                    grid = grid * _axis(weighted, b, self.v)
            out = out + (grid.sum(axis=self._other_axes[a]) if self.v > 1 else grid)
        return out

    def rows_value(self, rows: np.ndarray) -> float:
        return float(sum(self.value(rows[:, r]) for r in range(rows.shape[1])))

    def rows_gradient(self, rows: np.ndarray) -> np.ndarray:
        return np.stack([self.gradient(rows[:, r]) for r in range(rows.shape[1])],
                        axis=1)


def _start_seeds(cfg: SolveConfig, count: int):
    return np.random.SeedSequence(cfg.seed).spawn(max(count, 1))


def _damped_fixed_point(f0, step, objective, cfg):
    """Damped iteration with objective-decrease safeguarding; maximizes."""
    f = np.asarray(f0, dtype=float)
    lam = cfg.damping
    obj = objective(f)
    iters = 0
    for iters in range(1, cfg.max_iter + 1):
        target = step(f)
        cand = (1.0 - lam) * f + lam * target
        cand_obj = objective(cand)
        if not np.isfinite(cand_obj) or cand_obj < obj - 1e-13:
            lam *= 0.5
            if lam < 1e-7:
                break
            continue
        moved = float(np.max(np.abs(cand - f)))
        f, obj = cand, cand_obj
        lam = min(cfg.damping, lam * 1.25)
        if moved < cfg.tol * max(1.0, float(np.max(np.abs(f)))):
            break
    return f, obj, iters


def _dedup_indices(profiles, values, widths, cfg):
    order = sorted(range(len(profiles)),
                   key=lambda i: (-values[i], tuple(np.atleast_1d(profiles[i]).ravel())))
    kept = []
    for i in order:
        dup = False
        for j in kept:
            diff = np.abs(profiles[i] - profiles[j])
            if diff.ndim == 2:
                diff = diff.sum(axis=1)
            if float(widths @ diff) < cfg.dedup_tol:
                dup = True
                break
        if not dup:
            kept.append(i)
    return kept


def _collect(starts, step, objective, residual, cfg, widths, make_profile, t_of,
             canon=None):
    profiles, values, residuals, diagnostics = [], [], [], []
    for s_idx, f0 in enumerate(starts):
        f, obj, iters = _damped_fixed_point(f0, step, objective, cfg)
        res = residual(f)
        ok = res <= cfg.residual_tol
        diagnostics.append({"start": s_idx, "iterations": iters,
                            "converged": bool(ok), "value": obj, "residual": res})
        if ok:
            profiles.append(f)
            values.append(obj)
            residuals.append(res)
    if not profiles:
        best = max(diagnostics, key=lambda d: d["value"])
        raise RuntimeError(
            "no start reached the stationarity tolerance; best non-converged "
            f"iterate: value={best['value']:.6g} residual={best['residual']:.3g} "
            f"after {best['iterations']} iterations")
    # deduplicate in profile space so saturated natural parameters compare fairly
    canon_profiles = [canon(f) for f in profiles] if canon else profiles
    kept_idx = _dedup_indices(canon_profiles, values, widths, cfg)
    best = max(values[i] for i in kept_idx)
    sel = [i for i in kept_idx if values[i] >= best - 1e-8]
    opt = [profiles[i] for i in sel]
    opt_res = [residuals[i] for i in sel]
    t_values = [t_of(profiles[i]) for i in sel]
    flags = {
        "multiple_optimizers": len(opt) > 1,
        "distinct_t_values": (max(t_values) - min(t_values)) > cfg.t_flag_tol,
        "non_converged_starts": sum(1 for d in diagnostics if not d["converged"]),
    }
    return SolveResult(best, [make_profile(f) for f in opt], opt_res,
                       [float(t) for t in t_values], diagnostics, flags)


def _local_maxima(vals, top=6):
    idx = [i for i in range(len(vals))
           if (i == 0 or vals[i] >= vals[i - 1])
           and (i == len(vals) - 1 or vals[i] >= vals[i + 1])]
    idx.sort(key=lambda i: -vals[i])
    return idx[:top]


def solve_z_multilinear(motif: Motif, w: StepKernel, mu: FiniteBaseMeasure,
                        theta: float, cfg: SolveConfig | None = None) -> SolveResult:
    """Limit log-partition for the product kernel: sup over real profiles of
    theta * G1(f) minus the integrated tilt cost of f.

    Iterates h <- theta * grad G1(mean_map(h)) in natural-parameter space,
    damped and multistarted; the profile f = mean_map(h) is then always an
    exact tilt mean, making the objective closed form.  Every reported
    optimizer satisfies beta(f) = theta * grad G1(f) within the residual
    tolerance.
    """
    cfg = cfg or SolveConfig()
    sums = _MotifSums(motif, w)
    widths = w.widths
    m = w.m

    def objective_h(h):
        f = mean_map(mu, h)
        return theta * sums.value(f) - float(widths @ (h * f - log_mgf(mu, h)))

    def step_h(h):
        return theta * sums.gradient(mean_map(mu, h))

    def residual_h(h):
        return float(np.max(np.abs(h - step_h(h))))

    # constant-profile pre-solve in mean space: certified lower bound + starts
    lo, hi = mu.min_atom, mu.max_atom
    span = hi - lo
    grid = np.linspace(lo + 1e-9 * span, hi - 1e-9 * span, cfg.const_grid)
    t_one = sums.value(np.ones(m))
    const_vals = theta * t_one * grid**motif.v - gamma(mu, grid)
    beta_grid = inverse_mean(mu, grid)
    starts = [np.full(m, beta_grid[i]) for i in _local_maxima(const_vals)]
    starts.append(np.zeros(m))
    seeds = _start_seeds(cfg, cfg.multistart)
    while len(starts) < cfg.multistart:
        rng = np.random.default_rng(seeds[len(starts) % len(seeds)])
        starts.append(rng.normal(scale=2.0, size=m))

    def make_profile(h):
        return TiltProfile(mean_map(mu, h), w.breakpoints)

    return _collect(starts, step_h, objective_h, residual_h, cfg, widths,
                    make_profile, t_of=lambda h: sums.value(mean_map(mu, h)),
                    canon=lambda h: mean_map(mu, h))


def _softmax_rows(logits):
    logits = logits - logits.max(axis=1, keepdims=True)
    out = np.exp(logits)
    return out / out.sum(axis=1, keepdims=True)


def _simplex_grid(c, steps):
    """Probability vectors with coordinates on a regular simplex grid."""
    pts = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            pts.append(np.array(prefix + [remaining], dtype=float) / steps)
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, slots - 1)

    rec([], steps, c)
    return pts


def _row_entropy_cost(rows, logmu):
    safe = np.clip(rows, 1e-300, None)
    return (rows * (np.log(safe) - logmu)).sum(axis=1)


def solve_z_potts(motif: Motif, w: StepKernel, mu: FiniteBaseMeasure,
                  theta: float, cfg: SolveConfig | None = None) -> SolveResult:
    """Limit log-partition for the all-equal kernel: sup over color profiles
    of theta * G2(f) minus the color relative entropy, via a damped softmax
    fixed point f_r(u) proportional to mu_r exp(theta * grad_r(u))."""
    cfg = cfg or SolveConfig()
    sums = _MotifSums(motif, w)
    widths = w.widths
    m, c = w.m, mu.k
    logmu = mu.log_probs

    def objective(rows):
        return theta * sums.rows_value(rows) - float(widths @ _row_entropy_cost(rows, logmu))

    def step(rows):
        return _softmax_rows(logmu + theta * sums.rows_gradient(rows))

    def residual(rows):
        return float(np.max(np.abs(rows - step(rows))))

    t_one = sums.value(np.ones(m))
    const_pts = _simplex_grid(c, 40 if c <= 3 else 12)
    const_vals = np.array([
        theta * t_one * float((p**motif.v).sum())
        - float((p * (np.log(np.clip(p, 1e-300, None)) - logmu)).sum())
        for p in const_pts
    ])
    order = np.argsort(-const_vals)[:6]
    starts = [np.tile(const_pts[i], (m, 1)) for i in order]
    starts.append(np.tile(mu.probs, (m, 1)))
    for r in range(c):
        sharp = np.full(c, 0.02 / max(c - 1, 1))
        sharp[r] = 1.0 - sharp.sum() + sharp[r]
        starts.append(np.tile(sharp, (m, 1)))
    seeds = _start_seeds(cfg, cfg.multistart)
    while len(starts) < cfg.multistart:
        rng = np.random.default_rng(seeds[len(starts) % len(seeds)])
        starts.append(rng.dirichlet(np.ones(c), size=m))

    def make_profile(rows):
        return TiltProfile(rows, w.breakpoints)

    return _collect(starts, step, objective, residual, cfg, widths,
                    make_profile, t_of=sums.rows_value)


def solve_z_generic(motif: Motif, w: StepKernel, mu: FiniteBaseMeasure,
                    phi: PhiKernel, theta: float,
                    cfg: SolveConfig | None = None) -> SolveResult:
    """Limit log-partition over block measures for an arbitrary phi table:
    damped blockwise tilts of mu by the phi-local field."""
    cfg = cfg or SolveConfig()
    if phi.arity != motif.v:
        raise ValueError("phi arity must match the motif order")
    if phi.k != mu.k:
        raise ValueError("phi and mu must share the atom alphabet")
    m, k = w.m, mu.k
    widths = w.widths
    logmu = mu.log_probs
    edge = _edge_grid(motif, w.values)
    v = motif.v

    def t_value(rows):
        weighted = widths[:, None] * rows
        contracted = phi.table
        for _ in range(v):
            contracted = np.tensordot(contracted, weighted, axes=([0], [1]))
        return float((edge * contracted).sum())

    def field(rows):
        weighted = widths[:, None] * rows
        out = np.zeros((m, k))
        for a in range(v):
            contracted = np.moveaxis(phi.table, a, -1)
            for _ in range(v - 1):
                contracted = np.tensordot(contracted, weighted, axes=([0], [1]))
            contracted = np.moveaxis(contracted, 0, -1)
            contracted = np.expand_dims(contracted, axis=a)
            prod = edge[..., None] * contracted
            out += prod.sum(axis=tuple(b for b in range(v) if b != a))
        return out

    def objective(rows):
        return theta * t_value(rows) - float(widths @ _row_entropy_cost(rows, logmu))

    def step(rows):
        return _softmax_rows(logmu + theta * field(rows))

    def residual(rows):
        return float(np.max(np.abs(rows - step(rows))))

    starts = [np.tile(mu.probs, (m, 1))]
    for r in range(k):
        sharp = np.full(k, 0.02 / max(k - 1, 1))
        sharp[r] = 1.0 - sharp.sum() + sharp[r]
        starts.append(np.tile(sharp, (m, 1)))
    seeds = _start_seeds(cfg, cfg.multistart)
    while len(starts) < cfg.multistart:
        rng = np.random.default_rng(seeds[len(starts) % len(seeds)])
        starts.append(rng.dirichlet(np.ones(k), size=m))

    def make_profile(rows):
        return TiltProfile(rows, w.breakpoints)

    return _collect(starts, step, objective, residual, cfg, widths,
                    make_profile, t_of=t_value)


@dataclass(frozen=True)
class RatePoint:
    theta: float
    z: float
    t_values: tuple
    rates: tuple
    flagged: bool
    n_optimizers: int


@dataclass(frozen=True)
class RateCurve:
    family: str
    points: list

    def rows(self):
        out = []
        for p in self.points:
            for t, r in zip(p.t_values, p.rates):
                out.append((p.theta, p.z, t, r, int(p.flagged)))
        return out

    def t_range(self):
        ts = [t for p in self.points for t in p.t_values]
        return min(ts), max(ts)


def _solve_family(family, motif, w, mu, theta, cfg, phi=None):
    if family == "multilinear":
        return solve_z_multilinear(motif, w, mu, theta, cfg)
    if family == "potts":
        return solve_z_potts(motif, w, mu, theta, cfg)
    if family == "generic":
        if phi is None:
            raise ValueError("generic family needs an explicit phi")
        return solve_z_generic(motif, w, mu, phi, theta, cfg)
    raise ValueError(f"unknown family {family!r}")


def legendre_rate(motif: Motif, w: StepKernel, mu: FiniteBaseMeasure,
                  family: str, theta_grid, cfg: SolveConfig | None = None,
                  phi: PhiKernel | None = None) -> RateCurve:
    """Parametric rate curve: per theta, t = G(optimizer) and rate = theta t - Z.

    Points where distinct optimizers give distinct t are flagged: the curve is
    not single-valued there (the derivative of Z jumps) and downstream
    consumers must skip them.
    """
    cfg = cfg or SolveConfig()
    points = []
    for theta in theta_grid:
        res = _solve_family(family, motif, w, mu, float(theta), cfg, phi)
        ts = []
        for t in sorted(res.t_values):
            if not ts or t - ts[-1] > cfg.t_flag_tol:
                ts.append(t)
        rates = tuple(float(theta) * t - res.value for t in ts)
        points.append(RatePoint(float(theta), res.value, tuple(ts), rates,
                                res.flags["distinct_t_values"], len(res.optimizers)))
    return RateCurve(family, points)


@dataclass(frozen=True)
class ConstrainedRate:
    value: float
    witness: TiltProfile
    multiplier: float
    constraint_gap: float
    converged: bool


def constrained_rate(motif: Motif, w: StepKernel, mu: FiniteBaseMeasure,
                     family: str, t: float, cfg: SolveConfig | None = None,
                     t_range: tuple | None = None,
                     multiplier0: float = 0.0) -> ConstrainedRate:
    """Rate at level t: minimize the KL cost subject to G(profile) = t, by the
    method of multipliers over profiles.

    The inner subproblem is the same damped mean-field iteration at the
    effective temperature lambda - rho (G - t); the multiplier update drives
    the constraint gap to zero.  Agrees with the Legendre curve at t = Z'(theta)
    away from flagged points.
    """
    cfg = cfg or SolveConfig()
    if family not in ("multilinear", "potts"):
        raise ValueError("constrained solves cover the multilinear and potts families")
    if t_range is None:
        t_range = _constant_t_range(motif, w, mu, family, cfg)
    slack = 1e-9 + 1e-6 * (t_range[1] - t_range[0])
    if not (t_range[0] - slack <= t <= t_range[1] + slack):
        raise InfeasibleTargetError(
            f"target {t} is outside the observed achievable range {t_range}")

    best = None
    for f0, lam_guess in _constrained_starts(motif, w, mu, family, t, cfg):
        lam0 = multiplier0 if multiplier0 != 0.0 else lam_guess
        cand = _constrained_single(motif, w, mu, family, t, cfg, f0, lam0)
        better = best is None or (cand.converged and not best.converged) or (
            cand.converged == best.converged and cand.value < best.value)
        if better:
            best = cand
    return best


def _constant_t_range(motif, w, mu, family, cfg):
    sums = _MotifSums(motif, w)
    t_one = sums.value(np.ones(w.m))
    if family == "multilinear":
        grid = np.linspace(mu.min_atom, mu.max_atom, cfg.const_grid)
        vals = t_one * grid**motif.v
    else:
        pts = _simplex_grid(mu.k, 30 if mu.k <= 3 else 10)
        vals = np.array([t_one * float((p**motif.v).sum()) for p in pts])
    return float(vals.min()), float(vals.max())


def _constrained_starts(motif, w, mu, family, t, cfg):
    """Start points paired with a multiplier guess from constant stationarity."""
    m = w.m
    sums = _MotifSums(motif, w)
    t_one = sums.value(np.ones(m))
    starts = []
    if family == "multilinear":
        lo, hi = mu.min_atom, mu.max_atom
        span = hi - lo
        grid = np.linspace(lo + 1e-9 * span, hi - 1e-9 * span, cfg.const_grid)
        gap = np.abs(t_one * grid**motif.v - t)
        for i in np.argsort(gap)[:4]:
            mc = grid[i]
            h0 = np.full(m, inverse_mean(mu, mc))
            dgc = motif.v * t_one * mc ** (motif.v - 1)
            lam0 = float(h0[0] / dgc) if abs(dgc) > 1e-12 else 0.0
            starts.append((h0, lam0))
        starts.append((np.zeros(m), 0.0))
        return starts
    pts = _simplex_grid(mu.k, 20 if mu.k <= 3 else 8)
    gaps = [abs(t_one * float((p**motif.v).sum()) - t) for p in pts]
    for i in np.argsort(gaps)[:4]:
        p = np.clip(pts[i], 1e-6, None)
        p /= p.sum()
        rows = np.tile(p, (m, 1))
        grad = motif.v * t_one * p ** (motif.v - 1)
        target = np.log(p / mu.probs)
        gc, tc = grad - grad.mean(), target - target.mean()
        denom = float(gc @ gc)
        lam0 = float(gc @ tc / denom) if denom > 1e-12 else 0.0
        starts.append((rows, lam0))
    starts.append((np.tile(mu.probs, (m, 1)), 0.0))
    return starts


def _constrained_single(motif, w, mu, family, t, cfg, f0, lam0):
    sums = _MotifSums(motif, w)
    widths = w.widths
    logmu = mu.log_probs

    if family == "multilinear":
        def g_of(h):
            return sums.value(mean_map(mu, h))

        def d_of(h):
            f = mean_map(mu, h)
            return float(widths @ (h * f - log_mgf(mu, h)))

        def make_step(lam, rho):
            def step(h):
                theta_eff = lam - rho * (g_of(h) - t)
                return theta_eff * sums.gradient(mean_map(mu, h))
            return step

        def witness(h):
            return TiltProfile(mean_map(mu, h), w.breakpoints)
    else:
        def g_of(rows):
            return sums.rows_value(rows)

        def d_of(rows):
            return float(widths @ _row_entropy_cost(rows, logmu))

        def make_step(lam, rho):
            def step(rows):
                theta_eff = lam - rho * (g_of(rows) - t)
                return _softmax_rows(logmu + theta_eff * sums.rows_gradient(rows))
            return step

        def witness(rows):
            return TiltProfile(rows, w.breakpoints)

    def al_objective_at(lam, rho):
        def al_objective(fv):
            gv = g_of(fv) - t
            return -(d_of(fv) - lam * gv + 0.5 * rho * gv * gv)
        return al_objective

    f = np.asarray(f0, dtype=float)
    lam = lam0
    rho = 50.0
    gap = abs(g_of(f) - t)
    stalls = 0
    inner_cfg = replace(cfg, max_iter=250, tol=1e-10)
    for _ in range(40):
        f, _, _ = _damped_fixed_point(f, make_step(lam, rho),
                                      al_objective_at(lam, rho), inner_cfg)
        new_gap = abs(g_of(f) - t)
        lam = lam - rho * (g_of(f) - t)
        if new_gap < 1e-9:
            break
        if new_gap > 0.1 * gap:
            rho = min(rho * 8.0, 1e8)
        stalls = stalls + 1 if abs(new_gap - gap) < 1e-14 else 0
        if stalls >= 3:
            break  # stuck on a symmetric stationary point; let another start win
        gap = new_gap
    # tight polish at the final multiplier
    polish_cfg = replace(cfg, max_iter=2000, tol=1e-13)
    f, _, _ = _damped_fixed_point(f, make_step(lam, rho),
                                  al_objective_at(lam, rho), polish_cfg)
    lam = lam - rho * (g_of(f) - t)
    gap = abs(g_of(f) - t)
    return ConstrainedRate(d_of(f), witness(f), lam, gap, gap < 1e-7)
