"""Step kernels on [0,1]^2: cut norms, cut distances, L^r norms, degree profiles.

A step kernel is a symmetric block-constant function, stored as an m x m
value matrix plus m+1 breakpoints.  Matrices embed as kernels on a uniform
n-grid, so every norm and integral here is a finite weighted sum.  The
exact cut norm enumerates block-aligned subset pairs (for step functions
the supremum over measurable sets is attained there); the heuristic is an
alternating ascent that always reports a lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StepKernel",
    "StepFunction",
    "AssumptionReport",
    "coupling_matrix",
    "embed_matrix",
    "scaled_adjacency",
    "cut_norm_exact",
    "cut_norm_heuristic",
    "cut_distance",
    "weak_cut_distance",
    "WeakCutResult",
    "lp_norm",
    "degree_profile",
    "check_assumptions",
]

_BREAK_TOL = 1e-12
DEFAULT_EXACT_LIMIT = 20


def coupling_matrix(entries, force_zero_diagonal: bool = True) -> np.ndarray:
    """Validate a symmetric coupling matrix; the diagonal is zeroed at ingestion."""
    q = np.array(entries, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"coupling matrix must be square, got shape {q.shape}")
    if not np.allclose(q, q.T, rtol=0, atol=1e-12):
        raise ValueError("coupling matrix must be symmetric")
    q = 0.5 * (q + q.T)
    if force_zero_diagonal:
        np.fill_diagonal(q, 0.0)
    return q


@dataclass(frozen=True)
class StepKernel:
    """Symmetric block-constant function on [0,1]^2."""

    values: np.ndarray
    breakpoints: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be a square matrix")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12):
            raise ValueError("step kernel values must be symmetric")
        v = 0.5 * (v + v.T)
        m = v.shape[0]
        if self.breakpoints is None:
            b = np.linspace(0.0, 1.0, m + 1)
        else:
            b = np.array(self.breakpoints, dtype=float)
            if b.shape != (m + 1,):
                raise ValueError(f"need {m + 1} breakpoints for {m} blocks")
            if abs(b[0]) > _BREAK_TOL or abs(b[-1] - 1.0) > _BREAK_TOL:
                raise ValueError("breakpoints must start at 0 and end at 1")
            if np.any(np.diff(b) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
            b[0], b[-1] = 0.0, 1.0
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "breakpoints", b)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.widths, 1.0 / self.m, atol=_BREAK_TOL))

    def weighted(self) -> np.ndarray:
        """values scaled by block areas; entries sum-integrate the kernel."""
        w = self.widths
        return self.values * np.outer(w, w)

    @classmethod
    def constant(cls, c: float, m: int = 1) -> "StepKernel":
        return cls(np.full((m, m), float(c)))

    def resample_uniform(self, m: int) -> "StepKernel":
        """L^1 projection onto a uniform m-grid (cell-average of the kernel)."""
        grid = np.linspace(0.0, 1.0, m + 1)
        vals = np.empty((m, m))
        for i in range(m):
            oi, wi = _overlaps(self.breakpoints, grid[i], grid[i + 1])
            for j in range(i, m):
                oj, wj = _overlaps(self.breakpoints, grid[j], grid[j + 1])
                area = np.outer(wi, wj)
                vals[i, j] = vals[j, i] = float(
                    (self.values[np.ix_(oi, oj)] * area).sum() / area.sum()
                )
        return StepKernel(vals, grid)


def _overlaps(breaks, lo, hi):
    """Blocks of `breaks` intersecting [lo, hi] and the overlap lengths."""
    lengths = np.minimum(breaks[1:], hi) - np.maximum(breaks[:-1], lo)
    idx = np.nonzero(lengths > _BREAK_TOL)[0]
    return idx, lengths[idx]


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant function on [0,1] (degree profiles and friends)."""

    values: np.ndarray
    breakpoints: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("step function values must be 1-d")
        if self.breakpoints is None:
            b = np.linspace(0.0, 1.0, v.size + 1)
        else:
            b = np.array(self.breakpoints, dtype=float)
            if b.shape != (v.size + 1,) or np.any(np.diff(b) <= 0):
                raise ValueError("bad breakpoints")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "breakpoints", b)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def integral(self) -> float:
        return float(self.values @ self.widths)

    def power_integral(self, r: float) -> float:
        return float((np.abs(self.values) ** r) @ self.widths)

    def sup(self) -> float:
        return float(np.abs(self.values).max())


def embed_matrix(q) -> StepKernel:
    """Step kernel of a symmetric matrix on the uniform n-grid."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(q, q.T, rtol=0, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    return StepKernel(q)


def scaled_adjacency(g) -> np.ndarray:
    """G / ||G||_1 with ||G||_1 = n^-2 sum G(i,j); the embedded kernel has L1 norm 1."""
    g = np.asarray(g, dtype=float)
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("adjacency entries must be 0/1")
    g = coupling_matrix(g)
    n = g.shape[0]
    norm1 = g.sum() / n**2
    if norm1 == 0:
        raise ValueError("empty graph: scaled adjacency is undefined")
    return g / norm1


def refine_pair(w1: StepKernel, w2: StepKernel):
    """Re-express two kernels on the union of their breakpoints."""
    breaks = np.union1d(w1.breakpoints, w2.breakpoints)
    # merge float-equal breakpoints
    keep = np.concatenate([[True], np.diff(breaks) > _BREAK_TOL])
    breaks = breaks[keep]
    breaks[0], breaks[-1] = 0.0, 1.0
    mids = 0.5 * (breaks[:-1] + breaks[1:])

    def lift(w):
        idx = np.clip(np.searchsorted(w.breakpoints, mids) - 1, 0, w.m - 1)
        return StepKernel(w.values[np.ix_(idx, idx)], breaks)

    return lift(w1), lift(w2)


def cut_norm_exact(w: StepKernel, exact_limit: int = DEFAULT_EXACT_LIMIT) -> float:
    """Exact cut norm by enumerating block-aligned row subsets.

    For a step kernel the optimizing (S, T) are unions of blocks; for a
    fixed row subset the best column subset is the positive (or negative)
    part of the column sums, so only 2^m row subsets are enumerated.
    """
    if w.m > exact_limit:
        raise ValueError(
            f"exact cut norm enumerates 2^{w.m} subsets; use cut_norm_heuristic "
            f"or raise exact_limit (currently {exact_limit})"
        )
    mat = w.weighted()
    m = w.m
    best = 0.0
    chunk = 1 << min(m, 16)
    total = 1 << m
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        ints = np.arange(start, stop, dtype=np.uint64)
        bits = ((ints[:, None] >> np.arange(m, dtype=np.uint64)) & 1).astype(float)
        colsums = bits @ mat
        pos = np.clip(colsums, 0.0, None).sum(axis=1)
        neg = np.clip(-colsums, 0.0, None).sum(axis=1)
        best = max(best, float(pos.max()), float(neg.max()))
    return best


def cut_norm_heuristic(w: StepKernel, restarts: int = 8, seed: int = 0,
                       max_iters: int = 200) -> float:
    """Alternating-ascent lower bound on the cut norm.

    Runs from `restarts` random column subsets plus the all-ones start for
    each sign; every alternation step is monotone, so the returned value is
    the objective of a feasible subset pair and never exceeds the exact norm.
    """
    mat = w.weighted()
    m = w.m
    rng = np.random.default_rng(seed)
    starts = [np.ones(m)] + [rng.integers(0, 2, size=m).astype(float) for _ in range(restarts)]
    best = 0.0
    for sign in (1.0, -1.0):
        a = sign * mat
        for t0 in starts:
            t = t0.copy()
            obj = -math.inf
            for _ in range(max_iters):
                s = (a @ t > 0).astype(float)
                t = (a.T @ s > 0).astype(float)
                new_obj = float(s @ a @ t)
                if new_obj <= obj + 1e-15:
                    obj = max(obj, new_obj)
                    break
                obj = new_obj
            best = max(best, obj)
    return best


def cut_distance(w1: StepKernel, w2: StepKernel,
                 exact_limit: int = DEFAULT_EXACT_LIMIT,
                 restarts: int = 8, seed: int = 0) -> float:
    """Strong cut distance d(W1, W2): cut norm of the refined difference."""
    a, b = refine_pair(w1, w2)
    diff = StepKernel(a.values - b.values, a.breakpoints)
    if diff.m <= exact_limit:
        return cut_norm_exact(diff, exact_limit)
    return cut_norm_heuristic(diff, restarts=restarts, seed=seed)


@dataclass(frozen=True)
class WeakCutResult:
    value: float
    certified_exact: bool
    permutation: np.ndarray


def weak_cut_distance(w1: StepKernel, w2: StepKernel, budget: int = 4000,
                      seed: int = 0, method: str = "auto",
                      exact_limit: int = DEFAULT_EXACT_LIMIT,
                      exhaustive_limit: int = 8) -> WeakCutResult:
    """Upper bound on the weak cut distance via block permutations.

    Block permutations are measure preserving only on uniform grids, so both
    kernels must share a uniform grid of the same size (resample_uniform is
    the projection to use otherwise).  Exhaustive search for m <= 8 (result
    certified exact over the permutation class); simulated annealing with a
    fixed seed beyond that.
    """
    if w1.m != w2.m:
        raise ValueError("equal block counts required; resample to a common grid")
    if not (w1.is_uniform and w2.is_uniform):
        raise ValueError("uniform blocks required: block permutations are only "
                         "measure preserving on a uniform grid")
    m = w1.m
    if method == "auto":
        method = "exhaustive" if m <= exhaustive_limit else "anneal"

    def dist(perm):
        pv = w1.values[np.ix_(perm, perm)]
        d = StepKernel(pv - w2.values, w1.breakpoints)
        if m <= exact_limit:
            return cut_norm_exact(d, exact_limit)
        return cut_norm_heuristic(d, restarts=4, seed=seed)

    if method == "exhaustive":
        from itertools import permutations

        best_val, best_perm = math.inf, None
        for perm in permutations(range(m)):
            perm = np.array(perm)
            val = dist(perm)
            if val < best_val:
                best_val, best_perm = val, perm
        return WeakCutResult(best_val, m <= exact_limit, best_perm)

    if method != "anneal":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    perm = np.arange(m)
    cur = dist(perm)
    best_val, best_perm = cur, perm.copy()
    temp0 = max(cur, 1e-3)
    for step in range(budget):
        temp = temp0 * (0.01 ** (step / max(budget - 1, 1)))
        i, j = rng.integers(0, m, size=2)
        if i == j:
            continue
        cand = perm.copy()
        cand[i], cand[j] = cand[j], cand[i]
        val = dist(cand)
        if val < cur or rng.random() < math.exp(-(val - cur) / max(temp, 1e-12)):
            perm, cur = cand, val
            if cur < best_val:
                best_val, best_perm = cur, perm.copy()
    return WeakCutResult(best_val, False, best_perm)


def lp_norm(w: StepKernel, r: float) -> float:
    """||W||_r on the probability square; r = inf gives the sup of |values|."""
    if r == math.inf:
        return float(np.abs(w.values).max())
    if r < 1:
        raise ValueError("L^r norms need r >= 1")
    ww = w.widths
    area = np.outer(ww, ww)
    return float((np.abs(w.values) ** r * area).sum() ** (1.0 / r))


def degree_profile(w: StepKernel) -> StepFunction:
    """Row-integral profile x -> integral |W(x, y)| dy, constant on row blocks."""
    vals = np.abs(w.values) @ w.widths
    return StepFunction(vals, w.breakpoints)


@dataclass(frozen=True)
class AssumptionThresholds:
    """Finite-n surrogate thresholds for the regularity conditions."""

    norm_bound: float = 50.0      # bound for the q*Delta norm and sup checks
    mean_bound: float = 50.0      # bound for the degree-profile means
    tail_tol: float = 0.05        # uniform-integrability tail statistic
    tail_cutoff: float = 10.0     # cutoff level for the tail statistic


@dataclass(frozen=True)
class AssumptionReport:
    q_delta_norms: dict
    degree_profile: dict
    flags: dict

    def to_dict(self) -> dict:
        return {
            "q_delta_norms": self.q_delta_norms,
            "degree_profile": self.degree_profile,
            "flags": self.flags,
        }


def check_assumptions(wn: StepKernel, w: StepKernel, motif, p: float, q: float,
                      thresholds: AssumptionThresholds | None = None) -> AssumptionReport:
    """Finite-n validators for the norm and degree-profile regularity conditions.

    Computes the q*Delta norms and the degree-profile statistics (mean,
    (v-1)-power mean, sup, and a tail statistic at a configurable cutoff as
    the uniform-integrability surrogate) for both kernels, then flags each
    condition against thresholds.  These are heuristic desk checks of
    asymptotic hypotheses, not proofs.
    """
    if p < 1 or q <= 1:
        raise ValueError("need p >= 1 and q > 1")
    inv = (0.0 if p == math.inf else 1.0 / p) + (0.0 if q == math.inf else 1.0 / q)
    if inv > 1 + 1e-12:
        raise ValueError(f"1/p + 1/q = {inv} exceeds 1")
    th = thresholds or AssumptionThresholds()
    delta = motif.delta
    v = motif.v
    r = math.inf if q == math.inf else q * delta

    def profile_stats(kernel):
        prof = degree_profile(kernel)
        tail_mask = np.abs(prof.values) > th.tail_cutoff
        tail = float(((np.abs(prof.values) ** (v - 1)) * prof.widths)[tail_mask].sum())
        return {
            "mean": prof.integral(),
            "power_mean": prof.power_integral(v - 1),
            "sup": prof.sup(),
            "tail_stat": tail,
        }

    norms = {"wn": lp_norm(wn, r), "w": lp_norm(w, r), "exponent": r}
    stats = {"wn": profile_stats(wn), "w": profile_stats(w)}

    flags = {
        "eq_q": norms["wn"] <= th.norm_bound and norms["w"] <= th.norm_bound,
        "eq_pp": (motif.is_edge
                  and stats["wn"]["mean"] <= th.mean_bound
                  and stats["w"]["mean"] <= th.mean_bound),
        "eq_pp1": (motif.is_star
                   and stats["wn"]["tail_stat"] <= th.tail_tol
                   and stats["w"]["power_mean"] <= th.mean_bound),
        "eq_pp2": (motif.is_tree
                   and stats["wn"]["sup"] <= th.norm_bound
                   and stats["w"]["sup"] <= th.norm_bound),
    }
    return AssumptionReport(norms, stats, flags)
