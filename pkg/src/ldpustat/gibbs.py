"""Finite-n Gibbs measures reweighted by the U-statistic: exact oracles,
heat-bath sampling, thermodynamic integration, and tail probabilities.

The reference object is the density exp(n theta U_n - n Z_n) against the
product base measure.  Desk-scale exactness comes from full configuration
enumeration (or, on complete graphs with the edge motif, a closed sum over
exchangeable count classes); the sampler is a systematic-scan heat bath
whose single-site conditionals are exact by construction.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, logsumexp

from .kernel import coupling_matrix
from .tilt import FiniteBaseMeasure
from .ustat import Motif, PhiKernel, local_field, u_statistic, u_statistic_batch

__all__ = [
    "GibbsModel",
    "EmpiricalRecord",
    "complete_graph_model",
    "is_complete_edge_model",
    "site_conditional",
    "exact_logz",
    "exact_logz_complete",
    "exact_gibbs_distribution",
    "enumerate_configurations",
    "glauber_chain",
    "estimate_logz_ti",
    "TIEstimate",
    "tail_probability_exact",
    "weak_law_check",
    "WeakLawReport",
    "integrate_step_against",
    "max_workers",
]

DEFAULT_ENUM_LIMIT = 1 << 20


def max_workers(tasks: int) -> int:
    """Worker count for independent chains, capped by LDPUSTAT_THREADS.

    Chains are Python-bound, so the default is sequential; setting
    LDPUSTAT_THREADS permits up to that many concurrent chains (results are
    merged by chain index either way, so outputs do not depend on it).
    """
    cap = os.environ.get("LDPUSTAT_THREADS")
    try:
        allowed = max(int(cap), 1) if cap else 1
    except ValueError:
        allowed = 1
    return max(min(tasks, allowed), 1)


@dataclass(frozen=True)
class GibbsModel:
    """Motif + coupling + kernel + base measure + temperature-like parameter."""

    motif: Motif
    coupling: np.ndarray
    phi: PhiKernel
    mu: FiniteBaseMeasure
    theta: float

    def __post_init__(self):
        q = coupling_matrix(self.coupling)
        if self.phi.arity != self.motif.v:
            raise ValueError("phi arity must match the motif order")
        if self.phi.k != self.mu.k:
            raise ValueError("phi table and base measure must share the atoms")
        object.__setattr__(self, "coupling", q)

    @property
    def n(self) -> int:
        return self.coupling.shape[0]

    def with_theta(self, theta: float) -> "GibbsModel":
        return replace(self, theta=float(theta))

    def model_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.motif.edges).encode())
        h.update(np.round(self.coupling, 12).tobytes())
        h.update(np.round(self.phi.table, 12).tobytes())
        h.update(np.round(self.mu.atoms, 12).tobytes())
        h.update(np.round(self.mu.probs, 12).tobytes())
        h.update(f"{self.theta:.12g}".encode())
        return h.hexdigest()[:16]


def complete_graph_model(family: str, n: int, mu: FiniteBaseMeasure,
                         theta: float) -> GibbsModel:
    """Edge-motif model on the unscaled complete graph (the mean-field case)."""
    from .ustat import monochrome_phi, product_phi

    if family == "ising":
        phi = product_phi(mu, 2)
    elif family == "potts":
        phi = monochrome_phi(mu, 2)
    else:
        raise ValueError(f"unknown family {family!r}; use ising or potts")
    return GibbsModel(Motif.edge(), 1.0 - np.eye(n), phi, mu, float(theta))


def is_complete_edge_model(model: GibbsModel) -> bool:
    n = model.n
    return model.motif.is_edge and np.array_equal(model.coupling, 1.0 - np.eye(n))


def enumerate_configurations(n: int, k: int, limit: int = DEFAULT_ENUM_LIMIT) -> np.ndarray:
    """All atom-index vectors in lexicographic order, as an (k^n, n) int8 array."""
    total = k**n
    if total > limit:
        raise ValueError(f"k^n = {total} exceeds the enumeration limit {limit}")
    idx = np.arange(total, dtype=np.int64)
    out = np.empty((total, n), dtype=np.int8)
    for i in range(n):
        out[:, i] = (idx // k ** (n - 1 - i)) % k
    return out


def _config_log_weights(configs: np.ndarray, mu: FiniteBaseMeasure) -> np.ndarray:
    logp = mu.log_probs
    out = np.zeros(configs.shape[0])
    for i in range(configs.shape[1]):
        out += logp[configs[:, i]]
    return out


def exact_logz(model: GibbsModel, limit: int = DEFAULT_ENUM_LIMIT) -> float:
    """Z_n by exact enumeration: n^-1 log sum over all configurations of
    mu-weight times exp(n theta U_n), with U_n from the batch U evaluator."""
    n = model.n
    configs = enumerate_configurations(n, model.mu.k, limit)
    u = u_statistic_batch(model.motif, model.coupling, configs, model.phi)
    logw = _config_log_weights(configs, model.mu)
    return float(logsumexp(n * model.theta * u + logw)) / n


def exact_gibbs_distribution(model: GibbsModel, limit: int = DEFAULT_ENUM_LIMIT):
    """All configurations with their exact Gibbs probabilities."""
    n = model.n
    configs = enumerate_configurations(n, model.mu.k, limit)
    u = u_statistic_batch(model.motif, model.coupling, configs, model.phi)
    logw = n * model.theta * u + _config_log_weights(configs, model.mu)
    logw -= logsumexp(logw)
    return configs, np.exp(logw)


def _count_classes(n: int, k: int):
    """All count vectors summing to n, lexicographic; O(n^(k-1)) of them."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, slots - 1)

    rec([], n, k)
    return np.array(out, dtype=np.int64)


def _complete_edge_class_sums(phi_table: np.ndarray, n: int, mu: FiniteBaseMeasure):
    """Count classes with the U value and log mu-weight of each class.

    On the complete graph with the edge motif, the distinct-pair sum depends
    on a configuration only through its atom counts:
    U = n^-2 (t' Phi t - sum_b t_b Phi_bb).
    """
    counts = _count_classes(n, mu.k)
    quad = np.einsum("ca,ab,cb->c", counts, phi_table, counts)
    diag = counts @ np.diag(phi_table)
    u = (quad - diag) / n**2
    logw = (gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
            + counts @ mu.log_probs)
    return counts, u, logw


def exact_logz_complete(family: str, n: int, theta: float,
                        mu: FiniteBaseMeasure) -> float:
    """Closed-sum Z_n for the complete-graph edge model: a multinomial sum
    over count classes, O(n^(k-1)) instead of k^n."""
    model = complete_graph_model(family, 2, mu, theta)
    _, u, logw = _complete_edge_class_sums(model.phi.table, n, mu)
    return float(logsumexp(n * theta * u + logw)) / n


def site_conditional(model: GibbsModel, x: np.ndarray, site: int) -> np.ndarray:
    """Exact heat-bath distribution of one site given the rest."""
    fld = local_field(model.motif, model.coupling, x, model.phi, site)
    logits = model.mu.log_probs + model.theta * fld
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


class _EdgeEngine:
    """Incremental single-site fields for the edge motif.

    Keeps s[i, b] = sum_j Q(i, j) 1{x_j = b}; a site change updates one Q
    column per affected color, so a full sweep costs O(n^2 + n k^2).
    """

    def __init__(self, model: GibbsModel, x: np.ndarray):
        self.q = model.coupling
        self.tsym = model.phi.table + model.phi.table.T
        self.n = model.n
        self.k = model.mu.k
        self.x = x
        onehot = np.zeros((self.n, self.k))
        onehot[np.arange(self.n), x] = 1.0
        self.s = self.q @ onehot

    def field(self, i: int) -> np.ndarray:
        return (self.tsym @ self.s[i]) / self.n

    def apply(self, i: int, new: int):
        old = self.x[i]
        if new == old:
            return
        col = self.q[:, i]
        self.s[:, old] -= col
        self.s[:, new] += col
        self.x[i] = new

    def rebuild(self):
        onehot = np.zeros((self.n, self.k))
        onehot[np.arange(self.n), self.x] = 1.0
        self.s = self.q @ onehot


class _GenericEngine:
    """Field by direct distinct-tuple summation; for small non-edge motifs."""

    def __init__(self, model: GibbsModel, x: np.ndarray):
        self.model = model
        self.x = x

    def field(self, i: int) -> np.ndarray:
        return local_field(self.model.motif, self.model.coupling, self.x,
                           self.model.phi, i)

    def apply(self, i: int, new: int):
        self.x[i] = new

    def rebuild(self):
        pass


class _Chain:
    """Systematic-scan heat bath with a cached running U value."""

    def __init__(self, model: GibbsModel, seed, check_every: int = 100):
        self.model = model
        self.rng = np.random.default_rng(seed)
        self.n = model.n
        x = self.rng.choice(model.mu.k, size=self.n, p=model.mu.probs).astype(np.int64)
        self.engine = (_EdgeEngine if model.motif.is_edge else _GenericEngine)(model, x)
        self.u = u_statistic(model.motif, model.coupling, x, model.phi)
        self.logmu = model.mu.log_probs
        self.theta = model.theta
        self.check_every = check_every
        self.sweep_count = 0
        self.max_drift = 0.0
        self._fast2 = model.motif.is_edge and model.mu.k == 2

    @property
    def x(self) -> np.ndarray:
        return self.engine.x

    def sweep(self):
        if self._fast2:
            self._sweep_two_atom()
        else:
            self._sweep_generic()
        self.sweep_count += 1
        if self.check_every and self.sweep_count % self.check_every == 0:
            exact = u_statistic(self.model.motif, self.model.coupling,
                                self.engine.x, self.model.phi)
            self.max_drift = max(self.max_drift, abs(exact - self.u))
            self.u = exact
            self.engine.rebuild()

    def _sweep_generic(self):
        uniforms = self.rng.random(self.n)
        for i in range(self.n):
            fld = self.engine.field(i)
            logits = self.logmu + self.theta * fld
            logits -= logits.max()
            w = np.exp(logits)
            cdf = np.cumsum(w)
            new = int(np.searchsorted(cdf, uniforms[i] * cdf[-1], side="right"))
            new = min(new, len(cdf) - 1)
            old = self.engine.x[i]
            if new != old:
                self.u += (fld[new] - fld[old]) / self.n
                self.engine.apply(i, new)

    def _sweep_two_atom(self):
        """Scalar-arithmetic sweep for edge motifs on a two-atom alphabet."""
        engine = self.engine
        s = engine.s
        x = engine.x
        q = engine.q
        inv_n = 1.0 / self.n
        t00, t01 = engine.tsym[0] * inv_n
        t10, t11 = engine.tsym[1] * inv_n
        lm0, lm1 = self.logmu
        theta = self.theta
        uniforms = self.rng.random(self.n)
        u_val = self.u
        for i in range(self.n):
            s0 = s[i, 0]
            s1 = s[i, 1]
            f0 = t00 * s0 + t01 * s1
            f1 = t10 * s0 + t11 * s1
            d = (lm0 + theta * f0) - (lm1 + theta * f1)
            if d > 700.0:
                p1 = 0.0
            elif d < -700.0:
                p1 = 1.0
            else:
                p1 = 1.0 / (1.0 + math.exp(d))
            new = 1 if uniforms[i] < p1 else 0
            old = x[i]
            if new != old:
                u_val += (f1 - f0) * inv_n if new == 1 else (f0 - f1) * inv_n
                col = q[:, i]
                s[:, old] -= col
                s[:, new] += col
                x[i] = new
        self.u = u_val


@dataclass(frozen=True)
class EmpiricalRecord:
    """Per-sweep observables from one chain, plus run metadata."""

    sweeps: np.ndarray
    u_n: np.ndarray
    block_means: np.ndarray
    color_fractions: np.ndarray
    final_state: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path):
        m = self.block_means.shape[1]
        k = self.color_fractions.shape[1]
        header = (["sweep", "u_n"] + [f"block_mean_{b}" for b in range(m)]
                  + [f"color_frac_{r}" for r in range(k)])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in range(self.sweeps.size):
                cells = [f"{self.sweeps[row]:d}", f"{self.u_n[row]:.12g}"]
                cells += [f"{v:.12g}" for v in self.block_means[row]]
                cells += [f"{v:.12g}" for v in self.color_fractions[row]]
                fh.write(",".join(cells) + "\n")


def _block_slices(n: int, blocks: int):
    edges = np.linspace(0, n, blocks + 1).round().astype(int)
    return [slice(edges[b], edges[b + 1]) for b in range(blocks)]


def glauber_chain(model: GibbsModel, sweeps: int, burn_in: int = 0,
                  thin: int = 1, seed=0, record_blocks: int | None = None,
                  check_every: int = 100) -> EmpiricalRecord:
    """Run a systematic-scan heat-bath chain and record per-sweep observables.

    Deterministic given the seed.  Records, after burn-in and thinning:
    the running U value, block averages of the atom values over groups of
    sites, and global color fractions.
    """
    if sweeps < 1:
        raise ValueError("need at least one sweep")
    chain = _Chain(model, seed, check_every)
    blocks = record_blocks or min(model.n, 10)
    slices = _block_slices(model.n, blocks)
    atoms = model.mu.atoms
    k = model.mu.k
    recs, us, bms, cfs = [], [], [], []
    for s in range(sweeps):
        chain.sweep()
        if s < burn_in or (s - burn_in) % thin != 0:
            continue
        x = chain.x
        vals = atoms[x]
        recs.append(s)
        us.append(chain.u)
        bms.append([vals[sl].mean() for sl in slices])
        cfs.append(np.bincount(x, minlength=k) / model.n)
    meta = {
        "seed": int(seed) if np.isscalar(seed) else str(seed),
        "burn_in": burn_in,
        "thin": thin,
        "sweeps": sweeps,
        "model_hash": model.model_hash(),
        "max_u_drift": chain.max_drift,
    }
    return EmpiricalRecord(np.array(recs), np.array(us), np.array(bms),
                           np.array(cfs), chain.x.copy(), meta)


@dataclass(frozen=True)
class TIEstimate:
    value: float
    stderr: float
    truncation: float
    node_thetas: np.ndarray
    node_means: np.ndarray
    node_stderr: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def total_error(self) -> float:
        return self.stderr + self.truncation


def _batch_means_se(samples: np.ndarray, batches: int = 20) -> float:
    usable = samples.size - samples.size % batches
    if usable < batches:
        return float(samples.std(ddof=1) / math.sqrt(max(samples.size, 2)))
    means = samples[:usable].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def estimate_logz_ti(model: GibbsModel, theta_grid, sweeps: int = 2000,
                     burn_in: int = 500, thin: int = 1, seed=0,
                     batches: int = 20, check_every: int = 100) -> TIEstimate:
    """Thermodynamic integration of the mean U along a theta grid: the
    derivative of Z_n is the Gibbs expectation of U_n, so the trapezoid rule
    over per-node chain estimates integrates to Z_n at the grid end.

    The error bar combines batch-means chain noise with a Richardson estimate
    of the trapezoid truncation (grid vs every-other-node subgrid).
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("theta grid must start at 0 and increase strictly")
    seeds = np.random.SeedSequence(seed).spawn(grid.size)

    def node(j):
        rec = glauber_chain(model.with_theta(grid[j]), sweeps, burn_in, thin,
                            seed=seeds[j], check_every=check_every)
        return float(rec.u_n.mean()), _batch_means_se(rec.u_n, batches)

    workers = max_workers(grid.size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(node, range(grid.size)))
    else:
        results = [node(j) for j in range(grid.size)]
    means = np.array([r[0] for r in results])
    ses = np.array([r[1] for r in results])

    gaps = np.diff(grid)
    value = float(np.sum(gaps * (means[:-1] + means[1:]) / 2))
    # trapezoid weights per node: half-gap on each side
    wts = np.zeros_like(grid)
    wts[:-1] += gaps / 2
    wts[1:] += gaps / 2
    stderr = float(np.sqrt(np.sum((wts * ses) ** 2)))
    if grid.size >= 3 and grid.size % 2 == 1:
        coarse = float(np.sum(np.diff(grid[::2]) * (means[::2][:-1] + means[::2][1:]) / 2))
        truncation = abs(value - coarse) / 3.0
    else:
        truncation = 0.0
    meta = {"sweeps": sweeps, "burn_in": burn_in, "thin": thin,
            "model_hash": model.model_hash()}
    return TIEstimate(value, stderr, truncation, grid, means, ses, meta)


def tail_probability_exact(model_or_builder, t: float, n_list=None,
                           limit: int = DEFAULT_ENUM_LIMIT):
    """Exact -n^-1 log P(U_n >= t) under the product base measure.

    Pass a model for a single n, or a builder n -> model with a list of n.
    Complete-graph edge models sum over exchangeable count classes; anything
    else enumerates all configurations.  Unachievable t returns +inf.
    """
    if n_list is None:
        return _tail_single(model_or_builder, t, limit)
    return [_tail_single(model_or_builder(n), t, limit) for n in n_list]


def _tail_single(model: GibbsModel, t: float, limit: int) -> float:
    n = model.n
    if is_complete_edge_model(model):
        _, u, logw = _complete_edge_class_sums(model.phi.table, n, model.mu)
    else:
        configs = enumerate_configurations(n, model.mu.k, limit)
        u = u_statistic_batch(model.motif, model.coupling, configs, model.phi)
        logw = _config_log_weights(configs, model.mu)
    hit = u >= t
    if not hit.any():
        return math.inf
    return float(-logsumexp(logw[hit]) / n)


def integrate_step_against(g, breakpoints: np.ndarray, values: np.ndarray) -> float:
    """Exact integral of a test function against a step function on [0,1].

    g is ("poly", coeffs ascending) or ("step", breakpoints, values).
    """
    kind = g[0]
    if kind == "poly":
        coeffs = np.asarray(g[1], dtype=float)
        anti = np.concatenate([[0.0], coeffs / np.arange(1, coeffs.size + 1)])
        prim = np.polynomial.polynomial.polyval(breakpoints, anti)
        return float(np.sum(values * np.diff(prim)))
    if kind == "step":
        gb = np.asarray(g[1], dtype=float)
        gv = np.asarray(g[2], dtype=float)
        total = 0.0
        for j in range(gv.size):
            lo, hi = gb[j], gb[j + 1]
            overlap = np.minimum(breakpoints[1:], hi) - np.maximum(breakpoints[:-1], lo)
            total += gv[j] * float(np.clip(overlap, 0.0, None) @ values)
        return total
    raise ValueError(f"unknown test function kind {kind!r}")


DEFAULT_TEST_FUNCTIONS = (
    ("poly", (1.0,)),
    ("poly", (0.0, 1.0)),
    ("poly", (0.0, 0.0, 1.0)),
    ("step", (0.0, 0.5, 1.0), (1.0, 0.0)),
    ("step", (0.0, 0.25, 0.75, 1.0), (0.0, 1.0, 0.0)),
)


@dataclass(frozen=True)
class WeakLawReport:
    per_function: list
    d_hat_mean: float
    d_hat_stderr: float
    metadata: dict = field(default_factory=dict)

    @property
    def worst_mean(self) -> float:
        return max(row["mean"] for row in self.per_function)


def weak_law_check(model: GibbsModel, solve_result, test_functions=None,
                   chains: int = 8, sweeps: int = 2000, burn_in: int = 500,
                   thin: int = 10, seed=0, family: str = "multilinear") -> WeakLawReport:
    """Compare the chain's empirical step profile against the solver's
    optimizer set on a finite family of test functions.

    Per recorded sweep and test function g, the discrepancy is the minimum
    over reported optimizers of |integral (omega_n - f) g|; the report gives
    chain-averaged values with error bars over chains, plus the max over the
    family (the finite surrogate for the Lipschitz distance, labeled as such).
    """
    gs = list(test_functions or DEFAULT_TEST_FUNCTIONS)
    n = model.n
    ngrid = np.linspace(0.0, 1.0, n + 1)
    atoms = model.mu.atoms
    optimizers = solve_result.optimizers

    # per-optimizer integrals against each g (per color channel for potts)
    if family == "multilinear":
        f_ints = np.empty((len(optimizers), len(gs)))
        for fi, f in enumerate(optimizers):
            for gi, g in enumerate(gs):
                f_ints[fi, gi] = integrate_step_against(g, f.breakpoints, f.values)
    elif family == "potts":
        f_ints = np.empty((len(optimizers), len(gs), model.mu.k))
        for fi, f in enumerate(optimizers):
            for gi, g in enumerate(gs):
                for r in range(model.mu.k):
                    f_ints[fi, gi, r] = integrate_step_against(
                        g, f.breakpoints, f.values[:, r])
    else:
        raise ValueError(f"unknown family {family!r}")

    seeds = np.random.SeedSequence(seed).spawn(chains)

    def run_chain(c):
        chain = _Chain(model, seeds[c])
        per_g = np.zeros(len(gs))
        d_hat = 0.0
        count = 0
        for s in range(sweeps):
            chain.sweep()
            if s < burn_in or (s - burn_in) % thin != 0:
                continue
            x = chain.x
            if family == "multilinear":
                omega = atoms[x]
                w_ints = np.array([
                    integrate_step_against(g, ngrid, omega) for g in gs])
                disc = np.abs(w_ints[None, :] - f_ints)        # (opt, g)
            else:
                w_ints = np.empty((len(gs), model.mu.k))
                for gi, g in enumerate(gs):
                    for r in range(model.mu.k):
                        w_ints[gi, r] = integrate_step_against(
                            g, ngrid, (x == r).astype(float))
                disc = np.abs(w_ints[None, :, :] - f_ints).max(axis=2)
            per_g += disc.min(axis=0)
            d_hat += disc.max(axis=1).min()
            count += 1
        return per_g / count, d_hat / count

    workers = max_workers(chains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chain, range(chains)))
    else:
        results = [run_chain(c) for c in range(chains)]

    per_g = np.stack([r[0] for r in results])     # (chains, g)
    d_hats = np.array([r[1] for r in results])
    per_function = []
    for gi, g in enumerate(gs):
        per_function.append({
            "g": g,
            "mean": float(per_g[:, gi].mean()),
            "stderr": float(per_g[:, gi].std(ddof=1) / math.sqrt(chains)) if chains > 1 else 0.0,
        })
    meta = {"chains": chains, "sweeps": sweeps, "burn_in": burn_in,
            "thin": thin, "model_hash": model.model_hash(),
            "surrogate": "finite test family, not the full Lipschitz class"}
    return WeakLawReport(per_function, float(d_hats.mean()),
                         float(d_hats.std(ddof=1) / math.sqrt(chains)) if chains > 1 else 0.0,
                         meta)
