"""Limiting functionals on step objects: motif integrals, their gradients,
and the lifts from tilt profiles to block measures.

All integrals are finite block/atom sums, so the only error is float
rounding.  Separable kernels (product over vertices, or the all-equal
indicator) get factorized paths; the generic table path contracts the
kernel tensor against the per-block conditional rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import StepKernel
from .tilt import FiniteBaseMeasure, TiltSolverConfig, inverse_mean, kl_vector, tilted_measure
from .ustat import Motif, PhiKernel

__all__ = [
    "TiltProfile",
    "BlockMeasure",
    "t_motif",
    "t_functional",
    "g1",
    "g2",
    "g1_gradient",
    "g2_gradient",
    "lift_xi1",
    "lift_xi2",
    "divergence",
    "clamp_profile",
]

GRID_LIMIT = 1 << 22
_ROW_TOL = 1e-12


@dataclass(frozen=True)
class TiltProfile:
    """Mean-field order parameter: per-block mean (real) or color law (rows)."""

    values: np.ndarray
    breakpoints: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (1, 2):
            raise ValueError("profile values must be a vector or a rows matrix")
        m = v.shape[0]
        if self.breakpoints is None:
            b = np.linspace(0.0, 1.0, m + 1)
        else:
            b = np.array(self.breakpoints, dtype=float)
            if b.shape != (m + 1,) or np.any(np.diff(b) <= 0):
                raise ValueError("bad breakpoints")
        if v.ndim == 2:
            if np.any(v < -_ROW_TOL) or np.any(np.abs(v.sum(axis=1) - 1.0) > 1e-9):
                raise ValueError("color rows must be nonnegative and sum to 1")
            v = np.clip(v, 0.0, None)
            v /= v.sum(axis=1, keepdims=True)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "breakpoints", b)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def is_potts(self) -> bool:
        return self.values.ndim == 2

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def integral(self) -> np.ndarray | float:
        out = self.widths @ self.values
        return float(out) if np.ndim(out) == 0 else out

    def l1_distance(self, other: "TiltProfile") -> float:
        if self.m != other.m or self.is_potts != other.is_potts:
            raise ValueError("profiles must share a grid and a variant")
        diff = np.abs(self.values - other.values)
        if self.is_potts:
            diff = diff.sum(axis=1)
        return float(self.widths @ diff)


@dataclass(frozen=True)
class BlockMeasure:
    """Measure on [0,1] x atoms with uniform block marginal: row-stochastic rows."""

    rows: np.ndarray
    breakpoints: np.ndarray = None

    def __post_init__(self):
        r = np.array(self.rows, dtype=float)
        if r.ndim != 2:
            raise ValueError("rows must be an (m, k) matrix")
        if np.any(r < -_ROW_TOL) or np.any(np.abs(r.sum(axis=1) - 1.0) > _ROW_TOL * r.shape[1] * 10):
            raise ValueError("rows must be conditional distributions")
        r = np.clip(r, 0.0, None)
        r /= r.sum(axis=1, keepdims=True)
        m = r.shape[0]
        if self.breakpoints is None:
            b = np.linspace(0.0, 1.0, m + 1)
        else:
            b = np.array(self.breakpoints, dtype=float)
            if b.shape != (m + 1,) or np.any(np.diff(b) <= 0):
                raise ValueError("bad breakpoints")
        object.__setattr__(self, "rows", r)
        object.__setattr__(self, "breakpoints", b)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def k(self) -> int:
        return self.rows.shape[1]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @classmethod
    def product(cls, mu: FiniteBaseMeasure, m: int = 1) -> "BlockMeasure":
        """The independent reference measure: every block carries mu."""
        return cls(np.tile(mu.probs, (m, 1)))

    def conditional_means(self, mu: FiniteBaseMeasure) -> np.ndarray:
        return self.rows @ mu.atoms

    def second_marginal(self) -> np.ndarray:
        return self.widths @ self.rows


def _merge_breaks(break_lists):
    breaks = break_lists[0]
    for b in break_lists[1:]:
        breaks = np.union1d(breaks, b)
    keep = np.concatenate([[True], np.diff(breaks) > 1e-12])
    breaks = breaks[keep]
    breaks[0], breaks[-1] = 0.0, 1.0
    return breaks


def _align(w: StepKernel, profile_like):
    """Refine the kernel and 1-d block vectors onto a shared grid."""
    break_lists = [w.breakpoints]
    vecs = []
    for f in profile_like:
        if isinstance(f, (TiltProfile, BlockMeasure)):
            break_lists.append(f.breakpoints)
    breaks = _merge_breaks(break_lists)
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    widx = np.clip(np.searchsorted(w.breakpoints, mids) - 1, 0, w.m - 1)
    wv = w.values[np.ix_(widx, widx)]
    for f in profile_like:
        if isinstance(f, (TiltProfile, BlockMeasure)):
            vals = f.values if isinstance(f, TiltProfile) else f.rows
            fidx = np.clip(np.searchsorted(f.breakpoints, mids) - 1, 0, vals.shape[0] - 1)
            vecs.append(vals[fidx])
        else:
            vals = np.asarray(f, dtype=float)
            if vals.shape[0] != w.m:
                raise ValueError("raw arrays must live on the kernel's grid")
            vecs.append(vals[widx])
    return wv, np.diff(breaks), vecs


def _axis(arr, a, v):
    shape = [1] * v
    shape[a] = arr.shape[0]
    return arr.reshape(shape)


def _edge_grid(motif: Motif, wv: np.ndarray):
    m = wv.shape[0]
    v = motif.v
    if m**v > GRID_LIMIT:
        raise ValueError(f"m^v = {m**v} exceeds the block-grid limit")
    idx = [_axis(np.arange(m), a, v) for a in range(v)]
    grid = np.ones((1,) * v)
    for a, b in motif.edges:
        grid = grid * wv[idx[a], idx[b]]
    return grid


def t_motif(motif: Motif, w: StepKernel, fs, method: str = "auto") -> float:
    """Motif integral of the kernel against one step function per vertex."""
    if len(fs) != motif.v:
        raise ValueError(f"need one vertex function per vertex ({motif.v})")
    wv, widths, vecs = _align(w, fs)
    weighted = [vec * widths for vec in vecs]
    if method == "auto":
        method = "tree" if (motif.is_tree and wv.shape[0] ** motif.v > 1 << 12) else "direct"
    if method == "tree":
        if not motif.is_tree:
            raise ValueError("tree evaluation needs a tree motif")
        return _tree_t(motif, wv, weighted)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    grid = _edge_grid(motif, wv)
    v = motif.v
    for a in range(v):
        grid = grid * _axis(weighted[a], a, v)
    return float(grid.sum())


def _tree_t(motif: Motif, wv, weighted):
    adj = {a: set(nbrs) for a, nbrs in enumerate(motif.adjacency())}
    msgs = {a: weighted[a].copy() for a in range(motif.v)}
    alive = set(range(motif.v))
    while len(alive) > 1:
        leaf = next(a for a in alive if len(adj[a]) == 1)
        (parent,) = adj[leaf]
        msgs[parent] = msgs[parent] * (wv @ msgs[leaf])
        adj[parent].discard(leaf)
        adj[leaf].clear()
        alive.discard(leaf)
    return float(msgs[alive.pop()].sum())


def g1(motif: Motif, w: StepKernel, f: TiltProfile | np.ndarray) -> float:
    """Multilinear limit functional: t_motif with every vertex carrying f."""
    if isinstance(f, TiltProfile) and f.is_potts:
        raise ValueError("g1 takes a real profile")
    return t_motif(motif, w, [f] * motif.v)


def g2(motif: Motif, w: StepKernel, f: TiltProfile) -> float:
    """Color limit functional: sum over colors of the single-color motif integral."""
    if not (isinstance(f, TiltProfile) and f.is_potts):
        raise ValueError("g2 takes a color (rows) profile")
    total = 0.0
    for r in range(f.values.shape[1]):
        channel = TiltProfile(f.values[:, r], f.breakpoints)
        total += t_motif(motif, w, [channel] * motif.v)
    return total


def _pinned_sums(motif: Motif, wv, weighted_vecs):
    """For each vertex a: the grid summed over all axes but a, with vertex a
    carrying neither its function value nor its width."""
    v = motif.v
    grid0 = _edge_grid(motif, wv)
    out = np.zeros(wv.shape[0])
    for a in range(v):
        grid = grid0
        for b in range(v):
            if b != a:
                grid = grid * _axis(weighted_vecs[b], b, v)
        axes = tuple(b for b in range(v) if b != a)
        out = out + grid.sum(axis=axes)
    return out


def g1_gradient(motif: Motif, w: StepKernel, f) -> np.ndarray:
    """Functional derivative density of g1 at f, blockwise.

    A perturbation of f by h on block u changes g1 by h * width(u) * grad(u),
    so central finite differences of g1 recover width * grad.
    """
    wv, widths, (fv,) = _align(w, [f])
    return _pinned_sums(motif, wv, [fv * widths] * motif.v)


def g2_gradient(motif: Motif, w: StepKernel, f: TiltProfile) -> np.ndarray:
    """Per-color functional derivative density of g2; shape (blocks, colors)."""
    if not f.is_potts:
        raise ValueError("g2_gradient takes a color profile")
    wv, widths, (rows,) = _align(w, [f])
    cols = []
    for r in range(rows.shape[1]):
        cols.append(_pinned_sums(motif, wv, [rows[:, r] * widths] * motif.v))
    return np.stack(cols, axis=1)


def t_functional(motif: Motif, w: StepKernel, nu: BlockMeasure, phi: PhiKernel,
                 mu: FiniteBaseMeasure | None = None) -> float:
    """Expectation of phi times the kernel edge product under iid draws from nu.

    Separable phi factorizes through per-block vertex functions; a generic
    table is contracted against the block rows axis by axis.
    """
    if phi.arity != motif.v:
        raise ValueError("phi arity must match the motif order")
    if nu.k != phi.k:
        raise ValueError("block measure and phi must share the atom alphabet")
    if phi.name == "product":
        if phi.atoms is None:
            raise ValueError("product phi built without atom values")
        means = TiltProfile(nu.rows @ phi.atoms, nu.breakpoints)
        return t_motif(motif, w, [means] * motif.v)
    if phi.name == "monochrome":
        return g2(motif, w, TiltProfile(nu.rows, nu.breakpoints))
    wv, widths, (rows,) = _align(w, [nu])
    m = wv.shape[0]
    if phi.table.size * m > GRID_LIMIT:
        raise ValueError("phi table too large for the generic contraction; "
                         "use a separable kernel or fewer atoms")
    contracted = phi.table
    for _ in range(motif.v):
        contracted = np.tensordot(contracted, rows, axes=([0], [1]))
    # contracted now has shape (m,)*v in vertex order
    grid = _edge_grid(motif, wv)
    v = motif.v
    for a in range(v):
        grid = grid * _axis(widths, a, v)
    return float((grid * contracted).sum())


def lift_xi1(mu: FiniteBaseMeasure, f: TiltProfile,
             cfg: TiltSolverConfig | None = None) -> BlockMeasure:
    """Lift a real profile to a block measure: block u carries the tilt of mu
    with mean f(u); endpoint means become point masses on the extreme atoms."""
    if f.is_potts:
        raise ValueError("the mean lift takes a real profile")
    rows = np.empty((f.m, mu.k))
    hi, lo = mu.max_atom, mu.min_atom
    for u, val in enumerate(f.values):
        if val == hi:
            rows[u] = 0.0
            rows[u, np.argmax(mu.atoms)] = 1.0
        elif val == lo:
            rows[u] = 0.0
            rows[u, np.argmin(mu.atoms)] = 1.0
        else:
            theta = inverse_mean(mu, float(val), cfg)
            rows[u] = tilted_measure(mu, theta).probs
    return BlockMeasure(rows, f.breakpoints)


def lift_xi2(f: TiltProfile) -> BlockMeasure:
    """Lift a color profile to the block measure with those conditional rows."""
    if not f.is_potts:
        raise ValueError("the color lift takes a rows profile")
    return BlockMeasure(f.values, f.breakpoints)


def divergence(nu: BlockMeasure, mu: FiniteBaseMeasure) -> float:
    """KL divergence of nu from the product measure: width-average of row KLs."""
    if nu.k != mu.k:
        raise ValueError("atom alphabets differ")
    per_row = np.array([kl_vector(row, mu.probs) for row in nu.rows])
    return float(nu.widths @ per_row)


def clamp_profile(f: TiltProfile, mu: FiniteBaseMeasure,
                  margin: float = 1e-12) -> TiltProfile:
    """Clip a real profile into the closed mean range with a relative margin."""
    if f.is_potts:
        return f
    span = mu.max_atom - mu.min_atom
    eps = margin * span
    return TiltProfile(np.clip(f.values, mu.min_atom + eps, mu.max_atom - eps),
                       f.breakpoints)
