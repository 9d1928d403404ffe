"""Inhomogeneous U- and V-statistics for small motifs at desk scale.

The reference semantics is the direct sum over index tuples: V runs over all
of [n]^v, U over the distinct tuples.  Tree motifs get a message-passing fast
path for separable phi that must reproduce the direct sum; the single-site
field used by the samplers is the exact distinct-tuple delta, so the Gibbs
conditional built from it matches full recomputation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .tilt import FiniteBaseMeasure

__all__ = [
    "Motif",
    "PhiKernel",
    "product_phi",
    "monochrome_phi",
    "table_phi",
    "v_statistic",
    "u_statistic",
    "u_statistic_batch",
    "uv_gap",
    "local_field",
]

DEFAULT_GRID_LIMIT = 1 << 24


@dataclass(frozen=True)
class Motif:
    """Small labeled graph whose edges pick the coupling factors.

    Vertices are 0-indexed internally; the text format is 1-indexed
    ("v=3" followed by one edge per line).
    """

    v: int
    edges: tuple

    def __post_init__(self):
        if self.v < 2:
            raise ValueError("motifs need at least two vertices")
        seen = set()
        edges = []
        for a, b in self.edges:
            if a == b:
                raise ValueError("self-loops are not allowed")
            if not (0 <= a < self.v and 0 <= b < self.v):
                raise ValueError(f"edge ({a},{b}) out of range for v={self.v}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            edges.append(key)
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    @property
    def delta(self) -> int:
        """Maximum degree."""
        deg = [0] * self.v
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return max(deg)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def is_edge(self) -> bool:
        return self.v == 2 and self.num_edges == 1

    @property
    def is_tree(self) -> bool:
        if self.num_edges != self.v - 1:
            return False
        parent = list(range(self.v))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent[ra] = rb
        return True

    @property
    def is_star(self) -> bool:
        if not self.is_tree:
            return False
        deg = [0] * self.v
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return max(deg) == self.v - 1

    def adjacency(self) -> list:
        adj = [[] for _ in range(self.v)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    @classmethod
    def edge(cls) -> "Motif":
        return cls(2, ((0, 1),))

    @classmethod
    def triangle(cls) -> "Motif":
        return cls(3, ((0, 1), (1, 2), (0, 2)))

    @classmethod
    def path(cls, v: int) -> "Motif":
        return cls(v, tuple((i, i + 1) for i in range(v - 1)))

    @classmethod
    def star(cls, leaves: int) -> "Motif":
        return cls(leaves + 1, tuple((0, i) for i in range(1, leaves + 1)))

    @classmethod
    def complete(cls, v: int) -> "Motif":
        return cls(v, tuple(itertools.combinations(range(v), 2)))

    @classmethod
    def from_text(cls, text: str) -> "Motif":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or not lines[0].replace(" ", "").startswith("v="):
            raise ValueError('motif text must start with "v=<count>"')
        v = int(lines[0].split("=", 1)[1])
        edges = []
        for ln in lines[1:]:
            a, b = ln.split()
            edges.append((int(a) - 1, int(b) - 1))
        return cls(v, tuple(edges))


@dataclass(frozen=True)
class PhiKernel:
    """Kernel phi as an exact table over atom-index tuples.

    The envelope values psi (one per atom) and the tail exponent p are the
    metadata the norm and bound checks need; the product envelope is
    verified against the table at construction for small supports.
    """

    name: str
    arity: int
    table: np.ndarray
    psi: np.ndarray
    p: float = math.inf
    atoms: np.ndarray = None  # generating atom values, set by product_phi

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if table.ndim != self.arity:
            raise ValueError("table rank must equal the arity")
        k = psi.size
        if table.shape != (k,) * self.arity:
            raise ValueError("table axes must all match the atom count")
        if np.any(psi < 0):
            raise ValueError("envelope values must be nonnegative")
        if self.p < 1:
            raise ValueError("tail exponent must be >= 1")
        if table.size <= DEFAULT_GRID_LIMIT:
            envelope = psi
            for _ in range(self.arity - 1):
                envelope = np.multiply.outer(envelope, psi)
            if np.any(np.abs(table) > envelope + 1e-12):
                raise ValueError("envelope violated: |phi| must be <= prod psi")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "psi", psi)

    @property
    def k(self) -> int:
        return self.psi.size

    @property
    def separable(self) -> bool:
        return self.name in ("product", "monochrome")


def product_phi(mu: FiniteBaseMeasure, arity: int, p: float = math.inf) -> PhiKernel:
    """phi(x_1..x_v) = prod x_a on the measure's atoms; envelope |x|."""
    table = mu.atoms
    for _ in range(arity - 1):
        table = np.multiply.outer(table, mu.atoms)
    return PhiKernel("product", arity, table, np.abs(mu.atoms), p, atoms=mu.atoms.copy())


def monochrome_phi(mu: FiniteBaseMeasure, arity: int, p: float = math.inf) -> PhiKernel:
    """phi = 1{all arguments equal}; envelope 1."""
    k = mu.k
    table = np.zeros((k,) * arity)
    idx = (np.arange(k),) * arity
    table[idx] = 1.0
    return PhiKernel("monochrome", arity, table, np.ones(k), p)


def table_phi(table, psi=None, p: float = math.inf, name: str = "table") -> PhiKernel:
    table = np.asarray(table, dtype=float)
    arity = table.ndim
    if psi is None:
        # tightest product envelope with equal per-atom factors
        psi = np.full(table.shape[0], np.abs(table).max() ** (1.0 / arity))
    return PhiKernel(name, arity, table, np.asarray(psi, dtype=float), p)


def _check_inputs(motif: Motif, q: np.ndarray, x: np.ndarray, phi: PhiKernel):
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=np.int64)
    n = q.shape[0]
    if q.shape != (n, n):
        raise ValueError("coupling matrix must be square")
    if x.shape != (n,):
        raise ValueError(f"data vector length {x.shape} does not match n={n}")
    if phi.arity != motif.v:
        raise ValueError(f"phi arity {phi.arity} != motif order {motif.v}")
    if np.any(x < 0) or np.any(x >= phi.k):
        raise ValueError("data entries must index the measure's atoms")
    return q, x, n


def _axis_index(x, axis, v):
    shape = [1] * v
    shape[axis] = x.size
    return x.reshape(shape)


def _grid_sum(motif: Motif, q, x, phi, distinct: bool, limit: int):
    """Direct tuple sum via broadcasting; O(n^v) time and memory."""
    n = x.size
    v = motif.v
    if n**v > limit:
        raise ValueError(f"n^v = {n**v} exceeds the direct-evaluation limit {limit}")
    sites = np.arange(n)
    site_ax = [_axis_index(sites, a, v) for a in range(v)]
    term = phi.table[tuple(_axis_index(x, a, v) for a in range(v))]
    if distinct:
        mask = np.ones((1,) * v, dtype=bool)
        for a in range(v):
            for b in range(a + 1, v):
                mask = mask & (site_ax[a] != site_ax[b])
        term = term * mask
    for a, b in motif.edges:
        term = term * q[site_ax[a], site_ax[b]]
    return float(term.sum())


def v_statistic(motif: Motif, q, x, phi: PhiKernel, method: str = "auto",
                limit: int = DEFAULT_GRID_LIMIT) -> float:
    """V-statistic: n^-v sum over all tuples in [n]^v of phi times edge products."""
    q, x, n = _check_inputs(motif, q, x, phi)
    if method == "auto":
        method = "tree" if (motif.is_tree and phi.separable and n**motif.v > 1 << 18) else "direct"
    if method == "direct":
        return _grid_sum(motif, q, x, phi, distinct=False, limit=limit) / n**motif.v
    if method != "tree":
        raise ValueError(f"unknown method {method!r}")
    if not (motif.is_tree and phi.separable):
        raise ValueError("tree fast path needs a tree motif and separable phi")
    return _tree_v(motif, q, x, phi) / n**motif.v


def _tree_v(motif: Motif, q, x, phi: PhiKernel) -> float:
    """Leaf-elimination evaluation of the V sum for separable phi on trees."""
    if phi.name == "product":
        if phi.atoms is None:
            raise ValueError("product phi built without atom values")
        return _leaf_eliminate(motif, q, phi.atoms[x])
    # monochrome: one indicator channel per atom
    return float(sum(_leaf_eliminate(motif, q, (x == r).astype(float))
                     for r in range(phi.k)))


def _leaf_eliminate(motif: Motif, q, site_values: np.ndarray) -> float:
    """Sum over [n]^v of prod_a f(x_{i_a}) prod_edges Q by pruning leaves."""
    adj = {a: set(nbrs) for a, nbrs in enumerate(motif.adjacency())}
    messages = {a: site_values.copy() for a in range(motif.v)}
    alive = set(range(motif.v))
    while len(alive) > 1:
        leaf = next(a for a in alive if len(adj[a]) == 1)
        (parent,) = adj[leaf]
        messages[parent] = messages[parent] * (q @ messages[leaf])
        adj[parent].discard(leaf)
        adj[leaf].clear()
        alive.discard(leaf)
    root = alive.pop()
    return float(messages[root].sum())


def u_statistic(motif: Motif, q, x, phi: PhiKernel,
                limit: int = DEFAULT_GRID_LIMIT) -> float:
    """U-statistic: the V sum restricted to tuples of distinct indices."""
    q, x, n = _check_inputs(motif, q, x, phi)
    if n < motif.v:
        raise ValueError(f"need n >= v, got n={n} < v={motif.v}")
    return _grid_sum(motif, q, x, phi, distinct=True, limit=limit) / n**motif.v


def u_statistic_batch(motif: Motif, q, xs, phi: PhiKernel) -> np.ndarray:
    """U-statistic of each row of a batch of data vectors.

    Same distinct-tuple sum as u_statistic, accumulated tuple by tuple so a
    full enumeration over configurations stays affordable; tuples whose edge
    product vanishes are skipped.
    """
    q = np.asarray(q, dtype=float)
    xs = np.asarray(xs)
    if not np.issubdtype(xs.dtype, np.integer):
        xs = xs.astype(np.int64)
    n = q.shape[0]
    v = motif.v
    if xs.ndim != 2 or xs.shape[1] != n:
        raise ValueError("batch must be (num_configs, n)")
    out = np.zeros(xs.shape[0])
    cols = [xs[:, i] for i in range(n)]
    for tup in itertools.permutations(range(n), v):
        coeff = 1.0
        for a, b in motif.edges:
            coeff *= q[tup[a], tup[b]]
            if coeff == 0.0:
                break
        if coeff == 0.0:
            continue
        out += coeff * phi.table[tuple(cols[i] for i in tup)]
    return out / n**v


def uv_gap(motif: Motif, q, x, phi: PhiKernel) -> float:
    """|U_n - V_n|; O(1/n) for bounded phi, exactly 0 when repeats cannot couple."""
    return abs(u_statistic(motif, q, x, phi) - v_statistic(motif, q, x, phi, method="direct"))


def local_field(motif: Motif, q, x, phi: PhiKernel, site: int,
                limit: int = DEFAULT_GRID_LIMIT) -> np.ndarray:
    """Single-site field: atom a -> n * (distinct-tuple sum through `site` with x_site = a).

    exp(theta * field) is proportional to the exact single-site conditional
    of the Gibbs reweighting by exp(n theta U_n), because tuples avoiding the
    site cancel in the normalization.  Cost O(v k n^(v-1)).
    """
    q, x, n = _check_inputs(motif, q, x, phi)
    if not (0 <= site < n):
        raise ValueError("site out of range")
    v = motif.v
    k = phi.k
    if motif.is_edge:
        # (T w + T' w) / n with w the Q-weighted atom counts at the other end
        qrow = q[site].copy()
        qrow[site] = 0.0
        w = np.zeros(k)
        np.add.at(w, x, qrow)
        t = phi.table
        return (t @ w + t.T @ w) / n

    field = np.zeros(k)
    sites = np.arange(n)
    for pos in range(v):
        rest = [a for a in range(v) if a != pos]
        # axis 0 indexes the candidate atom, axes 1..v-1 the free positions
        def ax(arr, a):
            shape = [1] * v
            shape[0 if a == pos else 1 + rest.index(a)] = arr.size
            return arr.reshape(shape)

        site_ax = {a: ax(sites, a) for a in rest}
        term = phi.table[tuple(
            ax(np.arange(k), a) if a == pos else ax(x, a) for a in range(v)
        )]
        mask = np.ones((1,) * v, dtype=bool)
        for ai in range(len(rest)):
            mask = mask & (site_ax[rest[ai]] != site)
            for bi in range(ai + 1, len(rest)):
                mask = mask & (site_ax[rest[ai]] != site_ax[rest[bi]])
        term = term * mask
        for a, b in motif.edges:
            qa = q[site, site_ax[b]] if a == pos else (
                q[site_ax[a], site] if b == pos else q[site_ax[a], site_ax[b]])
            term = term * qa
        field += term.reshape(k, -1).sum(axis=1)
    return field / n ** (v - 1)
