"""Exponential-family machinery for finite-support base measures.

Everything here acts on a measure with finitely many real atoms: the
log-moment-generating function alpha, its derivative (the mean map), the
inverse mean map beta, the tilt's KL cost gamma, and plain KL divergence.
Means at the closure endpoints of the mean range map to +/-inf tilts and
point masses; that boundary branch is explicit rather than a numerical
overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "FiniteBaseMeasure",
    "TiltSolverConfig",
    "log_mgf",
    "mean_map",
    "tilt_variance",
    "inverse_mean",
    "gamma",
    "kl_divergence",
    "tilted_measure",
]

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class FiniteBaseMeasure:
    """Probability measure on finitely many distinct real atoms.

    All probabilities must be strictly positive (non-degenerate support);
    color alphabets use atoms 1..c.
    """

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 1 or probs.shape != atoms.shape or atoms.size == 0:
            raise ValueError("atoms and probs must be matching 1-d arrays")
        if np.unique(atoms).size != atoms.size:
            raise ValueError("atoms must be distinct")
        if np.any(probs <= 0):
            raise ValueError("all atom probabilities must be positive")
        if abs(probs.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def k(self) -> int:
        return self.atoms.size

    @property
    def mean(self) -> float:
        return float(np.dot(self.atoms, self.probs))

    @property
    def min_atom(self) -> float:
        return float(self.atoms.min())

    @property
    def max_atom(self) -> float:
        return float(self.atoms.max())

    @property
    def log_probs(self) -> np.ndarray:
        return np.log(self.probs)

    @classmethod
    def rademacher(cls) -> "FiniteBaseMeasure":
        return cls(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))

    @classmethod
    def uniform_colors(cls, c: int) -> "FiniteBaseMeasure":
        if c < 1:
            raise ValueError("need at least one color")
        return cls(np.arange(1, c + 1, dtype=float), np.full(c, 1.0 / c))


@dataclass(frozen=True)
class TiltSolverConfig:
    """Knobs for the safeguarded Newton solve of alpha'(theta) = m."""

    tol: float = 1e-12
    max_iter: int = 200
    bracket_init: float = 1.0     # initial half-width, doubled until it brackets
    bracket_cap: float = 1e5      # |theta| beyond this is numerically the boundary
    margin: float = 1e-13         # relative clamp distance from cl(N) endpoints

    def __post_init__(self):
        if self.tol <= 0 or self.margin <= 0:
            raise ValueError("tolerance and margin must be positive")


_DEFAULT_CFG = TiltSolverConfig()


def _theta_weights(mu: FiniteBaseMeasure, theta):
    """Normalized tilted probabilities, broadcast over an array of thetas."""
    theta = np.asarray(theta, dtype=float)
    logits = theta[..., None] * mu.atoms + mu.log_probs
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def log_mgf(mu: FiniteBaseMeasure, theta):
    """alpha(theta) = log sum_k p_k exp(theta a_k), overflow-safe."""
    theta = np.asarray(theta, dtype=float)
    out = logsumexp(theta[..., None] * mu.atoms + mu.log_probs, axis=-1)
    return float(out) if out.ndim == 0 else out

def mean_map(mu: FiniteBaseMeasure, theta):
    """alpha'(theta): mean of the theta-tilt of mu."""
    out = _theta_weights(mu, theta) @ mu.atoms
    return float(out) if np.ndim(out) == 0 else out

def tilt_variance(mu: FiniteBaseMeasure, theta):
    """alpha''(theta): variance of the theta-tilt of mu."""
    w = _theta_weights(mu, theta)
    m = w @ mu.atoms
    out = w @ (mu.atoms ** 2) - m ** 2
    return float(out) if np.ndim(out) == 0 else out


def inverse_mean(mu: FiniteBaseMeasure, m, cfg: TiltSolverConfig | None = None):
    """beta(m): the theta with mean_map(mu, theta) = m.

    Accepts scalars or arrays of means in [min_atom, max_atom].  Exact
    endpoint values return +/-inf sentinels; anything outside the closed
    mean range raises.  Safeguarded Newton: iterates are clamped into a
    bisection bracket, so monotonicity of the mean map guarantees
    convergence to cfg.tol.
    """
    cfg = cfg or _DEFAULT_CFG
    m_arr = np.asarray(m, dtype=float)
    scalar = m_arr.ndim == 0
    m_arr = np.atleast_1d(m_arr).astype(float)

    lo_atom, hi_atom = mu.min_atom, mu.max_atom
    if np.any(m_arr < lo_atom) or np.any(m_arr > hi_atom):
        raise ValueError("mean outside the closed mean range of the measure")

    out = np.empty_like(m_arr)
    at_hi = m_arr == hi_atom
    at_lo = m_arr == lo_atom
    out[at_hi] = math.inf
    out[at_lo] = -math.inf
    interior = ~(at_hi | at_lo)
    if np.any(interior):
        out[interior] = _newton_inverse(mu, m_arr[interior], cfg)
    return float(out[0]) if scalar else out


def _newton_inverse(mu, targets, cfg):
    lo = np.full_like(targets, -cfg.bracket_init)
    hi = np.full_like(targets, cfg.bracket_init)
    # expand until the bracket straddles every target
    for _ in range(64):
        need_lo = mean_map(mu, lo) >= targets
        need_hi = mean_map(mu, hi) <= targets
        if not (need_lo.any() or need_hi.any()):
            break
        lo[need_lo] = np.maximum(lo[need_lo] * 2.0, -cfg.bracket_cap)
        hi[need_hi] = np.minimum(hi[need_hi] * 2.0, cfg.bracket_cap)
    theta = 0.5 * (lo + hi)
    for _ in range(cfg.max_iter):
        f = mean_map(mu, theta) - targets
        lo = np.where(f < 0, theta, lo)
        hi = np.where(f > 0, theta, hi)
        step = f / np.maximum(tilt_variance(mu, theta), 1e-300)
        theta_new = theta - step
        # fall back to bisection whenever Newton leaves the bracket
        outside = (theta_new <= lo) | (theta_new >= hi)
        theta_new[outside] = 0.5 * (lo[outside] + hi[outside])
        done = np.abs(theta_new - theta) <= cfg.tol * (1.0 + np.abs(theta_new))
        theta = theta_new
        if done.all() and np.all(np.abs(mean_map(mu, theta) - targets) <= 1e-14 + cfg.tol):
            break
    return theta


def gamma(mu: FiniteBaseMeasure, m, cfg: TiltSolverConfig | None = None):
    """KL cost of tilting mu to mean m: theta*m - alpha(theta) at theta = beta(m).

    At the endpoints of the mean range this is -log mu({endpoint atom}),
    the cost of the degenerate point mass.
    """
    cfg = cfg or _DEFAULT_CFG
    m_arr = np.asarray(m, dtype=float)
    scalar = m_arr.ndim == 0
    m_arr = np.atleast_1d(m_arr).astype(float)
    lo_atom, hi_atom = mu.min_atom, mu.max_atom
    if np.any(m_arr < lo_atom) or np.any(m_arr > hi_atom):
        raise ValueError("mean outside the closed mean range of the measure")

    out = np.empty_like(m_arr)
    at_hi = m_arr == hi_atom
    at_lo = m_arr == lo_atom
    out[at_hi] = -math.log(mu.probs[np.argmax(mu.atoms)])
    out[at_lo] = -math.log(mu.probs[np.argmin(mu.atoms)])
    interior = ~(at_hi | at_lo)
    if np.any(interior):
        theta = _newton_inverse(mu, m_arr[interior], cfg)
        out[interior] = theta * m_arr[interior] - log_mgf(mu, theta)
    out = np.maximum(out, 0.0)
    return float(out[0]) if scalar else out


def kl_divergence(nu: FiniteBaseMeasure, mu: FiniteBaseMeasure) -> float:
    """D(nu || mu) for measures on the same atom set; 0 log 0 = 0."""
    if nu.k != mu.k or not np.array_equal(nu.atoms, mu.atoms):
        raise ValueError("measures must share the same atoms")
    return kl_vector(nu.probs, mu.probs)


def kl_vector(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence between probability vectors over a shared support."""
    p = np.asarray(p, dtype=float)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(np.asarray(q)[mask]))))


def tilted_measure(mu: FiniteBaseMeasure, theta: float) -> FiniteBaseMeasure:
    """The theta-exponential tilt of mu: probs proportional to p_k exp(theta a_k)."""
    if math.isinf(theta):
        raise ValueError("infinite tilt: the limit is a point mass, which has "
                         "degenerate support; handle it at the caller")
    w = _theta_weights(mu, float(theta))
    return FiniteBaseMeasure(mu.atoms, w)
