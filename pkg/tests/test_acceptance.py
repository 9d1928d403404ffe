"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line (run pytest with -s or -rA to see them)."""

import math
import time

import numpy as np
import pytest

from ldpustat.functionals import TiltProfile, g1, g1_gradient, t_motif
from ldpustat.gibbs import (
    GibbsModel,
    complete_graph_model,
    exact_gibbs_distribution,
    site_conditional,
)
from ldpustat.kernel import StepKernel, cut_distance, lp_norm
from ldpustat.tilt import (
    FiniteBaseMeasure,
    gamma,
    inverse_mean,
    kl_divergence,
    mean_map,
    tilted_measure,
)
from ldpustat.ustat import Motif, monochrome_phi, product_phi
from ldpustat.verify import (
    check_example_reproduction,
    check_exact_oracles,
    check_ldp_tail,
    check_legendre_consistency,
    check_mcmc_partition,
    check_weak_law,
    check_z_convergence,
)

RADEMACHER = FiniteBaseMeasure.rademacher()


def _report(rep, max_seconds=None):
    print(rep.summary_line())
    assert rep.passed, rep.details
    if max_seconds is not None:
        assert rep.elapsed < max_seconds, (
            f"{rep.name} took {rep.elapsed:.1f}s, budget {max_seconds}s")


class TestAcceptance:
    def test_criterion_1_exact_oracles(self):
        _report(check_exact_oracles(), max_seconds=60)

    def test_criterion_2_mcmc_partition(self):
        _report(check_mcmc_partition(sweeps=100_000), max_seconds=300)

    def test_criterion_3_z_convergence(self):
        _report(check_z_convergence(), max_seconds=60)

    def test_criterion_4_legendre_consistency(self):
        _report(check_legendre_consistency())

    def test_criterion_5_ldp_tail(self):
        _report(check_ldp_tail(), max_seconds=120)

    def test_criterion_6_weak_law(self):
        _report(check_weak_law(chains=8, sweeps=2000))

    def test_criterion_7_example_reproduction(self):
        _report(check_example_reproduction(n=2000, seed=2024))


class TestCriterion8Properties:
    """Property suites at their stated tolerances, all under fixed seeds."""

    def test_holder_and_counting_bounds(self):
        rng = np.random.default_rng(81)
        checked = 0
        for motif in (Motif.edge(), Motif.triangle(), Motif.star(3)):
            for _ in range(10):
                m = int(rng.integers(2, 6))
                vals = rng.normal(size=(m, m))
                w = StepKernel(0.5 * (vals + vals.T))
                fs = [TiltProfile(rng.uniform(-1, 1, m)) for _ in range(motif.v)]
                t = t_motif(motif, w, fs)
                bound = lp_norm(w, 2.0 * motif.delta) ** motif.num_edges
                assert abs(t) <= bound + 1e-10
                checked += 1
        print(f"[PASS] criterion-8 holder/counting bounds ({checked} instances)")

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(83)
        h = 1e-5
        worst = 0.0
        for motif in (Motif.edge(), Motif.triangle(), Motif.path(3)):
            vals = rng.normal(size=(4, 4))
            w = StepKernel(0.5 * (vals + vals.T))
            f = rng.uniform(-0.8, 0.8, 4)
            grad = g1_gradient(motif, w, TiltProfile(f))
            for u in range(4):
                fp, fm = f.copy(), f.copy()
                fp[u] += h
                fm[u] -= h
                fd = (g1(motif, w, TiltProfile(fp))
                      - g1(motif, w, TiltProfile(fm))) / (2 * h)
                target = grad[u] * 0.25
                if abs(target) > 1e-8:
                    worst = max(worst, abs(fd - target) / abs(target))
        assert worst < 1e-6
        print(f"[PASS] criterion-8 gradient finite differences (worst rel {worst:.2e})")

    def test_tilt_round_trips(self):
        thetas = np.linspace(-5, 5, 41)
        worst_theta = np.max(np.abs(
            inverse_mean(RADEMACHER, mean_map(RADEMACHER, thetas)) - thetas))
        assert worst_theta < 1e-10
        worst_gamma = 0.0
        for m in np.linspace(-0.95, 0.95, 21):
            nu = tilted_measure(RADEMACHER, inverse_mean(RADEMACHER, m))
            worst_gamma = max(worst_gamma,
                              abs(float(gamma(RADEMACHER, m)) - kl_divergence(nu, RADEMACHER)))
        assert worst_gamma < 1e-10
        print(f"[PASS] criterion-8 tilt round trips (theta {worst_theta:.2e}, "
              f"gamma-kl {worst_gamma:.2e})")

    def test_kl_nonnegativity(self):
        rng = np.random.default_rng(85)
        atoms = np.array([-1.0, 0.3, 2.0])
        for _ in range(50):
            p = rng.dirichlet(np.ones(3)) + 1e-6
            q = rng.dirichlet(np.ones(3)) + 1e-6
            nu = FiniteBaseMeasure(atoms, p / p.sum())
            mu = FiniteBaseMeasure(atoms, q / q.sum())
            assert kl_divergence(nu, mu) >= 0.0
        print("[PASS] criterion-8 KL nonnegativity (50 pairs)")

    def test_cut_norm_pseudometric(self):
        rng = np.random.default_rng(87)
        for _ in range(10):
            kernels = []
            for _k in range(3):
                m = int(rng.integers(2, 6))
                vals = rng.normal(size=(m, m))
                kernels.append(StepKernel(0.5 * (vals + vals.T)))
            a, b, c = kernels
            assert cut_distance(a, b) == pytest.approx(cut_distance(b, a), abs=1e-12)
            assert cut_distance(a, b) <= (cut_distance(a, c)
                                          + cut_distance(c, b) + 1e-12)
            assert cut_distance(a, a) <= 1e-12
        print("[PASS] criterion-8 cut-norm pseudometric axioms (10 triples)")

    def test_chain_stationarity_total_variation(self):
        rng = np.random.default_rng(89)
        worst = 0.0
        cases = [
            (Motif.edge(), product_phi(RADEMACHER, 2), RADEMACHER, 5),
            (Motif.path(3), monochrome_phi(FiniteBaseMeasure.uniform_colors(2), 3),
             FiniteBaseMeasure.uniform_colors(2), 5),
        ]
        for motif, phi, mu, n in cases:
            vals = rng.normal(size=(n, n))
            q = 0.5 * (vals + vals.T)
            np.fill_diagonal(q, 0.0)
            model = GibbsModel(motif, q, phi, mu, 0.8)
            configs, pi = exact_gibbs_distribution(model)
            index = {tuple(cfg): i for i, cfg in enumerate(configs)}
            dist = pi.copy()
            for site in range(n):
                new_dist = np.zeros_like(dist)
                for i, cfg in enumerate(configs):
                    if dist[i] == 0.0:
                        continue
                    cond = site_conditional(model, np.array(cfg, dtype=np.int64), site)
                    for a in range(mu.k):
                        cc = list(cfg)
                        cc[site] = a
                        new_dist[index[tuple(cc)]] += dist[i] * cond[a]
                dist = new_dist
            worst = max(worst, 0.5 * float(np.abs(dist - pi).sum()))
        assert worst < 1e-10
        print(f"[PASS] criterion-8 chain stationarity (worst TV {worst:.2e})")
