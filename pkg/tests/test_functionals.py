import math

import numpy as np
import pytest

from ldpustat.functionals import (
    BlockMeasure,
    TiltProfile,
    divergence,
    g1,
    g1_gradient,
    g2,
    g2_gradient,
    lift_xi1,
    lift_xi2,
    t_functional,
    t_motif,
)
from ldpustat.kernel import StepKernel, cut_distance, lp_norm
from ldpustat.tilt import FiniteBaseMeasure, gamma, inverse_mean
from ldpustat.ustat import Motif, monochrome_phi, product_phi, table_phi

RADEMACHER = FiniteBaseMeasure.rademacher()


def random_kernel(rng, m, scale=1.0):
    a = rng.normal(scale=scale, size=(m, m))
    return StepKernel(0.5 * (a + a.T))


def random_rows(rng, m, k):
    rows = rng.dirichlet(np.ones(k), size=m)
    return np.maximum(rows, 1e-6) / np.maximum(rows, 1e-6).sum(axis=1, keepdims=True)


class TestTMotif:
    def test_constant_kernel_factorizes(self):
        rng = np.random.default_rng(1)
        for motif in (Motif.edge(), Motif.triangle(), Motif.path(3)):
            cs = rng.uniform(-1, 1, motif.v)
            fs = [TiltProfile(np.full(3, c)) for c in cs]
            val = t_motif(motif, StepKernel.constant(1.0, 2), fs)
            assert val == pytest.approx(float(np.prod(cs)), abs=1e-13)

    def test_zero_vertex_function(self):
        fs = [TiltProfile(np.zeros(2)), TiltProfile(np.ones(2))]
        assert t_motif(Motif.edge(), StepKernel.constant(2.0, 2), fs) == 0.0

    def test_counting_bound(self):
        # |t| <= ||W||_{q Delta}^{|E|} for |f| <= 1
        rng = np.random.default_rng(3)
        for motif in (Motif.edge(), Motif.triangle(), Motif.star(3)):
            for _ in range(6):
                w = random_kernel(rng, int(rng.integers(2, 6)))
                fs = [TiltProfile(rng.uniform(-1, 1, w.m)) for _ in range(motif.v)]
                val = t_motif(motif, w, fs)
                for q in (1.5, 2.0, 4.0):
                    bound = lp_norm(w, q * motif.delta) ** motif.num_edges
                    assert abs(val) <= bound + 1e-10

    def test_counting_stability_k2(self):
        # |t(W1) - t(W2)| <= d_cut(W1, W2) for the edge motif, |f| <= 1
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = int(rng.integers(2, 6))
            w1 = StepKernel(np.clip(random_kernel(rng, m).values, -1, 1))
            w2 = StepKernel(np.clip(random_kernel(rng, m).values, -1, 1))
            fs = [TiltProfile(rng.uniform(-1, 1, m)) for _ in range(2)]
            gap = abs(t_motif(Motif.edge(), w1, fs) - t_motif(Motif.edge(), w2, fs))
            assert gap <= cut_distance(w1, w2) + 1e-10

    def test_tree_matches_direct(self):
        rng = np.random.default_rng(7)
        for motif in (Motif.path(4), Motif.star(3), Motif.edge()):
            for _ in range(5):
                w = random_kernel(rng, int(rng.integers(2, 8)))
                fs = [TiltProfile(rng.uniform(-2, 2, w.m)) for _ in range(motif.v)]
                direct = t_motif(motif, w, fs, method="direct")
                tree = t_motif(motif, w, fs, method="tree")
                assert tree == pytest.approx(direct, rel=1e-10, abs=1e-12)

    def test_mixed_grids_refined(self):
        w = StepKernel(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        f_coarse = TiltProfile(np.array([0.5]))
        f_fine = TiltProfile(np.array([0.2, 0.8, 0.4, 0.6]))
        val = t_motif(Motif.edge(), w, [f_coarse, f_fine])
        # manual refinement to the 4-grid
        wv = np.kron(w.values, np.ones((2, 2)))
        fc = np.full(4, 0.5)
        ff = f_fine.values
        manual = (np.outer(fc, ff) * wv).sum() / 16
        assert val == pytest.approx(float(manual), abs=1e-14)


class TestTFunctional:
    def test_product_reference_measure_mean_zero(self):
        nu = BlockMeasure.product(RADEMACHER, m=3)
        phi = product_phi(RADEMACHER, 2)
        w = random_kernel(np.random.default_rng(9), 3)
        assert t_functional(Motif.edge(), w, nu, phi) == pytest.approx(0.0, abs=1e-14)

    def test_uniform_color_collision(self):
        # W = 1, monochrome phi, independent uniform colors: c^(1-v)
        for c, v in ((2, 2), (3, 2), (3, 3)):
            mu = FiniteBaseMeasure.uniform_colors(c)
            nu = BlockMeasure.product(mu, m=2)
            motif = Motif.edge() if v == 2 else Motif.triangle()
            phi = monochrome_phi(mu, v)
            val = t_functional(motif, StepKernel.constant(1.0, 2), nu, phi)
            assert val == pytest.approx(c ** (1 - v), abs=1e-13)

    def test_generic_table_matches_separable(self):
        rng = np.random.default_rng(11)
        mu = FiniteBaseMeasure(np.array([-1.0, 0.5]), np.array([0.4, 0.6]))
        w = random_kernel(rng, 3)
        nu = BlockMeasure(random_rows(rng, 3, 2))
        phi = product_phi(mu, 2)
        generic = table_phi(phi.table, psi=phi.psi)
        a = t_functional(Motif.edge(), w, nu, phi)
        b = t_functional(Motif.edge(), w, nu, generic)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-14)

    def test_monte_carlo_oracle(self):
        # 10^6 iid draws of (A, B) per vertex reproduce the exact sum within 3 se
        rng = np.random.default_rng(13)
        mu = FiniteBaseMeasure(np.array([-1.0, 2.0]), np.array([0.7, 0.3]))
        w = random_kernel(rng, 3)
        nu = BlockMeasure(random_rows(rng, 3, 2))
        phi = product_phi(mu, 2)
        exact = t_functional(Motif.edge(), w, nu, phi)

        draws = 1_000_000
        blocks = rng.integers(0, 3, size=(draws, 2))
        atoms = np.empty((draws, 2), dtype=int)
        for u in range(3):
            for a in range(2):
                mask = blocks[:, a] == u
                atoms[mask, a] = rng.choice(2, size=int(mask.sum()), p=nu.rows[u])
        vals = (mu.atoms[atoms[:, 0]] * mu.atoms[atoms[:, 1]]
                * w.values[blocks[:, 0], blocks[:, 1]])
        mc, se = vals.mean(), vals.std(ddof=1) / math.sqrt(draws)
        assert abs(mc - exact) < 3 * se + 1e-12


class TestG1G2:
    def test_g1_constant(self):
        for motif in (Motif.edge(), Motif.triangle()):
            f = TiltProfile(np.full(2, 0.7))
            assert g1(motif, StepKernel.constant(1.0, 2), f) == pytest.approx(
                0.7**motif.v, abs=1e-13)

    def test_g1_zero(self):
        assert g1(Motif.edge(), StepKernel.constant(1.0, 2), TiltProfile(np.zeros(2))) == 0.0

    def test_g1_quadratic_form_oracle(self):
        rng = np.random.default_rng(15)
        w = random_kernel(rng, 4)
        f = TiltProfile(rng.uniform(-1, 1, 4))
        direct = 0.0
        for u in range(4):
            for t in range(4):
                direct += w.values[u, t] * f.values[u] * f.values[t] / 16
        assert g1(Motif.edge(), w, f) == pytest.approx(direct, abs=1e-13)

    def test_g2_uniform_rows(self):
        for c in (2, 3):
            rows = np.full((3, c), 1.0 / c)
            val = g2(Motif.edge(), StepKernel.constant(1.0, 3), TiltProfile(rows))
            assert val == pytest.approx(c ** (1 - 2), abs=1e-13)

    def test_g2_single_color(self):
        rng = np.random.default_rng(17)
        w = random_kernel(rng, 3)
        rows = np.zeros((3, 3))
        rows[:, 1] = 1.0
        ones = TiltProfile(np.ones(3))
        expected = t_motif(Motif.edge(), w, [ones, ones])
        assert g2(Motif.edge(), w, TiltProfile(rows)) == pytest.approx(expected, abs=1e-13)

    def test_g2_matches_t_functional_monochrome(self):
        rng = np.random.default_rng(19)
        mu = FiniteBaseMeasure.uniform_colors(3)
        for motif in (Motif.edge(), Motif.triangle()):
            w = random_kernel(rng, 3)
            rows = random_rows(rng, 3, 3)
            f = TiltProfile(rows)
            phi = monochrome_phi(mu, motif.v)
            assert g2(motif, w, f) == pytest.approx(
                t_functional(motif, w, lift_xi2(f), phi), rel=1e-11, abs=1e-13)

    def test_g1_matches_t_functional_product(self):
        rng = np.random.default_rng(21)
        mu = RADEMACHER
        for motif in (Motif.edge(), Motif.triangle()):
            w = random_kernel(rng, 3)
            f = TiltProfile(rng.uniform(-0.9, 0.9, 3))
            phi = product_phi(mu, motif.v)
            lifted = lift_xi1(mu, f)
            assert g1(motif, w, f) == pytest.approx(
                t_functional(motif, w, lifted, phi), rel=1e-10, abs=1e-12)


class TestGradients:
    def test_g1_gradient_constant_edge(self):
        grad = g1_gradient(Motif.edge(), StepKernel.constant(1.0, 3),
                           TiltProfile(np.full(3, 0.4)))
        assert np.allclose(grad, 0.8, atol=1e-13)

    def test_g1_gradient_zero_profile(self):
        grad = g1_gradient(Motif.triangle(), StepKernel.constant(1.0, 3),
                           TiltProfile(np.zeros(3)))
        assert np.allclose(grad, 0.0)

    def test_g1_gradient_finite_difference(self):
        rng = np.random.default_rng(23)
        h = 1e-5
        for motif in (Motif.edge(), Motif.triangle(), Motif.path(3)):
            w = random_kernel(rng, 4)
            f = rng.uniform(-1, 1, 4)
            grad = g1_gradient(motif, w, TiltProfile(f))
            for u in range(4):
                fp, fm = f.copy(), f.copy()
                fp[u] += h
                fm[u] -= h
                fd = (g1(motif, w, TiltProfile(fp)) - g1(motif, w, TiltProfile(fm))) / (2 * h)
                width = 0.25
                assert grad[u] * width == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_g2_gradient_symmetry_and_fd(self):
        rng = np.random.default_rng(25)
        w = random_kernel(rng, 3)
        uniform = TiltProfile(np.full((3, 2), 0.5))
        grad = g2_gradient(Motif.edge(), w, uniform)
        assert np.allclose(grad[:, 0], grad[:, 1], atol=1e-13)

        rows = random_rows(rng, 3, 2)
        grad = g2_gradient(Motif.edge(), w, TiltProfile(rows))
        h = 1e-6
        for u in range(3):
            for r in range(2):
                # perturb one color channel without renormalizing: evaluate via t sums
                def g2_raw(mat):
                    total = 0.0
                    for rr in range(2):
                        total += t_motif(Motif.edge(), w,
                                         [np.ascontiguousarray(mat[:, rr])] * 2)
                    return total

                rp, rm = rows.copy(), rows.copy()
                rp[u, r] += h
                rm[u, r] -= h
                fd = (g2_raw(rp) - g2_raw(rm)) / (2 * h)
                assert grad[u, r] / 3 == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestLifts:
    def test_mean_profile_lifts_to_product(self):
        f = TiltProfile(np.full(3, RADEMACHER.mean))
        nu = lift_xi1(RADEMACHER, f)
        assert np.allclose(nu.rows, 0.5, atol=1e-12)

    def test_endpoint_point_mass(self):
        f = TiltProfile(np.array([1.0, 0.0, -1.0]))
        nu = lift_xi1(RADEMACHER, f)
        assert np.allclose(nu.rows[0], [0.0, 1.0])
        assert np.allclose(nu.rows[2], [1.0, 0.0])

    def test_conditional_means_reproduce_profile(self):
        rng = np.random.default_rng(27)
        mu = FiniteBaseMeasure(np.array([-1.5, 0.0, 2.0]), np.array([0.3, 0.4, 0.3]))
        vals = rng.uniform(-1.4, 1.9, size=5)
        nu = lift_xi1(mu, TiltProfile(vals))
        assert np.allclose(nu.conditional_means(mu), vals, atol=1e-10)

    def test_color_lift_identity(self):
        rows = random_rows(np.random.default_rng(29), 4, 3)
        nu = lift_xi2(TiltProfile(rows))
        assert np.allclose(nu.rows, rows)

    def test_uniform_color_lift_is_product(self):
        mu = FiniteBaseMeasure.uniform_colors(3)
        nu = lift_xi2(TiltProfile(np.full((2, 3), 1 / 3)))
        assert np.allclose(nu.rows, BlockMeasure.product(mu, 2).rows)


class TestDivergence:
    def test_reference_zero(self):
        assert divergence(BlockMeasure.product(RADEMACHER, 4), RADEMACHER) == 0.0

    def test_point_mass_rows(self):
        rows = np.tile([0.0, 1.0], (3, 1))
        assert divergence(BlockMeasure(rows), RADEMACHER) == pytest.approx(math.log(2))

    def test_lift_divergence_equals_average_gamma(self):
        rng = np.random.default_rng(31)
        mu = FiniteBaseMeasure(np.array([-1.0, 0.5, 1.0]), np.array([0.25, 0.5, 0.25]))
        vals = rng.uniform(-0.9, 0.9, size=6)
        nu = lift_xi1(mu, TiltProfile(vals))
        expected = float(np.mean(gamma(mu, vals)))
        assert divergence(nu, mu) == pytest.approx(expected, abs=1e-10)

    def test_color_lift_divergence_formula(self):
        rng = np.random.default_rng(33)
        mu = FiniteBaseMeasure(np.array([1.0, 2.0, 3.0]), np.array([0.2, 0.5, 0.3]))
        rows = random_rows(rng, 4, 3)
        nu = lift_xi2(TiltProfile(rows))
        manual = float(np.mean((rows * np.log(rows / mu.probs)).sum(axis=1)))
        assert divergence(nu, mu) == pytest.approx(manual, abs=1e-12)
