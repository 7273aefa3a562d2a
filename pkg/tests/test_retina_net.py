import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from retinaprobe.numerics import GridSpec, normal_pdf
from retinaprobe.photon_stats import apply_loss, coherent, fock, make_state, thermal
from retinaprobe.retina_net import (
    BipolarLayer,
    CountDistribution,
    GridCoverageError,
    NetworkSpec,
    RodParams,
    isomerization_dist,
    isomerization_dist_correlated,
    isomerization_given_n,
    network_output,
    photocurrent_density,
    rod_output,
    two_cell_conditional,
)

ROD = RodParams()
SD = ROD.sigma_D


def wide_grid(step=0.002, lo=-6.0, hi=14.0):
    return GridSpec.covering(lo, hi, step)


class TestRodParams:
    def test_defaults(self):
        assert (ROD.sigma_D, ROD.sigma_A, ROD.A0_bar, ROD.eta) == (0.15, 0.5, 0.7, 0.4)

    @pytest.mark.parametrize("kw", [{"sigma_D": 0.0}, {"sigma_A": -1.0}, {"eta": 1.2}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            RodParams(**kw)


class TestIsomerization:
    def test_bernoulli(self):
        np.testing.assert_allclose(isomerization_given_n(1, 0.4).probs, [0.6, 0.4])

    def test_no_photons(self):
        np.testing.assert_array_equal(isomerization_given_n(0, 0.7).probs, [1.0])

    def test_binomial_entry(self):
        assert isomerization_given_n(5, 0.4).probs[2] == pytest.approx(0.3456, rel=1e-13)

    def test_fock_reduces(self):
        np.testing.assert_allclose(isomerization_dist(fock(1), 0.4).probs, [0.6, 0.4])

    @pytest.mark.parametrize("m,eta", [(1.0, 0.4), (5.0, 0.4), (10.0, 0.1)])
    def test_poisson_thinning(self, m, eta):
        c = isomerization_dist(coherent(m), eta).probs
        np.testing.assert_allclose(c, stats.poisson.pmf(np.arange(c.size), eta * m), atol=1e-10)

    @pytest.mark.parametrize("d", [fock(3), coherent(2.0), thermal(2.0)])
    def test_eta_zero(self, d):
        c = isomerization_dist(d, 0.0).probs
        assert c[0] == pytest.approx(d.probs.sum()) and np.all(c[1:] == 0)


class TestCorrelated:
    def test_two_cell_single_photon(self):
        np.testing.assert_allclose(isomerization_dist_correlated(fock(1), 0.4, 2).probs, [0.76, 0.24])

    def test_vacuum(self):
        np.testing.assert_allclose(isomerization_dist_correlated(fock(0), 0.4, 2).probs, [1.0])

    def test_eta_zero(self):
        c = isomerization_dist_correlated(fock(4), 0.0, 2).probs
        assert c[0] == pytest.approx(1.0) and np.all(c[1:] == 0)

    def test_rejects_one_cell(self):
        with pytest.raises(ValueError):
            isomerization_dist_correlated(fock(1), 0.4, 1)

    @settings(max_examples=100)
    @given(st.integers(0, 20), st.floats(0.0, 1.0))
    def test_two_cell_normalized(self, n, eta):
        assert two_cell_conditional(n, eta).sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 20), st.floats(0.0, 1.0))
    def test_two_cell_is_depleted_binomial(self, n, eta):
        # second cell sees Bin(n - k1, eta) photons with k1 ~ Bin(n, eta)
        q = eta * (1 - eta)
        ref = np.array([math.comb(n, k) * q**k * (1 - q) ** (n - k) for k in range(n + 1)])
        np.testing.assert_allclose(two_cell_conditional(n, eta), ref, atol=1e-12)

    def test_sequential_depletion_three_cells(self):
        # exact enumeration of three sequential binomial draws
        n, eta = 4, 0.3
        ref = np.zeros(n + 1)
        for k1 in range(n + 1):
            for k2 in range(n - k1 + 1):
                p12 = stats.binom.pmf(k1, n, eta) * stats.binom.pmf(k2, n - k1, eta)
                ref[: n - k1 - k2 + 1] += p12 * stats.binom.pmf(np.arange(n - k1 - k2 + 1), n - k1 - k2, eta)
        got = isomerization_dist_correlated(fock(n), eta, 3).probs
        np.testing.assert_allclose(got[: n + 1], ref, atol=1e-14)


class TestPhotocurrent:
    def test_dark_peak(self):
        d = photocurrent_density(CountDistribution(np.array([1.0])), ROD, wide_grid())
        assert d.pdf(0.0) == pytest.approx(1 / (math.sqrt(2 * math.pi) * 0.15), rel=1e-9)
        assert d.pdf(0.0) == pytest.approx(2.65962, abs=1e-5)
        assert d.atom_mass == 0

    def test_single_isomerization_mean(self):
        d = photocurrent_density(CountDistribution(np.array([0.0, 1.0])), ROD, wide_grid())
        assert d.mean() == pytest.approx(0.7, rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(lambda v: sum(v) > 0.1))
    def test_mixture_mean(self, w):
        p = np.array(w) / sum(w)
        d = photocurrent_density(CountDistribution(p), ROD, wide_grid())
        assert d.mean() == pytest.approx(ROD.A0_bar * np.dot(np.arange(p.size), p), abs=1e-9)
        assert d.mass_defect() < 1e-9

    def test_rejects_short_grid(self):
        with pytest.raises(GridCoverageError):
            photocurrent_density(CountDistribution(np.array([0.0, 1.0])), ROD, GridSpec.covering(-1, 1, 0.01))


class TestRodOutput:
    def test_dark(self):
        d = rod_output(fock(0), ROD)
        np.testing.assert_allclose(d.density, normal_pdf(d.grid, 0.0, SD**2), atol=1e-12)

    def test_single_photon_mixture(self):
        d = rod_output(fock(1), ROD)
        ref = 0.6 * normal_pdf(d.grid, 0.0, SD**2) + 0.4 * normal_pdf(d.grid, 0.7, SD**2 + 0.25)
        np.testing.assert_allclose(d.density, ref, atol=1e-12)

    def test_thermal_mean(self):
        assert rod_output(thermal(1), ROD).mean() == pytest.approx(0.28, rel=1e-6)

    @pytest.mark.parametrize("kind", ["fock", "coherent", "thermal"])
    @pytest.mark.parametrize("n", [1, 5, 10])
    @pytest.mark.parametrize("u", [1.0, 0.5])
    def test_mean_chain(self, kind, n, u):
        d = apply_loss(make_state(kind, n), u)
        out = rod_output(d, ROD)
        assert out.mean() == pytest.approx(ROD.eta * u * n * ROD.A0_bar, rel=1e-6)
        assert out.mass_defect() < 1e-6


class TestNetworkSpec:
    def test_two_layer(self):
        s = NetworkSpec.two_layer([0.5, 0.35])
        assert s.n_weights == 2 and s.ganglion_threshold == 0.1

    @pytest.mark.parametrize("w", [[-0.1, 1.0], [math.inf, 1.0], [math.nan, 1.0]])
    def test_rejects_weights(self, w):
        with pytest.raises(ValueError):
            NetworkSpec.two_layer(w)

    def test_rejects_bad_partition(self):
        with pytest.raises(ValueError):
            NetworkSpec.three_layer([1.0, 1.0], [(0, 1), (1, 2)], ROD)

    def test_weight_count(self):
        with pytest.raises(ValueError):
            NetworkSpec(rods=(ROD, ROD), weights=(1.0,))


class TestNetworkOutput:
    def test_dark_single_rod(self):
        law = network_output(NetworkSpec.two_layer([1.0]), fock(0))
        # trapezoid mass below T carries an O(h^2) error of a few 1e-6
        assert law.atom_mass == pytest.approx(stats.norm.cdf(0.1 / 0.15), abs=1e-5)
        assert law.atom_mass == pytest.approx(0.7475, abs=1e-4)
        np.testing.assert_allclose(law.density, normal_pdf(law.grid + 0.1, 0.0, SD**2), atol=1e-6)

    def test_atom_error_is_second_order(self):
        exact = stats.norm.cdf(0.1 / 0.15)
        spec = NetworkSpec.two_layer([1.0])
        e1 = abs(network_output(spec, fock(0), 0.004).atom_mass - exact)
        e2 = abs(network_output(spec, fock(0), 0.002).atom_mass - exact)
        assert e1 / e2 == pytest.approx(4.0, rel=0.05)

    def test_clip_free_shift(self):
        law = network_output(NetworkSpec.two_layer([0.5], ganglion_threshold=-10.0), fock(0))
        assert law.atom_mass == 0.0
        assert law.mean() == pytest.approx(10.0, abs=1e-9)
        assert law.variance() == pytest.approx(0.25 * SD**2, rel=1e-5)

    @pytest.mark.parametrize("n_rods", [2, 3])
    def test_equal_weights_reduce_to_one_variable(self, n_rods):
        # the sum of N iid rod currents is the same variable with N-fold convolved law
        w = 0.4
        law = network_output(NetworkSpec.two_layer([w] * n_rods), fock(1))
        rng = np.random.default_rng(7)
        k = rng.binomial(1, 0.4, size=(n_rods, 400000))
        a = k * 0.7 + np.sqrt(SD**2 + k * 0.25) * rng.standard_normal(k.shape)
        f = np.maximum(w * a.sum(0) - 0.1, 0)
        assert law.atom_mass == pytest.approx(np.mean(f == 0), abs=4 * math.sqrt(0.25 / f.size))
        assert law.mean() == pytest.approx(f.mean(), abs=5 * f.std() / math.sqrt(f.size))

    def test_three_layer_clip_free_ganglion(self):
        spec = NetworkSpec.three_layer(
            [0.6, 0.3], [(0, 1), (2, 3)], ROD, bipolar_threshold=0.0, ganglion_threshold=-50.0
        )
        law = network_output(spec, coherent(2.0))
        # both bipolar cells silent leaves F exactly at -T
        assert law.atom_at == pytest.approx(50.0)
        assert law.mass_defect() < 1e-6
        rng = np.random.default_rng(3)
        n = rng.poisson(2.0, size=(4, 300000))
        k = rng.binomial(n, 0.4)
        a = k * 0.7 + np.sqrt(SD**2 + k * 0.25) * rng.standard_normal(k.shape)
        s = 0.6 * np.maximum(a[0] + a[1], 0) + 0.3 * np.maximum(a[2] + a[3], 0) + 50.0
        silent = np.mean(s == 50.0)
        assert law.atom_mass == pytest.approx(silent, abs=4 * math.sqrt(silent * (1 - silent) / s.size))
        assert law.mean() == pytest.approx(s.mean(), abs=5 * s.std() / math.sqrt(s.size))
        assert law.variance() == pytest.approx(s.var(), rel=0.02)

    @settings(max_examples=15, deadline=None)
    @given(
        st.sampled_from(["fock", "coherent", "thermal"]),
        st.integers(0, 5),
        st.lists(st.floats(0.05, 1.0), min_size=1, max_size=3),
        st.floats(-0.5, 1.0),
    )
    def test_mass_conservation(self, kind, n, weights, t):
        spec = NetworkSpec.two_layer(weights, ganglion_threshold=t)
        assert network_output(spec, make_state(kind, n)).mass_defect() < 1e-6

    @settings(max_examples=10, deadline=None)
    @given(st.integers(1, 5), st.floats(-0.3, 0.8), st.floats(0.01, 0.5))
    def test_atom_monotone_in_threshold(self, n, t, dt):
        lo = network_output(NetworkSpec.two_layer([0.5, 0.3], ganglion_threshold=t), coherent(n), 1e-3)
        hi = network_output(NetworkSpec.two_layer([0.5, 0.3], ganglion_threshold=t + dt), coherent(n), 1e-3)
        assert hi.atom_mass >= lo.atom_mass - 1e-12

    def test_correlated_flag_changes_law(self):
        a = network_output(NetworkSpec.two_layer([0.5, 0.5]), fock(5))
        b = network_output(NetworkSpec.two_layer([0.5, 0.5], correlated_absorption=True), fock(5))
        assert b.mass_defect() < 1e-6
        assert b.mean() < a.mean()
