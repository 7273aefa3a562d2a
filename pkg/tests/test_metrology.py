import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retinaprobe.metrology import (
    FisherMatrix,
    IllConditionedFisher,
    MetrologyConfig,
    NumericalFailure,
    crlb,
    ellipsoid,
    evaluate_point,
    fisher_matrix,
    fisher_matrix_result,
    fisher_scalar,
    fisher_scalar_result,
    score_profile,
    volume_sweep,
)
from retinaprobe.photon_stats import coherent, fock, make_state, thermal
from retinaprobe.retina_net import NetworkSpec, RodParams

DARK = RodParams(eta=0.0)
SD = DARK.sigma_D


def clip_free(w, n_rods=1):
    return NetworkSpec.two_layer([w] * n_rods, DARK, ganglion_threshold=-10.0)


class TestScore:
    def test_gaussian_scale_score(self):
        w, t = 0.5, -10.0
        prof = score_profile(clip_free(w), fock(0), 0, 1e-3 * w)
        x = prof.grid_start + prof.grid_step * np.arange(prof.density_score.size)
        y = x + t  # F + T = w A
        analytic = -1 / w + y**2 / (w**3 * SD**2)
        core = np.abs(y) < 4 * w * SD
        np.testing.assert_allclose(prof.density_score[core], analytic[core], rtol=1e-5, atol=1e-5)

    def test_symmetric_weights_relabel(self):
        spec = NetworkSpec.two_layer([0.4, 0.4])
        a = score_profile(spec, coherent(2.0), 0, 4e-4)
        b = score_profile(spec, coherent(2.0), 1, 4e-4)
        assert a.atom_score == pytest.approx(b.atom_score, rel=1e-9)
        # far tails carry round-off from the different convolution order
        ok = np.isfinite(a.density_score) & (a.law.density > 1e-8)
        np.testing.assert_allclose(a.density_score[ok], b.density_score[ok], rtol=1e-6, atol=1e-6)

    def test_richardson_order(self):
        spec = NetworkSpec.two_layer([0.5])
        s1 = score_profile(spec, fock(1), 0, 2e-3, grid_step=1e-3).density_score
        s2 = score_profile(spec, fock(1), 0, 1e-3, grid_step=1e-3).density_score
        s4 = score_profile(spec, fock(1), 0, 5e-4, grid_step=1e-3).density_score
        ok = np.isfinite(s1) & np.isfinite(s2) & np.isfinite(s4) & (np.abs(s2) > 1e-2)
        d12 = np.abs(s1 - s2)[ok].max()
        d24 = np.abs(s2 - s4)[ok].max()
        assert d12 / d24 == pytest.approx(4.0, rel=0.1)

    def test_weight_must_exceed_delta(self):
        with pytest.raises(ValueError):
            score_profile(NetworkSpec.two_layer([1e-4]), fock(1), 0, 1e-3)


class TestFisherScalar:
    @pytest.mark.parametrize("w", [0.2, 0.5, 1.0])
    def test_analytic_anchor(self, w):
        res = fisher_scalar_result(clip_free(w), fock(0))
        assert res.fisher.entries[0, 0] == pytest.approx(2 / w**2, rel=1e-3)
        assert res.plateau_ok

    def test_density_only_equals_full_without_atom(self):
        cfg = MetrologyConfig(fisher_domain="density_only")
        assert fisher_scalar(clip_free(0.5), fock(0), cfg) == pytest.approx(
            fisher_scalar(clip_free(0.5), fock(0)), rel=1e-12
        )

    def test_atom_term_adds_information(self):
        spec = NetworkSpec.two_layer([0.5])
        full = fisher_scalar(spec, fock(1))
        dens = fisher_scalar(spec, fock(1), MetrologyConfig(fisher_domain="density_only"))
        assert full > dens > 0

    def test_requires_equal_weights(self):
        with pytest.raises(ValueError):
            fisher_scalar(NetworkSpec.two_layer([0.5, 0.4]), fock(1))

    @pytest.mark.parametrize("w", [0.2, 0.5, 0.9])
    def test_more_photons_more_information(self, w):
        spec = NetworkSpec.two_layer([w])
        for kind in ("fock", "coherent", "thermal"):
            assert fisher_scalar(spec, make_state(kind, 5)) > fisher_scalar(spec, make_state(kind, 1))

    @pytest.mark.parametrize("w", [0.2, 0.5, 0.9])
    def test_fock_beats_thermal(self, w):
        spec = NetworkSpec.two_layer([w])
        assert fisher_scalar(spec, fock(5)) > fisher_scalar(spec, thermal(5))

    @pytest.mark.parametrize("kind", ["fock", "coherent", "thermal"])
    @pytest.mark.parametrize("w", [0.3, 0.7])
    def test_monotone_in_eta(self, kind, w):
        vals = [
            fisher_scalar(NetworkSpec.two_layer([w], RodParams(eta=eta)), make_state(kind, 5))
            for eta in (0.1, 0.2, 0.4)
        ]
        assert vals[0] <= vals[1] <= vals[2]


class TestFisherMatrix:
    def test_exchange_symmetry(self):
        m = fisher_matrix(NetworkSpec.two_layer([0.5, 0.5]), fock(1)).entries
        assert m[0, 0] == pytest.approx(m[1, 1], rel=1e-9)

    @settings(max_examples=8, deadline=None)
    @given(
        st.sampled_from(["fock", "coherent", "thermal"]),
        st.integers(1, 5),
        st.lists(st.floats(0.1, 1.0), min_size=2, max_size=3),
    )
    def test_psd_and_plateau(self, kind, n, weights):
        res = fisher_matrix_result(NetworkSpec.two_layer(weights), make_state(kind, n))
        assert np.linalg.eigvalsh(res.fisher.entries).min() >= -1e-9
        assert res.plateau_ok

    @pytest.mark.parametrize("n_rods", [2, 3])
    def test_reduction_to_scalar(self, n_rods):
        spec = NetworkSpec.two_layer([0.5] * n_rods)
        m = fisher_matrix(spec, coherent(3.0)).entries
        ones = np.ones(n_rods)
        assert ones @ m @ ones == pytest.approx(fisher_scalar(spec, coherent(3.0)), rel=0.01)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            FisherMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(NumericalFailure):
            FisherMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_fig7_ordering(self):
        spec = NetworkSpec.two_layer([0.5, 0.35])
        vols = {
            k: ellipsoid(crlb(fisher_matrix(spec, make_state(k, 1)))).volume
            for k in ("fock", "coherent", "thermal")
        }
        assert vols["thermal"] > vols["coherent"] > vols["fock"]


class TestCrlb:
    def test_identity(self):
        np.testing.assert_allclose(crlb(np.eye(3)), np.eye(3))

    def test_scalar(self):
        assert crlb(np.array([[4.0]]))[0, 0] == pytest.approx(0.25)

    def test_diagonal(self):
        np.testing.assert_allclose(crlb(np.diag([4.0, 1.0])), np.diag([0.25, 1.0]))

    def test_ill_conditioned(self):
        with pytest.raises(IllConditionedFisher) as info:
            crlb(np.diag([1.0, 1e-12]))
        assert info.value.cond == pytest.approx(1e12)


class TestEllipsoid:
    def test_identity_99(self):
        r = ellipsoid(np.eye(2), 0.99)
        assert r.K**2 == pytest.approx(9.2103, abs=1e-4)
        assert r.volume == pytest.approx(math.pi * r.K**2, rel=1e-12)
        assert r.volume == pytest.approx(28.94, abs=0.01)

    def test_unit_circle_convention(self):
        r = ellipsoid(np.eye(2), 0.99, "paper_eq16")
        assert r.volume == pytest.approx(math.pi)
        assert r.volume_k_scaled == pytest.approx(math.pi * r.K**2)

    def test_axes_aligned(self):
        r = ellipsoid(np.diag([1.0, 4.0]))
        np.testing.assert_allclose(r.eigenvalues, [4.0, 1.0])
        np.testing.assert_allclose(np.abs(r.eigenvectors), [[0, 1], [1, 0]], atol=1e-12)
        np.testing.assert_allclose(r.axes, r.K * np.array([2.0, 1.0]))

    def test_rejects_non_pd(self):
        with pytest.raises(ValueError):
            ellipsoid(np.diag([1.0, -1.0]))

    @settings(max_examples=200)
    @given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0.5, 0.999))
    def test_volume_determinant_identity(self, n, seed, conf):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(n, n))
        c = a @ a.T + 0.1 * np.eye(n)
        r = ellipsoid(c, conf)
        ref = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r.K**n * math.sqrt(np.linalg.det(c))
        assert r.volume == pytest.approx(ref, rel=1e-9)
        assert np.all(np.diff(r.eigenvalues) <= 0)


class TestSweep:
    def test_row_kinds_and_order(self):
        pts = [
            (w, NetworkSpec.two_layer([w, 0.7 * w]), {"fock": fock(1), "thermal": thermal(1)})
            for w in (0.3, 0.6)
        ]
        rows = volume_sweep(pts)
        assert [(r.state, r.sweep_value) for r in rows] == [
            ("fock", 0.3), ("thermal", 0.3), ("fock", 0.6), ("thermal", 0.6)
        ]
        assert all(r.metric_kind == "volume" and r.status == "ok" for r in rows)

    def test_parallel_matches_serial(self):
        pts = [(w, NetworkSpec.two_layer([w]), {"coherent": coherent(1.0)}) for w in (0.2, 0.4, 0.6)]
        serial = volume_sweep(pts, jobs=1)
        parallel = volume_sweep(pts, jobs=2)
        assert [r.as_dict() for r in serial] == [r.as_dict() for r in parallel]

    def test_singular_point_flagged_not_raised(self):
        row = evaluate_point("fock", 0.5, NetworkSpec.two_layer([0.5, 0.5]), fock(1), MetrologyConfig())
        assert row.status == "ill_conditioned" and math.isnan(row.value)

    def test_single_weight_is_crlb(self):
        row = evaluate_point("fock", 0.5, clip_free(0.5), fock(0), MetrologyConfig())
        assert row.metric_kind == "crlb"
        assert row.value == pytest.approx(0.125, rel=1e-3)
