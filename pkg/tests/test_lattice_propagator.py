import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phi4lab import (
    LatticeSpec,
    covariance_band,
    covariance_cumulative,
    difference_kernel,
    regulator_chi,
    bound_report,
)
from phi4lab.lattice_propagator import cache_load, cache_store, export_csv


def spec2(**kw):
    base = dict(d=2, L=1.0, m=1.0, gamma=2.0, N=2)
    base.update(kw)
    return LatticeSpec(**base)


class TestSpecValidation:
    def test_basic_geometry(self):
        s = spec2(N=3)
        assert s.n_side == 8
        assert s.n_sites == 64
        assert s.a == pytest.approx(1.0 / 8.0)
        assert s.volume == pytest.approx(1.0)

    def test_rejects_non_integer_sites(self):
        with pytest.raises(ValueError):
            LatticeSpec(d=2, L=0.7, m=1.0, gamma=2.0, N=2)

    def test_rejects_gamma_at_most_one(self):
        with pytest.raises(ValueError):
            spec2(gamma=1.0)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            spec2(d=4)

    def test_fractional_gamma_with_integer_sites(self):
        s = LatticeSpec(d=2, L=1.0, m=1.0, gamma=math.sqrt(2), N=2)
        assert s.n_side == 2

    def test_hash_is_stable_and_discriminating(self):
        assert spec2().canonical_hash() == spec2().canonical_hash()
        assert spec2().canonical_hash() != spec2(N=3).canonical_hash()


class TestRegulator:
    def test_chi_at_zero_momentum(self):
        s = spec2(N=1)
        # chi_N(0) = 1 - gamma^(-2N)
        assert regulator_chi(0.0, s) == pytest.approx(1 - 2.0 ** -2)

    def test_chi_decays_at_large_momentum(self):
        s = spec2()
        assert regulator_chi(1e8, s) < 1e-6

    def test_chi_monotone_in_cutoff(self):
        p2 = np.linspace(0.0, 30.0, 7)
        lo, hi = regulator_chi(p2, spec2(N=1)), regulator_chi(p2, spec2(N=3))
        assert np.all(hi >= lo)


class TestTelescoping:
    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("gamma", [2.0, 3.0])
    def test_bands_sum_to_cumulative(self, d, gamma):
        s = LatticeSpec(d=d, L=1.0, m=1.0, gamma=gamma, N=3)
        total = sum(covariance_band(s, h).values for h in range(1, 4))
        cum = covariance_cumulative(s, 3).values
        assert np.max(np.abs(total - cum)) < 1e-12 * np.max(np.abs(cum))

    def test_difference_kernel_complements_cumulative(self):
        s = spec2(N=3)
        diff = difference_kernel(s, 1).values
        rebuilt = covariance_cumulative(s, 1).values + diff
        assert np.allclose(rebuilt, covariance_cumulative(s, 3).values, atol=1e-14)

    def test_difference_kernel_at_full_scale_vanishes(self):
        s = spec2()
        assert np.max(np.abs(difference_kernel(s, s.N).values)) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(d=st.sampled_from([2, 3]), N=st.integers(1, 3),
           gamma=st.floats(1.3, 3.0), Lm=st.integers(1, 2))
    def test_telescoping_property(self, d, N, gamma, Lm):
        try:
            s = LatticeSpec(d=d, L=float(Lm), m=1.0, gamma=gamma, N=N)
        except ValueError:
            return  # non-integer site count, not a valid geometry
        total = sum(covariance_band(s, h).values for h in range(1, N + 1))
        cum = covariance_cumulative(s, N).values
        assert np.max(np.abs(total - cum)) <= 1e-12 * max(np.max(np.abs(cum)), 1e-30)


class TestKernelStructure:
    def test_positive_mode_weights(self):
        s = spec2(N=3)
        for h in range(1, 4):
            k = covariance_band(s, h)
            assert np.all(np.asarray(k.mode_weights) >= -1e-15)

    def test_matrix_is_symmetric_translation_invariant(self):
        s = spec2()
        M = covariance_cumulative(s, 2).matrix()
        assert np.allclose(M, M.T)
        assert np.ptp(np.diag(M)) < 1e-14

    def test_kernel_is_real(self):
        s = LatticeSpec(d=3, L=1.0, m=1.0, gamma=2.0, N=2)
        vals = covariance_cumulative(s, 2).values
        assert np.isrealobj(vals)

    def test_covariance_is_positive_semidefinite(self):
        s = spec2()
        evals = np.linalg.eigvalsh(covariance_cumulative(s, 2).matrix())
        assert evals.min() > -1e-12


class TestBoundReport:
    def test_decay_rate_is_positive(self):
        s = spec2(L=4.0, N=3)
        rep = bound_report(covariance_cumulative(s, 3))
        assert rep.decay_rate > 0
        assert rep.amplitude > 0

    def test_band_kernels_decay_faster_at_higher_scale(self):
        s = spec2(L=4.0, N=3)
        r1 = bound_report(covariance_band(s, 1))
        r3 = bound_report(covariance_band(s, 3))
        assert r3.decay_rate > r1.decay_rate


class TestArtifacts:
    def test_cache_roundtrip(self, tmp_path):
        s = spec2()
        k = covariance_band(s, 2)
        cache_store(k, str(tmp_path))
        back = cache_load(s, ("band", 2), str(tmp_path))
        assert back is not None
        assert np.array_equal(back.values, k.values)

    def test_cache_miss_returns_none(self, tmp_path):
        assert cache_load(spec2(), ("band", 1), str(tmp_path)) is None

    def test_export_csv_shape(self, tmp_path):
        s = spec2()
        path = tmp_path / "kernel.csv"
        export_csv(covariance_cumulative(s, 2), str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "dx0,dx1,value"
        assert len(lines) == 1 + s.n_sites
