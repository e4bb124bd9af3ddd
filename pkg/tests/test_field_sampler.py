import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phi4lab import (
    LatticeSpec,
    covariance_band,
    sample_layer,
    assemble,
    hoelder_norm,
    classify_regions,
    field_threshold,
)
from phi4lab.field_sampler import layer_norm_profile, pavement_cubes, tail_stats


SPEC = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=2)


def make_field(spec=SPEC, seed=0):
    return assemble([sample_layer(spec, h, seed) for h in range(1, spec.N + 1)])


class TestThreshold:
    def test_grows_as_coupling_shrinks(self):
        assert field_threshold(1e-6) > field_threshold(1e-2) > field_threshold(0.5)

    def test_scale_factor(self):
        assert field_threshold(0.1, scale=3.0) == pytest.approx(3 * field_threshold(0.1))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            field_threshold(0.0)


class TestSampling:
    def test_deterministic_per_seed(self):
        a = sample_layer(SPEC, 1, 42)
        b = sample_layer(SPEC, 1, 42)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self):
        assert not np.array_equal(sample_layer(SPEC, 1, 0).values,
                                  sample_layer(SPEC, 1, 1).values)

    def test_layers_of_one_seed_are_independent_streams(self):
        assert not np.array_equal(sample_layer(SPEC, 1, 0).values,
                                  sample_layer(SPEC, 2, 0).values)

    def test_empirical_covariance_matches_band(self):
        spec = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=1)
        n = 4000
        draws = np.stack([sample_layer(spec, 1, s).values.ravel() for s in range(n)])
        emp = draws.T @ draws / n
        M = covariance_band(spec, 1).matrix()
        # 4000 samples: agreement at the few-percent level
        assert np.max(np.abs(emp - M)) < 0.1 * np.max(np.abs(M))

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10 ** 6), h=st.integers(1, 2))
    def test_mean_zero_symmetry(self, seed, h):
        vals = sample_layer(SPEC, h, seed).values
        assert vals.shape == SPEC.shape
        assert np.all(np.isfinite(vals))


class TestAssembly:
    def test_phi_is_sum_of_layers(self):
        fld = make_field()
        total = sum(sample_layer(SPEC, h, 0).values for h in (1, 2))
        assert np.allclose(fld.phi(), total, atol=0)

    def test_partial_phi(self):
        fld = make_field()
        assert np.array_equal(fld.phi(1), sample_layer(SPEC, 1, 0).values)

    def test_X_recursion_d2(self):
        # X^(N) = N^(-1/2) z^(N) + sqrt((N-1)/N) X^(N-1)
        fld = make_field()
        lhs = fld.X(2)
        rhs = fld.layers[2].z / math.sqrt(2) + math.sqrt(1 / 2) * fld.X(1)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_rejects_mismatched_specs(self):
        other = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=1)
        with pytest.raises(ValueError):
            assemble([sample_layer(SPEC, 1, 0), sample_layer(other, 1, 0)])

    def test_rejects_scale_gaps(self):
        with pytest.raises(ValueError):
            assemble([sample_layer(SPEC, 2, 0)])


class TestNorms:
    def test_constant_field_norm_is_sup(self):
        vals = np.full(SPEC.shape, 5.0)
        assert hoelder_norm(vals, SPEC, (0, 0), SPEC.n_side) == pytest.approx(5.0)

    def test_increment_term_detects_roughness(self):
        smooth = np.full(SPEC.shape, 1.0)
        rough = smooth.copy()
        rough[0, 0] = 2.0
        assert (hoelder_norm(rough, SPEC, (0, 0), SPEC.n_side)
                > hoelder_norm(smooth, SPEC, (0, 0), SPEC.n_side))

    def test_pavement_covers_lattice(self):
        spec = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=3)
        origins, side = pavement_cubes(spec, 1)
        assert side * side * len(origins) == spec.n_sites

    def test_profile_matches_direct_norms(self):
        layer = sample_layer(SPEC, 1, 3)
        origins, norms = layer_norm_profile(layer)
        assert len(origins) == len(norms)
        assert all(v >= 0 for v in norms)


class TestRegions:
    def test_huge_threshold_gives_small_field(self):
        fld = make_field()
        cls = classify_regions(fld, 1, 1e6)
        assert cls.chi_B == 1
        assert not cls.D1 and not cls.R

    def test_tiny_threshold_flags_sites(self):
        fld = make_field()
        cls = classify_regions(fld, 1, 1e-9)
        assert cls.chi_B == 0
        assert cls.R

    def test_d2_has_no_pair_regions(self):
        fld = make_field()
        assert classify_regions(fld, 1, 1.0).D2 == []

    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError):
            classify_regions(make_field(), 5, 1.0)


class TestTails:
    def test_exceedance_decreases_in_B(self):
        stats = tail_stats(SPEC, 1, B_grid=[0.3, 0.8, 1.5, 2.5], n_samples=1000)
        probs = [row["exceedance"] for row in stats["rows"]]
        assert probs == sorted(probs, reverse=True)
        # Gaussian tails: log-exceedance decreasing in B^2
        assert stats["slope"] < 0

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            tail_stats(SPEC, 1, B_grid=[1.0], n_samples=10)
