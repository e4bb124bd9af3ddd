import math

import numpy as np
import pytest

from phi4lab import (
    LatticeSpec,
    covariance_cumulative,
    ExperimentConfig,
    estimate_Z,
    stability_envelope,
    nongaussianity,
)
from phi4lab.stability_lab import (
    InfeasibleSizeError,
    _refine_source,
    calibrate_Cj,
    series_prediction,
)


REF = LatticeSpec(d=2, L=0.25, m=4.0, gamma=math.sqrt(2), N=2)
F = (0.6, -0.4, 0.2, 0.5)


class TestConfig:
    def test_rejects_coupling_outside_range(self):
        with pytest.raises(ValueError):
            ExperimentConfig(spec=REF, lam=1.5)
        with pytest.raises(ValueError):
            ExperimentConfig(spec=REF, lam=-0.1)

    def test_rejects_large_source(self):
        with pytest.raises(ValueError):
            ExperimentConfig(spec=REF, lam=0.1, f=(2.0, 0, 0, 0))

    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            ExperimentConfig(spec=REF, lam=0.1, method="tea-leaves")

    def test_threshold_grows_for_small_coupling(self):
        a = ExperimentConfig(spec=REF, lam=0.001).B
        b = ExperimentConfig(spec=REF, lam=0.1).B
        assert a > b


class TestGaussianControl:
    def test_lam_zero_matches_quadratic_form(self):
        cfg = ExperimentConfig(spec=REF, lam=0.0, f=F, method="exact-quadrature")
        rep = estimate_Z(cfg)
        fa = np.asarray(F)
        M = covariance_cumulative(REF, REF.N).matrix()
        vol = REF.n_sites * REF.a ** REF.d
        exact = 0.5 * REF.a ** (2 * REF.d) * fa @ M @ fa / vol
        assert rep.value == pytest.approx(exact, abs=1e-12)
        assert rep.value == pytest.approx(rep.series_value, abs=1e-10)
        assert rep.inside

    def test_no_source_gives_zero(self):
        cfg = ExperimentConfig(spec=REF, lam=0.05, f=None, method="exact-quadrature")
        rep = estimate_Z(cfg)
        assert abs(rep.value) < 1e-12

    def test_lam_zero_fourth_cumulant_vanishes(self):
        cfg = ExperimentConfig(spec=REF, lam=0.0, f=F, method="exact-quadrature")
        assert abs(nongaussianity(cfg)["kappa4"]) < 1e-10


class TestEstimators:
    def test_quadrature_inside_envelope(self):
        cfg = ExperimentConfig(spec=REF, lam=0.05, f=F, j=2, method="exact-quadrature")
        rep = estimate_Z(cfg, C_j=calibrate_Cj(cfg))
        assert rep.error == 0.0
        assert rep.envelope > 0
        assert rep.inside

    def test_mc_agrees_with_quadrature(self):
        cq = ExperimentConfig(spec=REF, lam=0.05, f=F, j=1, method="exact-quadrature")
        cm = ExperimentConfig(spec=REF, lam=0.05, f=F, j=1, method="MC",
                              seed=3, n_samples=200_000)
        rq, rm = estimate_Z(cq, C_j=1.0), estimate_Z(cm, C_j=1.0)
        assert rm.error > 0
        assert abs(rm.value - rq.value) < 3 * rm.error

    def test_mc_is_seed_deterministic(self):
        cm = ExperimentConfig(spec=REF, lam=0.05, f=F, j=1, method="MC",
                              seed=11, n_samples=20_000)
        assert estimate_Z(cm, C_j=1.0).value == estimate_Z(cm, C_j=1.0).value

    def test_quadrature_cap_enforced(self):
        big = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=2)
        cfg = ExperimentConfig(spec=big, lam=0.05, method="exact-quadrature")
        with pytest.raises(InfeasibleSizeError):
            estimate_Z(cfg)

    def test_series_prediction_is_source_difference(self):
        cfg = ExperimentConfig(spec=REF, lam=0.05, f=F, j=1)
        cfg0 = ExperimentConfig(spec=REF, lam=0.05, f=None, j=1)
        assert series_prediction(cfg0) == pytest.approx(0.0, abs=1e-14)
        assert series_prediction(cfg) != 0.0


class TestEnvelopeSweep:
    def test_fixed_volume_sweep_stays_inside(self):
        base = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=1)
        cfg = ExperimentConfig(spec=base, lam=0.05, f=(0.3, -0.2, 0.1, 0.25),
                               j=1, seed=2, n_samples=300_000)
        sweep = stability_envelope(cfg, N_range=[1, 2])
        assert set(sweep["reports"]) == {1, 2}
        assert sweep["reports"][2].extras["method"] == "MC"
        assert sweep["inside"]

    def test_refine_source_preserves_means_and_roundtrips(self):
        coarse = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=1)
        fine = LatticeSpec(d=2, L=1.0, m=1.0, gamma=2.0, N=2)
        f = (0.3, -0.2, 0.1, 0.25)
        up = _refine_source(f, coarse, fine)
        assert len(up) == fine.n_sites
        assert np.mean(up) == pytest.approx(np.mean(f))
        assert _refine_source(up, fine, coarse) == pytest.approx(f)


class TestNonGaussianity:
    def test_negative_and_near_order_lambda_prediction(self):
        cfg = ExperimentConfig(spec=REF, lam=0.02, f=F, j=1, method="exact-quadrature")
        res = nongaussianity(cfg)
        assert res["kappa4"] < 0
        assert res["relative_gap"] < 0.10

    def test_contamination_shrinks_with_coupling(self):
        gaps = []
        for lam in (0.02, 0.005):
            cfg = ExperimentConfig(spec=REF, lam=lam, f=F, method="exact-quadrature")
            gaps.append(nongaussianity(cfg)["relative_gap"])
        assert gaps[1] < gaps[0]

    def test_stencil_guard(self):
        cfg = ExperimentConfig(spec=REF, lam=0.02, f=F)
        with pytest.raises(ValueError):
            nongaussianity(cfg, delta=1e-9)
