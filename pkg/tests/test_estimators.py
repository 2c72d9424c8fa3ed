import math

import numpy as np
import pytest
from scipy import special

from gi0net.errors import DomainError, ParameterError
from gi0net.estimators import (
    Status,
    _score,
    estimate_lcum,
    estimate_map,
    estimate_mle,
    estimate_nn,
    lcum_alpha,
    mean_log_likelihood,
    mle_grid_argmax,
)
from gi0net.gi0 import Gi0Params, _draw, sample, theoretical_log_cumulants
from gi0net.network import init_model
from gi0net.numerics import RngStream

LCUM_PAIRS = [(a, L) for a in (-1.6, -2.0, -4.5, -9.0, -13.0, -14.9) for L in (1, 4)]


def grid_oracle(z, looks, step=0.001):
    """Likelihood grid search written against scipy's gammaln, independent of the package."""
    z = np.asarray(z, dtype=np.float64)
    z = z / z.mean()
    a = np.append(np.arange(-15.0, -1.0001, step), -1.0001)[:, None]
    g = -a - 1.0
    L = float(looks)
    ll = (
        L * math.log(L) + special.gammaln(L - a) - a * np.log(g) - special.gammaln(-a) - special.gammaln(L)
        + (L - 1) * np.log(z) + (a - L) * np.log(g + L * z)
    ).sum(axis=1)
    return float(a[np.argmax(ll), 0])


def lcum_oracle_cases():
    cases = []
    for a, L in LCUM_PAIRS:
        k2 = theoretical_log_cumulants(Gi0Params.unit_mean(a, L))[1]
        cases.append((a, L, k2))
    return cases


class TestLcum:
    @pytest.mark.parametrize("alpha,looks,kappa2", lcum_oracle_cases())
    def test_noiseless_inversion(self, alpha, looks, kappa2):
        got, status, _ = lcum_alpha(kappa2, looks)
        assert abs(got - alpha) <= 1e-6
        assert status is Status.SUCCESS

    def test_consistency(self):
        out = estimate_lcum(sample(RngStream(1), Gi0Params(-3.0, 2.0, 1), 10**6), 1)
        assert out.ok and abs(out.alpha_hat + 3.0) <= 0.1

    def test_constant_is_degenerate(self):
        out = estimate_lcum([2.0, 2.0, 2.0], 1)
        assert out.status is Status.DEGENERATE_INPUT and out.alpha_hat is None

    def test_out_of_range(self):
        # a log-variance barely above the speckle term maps far below -15
        c = math.sqrt(special.polygamma(1, 1) + 0.005)
        out = estimate_lcum(np.exp([-c, c]), 1)
        assert out.status is Status.OUT_OF_RANGE

    def test_domain(self):
        with pytest.raises(DomainError):
            estimate_lcum([1.0, -1.0], 1)
        with pytest.raises(DomainError):
            estimate_lcum([1.0, 2.0], 0)


class TestLikelihood:
    def test_vectorized(self):
        z = sample(RngStream(2), Gi0Params.unit_mean(-4.0, 2), 50).values
        grid = np.array([-10.0, -4.0, -2.0])
        np.testing.assert_allclose(
            mean_log_likelihood(grid, z, 2), [mean_log_likelihood(a, z, 2) for a in grid], rtol=1e-13
        )

    @pytest.mark.parametrize("alpha,looks", [(-1.3, 1), (-3.0, 1), (-8.0, 3), (-14.0, 8)])
    def test_score_finite_differences(self, alpha, looks):
        z = sample(RngStream(3), Gi0Params.unit_mean(-5.0, looks), 200).values
        h = 1e-5
        d1, d2 = _score(alpha, z, looks)
        fd1 = (mean_log_likelihood(alpha + h, z, looks) - mean_log_likelihood(alpha - h, z, looks)) / (2 * h)
        fd2 = (_score(alpha + h, z, looks)[0] - _score(alpha - h, z, looks)[0]) / (2 * h)
        assert d1 == pytest.approx(fd1, rel=1e-5, abs=1e-8)
        assert d2 == pytest.approx(fd2, rel=1e-5, abs=1e-8)


class TestMle:
    def test_consistency(self):
        out = estimate_mle(sample(RngStream(4), Gi0Params(-7.0, 6.0, 1), 10**6), 1)
        assert out.ok and abs(out.alpha_hat + 7.0) <= 0.2

    def test_package_grid_matches_independent_oracle(self):
        z = sample(RngStream(5), Gi0Params.unit_mean(-6.0, 2), 60).values
        assert mle_grid_argmax(z, 2) == pytest.approx(grid_oracle(z, 2), abs=1e-9)

    @pytest.mark.parametrize("n", [25, 121])
    def test_robust_agrees_with_grid(self, n):
        root = RngStream(6).split(n)
        for t in range(10):
            s = root.split(t)
            a = -1.5 - 13.5 * float(s.split(0).uniform())
            z = _draw(s.split(1), Gi0Params.unit_mean(a, 1), n)
            out = estimate_mle(z, 1)
            assert abs(out.alpha_hat - grid_oracle(z, 1)) <= 0.002

    def test_scale_invariance(self):
        z = sample(RngStream(7), Gi0Params.unit_mean(-5.0, 1), 300).values
        for mode in ("robust", "paper"):
            a = estimate_mle(z, 1, mode)
            b = estimate_mle(z * 37.5, 1, mode)
            assert a.status == b.status
            assert a.alpha_hat == pytest.approx(b.alpha_hat, abs=1e-6)

    def test_paper_mode_agrees_with_robust_when_it_succeeds(self):
        z = sample(RngStream(8), Gi0Params.unit_mean(-3.0, 3), 2000).values
        paper, robust = estimate_mle(z, 3, "paper"), estimate_mle(z, 3, "robust")
        assert paper.ok and robust.ok
        assert paper.alpha_hat == pytest.approx(robust.alpha_hat, abs=1e-5)
        assert 0 < paper.iterations <= 100

    def test_rough_boundary_is_out_of_range(self):
        # exponential data (no texture) pushes the maximizer to the smooth end
        z = RngStream(9).uniform(5000)
        z = -np.log1p(-z)
        out = estimate_mle(z, 1)
        assert out.status is Status.OUT_OF_RANGE and out.alpha_hat == -15.0

    def test_bad_mode(self):
        with pytest.raises(ParameterError):
            estimate_mle([1.0, 2.0], 1, "fast")

    def test_newton_fails_more_often_than_lcum_at_n9(self):
        # rough, tiny samples: the Newton MLE from alpha = -1.0001 is expected to fail more often
        p = Gi0Params(-1.5, 0.5, 1)
        draws = [_draw(RngStream(13).split(t), p, 9) for t in range(1000)]
        lcum_fail = sum(not estimate_lcum(z, 1).ok for z in draws)
        mle_fail = sum(not estimate_mle(z, 1, "paper").ok for z in draws)
        assert 0 < lcum_fail < mle_fail, (lcum_fail, mle_fail)

    def test_consistency_over_n(self):
        p = Gi0Params.unit_mean(-7.0, 3)
        for name, fn in (("lcum", lambda z: estimate_lcum(z, 3)), ("mle", lambda z: estimate_mle(z, 3))):
            medians = []
            for n in (25, 121, 1000):
                outs = [fn(_draw(RngStream(10).split(n).split(t), p, n)) for t in range(200)]
                medians.append(np.median([abs(o.alpha_hat + 7.0) for o in outs if o.alpha_hat is not None]))
            assert medians[0] >= medians[1] >= medians[2], (name, medians)


class TestNn:
    def test_constant_sample_finite(self):
        out = estimate_nn(init_model(RngStream(0), 2), [3.0, 3.0, 3.0])
        assert math.isfinite(out.alpha_hat)

    def test_trained_model_at_n1000(self, sample_run):
        p = Gi0Params(-7.0, 6.0, 1)
        outs = [estimate_nn(sample_run.model, _draw(RngStream(12).split(t), p, 1000)) for t in range(1000)]
        hits = sum(o.ok and abs(o.alpha_hat + 7.0) <= 1.0 for o in outs)
        assert hits >= 900, f"{hits}/1000 trials within 1 of -7"


class TestMap:
    def test_constant_raster(self):
        rmap, timing = estimate_map(init_model(RngStream(1), 2), np.full((12, 9), 0.7), 5)
        assert rmap.shape == (12, 9) and np.all(rmap == rmap[0, 0])
        assert timing.total >= 0

    def test_single_pixel(self):
        rmap, _ = estimate_map(init_model(RngStream(1), 3), np.array([[2.0]]), 1)
        assert rmap.shape == (1, 1) and np.isfinite(rmap[0, 0])
