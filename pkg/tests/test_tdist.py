import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest, norm, t as student_t

from qfabayes.hierarchy.tdist import (
    sample_trunc0_t3,
    scaled_t3_cdf,
    scaled_t3_logpdf,
    scaled_t3_trunc0_logpdf,
)


class TestScaledT3:
    def test_value_at_location(self):
        # log of Gamma(2) / (sqrt(3 pi) Gamma(1.5)) / s = log(2/(pi sqrt 3)) - log s
        for prec in (0.25, 1.0, 4.0):
            s = prec**-0.5
            expected = math.log(2.0 / (math.pi * math.sqrt(3.0))) - math.log(s)
            assert scaled_t3_logpdf(1.3, 1.3, prec) == pytest.approx(expected,
                                                                     abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            mu = rng.normal(0, 3)
            prec = math.exp(rng.normal(0, 1))
            d = rng.uniform(0, 10)
            assert scaled_t3_logpdf(mu + d, mu, prec) == pytest.approx(
                scaled_t3_logpdf(mu - d, mu, prec), rel=1e-13
            )

    def test_heavy_tail_vs_normal(self):
        ratio = math.exp(scaled_t3_logpdf(5.0, 0.0, 1.0) - norm.logpdf(5.0))
        assert ratio > 1e3

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        x = rng.normal(0, 5, 200)
        mu, prec = 0.7, 2.3
        s = prec**-0.5
        assert np.allclose(
            scaled_t3_logpdf(x, mu, prec),
            student_t.logpdf(x, df=3, loc=mu, scale=s),
            atol=1e-12,
        )
        assert np.allclose(
            scaled_t3_cdf(x, mu, prec),
            student_t.cdf(x, df=3, loc=mu, scale=s),
            atol=1e-13,
        )

    def test_truncated_density_integrates_to_one(self):
        for mu, prec in ((0.5, 2.0), (-1.0, 0.5), (3.0, 10.0)):
            total, err = quad(
                lambda v: math.exp(scaled_t3_trunc0_logpdf(v, mu, prec)),
                0.0, np.inf, limit=200,
            )
            assert total == pytest.approx(1.0, abs=5e-7)

    def test_truncated_logpdf_negative_support(self):
        assert scaled_t3_trunc0_logpdf(-0.1, 0.5, 1.0) == -math.inf

    def test_truncated_sampler_distribution(self):
        mu, prec = 0.5, 2.0
        draws = sample_trunc0_t3(mu, prec, np.random.default_rng(3), size=20_000)
        assert np.all(draws >= 0.0)
        lo = scaled_t3_cdf(0.0, mu, prec)
        p = kstest(draws,
                   lambda v: (scaled_t3_cdf(v, mu, prec) - lo) / (1 - lo)).pvalue
        assert p > 0.01

    def test_invalid_precision(self):
        with pytest.raises(ValueError):
            scaled_t3_logpdf(0.0, 0.0, -1.0)
