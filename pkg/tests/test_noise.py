"""Noise distributions: sampling laws, tail functions, scaling, Hill."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlab import (ConfigError, Gaussian, InsufficientSamples,
                  IsotropicPareto2D, SignedPareto, UnsupportedKind,
                  hill_tail_index)
from mlab.noise import from_spec as noise_from_spec

# lambda_2(eta = 5e-4) for alpha = 1.2, c = 0.1, l* = 2, computed
# independently as H(1/eta)^2 / eta with H in exact log arithmetic.
ORACLE_LAMBDA_L2 = 9.518269693579401e-08


class TestSignedPareto:
    def test_support_and_signs(self):
        sp = SignedPareto(alpha=1.2, c=0.1, p_plus=0.3)
        z = sp.sample(np.random.default_rng(0), 200000)
        assert np.min(np.abs(z)) >= 0.1
        # P(Z > 0) = p_plus within 4 binomial sigma
        p_hat = np.mean(z > 0)
        assert abs(p_hat - 0.3) < 4 * math.sqrt(0.3 * 0.7 / z.size)

    def test_empirical_tail_matches_h(self):
        sp = SignedPareto(alpha=1.2, c=0.1)
        z = np.abs(sp.sample(np.random.default_rng(1), 400000))
        for x in (0.15, 0.3, 1.0, 5.0):
            h = sp.tail(x)
            p_hat = np.mean(z >= x)
            assert abs(p_hat - h) < 4 * math.sqrt(h * (1 - h) / z.size) + 1e-9

    def test_tail_closed_form(self):
        sp = SignedPareto(alpha=1.2, c=0.1)
        assert sp.tail(0.05) == 1.0
        assert sp.tail(0.1) == 1.0
        assert sp.tail(0.2) == pytest.approx(2.0 ** -1.2, rel=1e-15)
        assert sp.tail(10.0) == pytest.approx(100.0 ** -1.2, rel=1e-15)
        with pytest.raises(ConfigError):
            sp.tail(-1.0)

    def test_zero_scale_degenerates(self):
        sp = SignedPareto(alpha=1.2, c=0.0)
        z = sp.sample(np.random.default_rng(2), 1000)
        assert np.all(z == 0.0)
        assert sp.tail(0.5) == 0.0

    def test_lambda_scale_oracle(self):
        sp = SignedPareto(alpha=1.2, c=0.1)
        assert sp.lambda_scale(5e-4, 2) == pytest.approx(ORACLE_LAMBDA_L2,
                                                         rel=1e-12)
        # l* = 1 is the bare tail at 1/eta
        assert sp.lambda_scale(1e-3, 1) == pytest.approx(sp.tail(1e3),
                                                         rel=1e-15)

    @given(st.integers(min_value=1, max_value=5))
    def test_lambda_scale_decreasing_in_l(self, l):
        # each extra required jump multiplies by H(1/eta)/eta < 1
        sp = SignedPareto(alpha=1.2, c=0.1)
        eta = 1e-3
        assert sp.lambda_scale(eta, l + 1) < sp.lambda_scale(eta, l)

    def test_lambda_scale_validation(self):
        sp = SignedPareto(alpha=1.2, c=0.1)
        with pytest.raises(ConfigError):
            sp.lambda_scale(0.0, 1)
        with pytest.raises(ConfigError):
            sp.lambda_scale(1e-3, 0)

    def test_constructor_validation(self):
        with pytest.raises(ConfigError):
            SignedPareto(alpha=0.0, c=0.1)
        with pytest.raises(ConfigError):
            SignedPareto(alpha=1.2, c=-0.1)
        with pytest.raises(ConfigError):
            SignedPareto(alpha=1.2, c=0.1, p_plus=1.5)


class TestGaussian:
    def test_moments(self):
        g = Gaussian(sigma=2.0)
        z = g.sample(np.random.default_rng(3), 200000)
        assert abs(np.mean(z)) < 0.03
        assert abs(np.std(z) - 2.0) < 0.03

    def test_tail_and_scale_refuse(self):
        g = Gaussian(sigma=1.0)
        with pytest.raises(UnsupportedKind):
            g.tail(1.0)
        with pytest.raises(UnsupportedKind):
            g.lambda_scale(1e-3, 1)


class TestIsotropicPareto2D:
    def test_shape_and_norm_support(self):
        iso = IsotropicPareto2D(alpha=1.2, c=0.75)
        z = iso.sample(np.random.default_rng(4), 100000)
        assert z.shape == (100000, 2)
        norms = np.hypot(z[:, 0], z[:, 1])
        assert np.min(norms) >= 0.75

    def test_direction_is_uniform(self):
        iso = IsotropicPareto2D(alpha=1.2, c=0.75)
        z = iso.sample(np.random.default_rng(5), 100000)
        # mean unit direction of an isotropic law is the origin
        units = z / np.hypot(z[:, 0], z[:, 1])[:, None]
        assert np.linalg.norm(units.mean(axis=0)) < 0.01

    def test_norm_tail(self):
        iso = IsotropicPareto2D(alpha=1.2, c=0.75)
        assert iso.tail(0.5) == 1.0
        assert iso.tail(1.5) == pytest.approx(2.0 ** -1.2, rel=1e-15)
        z = iso.sample(np.random.default_rng(6), 200000)
        norms = np.hypot(z[:, 0], z[:, 1])
        for x in (1.0, 3.0):
            h = iso.tail(x)
            assert abs(np.mean(norms >= x) - h) < 4 * math.sqrt(h / z.shape[0])


class TestFromSpec:
    def test_dispatch(self):
        sp = noise_from_spec({"kind": "signed-pareto", "alpha": 1.2, "c": 0.1})
        assert isinstance(sp, SignedPareto) and sp.p_plus == 0.5
        g = noise_from_spec({"kind": "gaussian", "sigma": 1.0})
        assert isinstance(g, Gaussian)
        iso = noise_from_spec({"kind": "isotropic-pareto-2d", "alpha": 1.2,
                               "c": 0.75})
        assert isinstance(iso, IsotropicPareto2D)

    def test_round_trip(self):
        sp = SignedPareto(alpha=1.4, c=0.2, p_plus=0.6)
        again = noise_from_spec(sp.spec())
        assert (again.alpha, again.c, again.p_plus) == (1.4, 0.2, 0.6)

    def test_rejections(self):
        with pytest.raises(ConfigError):
            noise_from_spec({"kind": "cauchy"})
        with pytest.raises(ConfigError):
            noise_from_spec({"alpha": 1.2})
        with pytest.raises(ConfigError):
            noise_from_spec({"kind": "signed-pareto", "alpha": 1.2, "c": 0.1,
                             "mu": 0.0})
        with pytest.raises(ConfigError):
            noise_from_spec({"kind": "gaussian"})


class TestHill:
    def test_recovers_pareto_index(self):
        sp = SignedPareto(alpha=1.2, c=0.1)
        z = np.abs(sp.sample(np.random.default_rng(7), 100000))
        est = hill_tail_index(z, k=2000)
        assert abs(est - 1.2) < 0.1

    def test_scale_invariant(self):
        rng = np.random.default_rng(8)
        z = (1.0 - rng.random(50000)) ** (-1.0 / 1.5)
        assert hill_tail_index(7.3 * z, k=1000) == pytest.approx(
            hill_tail_index(z, k=1000), rel=1e-9)

    def test_validation(self):
        with pytest.raises(ConfigError):
            hill_tail_index(np.ones(100), k=0)
        with pytest.raises(InsufficientSamples):
            hill_tail_index(np.ones(10), k=50)
