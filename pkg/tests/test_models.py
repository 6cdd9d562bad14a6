import math

import numpy as np
import pytest
from scipy.integrate import quad

from corrinfer.models import (ChannelModel, ModelError, PriorModel, channel_from_config,
                              gauss_hermite, log_H, prior_from_config)

H = np.linspace(-3.0, 3.0, 13)


@pytest.mark.parametrize("kind", ["perceptron_step", "random_label"])
@pytest.mark.parametrize("c", [0.05, 0.7, 3.0])
def test_discrete_channel_normalized(kind, c):
    ch = ChannelModel(kind)
    total = sum(np.exp(ch.log_evidence(c, H, y)[0]) for y in (-1.0, 1.0))
    np.testing.assert_allclose(total, 1.0, atol=1e-14)


@pytest.mark.parametrize("c,h", [(0.3, -0.4), (1.2, 0.9)])
def test_gaussian_channel_normalized(c, h):
    ch = ChannelModel("gaussian_noise", 0.5)
    total, _ = quad(lambda y: math.exp(float(ch.log_evidence(c, h, y)[0])), -np.inf, np.inf)
    assert abs(total - 1.0) < 1e-10


@pytest.mark.parametrize("ch", [ChannelModel("perceptron_step"),
                                ChannelModel("gaussian_noise", 0.4)])
def test_channel_derivatives_match_finite_differences(ch):
    c, y, e = 0.6, np.array([1.0, -1.0, 1.0]), 1e-5
    h = np.array([-1.3, 0.2, 2.1])
    L, d1, d2 = ch.log_evidence(c, h, y)
    Lp, d1p, _ = ch.log_evidence(c, h + e, y)
    Lm, d1m, _ = ch.log_evidence(c, h - e, y)
    np.testing.assert_allclose(d1, (Lp - Lm) / (2 * e), atol=1e-8)
    np.testing.assert_allclose(d2, (d1p - d1m) / (2 * e), atol=1e-8)


def test_step_channel_far_tail_is_finite():
    L, d1, d2 = ChannelModel().log_evidence(0.01, np.array([-40.0]), np.array([1.0]))
    assert np.isfinite(L).all() and np.isfinite(d1).all() and np.isfinite(d2).all()
    assert L[0] < -1e4


def test_log_H_matches_direct_tail():
    assert abs(log_H(0.0) - math.log(0.5)) < 1e-15
    assert abs(log_H(3.0) - math.log(0.5 * math.erfc(3.0 / math.sqrt(2)))) < 1e-13


@pytest.mark.parametrize("prior", [PriorModel(), PriorModel("gaussian", 1.7)])
def test_prior_derivatives(prior):
    chi_hat, h, e = 0.4, np.array([-0.8, 0.1, 1.5]), 1e-5
    logz, m, v = prior.log_partition(chi_hat, h)
    zp, mp, _ = prior.log_partition(chi_hat, h + e)
    zm, mm, _ = prior.log_partition(chi_hat, h - e)
    np.testing.assert_allclose(m, (zp - zm) / (2 * e), atol=1e-8)
    np.testing.assert_allclose(v, (mp - mm) / (2 * e), atol=1e-8)


def test_gaussian_prior_partition_closed_form():
    prior = PriorModel("gaussian", 2.0)
    logz, _, _ = prior.log_partition(0.3, np.array([0.5]))
    # ln int N(w; 0, v) exp(-chi_hat w^2 / 2 + h w) dw
    direct, _ = quad(lambda w: math.exp(-w * w / 4 - 0.15 * w * w + 0.5 * w) / math.sqrt(4 * math.pi),
                     -np.inf, np.inf)
    assert abs(logz[0] - math.log(direct)) < 1e-12
    with pytest.raises(ModelError):
        prior.log_partition(-1.0, np.array([0.0]))


def test_counting_measure_adds_log2():
    a = PriorModel().log_partition(0.2, np.array([0.3]))[0]
    b = PriorModel(measure="normalized").log_partition(0.2, np.array([0.3]))[0]
    assert abs(a - b - math.log(2)) < 1e-15


def test_gauss_hermite_moments():
    z, w = gauss_hermite()
    assert abs(w.sum() - 1) < 1e-13
    assert abs(np.dot(w, z ** 2) - 1) < 1e-12
    assert abs(np.dot(w, z ** 4) - 3) < 1e-11


def test_mean_log_likelihood_gaussian_matches_quadrature():
    ch = ChannelModel("gaussian_noise", 0.5)
    c, h, y = 0.8, 0.2, 1.1
    _, d1, _ = ch.log_evidence(c, h, y)
    # tilted posterior of Delta ~ N(h, c) * N(y; Delta, s2)
    m = h + c * float(d1)
    v = c * 0.5 / (c + 0.5)
    direct, _ = quad(lambda d: math.exp(-(d - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
                     * (-0.5 * math.log(2 * math.pi * 0.5) - (y - d) ** 2 / 1.0), -np.inf, np.inf)
    assert abs(float(ch.mean_log_likelihood(c, d1)) - direct) < 1e-10


def test_config_builders_and_errors():
    assert prior_from_config({"kind": "gaussian_unit"}).variance == 1.0
    assert channel_from_config({"kind": "gaussian_noise", "params": {"sigma2": 0.3}}).noise == 0.3
    with pytest.raises(ModelError):
        PriorModel("laplace")
    with pytest.raises(ModelError):
        ChannelModel("gaussian_noise", -1.0)
