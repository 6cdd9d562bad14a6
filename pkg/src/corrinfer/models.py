"""Single-site priors and output channels.

Priors expose ``log_partition(chi_hat, h)`` = ln Tr_w P(w) exp(-chi_hat w^2/2 + h w)
with its first two h-derivatives (mean and variance of the tilted measure).
Channels expose ``log_evidence(c, h, y)`` = ln int Dx P(y | sqrt(c) x + h) with
its first two h-derivatives.  Both work elementwise on numpy arrays.

The Ising prior uses the counting measure (weight one per state), so for a
0/1 likelihood ln Z / N is directly the entropy of the solution space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import log_ndtr

LOG2 = math.log(2.0)
LOG_2PI = math.log(2.0 * math.pi)


class ModelError(ValueError):
    pass


def logcosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


def log_H(t):
    """ln H(t) with H(t) = erfc(t/sqrt 2)/2, stable in both tails."""
    return log_ndtr(-np.asarray(t, dtype=float))


def H_ratio(t):
    """phi(t) / H(t), computed in the log domain."""
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * t * t - 0.5 * LOG_2PI - log_H(t))


# ----------------------------------------------------------------- priors

@dataclass(frozen=True)
class PriorModel:
    kind: str = "ising_pm1"
    variance: float = 1.0
    measure: str = "counting"

    def __post_init__(self):
        if self.kind not in ("ising_pm1", "gaussian_unit", "gaussian"):
            raise ModelError(f"unknown prior {self.kind!r}")
        if self.kind != "ising_pm1" and not self.variance > 0:
            raise ModelError("gaussian prior needs a positive variance")
        if self.measure not in ("counting", "normalized"):
            raise ModelError(f"unknown measure convention {self.measure!r}")

    @property
    def is_ising(self) -> bool:
        return self.kind == "ising_pm1"

    def log_partition(self, chi_hat, h):
        """Return (logZ, mean, variance) of the tilted single-site measure."""
        chi_hat = np.asarray(chi_hat, dtype=float)
        h = np.asarray(h, dtype=float)
        if self.is_ising:
            m = np.tanh(h)
            logz = logcosh(h) - 0.5 * chi_hat
            if self.measure == "counting":
                logz = logz + LOG2
            return logz, m, 1.0 - m * m
        v = self.variance
        a = 1.0 + v * chi_hat
        if np.any(a <= 0):
            raise ModelError("gaussian partition diverges: chi_hat <= -1/variance")
        var = v / a
        return -0.5 * np.log(a) + 0.5 * h * h * var, h * var, np.broadcast_to(var, h.shape)

    def second_moment(self) -> float:
        """T_w = Tr_w w^2 Q(w)."""
        return 1.0 if self.is_ising else float(self.variance)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.is_ising:
            return rng.choice(np.array([-1.0, 1.0]), size=n)
        return rng.normal(0.0, math.sqrt(self.variance), size=n)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature for averages over a teacher weight w0 ~ Q(w)."""
        if self.is_ising:
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        z, wz = gauss_hermite(GH_NODES)
        return math.sqrt(self.variance) * z, wz

    def mean_log_weight(self, second_moment) -> float:
        """Posterior average of ln P(w) given <w^2>; zero for counting Ising."""
        if self.is_ising:
            return 0.0 if self.measure == "counting" else -LOG2
        v = self.variance
        return -0.5 * math.log(2.0 * math.pi * v) - 0.5 * second_moment / v


def prior_log_partition(prior: PriorModel, chi_hat, h):
    return prior.log_partition(chi_hat, h)


def generative_second_moment(prior: PriorModel) -> float:
    return prior.second_moment()


# --------------------------------------------------------------- channels

@dataclass(frozen=True)
class ChannelModel:
    kind: str = "perceptron_step"
    noise: float = 1.0  # sigma^2 for gaussian_noise

    def __post_init__(self):
        if self.kind not in ("perceptron_step", "gaussian_noise", "random_label"):
            raise ModelError(f"unknown channel {self.kind!r}")
        if self.kind == "gaussian_noise" and not self.noise >= 0:
            raise ModelError("gaussian channel needs sigma^2 >= 0")

    @property
    def discrete(self) -> bool:
        return self.kind != "gaussian_noise"

    @property
    def indicator(self) -> bool:
        """Likelihood takes values in {0, 1} (or a constant)."""
        return self.kind == "perceptron_step"

    def log_evidence(self, c, h, y):
        """Return (L, dL/dh, d2L/dh2) for L = ln int Dx P(y | sqrt(c) x + h)."""
        c = np.asarray(c, dtype=float)
        h = np.asarray(h, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "random_label":
            z = np.zeros(np.broadcast(c, h, y).shape)
            return z - LOG2, z, z
        if self.kind == "gaussian_noise":
            v = self.noise + c
            if np.any(v <= 0):
                raise ModelError("degenerate gaussian evidence (sigma^2 + c = 0)")
            r = y - h
            L = -0.5 * np.log(2.0 * math.pi * v) - 0.5 * r * r / v
            return L, r / v, np.broadcast_to(-1.0 / v, L.shape)
        # perceptron step: int Dx theta(y (sqrt(c) x + h)) = H(-y h / sqrt c)
        if np.any(c < 0):
            raise ModelError("negative conjugate variance")
        sc = np.sqrt(c)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -y * h / sc
        t = np.where(np.isfinite(t), t, np.where(y * h > 0, -np.inf, np.inf))
        L = log_H(t)
        r = H_ratio(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = y * r / sc
            d2 = -(r * (r - t)) / c
        d1 = np.where(np.isfinite(d1), d1, 0.0)
        d2 = np.where(np.isfinite(d2), d2, 0.0)
        return L, d1, d2

    def outputs(self, c, mu, n_nodes: int | None = None):
        """Output measure of the smoothed channel.

        Returns (y, weight, score): for each (c, mu) the values y with weights
        summing to one (discrete outputs weighted by exp L; continuous outputs
        by Gauss-Hermite nodes of N(mu, sigma^2 + c)) and the score d/dmu ln of
        the smoothed likelihood at those y.  Arrays gain a trailing axis.
        """
        c = np.asarray(c, dtype=float)
        mu = np.asarray(mu, dtype=float)
        shape = np.broadcast(c, mu).shape
        if self.discrete:
            ys = np.array([-1.0, 1.0])
            y = np.broadcast_to(ys, shape + (2,))
            L, d1, _ = self.log_evidence(c[..., None], mu[..., None], y)
            return y, np.exp(L), d1
        t, wt = gauss_hermite(n_nodes or GH_NODES)
        sd = np.sqrt(self.noise + c)[..., None]
        y = mu[..., None] + sd * t
        score = (y - mu[..., None]) / (sd * sd)
        return y, np.broadcast_to(wt, y.shape), score

    def sample(self, rng: np.random.Generator, delta: np.ndarray) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        if self.kind == "random_label":
            return rng.choice(np.array([-1.0, 1.0]), size=delta.shape)
        if self.kind == "perceptron_step":
            y = np.sign(delta)
            ties = y == 0
            if np.any(ties):
                y[ties] = rng.choice(np.array([-1.0, 1.0]), size=int(ties.sum()))
            return y
        return delta + math.sqrt(self.noise) * rng.standard_normal(delta.shape)

    def mean_log_likelihood(self, c, d1):
        """Average of ln P(y|Delta) under the tilted posterior of Delta.

        ``c`` is the cavity variance and ``d1`` the first h-derivative of the
        log-evidence; zero for the 0/1 step likelihood on its support.
        """
        d1 = np.asarray(d1, dtype=float)
        if self.kind == "perceptron_step":
            return np.zeros_like(d1)
        if self.kind == "random_label":
            return np.full_like(d1, -LOG2)
        s2 = self.noise
        # Delta | y has variance s2 c/(s2+c) and y - E[Delta] = s2 * d1
        resid = s2 * c / (s2 + c) + s2 * s2 * d1 * d1
        return -0.5 * math.log(2.0 * math.pi * s2) - 0.5 * resid / s2

    def output_entropy_term(self, T_hat_u: float) -> float:
        """Tr_y int Dz Q(y|sqrt(T) z) ln Q(y|sqrt(T) z) for this (generative) channel."""
        if self.kind == "random_label":
            return -LOG2
        if self.kind == "perceptron_step":
            return 0.0
        if self.noise <= 0:
            raise ModelError("noiseless gaussian channel has no finite output entropy")
        return -0.5 * math.log(2.0 * math.pi * math.e * self.noise)


def channel_log_evidence(channel: ChannelModel, chi_hat_u, h, y):
    return channel.log_evidence(chi_hat_u, h, y)


# ------------------------------------------------------------ quadrature

GH_NODES = 96
_GH: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_hermite(n: int = GH_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int Dz f(z) with Dz the standard normal measure."""
    if n not in _GH:
        x, w = np.polynomial.hermite_e.hermegauss(n)
        _GH[n] = (x, w / math.sqrt(2.0 * math.pi))
    return _GH[n]


def prior_from_config(doc: Mapping) -> PriorModel:
    kind = doc.get("kind", "ising_pm1")
    params = doc.get("params", {}) or {}
    if kind == "gaussian_unit":
        return PriorModel(kind="gaussian", variance=1.0)
    if kind == "gaussian":
        return PriorModel(kind="gaussian", variance=float(params.get("variance", 1.0)))
    return PriorModel(kind=kind, measure=params.get("measure", "counting"))


def channel_from_config(doc: Mapping) -> ChannelModel:
    kind = doc.get("kind", "perceptron_step")
    params = doc.get("params", {}) or {}
    if kind == "gaussian_noise":
        return ChannelModel(kind=kind, noise=float(params.get("sigma2", params.get("noise", 1.0))))
    return ChannelModel(kind=kind)
