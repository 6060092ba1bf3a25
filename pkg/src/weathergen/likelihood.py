"""Per-day probabilistic heads: gamma/normal negative log-likelihoods and samplers.

The day model factorizes as radn, then mint given radn, then diff (maxt - mint)
given the previous two, then rain given all three. radn, diff and rain carry
gamma heads in shape-rate form (rate multiplies x in the exponent); mint
carries a normal head. Raw network outputs map to valid parameters through
the identity (for the normal mean) and softplus(z) + eps for everything that
must stay positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from . import autodiff as ad
from .errors import DomainError

VARIABLES = ("radn", "mint", "diff", "rain")
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GammaParams:
    """Shape-rate gamma parameters, both strictly positive."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise DomainError(f"gamma parameters must be positive, got alpha={self.alpha}, beta={self.beta}")

    @property
    def mean(self):
        return self.alpha / self.beta

    @property
    def variance(self):
        return self.alpha / self.beta**2


@dataclass(frozen=True)
class NormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise DomainError(f"normal sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class DayDistribution:
    """The 8-parameter bundle describing one day's four variables."""

    radn: GammaParams
    mint: NormalParams
    diff: GammaParams
    rain: GammaParams


def gamma_nll(x, p):
    """-log of the gamma density at x > 0."""
    if x <= 0.0:
        raise DomainError(f"gamma support is x > 0, got {x}")
    return -(p.alpha * math.log(p.beta) - gammaln(p.alpha) + (p.alpha - 1.0) * math.log(x) - p.beta * x)


def normal_nll(x, p):
    """-log of the normal density at x."""
    z = (x - p.mu) / p.sigma
    return HALF_LOG_2PI + math.log(p.sigma) + 0.5 * z * z


def day_nll(day, dist):
    """Sum of the four per-variable NLLs for one model-space day vector.

    ``day`` is (radn, mint, diff, rain); radn/diff/rain must be positive.
    """
    radn, mint, diff, rain = day
    terms = {}
    for name, x, p in (("radn", radn, dist.radn), ("diff", diff, dist.diff), ("rain", rain, dist.rain)):
        try:
            terms[name] = gamma_nll(x, p)
        except DomainError as e:
            raise DomainError(f"{name}: {e}") from None
    terms["mint"] = normal_nll(mint, dist.mint)
    return terms["radn"] + terms["mint"] + terms["diff"] + terms["rain"]


def softplus(z):
    return np.logaddexp(0.0, z)


def head_activation(raw, eps=1e-3):
    """Map 8 raw head outputs to a DayDistribution.

    Order: (radn a, radn b, mint mu, mint sigma, diff a, diff b, rain a, rain b).
    mu passes through the identity; the other seven get softplus + eps.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (8,):
        raise DomainError(f"head expects 8 raw values, got shape {raw.shape}")
    sp = softplus(raw) + eps
    return DayDistribution(
        radn=GammaParams(float(sp[0]), float(sp[1])),
        mint=NormalParams(float(raw[2]), float(sp[3])),
        diff=GammaParams(float(sp[4]), float(sp[5])),
        rain=GammaParams(float(sp[6]), float(sp[7])),
    )


# ---------------------------------------------------------------------------
# Recorded-graph NLL nodes (training path). Parameters arrive as a 2-channel
# grid per variable: channel 0 = alpha (or mu), channel 1 = beta (or sigma).
# Targets are plain arrays, never differentiated.
# ---------------------------------------------------------------------------

def gamma_nll_op(params, x):
    """Per-position gamma NLL grid from a 2-channel (alpha, beta) grid."""
    v = params.values
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0):
        raise DomainError("gamma support is x > 0; target contains non-positive values")
    alpha = v[..., 0, :]
    beta = v[..., 1, :]
    log_x = np.log(x)
    out = -(alpha * np.log(beta) - gammaln(alpha) + (alpha - 1.0) * log_x - beta * x)

    def _back(node):
        g = node.grad[..., 0, :]
        pg = np.zeros_like(v)
        pg[..., 0, :] = g * (-np.log(beta) + digamma(alpha) - log_x)
        pg[..., 1, :] = g * (x - alpha / beta)
        params._accumulate(pg)

    return ad.SequenceGrid(out[..., None, :], (params,), _back, _validate=False)


def normal_nll_op(params, x):
    """Per-position normal NLL grid from a 2-channel (mu, sigma) grid."""
    v = params.values
    x = np.asarray(x, dtype=np.float64)
    mu = v[..., 0, :]
    sigma = v[..., 1, :]
    z = (x - mu) / sigma
    out = HALF_LOG_2PI + np.log(sigma) + 0.5 * z * z

    def _back(node):
        g = node.grad[..., 0, :]
        pg = np.zeros_like(v)
        pg[..., 0, :] = g * (-z / sigma)
        pg[..., 1, :] = g * (1.0 / sigma - z * z / sigma)
        params._accumulate(pg)

    return ad.SequenceGrid(out[..., None, :], (params,), _back, _validate=False)


# ---------------------------------------------------------------------------
# Sampling. Gamma draws use the Marsaglia-Tsang squeeze with the u^(1/alpha)
# boost for alpha < 1, built on the stream's normal/uniform primitives only,
# so one member's stream never depends on another's.
# ---------------------------------------------------------------------------

def sample_gamma(p, rng):
    """One draw from gamma(shape=alpha, rate=beta); strictly positive."""
    alpha = p.alpha
    boost = 1.0
    if alpha < 1.0:
        u = rng.random()
        while u <= 0.0:  # guard the measure-zero 0.0 draw
            u = rng.random()
        boost = u ** (1.0 / alpha)
        alpha = alpha + 1.0
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2 or math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            draw = boost * d * v / p.beta
            if draw > 0.0:
                return draw
            # underflow to 0.0 is possible for tiny alpha; retry preserves support
            continue


def sample_normal(p, rng):
    return p.mu + p.sigma * rng.standard_normal()
