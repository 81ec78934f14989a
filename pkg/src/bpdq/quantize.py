"""Uniform midpoint quantization and quantization-noise norm estimators.

The quantization error of ``y_q = Q(Phi x)`` is modelled as iid uniform on
``[-alpha/2, alpha/2]``.  The estimators return radii ``epsilon`` such that
``||y_q - Phi x||_p <= epsilon`` holds with high probability, which is what
the decoders need for the true signal to be feasible.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_KAPPA",
    "QuantizerSpec",
    "NoiseBound",
    "quantize",
    "zeta_p",
    "epsilon_p",
    "epsilon_2_variance",
]

DEFAULT_KAPPA = 2.0


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform quantizer of bin width ``alpha``."""

    alpha: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"bin width must be positive and finite, got {self.alpha}")

    def __call__(self, v):
        return quantize(v, self)


@dataclass(frozen=True)
class NoiseBound:
    """Fidelity radius for an l_p tube together with how it was obtained.

    ``tail_prob`` bounds the probability that uniform noise violates the
    radius (``exp(-2 kappa^2)``; zero for ``p = inf``).
    """

    p: float
    m: int
    alpha: float
    kappa: float
    epsilon: float
    zeta_p: float
    tail_prob: float

    def to_dict(self):
        return {"p": self.p, "m": self.m, "alpha": self.alpha, "kappa": self.kappa,
                "epsilon": self.epsilon, "tail_prob": self.tail_prob}


def quantize(v, spec):
    """Midpoint quantizer ``alpha * floor(v / alpha) + alpha / 2``.

    Values on a bin edge go to the bin above (floor semantics).

    >>> quantize(np.array([0.3, -0.2, 1.0]), QuantizerSpec(1.0))
    array([ 0.5, -0.5,  1.5])
    """
    if not isinstance(spec, QuantizerSpec):
        spec = QuantizerSpec(float(spec))
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    a = spec.alpha
    return a * np.floor(v / a) + 0.5 * a


def _check_m(m):
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    return int(m)


def zeta_p(p, m, alpha):
    """Expected ``||xi||_p^p`` for ``xi`` uniform on ``[-alpha/2, alpha/2]^m``."""
    m = _check_m(m)
    if math.isinf(p):
        raise ValueError("zeta_p is undefined for p = inf; use epsilon_p")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    log_z = p * math.log(alpha / 2.0) + math.log(m) - math.log1p(p)
    return math.exp(log_z) if log_z < 709.0 else math.inf


def epsilon_p(p, m, alpha, kappa=DEFAULT_KAPPA):
    """Hoeffding-based l_p radius for uniform quantization noise.

    For finite ``p``::

        epsilon = alpha / (2 (p+1)^(1/p)) * (m + kappa (p+1) sqrt(m))^(1/p)

    and ``||xi||_p <= epsilon`` fails with probability at most
    ``exp(-2 kappa^2)``.  For ``p = inf`` the radius is ``alpha / 2``.
    """
    m = _check_m(m)
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if math.isinf(p):
        return NoiseBound(math.inf, m, alpha, kappa, alpha / 2.0, math.nan, 0.0)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    # log form avoids overflow of (m + ...)^(1/p) pieces for large p
    log_eps = (math.log(alpha / 2.0) - math.log1p(p) / p
               + math.log(m + kappa * (p + 1.0) * math.sqrt(m)) / p)
    return NoiseBound(float(p), m, alpha, kappa, math.exp(log_eps),
                      zeta_p(p, m, alpha), math.exp(-2.0 * kappa**2))


def epsilon_2_variance(m, alpha, kappa=DEFAULT_KAPPA):
    """l_2 radius from mean plus ``kappa`` standard deviations of ``||xi||_2^2``.

    ``sqrt(alpha^2 m / 12 + kappa alpha^2 sqrt(m) / (6 sqrt(5)))``, the usual
    setting for BPDN on quantized data.
    """
    m = _check_m(m)
    return math.sqrt(alpha**2 * m / 12.0
                     + kappa * alpha**2 * math.sqrt(m) / (6.0 * math.sqrt(5.0)))
