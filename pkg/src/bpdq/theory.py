"""Calculators for the recovery guarantees of BPDQ_p decoders.

Everything here is closed-form arithmetic except the RIP probes, which are
Monte-Carlo (lower-bound) estimates or, for tiny instances, exhaustive.

Conventions: ``mu_p2`` is the normalization of the l_p/l_2 restricted
isometry, ``||Phi u||_p ~ mu_p2 ||u||_2`` on sparse ``u``.  For an SGR matrix
it is ``E ||xi||_p`` with ``xi`` standard Gaussian in ``R^m``.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ._rng import PortableRNG, derive_seed
from .prox import lp_norm
from .quantize import DEFAULT_KAPPA, epsilon_p
from .sensing import make_sgr

__all__ = [
    "RipProfile",
    "RipEstimate",
    "OptimalityConstants",
    "nu_p",
    "mu_p2_bounds",
    "c_p",
    "instance_optimality_constants",
    "theorem1_constants",
    "theorem2_constants",
    "theta_bound",
    "NoiseErrorCheck",
    "noise_error_bound_check",
    "estimate_rip_radius",
    "estimate_rip_profile",
    "exact_rip_radius",
    "compressibility_error",
    "rip_scaling_slope",
]

NOISE_CONSTANT = 2.17
_SQRT2 = math.sqrt(2.0)
_EXACT_INT = 2**52


@dataclass(frozen=True)
class RipProfile:
    """RIP radii of orders ``K``, ``2K`` and ``3K`` for one moment ``p``.

    ``source`` is ``"assumed"`` for user-supplied values or
    ``"monte-carlo-estimate"`` for probes (which under-estimate the radius).
    """

    K: int
    deltas: dict
    mu_p2: float
    p: float
    source: str = "assumed"

    def __post_init__(self):
        orders = sorted(self.deltas)
        if orders != [self.K, 2 * self.K, 3 * self.K]:
            raise ValueError(f"deltas must be keyed by K, 2K, 3K = {self.K}, "
                             f"{2 * self.K}, {3 * self.K}; got {orders}")
        vals = [float(self.deltas[k]) for k in orders]
        if not all(0.0 < d < 1.0 for d in vals):
            raise ValueError(f"RIP radii must lie in (0, 1), got {vals}")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"RIP radii must be non-decreasing in the order, got {vals}")
        if self.source not in ("assumed", "monte-carlo-estimate"):
            raise ValueError(f"unknown source {self.source!r}")

    @classmethod
    def assumed(cls, K, delta_K, delta_2K, delta_3K, p=2.0, mu_p2=1.0):
        return cls(K, {K: delta_K, 2 * K: delta_2K, 3 * K: delta_3K}, mu_p2, p)

    @property
    def delta_K(self):
        return float(self.deltas[self.K])

    @property
    def delta_2K(self):
        return float(self.deltas[2 * self.K])

    @property
    def delta_3K(self):
        return float(self.deltas[3 * self.K])

    def to_dict(self):
        return {"K": self.K, "deltas": {str(k): float(v) for k, v in self.deltas.items()},
                "mu_p2": self.mu_p2, "p": self.p, "source": self.source}


@dataclass(frozen=True)
class OptimalityConstants:
    """``||x* - x||_2 <= A e0(K) + B epsilon / mu_p2`` when ``valid``.

    Invalid constants (``1 - delta_2K - C_p <= 0``) are reported as ``inf``.
    """

    A_p: float
    B_p: float
    C_p: float
    valid: bool

    def to_dict(self):
        return {"A_p": self.A_p, "B_p": self.B_p, "C_p": self.C_p, "valid": self.valid}


def _finite_p(p, lo=1.0):
    p = float(p)
    if math.isinf(p) or math.isnan(p):
        raise ValueError("this quantity is only defined for finite p")
    if p < lo:
        raise ValueError(f"p must be >= {lo}, got {p}")
    return p


def nu_p(p):
    """``(E |g|^p)^(1/p)`` for a standard normal ``g``.

    >>> round(nu_p(2), 12)
    1.0
    """
    p = _finite_p(p)
    log_moment = 0.5 * p * math.log(2.0) - 0.5 * math.log(math.pi) + gammaln(0.5 * (p + 1.0))
    return math.exp(log_moment / p)


def mu_p2_bounds(p, m):
    """Lower and upper bounds on ``E ||xi||_p`` for ``xi ~ N(0, I_m)``.

    ``upper = nu_p m^(1/p)`` (Jensen) and
    ``lower = upper (1 + 2^(p+1) / m)^(1/p - 1)``.
    """
    p = _finite_p(p)
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    upper = nu_p(p) * m ** (1.0 / p)
    # log form: 2^(p+1) overflows long before the factor leaves (0, 1]
    log_factor = (1.0 / p - 1.0) * (math.log1p(2.0 ** min(p + 1.0, 1000.0) / m))
    return upper * math.exp(log_factor), upper


def c_p(p, deltas):
    """Cross-correlation constant ``C_p`` for RIP radii ``(d_s, d_s', d_{s+s'})``.

    Minimum of two bounds; at ``p = 2`` it reduces to ``d_{s+s'}``.
    """
    p = _finite_p(p, lo=2.0)
    ds, dsp, dss = (float(d) for d in deltas)
    if not all(0.0 <= d < 1.0 for d in (ds, dsp, dss)):
        raise ValueError(f"RIP radii must lie in [0, 1), got {deltas}")
    pb = p - 2.0
    first = (ds + dss) * (dsp + dss + pb * (1.0 + dsp))
    second = (dss + 0.5 * pb * (1.0 + dss)) * (dss + 0.5 * pb * (2.0 + dsp + dss))
    return math.sqrt(min(first, second))


def instance_optimality_constants(delta_2K, C):
    """``A_p`` and ``B_p`` from ``delta_2K`` and a cross-correlation constant ``C``."""
    denom = 1.0 - delta_2K - C
    if denom <= 0.0:
        return OptimalityConstants(math.inf, math.inf, C, False)
    A = 2.0 * (1.0 + C - delta_2K) / denom
    B = 4.0 * math.sqrt(1.0 + delta_2K) / denom
    return OptimalityConstants(A, B, C, True)


def theorem2_constants(p, profile):
    """Instance-optimality constants of BPDQ_p for a RIP profile.

    ``C_p`` uses ``(s, s') = (2K, K)``, i.e. radii ``(d_2K, d_K, d_3K)``.
    """
    C = c_p(p, (profile.delta_2K, profile.delta_K, profile.delta_3K))
    return instance_optimality_constants(profile.delta_2K, C)


def theorem1_constants(delta_2K):
    """BPDN constants ``(A, B)``; requires ``0 < delta_2K < sqrt(2) - 1``."""
    d = float(delta_2K)
    if not 0.0 < d < _SQRT2 - 1.0:
        raise ValueError(f"delta_2K must lie in (0, sqrt(2) - 1), got {d}")
    denom = 1.0 - (_SQRT2 + 1.0) * d
    A = 2.0 * (1.0 + (_SQRT2 - 1.0) * d) / denom
    B = 4.0 * math.sqrt(1.0 + d) / denom
    return A, B


def theta_bound(p, K, N, delta, eta, c=1.0):
    """Smallest ``m`` with ``Theta_p(m) >= c delta^-2 (K log[e N/K (1 + 12/delta)] + log(2/eta))``.

    ``Theta_p(m) = m^(2/p)`` for finite ``p`` (and then ``m >= (p-1) 2^(p+1)``
    is also enforced) or ``log m`` for ``p = inf``.  ``c`` is an unspecified
    absolute constant; the default 1 gives the bound only up to that
    constant.  Returns ``math.inf`` when ``m`` would not fit in a double.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if not 1 <= K <= N:
        raise ValueError(f"need 1 <= K <= N, got K={K}, N={N}")
    p = float(p)
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    rhs = c / delta**2 * (K * math.log(math.e * N / K * (1.0 + 12.0 / delta))
                          + math.log(2.0 / eta))
    log_m = rhs if math.isinf(p) else 0.5 * p * math.log(rhs)
    if log_m > 700.0:
        return math.inf
    if math.isinf(p):
        m, theta = math.ceil(math.exp(rhs)), math.log
    else:
        m, theta = max(1, math.ceil(rhs ** (0.5 * p))), lambda k: k ** (2.0 / p)
    if m < _EXACT_INT:
        # guard against rounding in exp / the fractional power
        while m > 1 and theta(m - 1) >= rhs:
            m -= 1
        while theta(m) < rhs:
            m += 1
    if math.isinf(p):
        return int(m)
    floor = (p - 1.0) * 2.0 ** (p + 1.0)
    return int(max(m, math.ceil(floor)))


@dataclass(frozen=True)
class NoiseErrorCheck:
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


def noise_error_bound_check(p, m, alpha, kappa=DEFAULT_KAPPA):
    """Compare ``epsilon_p / mu_lower`` with ``2.17 alpha / sqrt(p + 1)``.

    Needs ``m >= (p-1) 2^(p+1)`` and ``m > ((p+1) kappa / p)^2``.
    """
    p = _finite_p(p, lo=2.0)
    if m < (p - 1.0) * 2.0 ** (p + 1.0):
        raise ValueError(f"m={m} is below (p-1) 2^(p+1) = {(p - 1) * 2 ** (p + 1):g}")
    if m <= ((p + 1.0) * kappa / p) ** 2:
        raise ValueError(f"m={m} must exceed ((p+1) kappa / p)^2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    lower, _ = mu_p2_bounds(p, m)
    lhs = epsilon_p(p, m, alpha, kappa).epsilon / lower
    rhs = NOISE_CONSTANT * alpha / math.sqrt(p + 1.0)
    return NoiseErrorCheck(lhs, rhs, lhs < rhs)


@dataclass(frozen=True)
class RipEstimate:
    """Monte-Carlo RIP radius of one order (a lower bound on the true radius)."""

    K: int
    delta: float
    mu: float
    p: float
    trials: int
    r_min: float
    r_max: float
    source: str = "monte-carlo-estimate"

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("K", "delta", "mu", "p", "trials", "r_min", "r_max", "source")}


def _mc_mu(p, m, seed, draws=2000):
    rng = PortableRNG(derive_seed(seed, "mu", m))
    xi = rng.standard_normal(draws * m).reshape(draws, m)
    return float(np.mean(np.abs(xi).max(axis=1)))


def _rip_ratios(op, K_max, p, trials, seed, mu):
    """Per-trial ratios ``||Phi u||_p / mu`` for nested ``k``-sparse ``u``, k = 1..K_max.

    Trial ``t`` draws a random ordering of the coordinates and a Gaussian
    coefficient vector; order ``k`` uses the first ``k`` of both, so the
    test sets are nested in ``k`` and across calls with different ``K_max``.
    """
    out = np.empty((trials, K_max))
    for t in range(trials):
        # separate streams keep both draws prefix-stable when K_max changes
        support = PortableRNG(derive_seed(seed, "rip", t)).choice(op.N, K_max)
        coef = PortableRNG(derive_seed(seed, "rip-coef", t)).standard_normal(K_max)
        cols = np.empty((op.m, K_max))
        e = np.zeros(op.N)
        for j, idx in enumerate(support):
            e[idx] = 1.0
            cols[:, j] = np.real(op.apply(e))
            e[idx] = 0.0
        partial = np.cumsum(cols * coef, axis=1)
        l2 = np.sqrt(np.cumsum(coef**2))
        for k in range(K_max):
            out[t, k] = lp_norm(partial[:, k], p) / (mu * l2[k])
    return out


def _default_mu(op, p, seed):
    if math.isinf(p):
        return _mc_mu(p, op.m, seed)
    return nu_p(p) * op.m ** (1.0 / p)


def estimate_rip_radius(op, K, p, trials, seed=0, mu=None):
    """Monte-Carlo RIP_{p,2} radius of order ``K`` for ``op``.

    ``mu`` defaults to ``nu_p m^(1/p)`` (for ``p = inf`` a Monte-Carlo mean of
    ``||xi||_inf``).  The radius is ``max(max r^2 - 1, 1 - min r^2)`` over
    ``trials`` random sparse unit vectors, which can only under-estimate the
    true radius.  Estimates are non-decreasing in ``K`` for a fixed seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 1 <= K <= op.N:
        raise ValueError(f"need 1 <= K <= N, got K={K}")
    p = float(p)
    mu = _default_mu(op, p, seed) if mu is None else float(mu)
    r = _rip_ratios(op, K, p, trials, seed, mu)
    r_min, r_max = float(r.min()), float(r.max())
    delta = max(r_max**2 - 1.0, 1.0 - r_min**2)
    return RipEstimate(int(K), float(delta), mu, p, int(trials), r_min, r_max)


def estimate_rip_profile(op, K, p, trials, seed=0, mu=None):
    """Monte-Carlo :class:`RipProfile` for orders ``K``, ``2K``, ``3K``.

    Raises ``ValueError`` when an estimated radius is not below 1.
    """
    p = float(p)
    mu = _default_mu(op, p, seed) if mu is None else float(mu)
    r = _rip_ratios(op, 3 * K, p, trials, seed, mu)
    deltas = {}
    for order in (K, 2 * K, 3 * K):
        block = r[:, :order]
        deltas[order] = float(max(block.max() ** 2 - 1.0, 1.0 - block.min() ** 2))
    return RipProfile(int(K), deltas, mu, p, source="monte-carlo-estimate")


def exact_rip_radius(matrix, K, mu=None):
    """Exact RIP_{2,2} radius of order ``K`` by enumerating all supports.

    Uses the extreme singular values of every ``m x K`` column submatrix.
    Limited to ``N <= 16`` and ``K <= 3``.
    """
    A = np.asarray(getattr(matrix, "matrix", matrix), dtype=np.float64)
    m, N = A.shape
    if N > 16 or not 1 <= K <= 3:
        raise ValueError("exact enumeration is limited to N <= 16 and 1 <= K <= 3")
    mu = math.sqrt(m) if mu is None else float(mu)
    delta = 0.0
    for support in itertools.combinations(range(N), K):
        s = np.linalg.svd(A[:, support], compute_uv=False) / mu
        delta = max(delta, s[0] ** 2 - 1.0, 1.0 - s[-1] ** 2)
    return float(delta)


def compressibility_error(x, K):
    """``K^(-1/2) ||x - x_K||_1`` with ``x_K`` the best ``K``-term approximation.

    Ties among equal magnitudes keep the lower index.

    >>> compressibility_error([3.0, 2.0, 1.0], 1)
    3.0
    """
    a = np.abs(np.asarray(x, dtype=np.float64).ravel())
    if not 1 <= K <= a.size:
        raise ValueError(f"need 1 <= K <= N, got K={K}")
    order = np.argsort(-a, kind="stable")
    return float(a[order[K:]].sum() / math.sqrt(K))


@dataclass
class ScalingFit:
    """Least-squares fit of ``log delta(m)`` on ``-(1/p) log m + 0.5 log log m``.

    A slope of 1 matches ``delta = O(m^(-1/p) sqrt(log m))``.
    """

    p: float
    m_values: list
    deltas: list
    slope: float
    intercept: float
    extra: dict = field(default_factory=dict)


def rip_scaling_slope(p, N, K, m_values, trials, seed=0):
    """Monte-Carlo RIP radius of SGR matrices as ``m`` grows, with the fitted slope."""
    p = _finite_p(p, lo=2.0)
    deltas = []
    for m in m_values:
        op = make_sgr(m, N, derive_seed(seed, "sgr", int(m)))
        deltas.append(estimate_rip_radius(op, K, p, trials, seed=seed).delta)
    logm = np.log(np.asarray(m_values, dtype=np.float64))
    regressor = -logm / p + 0.5 * np.log(logm)
    slope, intercept = np.polyfit(regressor, np.log(deltas), 1)
    return ScalingFit(p, list(m_values), deltas, float(slope), float(intercept))
