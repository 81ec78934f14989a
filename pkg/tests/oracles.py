"""Reference computations that share no code with the package."""

import itertools
import math
from decimal import Decimal, getcontext

import numpy as np


def ball_projection_bisection(y, p, tol=1e-13):
    """Projection on the unit l_p ball by nested bisection.

    For a multiplier ``lam`` each magnitude solves ``u + p lam u^(p-1) = |y_i|``
    (increasing in ``u``); ``lam`` is then bisected until ``sum u^p = 1``.
    """
    a = np.abs(np.asarray(y, dtype=np.float64))
    if np.sum(a**p) <= 1.0:
        return np.asarray(y, dtype=np.float64).copy()

    def coords(lam):
        lo, hi = np.zeros_like(a), a.copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f = mid + p * lam * mid ** (p - 1) - a
            lo = np.where(f < 0, mid, lo)
            hi = np.where(f < 0, hi, mid)
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)

    lam_lo, lam_hi = 0.0, 1.0
    while np.sum(coords(lam_hi) ** p) > 1.0:
        lam_hi *= 2.0
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        if np.sum(coords(lam) ** p) > 1.0:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo < tol * max(1.0, lam_hi):
            break
    return np.sign(y) * coords(0.5 * (lam_lo + lam_hi))


def epsilon_p_decimal(p, m, alpha, kappa, digits=40):
    """High-precision evaluation of the Hoeffding radius."""
    getcontext().prec = digits
    p, m, alpha, kappa = (Decimal(str(v)) for v in (p, m, alpha, kappa))
    base = m + kappa * (p + 1) * m.sqrt()
    inv_p = 1 / p
    return float(alpha / (2 * ((p + 1).ln() * inv_p).exp()) * (base.ln() * inv_p).exp())


def rof_cvxpy(y, gamma):
    """ROF objective minimum on a small image, isotropic TV, Neumann boundary."""
    import cvxpy as cp

    n1, n2 = y.shape
    u = cp.Variable((n1, n2))
    terms = []
    for i in range(n1):
        for j in range(n2):
            parts = []
            if i + 1 < n1:
                parts.append(u[i + 1, j] - u[i, j])
            if j + 1 < n2:
                parts.append(u[i, j + 1] - u[i, j])
            if len(parts) == 2:
                terms.append(cp.norm(cp.hstack(parts), 2))
            elif parts:
                terms.append(cp.abs(parts[0]))
    obj = 0.5 * cp.sum_squares(u - y) + gamma * cp.sum(cp.hstack(terms))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(prob.value), np.asarray(u.value)


def rip_exhaustive(A, K, mu):
    """Exact RIP_{2,2} radius of order K from all column subsets."""
    m, N = A.shape
    delta = 0.0
    for S in itertools.combinations(range(N), K):
        ev = np.linalg.eigvalsh(A[:, S].T @ A[:, S]) / mu**2
        delta = max(delta, ev[-1] - 1.0, 1.0 - ev[0])
    return delta


def gaussian_abs_moment_mc(p, draws, seed):
    g = np.random.default_rng(seed).standard_normal(draws)
    return float(np.mean(np.abs(g) ** p))


def lp_norm_plain(v, p):
    v = np.abs(np.asarray(v, dtype=np.float64))
    if math.isinf(p):
        return float(v.max())
    return float(np.sum(v**p) ** (1.0 / p))
