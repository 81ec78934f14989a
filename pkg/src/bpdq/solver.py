"""Douglas-Rachford decoders: BPDQ_p, BPDN and their TV variant.

All decoders solve ``min R(u) s.t. ||y_q - Phi u||_p <= epsilon`` with
``R = ||.||_1`` or ``R = TV`` by the relaxed Douglas-Rachford recursion::

    x <- (1 - a/2) x + (a/2) (2 S - I)(2 P - I) x

where ``P`` projects on the fidelity tube and ``S`` is the prox of
``gamma R``.  The estimate is ``P`` applied to the last iterate.

Estimates are real.  When the operator acts on complex signals (restricted
Fourier) the realness constraint is folded into ``S``: the prox of
``gamma R + indicator(real)`` at ``z`` is the prox of ``gamma R`` at
``Re z``.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, NumericalError
from .prox import TubeProjector, TubeSpec, lp_norm, prox_tv, soft_threshold, tv_norm
from .sensing import estimate_frame_bounds

__all__ = ["DecoderConfig", "DecodeResult", "decode", "decode_bpdq", "decode_bpdn",
           "decode_tv"]

REGULARIZERS = ("l1", "tv")


@dataclass
class DecoderConfig:
    """Parameters of a Douglas-Rachford decode.

    ``alpha_t`` is either a constant relaxation or a sequence indexed by
    iteration (the last value is reused).  ``early_exit_tol``, when set, stops
    the outer loop once ``||x_{t+1} - x_t|| <= early_exit_tol * max(1, ||x_t||)``.
    ``inner_accelerated`` switches the general-frame tube projection to its
    restarted-momentum variant (see :class:`~bpdq.prox.TubeProjector`).
    """

    p: float = 2.0
    epsilon: float = 0.0
    gamma: float = 1.0
    alpha_t: object = 1.0
    outer_iters: int = 500
    inner_tol: float = 1e-6
    inner_cap: int = 700
    inner_accelerated: bool = False
    regularizer: str = "l1"
    early_exit_tol: float = None
    tv_tol: float = 1e-5
    tv_max_iter: int = 200

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")
        relax = np.atleast_1d(np.asarray(self.alpha_t, dtype=np.float64))
        if relax.size == 0 or np.any(relax <= 0) or np.any(relax >= 2):
            raise ValueError("relaxation alpha_t must lie in (0, 2)")

    def relaxation(self, t):
        relax = np.atleast_1d(np.asarray(self.alpha_t, dtype=np.float64))
        return float(relax[min(t, relax.size - 1)])

    def to_dict(self):
        d = asdict(self)
        if not np.isscalar(self.alpha_t):
            d["alpha_t"] = list(np.atleast_1d(self.alpha_t).tolist())
        return d


@dataclass
class DecodeResult:
    x_hat: np.ndarray
    objective: float
    residual_norm_p: float
    outer_iterations_run: int
    inner_iteration_stats: dict
    converged: bool
    last_change: float = math.nan
    metadata: dict = field(default_factory=dict)

    def summary(self):
        """JSON-friendly dict without the signal itself."""
        d = {k: v for k, v in asdict(self).items() if k != "x_hat"}
        return d


def _regularizer_prox(cfg, op):
    gamma = cfg.gamma
    if cfg.regularizer == "l1":
        return lambda z: soft_threshold(np.real(z), gamma), lambda x: float(np.abs(x).sum())
    grid = getattr(op, "grid", None)
    if grid is None or len(grid) != 2:
        raise ValueError("TV decoding needs an operator on a 2-D grid")

    def prox(z):
        img = np.real(z).reshape(grid)
        return prox_tv(img, gamma, tol=cfg.tv_tol, max_iter=cfg.tv_max_iter).reshape(-1)

    return prox, lambda x: tv_norm(np.reshape(x, grid))


def decode(op, y_q, cfg, bounds=None, x0=None):
    """Run the Douglas-Rachford decoder described by ``cfg``.

    Parameters
    ----------
    op : LinearOperator
    y_q : ndarray, shape (m,)
        Quantized measurements.
    cfg : DecoderConfig
    bounds : FrameBounds, optional
        Frame bounds of ``op``; estimated when omitted.
    x0 : ndarray, optional
        Starting point; defaults to ``Phi^* y_q / c2``.

    Returns
    -------
    DecodeResult
    """
    y_q = np.asarray(y_q, dtype=np.float64)
    tube = TubeSpec(op, y_q, cfg.epsilon, cfg.p)
    if bounds is None:
        bounds = estimate_frame_bounds(op)
    proj = TubeProjector(tube, bounds, inner_tol=cfg.inner_tol, inner_cap=cfg.inner_cap,
                         accelerated=cfg.inner_accelerated)
    prox_reg, objective = _regularizer_prox(cfg, op)

    x = op.adjoint(y_q) / bounds.c2 if x0 is None else np.asarray(x0)
    change = math.nan
    t = 0
    for t in range(cfg.outer_iters):
        a = cfg.relaxation(t)
        try:
            r = 2.0 * proj(x) - x
        except ConvergenceError as exc:
            raise ConvergenceError(f"DR iteration {t}: {exc}", exc.iterations,
                                   exc.residual) from exc
        x_new = (1.0 - 0.5 * a) * x + 0.5 * a * (2.0 * prox_reg(r) - r)
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"non-finite Douglas-Rachford iterate at step {t}")
        change = float(np.linalg.norm(x_new - x))
        scale = max(1.0, float(np.linalg.norm(x)))
        x = x_new
        if cfg.early_exit_tol is not None and change <= cfg.early_exit_tol * scale:
            break

    x_hat = np.real(proj(x)).astype(np.float64)
    residual = tube.residual_norm(x_hat)
    target = cfg.epsilon * (1.0 + 1e-5) + 1e-9 * lp_norm(y_q, cfg.p)
    iters = np.asarray(proj.iterations)
    stats = {"calls": int(iters.size), "total": int(iters.sum()),
             "max": int(iters.max()) if iters.size else 0,
             "mean": float(iters.mean()) if iters.size else 0.0}
    return DecodeResult(
        x_hat=x_hat,
        objective=objective(x_hat),
        residual_norm_p=residual,
        outer_iterations_run=t + 1,
        inner_iteration_stats=stats,
        converged=bool(np.all(np.isfinite(x_hat)) and residual <= target),
        last_change=change,
        metadata={"gamma": cfg.gamma, "init": "adjoint/c2" if x0 is None else "given",
                  "c1": bounds.c1, "c2": bounds.c2, "p": cfg.p,
                  "epsilon": cfg.epsilon, "regularizer": cfg.regularizer},
    )


def decode_bpdq(op, y_q, cfg, bounds=None):
    """BPDQ_p: ``min ||u||_1 s.t. ||y_q - Phi u||_p <= epsilon``."""
    if cfg.regularizer != "l1":
        raise ValueError("decode_bpdq uses the l1 regularizer; see decode_tv")
    return decode(op, y_q, cfg, bounds)


def decode_bpdn(op, y_q, cfg, bounds=None):
    """BPDN, the ``p = 2`` member of the BPDQ family."""
    if cfg.p != 2:
        raise ValueError(f"BPDN requires p = 2, got {cfg.p}")
    return decode_bpdq(op, y_q, cfg, bounds)


def decode_tv(op, y_q, cfg, bounds=None):
    """TV-regularized BPDQ_p on a square image grid.

    Restricted-Fourier operators are tight frames, so the tube projection is
    closed form and no inner iteration runs.
    """
    if cfg.regularizer != "tv":
        raise ValueError("decode_tv needs cfg.regularizer == 'tv'")
    return decode(op, y_q, cfg, bounds)
