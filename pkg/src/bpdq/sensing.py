"""Sensing operators: dense Gaussian matrices and restricted Fourier frames.

Two concrete operators share the :class:`LinearOperator` interface
(``apply``, ``adjoint``, ``gram``, ``shape``):

* :class:`DenseGaussian` -- an ``m x N`` matrix with iid N(0, 1) entries,
  drawn from the portable seeded stream in row-major order.
* :class:`PartialFourier` -- real and imaginary parts of the unitary DFT
  coefficients indexed by ``omega``.  The operator is defined on complex
  signals (``C^N`` viewed as ``R^{2N}``), which makes its rows orthonormal,
  ``apply(adjoint(v)) == v``.  Real signals are simply a subspace; decoders
  restrict their estimates to it.

Inner products on the signal space are ``Re(vdot(u, w))``.
"""

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._rng import ALGORITHM, PortableRNG

__all__ = [
    "FrameBounds",
    "LinearOperator",
    "DenseMatrix",
    "DenseGaussian",
    "PartialFourier",
    "make_sgr",
    "make_partial_fourier",
    "random_omega",
    "estimate_frame_bounds",
    "operator_to_json",
    "operator_from_json",
]


@dataclass(frozen=True)
class FrameBounds:
    """Bounds ``c1 I <= Phi Phi^* <= c2 I`` on measurement space."""

    c1: float
    c2: float

    def __post_init__(self):
        if not (0.0 <= self.c1 <= self.c2 < math.inf):
            raise ValueError(f"invalid frame bounds c1={self.c1}, c2={self.c2}")

    @property
    def tight(self):
        return self.c1 == self.c2


class LinearOperator:
    """Base class for sensing maps ``R^N (or C^N) -> R^m``."""

    kind = None
    is_complex = False

    def __init__(self, m, N, seed):
        self.m = int(m)
        self.N = int(N)
        self.seed = int(seed)

    @property
    def shape(self):
        return (self.m, self.N)

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, v):
        raise NotImplementedError

    def gram(self, v):
        """``Phi Phi^* v`` on measurement space."""
        return self.apply(self.adjoint(v))

    def __matmul__(self, x):
        return self.apply(x)

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "N": self.N, "seed": self.seed,
                "rng": ALGORITHM}

    def __repr__(self):
        return f"{type(self).__name__}(m={self.m}, N={self.N}, seed={self.seed})"


class DenseMatrix(LinearOperator):
    """Operator given by an explicit real matrix."""

    kind = "dense"

    def __init__(self, matrix, seed=0):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        super().__init__(matrix.shape[0], matrix.shape[1], seed)
        matrix.setflags(write=False)
        self.matrix = matrix

    def apply(self, x):
        return self.matrix @ x

    def adjoint(self, v):
        return self.matrix.T @ v

    @cached_property
    def gram_matrix(self):
        return self.matrix @ self.matrix.T

    def gram(self, v):
        return self.gram_matrix @ v

    def to_dict(self):
        d = super().to_dict()
        if type(self) is DenseMatrix:
            d["matrix"] = self.matrix.tolist()
        return d


class DenseGaussian(DenseMatrix):
    """SGR matrix operator.  Built by :func:`make_sgr`."""

    kind = "dense-gaussian"


class PartialFourier(LinearOperator):
    """Restricted unitary DFT, measuring ``(Re F_omega x, Im F_omega x)``.

    ``omega`` holds 0-based indices into the row-major flattened spectrum of
    shape ``grid``; ``m = 2 * len(omega)``.
    """

    kind = "restricted-fourier"
    is_complex = True

    def __init__(self, grid, omega, seed):
        omega = np.asarray(omega, dtype=np.int64)
        N = int(np.prod(grid))
        super().__init__(2 * omega.size, N, seed)
        self.grid = tuple(int(g) for g in grid)
        omega.setflags(write=False)
        self.omega = omega

    def _fft(self, x):
        x = np.asarray(x).reshape(self.grid)
        return np.fft.fftn(x, norm="ortho").reshape(-1)

    def apply(self, x):
        coef = self._fft(x)[self.omega]
        return np.concatenate([coef.real, coef.imag])

    def adjoint(self, v):
        v = np.asarray(v, dtype=np.float64)
        k = self.omega.size
        spec = np.zeros(self.N, dtype=np.complex128)
        spec[self.omega] = v[:k] + 1j * v[k:]
        return np.fft.ifftn(spec.reshape(self.grid), norm="ortho").reshape(-1)

    def gram(self, v):
        return np.array(v, dtype=np.float64)

    def to_dict(self):
        d = super().to_dict()
        d["grid"] = list(self.grid)
        d["omega"] = self.omega.tolist()
        return d


def make_sgr(m, N, seed):
    """Standard Gaussian Random ``m x N`` matrix from the portable stream.

    Entries are filled row by row from consecutive Box-Muller normals, so the
    same seed yields the same matrix bit for bit.

    >>> make_sgr(3, 4, 7).matrix.shape
    (3, 4)
    """
    m, N = int(m), int(N)
    if m < 1 or N < 1:
        raise ValueError(f"matrix dimensions must be positive, got m={m}, N={N}")
    rng = PortableRNG(seed)
    return DenseGaussian(rng.standard_normal(m * N).reshape(m, N), seed)


def _default_grid(N):
    side = math.isqrt(N)
    return (side, side) if side * side == N else (N,)


def random_omega(N, count, seed, include_dc=False):
    """Sorted set of ``count`` distinct frequency indices drawn uniformly.

    With ``include_dc`` the zero frequency (index 0) is always kept and the
    other ``count - 1`` indices are drawn from ``1 .. N-1``.
    """
    if include_dc:
        if count < 1:
            raise ValueError("include_dc needs count >= 1")
        rest = PortableRNG(seed).choice(N - 1, count - 1) + 1
        return np.sort(np.concatenate([[0], rest]))
    return np.sort(PortableRNG(seed).choice(N, count))


def make_partial_fourier(N, omega, seed=0, grid=None):
    """Restricted-Fourier operator on signals of length ``N``.

    A perfect-square ``N`` is treated as a square image (2-D DFT) unless
    ``grid`` says otherwise.  ``omega`` is validated and sorted.
    """
    N = int(N)
    grid = _default_grid(N) if grid is None else tuple(grid)
    if N < 1 or int(np.prod(grid)) != N:
        raise ValueError(f"grid {grid} does not match N={N}")
    omega = np.asarray(omega)
    if omega.ndim != 1 or omega.size < 1:
        raise ValueError("omega must be a non-empty 1-D index set")
    if not np.issubdtype(omega.dtype, np.integer):
        raise ValueError("omega must contain integers")
    if omega.min() < 0 or omega.max() >= N:
        raise ValueError(f"omega indices must lie in [0, {N})")
    omega = np.sort(omega)
    if np.any(np.diff(omega) == 0):
        raise ValueError("omega contains duplicate indices")
    return PartialFourier(grid, omega, seed)


def estimate_frame_bounds(op, iters=50, seed=0):
    """Frame bounds of ``op`` for the dual forward-backward iteration.

    Restricted-Fourier operators are tight with ``c1 = c2 = 1``.  Otherwise
    ``c2`` is a power-iteration estimate of ``||Phi||^2`` inflated by 1% and
    ``c1 = 0``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if isinstance(op, PartialFourier):
        return FrameBounds(1.0, 1.0)
    v = PortableRNG(seed).standard_normal(op.m)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.gram(v)
        lam = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    return FrameBounds(0.0, 1.01 * lam)


def operator_to_json(op):
    return json.dumps(op.to_dict(), sort_keys=True)


def operator_from_json(text):
    """Rebuild an operator from :func:`operator_to_json` output (or a dict)."""
    d = json.loads(text) if isinstance(text, str) else dict(text)
    kind = d.get("kind")
    if kind == DenseMatrix.kind:
        return DenseMatrix(np.asarray(d["matrix"], dtype=np.float64), d.get("seed", 0))
    if kind == DenseGaussian.kind:
        return make_sgr(d["m"], d["N"], d["seed"])
    if kind == PartialFourier.kind:
        N = int(d["N"])
        if "omega" in d:
            omega = d["omega"]
        else:
            omega = random_omega(N, int(d["m"]) // 2, d["seed"])
        return make_partial_fourier(N, omega, d["seed"], grid=d.get("grid"))
    raise ValueError(f"unknown operator kind {kind!r}")
