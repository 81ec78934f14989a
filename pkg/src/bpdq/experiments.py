"""Reproduction harness: 1-D sparse sweeps and TV angiogram experiments.

Every random object of a trial is seeded from the master seed and the trial
coordinates through :func:`~bpdq._rng.derive_seed`.  The instance (signal,
matrix, quantized measurements) depends on ``(m/K index, trial)`` only, so all
moments ``p`` of a cell decode the same instance and can be compared pairwise.

Tables are written with a fixed float format and contain no timings, so two
runs with the same master seed produce byte-identical CSV files.
"""

import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy
from scipy import stats

from ._rng import ALGORITHM, PortableRNG, derive_seed
from .errors import ConvergenceError, GenerationError, NumericalError
from .quantize import DEFAULT_KAPPA, epsilon_p, quantize
from .sensing import make_partial_fourier, make_sgr, random_omega
from .solver import DecoderConfig, decode_bpdq, decode_tv

__all__ = [
    "SNR_CAP_DB",
    "HIST_EDGES",
    "gen_sparse_signal",
    "gen_angiogram",
    "snr_db",
    "TrialReport",
    "metrics",
    "ExperimentSpec",
    "ExperimentResult",
    "run_experiment_1d",
    "run_experiment_tv",
    "paired_gain",
]

SNR_CAP_DB = 300.0
HIST_EDGES = np.linspace(-1.025, 1.025, 42)
FLOAT_FMT = "%.10g"

DECODER_1D = {"gamma": 0.01, "early_exit_tol": 1e-8, "inner_accelerated": True}
DECODER_TV = {"gamma": 1.0, "early_exit_tol": 1e-8}


def gen_sparse_signal(N, K, seed):
    """``K``-sparse vector of length ``N``: uniform support, N(0, 1) values.

    >>> int(np.count_nonzero(gen_sparse_signal(64, 5, 3)))
    5
    """
    N, K = int(N), int(K)
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    rng = PortableRNG(seed)
    support = rng.choice(N, K)
    values = rng.standard_normal(K)
    while np.any(values == 0.0):
        zero = values == 0.0
        values[zero] = rng.standard_normal(int(zero.sum()))
    x = np.zeros(N)
    x[support] = values
    return x


def _ellipse_mask(side, cy, cx, a, b, theta, grow=0.0):
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(theta), math.sin(theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / (a + grow)) ** 2 + (v / (b + grow)) ** 2 <= 1.0


def gen_angiogram(side, n_ellipses=10, seed=0, intensity=1.0, max_attempts=10_000):
    """Binary image of ``n_ellipses`` disjoint random ellipses, scaled by ``intensity``.

    Centers are uniform on the image, semi-axes uniform in ``[3, side/6]`` and
    orientations uniform.  A candidate is rejected when its ellipse, grown by
    one pixel, touches an ellipse already placed, so the masks never share a
    pixel.  Raises :class:`GenerationError` after ``max_attempts`` candidates.
    """
    side = int(side)
    if side < 32:
        raise ValueError(f"side must be >= 32, got {side}")
    if n_ellipses < 0:
        raise ValueError("n_ellipses must be >= 0")
    rng = PortableRNG(seed)
    occupied = np.zeros((side, side), dtype=bool)
    placed = 0
    for _ in range(max_attempts):
        if placed == n_ellipses:
            break
        cy, cx, a, b, t = rng.uniform(5)
        cy, cx = cy * side, cx * side
        lo, hi = 3.0, side / 6.0
        a, b = lo + a * (hi - lo), lo + b * (hi - lo)
        theta = t * math.pi
        if np.any(occupied & _ellipse_mask(side, cy, cx, a, b, theta, grow=1.0)):
            continue
        mask = _ellipse_mask(side, cy, cx, a, b, theta)
        if not mask.any():
            continue
        occupied |= mask
        placed += 1
    if placed < n_ellipses:
        raise GenerationError(f"placed {placed} of {n_ellipses} ellipses in "
                              f"{max_attempts} attempts; try another seed")
    return occupied.astype(np.float64) * float(intensity)


def snr_db(x, x_hat):
    """``20 log10(||x|| / ||x - x_hat||)``; ``inf`` for an exact match."""
    err = float(np.linalg.norm(np.ravel(x) - np.ravel(x_hat)))
    ref = float(np.linalg.norm(x))
    if err == 0.0:
        return math.inf
    if ref == 0.0:
        return -math.inf
    return 20.0 * math.log10(ref / err)


@dataclass
class TrialReport:
    """Quality of one reconstruction.

    ``residual_histogram`` counts ``(Phi x_hat - y_q)_i / alpha`` in the 41
    bins of :data:`HIST_EDGES`; values outside are counted in ``hist_outside``.
    ``inside_half`` counts normalized residuals in ``[-1/2, 1/2]``.
    """

    snr_db: float
    qc_fraction: float
    residual_histogram: np.ndarray
    inside_half: int
    hist_outside: int
    m: int
    iterations: dict = field(default_factory=dict)
    wall_time: float = math.nan


def metrics(x, x_hat, op, y_q, alpha):
    """SNR, quantization-consistency fraction and residual histogram."""
    x = np.ravel(np.asarray(x, dtype=np.float64))
    x_hat = np.ravel(np.asarray(x_hat, dtype=np.float64))
    if x.shape != x_hat.shape or x.size != op.N:
        raise ValueError(f"shape mismatch: x {x.shape}, x_hat {x_hat.shape}, N={op.N}")
    y_q = np.asarray(y_q, dtype=np.float64)
    res = op.apply(x_hat) - y_q
    qc = float(np.count_nonzero(np.abs(res) < 0.5 * alpha)) / y_q.size
    r = res / alpha
    hist, _ = np.histogram(r, bins=HIST_EDGES)
    outside = int(r.size - hist.sum())
    inside = int(np.count_nonzero(np.abs(r) <= 0.5))
    return TrialReport(snr_db(x, x_hat), qc, hist, inside, outside, int(y_q.size))


@dataclass
class ExperimentSpec:
    """Parameters of a sweep; see :meth:`from_dict` for the JSON layout.

    ``alpha_rule`` is ``{"fraction-of-max": d}`` (bin width ``||Phi x||_inf / d``)
    or ``{"fixed": a}``; the default is ``{"fraction-of-max": 40}`` for 1-D
    runs and ``{"fixed": 50}`` for TV runs.  ``decoder`` holds :class:`DecoderConfig` overrides.
    TV runs use ``side``, ``rho``, ``n_ellipses`` and ``max_levels``: the
    image intensity is set so that ``max |Phi x| = 0.999 max_levels
    calibration_alpha`` (``calibration_alpha`` defaults to the bin width).
    ``include_dc`` keeps the zero frequency among the sampled locations;
    without it TV decoding cannot pin down the image mean.
    ``failure_budget`` is the fraction of failed trials tolerated before the
    CLI reports an error.
    """

    kind: str = "1d"
    N: int = 1024
    K: int = 16
    m_over_K: list = field(default_factory=lambda: [40])
    p_list: list = field(default_factory=lambda: [2, 3, 4, 6, 8, 10])
    trials: int = 25
    alpha_rule: dict = None
    kappa: float = DEFAULT_KAPPA
    seed: int = 0
    decoder: dict = field(default_factory=dict)
    side: int = 64
    rho: float = 0.125
    n_ellipses: int = 10
    max_levels: float = 6.0
    calibration_alpha: float = None
    include_dc: bool = True
    failure_budget: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in ("1d", "tv"):
            raise ValueError(f"kind must be '1d' or 'tv', got {self.kind!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        self.p_list = [float(p) for p in self.p_list]
        if not self.p_list or any(not p >= 2 for p in self.p_list):
            raise ValueError(f"all p must be >= 2, got {self.p_list}")
        if self.alpha_rule is None:
            self.alpha_rule = ({"fraction-of-max": 40.0} if self.kind == "1d"
                               else {"fixed": 50.0})
        if len(self.alpha_rule) != 1:
            raise ValueError("alpha_rule needs exactly one of 'fraction-of-max', 'fixed'")
        (rule, value), = self.alpha_rule.items()
        if rule not in ("fraction-of-max", "fixed") or not value > 0:
            raise ValueError(f"invalid alpha_rule {self.alpha_rule}")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not 0 <= self.failure_budget <= 1:
            raise ValueError("failure_budget must lie in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.kind == "1d":
            if not 1 <= self.K <= self.N:
                raise ValueError(f"need 1 <= K <= N, got K={self.K}, N={self.N}")
            if not self.m_over_K or any(r * self.K < 1 for r in self.m_over_K):
                raise ValueError("m_over_K must be a non-empty list of positive factors")
        else:
            if self.side < 32 or self.side & (self.side - 1):
                raise ValueError(f"side must be a power of two >= 32, got {self.side}")
            m = self.rho * self.side**2
            if "fixed" not in self.alpha_rule:
                raise ValueError("TV experiments need a fixed bin width")
            if not 0 < self.rho <= 1 or m != round(m) or round(m) % 2:
                raise ValueError(f"rho * side^2 must be a positive even integer, got {m}")
        # fail early on bad decoder overrides
        self.decoder_config(2.0, 0.0)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)

    def decoder_config(self, p, epsilon):
        base = dict(DECODER_1D if self.kind == "1d" else DECODER_TV)
        base.update(self.decoder)
        base.update(p=float(p), epsilon=float(epsilon))
        if self.kind == "tv":
            base["regularizer"] = "tv"
        try:
            return DecoderConfig(**base)
        except TypeError as exc:
            raise ValueError(f"bad decoder override: {exc}") from exc

    def bin_width(self, measurements):
        (rule, value), = self.alpha_rule.items()
        if rule == "fixed":
            return float(value)
        return float(np.abs(measurements).max()) / float(value)


@dataclass
class ExperimentResult:
    """Per-trial records plus the aggregated cell table.

    ``trials`` rows hold the instance coordinates, the outcome and the
    :class:`TrialReport`; failed trials keep ``report=None`` and an error
    message.
    """

    spec: ExperimentSpec
    trials: list
    elapsed: float = math.nan

    @property
    def failed(self):
        return sum(1 for t in self.trials if t["report"] is None)

    def failure_fraction(self):
        return self.failed / max(1, len(self.trials))

    def group_key(self):
        return ("m_over_K", "p") if self.spec.kind == "1d" else ("p",)

    def _groups(self):
        keys = self.group_key()
        out = {}
        for t in self.trials:
            out.setdefault(tuple(t[k] for k in keys), []).append(t)
        return out

    def snr(self, p, m_over_K=None):
        """SNRs (dB) of successful trials at moment ``p``, ordered by trial index."""
        rows = [t for t in self.trials if t["p"] == float(p) and t["report"] is not None
                and (m_over_K is None or t.get("m_over_K") == m_over_K)]
        return np.array([t["report"].snr_db for t in sorted(rows, key=lambda r: r["trial"])])

    def cells(self):
        """Aggregated rows; std uses the unbiased (n - 1) estimator."""
        rows = []
        for key, group in self._groups().items():
            ok = [t for t in group if t["report"] is not None]
            snr = np.array([min(t["report"].snr_db, SNR_CAP_DB) for t in ok])
            qc = np.array([t["report"].qc_fraction for t in ok])
            inside = sum(t["report"].inside_half for t in ok)
            total = sum(t["report"].m for t in ok)
            row = dict(zip(self.group_key(), key))
            row.update(
                trials=len(group), failed=len(group) - len(ok),
                unconverged=sum(1 for t in ok if not t["converged"]),
                snr_mean_db=_mean(snr), snr_std_db=_std(snr),
                qc_mean=_mean(qc), qc_std=_std(qc),
                inside_half=inside / total if total else math.nan,
                outer_iters_mean=_mean([t["outer_iterations"] for t in ok]),
            )
            if self.spec.kind == "tv":
                gain = np.array([t["gain_db"] for t in ok])
                row.update(gain_mean_db=_mean(gain), gain_std_db=_std(gain))
            rows.append(row)
        return rows

    def histograms(self):
        """Pooled residual histograms, one row per (group, bin)."""
        rows = []
        for key, group in self._groups().items():
            counts = np.zeros(HIST_EDGES.size - 1, dtype=np.int64)
            for t in group:
                if t["report"] is not None:
                    counts += t["report"].residual_histogram
            for i, c in enumerate(counts):
                row = dict(zip(self.group_key(), key))
                row.update(bin_lo=HIST_EDGES[i], bin_hi=HIST_EDGES[i + 1], count=int(c))
                rows.append(row)
        return rows

    def trial_rows(self):
        rows = []
        for t in self.trials:
            rep = t["report"]
            row = {k: t[k] for k in (*self.group_key(), "trial", "seed")}
            row.update(
                snr_db=min(rep.snr_db, SNR_CAP_DB) if rep else math.nan,
                qc_fraction=rep.qc_fraction if rep else math.nan,
                converged=int(bool(t["converged"])), failed=int(rep is None),
                outer_iterations=t["outer_iterations"], inner_total=t["inner_total"],
            )
            if self.spec.kind == "tv":
                row["gain_db"] = t.get("gain_db", math.nan)
            rows.append(row)
        return rows

    def cells_csv(self):
        return _to_csv(self.cells(), ["# std columns use the unbiased (n-1) estimator",
                                      f"# snr values are capped at {SNR_CAP_DB:g} dB"])

    def histograms_csv(self):
        return _to_csv(self.histograms(), ["# normalized residuals (Phi x_hat - y_q) / alpha"])

    def trials_csv(self):
        return _to_csv(self.trial_rows(), [f"# snr values are capped at {SNR_CAP_DB:g} dB"])

    def manifest(self):
        """Run description for the JSON manifest (the only place with timings)."""
        return {
            "experiment": self.spec.kind,
            "config": self.spec.to_dict(),
            "decoder": self.spec.decoder_config(2.0, 0.0).to_dict(),
            "master_seed": self.spec.seed,
            "rng": ALGORITHM,
            "seed_derivation": "seed XOR blake2b(repr(keys)); instance keys exclude p",
            "randomized_per_trial": (["signal", "matrix"] if self.spec.kind == "1d"
                                     else ["image", "omega"]),
            "trials": len(self.trials),
            "failed": self.failed,
            "unconverged": sum(1 for t in self.trials if not t["converged"]),
            "versions": {"numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "elapsed_seconds": self.elapsed,
        }


def _mean(v):
    v = np.asarray(v, dtype=np.float64)
    return float(v.mean()) if v.size else math.nan


def _std(v):
    v = np.asarray(v, dtype=np.float64)
    return float(v.std(ddof=1)) if v.size > 1 else math.nan


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def _to_csv(rows, header_lines):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    if rows:
        cols = list(rows[0])
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    return buf.getvalue()


def _decode_one(decoder, op, y, x, alpha, cfg):
    """Decode and score; decode failures become a failed record, not an exception."""
    t0 = time.perf_counter()
    try:
        res = decoder(op, y, cfg)
    except (ConvergenceError, NumericalError) as exc:
        return {"report": None, "error": f"{type(exc).__name__}: {exc}", "converged": False,
                "outer_iterations": 0, "inner_total": 0}, None
    rep = metrics(x, res.x_hat, op, y, alpha)
    rep.iterations = {"outer": res.outer_iterations_run, **res.inner_iteration_stats}
    rep.wall_time = time.perf_counter() - t0
    return {"report": rep, "error": "", "converged": res.converged,
            "outer_iterations": res.outer_iterations_run,
            "inner_total": res.inner_iteration_stats["total"]}, res


def _trial_1d(spec, k, ratio, trial):
    seed = derive_seed(spec.seed, "1d", k, trial)
    m = int(round(ratio * spec.K))
    x = gen_sparse_signal(spec.N, spec.K, derive_seed(seed, "signal"))
    op = make_sgr(m, spec.N, derive_seed(seed, "matrix"))
    z = op.apply(x)
    alpha = spec.bin_width(z)
    y = quantize(z, alpha)
    out = []
    for p in spec.p_list:
        cfg = spec.decoder_config(p, epsilon_p(p, m, alpha, spec.kappa).epsilon)
        rec, _ = _decode_one(decode_bpdq, op, y, x, alpha, cfg)
        rec.update(m_over_K=ratio, p=p, trial=trial, seed=seed, alpha=alpha, m=m)
        out.append(rec)
    return out


def _trial_tv(spec, trial):
    seed = derive_seed(spec.seed, "tv", trial)
    side = spec.side
    N = side * side
    m = int(round(spec.rho * N))
    shape = gen_angiogram(side, spec.n_ellipses, derive_seed(seed, "image"))
    op = make_partial_fourier(N, random_omega(N, m // 2, derive_seed(seed, "omega"),
                                                 include_dc=spec.include_dc), seed)
    peak = float(np.abs(op.apply(shape.ravel())).max())
    alpha = spec.bin_width(np.array([1.0]))
    ref_alpha = alpha if spec.calibration_alpha is None else float(spec.calibration_alpha)
    x = shape.ravel() * (0.999 * spec.max_levels * ref_alpha / peak)
    y = quantize(op.apply(x), alpha)
    out = []
    for p in spec.p_list:
        cfg = spec.decoder_config(p, epsilon_p(p, m, alpha, spec.kappa).epsilon)
        rec, _ = _decode_one(decode_tv, op, y, x, alpha, cfg)
        rec.update(p=p, trial=trial, seed=seed, alpha=alpha, m=m)
        out.append(rec)
    base = next((r for r in out if r["p"] == 2.0 and r["report"] is not None), None)
    for r in out:
        ok = base is not None and r["report"] is not None
        r["gain_db"] = (min(r["report"].snr_db, SNR_CAP_DB)
                        - min(base["report"].snr_db, SNR_CAP_DB)) if ok else math.nan
    return out


def _run(spec, fn, jobs):
    t0 = time.perf_counter()
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(fn, *zip(*jobs)))
    else:
        chunks = [fn(*job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]
    return ExperimentResult(spec, records, time.perf_counter() - t0)


def run_experiment_1d(spec):
    """Sparse-signal sweep over ``m/K`` and ``p``.

    Per trial: SGR matrix, Gaussian ``K``-sparse signal, bin width from
    ``spec.alpha_rule``, radius ``epsilon_p`` with ``spec.kappa``, then one
    BPDQ_p decode per moment.
    """
    if spec.kind != "1d":
        raise ValueError("run_experiment_1d needs spec.kind == '1d'")
    jobs = [(spec, k, ratio, t) for k, ratio in enumerate(spec.m_over_K)
            for t in range(spec.trials)]
    return _run(spec, _trial_1d, jobs)


def run_experiment_tv(spec):
    """Angiogram sweep: TV-regularized BPDQ_p from quantized Fourier samples.

    Each trial draws an image and a frequency set, quantizes ``rho * side^2``
    real measurements and decodes once per moment.  ``gain_db`` is the SNR
    improvement over ``p = 2`` on the same instance.
    """
    if spec.kind != "tv":
        raise ValueError("run_experiment_tv needs spec.kind == 'tv'")
    jobs = [(spec, t) for t in range(spec.trials)]
    return _run(spec, _trial_tv, jobs)


def paired_gain(result, p_hi, p_lo, m_over_K=None):
    """Mean SNR gain of ``p_hi`` over ``p_lo`` and its one-sided paired p-value.

    Only trials where both decodes succeeded enter the comparison.
    """
    def by_trial(p):
        return {t["trial"]: min(t["report"].snr_db, SNR_CAP_DB) for t in result.trials
                if t["p"] == float(p) and t["report"] is not None
                and (m_over_K is None or t.get("m_over_K") == m_over_K)}

    hi, lo = by_trial(p_hi), by_trial(p_lo)
    common = sorted(set(hi) & set(lo))
    diff = np.array([hi[t] - lo[t] for t in common])
    if diff.size < 2:
        return _mean(diff), math.nan
    pvalue = float(stats.ttest_rel([hi[t] for t in common], [lo[t] for t in common],
                                   alternative="greater").pvalue)
    return float(diff.mean()), pvalue
