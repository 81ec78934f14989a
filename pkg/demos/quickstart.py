"""Recover a quantized sparse signal with BPDN and with BPDQ_10, then compare."""

import numpy as np

from bpdq import DecoderConfig, decode_bpdn, decode_bpdq, epsilon_2_variance, epsilon_p, quantize
from bpdq.experiments import gen_sparse_signal, metrics
from bpdq.sensing import make_sgr

N, K, m = 512, 8, 320
op = make_sgr(m, N, seed=1)
x = gen_sparse_signal(N, K, seed=1)
z = op.apply(x)
alpha = np.abs(z).max() / 40          # bin width: 40 bins across the largest measurement
y = quantize(z, alpha)

# gamma well below the signal scale keeps Douglas-Rachford fast; early exit stops at the fixed point
fast = dict(gamma=0.01, outer_iters=5000, early_exit_tol=1e-8, inner_accelerated=True)
runs = {
    "BPDN    ": decode_bpdn(op, y, DecoderConfig(p=2, epsilon=epsilon_2_variance(m, alpha), **fast)),
    "BPDQ_10 ": decode_bpdq(op, y, DecoderConfig(p=10, epsilon=epsilon_p(10, m, alpha).epsilon,
                                                 **fast)),
}
for name, res in runs.items():
    rep = metrics(x, res.x_hat, op, y, alpha)
    print(f"{name} SNR {rep.snr_db:6.2f} dB   QC fraction {rep.qc_fraction:.3f}   "
          f"DR steps {res.outer_iterations_run}   converged {res.converged}")
