"""Dequantizing decoders for compressed sensing.

BPDQ_p decoders recover sparse (or TV-compressible) signals from uniformly
quantized linear measurements by constraining the l_p norm of the residual,
solved with Douglas-Rachford splitting.
"""

from .errors import ConvergenceError, GenerationError, NumericalError
from .experiments import (ExperimentSpec, TrialReport, gen_angiogram, gen_sparse_signal,
                          metrics, run_experiment_1d, run_experiment_tv)
from .prox import (TubeProjector, TubeSpec, duality_map, lp_norm, project_ball,
                   prox_affine_composition, prox_tv, soft_threshold)
from .quantize import NoiseBound, QuantizerSpec, epsilon_2_variance, epsilon_p, quantize, zeta_p
from .sensing import (FrameBounds, LinearOperator, estimate_frame_bounds,
                      make_partial_fourier, make_sgr, random_omega)
from .solver import DecodeResult, DecoderConfig, decode_bpdn, decode_bpdq, decode_tv
from .theory import (OptimalityConstants, RipProfile, c_p, compressibility_error,
                     estimate_rip_radius, mu_p2_bounds, noise_error_bound_check, nu_p,
                     theorem1_constants, theorem2_constants, theta_bound)

__version__ = "0.1.0"
