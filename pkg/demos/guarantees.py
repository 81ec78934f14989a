"""Print the recovery constants and noise bounds for a few settings."""

from bpdq import epsilon_p
from bpdq.sensing import make_sgr
from bpdq.theory import (RipProfile, estimate_rip_profile, mu_p2_bounds, noise_error_bound_check,
                         theorem1_constants, theorem2_constants, theta_bound)

print("BPDN constants at delta_2K = 0.2: A = %.4f, B = %.4f" % theorem1_constants(0.2))

profile = RipProfile.assumed(K=4, delta_K=0.05, delta_2K=0.1, delta_3K=0.15)
for p in (2, 3, 4, 6):
    k = theorem2_constants(p, profile)
    print(f"p={p}: C_p={k.C_p:.3f} A_p={k.A_p:.3f} B_p={k.B_p:.3f} valid={k.valid}")

for p in (2, 4, 10):
    lo, hi = mu_p2_bounds(p, 640)
    print(f"p={p}: epsilon_p(m=640, alpha=1) = {epsilon_p(p, 640, 1.0).epsilon:.3f}, "
          f"E||xi||_p in [{lo:.2f}, {hi:.2f}]")

print("noise term check p=4, m=1024:", noise_error_bound_check(4, 1024, 1.0).to_dict())
print("measurements needed (up to the constant c), p=2 vs p=4:",
      theta_bound(2, 16, 1024, 0.5, 0.5), theta_bound(4, 16, 1024, 0.5, 0.5))

est = estimate_rip_profile(make_sgr(640, 1024, 0), K=4, p=4, trials=300)
print("Monte-Carlo RIP_4,2 radii (lower bounds):", est.to_dict()["deltas"])
