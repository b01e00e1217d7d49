# Lawlor necks: angles from the neck parameters, the inverse map by Newton,
# and the special Lagrangian residual of sampled necks.
import numpy as np

from slaglab.lawlor import (NeckParameters, angles_from_lambda, distance_to_asymptotic_planes, lambda_from_angles,
                            sample_neck, slag_residual, sphere_grid)

lam = np.array([1.0, 2.0, 4.0])
theta = angles_from_lambda(lam)
print("theta(1, 2, 4) =", theta, " sum - pi =", theta.sum() - np.pi)

target = np.array([0.6, 1.0, np.pi - 1.6])
lam_star = lambda_from_angles(target)
print("lambda for", target, "=", lam_star, " residual", np.abs(angles_from_lambda(lam_star) - target).max())

neck = NeckParameters.from_angles(target)
x = sphere_grid(3, 200)
smp = sample_neck(neck, np.linspace(-20, 20, 81), x)
print("sup |omega|, sup |Im Omega|, sup |phase| =", slag_residual(smp))

# far out, the neck approaches the two asymptotic planes like 1/s
for S in (10, 100, 1000):
    pts = sample_neck(neck, [-S, S], x).points
    print(f"|s| = {S:5d}: distance to the planes {distance_to_asymptotic_planes(neck, pts).max():.2e}")
