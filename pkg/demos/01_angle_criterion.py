# Canonical angles of random special Lagrangian plane pairs.
# In dimension 3 every transverse pair meets the angle criterion; from
# dimension 4 on only a fraction does.
import numpy as np

from slaglab.planes import (angle_criterion, canonical_slag_angles, plane_from_angles, random_slag_plane,
                            slag_phase, x_plane)

rng = np.random.default_rng(0)

# the arctangent plane: arctan 1 + arctan 2 + arctan 3 = pi, so -P(phi) is special Lagrangian
phi = np.arctan([1.0, 2.0, 3.0])
xi = -plane_from_angles(phi)
print("phase of -P(arctan 1, arctan 2, arctan 3):", slag_phase(xi))
ang = canonical_slag_angles(x_plane(3), xi)
print("canonical angles:", ang.sorted, "sign case:", ang.sign_case)

for n in (3, 4, 5):
    hits = [angle_criterion(random_slag_plane(n, rng), random_slag_plane(n, rng)) for _ in range(1000)]
    print(f"n={n}: {np.mean(hits):.3f} of 1000 random pairs meet the criterion")

# a pair in dimension 4 whose canonical angles add up to 3 pi / 2
xi4 = plane_from_angles([-np.pi / 4, -np.pi / 4, np.pi / 4, np.pi / 4])
ang4 = canonical_slag_angles(x_plane(4), xi4)
print("n=4 pair:", ang4.sorted, "sum |phi| / pi =", np.abs(ang4.sorted).sum() / np.pi)
