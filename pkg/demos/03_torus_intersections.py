# Flat special Lagrangian tori in C^3 / Z^6, their intersection points and a
# small search for pairs suitable for gluing.
import numpy as np

from slaglab.torus import (CYTorusStructure, deformation_chi, find_angle_criterion_pairs, intersection_points,
                           make_flat_slag, pair_check, pairing)

T = CYTorusStructure.standard(3)
M1 = make_flat_slag(T, np.eye(3, 6, dtype=int))
M2 = make_flat_slag(T, [[1, 0, 0, 1, 0, 0], [0, 1, 0, 0, 2, 0], [0, 0, 1, 0, 0, 3]])
print("M2 orientation flipped:", M2.flipped, " volume:", M2.volume)

pts = intersection_points(M1, M2)
print(len(pts), "intersection points:")
for p in pts:
    print("  ", np.round(p.coords, 4))
print(pair_check(M1, M2).to_json())
print("pairing of Im chi:", pairing(M1, M2, deformation_chi(3)))

pairs = find_angle_criterion_pairs(T, bound=1)
print(len(pairs), "qualified pairs with entries in [-1, 1]; smallest counts:",
      [rep.count for *_, rep in pairs[:10]])
