# Spectrum of the glued torus pair on a coarse grid: the first eigenvalue
# collapses with alpha while the second stays near the torus value.
import numpy as np

from slaglab import spectral
from slaglab.gluing import interpolate, schedule

M1, M2 = spectral.reference_pair(3)
print("flat unit torus, lambda1 / 4 pi^2 =", spectral.eigensolve(spectral.flat_torus_grid([1, 1, 1], 12), 1)[0][0]
      / (4 * np.pi**2))

for alpha in (0.2, 0.1, 0.05):
    sc = schedule(alpha)
    model = interpolate((M1.plane, M2.plane), sched=sc)
    m = spectral.discretize(M1, M2, model, resolution=10)
    lam, vecs = spectral.eigensolve(m, 2)
    rep = spectral.sbar_report(m, vecs[:, 0], sc.delta, lam)
    f = spectral.firsteval_testfunction(m, sc.delta)
    print(f"alpha {alpha}: {len(m)} vertices, lambda = {lam.round(5)}, Rayleigh bound "
          f"{spectral.rayleigh_bound(m, f):.4f}, ||S - phi Sbar|| = {rep.s_error:.4f}")

# without the neck the two tori separate and the first eigenvalue jumps back up
m0 = spectral.discretize(M1, M2, model, resolution=10, glue=False)
print("unglued:", m0.components(), "components, lambda =", spectral.eigensolve(m0, 2)[0].round(3))
