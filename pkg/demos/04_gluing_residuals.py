# The glued model M_alpha in the two-plane picture: how the Lagrangian angle
# and the weighted residual shrink with alpha.
from slaglab.gluing import default_pair, glue_sweep, interpolate, lagrangian_defect, residual_report, schedule

sc = schedule(0.1)
print("alpha=0.1: delta", sc.delta, "eps", sc.eps, "largest admissible alpha", sc.max_alpha)

model = interpolate(default_pair(3), sched=sc)
print(len(model.samples), "samples; sup |omega| on the frames:", lagrangian_defect(model))
rep = residual_report(model, holder=False)
print("sup|sin theta|", rep["sup_sin"], " sup|H|", rep["sup_H"], " outside the cut ball", rep["sup_sin_outside"])

rows, slopes = glue_sweep([0.2, 0.1, 0.05, 0.025])
for r in rows:
    print(f"alpha {r['alpha']:<6} sup|sin| {r['sup_sin']:.3e}  sup|1-cos| {r['sup_1mcos']:.3e}"
          f"  weighted {r['weighted_rho2_sin']:.3e}")
print("log-log slopes:", {k: round(v, 3) for k, v in slopes.items()})
