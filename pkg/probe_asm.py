import time

import numpy as np

from torusmix.rescaled import ConstructionTwoParams, assemble_c2, place_rescaled

t0 = time.time()
par = ConstructionTwoParams()          # desk, n_max=4, grid 512, mixer 256
mix = par.mixer()
print("mixer ready", round(time.time() - t0, 2), "s")

for n in (2, 3):
    pc = place_rescaled(n, mix, par)
    rep = pc.report()
    print(f"--- cube n={n} res={rep['res']} stride={rep['stride']}")
    for k in ("target_l2", "l2_continuum_dev", "l2_certified",
              "grad_v_scaled_p2", "grad_v_scaled_p4", "grad_v_scaled_pinf",
              "sup_v", "hm1_constant", "support_outside_tile", "mask_defect",
              "pattern_resolved"):
        print("   ", k, rep[k])
    for row in rep["rows"]:
        print("    row", {k: (round(v, 7) if isinstance(v, float) else v)
                          for k, v in row.items()})
print("cubes done", round(time.time() - t0, 2), "s")

pair = assemble_c2(3, par)
print("excluded:", pair.excluded)
rep = pair.report()
for k, v in rep.items():
    if k in ("sup_rows", "residual_rows"):
        continue
    print(" ", k, v)
for r in rep.get("sup_rows", []):
    print("  sup_row", r)
print("assembly report", round(time.time() - t0, 2), "s")

tr = pair.transport_residual(0.37)
print("transport t=0.37:", {k: v for k, v in tr.items() if k != "rows"})
for r in tr.get("rows", []):
    print("   ", r)
print("elapsed", round(time.time() - t0, 2), "s")
