import time
from fractions import Fraction

import numpy as np

from torusmix.blocks import make_shear_family
from torusmix.rescaled import ConstructionTwoParams, MixerPair, PlacedCube, place_rescaled
from torusmix.spectral import l2_norm

t0 = time.time()
fam = make_shear_family(refine_base=2, grid_n=256, sample=False)
mix = MixerPair(fam, horizon=5)
print("mixer built", round(time.time() - t0, 2), "s")

# interior evolution: does the scalar actually move inside a generation?
for a, b in [(0.45, 0.55), (0.20, 0.30), (0.499, 0.501)]:
    ra = mix.rho_at(a).values
    rb = mix.rho_at(b).values
    print(f"rho diff sup s={a}->{b}:", float(np.abs(ra - rb).max()))

# the calibration example: lone cube lam=1/8 tau=1 gamma=1 at the center
pc = PlacedCube(mix, 512, Fraction(1, 8), Fraction(1), Fraction(1),
                (Fraction(1, 2), Fraction(1, 2)))
r0 = pc.rho_at(0.0)
print("lam=1/8 cube: res", pc.res, "stride", pc.stride if hasattr(pc, "stride") else "?")
print("  l2(t=0)", l2_norm(r0), " target", 1.0 / 8.0,
      " gap", abs(l2_norm(r0) - 0.125))
rep = pc.report(ts=(0.0, 0.5, 1.0))
for k, v in rep.items():
    if k != "rows":
        print(" ", k, v)
for row in rep["rows"]:
    print("  row", {k: (round(v, 6) if isinstance(v, float) else v)
                    for k, v in row.items()})
print("elapsed", round(time.time() - t0, 2), "s")
