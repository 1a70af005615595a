"""Force-strain curves of the series pouch actuator and the bend each
catalog pressure can hold.

    python3 demos/actuator_curves.py
"""
import numpy as np

from vinesim import beam, spam, synthesis
from vinesim.units import MM, PSI

geom = spam.SpamGeometry()
body = beam.VineBodyParams()

print("strain   F_t at 1 psi [N]   F_t at 2.5 psi [N]")
for (e, f1), (_, f2) in zip(spam.sample_curve(geom, 1 * PSI, 8),
                            spam.sample_curve(geom, 2.5 * PSI, 8)):
    print(f"{e:6.3f}   {f1:16.3f}   {f2:17.3f}")

cat = synthesis.DesignCatalog()
lo, hi = synthesis.curvature_bounds(cat, body, geom)
print(f"\nachievable per-segment bend: [{lo:.4f}, {hi:.4f}] rad")
for P in cat.pressures:
    th = beam.free_space_equilibrium(body, geom, P, np.array([10, 20, 30, 45]) * MM)
    print(f"{P / PSI:.1f} psi: l0 = 10/20/30/45 mm -> " + " ".join(f"{t:.4f}" for t in th))

for target in np.linspace(lo * 1.5, hi * 0.9, 4):
    r = synthesis.synthesize(target, cat, body, geom, starts=200)
    print(f"theta {target:.4f} -> {r.P_act / PSI:.1f} psi, l0 {r.l_0 / MM:.0f} mm, "
          f"holds {r.theta_achieved:.4f}")
