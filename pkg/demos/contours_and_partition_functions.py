# # Columns, contours and exact partition functions
#
# Stacking Ising chains with a vertical coupling lambda gives a 2D model.
# Columns of height l are classified against the two ground states and the
# non-regular ones group into contours.

import numpy as np

from lamlab import exactz, potential
from lamlab.contour import ColumnBox, classify_columns, extract_contours, psi_decompose
from lamlab.laminate import HamiltonianFamily, build_laminated
from lamlab.lattice import Window

model = build_laminated(HamiltonianFamily(potential.disagreement(), [], []), 2.0, 2, 1.5, 0.7)

# ## A flipped box inside the zero phase

s = model.ground_config(Window.from_shape((14, 16)), 0)
s = s.replace({(i, t): 1 for i in range(5, 9) for t in range(4, 12)})
cls = classify_columns(s, model)
print(cls.counts())
for g in extract_contours(s, model):
    p = psi_decompose(g, model)
    print(f"|Gamma| = {g.norm}, interior volumes {g.volumes}, Psi = {p.psi:.2f} (vertical {p.psi_v:.2f})")

# ## Partition functions
#
# On a small box the weight of all configurations with boundary q equals
# exp(-beta * ground energy) times the sum over families of distant contours.

for box in [(5, 3), (6, 3), (7, 3)]:
    r = exactz.verify_factorization(ColumnBox((0, 0), box), 0, model)
    print(box, f"Xi = {r.xi:.6g}, {r.contours} contours, residual {r.max_residual:.1e}")

# ## Strips of finite width

for W in (4, 6, 8):
    f = exactz.transfer_free_energy(model, W, 0.4)
    e = exactz.transfer_energy(model, W, 0.4)
    print(f"W={W}: log Z per site {f:.6f}, energy per site {e:.6f}")
print(np.round([exactz.transfer_energy(model.with_lambda(x), 8, 0.4) for x in (0, 2, 4, 8)], 5))
