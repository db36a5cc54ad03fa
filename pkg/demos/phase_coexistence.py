# # Phase coexistence in the Ising laminate
#
# The order parameter is the fraction of columns that look like ground state q
# in their neighbourhood. With boundary q it stays near 1 at large lambda and
# the boundary stops mattering at lambda = 0. A 32x32 window keeps this quick;
# the 64x64 scan is `lamlab scan --config src/lamlab/data/ising_scan.json`.

from lamlab import mc, potential
from lamlab.laminate import HamiltonianFamily, build_laminated

beta = 0.4
model = build_laminated(HamiltonianFamily(potential.disagreement(), [], []), 0.0, 2, 1.5, beta)
lc = mc.anisotropic_ising_critical_lambda(beta)
print(f"critical vertical coupling of the anisotropic Ising model: {lc:.3f}")

scan = mc.coexistence_scan(model, beta, [0, 2, 4, 6, 8], (32, 32), seeds=[1, 2], sweeps=600,
                           thermalization=200, stride=10)
for lam, dep in scan.dependence.items():
    print(f"lambda = {lam:3.0f}: boundary dependence {dep:.3f} +- {scan.dependence_stderr[lam]:.3f}")
print("first lambda above 1/2:", scan.threshold)

# ## A single chain

res = mc.run_chain(mc.ChainSpec((32, 32), 0, beta, 1000, 200, seed=7, stride=10), model.with_lambda(8.0))
fr = res.series("fractions")
print("fraction of 0-regular columns:", fr[:, 0].mean(), "acceptance:", round(res.acceptance, 3))
print("energy per site:", res.mean_stderr(res.series("energy")), "tau:", round(res.autocorrelation, 2))
