"""
Step-size bound and discrete energy
===================================

The step-size bound balances the curl term and the projected conductivity
against the lumped mass.  Below it, the discrete energy is conserved
without loss and decays with loss.  The leapfrog recursion itself only
breaks down at about sqrt(2) times the bound.
"""

import numpy as np

from yeefem import DivergenceError, Scenario, Simulation
from yeefem.mesh import ScattererGeometry, generate_scatterer_mesh

rng = np.random.default_rng(0)
lossless = Scenario(geometry=ScattererGeometry(sigma_in=0.0))
lossy = Scenario()
mesh = generate_scatterer_mesh(lossless.geometry, level=1)

for name, scenario in (("sigma = 0", lossless), ("sigma = 100", lossy)):
    for method in ("NC1", "N0plus"):
        tau_max = Simulation(scenario, mesh, method, tau=0.01).tau_max()
        print(f"{name:>12} {method:>6}: tau_max = {tau_max:.5f} = {tau_max / mesh.h():.3f} h")

# %%
# Energy from random initial data, no loads.
tau_max = Simulation(lossless, mesh, "NC1", tau=0.01).tau_max()
for factor in (0.9, 1.2, 1.4, 1.5):
    sim = Simulation(lossless, mesh, "NC1", tau=factor * tau_max, load_until=0.0)
    n = sim.dm.n_full
    sim.set_state(rng.normal(size=n), rng.normal(size=n))
    try:
        E = sim.advance(1000, divergence_factor=1e3).total
        print(f"tau = {factor:.1f} tau_max: relative drift {np.abs(E - E[0]).max() / E[0]:.1e}")
    except DivergenceError as exc:
        print(f"tau = {factor:.1f} tau_max: {exc}")

# %%
# With loss the energy of the full scheme never increases once the
# boundary load is switched off.
tau = 0.9 * Simulation(lossy, mesh, "N0plus", tau=0.01).tau_max()
sim = Simulation(lossy, mesh, "N0plus", tau=tau, scheme="full", load_until=0.0)
n = sim.dm.n_full
sim.set_state(rng.normal(size=n), rng.normal(size=n))
E = sim.advance(300).total
print(f"lossy N0plus: energy {E[0]:.4e} -> {E[-1]:.4e}, "
      f"largest step increase {np.diff(E).max():.2e}")
