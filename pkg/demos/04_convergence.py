"""
Convergence and the cost of reducing too many edges
===================================================

NC1 is compared with itself on nested meshes; N0plus and N0 are compared
with NC1 on the same mesh.  N0plus keeps two dofs on the conductor boundary
and converges at first order like NC1, while N0 reduces every edge and its
rate drops as the mesh is refined.  Levels 1..3 take about a minute; add
level 4 to see the N0 rate fall below 0.85.
"""

from yeefem import Scenario
from yeefem.bench import compare_methods, self_convergence

scenario = Scenario()
levels = (1, 2, 3)

tables = {"NC1": self_convergence(scenario, "NC1", levels=levels)}
cmp = compare_methods(scenario, ("N0plus", "N0"), levels=levels)
tables["N0plus"] = cmp[("N0plus", "lifted")]
tables["N0"] = cmp[("N0", "lifted")]

for method, rows in tables.items():
    print(method)
    print(f"{'h':>10} {'dofs':>8} {'error':>10} {'eoc':>6}")
    for r in rows:
        print(f"{r.h:10.5f} {r.dofs:8d} {r.error:10.5f} {r.eoc:6.2f}")
