"""Coarse version of the urban 4+4 sweep: how the optimal network changes with eps.

Runs the solver on a 26x26x10 grid for five values of eps and prints the
family read off the relaxed image next to the brute-force optimum.  The
full-resolution sweep is ``transport-lifting --config four_to_four``.
"""
from transport_lifting import extract, oracle, solver
from transport_lifting.model import make_model
from transport_lifting.scenarios import four_to_four

print(f"{'eps':>5} {'solver':>8} {'oracle':>8}  {'image':<14} {'oracle family':<14}")
for eps in (0.02, 0.32, 0.92, 1.82, 2.72):
    sc = four_to_four(make_model("urban", eps, 5.0))
    res = solver.solve(sc, 26, 26, 10, opts=solver.SolverOptions(max_iters=800, stop_tol=0.02))
    img = extract.collapse(res.v, res.grid)
    tol = extract.default_mass_tol(res.scenario)
    best = oracle.oracle_min_energy(sc, max_steiner=6)
    fam = extract.graph_family(best.graph, res.grid, res.scenario)
    print(f"{eps:5.2f} {res.primal_value:8.4f} {best.energy:8.4f}  "
          f"{extract.image_family(img, tol, res.scenario):<14} {fam:<14}")
