"""Two quick solves that have known answers.

A single unit pipe of length one costs min(a, 1 + eps) = 1.5 at a = 2,
eps = 0.5.  Two sources feeding two sinks straight across cost W1 = 1 in
the limit of small eps.  Both run in a few seconds.
"""
from transport_lifting import extract, solver
from transport_lifting.model import make_model, wasserstein1
from transport_lifting.scenarios import single_pipe, top_to_bottom


def report(name, res, target):
    img = extract.collapse(res.v, res.grid)
    e = extract.grid_energy(img, res.scenario.model)
    print(f"{name:>12}: primal {res.primal_value:.4f}  grid energy {e:.4f}  "
          f"target {target:.4f}  iterations {res.iterations}  binarity {img.binarity:.4f}")


res = solver.solve(single_pipe(), 34, 34, 6, opts=solver.SolverOptions(max_iters=2000))
report("single pipe", res, 1.5)

sc = top_to_bottom([0.25, 0.75], 0.5, make_model("urban", 1e-3, 5.0))
res = solver.solve(sc, 18, 18, 6, opts=solver.SolverOptions(max_iters=1500, stop_tol=1e-3))
w1 = wasserstein1(res.scenario.source_measure(), res.scenario.sink_measure())
report("two pipes", res, w1)
