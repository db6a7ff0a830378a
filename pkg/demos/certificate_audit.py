"""Audit the analytic lower-bound fields for the line-to-line problem.

The urban field passes for every eps tried.  The branched field with
beta = 1 + eps |log eps| / 2 does not pass below eps ~ 0.9 on a line of
length 1; the largest admissible beta found by bisection is printed for
comparison.  On longer lines it fails for every eps, since |ds|^(1 - eps)
drops below |ds| once |ds| > 1.
"""
from transport_lifting import certificate as cert

for eps in (1e-3, 1e-2, 1e-1):
    p = cert.make_params("urban", eps, 2.0, 5.0)
    rep = cert.verify_admissibility(p)
    b = cert.certificate_bound(p)
    print(f"urban    eps={eps:<6g} beta={p.beta:.6f} bound={b['total']:.6f} "
          f"violation={rep.max_violation:.1e}")

for eps, ell in ((1e-2, 1.0), (5e-2, 1.0), (0.5, 1.0), (0.95, 1.0), (0.95, 2.0)):
    p = cert.make_params("branched", eps, ell)
    rep = cert.verify_admissibility(p)
    line = f"branched eps={eps:<6g} l={ell:g} beta={p.beta:.6f} violation={rep.max_violation:.1e}"
    if not rep.admissible:
        x1, x2, s1, s2 = rep.worst
        best = cert.max_admissible_beta("branched", eps, ell=ell, tol=1e-5)
        line += f" at x=({x1:.3f}, {x2:.3f}) s=[{s1:.3f}, {s2:.3f}]; largest ok beta {best:.5f}"
    print(line)
