"""Small h- and p-convergence tables for the smooth cube case.

Under uniform refinement the energy error of a degree-p discretization
falls like h^(p+1); at fixed mesh it falls exponentially in p for
analytic data.  The estimator is expected to track both regimes without
retuning, which is what the effectivity column demonstrates.  Kept small
deliberately; the command line tool runs the bigger sweeps.
"""

import numpy as np

from curlcurl.cases import cube_solution, generate_cube
from curlcurl.equilibration import estimate
from curlcurl.solver import CurlCurlProblem, energy_error, solve

exact = cube_solution()

print("h-convergence at p = 0 and p = 1:")
print(f"{'p':>2} {'N':>3} {'h':>8} {'error':>12} {'eta_cofree':>12} "
      f"{'effectivity':>11}")
errors = {}
for p in (0, 1):
    for n in (2, 4):
        mesh = generate_cube(n, boundary="N")
        problem = CurlCurlProblem(mesh, p, exact.source, exact=exact)
        potential = solve(problem).potential
        err, _ = energy_error(potential, exact.curl)
        report = estimate(problem, potential, method="patch")
        errors[(p, n)] = err
        print(f"{p:>2} {n:>3} {np.sqrt(3) / n:>8.4f} {err:>12.6e} "
              f"{report.eta_cofree:>12.6e} {report.eta_cofree / err:>11.3f}")
    rate = np.log2(errors[(p, 2)] / errors[(p, 4)])
    print(f"   observed rate {rate:.2f} (expected about {p + 1})")

print("\np-convergence at N = 2:")
mesh = generate_cube(2, boundary="N")
prev = None
for p in range(4):
    problem = CurlCurlProblem(mesh, p, exact.source, exact=exact)
    potential = solve(problem).potential
    err, _ = energy_error(potential, exact.curl)
    drop = "" if prev is None else f"  ({prev / err:.1f}x down)"
    print(f"  p = {p}: error {err:.6e}{drop}")
    prev = err
