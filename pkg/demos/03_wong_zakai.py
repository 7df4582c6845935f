"""Polygonal approximations of the driving noise.

Replacing w by its piecewise-linear interpolant on n segments turns the
stochastic equation into a random PDE.  Its solution converges to the
Stratonovich solution; here we estimate E sup_t |u^n - u|^2 in a weak
Sobolev norm over a handful of paths and fit the decay rate in n.
"""
import numpy as np

from stochhyp import EvolveConfig, Field, Grid1D, SpdeProblem, TimeSymbolFamily, make_symmetrized_transport
from stochhyp.stats import McConfig, wz_convergence_study

grid = Grid1D(64)
x = grid.nodes
problem = SpdeProblem(Field(grid, np.exp(np.cos(x) - 1.0)),
                      TimeSymbolFamily.constant(make_symmetrized_transport(grid, 1.0 + 0.3 * np.sin(x))))

report = wz_convergence_study(problem, [8, 16, 32, 64], EvolveConfig(steps=1024, energy=False),
                              McConfig(num_paths=16, seed=11))

print(f"{'n':>4}  {'E sup|u^n-u|^2':>15}  {'std. err.':>10}")
for n, e, se in zip(report.abscissae, report.errors, report.stderr):
    print(f"{int(n):>4}  {e:15.3e}  {se:10.2e}")
# the sup over time of a Brownian bridge costs a log factor, so the fit sits a little above -1
print(f"fitted slope in log-log: {report.fitted_slope:.2f}")
