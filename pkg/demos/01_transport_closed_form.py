"""Random transport with a known answer.

The equation du = u_x o dw is solved by a rigid translation,
u(t, x) = u0(x + w(t)).  We integrate it with the spectral Heun solver,
compare with the translate, and then refine the time step to watch the
pathwise error fall roughly linearly in dt.
"""
import numpy as np

from stochhyp import (EvolveConfig, Field, Grid1D, SpdeProblem, TimeSymbolFamily, integrate_spde,
                      make_symmetrized_transport, sample_brownian)

grid = Grid1D(64)
x = grid.nodes
bump = lambda y: np.exp(np.cos(y) - 1.0)

problem = SpdeProblem(Field(grid, bump(x)), TimeSymbolFamily.constant(make_symmetrized_transport(grid, 1.0)))

# one fine path; coarser solves reuse it by summing increments
path = sample_brownian(16384, 1.0, seed=2024, path_index=0)
exact = bump(x + path.values[-1])
print(f"w(1) = {path.values[-1]:+.4f}")

print(f"{'steps':>6}  {'rel. L2 error':>14}")
for steps in (512, 2048, 8192):
    u = integrate_spde(problem, path, EvolveConfig(steps=steps, energy=False)).final.values[0]
    err = np.linalg.norm(u - exact) / np.linalg.norm(exact)
    print(f"{steps:>6}  {err:14.3e}")

# the symmetrised operator is skew, so the L2 norm is conserved up to the scheme's small amplitude bias
traj = integrate_spde(problem, path, EvolveConfig(steps=8192, record_every=512))
n = traj.norms()
print(f"max |  |u(t)|_0 / |u0|_0 - 1 | = {np.max(np.abs(n / n[0] - 1)):.2e}")
