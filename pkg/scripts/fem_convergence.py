"""Uniform-refinement convergence table for the manufactured Poisson problem."""
import numpy as np

from scfem.fem import assemble_and_solve, h1_seminorm_error, l2_error, residual_estimator
from scfem.mesh import unit_square_mesh
from scfem.problems import manufactured_poisson


def main() -> None:
    prob = manufactured_poisson()
    print(f"{'n':>5} {'dofs':>8} {'L2 error':>12} {'H1 error':>12} {'eta':>12} {'eff':>6}")
    prev = None
    for n in (4, 8, 16, 32, 64, 128):
        sol = assemble_and_solve(unit_square_mesh(n), prob.coefficient, (0.0,), prob.forcing)
        l2 = l2_error(sol, prob.exact)
        h1 = h1_seminorm_error(sol, prob.exact_grad)
        eta = residual_estimator(sol, prob.coefficient, prob.forcing)[1]
        rates = "" if prev is None else f"  rates {np.log2(prev[0] / l2):.2f} {np.log2(prev[1] / h1):.2f}"
        print(f"{n:>5} {sol.n_dofs:>8} {l2:>12.4e} {h1:>12.4e} {eta:>12.4e} {eta / h1:>6.2f}{rates}")
        prev = (l2, h1)


if __name__ == "__main__":
    main()
