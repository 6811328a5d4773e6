"""Measure the discrete coercivity and Sobolev constants on nested meshes.

c1 and c1_prime come from dense generalized eigensolves on the constrained
(and, for velocity, discretely divergence-free) subspaces; d is a
projected-ascent lower bound on the L4/H1 embedding constant. Refinement
should shrink the infima and grow the supremum, which the table shows.
"""

from bgs import build_rectangle_mesh, build_spaces
from bgs.solver import estimate_constants


def main():
    print(f"{'n':>3} {'c1':>10} {'c1_prime':>10} {'d':>10}")
    for n in (2, 4, 8):
        spaces = build_spaces(build_rectangle_mesh(n, n,
                                                   gamma1_sides=("left",)))
        cst = estimate_constants(spaces)
        print(f"{n:3d} {cst['c1']:10.6f} {cst['c1_prime']:10.6f} "
              f"{cst['d']:10.6f}")
    print("\nuse these in SolverConfig(constants_for_re_ra=...) to make the "
          "Re+Ra diagnostic mesh-aware")


if __name__ == "__main__":
    main()
