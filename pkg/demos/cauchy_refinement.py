"""Show the refinement sequence is Cauchy in the time-integrated L2 norm.

Consecutive nested solutions are compared by exact interpolation of the
coarse run into the fine space, then a trapezoid rule in time. Each
velocity/temperature difference should be well under 0.6 of the previous
one; that geometric decay is what convergence of the sequence rests on.
"""

from bgs.coefficients import CoefficientModel, tanh_blend_law
from bgs.oracles import cauchy_study, make_mms_problem


def main():
    model = CoefficientModel(viscosity=tanh_blend_law(0.5, 2.0),
                             conductivity=tanh_blend_law(0.7, 1.3))
    problem = make_mms_problem(model)
    report = cauchy_study(problem, levels=3, dt=1e-3, t_end=0.1, base_n=4)

    print("pair (coarse dofs, fine dofs):", report.pair_levels)
    print("velocity differences:   ", [f"{e:.4e}" for e in report.e_velocity])
    print("temperature differences:",
          [f"{e:.4e}" for e in report.e_temperature])
    print("velocity ratios:   ", [f"{r:.3f}" for r in report.ratios_velocity])
    print("temperature ratios:",
          [f"{r:.3f}" for r in report.ratios_temperature])
    print(f"passed: {report.passed}")


if __name__ == "__main__":
    main()
