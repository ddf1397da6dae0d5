from .errors import (
    AssignmentFlowError, ConvergenceError, StiffnessError, KrylovOverflowError, UnknownSchemeError
)
from .geometry import (
    barycenter, project_t0, pi_p, exp_map, exp_map_inv, big_exp, big_exp_inv, geometric_mean,
    d_inf, entropy_avg
)
from .flow import (
    LabelSet, LabelingGraph, build_distances, likelihood, similarity, similarity_log, vector_field, tangent_rhs,
    local_rounding
)
from .traces import FlowTrace
from .rkmk import (
    ButcherTableau, StepControl, TABLEAUS, get_tableau, rkmk_step, implicit_euler_step, integrate
)
from .linearflow import (
    TangentOperator, DenseTangentOperator, LinearFlowOperator, RelinearizationControl,
    similarity_jacobian, build_operator, linear_flow_state, nonlinear_tangent_field, relinearize,
    spectral_norm
)
from .linsolve import (
    ErrorBoundInputs, KrylovBasis, rk_tangent_step, incomplete_gamma_int, local_error_bound,
    select_step, integrate_linear_adaptive, integrate_linear_implicit, arnoldi, phi1_times_e1,
    exponential_integrator, exponential_integrator_until
)
from .harness import (
    Signal1DScenario, Vertex31Scenario, ColorQuantScenario, LabelingResult, gen_signal1d,
    gen_vertex31, gen_colorquant, synthetic_color_image, label_agreement, ground_truth_nonlinear,
    ground_truth_linear, linear_flow_table, make_scenario
)

__all__ = [
    "AssignmentFlowError", "ConvergenceError", "StiffnessError", "KrylovOverflowError", "UnknownSchemeError",
    "barycenter", "project_t0", "pi_p", "exp_map", "exp_map_inv", "big_exp", "big_exp_inv",
    "geometric_mean", "d_inf", "entropy_avg",
    "LabelSet", "LabelingGraph", "build_distances", "likelihood", "similarity", "similarity_log", "vector_field",
    "tangent_rhs", "local_rounding", "FlowTrace",
    "ButcherTableau", "StepControl", "TABLEAUS", "get_tableau", "rkmk_step", "implicit_euler_step", "integrate",
    "TangentOperator", "DenseTangentOperator", "LinearFlowOperator", "RelinearizationControl",
    "similarity_jacobian", "build_operator", "linear_flow_state", "nonlinear_tangent_field", "relinearize",
    "spectral_norm",
    "ErrorBoundInputs", "KrylovBasis", "rk_tangent_step", "incomplete_gamma_int", "local_error_bound",
    "select_step", "integrate_linear_adaptive", "integrate_linear_implicit", "arnoldi", "phi1_times_e1",
    "exponential_integrator", "exponential_integrator_until",
    "Signal1DScenario", "Vertex31Scenario", "ColorQuantScenario", "LabelingResult", "gen_signal1d",
    "gen_vertex31", "gen_colorquant", "synthetic_color_image", "label_agreement", "ground_truth_nonlinear",
    "ground_truth_linear", "linear_flow_table", "make_scenario",
]
