"""fragdiff: discrete collision-induced fragmentation with size-dependent
diffusion — a certified finite-size solver.

The package integrates the truncated, optionally regularized reaction
system coupled to Neumann diffusion on 1D/2D boxes, and ships the
numeric audits (kernel series, mass bookkeeping, energy and duality
functionals) that make its structural claims checkable rather than
asserted.
"""

from .errors import (
    CflViolationError,
    ConfigError,
    ContractViolationError,
    DivergentSeriesError,
    DomainError,
    FragdiffError,
    LinearSolveError,
    NumericalAbortError,
)
from .kernels import (
    Enclosure,
    KernelSet,
    ValidationReport,
    breakage_count,
    cheng_redner_count,
    cheng_redner_uniform,
    collision_rate,
    diffusion_coeff,
    from_tables,
    power_law_uniform,
    power_series_enclosure,
    reg_weight,
    validate_kernel_set,
)
from .grid import (
    GridSpec,
    SizeSpectrumField,
    gradient_sq_integral,
    integrate,
    laplacian_neumann,
    make_grid_1d,
    make_grid_2d,
    read_species_csv,
    spectral_heat_solve_1d,
    stencil_eigenvalue,
    write_species_csv,
)
from .reaction import (
    TruncationFn,
    apply_truncation,
    check_quasipositivity,
    dump_q_csv,
    q_field,
    q_regularized,
    q_truncated,
    regularization_denominator,
)
from .summability import (
    AdmissibilityReport,
    ConditionReport,
    SummabilityReport,
    audit_summability,
    check_initial_data,
)
from .stepper import (
    DiffusionSolver,
    SimState,
    StepperConfig,
    Trajectory,
    cfl_limit,
    checkpoint_load,
    checkpoint_save,
    run_simulation,
    step_imex,
    step_rk4,
)
from .monitors import (
    MonitorReport,
    compute_monitors,
    duality_functional,
    linf_bound_check,
    moment0,
    reaction_budget,
    tail_envelope_exponential,
    tail_mass,
    total_mass,
    truncation_energy_check,
    write_monitors_csv,
    write_summary_json,
)
from .config import (
    SimConfig,
    load_config,
    make_grid,
    make_initial_condition,
    make_kernel_set,
    reference_scenario_dict,
)

__version__ = "0.1.0"
