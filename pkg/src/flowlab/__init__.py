"""flowlab: a desk-scale laboratory for flows of smooth and rough vector fields.

Presets with closed-form oracles, a fixed-step flow integrator with
transported densities, Lie-bracket defect measurements, and weak-form
evaluators for the identities tying flow commutativity to brackets.
"""

__version__ = "0.1.0"

from .convergence import ConvergenceReport, report_slope
from .fields import (
    Box,
    GridField,
    MollifierKernel,
    PRESET_NAMES,
    PresetPair,
    VecField,
    fd_divergence,
    fd_jacobian,
    mollified_field,
    mollify,
    preset_pair,
    standard_mollifier,
)
from .flow import (
    DensityReport,
    FlowConfig,
    Trajectory,
    density_bounds_check,
    flow_cloud,
    flow_point,
    flow_points,
    group_defect,
    jacobian_density,
    jacobian_density_cloud,
    stability_study,
)
from .bracket import (
    TAYLOR_SIGN,
    commutativity_defect,
    lie_bracket,
    mixed_ode_residual,
    pushforward_defect,
    pushforward_defects,
    taylor_remainder,
)
from .weakcalc import (
    BumpTest,
    PointCloud,
    WeakReport,
    bump_panel,
    commutator_residual,
    dTt_dt_zero,
    eval_Tt,
    eval_Tts,
    fh_measure_trend,
    grid_cloud,
    incremental_quotient,
    integrate,
    random_cloud,
    renorm_residual,
    weak_lie_residual,
)
