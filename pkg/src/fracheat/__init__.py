"""fracheat: numerical laboratory for the fully fractional heat equation.

The equation is driven by the sigma-th power of the heat operator, realized
as a space-time nonlocal kernel acting on the full past history of the
solution.  The package provides the kernels and their constants, quadrature
for the singular history integrals, two equivalent solvers (nonlocal mild
marching and a local degenerate-weight extension PDE), and an experiment
harness for blow-up studies.
"""

__version__ = "0.1.0"

from .kernels import KernelParams, heat_kernel, time_kernel, master_kernel, green_kernel, poisson_kernel
from .grids import BoxGrid
from .fractional_ops import (
    TimeHistory,
    SpaceTimeField,
    marchaud,
    marchaud_power_rule,
    master_apply,
    master_apply_slice,
    frac_laplacian,
    memory_forcing,
)
from .memory import (
    ZeroMemory,
    ExpBumpMemory,
    PowerRampMemory,
    SelfSimilarMemory,
    BlowupTailMemory,
    StationaryMemory,
)
from .mild_solver import ProblemSpec, Trajectory, mild_march, residual_check
from .extension_solver import (
    ExtGrid,
    ExtTrajectory,
    poisson_extend,
    extension_march,
    conormal_trace,
    energy_I,
    kaplan_J,
    levine_check,
)
from .lab import (
    Regime,
    BlowupReport,
    fujita_classify,
    explicit_blowup,
    explicit_global,
    fit_rate,
    lower_bound_check,
    validation_battery,
)

__all__ = [
    "KernelParams",
    "heat_kernel",
    "time_kernel",
    "master_kernel",
    "green_kernel",
    "poisson_kernel",
    "BoxGrid",
    "TimeHistory",
    "SpaceTimeField",
    "marchaud",
    "marchaud_power_rule",
    "master_apply",
    "master_apply_slice",
    "frac_laplacian",
    "memory_forcing",
    "ZeroMemory",
    "ExpBumpMemory",
    "PowerRampMemory",
    "SelfSimilarMemory",
    "BlowupTailMemory",
    "StationaryMemory",
    "ProblemSpec",
    "Trajectory",
    "mild_march",
    "residual_check",
    "ExtGrid",
    "ExtTrajectory",
    "poisson_extend",
    "extension_march",
    "conormal_trace",
    "energy_I",
    "kaplan_J",
    "levine_check",
    "Regime",
    "BlowupReport",
    "fujita_classify",
    "explicit_blowup",
    "explicit_global",
    "fit_rate",
    "lower_bound_check",
    "validation_battery",
]
