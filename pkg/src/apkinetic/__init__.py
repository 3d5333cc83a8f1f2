"""Asymptotic-preserving IMEX Runge-Kutta solvers for the Boltzmann equation."""
from .collision import (DEFAULT_B0, CollisionBackend, PenalizedSplit, SpectralKernelTable, calibrate_b0,
                        penalized_split, precompute_kernel, q_bgk, q_boltzmann)
from .errors import (APKineticError, BlowUpError, ConfigError, DegenerateStateError, GridError,
                     InvalidMomentsError, NegativeDensityError, SingularMatrixError, UnknownSchemeError,
                     UnsupportedOrderError)
from .harness import RunConfig, emit_outputs, load_config, run_ap_limit, run_convergence
from .integrator import KineticState1D, StepperConfig, imex_step_1d, imex_step_homogeneous, run_relaxation
from .limits import BKWParams, EulerState1D, Mesh1D, bkw, bkw_dt, explicit_rk_euler_step, kinetic_flux_1d
from .tableaux import (ButcherTableau, ConditionReport, IMEXPair, bhat_matrix, builtin_pair,
                       is_globally_stiffly_accurate, load_pair, order_conditions, positivity_conditions,
                       validate_pair)
from .velocity import (GridFunction, Moments, VelocityGrid2D, entropy, l1_distance, l1_norm, maxwellian,
                       moments)

__version__ = "0.1.0"
