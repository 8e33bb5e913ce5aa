"""Closed-form safety and robust tracking filters for learned multi-agent motion planners."""

from .barrier import (BarrierEval, DistanceClearance, eval_barrier, safe_velocity,
                      safe_velocity_time_derivative)
from .contraction import (MetricEval, incremental_energy, metric_at, metric_pointwise,
                          verify_contraction_along_trajectory)
from .dynamics import (AffinePlant, DisturbanceSpec, LagrangianPlant, leo_lagrangian_plant, make_plant,
                       nonlinear_example_plant, sdc_factorize, spacecraft_simulator_plant)
from .errors import (CartError, ConfigError, GainTooSmall, NonFiniteState, NotSafe, PlannerFailure,
                     QPInfeasible, RiccatiFailure)
from .gains import FilterGains, RobustGains
from .general_filter import safety_filter_general, u_bar_general
from .lagrangian_filter import qp_oracle_halfspace, safety_filter_lagrangian, u_bar_lagrangian
from .projection import SafetyFilterOutput
from .robust_filter import (ErrorEnvelope, PlantBounds, SafeTargetTrajectory, error_envelope,
                            margin_from_envelope, robust_filter, robust_filter_general)
from .world import AgentState, Observation, SafetyConfig, World, global_safety_product, observe

__version__ = "0.1.0"
