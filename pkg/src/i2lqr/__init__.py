"""i2lqr: reference-free iterative LQR control for iterative tasks.

The controller replans at every time step by picking terminal targets
from the trajectories of previous iterations (weighted nearest-neighbor
queries on recorded states with minimum-time cost-to-go) and solving one
local barrier-constrained trajectory optimization per candidate.
"""

from ._kernels import active_backend, compiled_available
from .controller import ControlDecision, ControllerConfig, compute_control, select_best
from .dynamics import (Input, ModelParams, State, linearize, rollout, saturate,
                       state_distance, step, wrap_angle)
from .environment import (ConstraintWindow, ObstacleSpec, collision_free,
                          constraint_window, min_clearance, violation)
from .history import (DistanceWeights, HistorySet, TerminalCandidate,
                      TrajectoryRecord, k_nearest, record_iteration,
                      stratified_k_nearest)
from .ilqr import BicycleModel, ILQRConfig, ILQRProblem, ILQRSolution, solve
from .runner import (RunResult, Scenario, SeedConfig, audit_trajectory,
                     initial_trajectory, run_iteration, run_task)

__version__ = "0.1.0"
