"""Multi-dependency priority inheritance with backtracking for grid MAPF."""
from .agdg import DependencyGraph, PlanQueue, add_depend, remove_depend
from .grid import (AgentModel, GridMap, KinState, MapFormatError, StateSpace,
                   distance_map, footprint, load_map, parse_map, parse_scen,
                   random_map, state_space, successors)
from .paths import (ReservationTable, build_reservation, colliding_agents,
                    enumerate_paths, paths_collide)
from .planner import (AgentRecord, PlannerConfig, PlannerFault, PlannerTimeout,
                      choose_parent, fall_to_safe_path, find_best_path,
                      mdpibt_call, plan_epoch, priority_key)
from .simulation import (ProblemInstance, RunResult, random_instance, run_lifelong,
                         run_oneshot)
from .validation import joint_optimal_oracle, metrics, validate

__version__ = "0.1.0"
