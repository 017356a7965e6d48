"""DDPC planner, LIP-MPC baseline and online model updates."""
from .core import (FeedbackBuffer, PlanResult, PlannerConfig, TransitionHandle, assemble_qp,
                   free_response, input_bounds, interpolate_plan, plan, shift_warm_start,
                   update_feedback)
from .lip_mpc import LipMpcConfig, LipState, lip_discretization, lip_mpc_plan, lip_prediction_matrices
from .online import OnlineUpdater, UpdateSchedule, online_update_policy

__all__ = [
    "FeedbackBuffer", "PlanResult", "PlannerConfig", "TransitionHandle", "assemble_qp",
    "free_response", "input_bounds", "interpolate_plan", "plan", "shift_warm_start",
    "update_feedback", "LipMpcConfig", "LipState", "lip_discretization", "lip_mpc_plan",
    "lip_prediction_matrices", "OnlineUpdater", "UpdateSchedule", "online_update_policy",
]
