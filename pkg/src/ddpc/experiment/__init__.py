"""Closed-loop campaigns, metrics and the command-line harness."""
from .campaigns import (collect, fit, grid_search, grid_search_scenario, run_comparison,
                        run_perturbation, run_single, success_rates, summarize)
from .controllers import (DdpcController, DitheredController, LipMpcController,
                          NominalController)
from .metrics import MetricsReport, cumulative_tracking_error
from .report import report
from .scenario import Scenario, load_scenario, save_scenario
from .simulate import collect_trajectory, run_closed_loop

__all__ = [
    "collect", "fit", "grid_search", "grid_search_scenario", "run_comparison",
    "run_perturbation", "run_single", "success_rates", "summarize", "DdpcController",
    "DitheredController", "LipMpcController", "NominalController", "MetricsReport",
    "cumulative_tracking_error", "report", "Scenario", "load_scenario", "save_scenario",
    "collect_trajectory", "run_closed_loop",
]
