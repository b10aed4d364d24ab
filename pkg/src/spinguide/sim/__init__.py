"""Scenario files, orchestration and output emission."""

from .run import RunManifest, run
from .scenario import Scenario, parse_scenario, scenario_from_dict

__all__ = ["RunManifest", "Scenario", "parse_scenario", "run", "scenario_from_dict"]
