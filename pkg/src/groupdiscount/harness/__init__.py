"""Scenario runner, benchmarks, Monte Carlo checks and test vectors."""

from .bench import bench_opcounts
from .montecarlo import montecarlo_anonymity, montecarlo_failure
from .scenario import bundled_scenarios, load_scenario, parse_scenario, run_scenario
