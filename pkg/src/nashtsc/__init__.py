"""Grid traffic-signal simulator with Nash deep Q-network agents."""

from .config import ExperimentConfig, PRESETS, parse_config
from .harness import MetricsRow, run_episode, run_experiment
from .sim import RoadNetwork, build_grid

__all__ = ["ExperimentConfig", "PRESETS", "parse_config", "MetricsRow", "run_episode", "run_experiment",
           "RoadNetwork", "build_grid"]
