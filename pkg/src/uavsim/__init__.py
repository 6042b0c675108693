"""Connectivity-aware UAV path planning in a synthetic 3D urban radio map."""
from .geometry import Building, ObstacleReading, distance_3d, is_los, nearest_obstacle
from .radio import GbsClass, GbsConfig, RadioConfig, antenna_gain, best_gbs, rsrp
from .scenario import Scenario, generate_synthetic_scenario, load_scenario, save_scenario
from .env import ActionCommand, EnvConfig, RewardConfig, UavEnv

__version__ = "0.1.0"
