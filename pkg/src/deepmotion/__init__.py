"""Crowd-navigation imitation toolkit built around the DeepMoTIon network."""
from .dataset import (AgentTrack, ObstacleMap, StepLabel, TrajectoryDataset, augment_rotate,
                      import_obsmat, resample_dataset, resample_track, split_train_test,
                      velocity_labels)
from .encoding import decode_direction, encode_state, encode_target, gaussian_direction_label
from .estimator import DeepMotion
from .lidar import LidarScan, SceneSnapshot, simulate_scan
from .metrics import MetricsReport, dtw, evaluate, spd
from .network.model import NetworkConfig
from .rollout import NetworkPolicy, OraclePolicy, SfmPolicy, make_scenarios, rollout
from .sfm import SfmParams, sfm_acceleration, sfm_policy_step

__version__ = "0.1.0"
