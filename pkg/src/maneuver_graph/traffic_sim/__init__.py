from .config import PRESETS, ConfigError, WorldConfig, preset
from .dataset import (
    BALANCED,
    TRANSFER_MIX,
    Dataset,
    class_counts,
    generate_dataset,
    generate_sequences,
    split_indices,
)
from .scenario import Scenario, VehicleScript, generate_scenario, label_violations
from .simulate import camera_positions, image_space_view, simulate, to_camera_frame

__all__ = [
    "BALANCED",
    "ConfigError",
    "Dataset",
    "PRESETS",
    "Scenario",
    "TRANSFER_MIX",
    "VehicleScript",
    "WorldConfig",
    "camera_positions",
    "class_counts",
    "generate_dataset",
    "generate_scenario",
    "generate_sequences",
    "image_space_view",
    "label_violations",
    "preset",
    "simulate",
    "split_indices",
    "to_camera_frame",
]
