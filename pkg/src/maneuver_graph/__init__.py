"""Vehicle maneuver classification from spatio-temporal quadrant scene graphs."""

from .model import ManeuverClassifier, ModelConfig, PositionalFeatures
from .scene_graph import CLASSES, SceneGraph, SceneSequence

__version__ = "0.1.0"

__all__ = ["CLASSES", "ManeuverClassifier", "ModelConfig", "PositionalFeatures", "SceneGraph", "SceneSequence"]
