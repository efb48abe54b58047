from .baseline import PositionalFeatures, baseline_features
from .config import N_CLASSES, VARIANTS, ModelConfig
from .estimator import ManeuverClassifier, TrainingDivergedError, vehicle_targets
from .layers import classify, lstm, lstm_step, mrgcn_layer, multi_head_attention, spatial_encode
from .network import forward, forward_batch, make_batch, prepare, sequence_loss
from .params import init_params, param_shapes

__all__ = [
    "ManeuverClassifier",
    "ModelConfig",
    "N_CLASSES",
    "PositionalFeatures",
    "TrainingDivergedError",
    "VARIANTS",
    "baseline_features",
    "classify",
    "forward",
    "forward_batch",
    "init_params",
    "lstm",
    "lstm_step",
    "make_batch",
    "mrgcn_layer",
    "multi_head_attention",
    "param_shapes",
    "prepare",
    "sequence_loss",
    "spatial_encode",
    "vehicle_targets",
]
