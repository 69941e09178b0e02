from .layers import ACTIVATIONS, LSTM, Dense, ShapeError, activate
from .net import Network, ParamSet, Tape, TapeMismatch, mlp
from .optim import Adam, TrainingError, adam_step
from .gradcheck import grad_check, gradcheck_suite
from .io import CheckpointError, dump_checkpoint, load_checkpoint, network_from_dict, network_to_dict

__all__ = [
    "ACTIVATIONS", "LSTM", "Dense", "ShapeError", "activate",
    "Network", "ParamSet", "Tape", "TapeMismatch", "mlp",
    "Adam", "TrainingError", "adam_step", "grad_check", "gradcheck_suite",
    "CheckpointError", "dump_checkpoint", "load_checkpoint",
    "network_from_dict", "network_to_dict",
]
