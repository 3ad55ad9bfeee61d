from .adam import Adam
from .model import Model, load_model, save_model
from .network import ARCHITECTURES, ModelSpec, Network, build_network, model_spec
from .training import EarlyStopping, TrainConfig, fit

__all__ = [
    "Adam",
    "ARCHITECTURES",
    "EarlyStopping",
    "Model",
    "ModelSpec",
    "Network",
    "TrainConfig",
    "build_network",
    "fit",
    "load_model",
    "model_spec",
    "save_model",
]
