"""GMR velocity fields learned jointly with a control Lyapunov function and
corrected by Sontag's formula."""
from .clf import ClfParams
from .control import ControllerConfig
from .dataset import DemonstrationSet, add_noise, load_csv, save_csv, synth_shape
from .gmm import MixtureParams, em_fit, fit_mixture, gmr_velocity, kmeans_init
from .learn import LearnConfig, TrainResult, train
from .modelio import load_model, save_model
from .sim import RolloutResult, rollout, rollout_batch

__version__ = "0.1.0"

__all__ = [
    "ClfParams", "ControllerConfig", "DemonstrationSet", "LearnConfig", "MixtureParams",
    "RolloutResult", "TrainResult", "add_noise", "em_fit", "fit_mixture", "gmr_velocity",
    "kmeans_init", "load_csv", "load_model", "rollout", "rollout_batch", "save_csv", "save_model",
    "synth_shape", "train",
]
