"""Neural kinematic bases for mesh-free fluid animation."""

from .basis import AnalyticBasis, NeuralBasis, gram_matrix, velocity
from .geometry import DomainSpec, SamplePoint, SampleSet, sample_points
from .losses import LossReport, LossWeights, loss_total
from .mlp import MlpModel, init_kaiming, load_checkpoint, save_checkpoint
from .sim import SimConfig, SimState, run, step
from .sketch import FitProblem, GuideCurve, SketchScene, fit_alpha, sample_curve
from .training import TrainConfig, generate_dataset, train

__version__ = "0.1.0"

__all__ = [
    "AnalyticBasis",
    "DomainSpec",
    "FitProblem",
    "GuideCurve",
    "LossReport",
    "LossWeights",
    "MlpModel",
    "NeuralBasis",
    "SamplePoint",
    "SampleSet",
    "SimConfig",
    "SimState",
    "SketchScene",
    "TrainConfig",
    "fit_alpha",
    "generate_dataset",
    "gram_matrix",
    "init_kaiming",
    "load_checkpoint",
    "loss_total",
    "run",
    "sample_curve",
    "sample_points",
    "save_checkpoint",
    "step",
    "train",
    "velocity",
]
