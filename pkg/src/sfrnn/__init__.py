"""Character-level recurrent models that feed their own surprisal back as an input."""
from .backprop import Gradients, backward_window
from .corpus import BatchCursor, Corpus, SplitMix64, load, next_window, resample
from .gradcheck import CheckReport, check, check_all, numeric_grad
from .model import CarryState, ModelConfig, Params, StepCache, bpc, forward_window, init_params
from .optimizer import OptState, opt_step
from .trainer import TrainConfig, evaluate, load_checkpoint, sample, save_checkpoint, train

__all__ = [
    "BatchCursor", "CarryState", "CheckReport", "Corpus", "Gradients", "ModelConfig", "OptState", "Params",
    "SplitMix64", "StepCache", "TrainConfig", "backward_window", "bpc", "check", "check_all", "evaluate",
    "forward_window", "init_params", "load", "load_checkpoint", "next_window", "numeric_grad", "opt_step",
    "resample", "sample", "save_checkpoint", "train",
]
