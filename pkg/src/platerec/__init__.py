"""platerec: license-plate character recognition with a CRNN trained by CTC."""

from . import ctc, data, detection, kernels, layers, model, pipeline, tensor
from .ctc import beam_decode, collapse, ctc_bruteforce, ctc_gradient, ctc_loss, greedy_decode
from .model import Crnn, CrnnConfig, build_crnn, load_checkpoint, model_from_bytes, save_checkpoint, train_step

__version__ = "0.1.0"

__all__ = [
    "Crnn",
    "CrnnConfig",
    "beam_decode",
    "build_crnn",
    "collapse",
    "ctc",
    "ctc_bruteforce",
    "ctc_gradient",
    "ctc_loss",
    "data",
    "detection",
    "greedy_decode",
    "kernels",
    "layers",
    "load_checkpoint",
    "model_from_bytes",
    "model",
    "pipeline",
    "save_checkpoint",
    "tensor",
    "train_step",
]
