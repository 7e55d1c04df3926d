"""Domain-generalizable face forgery detection, desk scale.

A float64 numpy implementation of a forgery detector that survives domain
shift by (a) re-stylizing content features with per-class style banks
selected by farthest-point sampling and mixed with Dirichlet weights,
(b) extracting instance-conditioned features with attention over expert
kernels, and (c) suppressing domain cues adversarially through a gradient
reversal layer.  Includes a synthetic multi-domain benchmark where global
channel statistics carry the domain and a local high-frequency trace
carries the forgery.
"""

from .autograd import Tensor, grad_reverse, no_grad
from .backbone import (ForgeryDetector, ModelConfig, load_backbone_weights,
                       load_checkpoint, save_checkpoint)
from .config import (DataConfig, ExperimentManifest, TrainConfig,
                     build_manifest, load_manifest_file)
from .data import DomainSample, DomainStyle, SplitDataset, SynthSpec, generate, make_sample
from .dda import DDAModule, adain
from .dfe import DFEBlock, channel_split
from .domain_head import DomainDiscriminator, adv_loss
from .gradcheck import check_gradients
from .losses import LossBreakdown, ce_loss, total_loss
from .metrics import accuracy, auc, eer, evaluate_scores
from .style_bank import (StyleBank, StyleStats, aggregate_style, build_bank,
                         fps_select, instance_stats, load_bank, sample_weights,
                         save_bank)
from .training import Adam, Trainer, build_model_bank, train_run

__version__ = "0.1.0"

__all__ = [
    "Adam", "DDAModule", "DataConfig", "DomainDiscriminator", "DomainSample",
    "DomainStyle", "ExperimentManifest", "ForgeryDetector", "LossBreakdown",
    "ModelConfig", "SplitDataset", "StyleBank", "StyleStats", "SynthSpec",
    "Tensor", "TrainConfig", "Trainer", "accuracy", "adain", "adv_loss",
    "aggregate_style", "auc", "build_bank", "build_manifest", "build_model_bank",
    "ce_loss", "channel_split", "check_gradients", "eer", "evaluate_scores",
    "fps_select", "generate", "grad_reverse", "instance_stats", "load_backbone_weights",
    "load_bank", "load_checkpoint", "load_manifest_file", "make_sample", "no_grad",
    "sample_weights", "save_bank", "save_checkpoint", "total_loss", "train_run",
]
