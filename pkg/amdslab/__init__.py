"""
Attack-aware multi-signal defense lab for network intrusion detection ensembles.
"""

from .reader import load_csv, load_model, synth_generate
from .model import ClassifierSpec, TrainedModel, fit, fit_ensemble
from .pipeline import SystemManifest, build_system, infer, infer_batch, train
from .output import plot_attack_accuracy, plot_weight_heatmap
