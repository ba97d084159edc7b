"""VAE-LIME: local explanations of black-box regressors with VAE-generated perturbations."""

__version__ = "0.1.0"

from vaelime.blackbox import AnalyticBlackBox, AnalyticSpec, MlpBlackBox, train_mlp_regressor
from vaelime.dataio import Dataset, SynthConfig, generate, load_csv, split, write_csv
from vaelime.sampler import ExplainConfig, build_lime_set, build_vae_lime_set
from vaelime.surrogate import Explanation, FidelityReport, LinearSurrogate, explain_instance
from vaelime.vae import VaeModel, VaeTrainConfig, train_vae

__all__ = [
    "AnalyticBlackBox",
    "AnalyticSpec",
    "Dataset",
    "ExplainConfig",
    "Explanation",
    "FidelityReport",
    "LinearSurrogate",
    "MlpBlackBox",
    "SynthConfig",
    "VaeModel",
    "VaeTrainConfig",
    "build_lime_set",
    "build_vae_lime_set",
    "explain_instance",
    "generate",
    "load_csv",
    "split",
    "train_mlp_regressor",
    "train_vae",
    "write_csv",
]
