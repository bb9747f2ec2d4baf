"""Full-reference coded stereo audio quality prediction toolkit.

Pipeline: WAV pair -> gammatone spectrograms of L/R/M/S -> stacked input
tensor -> Inception/squeeze-excitation network -> 0-100 quality score.
Includes training with k-fold rotation, mono-to-stereo weight transfer,
synthetic dataset generation, and correlation evaluation.
"""

from .audio_io import AudioExcerpt, RatedPair, load_wav, read_manifest, save_wav, validate_pair
from .checkpoint import CheckpointInfo, load_checkpoint, save_checkpoint
from .conditioning import (
    InputTensor,
    build_input_tensor,
    dual_mono,
    pad_to_length,
    swap_lr,
    to_mid_side,
)
from .evaluation import EvalReport, evaluate, pearson, spearman
from .gammatone import (
    FilterbankSpec,
    FrontendConfig,
    GammatoneSpectrogram,
    compute_spectrogram,
    design_filterbank,
)
from .model import (
    BlockConfig,
    ModelConfig,
    StereoQualityNet,
    build_model,
    count_params,
    gradients,
    mono_config,
    transfer_from_mono,
)
from .synthetic import DegradationSpec, gen_dataset, lowpass, make_demo_sources, ms_crosstalk
from .training import TrainConfig, TrainHistory, adam_step, make_folds, smooth_l1, train

__version__ = "0.1.0"

__all__ = [
    "AudioExcerpt",
    "BlockConfig",
    "CheckpointInfo",
    "DegradationSpec",
    "EvalReport",
    "FilterbankSpec",
    "FrontendConfig",
    "GammatoneSpectrogram",
    "InputTensor",
    "ModelConfig",
    "RatedPair",
    "StereoQualityNet",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "build_input_tensor",
    "build_model",
    "compute_spectrogram",
    "count_params",
    "design_filterbank",
    "dual_mono",
    "evaluate",
    "gen_dataset",
    "gradients",
    "load_checkpoint",
    "load_wav",
    "lowpass",
    "make_demo_sources",
    "make_folds",
    "mono_config",
    "ms_crosstalk",
    "pad_to_length",
    "pearson",
    "read_manifest",
    "save_checkpoint",
    "save_wav",
    "smooth_l1",
    "spearman",
    "swap_lr",
    "to_mid_side",
    "train",
    "transfer_from_mono",
    "validate_pair",
]
