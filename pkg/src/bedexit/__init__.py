"""Load-cell time series -> complementary image encodings -> bed-exit intent."""

from .config import RunConfig, SignalConfig, load_run_config, parse_run_config
from .imaging import (
    EncodingConfig,
    ImageTensor,
    TextureMatrices,
    encode_gasf,
    encode_line_plot,
    encode_mtf,
    encode_rp,
    encode_window_pair,
    paa_downsample,
    rp_epsilon_from_quantile,
    stack_texture_image,
)
from .metrics import EvalReport, auprc, confusion, evaluate
from .model import (
    AdamW,
    BedExitModel,
    ModelConfig,
    Prediction,
    loss_bce,
    predict,
    predict_probs,
)
from .signals import (
    RawStream,
    SignalFrame,
    Window,
    WindowSpec,
    bandpass_vibration,
    derive_frame,
    detect_occupancy,
    extract_windows,
    in_bed_duration,
)
from .synth import Episode, SynthConfig, generate_episode, split_episodes
from .training import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "BedExitModel",
    "EncodingConfig",
    "Episode",
    "EvalReport",
    "ImageTensor",
    "ModelConfig",
    "Prediction",
    "RawStream",
    "RunConfig",
    "SignalConfig",
    "SignalFrame",
    "SynthConfig",
    "TextureMatrices",
    "TrainConfig",
    "TrainResult",
    "Window",
    "WindowSpec",
    "auprc",
    "bandpass_vibration",
    "confusion",
    "derive_frame",
    "detect_occupancy",
    "encode_gasf",
    "encode_line_plot",
    "encode_mtf",
    "encode_rp",
    "encode_window_pair",
    "evaluate",
    "extract_windows",
    "generate_episode",
    "in_bed_duration",
    "load_run_config",
    "loss_bce",
    "paa_downsample",
    "parse_run_config",
    "predict",
    "predict_probs",
    "rp_epsilon_from_quantile",
    "split_episodes",
    "stack_texture_image",
    "train",
]
