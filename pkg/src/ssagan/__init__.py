"""Frame-wise action segmentation with a semi-supervised adversarial model and gated temporal context."""

from .action_code import decode, encode
from .dataset import Dataset, FrameSequence, SynthSpec, read_dataset, synth_generate, write_dataset
from .errors import (ConfigurationError, ContractError, FormatError, IncompatibleCheckpointError,
                     NumericalError, SSAGError, ValidationError)
from .metrics import edit_score, extract_segments, f1_at_k, frame_accuracy, map_mid
from .model import ModelConfig, build_model
from .training import VARIANTS, TrainConfig, infer_labels, train_epochs

__version__ = "0.1.0"
