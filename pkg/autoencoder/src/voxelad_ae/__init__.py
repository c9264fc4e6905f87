"""3D convolutional autoencoder anomaly scorer."""

from .config import AEConfig
from .model import ConvAutoencoder3D, build_model, layer_shapes
from .score import score_file, score_zmap
from .train import TrainingTrace, load_model_dir, load_zmaps, save_model_dir, train

__version__ = "0.1.0"
