"""Per-cell background modelling and object extraction for roadside LiDAR."""
from .config import RunConfig, load_config
from .errors import LidarBGError
from .model import BackgroundModel, load_model, save_model, train
from .pointio import Frame, read_frames, write_frames
from .tensorize import SensorConfig, tensorize_frame

__version__ = "0.1.0"

__all__ = ["BackgroundModel", "Frame", "LidarBGError", "RunConfig", "SensorConfig", "load_config", "load_model",
           "read_frames", "save_model", "tensorize_frame", "train", "write_frames", "__version__"]
