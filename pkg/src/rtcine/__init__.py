"""Non-neural numerics for building segmented 3D cine MRI from stacks of real-time 2D cines."""
from .io import load_volume, save_volume
from .volume import LABEL_NAMES, LabelVolume, Volume

__all__ = ["LABEL_NAMES", "LabelVolume", "Volume", "load_volume", "save_volume"]
__version__ = "0.1.0"
