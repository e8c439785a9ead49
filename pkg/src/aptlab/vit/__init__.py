from src.aptlab.vit.config import ViTConfig
from src.aptlab.vit.model import ViTModel, load_weights, param_shapes, patchify, save_weights

__all__ = ["ViTConfig", "ViTModel", "load_weights", "param_shapes", "patchify", "save_weights"]
