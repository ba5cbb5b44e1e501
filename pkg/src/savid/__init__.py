"""Desk-scale three-stage LiDAR-camera fusion pipeline with a
sensor-corruption robustness harness."""

from .config import PipelineConfig, load_config
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["PipelineConfig", "load_config", "KERNEL_BACKEND", "__version__"]
