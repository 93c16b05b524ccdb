"""Edge-hole image inpainting by compression to a thumbnail and texture-selection decompression."""

from .compression_net import Network, build_network, init_parameters, default_spec
from .decompression import decompress, select_textures
from .masks import edge_mask, irregular_mask, rect_mask, sample_training_mask

__version__ = "0.1.0"

__all__ = [
    "Network",
    "build_network",
    "init_parameters",
    "default_spec",
    "decompress",
    "select_textures",
    "edge_mask",
    "irregular_mask",
    "rect_mask",
    "sample_training_mask",
]
