"""CNN inference and introspection toolkit.

Describe a convolutional network in a small text DSL (or use the two
built-ins), run images through it with weights from a simple binary
container, and look inside: exact receptive-field arithmetic, pixel-space
reconstruction of any layer's representation, t-SNE maps of patch
representation spaces, and per-layer activation sparsity profiles.
"""

from .engine import (ForwardTrace, preprocess, run_forward, softmax,
                     top_k_predictions, validate_weights)
from .errors import (CnnScopeError, EngineError, ImageFormatError, NetSpecError,
                     PreconditionError, SelectionError, WeightFormatError)
from .estimators import LayerReconstructor, PatchExtractor, SparsityProfiler
from .fileio import (read_image, read_manifest, read_tensors, read_weights,
                     resize_nearest, write_image, write_tensors, write_weights)
from .kernels import (ConvWeights, FcWeights, Switches, conv_forward,
                      conv_reverse, fc_forward, fc_reverse, maxpool_forward,
                      maxpool_reverse, relu_forward, relu_reverse)
from .netspec import (Conv, Fc, MaxPool, NetSpec, PixelBox, ReceptiveField,
                      Relu, Softmax, builtin_netspec, neuron_bbox,
                      parse_netspec, print_netspec, receptive_fields,
                      shape_trace)
from .patches import (PatchRecord, compose_grid, extract_patches, grid_fill,
                      top_activated_filters, top_patches_for_filter,
                      unit_rescale)
from .reconstruct import Selection, reconstruct, reconstruct_series, to_displayable
from .sparsity import (LayerSparsity, SparsityReport, compare_sparsity,
                       layer_sparsity)
from .tsne import TsneEmbedding, TsneResult, run_tsne, tsne

__version__ = "0.1.0"

__all__ = [
    "CnnScopeError", "NetSpecError", "EngineError", "SelectionError",
    "PreconditionError", "WeightFormatError", "ImageFormatError",
    "NetSpec", "Conv", "Relu", "MaxPool", "Fc", "Softmax",
    "ReceptiveField", "PixelBox",
    "parse_netspec", "print_netspec", "builtin_netspec",
    "shape_trace", "receptive_fields", "neuron_bbox",
    "ConvWeights", "FcWeights", "Switches",
    "conv_forward", "conv_reverse", "relu_forward", "relu_reverse",
    "maxpool_forward", "maxpool_reverse", "fc_forward", "fc_reverse",
    "ForwardTrace", "preprocess", "validate_weights", "run_forward",
    "softmax", "top_k_predictions",
    "Selection", "reconstruct", "reconstruct_series", "to_displayable",
    "PatchRecord", "extract_patches", "top_activated_filters",
    "top_patches_for_filter", "grid_fill", "compose_grid", "unit_rescale",
    "TsneEmbedding", "TsneResult", "run_tsne", "tsne",
    "LayerSparsity", "SparsityReport", "layer_sparsity", "compare_sparsity",
    "PatchExtractor", "SparsityProfiler", "LayerReconstructor",
    "read_weights", "write_weights", "read_tensors", "write_tensors",
    "read_image", "write_image", "resize_nearest", "read_manifest",
]
