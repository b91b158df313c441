"""Latent-code signal codec with seed-reconstructible random projections.

A low-dimensional latent vector is decoded into the weights of a sinusoidal
coordinate network through fixed per-layer random matrices that any party
can regenerate from one integer seed. Only the latent code, biases and the
seed are quantized and transmitted.
"""

from .container import (
    CompressedArtifact,
    RateReport,
    decode_weights,
    entropy_stage,
    entropy_unstage,
    pack,
    rate_report,
    unpack,
)
from .decoder import (
    LatentState,
    RandomDecoder,
    bound_for_layer,
    doh_param_count,
    generate_weights,
    init_latent,
    pullback,
)
from .errors import CorruptDataError, TrainingDiverged
from .kernels import BACKEND
from .model import (
    GradientSet,
    ModelConfig,
    TargetWeights,
    backward,
    forward,
    init_mlp,
    param_count,
    render_field,
    render_image,
)
from .numerics import RngStream, matvec, matvec_transposed, stream_u64, stream_uniform
from .quantization import (
    QuantizedModel,
    QuantizedTensor,
    dequantize,
    quantize,
    quantize_model_doh,
    quantize_model_mlp,
    smoothing_error,
)
from .signals import (
    CoordinateDataset,
    ImageSignal,
    OccupancySignal,
    PositionalEncodingSpec,
    encode,
    grid_coords,
    image_dataset,
    iou,
    load_image,
    load_occupancy,
    occupancy_dataset,
    psnr,
    save_image,
    save_occupancy,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainReport,
    adam_step,
    image_evaluator,
    occupancy_evaluator,
    train_doh,
    train_mlp,
    train_qat,
)

__version__ = "0.1.0"
