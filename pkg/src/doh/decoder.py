"""Random-projection weight decoder.

Each layer's flattened weights are the image of one shared latent vector z
under a fixed random matrix whose entries come from a counter-based stream,
so the whole decoder is reconstructible from a single integer seed. Matrix
bounds are chosen so generated weights match the sinusoidal-MLP init
variance layer by layer: the uniform bound solves
Var(B) = Var(W) / (n Var(z)) with z ~ U(+-1/n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ModelConfig, TargetWeights, GradientSet
from .numerics import RngStream, stream_u64

# stream index (one past any layer index) reserved for the latent init
_LATENT_STREAM_OFFSET = 0


@dataclass
class LatentState:
    """The trainable payload: shared latent z plus per-layer bias vectors."""

    z: np.ndarray
    biases: list[np.ndarray]

    def copy(self) -> "LatentState":
        return LatentState(z=self.z.copy(), biases=[b.copy() for b in self.biases])


def bound_for_layer(config: ModelConfig, latent_dim: int, layer: int) -> float:
    """Uniform bound for the layer's projection matrix entries.

    Input layer: sqrt(3n)/fan_in. Other layers: sqrt(3n/(omega^2 * fan_in)),
    where fan_in equals the hidden width.
    """
    if latent_dim < 1:
        raise ValueError("latent_dim must be >= 1")
    shapes = config.layer_shapes()
    if not 0 <= layer < len(shapes):
        raise ValueError(f"layer must be in [0, {len(shapes)})")
    _, fan_in = shapes[layer]
    if layer == 0:
        return math.sqrt(3.0 * latent_dim) / fan_in
    return math.sqrt(3.0 * latent_dim / (config.omega ** 2 * fan_in))


class RandomDecoder:
    """Per-layer fixed random matrices, derived entirely from `global_seed`.

    Entry (i, j) of layer l's matrix (flat weight index i, latent index j) is
    the uniform draw at stream position i*n + j of the layer's child seed.
    `mode` picks between cached matrices and on-the-fly regeneration; both
    produce bit-identical weights.
    """

    def __init__(self, config: ModelConfig, latent_dim: int, global_seed: int,
                 mode: str = "materialized"):
        if latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if mode not in ("materialized", "streamed"):
            raise ValueError("mode must be 'materialized' or 'streamed'")
        self.config = config
        self.latent_dim = latent_dim
        self.global_seed = global_seed & ((1 << 64) - 1)
        self.mode = mode
        self.layer_shapes = config.layer_shapes()
        root = RngStream(self.global_seed)
        self.layer_seeds = [stream_u64(root, l) for l in range(len(self.layer_shapes))]
        self.latent_seed = stream_u64(root, len(self.layer_shapes))
        self.bounds = [bound_for_layer(config, latent_dim, l) for l in range(len(self.layer_shapes))]
        self._matrices: list[np.ndarray] | None = None

    def matrix(self, layer: int) -> np.ndarray:
        """The (fan_out*fan_in, n) projection matrix of one layer, cached."""
        if self._matrices is None:
            self._matrices = [None] * len(self.layer_shapes)  # type: ignore[list-item]
        if self._matrices[layer] is None:
            fo, fi = self.layer_shapes[layer]
            flat = kernels.uniform_fill(self.layer_seeds[layer], 0,
                                        fo * fi * self.latent_dim, self.bounds[layer])
            self._matrices[layer] = flat.reshape(fo * fi, self.latent_dim)
        return self._matrices[layer]

    def drop_cache(self) -> None:
        self._matrices = None


def init_latent(decoder: RandomDecoder) -> LatentState:
    """z ~ U(-1/n, 1/n) from the decoder's dedicated latent stream; hidden
    biases zero, output bias 0.5."""
    n = decoder.latent_dim
    z = kernels.uniform_fill(decoder.latent_seed, _LATENT_STREAM_OFFSET, n, 1.0 / n)
    biases = []
    last = len(decoder.layer_shapes) - 1
    for l, (fo, _) in enumerate(decoder.layer_shapes):
        b = np.zeros(fo)
        if l == last:
            b[:] = 0.5
        biases.append(b)
    return LatentState(z=z, biases=biases)


def generate_weights(decoder: RandomDecoder, latent: LatentState) -> TargetWeights:
    """Materialize target weights W_l = reshape(B_l z); biases pass through."""
    z = np.ascontiguousarray(latent.z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != decoder.latent_dim:
        raise ValueError(f"latent z must be a vector of length {decoder.latent_dim}")
    if len(latent.biases) != len(decoder.layer_shapes):
        raise ValueError("latent bias count does not match decoder layers")
    weights, biases = [], []
    for l, (fo, fi) in enumerate(decoder.layer_shapes):
        if latent.biases[l].shape != (fo,):
            raise ValueError(f"layer {l}: expected bias shape {(fo,)}")
        if decoder.mode == "materialized":
            flat = kernels.ordered_matvec(decoder.matrix(l), z)
        else:
            flat = kernels.project_stream(decoder.layer_seeds[l], z, fo * fi,
                                          decoder.bounds[l])
        weights.append(flat.reshape(fo, fi))
        biases.append(latent.biases[l].copy())
    return TargetWeights(weights=weights, biases=biases)


def pullback(decoder: RandomDecoder, grads: GradientSet) -> tuple[np.ndarray, list[np.ndarray]]:
    """Chain rule through the projection: grad_z = sum_l B_l^T vec(dW_l)."""
    if len(grads.weights) != len(decoder.layer_shapes):
        raise ValueError("gradient layer count does not match decoder layers")
    grad_z = np.zeros(decoder.latent_dim)
    for l, (fo, fi) in enumerate(decoder.layer_shapes):
        if grads.weights[l].shape != (fo, fi):
            raise ValueError(f"layer {l}: expected gradient shape {(fo, fi)}")
        flat = np.ascontiguousarray(grads.weights[l], dtype=np.float64).reshape(-1)
        if decoder.mode == "materialized":
            grad_z += decoder.matrix(l).T @ flat
        else:
            grad_z += kernels.project_stream_t(decoder.layer_seeds[l], flat,
                                               decoder.latent_dim, decoder.bounds[l])
    grad_biases = [g.copy() for g in grads.biases]
    return grad_z, grad_biases


def doh_param_count(config: ModelConfig, latent_dim: int) -> int:
    """Transmitted parameters: latent plus biases; positional encoding free."""
    if latent_dim < 1:
        raise ValueError("latent_dim must be >= 1")
    return latent_dim + sum(fo for fo, _ in config.layer_shapes())
