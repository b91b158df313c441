"""Range-based integer quantization, bit-packing, and smoothing diagnostics.

Each tensor is stored as (integer codes, min, max) with a uniform grid of
2^b - 1 intervals and no zero point. Range endpoints are float32, rounded
outward so every input value stays inside [min, max] and the half-step
round-trip bound holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import LatentState, RandomDecoder, generate_weights
from .errors import CorruptDataError
from .model import ModelConfig, TargetWeights

MAX_BITS = 16


def _f32_outward(vmin: float, vmax: float) -> tuple[float, float]:
    lo = np.float32(vmin)
    if float(lo) > vmin:
        lo = np.nextafter(lo, np.float32(-np.inf))
    hi = np.float32(vmax)
    if float(hi) < vmax:
        hi = np.nextafter(hi, np.float32(np.inf))
    return float(lo), float(hi)


@dataclass
class QuantizedTensor:
    codes: np.ndarray  # uint16, one code per element
    minimum: float  # float32-representable
    maximum: float
    bits: int

    @property
    def count(self) -> int:
        return int(self.codes.size)

    def __post_init__(self):
        if not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must be in [1, {MAX_BITS}]")
        if self.minimum > self.maximum:
            raise ValueError("minimum must not exceed maximum")


def quantize(values, bits: int) -> QuantizedTensor:
    """Quantize a tensor to `bits` with round-half-away-from-zero."""
    if not 1 <= bits <= MAX_BITS:
        raise ValueError(f"bits must be in [1, {MAX_BITS}]")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    lo, hi = _f32_outward(float(v.min()), float(v.max()))
    levels = (1 << bits) - 1
    if lo == hi:
        codes = np.zeros(v.size, dtype=np.uint16)
    else:
        step = (hi - lo) / levels
        x = (v - lo) / step  # >= 0 since lo <= min(v)
        codes = np.minimum(np.floor(x + 0.5), levels).astype(np.uint16)
    return QuantizedTensor(codes=codes, minimum=lo, maximum=hi, bits=bits)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    levels = (1 << q.bits) - 1
    if np.any(q.codes > levels):
        raise CorruptDataError("quantized code exceeds bit-width range")
    if q.minimum == q.maximum:
        return np.full(q.count, q.minimum)
    step = (q.maximum - q.minimum) / levels
    return q.minimum + q.codes.astype(np.float64) * step


def packed_size(bits: int, count: int) -> int:
    """Bytes used by `count` codes: tight bitstream below 8 bits, whole bytes above."""
    if bits < 8:
        return (count * bits + 7) // 8
    return ((bits + 7) // 8) * count


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Serialize codes; sub-byte widths use an LSB-first bitstream."""
    codes = np.asarray(codes, dtype=np.uint16)
    if bits >= 9:
        return codes.astype("<u2").tobytes()
    if bits == 8:
        return codes.astype(np.uint8).tobytes()
    bitmat = np.unpackbits(codes.astype("<u2")[:, None].view(np.uint8),
                           axis=1, bitorder="little")[:, :bits]
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_codes(data: bytes, bits: int, count: int) -> np.ndarray:
    if len(data) != packed_size(bits, count):
        raise CorruptDataError("packed code payload has the wrong size")
    if bits >= 9:
        return np.frombuffer(data, dtype="<u2").astype(np.uint16)
    if bits == 8:
        return np.frombuffer(data, dtype=np.uint8).astype(np.uint16)
    flat = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    flat = flat[:count * bits].reshape(count, bits)
    out = np.zeros((count, 16), dtype=np.uint8)
    out[:, :bits] = flat
    return np.packbits(out, axis=1, bitorder="little").view("<u2").reshape(count).astype(np.uint16)


@dataclass
class QuantizedModel:
    """All quantized tensors of one model, tagged by role."""

    kind: str  # "doh" | "mlp"
    tensors: list[tuple[str, QuantizedTensor]]
    bits: int

    def tensor(self, tag: str) -> QuantizedTensor:
        for t, q in self.tensors:
            if t == tag:
                return q
        raise KeyError(tag)


def quantize_model_doh(latent: LatentState, bits: int) -> QuantizedModel:
    """z as one tensor, each bias vector separately, all at the same width."""
    tensors = [("z", quantize(latent.z, bits))]
    for l, b in enumerate(latent.biases):
        tensors.append((f"b{l}", quantize(b, bits)))
    return QuantizedModel(kind="doh", tensors=tensors, bits=bits)


def quantize_model_mlp(weights: TargetWeights, bits: int) -> QuantizedModel:
    tensors = []
    for l, w in enumerate(weights.weights):
        tensors.append((f"W{l}", quantize(w, bits)))
    for l, b in enumerate(weights.biases):
        tensors.append((f"b{l}", quantize(b, bits)))
    return QuantizedModel(kind="mlp", tensors=tensors, bits=bits)


def latent_from_quantized(qmodel: QuantizedModel) -> LatentState:
    if qmodel.kind != "doh":
        raise ValueError("expected a doh quantized model")
    z = dequantize(qmodel.tensor("z"))
    biases = []
    for l in range(len(qmodel.tensors) - 1):
        biases.append(dequantize(qmodel.tensor(f"b{l}")))
    return LatentState(z=z, biases=biases)


def weights_from_quantized(qmodel: QuantizedModel, config: ModelConfig) -> TargetWeights:
    if qmodel.kind != "mlp":
        raise ValueError("expected an mlp quantized model")
    weights, biases = [], []
    for l, (fo, fi) in enumerate(config.layer_shapes()):
        weights.append(dequantize(qmodel.tensor(f"W{l}")).reshape(fo, fi))
        biases.append(dequantize(qmodel.tensor(f"b{l}")))
    return TargetWeights(weights=weights, biases=biases)


def quantized_latent_view(latent: LatentState, bits: int) -> LatentState:
    """dequantize(quantize(.)) of z and biases; the forward view used by QAT."""
    z = dequantize(quantize(latent.z, bits))
    biases = [dequantize(quantize(b, bits)) for b in latent.biases]
    return LatentState(z=z, biases=biases)


@dataclass
class SmoothingReport:
    bits: int
    err_latent: float  # mean squared error of B @ Q(z) against B @ z
    err_direct: float  # mean squared error of Q(W) against W, per-layer quantized
    err_latent_layers: list[float]
    err_direct_layers: list[float]
    unique_latent_layers: list[int]
    unique_direct_layers: list[int]


def smoothing_error(decoder: RandomDecoder, latent: LatentState, bits: int) -> SmoothingReport:
    """Compare quantizing the latent (then projecting) against quantizing
    the generated weights directly."""
    exact = generate_weights(decoder, latent)
    through_latent = generate_weights(
        decoder, LatentState(z=dequantize(quantize(latent.z, bits)), biases=latent.biases))
    e_lat, e_dir, u_lat, u_dir = [], [], [], []
    sq_lat = sq_dir = 0.0
    total = 0
    for l in range(len(decoder.layer_shapes)):
        w = exact.weights[l].reshape(-1)
        w_lat = through_latent.weights[l].reshape(-1)
        w_dir = dequantize(quantize(w, bits))
        d_lat = float(np.mean((w_lat - w) ** 2))
        d_dir = float(np.mean((w_dir - w) ** 2))
        e_lat.append(d_lat)
        e_dir.append(d_dir)
        u_lat.append(int(np.unique(w_lat).size))
        u_dir.append(int(np.unique(w_dir).size))
        sq_lat += d_lat * w.size
        sq_dir += d_dir * w.size
        total += w.size
    return SmoothingReport(
        bits=bits,
        err_latent=sq_lat / total,
        err_direct=sq_dir / total,
        err_latent_layers=e_lat,
        err_direct_layers=e_dir,
        unique_latent_layers=u_lat,
        unique_direct_layers=u_dir,
    )
