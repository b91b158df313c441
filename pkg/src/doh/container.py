"""Bit-exact containers: the DOH1 compressed format and training checkpoints.

A DOH1 container carries everything needed to reconstruct the quantized
model on another machine: model kind, architecture, the global seed (for
the latent kind, whose projection matrices are regenerated rather than
transmitted), and the quantized tensor table. Payload integrity is guarded
by a trailing CRC-32. An optional DEFLATE stage wraps the container in a
DOHZ envelope.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .decoder import LatentState, RandomDecoder, doh_param_count, generate_weights
from .errors import CorruptDataError
from .model import ModelConfig, TargetWeights, param_count
from .quantization import (
    QuantizedModel,
    QuantizedTensor,
    latent_from_quantized,
    pack_codes,
    packed_size,
    unpack_codes,
    weights_from_quantized,
)
from .signals import PositionalEncodingSpec

MAGIC = b"DOH1"
MAGIC_DEFLATE = b"DOHZ"
MAGIC_CHECKPOINT = b"DOHK"
VERSION = 1

_KIND_CODES = {"doh": 1, "mlp": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_SIGNAL_CODES = {"none": 0, "image": 1, "occupancy": 2}
_SIGNAL_NAMES = {v: k for k, v in _SIGNAL_CODES.items()}


@dataclass
class CompressedArtifact:
    kind: str  # "doh" | "mlp"
    config: ModelConfig
    bits: int
    qmodel: QuantizedModel
    global_seed: int = 0  # doh only
    latent_dim: int = 0  # doh only
    signal_kind: str = "none"
    signal_shape: tuple[int, ...] = ()


def _pack_config(config: ModelConfig) -> bytes:
    pe = -1 if config.encoding is None else config.encoding.frequencies
    return struct.pack("<IIIIdi", config.in_dim, config.out_dim, config.width,
                       config.hidden, config.omega, pe)


def _unpack_config(buf: bytes, off: int) -> tuple[ModelConfig, int]:
    in_dim, out_dim, width, hidden, omega, pe = struct.unpack_from("<IIIIdi", buf, off)
    enc = None if pe < 0 else PositionalEncodingSpec(pe)
    cfg = ModelConfig(in_dim=in_dim, out_dim=out_dim, width=width, hidden=hidden,
                      omega=omega, encoding=enc)
    return cfg, off + struct.calcsize("<IIIIdi")


def pack(artifact: CompressedArtifact) -> bytes:
    """Serialize to the little-endian DOH1 layout; fully deterministic."""
    if artifact.kind not in _KIND_CODES:
        raise ValueError(f"unknown model kind {artifact.kind!r}")
    if artifact.signal_kind not in _SIGNAL_CODES:
        raise ValueError(f"unknown signal kind {artifact.signal_kind!r}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BBBB", VERSION, _KIND_CODES[artifact.kind], artifact.bits,
                       _SIGNAL_CODES[artifact.signal_kind])
    out += _pack_config(artifact.config)
    out += struct.pack("<QI", artifact.global_seed, artifact.latent_dim)
    dims = tuple(artifact.signal_shape) + (0, 0, 0)
    out += struct.pack("<III", *dims[:3])
    out += struct.pack("<H", len(artifact.qmodel.tensors))
    for tag, q in artifact.qmodel.tensors:
        raw = tag.encode("ascii")
        out += struct.pack("<B", len(raw))
        out += raw
        out += struct.pack("<Iff", q.count, np.float32(q.minimum), np.float32(q.maximum))
        out += pack_codes(q.codes, artifact.bits)
    out += struct.pack("<I", zlib.crc32(bytes(out[4:])) & 0xFFFFFFFF)
    return bytes(out)


def unpack(data: bytes) -> CompressedArtifact:
    """Exact inverse of pack; raises CorruptDataError on any damage."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise CorruptDataError("not a DOH1 container")
    stored_crc = struct.unpack_from("<I", data, len(data) - 4)[0]
    if zlib.crc32(data[4:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptDataError("container checksum mismatch")
    try:
        off = 4
        version, kind_code, bits, signal_code = struct.unpack_from("<BBBB", data, off)
        off += 4
        if version != VERSION:
            raise CorruptDataError(f"unsupported container version {version}")
        if kind_code not in _KIND_NAMES or signal_code not in _SIGNAL_NAMES:
            raise CorruptDataError("unknown kind or signal code")
        config, off = _unpack_config(data, off)
        global_seed, latent_dim = struct.unpack_from("<QI", data, off)
        off += struct.calcsize("<QI")
        dims = struct.unpack_from("<III", data, off)
        off += 12
        (n_tensors,) = struct.unpack_from("<H", data, off)
        off += 2
        tensors = []
        for _ in range(n_tensors):
            (tag_len,) = struct.unpack_from("<B", data, off)
            off += 1
            tag = data[off:off + tag_len].decode("ascii")
            off += tag_len
            count, mn, mx = struct.unpack_from("<Iff", data, off)
            off += struct.calcsize("<Iff")
            size = packed_size(bits, count)
            payload = data[off:off + size]
            if len(payload) != size:
                raise CorruptDataError("truncated tensor payload")
            off += size
            codes = unpack_codes(payload, bits, count)
            tensors.append((tag, QuantizedTensor(codes=codes, minimum=float(mn),
                                                 maximum=float(mx), bits=bits)))
        if off != len(data) - 4:
            raise CorruptDataError("trailing bytes in container")
    except struct.error as exc:
        raise CorruptDataError(f"truncated container: {exc}") from exc
    kind = _KIND_NAMES[kind_code]
    signal_kind = _SIGNAL_NAMES[signal_code]
    shape: tuple[int, ...] = ()
    if signal_kind == "image":
        shape = (dims[0], dims[1])
    elif signal_kind == "occupancy":
        shape = dims
    return CompressedArtifact(
        kind=kind, config=config, bits=bits,
        qmodel=QuantizedModel(kind=kind, tensors=tensors, bits=bits),
        global_seed=global_seed, latent_dim=latent_dim,
        signal_kind=signal_kind, signal_shape=shape)


def decode_weights(artifact: CompressedArtifact, mode: str = "streamed") -> TargetWeights:
    """Reconstruct target weights from container contents alone."""
    if artifact.kind == "doh":
        decoder = RandomDecoder(artifact.config, artifact.latent_dim,
                                artifact.global_seed, mode=mode)
        return generate_weights(decoder, latent_from_quantized(artifact.qmodel))
    return weights_from_quantized(artifact.qmodel, artifact.config)


def entropy_stage(data: bytes, codec: str = "deflate") -> bytes:
    """Lossless compression of a byte stream; codec 'none' is the identity."""
    if codec == "none":
        return data
    if codec == "deflate":
        return zlib.compress(data, 9)
    raise ValueError(f"unknown entropy codec {codec!r}")


def entropy_unstage(data: bytes, codec: str = "deflate") -> bytes:
    if codec == "none":
        return data
    if codec == "deflate":
        try:
            return zlib.decompress(data)
        except zlib.error as exc:
            raise CorruptDataError(f"deflate payload is corrupt: {exc}") from exc
    raise ValueError(f"unknown entropy codec {codec!r}")


def write_container(path, container_bytes: bytes, codec: str = "deflate") -> None:
    """Write the container, wrapping it in a DOHZ envelope when compressed."""
    with open(path, "wb") as fh:
        if codec == "none":
            fh.write(container_bytes)
        else:
            fh.write(MAGIC_DEFLATE)
            fh.write(struct.pack("<B", 1))
            fh.write(entropy_stage(container_bytes, codec))


def read_container(path) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == MAGIC_DEFLATE:
        if len(data) < 5 or data[4] != 1:
            raise CorruptDataError("unknown entropy envelope")
        return entropy_unstage(data[5:], "deflate")
    if data[:4] == MAGIC:
        return data
    raise CorruptDataError("not a DOH1/DOHZ file")


@dataclass
class RateReport:
    param_count: int
    estimated_bits: int  # params * bits; the headline, overhead-free figure
    estimated_bytes: int
    bpp: float | None
    container_bytes: int
    compressed_bytes: int


def rate_report(artifact: CompressedArtifact, pixel_count: int | None = None) -> RateReport:
    if pixel_count is not None and pixel_count <= 0:
        raise ValueError("pixel_count must be positive")
    if artifact.kind == "doh":
        params = doh_param_count(artifact.config, artifact.latent_dim)
    else:
        params = param_count(artifact.config)
    est_bits = params * artifact.bits
    raw = pack(artifact)
    return RateReport(
        param_count=params,
        estimated_bits=est_bits,
        estimated_bytes=(est_bits + 7) // 8,
        bpp=(est_bits / pixel_count) if pixel_count else None,
        container_bytes=len(raw),
        compressed_bytes=len(entropy_stage(raw, "deflate")),
    )


# --- full-precision training checkpoints -------------------------------------

def save_checkpoint(path, kind: str, config: ModelConfig, *, seed: int = 0,
                    latent: LatentState | None = None,
                    weights: TargetWeights | None = None,
                    signal_kind: str = "none",
                    signal_shape: tuple[int, ...] = ()) -> None:
    """Deterministic full-precision model state (pre-quantization)."""
    if kind == "doh":
        if latent is None:
            raise ValueError("doh checkpoint requires a latent state")
        arrays = [("z", latent.z)] + [(f"b{l}", b) for l, b in enumerate(latent.biases)]
        latent_dim = int(latent.z.shape[0])
    elif kind == "mlp":
        if weights is None:
            raise ValueError("mlp checkpoint requires target weights")
        arrays = [(f"W{l}", w) for l, w in enumerate(weights.weights)]
        arrays += [(f"b{l}", b) for l, b in enumerate(weights.biases)]
        latent_dim = 0
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    header = {
        "kind": kind,
        "config": {
            "in_dim": config.in_dim, "out_dim": config.out_dim,
            "width": config.width, "hidden": config.hidden,
            "omega": config.omega,
            "pe": -1 if config.encoding is None else config.encoding.frequencies,
        },
        "seed": seed,
        "latent_dim": latent_dim,
        "signal_kind": signal_kind,
        "signal_shape": list(signal_shape),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT)
        fh.write(struct.pack("<BI", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<H", len(arrays)))
        for name, arr in arrays:
            raw = name.encode("ascii")
            a = np.ascontiguousarray(arr, dtype=np.float64)
            fh.write(struct.pack("<B", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", a.ndim))
            for d in a.shape:
                fh.write(struct.pack("<I", d))
            fh.write(a.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (kind, config, seed, state, signal_kind, signal_shape); state is
    a LatentState for kind 'doh' and TargetWeights for kind 'mlp'."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC_CHECKPOINT:
        raise CorruptDataError("not a checkpoint file")
    try:
        version, hlen = struct.unpack_from("<BI", data, 4)
        if version != VERSION:
            raise CorruptDataError(f"unsupported checkpoint version {version}")
        off = 4 + struct.calcsize("<BI")
        header = json.loads(data[off:off + hlen].decode("utf-8"))
        off += hlen
        (n_arrays,) = struct.unpack_from("<H", data, off)
        off += 2
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<B", data, off)
            off += 1
            name = data[off:off + name_len].decode("ascii")
            off += name_len
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
            off += size * 8
            arrays[name] = arr.astype(np.float64)
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptDataError(f"damaged checkpoint: {exc}") from exc
    c = header["config"]
    enc = None if c["pe"] < 0 else PositionalEncodingSpec(c["pe"])
    config = ModelConfig(in_dim=c["in_dim"], out_dim=c["out_dim"], width=c["width"],
                         hidden=c["hidden"], omega=c["omega"], encoding=enc)
    n_layers = config.n_layers
    if header["kind"] == "doh":
        state: object = LatentState(
            z=arrays["z"].copy(),
            biases=[arrays[f"b{l}"].copy() for l in range(n_layers)])
    else:
        state = TargetWeights(
            weights=[arrays[f"W{l}"].copy() for l in range(n_layers)],
            biases=[arrays[f"b{l}"].copy() for l in range(n_layers)])
    return (header["kind"], config, header["seed"], state,
            header["signal_kind"], tuple(header["signal_shape"]))
