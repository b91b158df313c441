"""Command-line pipeline: train, compress, decompress, eval, sweep, info.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command is
deterministic given its flags and input files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import kernels
from .container import (
    CompressedArtifact,
    decode_weights,
    load_checkpoint,
    pack,
    rate_report,
    read_container,
    save_checkpoint,
    unpack,
    write_container,
)
from .decoder import RandomDecoder, doh_param_count, init_latent
from .errors import CorruptDataError, TrainingDiverged
from .model import ModelConfig, param_count, render_image, render_field
from .numerics import RngStream
from .quantization import quantize_model_doh, quantize_model_mlp
from .signals import (
    PositionalEncodingSpec,
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
    TrainConfig,
    image_evaluator,
    occupancy_evaluator,
    train_doh,
    train_mlp,
)

_IMAGE_EXTS = {".png", ".ppm"}
_OCC_EXTS = {".occ", ".occ1"}


def _signal_kind(path: Path) -> str:
    ext = path.suffix.lower()
    if ext in _IMAGE_EXTS:
        return "image"
    if ext in _OCC_EXTS:
        return "occupancy"
    raise ValueError(f"unrecognized signal extension {ext!r} (.png/.ppm/.occ)")


def _load_signal(path: Path):
    kind = _signal_kind(path)
    if kind == "image":
        return kind, load_image(path)
    return kind, load_occupancy(path)


def _default_lr(kind: str, signal_kind: str) -> float:
    if kind == "doh":
        return 1e-6
    return 2e-4 if signal_kind == "image" else 1e-4


def _default_epochs(signal_kind: str) -> int:
    return 2000 if signal_kind == "image" else 250


def _default_batch(signal_kind: str) -> int:
    return 1024 if signal_kind == "image" else 20000


def _build_config(signal_kind: str, width: int, hidden: int, pe: int) -> ModelConfig:
    in_dim, out_dim = (2, 3) if signal_kind == "image" else (3, 1)
    enc = PositionalEncodingSpec(pe) if pe > 0 else None
    return ModelConfig(in_dim=in_dim, out_dim=out_dim, width=width, hidden=hidden,
                       encoding=enc)


def _dataset_and_eval(signal_kind: str, signal, config: ModelConfig):
    if signal_kind == "image":
        return image_dataset(signal, config.encoding), image_evaluator(signal, config)
    return occupancy_dataset(signal, config.encoding), occupancy_evaluator(signal, config)


def _signal_shape(signal_kind: str, signal) -> tuple[int, ...]:
    if signal_kind == "image":
        return (signal.height, signal.width)
    return signal.dims


def cmd_train(args, parser) -> int:
    input_path = Path(args.input)
    if not input_path.exists():
        parser.error(f"input signal not found: {input_path}")
    signal_kind, signal = _load_signal(input_path)
    config = _build_config(signal_kind, args.width, args.hidden, args.pe)
    dataset, eval_fn = _dataset_and_eval(signal_kind, signal, config)

    epochs = args.epochs if args.epochs is not None else _default_epochs(signal_kind)
    batch = args.batch if args.batch is not None else _default_batch(signal_kind)
    lr = args.lr if args.lr is not None else _default_lr(args.kind, signal_kind)
    tconf = TrainConfig(epochs=epochs, lr=lr, batch_size=batch, lr_gamma=args.gamma,
                        eval_every=args.eval_every, qat_bits=args.qat_bits,
                        seed=args.seed)

    if args.kind == "doh":
        if args.latent_dim is None:
            parser.error("--latent-dim is required for --kind doh")
        mode = "streamed" if args.streamed else "materialized"
        decoder = RandomDecoder(config, args.latent_dim, args.seed, mode=mode)
        best, report = train_doh(decoder, init_latent(decoder), dataset, tconf,
                                 eval_fn, quiet=args.quiet)
        save_checkpoint(args.output, "doh", config, seed=args.seed, latent=best,
                        signal_kind=signal_kind,
                        signal_shape=_signal_shape(signal_kind, signal))
        params = doh_param_count(config, args.latent_dim)
    else:
        if args.qat_bits is not None:
            parser.error("--qat-bits is only supported for --kind doh")
        from .model import init_mlp
        best, report = train_mlp(init_mlp(config, RngStream(args.seed)), config,
                                 dataset, tconf, eval_fn, quiet=args.quiet)
        save_checkpoint(args.output, "mlp", config, seed=args.seed, weights=best,
                        signal_kind=signal_kind,
                        signal_shape=_signal_shape(signal_kind, signal))
        params = param_count(config)

    summary = {
        "kind": args.kind,
        "params": params,
        "best_epoch": report.best_epoch,
        "best_metric": report.best_metric,
        "history": [[e, l, m] for e, l, m in report.history],
    }
    report_path = Path(args.report) if args.report else Path(f"{args.output}.report.json")
    report_path.write_text(json.dumps(summary, sort_keys=True, indent=1))
    print(json.dumps({"checkpoint": str(args.output),
                      "best_epoch": report.best_epoch,
                      "best_metric": report.best_metric}))
    return 0


def cmd_compress(args, parser) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        parser.error(f"checkpoint not found: {ckpt}")
    kind, config, seed, state, signal_kind, signal_shape = load_checkpoint(ckpt)
    if kind == "doh":
        qmodel = quantize_model_doh(state, args.bits)
        artifact = CompressedArtifact(kind="doh", config=config, bits=args.bits,
                                      qmodel=qmodel, global_seed=seed,
                                      latent_dim=int(state.z.shape[0]),
                                      signal_kind=signal_kind, signal_shape=signal_shape)
    else:
        qmodel = quantize_model_mlp(state, args.bits)
        artifact = CompressedArtifact(kind="mlp", config=config, bits=args.bits,
                                      qmodel=qmodel, signal_kind=signal_kind,
                                      signal_shape=signal_shape)
    raw = pack(artifact)
    write_container(args.output, raw, codec=args.entropy)
    pixels = None
    if signal_kind == "image" and len(signal_shape) == 2:
        pixels = signal_shape[0] * signal_shape[1]
    report = rate_report(artifact, pixels)
    out = {"container": str(args.output), "params": report.param_count,
           "estimated_bits": report.estimated_bits,
           "container_bytes": report.container_bytes,
           "file_bytes": os.path.getsize(args.output)}
    if report.bpp is not None:
        out["bpp"] = report.bpp
    print(json.dumps(out))
    return 0


def cmd_decompress(args, parser) -> int:
    src = Path(args.container)
    if not src.exists():
        parser.error(f"container not found: {src}")
    artifact = unpack(read_container(src))
    mode = "materialized" if args.materialized else "streamed"
    weights = decode_weights(artifact, mode=mode)
    if artifact.signal_kind == "image":
        h, w = artifact.signal_shape
        save_image(render_image(weights, artifact.config, h, w), args.output)
    elif artifact.signal_kind == "occupancy":
        field = render_field(weights, artifact.config, artifact.signal_shape)
        save_occupancy(field, args.output)  # thresholds at 0.5 when packing bits
    else:
        raise ValueError("container carries no signal shape; cannot render")
    print(json.dumps({"rendered": str(args.output)}))
    return 0


def _metric_json(value: float) -> object:
    return "inf" if math.isinf(value) else value


def cmd_eval(args, parser) -> int:
    rendered = Path(args.rendered)
    reference = Path(args.reference)
    for p in (rendered, reference):
        if not p.exists():
            parser.error(f"file not found: {p}")
    kind_a = _signal_kind(rendered)
    kind_b = _signal_kind(reference)
    if kind_a != kind_b:
        raise ValueError("rendered and reference signals have different types")
    out: dict[str, object]
    if kind_a == "image":
        a = load_image(rendered)
        b = load_image(reference)
        out = {"metric": "psnr", "value": _metric_json(psnr(a, b))}
        if args.container:
            artifact = unpack(read_container(args.container))
            out["bpp"] = rate_report(artifact, b.pixel_count).bpp
    else:
        a = load_occupancy(rendered)
        b = load_occupancy(reference)
        out = {"metric": "iou", "value": iou(a, b)}
    print(json.dumps(out))
    return 0


# --- sweep -------------------------------------------------------------------

def _sweep_train(spec: dict, kind: str, latent_dim: int | None):
    """One full-precision training run; pure function of (spec, kind, n)."""
    signal_kind, signal = _load_signal(Path(spec["dataset"]))
    config = _build_config(signal_kind, spec.get("width", 40), spec.get("hidden", 9),
                           spec.get("pe", 0))
    dataset, eval_fn = _dataset_and_eval(signal_kind, signal, config)
    lr_spec = spec.get("lr")
    if isinstance(lr_spec, dict):
        lr = lr_spec.get(kind, _default_lr(kind, signal_kind))
    elif lr_spec is not None:
        lr = float(lr_spec)
    else:
        lr = _default_lr(kind, signal_kind)
    epochs = spec.get("epochs", _default_epochs(signal_kind))
    batch = spec.get("batch_size", _default_batch(signal_kind))
    tconf = TrainConfig(epochs=epochs, lr=lr, batch_size=batch,
                        lr_gamma=spec.get("gamma", 0.999),
                        eval_every=spec.get("eval_every", 10),
                        seed=spec.get("seed", 0))
    if kind == "doh":
        decoder = RandomDecoder(config, latent_dim, tconf.seed)
        best, _ = train_doh(decoder, init_latent(decoder), dataset, tconf,
                            eval_fn, quiet=True)
    else:
        from .model import init_mlp
        best, _ = train_mlp(init_mlp(config, RngStream(tconf.seed)), config,
                            dataset, tconf, eval_fn, quiet=True)
    return best


def _sweep_metric(spec: dict, kind: str, latent_dim: int | None, bits: int, best):
    """PTQ the trained state at `bits` and evaluate the full signal."""
    signal_kind, signal = _load_signal(Path(spec["dataset"]))
    config = _build_config(signal_kind, spec.get("width", 40), spec.get("hidden", 9),
                           spec.get("pe", 0))
    if kind == "doh":
        qmodel = quantize_model_doh(best, bits)
        artifact = CompressedArtifact(kind="doh", config=config, bits=bits,
                                      qmodel=qmodel, global_seed=spec.get("seed", 0),
                                      latent_dim=latent_dim)
    else:
        qmodel = quantize_model_mlp(best, bits)
        artifact = CompressedArtifact(kind="mlp", config=config, bits=bits, qmodel=qmodel)
    weights = decode_weights(artifact, mode="materialized")
    if signal_kind == "image":
        rendered = render_image(weights, config, signal.height, signal.width)
        metric = psnr(rendered, signal)
        pixels = signal.pixel_count
    else:
        field = render_field(weights, config, signal.dims)
        metric = iou(field, signal)
        pixels = None
    report = rate_report(artifact, pixels)
    return metric, report


def cmd_sweep(args, parser) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        parser.error(f"sweep spec not found: {spec_path}")
    spec = json.loads(spec_path.read_text())
    kinds = spec.get("kinds", [])
    latent_dims = spec.get("latent_dims", [])
    bit_widths = spec.get("bit_widths", [])
    if not kinds or not latent_dims or not bit_widths:
        parser.error("sweep spec needs nonempty kinds, latent_dims and bit_widths")
    if any(not 1 <= b <= 16 for b in bit_widths):
        parser.error("bit_widths must lie in [1, 16]")
    if not Path(spec["dataset"]).exists():
        parser.error(f"dataset not found: {spec['dataset']}")

    # one full-precision run per (kind, n); the mlp run is shared across n
    train_keys: list[tuple[str, int | None]] = []
    for kind in kinds:
        if kind == "doh":
            train_keys += [("doh", n) for n in latent_dims]
        else:
            train_keys.append((kind, None))
    workers = int(os.environ.get("DOH_THREADS", "1"))
    trained: dict[tuple[str, int | None], object] = {}
    failures: dict[tuple[str, int | None], str] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(_sweep_train, spec, key[0], key[1])
                       for key in train_keys}
            for key, fut in futures.items():
                try:
                    trained[key] = fut.result()
                except Exception as exc:  # recorded per-row, sweep continues
                    failures[key] = str(exc)
    else:
        for key in train_keys:
            try:
                trained[key] = _sweep_train(spec, key[0], key[1])
            except Exception as exc:
                failures[key] = str(exc)

    rows = []
    for kind in sorted(kinds):
        for n in sorted(latent_dims):
            key = (kind, n if kind == "doh" else None)
            for bits in sorted(bit_widths):
                row = {"kind": kind, "width": spec.get("width", 40),
                       "hidden": spec.get("hidden", 9),
                       "n": n if kind == "doh" else "",
                       "bits": bits, "params": "", "est_bits": "", "bpp": "",
                       "metric": "", "status": "ok"}
                if key in failures:
                    row["status"] = f"error: {failures[key]}"
                else:
                    try:
                        metric, rep = _sweep_metric(spec, kind, key[1], bits, trained[key])
                        row.update(params=rep.param_count, est_bits=rep.estimated_bits,
                                   bpp="" if rep.bpp is None else rep.bpp,
                                   metric=metric)
                    except Exception as exc:
                        row["status"] = f"error: {exc}"
                rows.append(row)

    columns = ["kind", "width", "hidden", "n", "bits", "params", "est_bits",
               "bpp", "metric", "status"]
    sink = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(sink, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            sink.close()
    return 0 if any(r["status"] == "ok" for r in rows) else 1


def cmd_info(args, parser) -> int:
    if not args.file:
        print(json.dumps({"backend": kernels.BACKEND}))
        return 0
    path = Path(args.file)
    if not path.exists():
        parser.error(f"file not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"DOHK":
        kind, config, seed, state, signal_kind, signal_shape = load_checkpoint(path)
        out = {"type": "checkpoint", "kind": kind, "seed": seed,
               "signal_kind": signal_kind, "signal_shape": list(signal_shape),
               "width": config.width, "hidden": config.hidden,
               "pe": 0 if config.encoding is None else config.encoding.frequencies}
        if kind == "doh":
            out["latent_dim"] = int(state.z.shape[0])
            out["params"] = doh_param_count(config, out["latent_dim"])
        else:
            out["params"] = param_count(config)
    else:
        artifact = unpack(read_container(path))
        report = rate_report(artifact)
        out = {"type": "container", "kind": artifact.kind, "bits": artifact.bits,
               "signal_kind": artifact.signal_kind,
               "signal_shape": list(artifact.signal_shape),
               "params": report.param_count,
               "estimated_bits": report.estimated_bits,
               "container_bytes": report.container_bytes}
        if artifact.kind == "doh":
            out["latent_dim"] = artifact.latent_dim
            out["seed"] = artifact.global_seed
    print(json.dumps(out, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doh",
                                     description="latent-code random-projection signal codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model to a signal")
    p.add_argument("input", help="target signal (.png/.ppm/.occ)")
    p.add_argument("-o", "--output", required=True, help="checkpoint path")
    p.add_argument("--report", help="TrainReport JSON path (default: <output>.report.json)")
    p.add_argument("--kind", choices=["doh", "mlp"], required=True)
    p.add_argument("--width", type=int, default=40)
    p.add_argument("--hidden", type=int, default=9)
    p.add_argument("--pe", type=int, default=0, help="positional encoding frequencies (0 = off)")
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gamma", type=float, default=0.999)
    p.add_argument("--qat-bits", type=int)
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--streamed", action="store_true",
                   help="regenerate projection matrices on the fly (low memory)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compress", help="quantize and pack a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--entropy", choices=["deflate", "none"], default="deflate")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="render the signal from a container")
    p.add_argument("container")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--materialized", action="store_true",
                   help="cache projection matrices instead of streaming")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("eval", help="PSNR / IoU of a rendered signal vs reference")
    p.add_argument("rendered")
    p.add_argument("reference")
    p.add_argument("--container", help="include bpp from this container")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="rate-distortion grid to CSV")
    p.add_argument("spec", help="JSON sweep specification")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("info", help="inspect a checkpoint or container")
    p.add_argument("file", nargs="?")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorruptDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
