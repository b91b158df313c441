"""Adam training loops for the latent code and for plain-MLP baselines.

One epoch is a full pass over the dataset in shuffled order, final partial
batch included; the learning rate decays by `lr_gamma` after every epoch.
The full-signal metric is evaluated periodically and the best snapshot is
returned. Everything is a deterministic function of (seeds, config, data).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .decoder import LatentState, RandomDecoder, generate_weights, pullback
from .errors import TrainingDiverged
from .model import ModelConfig, TargetWeights, backward, forward, render_raw
from .numerics import RngStream, stream_u64, stream_u64_array
from .quantization import quantized_latent_view
from .signals import ImageSignal, OccupancySignal, CoordinateDataset, iou, psnr

# keeps shuffle keys clear of the decoder's layer/latent seed indices
_SHUFFLE_DOMAIN = 1 << 62

# An evaluator maps current weights to (full-signal loss, metric-to-maximize).
EvalFn = Callable[[TargetWeights], tuple[float, float]]


@dataclass
class TrainConfig:
    epochs: int
    lr: float
    batch_size: int = 1024
    adam_betas: tuple[float, float] = (0.99, 0.999)
    adam_eps: float = 1e-8
    lr_gamma: float = 0.999
    eval_every: int = 10
    qat_bits: int | None = None
    seed: int = 0

    def __post_init__(self):
        b1, b2 = self.adam_betas
        if not (0.0 < b1 < 1.0 and 0.0 < b2 < 1.0):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.lr_gamma <= 1.0:
            raise ValueError("lr_gamma must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.qat_bits is not None and not 1 <= self.qat_bits <= 16:
            raise ValueError("qat_bits must be in [1, 16]")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, betas: tuple[float, float] = (0.99, 0.999),
              eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place."""
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainReport:
    history: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = -np.inf
    best_parameters: object = None


def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    keys = RngStream(stream_u64(RngStream(seed), _SHUFFLE_DOMAIN + epoch))
    return np.argsort(stream_u64_array(keys, 0, n), kind="stable")


def _progress(epoch: int, loss: float, lr: float, metric: float) -> None:
    print(f"epoch={epoch} loss={loss:.8g} lr={lr:.8g} metric={metric:.8g}",
          file=sys.stderr)


def _run(dataset: CoordinateDataset, config: TrainConfig, *,
         step_backward, evaluate, snapshot, quiet: bool) -> TrainReport:
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    coords = dataset.coords
    targets = dataset.targets
    report = TrainReport()

    def eval_point(epoch: int) -> None:
        full_loss, metric = evaluate()
        report.history.append((epoch, full_loss, metric))
        if metric > report.best_metric:
            report.best_epoch = epoch
            report.best_metric = metric
            report.best_parameters = snapshot()
        if not quiet:
            _progress(epoch, full_loss, lr, metric)

    lr = config.lr
    eval_point(0)
    state = None
    last_finite = None
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        perm = _epoch_permutation(config.seed, epoch, n)
        for b0 in range(0, n, config.batch_size):
            idx = perm[b0:b0 + config.batch_size]
            loss, grads, params = step_backward(coords[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}",
                    last_state=last_finite if last_finite is not None else snapshot(),
                    history=report.history)
            last_finite = snapshot()
            if state is None:
                state = AdamState.zeros_like(params)
            adam_step(params, grads, state, lr, config.adam_betas, config.adam_eps)
        lr *= config.lr_gamma
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            eval_point(epoch)
    return report


def _default_eval(weights_fn, config: ModelConfig, dataset: CoordinateDataset):
    """Fallback metric when no signal evaluator is given: negative full loss."""
    def evaluate():
        w = weights_fn()
        pred = forward(w, config, dataset.coords)
        loss = float(np.mean((pred - dataset.targets) ** 2))
        return loss, -loss
    return evaluate


def _check_encoding(dataset: CoordinateDataset, mconfig: ModelConfig) -> None:
    if dataset.encoding is not None and dataset.encoding != mconfig.encoding:
        raise ValueError("dataset encoding does not match the model config")


def train_doh(decoder: RandomDecoder, latent0: LatentState, dataset: CoordinateDataset,
              config: TrainConfig, eval_fn: EvalFn | None = None,
              quiet: bool = False) -> tuple[LatentState, TrainReport]:
    """Optimize (z, biases) against the dataset; returns the best snapshot.

    With config.qat_bits set, the forward path sees dequantize(quantize(.))
    of the parameters while gradients flow straight through to the
    full-precision shadow values.
    """
    _check_encoding(dataset, decoder.config)
    latent = latent0.copy()
    params = [latent.z] + latent.biases
    qat = config.qat_bits

    def view() -> LatentState:
        return quantized_latent_view(latent, qat) if qat is not None else latent

    def step_backward(bc, bt):
        w = generate_weights(decoder, view())
        loss, grads = backward(w, decoder.config, bc, bt)
        gz, gb = pullback(decoder, grads)
        return loss, [gz] + gb, params

    def current_weights() -> TargetWeights:
        return generate_weights(decoder, view())

    evaluate = (lambda: eval_fn(current_weights())) if eval_fn is not None \
        else _default_eval(current_weights, decoder.config, dataset)
    report = _run(dataset, config, step_backward=step_backward, evaluate=evaluate,
                  snapshot=latent.copy, quiet=quiet)
    return report.best_parameters, report


def train_qat(decoder: RandomDecoder, latent0: LatentState, dataset: CoordinateDataset,
              config: TrainConfig, eval_fn: EvalFn | None = None,
              quiet: bool = False) -> tuple[LatentState, TrainReport]:
    """Quantization-aware variant of train_doh; requires config.qat_bits."""
    if config.qat_bits is None:
        raise ValueError("train_qat requires config.qat_bits")
    return train_doh(decoder, latent0, dataset, config, eval_fn, quiet)


def train_mlp(weights0: TargetWeights, mconfig: ModelConfig, dataset: CoordinateDataset,
              config: TrainConfig, eval_fn: EvalFn | None = None,
              quiet: bool = False) -> tuple[TargetWeights, TrainReport]:
    """Adam directly on every weight matrix and bias vector."""
    if config.qat_bits is not None:
        raise ValueError("quantization-aware training is only supported for the latent model")
    _check_encoding(dataset, mconfig)
    weights = weights0.copy()
    params = weights.weights + weights.biases

    def step_backward(bc, bt):
        loss, grads = backward(weights, mconfig, bc, bt)
        return loss, grads.weights + grads.biases, params

    evaluate = (lambda: eval_fn(weights)) if eval_fn is not None \
        else _default_eval(lambda: weights, mconfig, dataset)
    report = _run(dataset, config, step_backward=step_backward, evaluate=evaluate,
                  snapshot=weights.copy, quiet=quiet)
    return report.best_parameters, report


def image_evaluator(image: ImageSignal, config: ModelConfig) -> EvalFn:
    """Full-grid render: unclamped MSE as loss, clamped PSNR as metric."""
    targets = image.values

    def evaluate(weights: TargetWeights) -> tuple[float, float]:
        raw = render_raw(weights, config, (image.height, image.width))
        loss = float(np.mean((raw - targets) ** 2))
        metric = psnr(np.clip(raw, 0.0, 1.0), targets)
        return loss, metric
    return evaluate


def occupancy_evaluator(occ: OccupancySignal, config: ModelConfig,
                        threshold: float = 0.5) -> EvalFn:
    targets = occ.values[..., None]

    def evaluate(weights: TargetWeights) -> tuple[float, float]:
        raw = render_raw(weights, config, occ.dims)
        loss = float(np.mean((raw - targets) ** 2))
        metric = iou(raw[..., 0], occ.values, threshold)
        return loss, metric
    return evaluate
