"""Training loop: Adam on the negative mean-SSIM reconstruction loss."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .. import ssim
from .model import Model

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or parameters stop being finite."""

    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.003
    batch_size: int = 16
    max_epochs: int = 200
    validate_every: int = 5
    patience: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if min(self.batch_size, self.max_epochs, self.validate_every, self.patience) < 1:
            raise ValueError("batch_size, max_epochs, validate_every, and patience "
                             "must all be at least 1")


@dataclass
class TrainReport:
    """What happened during one training run."""

    epochs_run: int = 0
    train_losses: list[float] = field(default_factory=list)
    validations: list[tuple[int, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_validation_loss: float = float("inf")
    stopped_early: bool = False
    duration_seconds: float = 0.0


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _as_stack(images, input_shape, name: str) -> np.ndarray:
    arr = np.stack([np.asarray(im, dtype=np.float64) for im in images]) \
        if isinstance(images, (list, tuple)) else np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[:, :, :, None]
    if arr.ndim != 4 or arr.shape[1:] != input_shape:
        raise ValueError(f"{name} images have shape {arr.shape[1:]}, "
                         f"expected {input_shape}")
    return arr


def _batch_loss_and_grad(model: Model, batch: np.ndarray) -> tuple[float, np.ndarray]:
    recon = model.forward(batch, train=True)
    targets = batch[:, :, :, 0].astype(np.float64)
    mean, grad = ssim.mean_ssim_and_grad(targets, recon[:, :, :, 0].astype(np.float64),
                                         ssim.LOSS_PRESET)
    return -mean, -grad[:, :, :, None]


def _validation_loss(model: Model, val: np.ndarray, batch_size: int) -> float:
    losses = []
    for start in range(0, len(val), batch_size):
        chunk = val[start : start + batch_size]
        recon = model.forward(chunk)
        means = ssim.mean_ssim_batch(chunk[:, :, :, 0].astype(np.float64),
                                     recon[:, :, :, 0].astype(np.float64),
                                     ssim.LOSS_PRESET)
        losses.extend((-means).tolist())
    return float(np.mean(losses))


def train(model: Model, train_images, val_images, config: TrainConfig) -> TrainReport:
    """Fit the autoencoder on defect-free images; restores the best weights.

    Validation runs every validate_every epochs; training stops early after
    patience consecutive validations without improvement. Mini-batch order
    reshuffles every epoch from the run seed, so a fixed (model seed, data,
    config) triple reproduces the same weights.
    """
    t0 = time.perf_counter()
    train_stack = _as_stack(train_images, model.input_shape, "train")
    val_stack = _as_stack(val_images, model.input_shape, "validation")
    n = len(train_stack)
    rng = np.random.default_rng(config.seed)
    adam = Adam(model.parameters(), config.learning_rate)
    report = TrainReport()
    best_params: list[np.ndarray] | None = None
    bad_validations = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            batch = train_stack[order[start : start + config.batch_size]]
            model.zero_grads()
            loss, dy = _batch_loss_and_grad(model, batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, f"non-finite loss {loss}")
            model.backward(dy)
            adam.step(model.gradients())
            batch_losses.append(loss)
        report.train_losses.append(float(np.mean(batch_losses)))
        report.epochs_run = epoch

        if epoch % config.validate_every == 0:
            vloss = _validation_loss(model, val_stack, config.batch_size)
            if not np.isfinite(vloss):
                raise TrainingDivergedError(epoch, f"non-finite validation loss {vloss}")
            report.validations.append((epoch, vloss))
            if vloss < report.best_validation_loss:
                report.best_validation_loss = vloss
                report.best_epoch = epoch
                best_params = [p.copy() for p in model.parameters()]
                bad_validations = 0
            else:
                bad_validations += 1
                if bad_validations >= config.patience:
                    report.stopped_early = True
                    log.info("early stop at epoch %d (no improvement over %d validations)",
                             epoch, config.patience)
                    break

    if not report.validations:
        vloss = _validation_loss(model, val_stack, config.batch_size)
        report.validations.append((report.epochs_run, vloss))
        report.best_validation_loss = vloss
        report.best_epoch = report.epochs_run
        best_params = [p.copy() for p in model.parameters()]

    if best_params is not None:
        for p, best in zip(model.parameters(), best_params):
            p[...] = best
    report.duration_seconds = time.perf_counter() - t0
    return report
