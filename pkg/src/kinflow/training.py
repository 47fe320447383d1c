"""Negative log-likelihood training of the flow.

Gradients are exact reverse-mode derivatives computed by hand, block by
block.  For the batch-mean loss

    loss = mean_b [ D/2 * log(2*pi) + 0.5 * ||u_b||^2 + sum alpha ]

the backward pass through one block, given the gradient g arriving at its
output u = (x - mu) * exp(-alpha), is

    d/dalpha = -g * u + 1/B        (the 1/B is the log-determinant term)
    d/dmu    = -g * exp(-alpha)
    d/dx     =  g * exp(-alpha) + head contributions

with the clamp on alpha gating its gradient and every mask applied to the
corresponding weight gradient, so masked entries receive exactly zero and
never move.  Models are small enough that exactness is cheap, and it is
what makes finite-difference checks meaningful.

The optimizer is Adamax (the infinity-norm member of the Adam family) by
default, with plain Adam available as an alternative.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericError, ValidationError
from .flow_model import ALPHA_CLAMP, LOG_TWO_PI, BlockCache, FlowModel, MadeBlock
from .kinematics import Variant
from .preprocess import PreprocessConfig, Segment, Standardizer, segments_to_matrix

OPTIMIZERS = ("adamax", "adam")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 5e-4
    epochs: int = 8
    seed: int = 0
    n_blocks: int = 3
    hidden: int = 16
    optimizer: str = "adamax"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValidationError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValidationError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.n_blocks < 1:
            raise ValidationError(f"train.blocks must be >= 1, got {self.n_blocks}")
        if self.hidden < 0:
            raise ValidationError(f"train.hidden must be >= 0, got {self.hidden}")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(
                f"train.optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}"
            )

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
            "blocks": self.n_blocks,
            "hidden": self.hidden,
            "optimizer": self.optimizer,
        }


@dataclass
class EpochStats:
    epoch: int
    mean_nll: float
    seconds: float


class Adamax:
    """theta -= lr/(1 - beta1^t) * m / (u + eps) with m the running mean
    of gradients and u the running infinity norm."""

    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.u = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        scale = self.lr / (1.0 - self.beta1**self.t)
        for p, g, m, u in zip(params, grads, self.m, self.u):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            np.maximum(self.beta2 * u, np.abs(g), out=u)
            p -= scale * m / (u + self.eps)


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(cfg: TrainConfig, params: Sequence[np.ndarray]):
    cls = Adamax if cfg.optimizer == "adamax" else Adam
    return cls(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def nll_loss(model: FlowModel, batch: np.ndarray) -> float:
    """Mean negative log-density of the batch under the model."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValidationError("empty batch")
    return float(-model.log_prob_batch(batch).mean())


def _block_backward(
    block: MadeBlock, cache: BlockCache, g_u: np.ndarray, inv_batch: float
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Gradient of the loss w.r.t. the block input and parameters.

    ``g_u`` is the loss gradient at the block output; ``inv_batch`` is the
    direct per-element gradient on alpha from the log-determinant term.
    """
    d_alpha = -g_u * cache.u + inv_batch
    inside = np.abs(cache.alpha_raw) < ALPHA_CLAMP
    d_alpha_raw = d_alpha * inside
    d_mu = -g_u * cache.exp_neg_alpha
    d_x = g_u * cache.exp_neg_alpha

    w_mu = block.w_mu * block.mask_out
    w_alpha = block.w_alpha * block.mask_out
    d_feats = d_mu @ w_mu + d_alpha_raw @ w_alpha
    g_w_mu = (d_mu.T @ cache.feats) * block.mask_out
    g_b_mu = d_mu.sum(axis=0)
    g_w_alpha = (d_alpha_raw.T @ cache.feats) * block.mask_out
    g_b_alpha = d_alpha_raw.sum(axis=0)

    if block.hidden > 0:
        d_z = d_feats * (1.0 - cache.feats**2)  # tanh'
        g_w_in = (d_z.T @ cache.x) * block.mask_in
        g_b_in = d_z.sum(axis=0)
        d_x = d_x + d_z @ (block.w_in * block.mask_in)
        grads = [g_w_in, g_b_in, g_w_mu, g_b_mu, g_w_alpha, g_b_alpha]
    else:
        d_x = d_x + d_feats  # heads read x directly
        grads = [g_w_mu, g_b_mu, g_w_alpha, g_b_alpha]
    return d_x, grads


def nll_and_grad(model: FlowModel, batch: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Batch-mean NLL and its exact gradient, laid out like param_arrays()."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    n = batch.shape[0]
    if n == 0:
        raise ValidationError("empty batch")

    caches: list[BlockCache] = []
    cur = batch
    alpha_sum = 0.0
    for block in model.blocks:
        cur, logdet, cache = block.forward_cached(cur)
        caches.append(cache)
        alpha_sum += -logdet.sum()
    u_final = cur
    loss = 0.5 * model.dim * LOG_TWO_PI + (0.5 * (u_final**2).sum() + alpha_sum) / n

    g_u = u_final / n
    per_block: list[list[np.ndarray]] = []
    for block, cache in zip(reversed(model.blocks), reversed(caches)):
        g_u, grads = _block_backward(block, cache, g_u, 1.0 / n)
        per_block.append(grads)
    out: list[np.ndarray] = []
    for grads in reversed(per_block):
        out.extend(grads)
    return loss, out


def grad_nll(model: FlowModel, batch: np.ndarray) -> list[np.ndarray]:
    return nll_and_grad(model, batch)[1]


def train(
    segments: Sequence[Segment],
    cfg: TrainConfig,
    *,
    standardizer: Standardizer | None = None,
    variant: Variant | None = None,
    preprocess: PreprocessConfig | None = None,
    frame_size: tuple[float, float] | None = None,
) -> tuple[FlowModel, list[EpochStats]]:
    """Fit a fresh flow on the given segments.

    Per-epoch shuffling uses a generator seeded from cfg.seed, the final
    partial batch is kept, and everything is serial, so a (seed, data,
    config) triple reproduces the model bit for bit.  The returned history
    starts with the pre-training loss as epoch 0.
    """
    if not segments:
        raise ValidationError("no training segments")
    data = segments_to_matrix(segments, standardizer)
    n, dim = data.shape
    init_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    model = FlowModel.build(
        dim,
        cfg.n_blocks,
        cfg.hidden,
        init_seed,
        variant=variant.value if variant is not None else None,
        preprocess=preprocess,
        standardizer=standardizer,
        frame_size=frame_size,
    )
    params = model.param_arrays()
    optimizer = make_optimizer(cfg, params)
    rng = np.random.default_rng(shuffle_seed)

    history = [EpochStats(0, nll_loss(model, data), 0.0)]
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        for b0 in range(0, n, cfg.batch_size):
            batch = data[order[b0 : b0 + cfg.batch_size]]
            loss, grads = nll_and_grad(model, batch)
            if not math.isfinite(loss):
                raise NumericError(
                    f"training diverged at epoch {epoch}, batch {b0 // cfg.batch_size}: "
                    f"loss={loss!r} (lr={cfg.learning_rate}, log-scale clamp +/-{ALPHA_CLAMP})"
                )
            optimizer.step(params, grads)
        history.append(EpochStats(epoch, nll_loss(model, data), time.perf_counter() - t0))
    return model, history


def save_loss_history(history: Sequence[EpochStats], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_nll,seconds\n")
        for row in history:
            fh.write(f"{row.epoch},{row.mean_nll!r},{row.seconds:.3f}\n")
