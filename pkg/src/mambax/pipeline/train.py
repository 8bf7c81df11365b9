"""Adam training loop with L1 loss.

Sampling is a pure function of (seed, step): epoch permutations come from
``default_rng([seed, epoch])`` and crops from ``default_rng([seed, step, 1])``,
so a resumed run replays exactly the batches an uninterrupted one would see.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from typing import Callable

import numpy as np

from ..config import ExperimentConfig
from ..errors import ContractError, NumericError
from ..tensor import Tensor, backward, finite_checks, no_grad
from ..tensor import mean as tmean
from ..tensor import tabs
from .data import ImagePair
from .model import MambaX

log = logging.getLogger(__name__)


class Adam:
    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = OrderedDict((k, np.zeros_like(p.data)) for k, p in params.items())
        self.v = OrderedDict((k, np.zeros_like(p.data)) for k, p in params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def l1_loss(sr: Tensor, hr) -> Tensor:
    return tmean(tabs(sr - hr))


class Trainer:
    def __init__(self, config: ExperimentConfig, data: list[ImagePair], model: MambaX | None = None):
        if not data:
            raise ContractError("training needs at least one image pair")
        self.config = config
        self.data = data
        self.model = model or MambaX(config, bands=data[0].hr.shape[0])
        self.optimizer = Adam(self.model.named_parameters(), lr=config.train.lr)
        self.step = 0
        self.history: list[dict[str, float]] = []

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.data) / self.config.train.batch)

    @property
    def total_steps(self) -> int:
        t = self.config.train
        return t.max_steps if t.max_steps is not None else t.epochs * self.steps_per_epoch

    def batch_for(self, step: int) -> list[ImagePair]:
        seed, t = self.config.seed, self.config.train
        epoch, pos = divmod(step, self.steps_per_epoch)
        order = np.random.default_rng([seed, epoch]).permutation(len(self.data))
        picks = order[pos * t.batch : (pos + 1) * t.batch]
        pairs = [self.data[i] for i in picks]
        if t.patch is None:
            return pairs
        crop_rng = np.random.default_rng([seed, step, 1])
        out = []
        for p in pairs:
            s = p.scale
            h, w = p.hr.shape[1:]
            size = min(t.patch, h, w)
            top = int(crop_rng.integers(0, (h - size) // s + 1)) * s
            left = int(crop_rng.integers(0, (w - size) // s + 1)) * s
            out.append(p.crop(top, left, size))
        return out

    def batch_loss(self, batch: list[ImagePair], training: bool = True) -> Tensor:
        total = None
        for pair in batch:
            term = l1_loss(self.model.forward(pair, training=training), pair.hr)
            total = term if total is None else total + term
        return total * (1.0 / len(batch))

    def _diagnose(self, batch: list[ImagePair]) -> str:
        try:
            with no_grad(), finite_checks(True):
                self.batch_loss(batch, training=False)
        except NumericError as exc:
            return str(exc)
        bad = [k for k, p in self.model.named_parameters().items() if not np.isfinite(p.data).all()]
        return f"non-finite parameter {bad[0]}" if bad else "loss reduction overflowed"

    def train_step(self) -> float:
        batch = self.batch_for(self.step)
        self.optimizer.zero_grad()
        loss = self.batch_loss(batch)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"step {self.step}: loss is non-finite; first non-finite tensor: {self._diagnose(batch)}")
        backward(loss)
        for name, p in self.optimizer.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NumericError(f"step {self.step}: non-finite gradient for parameter {name}")
        self.optimizer.step()
        self.step += 1
        self.history.append({"step": self.step, "loss": value})
        return value

    def run(self, until: int | None = None, callback: Callable[[int, float], None] | None = None):
        end = self.total_steps if until is None else until
        while self.step < end:
            value = self.train_step()
            if callback is not None:
                callback(self.step, value)
            elif self.step % 50 == 0:
                log.info("step %d loss %.6f", self.step, value)
        return self.model, self.history


def train(config: ExperimentConfig, data: list[ImagePair]) -> tuple[MambaX, list[dict[str, float]]]:
    """Train a fresh model; deterministic for a fixed config.seed."""
    return Trainer(config, data).run()


def predict(model: MambaX, pair: ImagePair) -> np.ndarray:
    with no_grad():
        return model.forward(pair, training=False).data
