"""Training loop for the yaw-rate predictor.

Each step samples a batch of tasks, averages their exact gradients in a
fixed order and applies one adaptive-moment update.  Validation likelihood
is tracked on held-out task instances with the deployment protocol (prefix
context, synthesized target speeds); the best-validation parameters are kept
and restored at the end.  Everything is driven by one seeded generator, so a
fixed seed reproduces the trained parameters bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cnp import CnpModel, NormStats, backward, gaussian_nll, predict_arrays
from .errors import TrainingDivergedError
from .network import AdamState, adam_step
from .tasks import MetaDataset, build_eval_task, sample_training_task, series_inputs


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    max_steps: int = 50_000
    patience: int = 2_000
    seed: int = 42
    context_range: tuple[int, int] = (3, 100)
    target_count: int = 64
    eval_every: int = 100
    context_fraction: float = 0.1
    val_target_cap: int = 256

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.patience, self.eval_every) <= 0:
            raise ValueError("lr, batch_size, patience and eval_every must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


@dataclass
class LossCurve:
    steps: list[int]
    train_nll: list[float]
    val_nll: list[float]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,train_nll,val_nll\n")
            for row in zip(self.steps, self.train_nll, self.val_nll):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def fit_norm_stats(meta: MetaDataset) -> NormStats:
    xs, ys = [], []
    for i in meta.indices("train"):
        ts = meta.tasks[i]
        xs.append(series_inputs(ts))
        ys.append(ts.psi_dot)
    return NormStats.from_data(np.concatenate(xs), np.concatenate(ys))


def validation_nll(model: CnpModel, meta: MetaDataset, *,
                   context_fraction: float = 0.1, target_cap: int = 256) -> float:
    """Mean NLL over validation tasks under the deployment protocol."""
    idx = meta.indices("val") or meta.indices("train")
    total = 0.0
    for i in idx:
        task = build_eval_task(meta.tasks[i], context_fraction)
        m = len(task.target_y)
        sel = np.unique(np.linspace(0, m - 1, min(target_cap, m)).astype(int))
        mu, sigma2 = predict_arrays(model, task.context_x, task.context_y,
                                    task.target_x[sel])
        total += gaussian_nll(mu, sigma2, task.target_y[sel])
    return total / len(idx)


def train(meta: MetaDataset, cfg: TrainConfig,
          model: CnpModel | None = None) -> tuple[CnpModel, LossCurve]:
    """Train until convergence or the step budget; returns the best checkpoint."""
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = CnpModel.create(rng)
    model.norm = fit_norm_stats(meta)
    params = model.parameters()
    opt = AdamState.for_params(params)

    curve = LossCurve([], [], [])
    best_val = math.inf
    best_step = 0
    best_params = model.copy_parameters()
    running: list[float] = []

    for step in range(1, cfg.max_steps + 1):
        batch = [sample_training_task(meta, rng, context_range=cfg.context_range,
                                      target_count=cfg.target_count)
                 for _ in range(cfg.batch_size)]
        total = [np.zeros_like(p) for p in params]
        loss_sum = 0.0
        for task in batch:
            loss, grads = backward(model, task.context_x, task.context_y,
                                   task.target_x, task.target_y)
            loss_sum += loss
            for acc, g in zip(total, grads):
                acc += g / cfg.batch_size
        loss_mean = loss_sum / cfg.batch_size
        if not math.isfinite(loss_mean):
            raise TrainingDivergedError(f"training loss became non-finite at step {step}")
        running.append(loss_mean)
        adam_step(params, total, opt, cfg.lr)

        if step % cfg.eval_every == 0:
            val = validation_nll(model, meta, context_fraction=cfg.context_fraction,
                                 target_cap=cfg.val_target_cap)
            curve.steps.append(step)
            curve.train_nll.append(float(np.mean(running)))
            curve.val_nll.append(val)
            running.clear()
            if val < best_val:
                best_val = val
                best_step = step
                best_params = model.copy_parameters()
            elif step - best_step >= cfg.patience:
                break

    model.load_parameters(best_params)
    return model, curve
