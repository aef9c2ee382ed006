"""Mini-batch training with validation-accuracy early stopping.

The loop evaluates the validation split every `eval_every` steps (plus a
baseline evaluation before the first step), keeps the checkpoint with the
highest validation accuracy (ties keep the earlier one), and stops once
`patience` consecutive evaluations fail to improve. Everything is seeded:
model init through a dedicated derived stream, batch order through another,
and torch runs single-threaded so repeated runs are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .dataset import EncodedSplit
from .errors import ConfigError, EmptySplitError, NonFiniteError
from .model import AdamW, BedExitModel, ModelConfig, loss_bce
from .rng import derive_u63, stream

LogRow = tuple[int, str, float, float]  # step, split, loss, accuracy


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 32
    patience: int = 10
    max_steps: int = 4000
    eval_every: int = 100
    seed: int = 42

    def validate(self) -> "TrainConfig":
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if min(self.batch_size, self.max_steps, self.eval_every) < 1:
            raise ConfigError("batch_size, max_steps, eval_every must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        return self


@dataclass
class TrainResult:
    model: BedExitModel
    log: list[LogRow] = field(default_factory=list)
    best_val_accuracy: float = 0.0
    best_step: int = 0
    steps_run: int = 0


def split_tensors(split: EncodedSplit) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """uint8 images -> float32 in [0,1]; labels -> float32 {0,1}."""
    line = torch.from_numpy(split.line).float().div_(255.0)
    texture = torch.from_numpy(split.texture).float().div_(255.0)
    labels = torch.from_numpy(split.labels).float()
    return line, texture, labels


@torch.no_grad()
def _eval_split(model, line, texture, labels, batch_size) -> tuple[float, float]:
    model.eval()
    n = len(labels)
    loss_sum = 0.0
    correct = 0
    for s in range(0, n, batch_size):
        sl = slice(s, min(s + batch_size, n))
        logits = model(line[sl], texture[sl])
        loss_sum += float(loss_bce(logits, labels[sl])) * (sl.stop - sl.start)
        correct += int(((logits >= 0).float() == labels[sl]).sum())
    model.train()
    return loss_sum / n, correct / n


def train(
    dataset: dict[str, EncodedSplit],
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> TrainResult:
    """Train on dataset["train"], early-stop on dataset["val"]."""
    train_config.validate()
    for name in ("train", "val"):
        if name not in dataset or len(dataset[name]) == 0:
            raise EmptySplitError(f"{name} split is empty")

    torch.set_num_threads(1)
    torch.manual_seed(derive_u63(train_config.seed, "model-init"))
    model = BedExitModel(model_config)
    model.train()
    optimizer = AdamW(
        model.parameters(),
        lr=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
    )

    tr_line, tr_texture, tr_labels = split_tensors(dataset["train"])
    va_line, va_texture, va_labels = split_tensors(dataset["val"])
    n_train = len(tr_labels)
    batch_rng = stream(train_config.seed, "batch-shuffle")

    def batches():
        while True:
            order = batch_rng.permutation(n_train)
            for s in range(0, n_train, train_config.batch_size):
                yield torch.from_numpy(order[s : s + train_config.batch_size].copy())

    result = TrainResult(model=model)
    val_loss, val_acc = _eval_split(
        model, va_line, va_texture, va_labels, train_config.batch_size
    )
    result.log.append((0, "val", val_loss, val_acc))
    best_acc, best_step = val_acc, 0
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    evals_without_improvement = 0

    batch_iter = batches()
    for step in range(1, train_config.max_steps + 1):
        idx = next(batch_iter)
        logits = model(tr_line[idx], tr_texture[idx])
        loss = loss_bce(logits, tr_labels[idx])
        if not torch.isfinite(loss):
            raise NonFiniteError(f"non-finite training loss at step {step}")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        result.steps_run = step

        if step % train_config.eval_every == 0:
            batch_acc = float(((logits.detach() >= 0).float() == tr_labels[idx]).float().mean())
            result.log.append((step, "train", float(loss.detach()), batch_acc))
            val_loss, val_acc = _eval_split(
                model, va_line, va_texture, va_labels, train_config.batch_size
            )
            result.log.append((step, "val", val_loss, val_acc))
            if val_acc > best_acc:
                best_acc, best_step = val_acc, step
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
                evals_without_improvement = 0
            else:
                evals_without_improvement += 1
                if evals_without_improvement >= train_config.patience:
                    break

    model.load_state_dict(best_state)
    model.eval()
    result.best_val_accuracy = best_acc
    result.best_step = best_step
    return result
