"""Triplet-loss training of the projection model.

Mini-batch SGD with momentum and coupled weight decay. The loss hinges on the
gap between the reference/minority cosine and the reference/majority cosine.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import evaluator
from .corpus import EmbeddingTable, TripletSample
from .errors import DegenerateVectorError, DivergenceError, ValidationError
from .metric import ProjectionModel, cosine, project


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    margin: float = 0.1
    epochs: int = 50
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.margin < 0:
            raise ValidationError("margin must be >= 0")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")


@dataclass
class TrainHistory:
    mean_loss: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    active_fraction: List[float] = field(default_factory=list)

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,mean_loss,val_accuracy,active_fraction\n")
            for i, (loss, acc, frac) in enumerate(
                zip(self.mean_loss, self.val_accuracy, self.active_fraction), start=1
            ):
                fh.write(f"{i},{loss!r},{acc!r},{frac!r}\n")


def triplet_loss(x: np.ndarray, x_plus: np.ndarray, x_minus: np.ndarray, margin: float) -> float:
    """max(0, cos(x, x-) - cos(x, x+) + margin)."""
    return max(0.0, cosine(x, x_minus) - cosine(x, x_plus) + margin)


def _cosine_value_and_grad(
    weight: np.ndarray, a: np.ndarray, b: np.ndarray
) -> Tuple[float, np.ndarray]:
    """cos(Wa, Wb) and its gradient with respect to W."""
    u = weight @ a
    v = weight @ b
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("projected vector has zero norm")
    c = float(np.dot(u, v)) / (nu * nv)
    gu = v / (nu * nv) - (c / (nu * nu)) * u
    gv = u / (nu * nv) - (c / (nv * nv)) * v
    grad = np.outer(gu, a) + np.outer(gv, b)
    return c, grad


def _triplet_loss_and_grad(
    weight: np.ndarray,
    ref: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    margin: float,
) -> Tuple[float, np.ndarray, bool]:
    cos_neg, grad_neg = _cosine_value_and_grad(weight, ref, neg)
    cos_pos, grad_pos = _cosine_value_and_grad(weight, ref, pos)
    hinge = cos_neg - cos_pos + margin
    if hinge <= 0.0:
        return 0.0, np.zeros_like(weight), False
    return hinge, grad_neg - grad_pos, True


def batch_loss_and_gradient(
    model: ProjectionModel,
    batch: Sequence[TripletSample],
    table: EmbeddingTable,
    margin: float,
) -> Tuple[float, np.ndarray]:
    """Mean hinge loss over the batch and its analytic gradient."""
    if not batch:
        raise ValidationError("batch must be nonempty")
    weight = model.weight
    total = 0.0
    grad = np.zeros_like(weight)
    for sample in batch:
        ref = table[sample.ref_id].vector
        pos = table[sample.chosen_id()].vector
        neg = table[sample.other_id()].vector
        loss, g, _ = _triplet_loss_and_grad(weight, ref, pos, neg, margin)
        total += loss
        grad += g
    n = len(batch)
    return total / n, grad / n


def gradient_check(
    model: ProjectionModel,
    ref: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    margin: float,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central finite-difference gradients."""
    if step <= 0:
        raise ValidationError("step must be > 0")
    weight = model.weight
    _, analytic, _ = _triplet_loss_and_grad(weight, ref, pos, neg, margin)

    def loss_at(w):
        return (
            max(
                0.0,
                cosine(w @ ref, w @ neg) - cosine(w @ ref, w @ pos) + margin,
            )
        )

    max_err = 0.0
    d = weight.shape[0]
    for i in range(d):
        for j in range(d):
            w_plus = weight.copy()
            w_plus[i, j] += step
            w_minus = weight.copy()
            w_minus[i, j] -= step
            numeric = (loss_at(w_plus) - loss_at(w_minus)) / (2 * step)
            denom = max(abs(numeric), abs(analytic[i, j]), 1e-8)
            max_err = max(max_err, abs(numeric - analytic[i, j]) / denom)
    return max_err


def train(
    model: ProjectionModel,
    train_samples: Sequence[TripletSample],
    val_samples: Sequence[TripletSample],
    table: EmbeddingTable,
    config: TrainConfig,
) -> Tuple[ProjectionModel, TrainHistory]:
    """Shuffled mini-batch SGD with momentum; deterministic given the seed."""
    if not train_samples:
        raise ValidationError("training set is empty")
    order = list(train_samples)
    rng = random.Random(config.seed)
    weight = model.weight.copy()
    velocity = np.zeros_like(weight)
    history = TrainHistory()

    for epoch in range(config.epochs):
        if config.shuffle:
            rng.shuffle(order)
        epoch_loss = 0.0
        active = 0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            current = ProjectionModel(weight)
            loss, grad = batch_loss_and_gradient(current, batch, table, config.margin)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(
                    f"non-finite loss/gradient at epoch {epoch + 1}, batch {n_batches + 1}",
                    epoch=epoch + 1,
                    batch=n_batches + 1,
                )
            velocity = config.momentum * velocity - config.learning_rate * (
                grad + config.weight_decay * weight
            )
            weight = weight + velocity
            if not np.all(np.isfinite(weight)):
                raise DivergenceError(
                    f"non-finite weights at epoch {epoch + 1}, batch {n_batches + 1}",
                    epoch=epoch + 1,
                    batch=n_batches + 1,
                )
            epoch_loss += loss * len(batch)
            active += sum(
                1
                for s in batch
                if triplet_loss(
                    weight @ table[s.ref_id].vector,
                    weight @ table[s.chosen_id()].vector,
                    weight @ table[s.other_id()].vector,
                    config.margin,
                )
                > 0
            )
            n_batches += 1
        history.mean_loss.append(epoch_loss / len(order))
        history.active_fraction.append(active / len(order))
        consistent_val = [s for s in val_samples if s.admitted and s.consistent]
        if consistent_val:
            acc, _ = evaluator.eval_triplets(ProjectionModel(weight), consistent_val, table)
            history.val_accuracy.append(acc)
        else:
            history.val_accuracy.append(float("nan"))

    final = model if config.epochs == 0 else ProjectionModel(weight, version=model.version)
    return final, history
