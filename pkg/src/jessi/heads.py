"""Suggestion and domain classifiers, the adversarial weight schedule and the joint loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Linear, Module
from .tensor import RngStream, Tensor, ShapeError, ops


class MlpHead(Module):
    """tanh MLP with dropout on its input and hidden layers, softmax output."""

    def __init__(self, d_in: int, rng: RngStream, hidden: int = 300, n_hidden: int = 2,
                 n_classes: int = 2, dropout: float = 0.5, dtype=np.float32, max_norm=None):
        self.d_in = d_in
        self.dropout = dropout
        widths = [d_in] + [hidden] * n_hidden
        self.hidden = [Linear(a, b, rng, dtype, max_norm=max_norm) for a, b in zip(widths, widths[1:])]
        self.out = Linear(widths[-1], n_classes, rng, dtype, max_norm=max_norm)

    def __call__(self, x: Tensor, rng: RngStream | None = None) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"head expects width {self.d_in}, got {x.shape}")
        train = self.training and rng is not None
        h = ops.dropout(x, self.dropout, train, rng)
        for layer in self.hidden:
            h = ops.dropout(ops.tanh(layer(h)), self.dropout, train, rng)
        return ops.softmax(self.out(h))


def predict_suggestion(head: MlpHead, joint: Tensor, rng: RngStream | None = None) -> Tensor:
    return head(joint, rng)


def predict_domain(head: MlpHead, joint: Tensor, rng: RngStream | None = None) -> Tensor:
    """Domain distribution computed behind a gradient-reversal node."""
    return head(ops.grad_reverse(joint), rng)


def lambda_at(epoch_index: int, total_epochs: int, gamma: float = 10.0) -> float:
    """2 / (1 + exp(-gamma p)) - 1 with p the fraction of epochs completed."""
    if not 0 <= epoch_index < max(total_epochs, 1):
        raise ValueError(f"epoch index {epoch_index} outside [0, {total_epochs})")
    p = epoch_index / max(total_epochs - 1, 1)
    return 2.0 / (1.0 + math.exp(-gamma * p)) - 1.0


@dataclass(frozen=True)
class LambdaSchedule:
    total_epochs: int
    gamma: float = 10.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def __call__(self, epoch_index: int) -> float:
        return lambda_at(epoch_index, self.total_epochs, self.gamma)


def combined_loss(p_y: Tensor | None, y_gold, p_d: Tensor | None, d_gold, lam: float) -> Tensor:
    """CE(p_y, y) + lam * CE(p_d, d); either term is dropped when its input is None."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    terms = []
    if p_y is not None:
        terms.append(ops.cross_entropy(p_y, y_gold))
    if p_d is not None and lam > 0:
        terms.append(ops.cross_entropy(p_d, d_gold) * lam)
    if not terms:
        if p_d is None:
            raise ValueError("combined_loss needs at least one term")
        return ops.cross_entropy(p_d, d_gold) * 0.0
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]
