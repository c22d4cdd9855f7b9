"""
Adaptive-moment optimizer over named numpy parameter groups, and a
reduce-on-plateau learning rate schedule.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from piccam.errors import BadConfigValue

logger = logging.getLogger(__name__)


@dataclass
class ParamGroup:
    """
    A group either follows the main (scheduled) learning rate, or holds its own
    constant rate when `constant_lr` is set.
    """

    lr: float
    constant_lr: bool = False
    step: int = 0
    exp_avg: Optional[np.ndarray] = None
    exp_avg_sq: Optional[np.ndarray] = None


class Adam:
    def __init__(
        self,
        params: Dict[str, np.ndarray],
        lr: float,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        group_lrs: Optional[Dict[str, float]] = None,
    ):
        if not lr > 0:
            raise BadConfigValue(f"Invalid learning rate: {lr}")
        if not eps >= 0:
            raise BadConfigValue(f"Invalid epsilon value: {eps}")
        for i, beta in enumerate(betas):
            if not 0.0 <= beta < 1.0:
                raise BadConfigValue(f"Invalid beta parameter at index {i}: {beta}")
        self.betas = tuple(betas)
        self.eps = eps
        group_lrs = group_lrs or {}
        self.groups: Dict[str, ParamGroup] = {}
        for name in params:
            if name in group_lrs:
                self.groups[name] = ParamGroup(lr=group_lrs[name], constant_lr=True)
            else:
                self.groups[name] = ParamGroup(lr=lr)

    @property
    def lr(self) -> float:
        """The scheduled rate, shared by every non-constant group."""
        rates = [g.lr for g in self.groups.values() if not g.constant_lr]
        return rates[0] if rates else math.nan

    def scale_lr(self, factor: float) -> None:
        for group in self.groups.values():
            if not group.constant_lr:
                group.lr *= factor

    def step(
        self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]
    ) -> Dict[str, np.ndarray]:
        """Returns updated copies; `params` is left untouched."""
        beta1, beta2 = self.betas
        updated = {}
        for name, value in params.items():
            group = self.groups[name]
            grad = grads[name]
            if group.exp_avg is None:
                group.exp_avg = np.zeros_like(value)
                group.exp_avg_sq = np.zeros_like(value)
            group.step += 1
            group.exp_avg = beta1 * group.exp_avg + (1 - beta1) * grad
            group.exp_avg_sq = beta2 * group.exp_avg_sq + (1 - beta2) * grad * grad
            bias_correction1 = 1 - beta1**group.step
            bias_correction2 = 1 - beta2**group.step
            step_size = group.lr * math.sqrt(bias_correction2) / bias_correction1
            denom = np.sqrt(group.exp_avg_sq) + self.eps
            updated[name] = value - step_size * group.exp_avg / denom
        return updated


@dataclass
class ReduceLROnPlateau:
    factor: float = 0.5
    patience: int = 5
    best: float = field(default=math.inf)
    num_bad_epochs: int = 0
    num_reductions: int = 0

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise BadConfigValue(f"Plateau factor must lie in (0, 1), got {self.factor}")
        if self.patience < 0:
            raise BadConfigValue(f"Plateau patience must be >= 0, got {self.patience}")

    def step(self, loss: float, optimizer: Adam) -> bool:
        """Returns True when the learning rate was reduced."""
        if loss < self.best:
            self.best = loss
            self.num_bad_epochs = 0
            return False
        self.num_bad_epochs += 1
        if self.num_bad_epochs >= self.patience:
            optimizer.scale_lr(self.factor)
            self.num_bad_epochs = 0
            self.num_reductions += 1
            logger.info(f"Validation loss plateaued: learning rate now {optimizer.lr:.3g}")
            return True
        return False
