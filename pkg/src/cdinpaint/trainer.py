"""One optimization step of the compression network (and optional discriminator)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .compression_net import Network
from .discriminator import Discriminator
from .losses import (
    downsample_gt,
    gan_losses,
    gan_losses_backward,
    l1_loss,
    l1_loss_backward,
    variance_loss,
    variance_loss_backward,
)
from .optim import AdamState, NonFiniteGradient, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    w_l1: float = 1.0
    w_var: float = 0.1
    w_gan: float = 0.1

    def __post_init__(self):
        if min(self.w_l1, self.w_var, self.w_gan) < 0:
            raise ValueError("loss weights must be non-negative")
        if max(self.w_l1, self.w_var, self.w_gan) <= 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class LossReport:
    step: int
    l1: float
    var: float
    gan_g: float
    gan_d: float
    total: float
    skipped: bool = False

    def log_line(self) -> str:
        return (
            f"{self.step} {self.l1:.6f} {self.var:.6f} {self.gan_g:.6f} "
            f"{self.gan_d:.6f} {self.total:.6f}" + (" skipped" if self.skipped else "")
        )


def train_step(
    net: Network,
    images: np.ndarray,
    masks: np.ndarray,
    weights: LossWeights,
    opt: AdamState,
    disc: Discriminator | None = None,
    disc_opt: AdamState | None = None,
) -> LossReport:
    """Forward, backward and one Adam step on ``net`` (and ``disc`` when given).

    A non-finite loss or gradient skips the update and flags the report.
    """
    use_gan = disc is not None and weights.w_gan > 0
    if use_gan and disc_opt is None:
        raise ValueError("discriminator given without an optimizer state")
    net.train()
    target = downsample_gt(images.astype(np.float32), net.downsample_factor)
    out = net.forward(images, masks)

    l1 = l1_loss(out, target)
    var = variance_loss(out)
    grad = weights.w_l1 * l1_loss_backward(out, target)
    if weights.w_var:
        grad = grad + weights.w_var * variance_loss_backward(out)

    gan_g = gan_d = 0.0
    if use_gan:
        # all three gradients use the critic as it stands before this step
        disc.zero_grad()
        d_real = disc.forward(target)
        d_fake = disc.forward(out, power_iteration=False)
        gan_d, gan_g = gan_losses(d_real, d_fake)
        g_real, g_fake, g_gen = gan_losses_backward(d_real, d_fake)
        grad = grad + weights.w_gan * disc.backward(g_gen)
        disc.zero_grad()
        disc.backward(g_fake)
        disc.forward(target, power_iteration=False)
        disc.backward(g_real)

    total = weights.w_l1 * l1 + weights.w_var * var + weights.w_gan * gan_g
    report = LossReport(opt.t + 1, l1, var, gan_g, gan_d, total)
    if not np.isfinite([l1, var, gan_g, gan_d]).all():
        log.warning("non-finite loss at step %d, skipping", report.step)
        report.skipped = True
        return report

    net.zero_grad()
    net.backward(grad)
    try:
        adam_step(net.parameters(), net.grads(), opt)
        if use_gan:
            adam_step(disc.parameters(), disc.grads, disc_opt)
    except NonFiniteGradient as exc:
        log.warning("step %d skipped: %s", report.step, exc)
        report.skipped = True
    return report
