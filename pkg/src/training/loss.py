# src/training/loss.py
"""
Negative ELBO: squared-error reconstruction term, closed-form Gaussian KL
and the beta schedule that weights them.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..autodiff import NonFiniteError, ShapeError, Tensor, as_tensor, ops
from ..vae_core.model import LatentParams, ModelOutput

logger = logging.getLogger(__name__)


class ScheduleError(RuntimeError):
    """The beta schedule was used in a state it cannot handle."""


def kl_gaussian(params: LatentParams) -> Tuple[Tensor, Tensor]:
    """
    KL divergence between N(mu, exp(logvar)) and the standard normal prior.

    Per unit: 0.5 * (mu^2 + exp(logvar) - logvar - 1), averaged over the batch
    when params are (N, k).

    Returns:
        (kl, kl_per_unit): scalar sum and the (k,) per-unit values, both differentiable.
    """
    mu, logvar = params.mu, params.logvar
    if not (np.all(np.isfinite(mu.data)) and np.all(np.isfinite(logvar.data))):
        raise NonFiniteError("kl_gaussian: latent parameters contain non-finite values.")
    terms = ops.sub(ops.add(ops.square(mu), ops.exp(logvar)), ops.add(logvar, 1.0))
    terms = ops.mul(terms, 0.5)
    per_unit = ops.mean(terms, axis=0) if terms.ndim == 2 else terms
    return ops.sum(per_unit), per_unit


def recon_loss(x, x_hat) -> Tensor:
    """Sum of squared differences per sample, averaged over the batch."""
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"recon_loss: target {x.shape} and reconstruction {x_hat.shape} differ.")
    batch = x.shape[0] if x.ndim == 4 else 1
    return ops.mul(ops.sum(ops.square(ops.sub(x_hat, x))), 1.0 / batch)


@dataclass
class BetaSchedule:
    """
    Weight of the KL term.

    mode='fixed' keeps beta0. mode='balanced' tracks an exponential moving
    average of the per-pixel reconstruction error and scales beta0 by the
    ratio of that average to its first value, so beta shrinks as
    reconstruction improves and the initial recon/KL balance is preserved.
    """
    beta0: float = 8.0
    mode: str = "balanced"
    ema_decay: float = 0.99
    recon_ema: Optional[float] = None
    reference: Optional[float] = None
    beta_effective: Optional[float] = None

    def __post_init__(self):
        if self.beta0 < 0:
            raise ValueError(f"beta0 must be non-negative, got {self.beta0}.")
        if self.mode not in ("fixed", "balanced"):
            raise ValueError(f"Unknown beta schedule mode '{self.mode}'.")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}.")

    @property
    def current(self) -> float:
        """Beta in effect; beta0 before the first update."""
        return self.beta0 if self.beta_effective is None else self.beta_effective

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta0": self.beta0,
            "mode": self.mode,
            "ema_decay": self.ema_decay,
            "recon_ema": self.recon_ema,
            "reference": self.reference,
            "beta_effective": self.beta_effective,
        }

    @classmethod
    def from_dict(cls, state: Dict[str, Any]) -> "BetaSchedule":
        return cls(**state)


def update_beta(schedule: BetaSchedule, recon_per_pixel: Optional[float]) -> float:
    """
    Advances the schedule with a new per-pixel reconstruction measurement.

    Raises:
        ScheduleError: in balanced mode, when no positive measurement is given.
    """
    if schedule.mode == "fixed":
        schedule.beta_effective = schedule.beta0
        return schedule.beta_effective
    if recon_per_pixel is None:
        raise ScheduleError("Balanced beta schedule needs a reconstruction measurement before use.")
    if not recon_per_pixel > 0:
        raise ScheduleError(f"Balanced beta schedule needs a positive reconstruction error, got {recon_per_pixel}.")
    if schedule.recon_ema is None:
        schedule.recon_ema = float(recon_per_pixel)
        schedule.reference = float(recon_per_pixel)
    else:
        d = schedule.ema_decay
        schedule.recon_ema = d * schedule.recon_ema + (1.0 - d) * float(recon_per_pixel)
    schedule.beta_effective = schedule.beta0 * schedule.recon_ema / schedule.reference
    return schedule.beta_effective


@dataclass
class LossBreakdown:
    recon: Tensor
    kl: Tensor
    kl_per_unit: Tensor
    beta_effective: float
    total: Tensor
    recon_per_pixel: float = field(default=0.0)

    def as_row(self) -> Dict[str, float]:
        return {
            "total": self.total.item(),
            "recon": self.recon.item(),
            "kl": self.kl.item(),
            "beta_effective": self.beta_effective,
            "recon_per_pixel": self.recon_per_pixel,
        }


def total_loss(x, output: ModelOutput, params: LatentParams, schedule: BetaSchedule,
               update_schedule: bool = True) -> LossBreakdown:
    """
    recon(x, x_hat) + beta * KL(q(z|x) || p(z)).

    Only the composed image `output.image` enters the reconstruction term; the
    split parts are never used here.

    Args:
        x: Target images.
        output: Model forward result.
        params: Posterior moments the KL term is computed from.
        schedule: Beta schedule; advanced with this batch's per-pixel error
            unless update_schedule is False.
    """
    x = as_tensor(x)
    recon = recon_loss(x, output.image)
    pixels_per_sample = int(np.prod(x.shape[1:] if x.ndim == 4 else x.shape))
    recon_per_pixel = recon.item() / pixels_per_sample
    kl, kl_per_unit = kl_gaussian(params)
    if update_schedule:
        beta = update_beta(schedule, recon_per_pixel)
    else:
        beta = schedule.current
    total = ops.add(recon, ops.mul(kl, beta)) if beta != 0.0 else recon
    return LossBreakdown(recon=recon, kl=kl, kl_per_unit=kl_per_unit, beta_effective=float(beta),
                         total=total, recon_per_pixel=recon_per_pixel)
