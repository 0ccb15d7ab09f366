"""Loss terms for cycle-consistent adversarial training, least-squares form.

Generators are scored by how close the discriminator's patch map on their
output is to 1; discriminators by pushing real patches to 1 and generated
ones to 0. Reconstruction and identity terms are mean absolute errors, so
coefficients stay resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import ShapeError, Tensor, l1_mean, tmean

CYCLE_MODES = ("both", "forward", "backward")


@dataclass
class LossBreakdown:
    """Scalar values of every objective component for one step, as floats."""

    gan_g: float = 0.0  # G's adversarial term vs the Y-domain judge
    gan_f: float = 0.0  # F's adversarial term vs the X-domain judge
    disc_x: float = 0.0
    disc_y: float = 0.0
    cyc: float = 0.0
    idt: float = 0.0
    total_gen: float = 0.0
    lam: float = 10.0
    lam_idt: float = 0.0


def lsgan_generator_term(d_out_on_fake: Tensor) -> Tensor:
    """mean((d - 1)^2): zero when the judge is fully fooled."""
    e = d_out_on_fake - 1.0
    return tmean(e * e)


def lsgan_discriminator_term(d_on_real: Tensor, d_on_fake: Tensor) -> Tensor:
    """mean((d_real - 1)^2) + mean(d_fake^2).

    The halving applied during discriminator updates belongs to the
    trainer, not here.
    """
    er = d_on_real - 1.0
    return tmean(er * er) + tmean(d_on_fake * d_on_fake)


def cycle_loss(x: Tensor, x_reconstructed: Tensor, y: Tensor, y_reconstructed: Tensor,
               mode: str = "both") -> Tensor:
    """L1 reconstruction error of both cycles, or one of them.

    mode "forward" keeps only the x -> y -> x term, "backward" only
    y -> x -> y; used by the one-directional ablations.
    """
    if mode not in CYCLE_MODES:
        raise ValueError(f"cycle mode must be one of {CYCLE_MODES}, got {mode!r}")
    if mode == "forward":
        return l1_mean(x_reconstructed, x)
    if mode == "backward":
        return l1_mean(y_reconstructed, y)
    return l1_mean(x_reconstructed, x) + l1_mean(y_reconstructed, y)


def identity_loss(g_of_y: Tensor, y: Tensor, f_of_x: Tensor, x: Tensor,
                  enabled: bool = True) -> Tensor:
    """L1 penalty for the generators moving already-in-domain images."""
    if not enabled:
        return Tensor(0.0)
    if g_of_y.shape != y.shape or f_of_x.shape != x.shape:
        raise ShapeError(
            f"identity_loss shapes must match pairwise: {g_of_y.shape} vs {y.shape}, {f_of_x.shape} vs {x.shape}"
        )
    return l1_mean(g_of_y, y) + l1_mean(f_of_x, x)


def total_generator_objective(gan_g: Tensor, gan_f: Tensor, cyc: Tensor,
                              idt: Tensor | None, lam: float, lam_idt: float) -> Tensor:
    """gan_g + gan_f + lam * cyc + lam_idt * idt, one differentiable scalar."""
    if lam < 0 or lam_idt < 0:
        raise ValueError(f"loss weights must be >= 0, got lam={lam}, lam_idt={lam_idt}")
    total = gan_g + gan_f + cyc * lam
    if idt is not None and lam_idt > 0:
        total = total + idt * lam_idt
    return total
