"""Alternating optimization of the two generators and two discriminators.

Per step: one joint Adam update of both generators against the combined
objective, then one update each for the X- and Y-domain discriminators
against half their least-squares term, fed through a history buffer of
previously generated images. Every stochastic choice (epoch order, buffer
coin flips) is drawn from a counter-keyed stream, so a run is a pure
function of config and data, and can resume from a checkpoint exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses
from .data import epoch_order
from .networks import ModelState, forward, new_model
from .streams import STREAM_BUFFER_X, STREAM_BUFFER_Y, STREAM_ORDER, stream_rng
from .tensor import Tensor, backward

VARIANTS = ("full", "gan_only", "cycle_only", "gan_forward", "gan_backward")


class NumericalDivergence(RuntimeError):
    """A loss became NaN; training aborts rather than continuing silently."""


@dataclass
class TrainingConfig:
    lam: float = 10.0
    lam_idt: float = 0.0
    lr0: float = 2e-4
    epochs_constant: int = 100
    epochs_decay: int = 100
    buffer_capacity: int = 50
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    variant: str = "full"
    resolution: int = 128
    residual_blocks: int | None = None
    gen_filters: int = 64
    disc_filters: int = 64
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if self.buffer_capacity < 0:
            raise ValueError(f"buffer_capacity must be >= 0, got {self.buffer_capacity}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lam < 0 or self.lam_idt < 0:
            raise ValueError("loss weights must be >= 0")
        if self.epochs_constant < 0 or self.epochs_decay < 0:
            raise ValueError("epoch counts must be >= 0")


def lr_at_epoch(epoch: int, cfg: TrainingConfig) -> float:
    """Constant lr0, then a linear ramp to zero over the decay epochs.

    Accepts epoch == epochs_constant + epochs_decay as a boundary query
    (the value there is exactly 0).
    """
    total = cfg.epochs_constant + cfg.epochs_decay
    if not 0 <= epoch <= total:
        raise ValueError(f"epoch {epoch} outside [0, {total}]")
    if epoch < cfg.epochs_constant:
        return cfg.lr0
    if cfg.epochs_decay == 0:
        return 0.0
    return cfg.lr0 * (1.0 - (epoch - cfg.epochs_constant) / cfg.epochs_decay)


class Adam:
    """Bias-corrected Adam over a fixed parameter list; one shared step count."""

    def __init__(self, params: list[Tensor], beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float):
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"missing gradient for parameter {i} of {len(self.params)}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class ReplayBuffer:
    """Pool of previously generated images exchanged into discriminator updates.

    While filling, the fresh image is stored and returned. Once full, a coin
    flip either returns a uniformly chosen stored image (replacing it with
    the fresh one) or returns the fresh image untouched. Draws come from a
    counter-keyed stream so the buffer is exactly restorable.
    """

    def __init__(self, capacity: int, seed: int, tag: int):
        if capacity < 0:
            raise ValueError(f"capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.seed = seed
        self.tag = tag
        self.counter = 0
        self.stored: list[np.ndarray] = []

    def exchange(self, fresh: Tensor) -> Tensor:
        if fresh.requires_grad:
            raise ValueError("buffer takes detached images only; call detach() first")
        counter = self.counter
        self.counter += 1
        if self.capacity == 0:
            return fresh
        if len(self.stored) < self.capacity:
            self.stored.append(fresh.data.copy())
            return fresh
        rng = stream_rng(self.seed, self.tag, counter)
        if rng.random() < 0.5:
            idx = int(rng.integers(self.capacity))
            out = Tensor(self.stored[idx].copy())
            self.stored[idx] = fresh.data.copy()
            return out
        return fresh


@dataclass
class TrainerState:
    """Everything a run needs to continue: model, optimizers, buffers, counters."""

    cfg: TrainingConfig
    model: ModelState
    opt_g: Adam
    opt_dx: Adam
    opt_dy: Adam
    buf_x: ReplayBuffer
    buf_y: ReplayBuffer
    epoch: int = 0  # next epoch to run
    step: int = 0


def init_state(cfg: TrainingConfig, input_channels: int = 3, model: ModelState | None = None) -> TrainerState:
    if model is None:
        model = new_model(cfg.resolution, cfg.residual_blocks, cfg.gen_filters,
                          cfg.disc_filters, input_channels, cfg.seed)
    return TrainerState(
        cfg=cfg,
        model=model,
        opt_g=Adam(model.generator_parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        opt_dx=Adam(list(model.dx_params.values()), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        opt_dy=Adam(list(model.dy_params.values()), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        buf_x=ReplayBuffer(cfg.buffer_capacity, cfg.seed, STREAM_BUFFER_X),
        buf_y=ReplayBuffer(cfg.buffer_capacity, cfg.seed, STREAM_BUFFER_Y),
    )


def _check_finite(breakdown: losses.LossBreakdown, context: str):
    for name in ("gan_g", "gan_f", "disc_x", "disc_y", "cyc", "idt", "total_gen"):
        v = getattr(breakdown, name)
        if not np.isfinite(v):
            raise NumericalDivergence(f"{name} = {v} at {context}; run aborted")


def train_step(state: TrainerState, x: Tensor, y: Tensor, lr: float) -> losses.LossBreakdown:
    """One alternating update; returns the step's loss components.

    Inactive terms for the configured variant are reported as 0 and build
    no graph at all.
    """
    cfg = state.cfg
    model = state.model
    use_gan = cfg.variant != "cycle_only"
    cycle_mode = {
        "full": "both",
        "cycle_only": "both",
        "gan_only": None,
        "gan_forward": "forward",
        "gan_backward": "backward",
    }[cfg.variant]

    out = losses.LossBreakdown(lam=cfg.lam, lam_idt=cfg.lam_idt)

    # --- generators, one joint step ---
    state.opt_g.zero_grad()
    fake_y = forward(model.g_spec, model.g_params, x)
    fake_x = forward(model.f_spec, model.f_params, y)

    zero = Tensor(np.zeros((), dtype=np.float32))
    gan_g = gan_f = zero
    if use_gan:
        gan_g = losses.lsgan_generator_term(forward(model.dy_spec, model.dy_params, fake_y))
        gan_f = losses.lsgan_generator_term(forward(model.dx_spec, model.dx_params, fake_x))

    cyc = None
    if cycle_mode is not None:
        recon_x = forward(model.f_spec, model.f_params, fake_y) if cycle_mode in ("both", "forward") else None
        recon_y = forward(model.g_spec, model.g_params, fake_x) if cycle_mode in ("both", "backward") else None
        cyc = losses.cycle_loss(x, recon_x, y, recon_y, mode=cycle_mode)

    idt = None
    if cfg.lam_idt > 0:
        idt_y = forward(model.g_spec, model.g_params, y)
        idt_x = forward(model.f_spec, model.f_params, x)
        idt = losses.identity_loss(idt_y, y, idt_x, x)

    total = losses.total_generator_objective(
        gan_g, gan_f, cyc if cyc is not None else zero, idt, cfg.lam, cfg.lam_idt
    )
    backward(total)
    state.opt_g.step(lr)

    out.gan_g = gan_g.item() if use_gan else 0.0
    out.gan_f = gan_f.item() if use_gan else 0.0
    out.cyc = cyc.item() if cyc is not None else 0.0
    out.idt = idt.item() if idt is not None else 0.0
    out.total_gen = total.item()

    # --- discriminators, on buffered detached fakes ---
    if use_gan:
        buffered_x = state.buf_x.exchange(fake_x.detach())
        buffered_y = state.buf_y.exchange(fake_y.detach())

        state.opt_dx.zero_grad()
        dx_loss = losses.lsgan_discriminator_term(
            forward(model.dx_spec, model.dx_params, x),
            forward(model.dx_spec, model.dx_params, buffered_x),
        ) * 0.5
        backward(dx_loss)
        state.opt_dx.step(lr)
        out.disc_x = dx_loss.item()

        state.opt_dy.zero_grad()
        dy_loss = losses.lsgan_discriminator_term(
            forward(model.dy_spec, model.dy_params, y),
            forward(model.dy_spec, model.dy_params, buffered_y),
        ) * 0.5
        backward(dy_loss)
        state.opt_dy.step(lr)
        out.disc_y = dy_loss.item()

    _check_finite(out, f"step {state.step}")
    return out


def _samples_of(dataset) -> np.ndarray:
    arr = getattr(dataset, "samples", dataset)
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 4:
        raise ValueError(f"expected [N,C,H,W] samples, got shape {arr.shape}")
    return arr


@dataclass
class LossRecord:
    step: int
    epoch: int
    lr: float
    values: losses.LossBreakdown


def train(state: TrainerState, dataset_x, dataset_y, checkpoint_sink=None) -> list[LossRecord]:
    """Run the remaining epochs; returns one LossRecord per step.

    Each epoch makes min(|X|, |Y|) steps over a fresh seeded shuffle of both
    domains (the larger domain contributes a permutation prefix). The sink,
    when given, is called with the state after each checkpoint-cadence epoch
    and always after the last one; sink failures propagate, leaving the
    in-memory state intact.
    """
    cfg = state.cfg
    xs = _samples_of(dataset_x)
    ys = _samples_of(dataset_y)
    if len(xs) == 0 or len(ys) == 0:
        raise ValueError("both domains must be non-empty")
    steps_per_epoch = min(len(xs), len(ys))
    total_epochs = cfg.epochs_constant + cfg.epochs_decay
    history: list[LossRecord] = []

    for epoch in range(state.epoch, total_epochs):
        state.epoch = epoch
        lr = lr_at_epoch(epoch, cfg)
        order = stream_rng(cfg.seed, STREAM_ORDER, epoch)
        perm_x, perm_y = epoch_order(len(xs), len(ys), order)
        for i in range(steps_per_epoch):
            x = Tensor(xs[perm_x[i] : perm_x[i] + 1])
            y = Tensor(ys[perm_y[i] : perm_y[i] + 1])
            try:
                values = train_step(state, x, y, lr)
            except NumericalDivergence as e:
                raise NumericalDivergence(f"{e} (epoch {epoch}, lr {lr:g})") from None
            history.append(LossRecord(step=state.step, epoch=epoch, lr=lr, values=values))
            state.step += 1
        state.epoch = epoch + 1
        is_last = epoch + 1 == total_epochs
        on_cadence = cfg.checkpoint_every > 0 and (epoch + 1) % cfg.checkpoint_every == 0
        if checkpoint_sink is not None and (is_last or on_cadence):
            checkpoint_sink(state)
    return history
